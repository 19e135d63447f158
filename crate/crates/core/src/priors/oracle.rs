use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::image::{Domain, Image};

/// Source of epsilon predictions for a noisy image on a schedule's step grid.
pub trait NoisePredictor: Send + Sync {
    fn predict(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image>;
}

/// Predicts zero noise everywhere.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullPredictor;

impl NoisePredictor for NullPredictor {
    fn predict(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        sched.check_t(t)?;
        Ok(x_t.filled_like(0.0))
    }
}

/// One isotropic component `N(mean, std^2 I)` of the data distribution.
#[derive(Clone, Debug)]
pub struct MixtureComponent {
    /// Sampling-domain mean image.
    pub mean: Image,
    pub std: f64,
    pub weight: f64,
}

/// Exact minimum-MSE noise predictor for a mixture of isotropic Gaussians.
#[derive(Clone, Debug)]
pub struct GaussianMixtureOracle {
    components: Vec<MixtureComponent>,
}

impl GaussianMixtureOracle {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::invalid("mixture needs at least one component"))?;
        for c in &components {
            c.mean.ensure_same_shape(&first.mean, "mixture component")?;
            if !(c.std > 0.0) || !(c.weight > 0.0) {
                return Err(Error::invalid("mixture std and weight must be positive"));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    pub fn single(mean: Image, std: f64) -> Result<Self> {
        Self::new(vec![MixtureComponent { mean, std, weight: 1.0 }])
    }

    /// Equal-weight mixture over `means` sharing one std.
    pub fn uniform(means: Vec<Image>, std: f64) -> Result<Self> {
        let w = 1.0 / means.len().max(1) as f64;
        Self::new(means.into_iter().map(|mean| MixtureComponent { mean, std, weight: w }).collect())
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }
}

/// `-sqrt(1 - a) * grad log p_t(x_t)` for the diffused mixture, with
/// responsibilities computed in log space.
pub fn oracle_predict(x_t: &Image, t: usize, oracle: &GaussianMixtureOracle, sched: &NoiseSchedule) -> Result<Image> {
    let first = &oracle.components[0].mean;
    if x_t.width() != first.width() || x_t.height() != first.height() || x_t.channels() != first.channels() {
        return Err(Error::invalid("oracle input shape does not match its component means"));
    }
    let noise_level = sched.noise_level(t)?;
    let a = sched.alpha_bar(t);
    let signal = a.sqrt();
    let dim = x_t.data().len() as f64;

    let mut log_w = Vec::with_capacity(oracle.components.len());
    let mut vars = Vec::with_capacity(oracle.components.len());
    for c in &oracle.components {
        let var = a * c.std * c.std + 1.0 - a;
        let sq: f64 = x_t.data().iter().zip(c.mean.data()).map(|(x, m)| (x - signal * m).powi(2)).sum();
        log_w.push(c.weight.ln() - 0.5 * sq / var - 0.5 * dim * var.ln());
        vars.push(var);
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_w.iter().map(|l| (l - max).exp()).sum();

    let mut eps = vec![0.0; x_t.data().len()];
    for ((c, l), var) in oracle.components.iter().zip(&log_w).zip(&vars) {
        let r = (l - max).exp() / total;
        if r == 0.0 {
            continue;
        }
        let k = noise_level * r / var;
        for ((e, x), m) in eps.iter_mut().zip(x_t.data()).zip(c.mean.data()) {
            *e += k * (x - signal * m);
        }
    }
    Image::from_vec(x_t.width(), x_t.height(), x_t.channels(), Domain::Sampling, eps)
}

impl NoisePredictor for GaussianMixtureOracle {
    fn predict(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        oracle_predict(x_t, t, self, sched)
    }
}
