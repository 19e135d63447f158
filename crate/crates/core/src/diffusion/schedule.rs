use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of virtual training steps the linear-beta curve is defined over.
const TRAIN_STEPS: usize = 1000;
const BETA_START: f64 = 1e-4;
const BETA_END: f64 = 2e-2;
const COSINE_OFFSET: f64 = 0.008;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    #[default]
    LinearBeta,
    Cosine,
}

/// Cumulative signal levels `alpha_bar[t]` on the sampler's step grid.
///
/// Index `0` is the cleanest step and `steps - 1` the noisiest; values are
/// strictly decreasing in `t` and lie in `(0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(steps: usize, kind: ScheduleKind) -> Result<Self> {
        if steps < 2 {
            return Err(Error::invalid(format!("schedule needs at least 2 steps, got {steps}")));
        }
        let alpha_bar = match kind {
            ScheduleKind::LinearBeta => {
                if steps > TRAIN_STEPS {
                    return Err(Error::invalid(format!(
                        "linear-beta schedule supports at most {TRAIN_STEPS} steps, got {steps}"
                    )));
                }
                let mut cumulative = Vec::with_capacity(TRAIN_STEPS);
                let mut prod = 1.0;
                for i in 0..TRAIN_STEPS {
                    let beta = BETA_START + (BETA_END - BETA_START) * i as f64 / (TRAIN_STEPS - 1) as f64;
                    prod *= 1.0 - beta;
                    cumulative.push(prod);
                }
                (0..steps)
                    .map(|t| {
                        let virtual_t = (t as f64 * (TRAIN_STEPS - 1) as f64 / (steps - 1) as f64).round();
                        cumulative[virtual_t as usize]
                    })
                    .collect()
            }
            ScheduleKind::Cosine => (0..steps)
                .map(|t| {
                    let f = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * FRAC_PI_2;
                    f.cos().powi(2)
                })
                .collect(),
        };
        Self::from_alpha_bar(kind, alpha_bar)
    }

    /// Wraps an explicit curve after checking the schedule invariants.
    pub fn from_alpha_bar(kind: ScheduleKind, alpha_bar: Vec<f64>) -> Result<Self> {
        if alpha_bar.len() < 2 {
            return Err(Error::invalid("schedule needs at least 2 steps"));
        }
        if let Some(bad) = alpha_bar.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::invalid(format!("alpha_bar value {bad} outside (0, 1]")));
        }
        if alpha_bar.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("alpha_bar must be strictly decreasing in t"));
        }
        Ok(Self { kind, alpha_bar })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub(crate) fn check_t(&self, t: usize) -> Result<()> {
        if t >= self.steps() {
            Err(Error::invalid(format!("timestep {t} outside schedule of {} steps", self.steps())))
        } else {
            Ok(())
        }
    }

    /// `sqrt(1 - alpha_bar[t])`, rejecting the degenerate `alpha_bar = 1` case.
    pub(crate) fn noise_level(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        let one_minus = 1.0 - self.alpha_bar[t];
        if one_minus <= 0.0 {
            return Err(Error::DegenerateTimestep { t });
        }
        Ok(one_minus.sqrt())
    }
}
