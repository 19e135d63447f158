use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splat::{layout, Params, PARAM_COUNT};

/// Per-group learning rates; the position rate decays exponentially to
/// `position_final` over a run and is scaled by the scene extent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub sh: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            sh: 2.5e-3,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
        }
    }
}

impl LearningRates {
    pub fn validate(&self) -> Result<()> {
        let all = [self.position, self.position_final, self.sh, self.opacity, self.scale, self.rotation];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("learning rates must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn position_at(&self, progress: f64) -> f64 {
        if self.position <= 0.0 || self.position_final <= 0.0 {
            return self.position;
        }
        let p = progress.clamp(0.0, 1.0);
        (self.position.ln() * (1.0 - p) + self.position_final.ln() * p).exp()
    }

    /// Learning rate for every slot of the flat parameter layout.
    pub(crate) fn per_slot(&self, progress: f64, extent: f64) -> Params {
        let mut lr = [0.0; PARAM_COUNT];
        for (i, v) in lr.iter_mut().enumerate() {
            *v = match i {
                i if i < layout::LOG_SCALE => self.position_at(progress) * extent,
                i if i < layout::ROTATION => self.scale,
                i if i < layout::OPACITY => self.rotation,
                i if i < layout::SH => self.opacity,
                _ => self.sh,
            };
        }
        lr
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-15;

/// Adam moments for every Gaussian in a cloud.
#[derive(Clone, Debug, Default)]
pub(crate) struct Adam {
    m: Vec<Params>,
    v: Vec<Params>,
    t: Vec<u32>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![[0.0; PARAM_COUNT]; n],
            v: vec![[0.0; PARAM_COUNT]; n],
            t: vec![0; n],
        }
    }

    /// One update of `params[i]`; Gaussians with no gradient this step are
    /// left untouched.
    pub fn step(&mut self, params: &mut [Params], grads: &[Params], touched: &[bool], lr: &Params) {
        for i in 0..params.len() {
            if !touched[i] {
                continue;
            }
            self.t[i] += 1;
            let bc1 = 1.0 - BETA1.powi(self.t[i] as i32);
            let bc2 = 1.0 - BETA2.powi(self.t[i] as i32);
            for k in 0..PARAM_COUNT {
                let g = grads[i][k];
                self.m[i][k] = BETA1 * self.m[i][k] + (1.0 - BETA1) * g;
                self.v[i][k] = BETA2 * self.v[i][k] + (1.0 - BETA2) * g * g;
                let m_hat = self.m[i][k] / bc1;
                let v_hat = self.v[i][k] / bc2;
                params[i][k] -= lr[k] * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }

    /// Rebuilds the state for a cloud whose Gaussian `j` came from old index
    /// `origin[j]`. Duplicates after the first copy start fresh.
    pub fn remap(&mut self, origin: &[usize]) {
        let mut seen = vec![false; self.m.len()];
        let mut out = Adam::new(origin.len());
        for (j, &i) in origin.iter().enumerate() {
            if !std::mem::replace(&mut seen[i], true) {
                out.m[j] = self.m[i];
                out.v[j] = self.v[i];
                out.t[j] = self.t[i];
            }
        }
        *self = out;
    }
}
