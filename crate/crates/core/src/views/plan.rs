use serde::{Deserialize, Serialize};

use super::camera::ViewSpec;
use crate::error::{Error, Result};
use crate::math::{angular_distance, wrap_degrees, Vec3};

/// Angular zones used to weight view-conditioned noise predictions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewClassifier {
    pub frontal_max: f64,
    pub back_min: f64,
    pub frontal_weight: f64,
    pub back_weight: f64,
    pub side_weight: f64,
}

impl Default for ViewClassifier {
    fn default() -> Self {
        Self {
            frontal_max: 45.0,
            back_min: 135.0,
            frontal_weight: 2.0,
            back_weight: 1.5,
            side_weight: 1.0,
        }
    }
}

impl ViewClassifier {
    pub fn weight(&self, candidate_azimuth: f64, reference_azimuth: f64) -> f64 {
        let d = angular_distance(candidate_azimuth, reference_azimuth);
        if d <= self.frontal_max {
            self.frontal_weight
        } else if d >= self.back_min {
            self.back_weight
        } else {
            self.side_weight
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.frontal_max) || !(0.0..=180.0).contains(&self.back_min) {
            return Err(Error::invalid("classifier thresholds must lie in [0, 180]"));
        }
        if self.frontal_max >= self.back_min {
            return Err(Error::invalid("frontal threshold must be below the back threshold"));
        }
        if [self.frontal_weight, self.back_weight, self.side_weight].iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("classifier weights must be positive"));
        }
        Ok(())
    }
}

/// Fusion weight of a conditioning view relative to the target azimuth,
/// using the default zones.
pub fn classify_view(candidate: &ViewSpec, reference_azimuth: f64) -> f64 {
    ViewClassifier::default().weight(candidate.azimuth, reference_azimuth)
}

const INPUT_SEPARATION: f64 = 45.0;

/// `count` conditioning views 45 degrees apart, centered in the observed
/// azimuth range (which may wrap through 0).
pub fn make_input_set(range: (f64, f64), count: usize, radius: f64, target: Vec3) -> Result<Vec<ViewSpec>> {
    if !(2..=3).contains(&count) {
        return Err(Error::invalid(format!("input set size must be 2 or 3, got {count}")));
    }
    let start = wrap_degrees(range.0);
    let mut span = wrap_degrees(range.1) - start;
    if span <= 0.0 {
        span += 360.0;
    }
    if range.1 - range.0 >= 360.0 {
        span = 360.0;
    }
    let needed = (count - 1) as f64 * INPUT_SEPARATION;
    if span + 1e-9 < needed {
        return Err(Error::invalid(format!(
            "observed span {span} deg cannot hold {count} views {INPUT_SEPARATION} deg apart"
        )));
    }
    let first = start + (span - needed) / 2.0;
    (0..count)
        .map(|i| ViewSpec::new(first + i as f64 * INPUT_SEPARATION, 0.0, radius, target))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanStrategy {
    /// Offsets `0, -d, +d, -2d, +2d, ...`.
    #[default]
    Alternating,
    /// Offsets `0, d, 2d, ...`.
    Monotone,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanParams {
    pub theta0: f64,
    pub delta_theta: f64,
    pub delta_e: f64,
    pub iterations: usize,
    pub batch_size: usize,
    pub elevations: Vec<f64>,
    pub radius: f64,
    #[serde(default)]
    pub target: Vec3,
    #[serde(default)]
    pub strategy: PlanStrategy,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            theta0: 0.0,
            delta_theta: 45.0,
            delta_e: 6.0,
            iterations: 8,
            batch_size: 8,
            elevations: vec![-30.0, 0.0, 30.0],
            radius: 3.0,
            target: [0.0; 3],
            strategy: PlanStrategy::Alternating,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationPlan {
    pub batches: Vec<Vec<ViewSpec>>,
    pub theta0: f64,
    pub delta_theta: f64,
    pub delta_e: f64,
    pub batch_size: usize,
}

impl RotationPlan {
    /// A plan with no batches; refinement over it is a no-op.
    pub fn empty() -> Self {
        Self {
            batches: Vec::new(),
            theta0: 0.0,
            delta_theta: 45.0,
            delta_e: 6.0,
            batch_size: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn azimuths(&self) -> Vec<f64> {
        self.batches.iter().flatten().map(|v| v.azimuth).collect()
    }
}

fn base_offset(k: usize, strategy: PlanStrategy) -> f64 {
    match strategy {
        PlanStrategy::Alternating => {
            let magnitude = k.div_ceil(2) as f64;
            if k % 2 == 0 {
                magnitude
            } else {
                -magnitude
            }
        }
        PlanStrategy::Monotone => k as f64,
    }
}

/// Batches of evenly spaced azimuths whose base angle shifts by `delta_e`
/// each iteration.
///
/// `batch_size` views are spread over the full circle, so the in-batch
/// separation is `360 / batch_size`; `delta_theta` is only validated here and
/// is expected to equal that separation.
pub fn make_rotation_plan(p: &PlanParams) -> Result<RotationPlan> {
    if p.iterations == 0 {
        return Err(Error::invalid("rotation plan needs at least one iteration"));
    }
    if p.batch_size == 0 {
        return Err(Error::invalid("rotation plan needs a positive batch size"));
    }
    if !(p.delta_theta > 0.0) {
        return Err(Error::invalid("delta_theta must be positive"));
    }
    if !p.delta_e.is_finite() || !p.theta0.is_finite() {
        return Err(Error::invalid("plan angles must be finite"));
    }
    if p.elevations.is_empty() {
        return Err(Error::invalid("rotation plan needs at least one elevation"));
    }
    let step = 360.0 / p.batch_size as f64;
    let mut batches = Vec::with_capacity(p.iterations);
    for k in 0..p.iterations {
        let base = p.theta0 + base_offset(k, p.strategy) * p.delta_e;
        let mut batch = Vec::with_capacity(p.batch_size * p.elevations.len());
        for &el in &p.elevations {
            for m in 0..p.batch_size {
                batch.push(ViewSpec::new(base + m as f64 * step, el, p.radius, p.target)?);
            }
        }
        batches.push(batch);
    }
    Ok(RotationPlan {
        batches,
        theta0: p.theta0,
        delta_theta: p.delta_theta,
        delta_e: p.delta_e,
        batch_size: p.batch_size,
    })
}

/// Largest angular gap between circularly adjacent azimuths.
pub fn max_azimuth_gap(azimuths: &[f64]) -> f64 {
    if azimuths.is_empty() {
        return 360.0;
    }
    let mut a: Vec<f64> = azimuths.iter().map(|&x| wrap_degrees(x)).collect();
    a.sort_by(f64::total_cmp);
    let wrap = a[0] + 360.0 - a[a.len() - 1];
    a.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
}
