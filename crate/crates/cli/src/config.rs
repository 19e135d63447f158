//! Pipeline configuration: one JSON document with embedded defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zp3_core::diffusion::{FusionWeights, NoiseSchedule, SampleOptions, ScheduleKind};
use zp3_core::eval::EvalOptions;
use zp3_core::priors::BridgeConfig;
use zp3_core::reconstruct::{DensitySchedule, FitConfig, LearningRates, Perceptual, RefineConfig};
use zp3_core::splat::RenderOptions;
use zp3_core::views::{make_rotation_plan, PlanParams, RotationPlan};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub kind: ScheduleKind,
    pub steps: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { kind: ScheduleKind::LinearBeta, steps: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitSection {
    pub points: usize,
    pub steps: usize,
    pub fit: FitConfig,
}

impl Default for InitSection {
    fn default() -> Self {
        Self { points: 2000, steps: 3000, fit: FitConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    pub steps_per_iteration: usize,
    pub densify_until: usize,
    pub lambda: f64,
    pub perceptual: Perceptual,
    pub lr: LearningRates,
    pub sample: SampleOptions,
    pub supervision_weight: f64,
    pub retain_supervision: bool,
    pub alpha_weight: f64,
    pub density: DensitySchedule,
}

impl Default for RefineSection {
    fn default() -> Self {
        let d = RefineConfig::default();
        Self {
            steps_per_iteration: d.steps_per_iteration,
            densify_until: d.densify_until,
            lambda: d.lambda,
            perceptual: d.perceptual,
            lr: d.lr,
            sample: d.sample,
            supervision_weight: d.supervision_weight,
            retain_supervision: d.retain_supervision,
            alpha_weight: d.alpha_weight,
            density: d.density,
        }
    }
}

/// Where multi-view predictions come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MvdSource {
    /// Noisy renders of a ground-truth cloud.
    #[default]
    Oracle,
    Bridge,
    /// Predicts zero noise.
    Null,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HfSource {
    #[default]
    None,
    /// Sharpened low-frequency render.
    Sharpen,
    Bridge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub mvd: MvdSource,
    pub hf: HfSource,
    pub lf: bool,
    /// Ground-truth cloud for the oracle; relative paths resolve against the
    /// dataset's parent directory.
    pub oracle_cloud: PathBuf,
    pub oracle_std: f64,
    pub oracle_pose_drift: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            mvd: MvdSource::Oracle,
            hf: HfSource::None,
            lf: true,
            oracle_cloud: PathBuf::from("ground_truth.zp3g"),
            oracle_std: 0.05,
            oracle_pose_drift: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub schedule: ScheduleSection,
    pub fusion: FusionWeights,
    pub plan: PlanParams,
    pub init: InitSection,
    pub refine: RefineSection,
    pub priors: PriorSection,
    pub bridge: Option<BridgeConfig>,
    pub eval: EvalOptions,
    pub render: RenderOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            schedule: ScheduleSection::default(),
            fusion: FusionWeights::default(),
            plan: PlanParams::default(),
            init: InitSection::default(),
            refine: RefineSection::default(),
            priors: PriorSection::default(),
            bridge: None,
            eval: EvalOptions::default(),
            render: RenderOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| CliError::usage(format!("config {}: {}", path.display(), e.message)))
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::usage(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.schedule()?;
        self.fusion.validate()?;
        self.rotation_plan()?;
        self.init.fit.lr.validate()?;
        self.init.fit.density.validate()?;
        if self.init.points == 0 || self.init.steps == 0 {
            return Err(CliError::usage("init points and steps must be positive"));
        }
        self.refine_config(RotationPlan::empty())?;
        if let Some(b) = &self.bridge {
            b.validate()?;
        }
        let needs_bridge = self.priors.mvd == MvdSource::Bridge
            || self.priors.hf == HfSource::Bridge
            || self.refine.perceptual == Perceptual::BridgeLpips;
        if needs_bridge && self.bridge.is_none() {
            return Err(CliError::usage("config selects a bridge source but has no bridge section"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> CliResult<NoiseSchedule> {
        Ok(NoiseSchedule::new(self.schedule.steps, self.schedule.kind)?)
    }

    /// The configured plan; zero iterations give an empty plan.
    pub fn rotation_plan(&self) -> CliResult<RotationPlan> {
        if self.plan.iterations == 0 {
            return Ok(RotationPlan::empty());
        }
        Ok(make_rotation_plan(&self.plan)?)
    }

    pub fn refine_config(&self, plan: RotationPlan) -> CliResult<RefineConfig> {
        let r = &self.refine;
        let cfg = RefineConfig {
            steps_per_iteration: r.steps_per_iteration,
            densify_until: r.densify_until,
            lr: r.lr.clone(),
            lambda: r.lambda,
            perceptual: r.perceptual,
            fusion: self.fusion,
            plan,
            schedule: self.schedule.kind,
            sampling_steps: self.schedule.steps,
            sample: SampleOptions { disable_lf: r.sample.disable_lf || !self.priors.lf, ..r.sample.clone() },
            supervision_weight: r.supervision_weight,
            retain_supervision: r.retain_supervision,
            alpha_weight: r.alpha_weight,
            background: self.init.fit.background,
            render: self.render.clone(),
            density: r.density.clone(),
            supervision_focal: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let d = RunConfig::default();
        let back = RunConfig::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn defaults_match_published_values() {
        let d = RunConfig::default();
        assert_eq!(d.schedule.steps, 50);
        assert_eq!((d.fusion.tau, d.fusion.sigma, d.fusion.eta), (22.0, 7.0, 4.0));
        assert_eq!((d.plan.delta_theta, d.plan.delta_e), (45.0, 6.0));
        assert_eq!(d.refine.lambda, 1.0);
        assert_eq!((d.refine.steps_per_iteration, d.refine.densify_until), (3000, 1300));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::from_json(r#"{"seed": 9, "plan": {"theta0": 0, "delta_theta": 45, "delta_e": 6, "iterations": 2, "batch_size": 4, "elevations": [0], "radius": 3}}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.plan.iterations, 2);
        assert_eq!(cfg.schedule.steps, 50);
    }

    #[test]
    fn invalid_documents_rejected() {
        assert!(RunConfig::from_json(r#"{"sed": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"fusion": {"tau": 22, "sigma": 0, "eta": 4}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"priors": {"mvd": "bridge"}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"refine": {"densify_until": 5000}}"#).is_err());
    }

    #[test]
    fn zero_iterations_give_empty_plan() {
        let mut cfg = RunConfig::default();
        cfg.plan.iterations = 0;
        assert!(cfg.rotation_plan().unwrap().is_empty());
    }
}
