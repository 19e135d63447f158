//! Glue between datasets, configuration and the core library.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use zp3_core::eval::psnr;
use zp3_core::priors::{
    BridgeClient, BridgeSource, GroundTruthMvd, PriorBundle, PriorSource, ReferenceView, RequestKind, SharpenOracle,
    StaticPrior,
};
use zp3_core::reconstruct::Observation;
use zp3_core::splat::{load_cloud, render_with, GaussianCloud, RenderOptions};
use zp3_core::views::{angular_distance, make_input_set};

use crate::config::{HfSource, MvdSource, RunConfig};
use crate::dataset::{Dataset, DatasetView};
use crate::error::{CliError, CliResult};

/// Caps the worker pool at `ZP3_THREADS` when set.
pub fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("ZP3_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("ZP3_THREADS must be a positive integer, got {value:?}")))?;
    // A second initialization in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".zp3.lock";

impl OutputLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::usage(format!(
                "output directory {} is in use (remove {} if no other run is active)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::usage(format!("cannot write to {}: {e}", dir.display()))),
        }
    }

    /// Locks the directory that will contain `file`.
    pub fn for_file(file: &Path) -> CliResult<Self> {
        let dir = file.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::acquire(dir)
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Conditioning views: the captured views closest to an evenly spaced set in
/// the observed range, preferring elevation zero.
pub fn select_references(views: &[DatasetView], observed_range: (f64, f64)) -> CliResult<Vec<ReferenceView>> {
    if views.is_empty() {
        return Err(CliError::usage("no views to choose references from"));
    }
    let span = observed_range.1 - observed_range.0;
    let count = ((span / 45.0).floor() as usize + 1).min(3);
    let wanted: Vec<f64> = if count >= 2 {
        make_input_set(observed_range, count, 1.0, [0.0; 3])?.iter().map(|s| s.azimuth).collect()
    } else {
        vec![observed_range.0 + span / 2.0]
    };
    let mut out: Vec<ReferenceView> = Vec::new();
    for az in wanted {
        let best = views
            .iter()
            .min_by(|a, b| {
                let key = |v: &DatasetView| {
                    let s = v.observation.view_spec;
                    (angular_distance(s.azimuth, az), s.elevation.abs())
                };
                key(a).partial_cmp(&key(b)).expect("finite angles")
            })
            .expect("non-empty");
        if out.iter().all(|r| r.id != best.stem) {
            out.push(ReferenceView {
                id: best.stem.clone(),
                spec: best.observation.view_spec,
                image: best.observation.image.clone(),
            });
        }
    }
    Ok(out)
}

pub fn connect_bridge(cfg: &RunConfig) -> CliResult<Option<Arc<BridgeClient>>> {
    match &cfg.bridge {
        Some(b) => Ok(Some(Arc::new(BridgeClient::connect(b.clone())?))),
        None => Ok(None),
    }
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    let direct = root.join(p);
    match root.parent() {
        Some(parent) if !direct.exists() => parent.join(p),
        _ => direct,
    }
}

fn bridge_source(bridge: &Option<Arc<BridgeClient>>, kind: RequestKind) -> CliResult<Arc<dyn PriorSource>> {
    let client = bridge
        .clone()
        .ok_or_else(|| CliError::usage(format!("{kind:?} source needs a bridge")))?;
    Ok(Arc::new(BridgeSource { client, kind }))
}

/// Multi-view and detail priors for a dataset; the low-frequency source is
/// attached later from the cloud being refined.
pub fn build_priors(cfg: &RunConfig, dataset: &Dataset, bridge: &Option<Arc<BridgeClient>>) -> CliResult<PriorBundle> {
    let references = select_references(&dataset.views, dataset.meta.observed_range)?;
    let mvd: Arc<dyn PriorSource> = match cfg.priors.mvd {
        MvdSource::Oracle => {
            let path = resolve(&dataset.root, &cfg.priors.oracle_cloud);
            let cloud = load_cloud(&path)
                .map_err(|e| CliError::usage(format!("oracle cloud {}: {e}", path.display())))?;
            let mut oracle = GroundTruthMvd::new(Arc::new(cloud));
            oracle.std = cfg.priors.oracle_std;
            oracle.pose_drift = cfg.priors.oracle_pose_drift;
            oracle.background = cfg.init.fit.background;
            Arc::new(oracle)
        }
        MvdSource::Bridge => bridge_source(bridge, RequestKind::Mvd)?,
        MvdSource::Null => Arc::new(StaticPrior::null()),
    };
    let mut bundle = PriorBundle::new(mvd, references);
    bundle.hf = match cfg.priors.hf {
        HfSource::None => None,
        HfSource::Sharpen => Some(Arc::new(SharpenOracle::default())),
        HfSource::Bridge => Some(bridge_source(bridge, RequestKind::Hf)?),
    };
    Ok(bundle)
}

/// Masked PSNR of `cloud` against each observation.
pub fn training_psnr(cloud: &GaussianCloud, obs: &[Observation], opts: &RenderOptions, bg: [f64; 3]) -> CliResult<Vec<f64>> {
    obs.iter()
        .map(|o| {
            let out = render_with(cloud, &o.camera, o.width(), o.height(), opts)?;
            let img = out.color.composite_over(&out.alpha, bg)?.clamped(0.0, 1.0);
            Ok(psnr(&img, &o.image, Some(&o.mask))?)
        })
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
