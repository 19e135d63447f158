use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::splat::{load_cloud, save_cloud, GaussianCloud};

/// One entry of a run's metric history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// `None` for the coarse fit.
    pub batch: Option<usize>,
    pub gaussians: usize,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

/// JSON sidecar written next to every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: serde_json::Value,
    pub seed: u64,
    /// Last completed refinement batch; `None` after the coarse fit.
    pub batch: Option<usize>,
    #[serde(default)]
    pub history: Vec<MetricRecord>,
}

pub fn sidecar_path(cloud_path: &Path) -> PathBuf {
    cloud_path.with_extension("json")
}

/// Writes the cloud and its sidecar.
pub fn save_checkpoint(path: &Path, cloud: &GaussianCloud, meta: &CheckpointMeta) -> Result<()> {
    save_cloud(cloud, path)?;
    let json = serde_json::to_string_pretty(meta)?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

/// Reads a checkpoint; the sidecar is optional.
pub fn load_checkpoint(path: &Path) -> Result<(GaussianCloud, Option<CheckpointMeta>)> {
    let cloud = load_cloud(path)?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        Some(serde_json::from_slice(&std::fs::read(side)?)?)
    } else {
        None
    };
    Ok((cloud, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::Gaussian3D;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.zp3g");
        let cloud: GaussianCloud = [Gaussian3D::isotropic([0.1, 0.2, 0.3], 0.05, 0.5, [0.2, 0.4, 0.6]).unwrap()]
            .into_iter()
            .collect();
        let meta = CheckpointMeta {
            config: serde_json::json!({"steps": 3}),
            seed: 4,
            batch: Some(2),
            history: vec![MetricRecord {
                batch: Some(2),
                gaussians: 1,
                metrics: BTreeMap::from([("loss".to_string(), 0.25)]),
            }],
        };
        save_checkpoint(&path, &cloud, &meta).unwrap();
        let (c, m) = load_checkpoint(&path).unwrap();
        assert_eq!(c, cloud.quantized());
        assert_eq!(m.unwrap(), meta);
        std::fs::remove_file(sidecar_path(&path)).unwrap();
        assert!(load_checkpoint(&path).unwrap().1.is_none());
    }
}
