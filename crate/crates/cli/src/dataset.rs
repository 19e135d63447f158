//! On-disk datasets: `images/*.png`, `masks/*.png`, `poses.json`, `meta.json`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zp3_core::reconstruct::Observation;
use zp3_core::views::{PoseEntry, PoseFile, ViewSpec};

use crate::error::{CliError, CliResult};
use crate::png;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    /// Azimuth arc, in degrees, covered by the captured views.
    pub observed_range: (f64, f64),
    pub elevations: Vec<f64>,
    pub scene_scale: f64,
}

impl DatasetMeta {
    pub fn validate(&self) -> CliResult<()> {
        let span = self.observed_range.1 - self.observed_range.0;
        if !(span > 0.0 && span <= 360.0) {
            return Err(CliError::usage(format!("observed_range span {span} outside (0, 360]")));
        }
        if !(self.scene_scale > 0.0) {
            return Err(CliError::usage("scene_scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DatasetView {
    pub stem: String,
    pub observation: Observation,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub meta: DatasetMeta,
    /// Sorted by stem.
    pub views: Vec<DatasetView>,
}

fn png_stems(dir: &Path) -> CliResult<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::usage(format!("cannot list {}: {e}", dir.display())))?;
    let mut out = BTreeSet::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string());
            }
        }
    }
    Ok(out)
}

impl Dataset {
    pub fn load(root: &Path) -> CliResult<Self> {
        let bad = |msg: String| CliError::usage(format!("dataset {}: {msg}", root.display()));
        let meta: DatasetMeta = serde_json::from_slice(
            &std::fs::read(root.join("meta.json")).map_err(|e| bad(format!("meta.json: {e}")))?,
        )
        .map_err(|e| bad(format!("meta.json: {e}")))?;
        meta.validate().map_err(|e| e.context(format!("dataset {}", root.display())))?;
        let poses = PoseFile::load(&root.join("poses.json")).map_err(|e| bad(format!("poses.json: {e}")))?;

        let images = png_stems(&root.join("images"))?;
        if images.is_empty() {
            return Err(bad("no images".into()));
        }
        let masks = png_stems(&root.join("masks"))?;
        let mut views = Vec::with_capacity(images.len());
        for stem in &images {
            if !masks.contains(stem) {
                return Err(bad(format!("missing mask for {stem}")));
            }
            let file = format!("{stem}.png");
            let pose = poses.get(&file).ok_or_else(|| bad(format!("missing pose for {stem}")))?;
            let camera = pose.camera()?;
            let image = png::read_rgb(&root.join("images").join(&file))?;
            let mask = png::read_mask(&root.join("masks").join(&file))?;
            let spec = ViewSpec::from_camera(&camera, [0.0; 3])?;
            let observation = Observation::new(image, mask, camera, spec).map_err(|e| bad(format!("{stem}: {e}")))?;
            views.push(DatasetView { stem: stem.clone(), observation });
        }
        for entry in &poses.views {
            let stem = entry.file.trim_end_matches(".png");
            if !images.contains(stem) {
                return Err(bad(format!("pose entry {} has no image", entry.file)));
            }
        }
        Ok(Self { root: root.to_path_buf(), meta, views })
    }

    pub fn write(root: &Path, meta: &DatasetMeta, views: &[DatasetView]) -> CliResult<()> {
        meta.validate()?;
        std::fs::create_dir_all(root.join("images"))?;
        std::fs::create_dir_all(root.join("masks"))?;
        let mut poses = PoseFile::default();
        for v in views {
            let file = format!("{}.png", v.stem);
            png::write_rgb(&root.join("images").join(&file), &v.observation.image)?;
            png::write_gray(&root.join("masks").join(&file), &v.observation.mask)?;
            poses.views.push(PoseEntry::from_camera(file, &v.observation.camera));
        }
        poses.save(&root.join("poses.json"))?;
        std::fs::write(root.join("meta.json"), serde_json::to_string_pretty(meta)? + "\n")?;
        Ok(())
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.views.iter().map(|v| v.observation.clone()).collect()
    }
}
