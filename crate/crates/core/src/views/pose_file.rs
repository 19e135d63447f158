use std::path::Path;

use serde::{Deserialize, Serialize};

use super::camera::Camera;
use crate::error::{Error, Result};

/// One image's pinhole intrinsics and world-to-camera pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    pub file: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major 3x3.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl PoseEntry {
    pub fn from_camera(file: impl Into<String>, cam: &Camera) -> Self {
        let r = cam.rotation;
        Self {
            file: file.into(),
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rotation: [r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]],
            translation: cam.translation,
        }
    }

    pub fn camera(&self) -> Result<Camera> {
        let r = &self.rotation;
        let rotation = [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]];
        Camera::new(self.fx, self.fy, self.cx, self.cy, rotation, self.translation)
            .map_err(|e| Error::invalid(format!("pose for {}: {e}", self.file)))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFile {
    pub views: Vec<PoseEntry>,
}

impl PoseFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn get(&self, file: &str) -> Option<&PoseEntry> {
        self.views.iter().find(|v| v.file == file)
    }
}
