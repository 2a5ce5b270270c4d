//! JSON persistence for rigs and reports.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::light::LightRig;

/// Serialize any report type as pretty-printed JSON with a trailing newline.
pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path.as_ref(), text)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

/// On-disk light rig with its unit convention spelled out. Synthetic scenes
/// use the target's vertical span as the scene unit, so light distances read
/// directly as multiples of the object size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RigFile {
    /// Unit of all positions, e.g. "target-vertical-span".
    pub units: String,
    pub rig: LightRig,
}

impl RigFile {
    pub fn new(rig: LightRig) -> Self {
        Self {
            units: "target-vertical-span".into(),
            rig,
        }
    }
}

/// On-disk 3×3 matrix (row-major), used for the de-crosstalk correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: [[f64; 3]; 3],
}

impl MatrixFile {
    pub fn from_matrix(m: &nalgebra::Matrix3<f64>) -> Self {
        Self {
            rows: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
        }
    }

    pub fn matrix(&self) -> nalgebra::Matrix3<f64> {
        nalgebra::Matrix3::from_fn(|r, c| self.rows[r][c])
    }
}
