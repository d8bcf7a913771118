use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Video,
    Audio,
    Fused,
}

/// A time-major `T x C` feature stream for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityFeatures {
    modality: Modality,
    data: Array2<f32>,
    segment_duration_s: f64,
}

impl ModalityFeatures {
    pub fn new(modality: Modality, data: Array2<f32>, segment_duration_s: f64) -> Result<Self> {
        let (t, c) = data.dim();
        if t == 0 || c == 0 {
            return Err(Error::Shape(format!("feature matrix must be non-empty, got {t}x{c}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature entry {pos} is {}", data.iter().nth(pos).unwrap())));
        }
        if !(segment_duration_s.is_finite() && segment_duration_s > 0.0) {
            return Err(Error::Config(format!("segment duration must be positive, got {segment_duration_s}")));
        }
        Ok(ModalityFeatures {
            modality,
            data,
            segment_duration_s,
        })
    }

    /// Builds features from double precision values, rounding to `f32`.
    pub fn from_f64(modality: Modality, data: &Array2<f64>, segment_duration_s: f64) -> Result<Self> {
        Self::new(modality, data.mapv(|v| v as f32), segment_duration_s)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn segments(&self) -> usize {
        self.data.nrows()
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn segment_duration_s(&self) -> f64 {
        self.segment_duration_s
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureManifest {
    modality: Modality,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(rename = "C")]
    c: usize,
    dtype: String,
    layout: String,
    segment_duration_s: f64,
}

/// Resolves `<name>`, `<name>.manifest.json` or `<name>.f32` to the pair of
/// file paths.
fn pair_paths(path: &Path) -> (PathBuf, PathBuf) {
    let s = path.to_string_lossy();
    let base = s.strip_suffix(".manifest.json").or_else(|| s.strip_suffix(".f32")).unwrap_or(&s).to_string();
    (PathBuf::from(format!("{base}.manifest.json")), PathBuf::from(format!("{base}.f32")))
}

pub fn save_features(features: &ModalityFeatures, path: &Path) -> Result<()> {
    let (manifest_path, blob_path) = pair_paths(path);
    let manifest = FeatureManifest {
        modality: features.modality,
        t: features.segments(),
        n: None,
        c: features.channels(),
        dtype: "float32".into(),
        layout: "row-major".into(),
        segment_duration_s: features.segment_duration_s,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fsutil::write_atomic(&blob_path, &fsutil::f32_blob(features.data.iter().copied()))?;
    fsutil::write_atomic(&manifest_path, json.as_bytes())
}

pub fn load_features(path: &Path) -> Result<ModalityFeatures> {
    let (manifest_path, blob_path) = pair_paths(path);
    let text = fsutil::read_to_string(&manifest_path)?;
    let manifest: FeatureManifest = serde_json::from_str(&text).map_err(|e| Error::format("feature manifest", &manifest_path, e.to_string()))?;
    if manifest.dtype != "float32" {
        return Err(Error::format(
            "feature manifest",
            &manifest_path,
            format!("unsupported dtype {:?}", manifest.dtype),
        ));
    }
    if manifest.layout != "row-major" {
        return Err(Error::format(
            "feature manifest",
            &manifest_path,
            format!("unsupported layout {:?}", manifest.layout),
        ));
    }
    let values = fsutil::parse_f32_blob(&blob_path, &fsutil::read_bytes(&blob_path)?)?;
    let expected = manifest.t * manifest.n.unwrap_or(1) * manifest.c;
    if values.len() != expected {
        return Err(Error::SizeMismatch {
            path: blob_path,
            expected,
            found: values.len(),
        });
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{}: entry {i} (row {}, column {}) is {}",
            blob_path.display(),
            i / manifest.c.max(1),
            i % manifest.c.max(1),
            values[i]
        )));
    }
    let rows = manifest.t * manifest.n.unwrap_or(1);
    let data = Array2::from_shape_vec((rows, manifest.c), values).map_err(|e| Error::Shape(e.to_string()))?;
    ModalityFeatures::new(manifest.modality, data, manifest.segment_duration_s)
}
