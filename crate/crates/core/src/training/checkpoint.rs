//! Checkpoint directory:
//!
//! ```text
//! manifest.json        tensor names, shapes and blob paths
//! params/<name>.f64    little-endian float64, row-major
//! momentum/<name>.f64  optimizer velocity, same layout
//! config.json          training configuration snapshot
//! rng.json             seed and progress counters
//! metrics.jsonl        per-epoch log so far
//! ```
//!
//! Parameters are stored at full precision so a resumed run matches an
//! uninterrupted one bit for bit.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{metrics_jsonl, read_metrics, Sgd, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::pipeline::Model;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    param: String,
    momentum: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    dtype: String,
    layout: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct RngState {
    seed: u64,
    epoch: usize,
    step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub state: TrainState,
}

fn f64_blob(a: &Array2<f64>) -> Vec<u8> {
    a.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_f64_blob(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let bytes = fsutil::read_bytes(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::format("float64 blob", path, format!("{} bytes is not a multiple of 8", bytes.len())));
    }
    if bytes.len() / 8 != rows * cols {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected: rows * cols,
            found: bytes.len() / 8,
        });
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{}", path.display())));
    }
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s.into_bytes()
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &'static str) -> Result<T> {
    let text = fsutil::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(what, path, e.to_string()))
}

pub fn save_checkpoint(dir: &Path, config: &TrainConfig, state: &TrainState) -> Result<()> {
    for sub in ["params", "momentum"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir, e))?;
    }
    let velocity = state.optimizer.velocity.tensors();
    let mut tensors = Vec::new();
    for ((name, w), (_, v)) in state.model.tensors().into_iter().zip(velocity) {
        let entry = TensorEntry {
            param: format!("params/{name}.f64"),
            momentum: format!("momentum/{name}.f64"),
            rows: w.nrows(),
            cols: w.ncols(),
            name,
        };
        fsutil::write_atomic(&dir.join(&entry.param), &f64_blob(w))?;
        fsutil::write_atomic(&dir.join(&entry.momentum), &f64_blob(v))?;
        tensors.push(entry);
    }
    let manifest = Manifest {
        dtype: "float64".into(),
        layout: "row-major".into(),
        tensors,
    };
    fsutil::write_atomic(&dir.join("manifest.json"), &to_json(&manifest))?;
    fsutil::write_atomic(&dir.join("config.json"), &to_json(config))?;
    let rng = RngState {
        seed: config.seed,
        epoch: state.epoch,
        step: state.step,
    };
    fsutil::write_atomic(&dir.join("rng.json"), &to_json(&rng))?;
    fsutil::write_atomic(&dir.join("metrics.jsonl"), metrics_jsonl(&state.metrics).as_bytes())
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let manifest: Manifest = from_json(&dir.join("manifest.json"), "checkpoint manifest")?;
    let config: TrainConfig = from_json(&dir.join("config.json"), "checkpoint config")?;
    let rng: RngState = from_json(&dir.join("rng.json"), "checkpoint rng state")?;
    config.validate()?;
    if manifest.dtype != "float64" || manifest.layout != "row-major" {
        return Err(Error::format(
            "checkpoint manifest",
            dir.join("manifest.json"),
            "expected float64 row-major blobs",
        ));
    }
    let mut model = Model::init(config.model, config.seed)?;
    let mut velocity = model.zeros_like();
    let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
    if names.len() != manifest.tensors.len() || names.iter().zip(&manifest.tensors).any(|(n, e)| *n != e.name) {
        return Err(Error::format(
            "checkpoint manifest",
            dir.join("manifest.json"),
            "tensor list does not match the configured model",
        ));
    }
    for ((w, v), e) in model.tensors_mut().into_iter().zip(velocity.tensors_mut()).zip(&manifest.tensors) {
        if w.dim() != (e.rows, e.cols) {
            return Err(Error::Shape(format!("tensor {} is {:?}, manifest says {}x{}", e.name, w.dim(), e.rows, e.cols)));
        }
        *w = read_f64_blob(&dir.join(&e.param), e.rows, e.cols)?;
        *v = read_f64_blob(&dir.join(&e.momentum), e.rows, e.cols)?;
    }
    let metrics = read_metrics(&dir.join("metrics.jsonl"))?;
    if metrics.len() != rng.epoch || rng.seed != config.seed {
        return Err(Error::format("checkpoint", dir, "progress counters disagree with the metrics log or config"));
    }
    Ok(Checkpoint {
        config,
        state: TrainState {
            model,
            optimizer: Sgd {
                momentum: config.momentum,
                weight_decay: config.weight_decay,
                velocity,
            },
            epoch: rng.epoch,
            step: rng.step,
            metrics,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::ExecPolicy;
    use crate::pipeline::ModelConfig;
    use crate::synth::{generate_corpus, SynthConfig};
    use crate::training::{train_from, train_loop};

    #[test]
    fn resumed_run_matches_uninterrupted_run() {
        let synth = SynthConfig {
            segments: 8,
            max_nodes: 6,
            channels: 6,
            word_channels: 6,
            sub_activities: 2,
            ..SynthConfig::default()
        };
        let corpus = generate_corpus(2, 2, 3, &synth, ExecPolicy::Sequential).unwrap();
        let config = TrainConfig {
            epochs: 4,
            batch_size: 2,
            model: ModelConfig {
                channels: 6,
                proj_channels: 6,
                embed_dim: 6,
                layers: 2,
                ..ModelConfig::default()
            },
            ..TrainConfig::default()
        }
        .fit_to(&corpus);
        let full = train_loop(&corpus, &config, ExecPolicy::Parallel).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let half = train_loop(&corpus, &TrainConfig { epochs: 2, ..config }, ExecPolicy::Parallel).unwrap();
        save_checkpoint(dir.path(), &config, &half).unwrap();
        let ck = load_checkpoint(dir.path()).unwrap();
        assert_eq!(ck.state, half);
        let resumed = train_from(&corpus, &ck.config, ck.state, ExecPolicy::Sequential, |_| Ok(())).unwrap();
        assert_eq!(resumed, full);
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.f64");
        std::fs::write(&path, [0u8; 12]).unwrap();
        assert!(matches!(read_f64_blob(&path, 1, 2), Err(Error::Format { .. })));
        std::fs::write(&path, [0u8; 8]).unwrap();
        assert!(matches!(read_f64_blob(&path, 1, 2), Err(Error::SizeMismatch { expected: 2, found: 1, .. })));
    }
}
