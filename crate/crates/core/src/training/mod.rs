//! Self-supervised training: readout, objectives, augmentation, optimizer,
//! the batch loop and checkpoints.

pub mod augment;
pub mod checkpoint;
pub mod loss;
pub mod optim;
pub mod readout;

use std::path::Path;

use ndarray::{Array1, Array3, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use augment::{augment_array, augment_features, AugmentConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::{cross_modal_nce, nce_loss, triplet_loss, LossKind};
pub use optim::{CyclicLr, Sgd};
pub use readout::readout;

use crate::corpus::Corpus;
use crate::data::embed_tokens;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::par::ExecPolicy;
use crate::pipeline::{ForwardCache, Model, ModelConfig, StreamSource};
use crate::rng;

const TAG_SHUFFLE: u64 = 0x7368_7566;
const TAG_NEGATIVE: u64 = 0x006e_6567;
const TAG_AUGMENT: u64 = 0x6175_676d;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr: CyclicLr,
    pub margin: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    pub loss: LossKind,
    pub augment: AugmentConfig,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            momentum: 0.9,
            weight_decay: 1e-7,
            lr: CyclicLr::default(),
            margin: 0.2,
            grad_clip: Some(0.3),
            loss: LossKind::TripletCosine,
            augment: AugmentConfig::default(),
            seed: 7,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch size {} must be at least 2", self.batch_size)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight decay {} must be non-negative", self.weight_decay)));
        }
        if !self.margin.is_finite() {
            return Err(Error::Config("margin must be finite".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("gradient clip {c} must be positive")));
            }
        }
        self.lr.validate()?;
        self.augment.validate()?;
        self.model.validate()
    }

    /// Copies the corpus stream widths into the model configuration.
    pub fn fit_to(mut self, corpus: &Corpus) -> Self {
        if let Some(v) = corpus.videos.first() {
            self.model.video_channels = v.video.channels();
            self.model.audio_channels = v.audio.channels();
        }
        self.model.word_channels = corpus.embeddings.dim();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub optimizer: Sgd,
    /// Completed epochs.
    pub epoch: usize,
    /// Completed optimizer steps.
    pub step: usize,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainState {
    pub fn fresh(config: &TrainConfig) -> Result<Self> {
        let model = Model::init(config.model, config.seed)?;
        let optimizer = Sgd::new(&model, config.momentum, config.weight_decay);
        Ok(TrainState {
            model,
            optimizer,
            epoch: 0,
            step: 0,
            metrics: Vec::new(),
        })
    }
}

struct Prepared {
    video: ndarray::Array2<f64>,
    audio: ndarray::Array2<f64>,
    nodes: Array3<f64>,
}

/// Shuffled batches of one epoch; a trailing singleton joins the previous
/// batch.
fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[TAG_SHUFFLE, epoch as u64]));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let last = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(last);
    }
    batches
}

/// One negative per batch position, uniform over the other positions.
pub fn sample_negatives(batch_len: usize, seed: u64, step: usize) -> Vec<usize> {
    let mut r = rng::stream(seed, &[TAG_NEGATIVE, step as u64]);
    (0..batch_len)
        .map(|i| {
            let j = r.random_range(0..batch_len - 1);
            if j >= i {
                j + 1
            } else {
                j
            }
        })
        .collect()
}

/// Forward passes a batch needs, and which loss each feeds.
struct BatchPlan {
    /// `(item, augmented, source)` per forward pass.
    passes: Vec<(usize, bool, StreamSource)>,
}

fn plan(batch: &[usize], kind: LossKind) -> BatchPlan {
    let passes = match kind {
        LossKind::CrossModalNce => batch
            .iter()
            .flat_map(|&i| [(i, false, StreamSource::VideoBranch), (i, false, StreamSource::AudioBranch)])
            .collect(),
        _ => batch
            .iter()
            .flat_map(|&i| [(i, false, StreamSource::Fused), (i, true, StreamSource::Fused)])
            .collect(),
    };
    BatchPlan { passes }
}

/// Loss and embedding gradients for a batch whose passes alternate
/// (first, second) per item: anchor/positive, or video/audio branch.
fn batch_objective(embeddings: &[Array1<f64>], negatives: &[usize], config: &TrainConfig) -> Result<(f64, Vec<Array1<f64>>)> {
    let b = embeddings.len() / 2;
    let first: Vec<ArrayView1<f64>> = (0..b).map(|i| embeddings[2 * i].view()).collect();
    let second: Vec<ArrayView1<f64>> = (0..b).map(|i| embeddings[2 * i + 1].view()).collect();
    let mut grads: Vec<Array1<f64>> = embeddings.iter().map(|e| Array1::zeros(e.len())).collect();
    let loss = match config.loss {
        LossKind::TripletCosine | LossKind::TripletAngular => {
            let mut total = 0.0;
            for i in 0..b {
                let j = negatives[i];
                let g = if config.loss == LossKind::TripletCosine {
                    loss::triplet_loss_grad(first[i], second[i], first[j], config.margin)?
                } else {
                    loss::triplet_angular_grad(first[i], second[i], first[j], config.margin)?
                };
                total += g.loss;
                grads[2 * i] += &(g.d_anchor / b as f64);
                grads[2 * i + 1] += &(g.d_positive / b as f64);
                grads[2 * j] += &(g.d_negative / b as f64);
            }
            total / b as f64
        }
        LossKind::Nce | LossKind::CrossModalNce => {
            let g = if config.loss == LossKind::Nce {
                loss::nce_loss_grad(&first, &second)?
            } else {
                loss::cross_modal_nce_grad(&first, &second)?
            };
            for i in 0..b {
                grads[2 * i] += &g.d_anchors[i];
                grads[2 * i + 1] += &g.d_positives[i];
            }
            g.loss
        }
    };
    Ok((loss, grads))
}

/// Runs epochs `state.epoch..config.epochs`, appending to `state.metrics`.
/// `on_epoch` sees every finished epoch.
pub fn train_from(
    corpus: &Corpus,
    config: &TrainConfig,
    mut state: TrainState,
    policy: ExecPolicy,
    mut on_epoch: impl FnMut(&TrainState) -> Result<()>,
) -> Result<TrainState> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("cannot train on an empty corpus".into()));
    }
    if config.batch_size > corpus.len() {
        return Err(Error::Config(format!("batch size {} exceeds corpus size {}", config.batch_size, corpus.len())));
    }
    let expected = config.fit_to(corpus).model;
    if expected != config.model {
        return Err(Error::Config("model channel widths do not match the corpus".into()));
    }
    let data: Vec<Prepared> = corpus
        .videos
        .iter()
        .map(|v| Prepared {
            video: v.video.to_f64(),
            audio: v.audio.to_f64(),
            nodes: embed_tokens(&v.timeline, &corpus.embeddings).data,
        })
        .collect();
    let seed = config.seed;
    while state.epoch < config.epochs {
        let mut loss_sum = 0.0;
        let mut lr = config.lr.at(state.step);
        let batches = epoch_batches(data.len(), config.batch_size, seed, state.epoch);
        for batch in &batches {
            let step = state.step;
            lr = config.lr.at(step);
            let passes = plan(batch, config.loss).passes;
            let model = &state.model;
            let caches: Vec<ForwardCache> = policy
                .map_slice(&passes, |&(item, augmented, source)| {
                    let d = &data[item];
                    if augmented {
                        let v = augment_array(&d.video, &config.augment, rng::derive(seed, &[TAG_AUGMENT, step as u64, item as u64, 0]));
                        let a = augment_array(&d.audio, &config.augment, rng::derive(seed, &[TAG_AUGMENT, step as u64, item as u64, 1]));
                        model.forward(v.view(), a.view(), &d.nodes, source)
                    } else {
                        model.forward(d.video.view(), d.audio.view(), &d.nodes, source)
                    }
                })
                .into_iter()
                .collect::<Result<_>>()?;
            let embeddings: Vec<Array1<f64>> = caches.iter().map(|c| c.embedding().clone()).collect();
            let negatives = sample_negatives(batch.len(), seed, step);
            let (loss, d_emb) = batch_objective(&embeddings, &negatives, config)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {} step {step}", state.epoch + 1)));
            }
            let idx: Vec<usize> = (0..caches.len()).collect();
            let grads: Vec<Model> = policy.map_slice(&idx, |&k| model.backward(&caches[k], &d_emb[k]).0);
            let mut total = state.model.zeros_like();
            for g in &grads {
                total.add_assign(g);
            }
            if !total.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient at epoch {} step {step}", state.epoch + 1)));
            }
            if let Some(c) = config.grad_clip {
                let norm = total.sq_norm().sqrt();
                if norm > c {
                    total.scale(c / norm);
                }
            }
            state.optimizer.step(&mut state.model, &total, lr);
            state.step += 1;
            loss_sum += loss;
        }
        state.epoch += 1;
        state.metrics.push(EpochMetrics {
            epoch: state.epoch,
            loss: loss_sum / batches.len() as f64,
            lr,
        });
        on_epoch(&state)?;
    }
    Ok(state)
}

/// Trains from a fresh seeded initialisation.
pub fn train_loop(corpus: &Corpus, config: &TrainConfig, policy: ExecPolicy) -> Result<TrainState> {
    config.validate()?;
    train_from(corpus, config, TrainState::fresh(config)?, policy, |_| Ok(()))
}

/// One JSON object per line, in epoch order.
pub fn metrics_jsonl(metrics: &[EpochMetrics]) -> String {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m).expect("metrics serialize"));
        out.push('\n');
    }
    out
}

pub fn write_metrics(metrics: &[EpochMetrics], path: &Path) -> Result<()> {
    fsutil::write_atomic(path, metrics_jsonl(metrics).as_bytes())
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let text = fsutil::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format("metrics log", path, format!("line {}: {e}", i + 1))))
        .collect()
}
