//! The end-to-end model: fusion, semantic attention, message passing and
//! readout, with a matching backward pass, plus graph interpretation of a
//! single video.

use ndarray::{Array1, Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::assignment::{aggregate_directed, aggregate_undirected, reverse_map, select_words, unpool, Importance, SelectedNode};
use crate::data::{embed_tokens, EmbeddingTable, ModalityFeatures, TokenTimeline};
use crate::error::{Error, Result};
use crate::fusion::{
    cross_modal_backward, cross_modal_forward, semantic_backward, semantic_forward, AttentionParams, AttentionShape, CrossModalCache, FusionMode, SemanticCache,
};
use crate::graph::{build_directed_graph, build_undirected_graph, GraphConfig, Lexicon, SemanticGraph};
use crate::linalg::{init_uniform, RELU_GAIN};
use crate::message_passing::{mp_backward, mp_forward_cached, MessagePassingCache, MessagePassingParams, MessagePassingShape, PoolTrace};
use crate::rng;
use crate::training::readout::{readout_backward, readout_forward, ReadoutCache};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub video_channels: usize,
    pub audio_channels: usize,
    pub word_channels: usize,
    /// Pipeline width `C`.
    pub channels: usize,
    /// Attention projection width.
    pub proj_channels: usize,
    /// Graph embedding width `D`.
    pub embed_dim: usize,
    pub fusion_mode: FusionMode,
    pub normalize_alpha: bool,
    pub layers: usize,
    pub time_kernel: usize,
    pub node_kernel: usize,
    pub pool_time: usize,
    pub pool_nodes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            video_channels: 32,
            audio_channels: 32,
            word_channels: 32,
            channels: 32,
            proj_channels: 32,
            embed_dim: 32,
            fusion_mode: FusionMode::Concat,
            normalize_alpha: true,
            layers: 3,
            time_kernel: 3,
            node_kernel: 3,
            pool_time: 2,
            pool_nodes: 2,
        }
    }
}

impl ModelConfig {
    pub fn mp_shape(&self) -> MessagePassingShape {
        MessagePassingShape {
            channels: self.channels,
            layers: self.layers,
            time_kernel: self.time_kernel,
            node_kernel: self.node_kernel,
            pool_time: self.pool_time,
            pool_nodes: self.pool_nodes,
        }
    }

    pub fn attention_shape(&self) -> AttentionShape {
        AttentionShape {
            video_channels: self.video_channels,
            audio_channels: self.audio_channels,
            proj_channels: self.proj_channels,
            channels: self.channels,
            word_channels: self.word_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.video_channels,
            self.audio_channels,
            self.word_channels,
            self.channels,
            self.proj_channels,
            self.embed_dim,
        ];
        if widths.contains(&0) {
            return Err(Error::Config("all channel widths must be positive".into()));
        }
        self.mp_shape().validate()
    }
}

/// Which stream the narration nodes attend to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamSource {
    /// The fused cross-modal output.
    Fused,
    /// The video-query branch only.
    VideoBranch,
    /// The audio-query branch only.
    AudioBranch,
}

/// All learned parameters. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub attention: AttentionParams,
    pub message_passing: MessagePassingParams,
    /// `C x D`.
    pub readout: Array2<f64>,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, &[0x6d6f_64656c]);
        let attention = AttentionParams::init(&mut r, config.attention_shape(), config.fusion_mode, config.normalize_alpha);
        let message_passing = MessagePassingParams::init(&mut r, config.mp_shape())?;
        let readout = init_uniform(&mut r, config.channels, config.embed_dim, config.channels, RELU_GAIN);
        Ok(Model {
            config,
            attention,
            message_passing,
            readout,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Model {
            config: self.config,
            attention: self.attention.zeros_like(),
            message_passing: self.message_passing.zeros_like(),
            readout: Array2::zeros(self.readout.raw_dim()),
        }
    }

    /// Named parameter matrices in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> = self.attention.tensors().into_iter().map(|(n, t)| (n.to_string(), t)).collect();
        out.extend(self.message_passing.tensors());
        out.push(("readout".to_string(), &self.readout));
        out
    }

    /// Same order as [`Model::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = self.attention.tensors_mut();
        out.extend(self.message_passing.tensors_mut());
        out.push(&mut self.readout);
        out
    }

    pub fn add_assign(&mut self, other: &Model) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b.1;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.mapv_inplace(|v| v * k);
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors().iter().map(|(_, t)| t.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn forward(&self, video: ArrayView2<f64>, audio: ArrayView2<f64>, nodes: &Array3<f64>, source: StreamSource) -> Result<ForwardCache> {
        let cross = cross_modal_forward(video, audio, &self.attention)?;
        let z = match source {
            StreamSource::Fused => &cross.z,
            StreamSource::VideoBranch => &cross.b1.z,
            StreamSource::AudioBranch => &cross.b2.z,
        };
        let semantic = semantic_forward(nodes, z.view(), &self.attention.word_proj, &self.attention.z_proj)?;
        let mp = mp_forward_cached(&semantic.ne, &self.message_passing)?;
        let readout = readout_forward(&mp.output, &self.readout)?;
        Ok(ForwardCache {
            source,
            cross,
            semantic,
            mp,
            readout,
        })
    }

    /// Gradients of `d_embedding . embedding` with respect to every
    /// parameter and every input.
    pub fn backward(&self, cache: &ForwardCache, d_embedding: &Array1<f64>) -> (Model, InputGrads) {
        let (t, n, _) = cache.mp.output.dim();
        let (d_readout, d_ne_hat) = readout_backward(&cache.readout, &self.readout, d_embedding, (t, n));
        let (d_mp, d_ne) = mp_backward(&cache.mp, &self.message_passing, &d_ne_hat);
        let sem = semantic_backward(&cache.semantic, &self.attention.word_proj, &self.attention.z_proj, &d_ne);
        let cm = match cache.source {
            StreamSource::Fused => cross_modal_backward(&cache.cross, &self.attention, Some(&sem.d_z), None, None),
            StreamSource::VideoBranch => cross_modal_backward(&cache.cross, &self.attention, None, Some(&sem.d_z), None),
            StreamSource::AudioBranch => cross_modal_backward(&cache.cross, &self.attention, None, None, Some(&sem.d_z)),
        };
        let attention = AttentionParams {
            branch1: cm.branch1,
            branch2: cm.branch2,
            concat_proj: cm.concat_proj,
            word_proj: sem.word_proj,
            z_proj: sem.z_proj,
            mode: self.attention.mode,
            normalize_alpha: self.attention.normalize_alpha,
        };
        (
            Model {
                config: self.config,
                attention,
                message_passing: d_mp,
                readout: d_readout,
            },
            InputGrads {
                video: cm.d_m1,
                audio: cm.d_m2,
                nodes: sem.d_nodes,
            },
        )
    }

    /// Graph embedding of one video.
    pub fn embed(&self, video: ArrayView2<f64>, audio: ArrayView2<f64>, nodes: &Array3<f64>) -> Result<Array1<f64>> {
        Ok(self.forward(video, audio, nodes, StreamSource::Fused)?.readout.embedding)
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub source: StreamSource,
    pub cross: CrossModalCache,
    pub semantic: SemanticCache,
    pub mp: MessagePassingCache,
    pub readout: ReadoutCache,
}

impl ForwardCache {
    pub fn embedding(&self) -> &Array1<f64> {
        &self.readout.embedding
    }

    pub fn trace(&self) -> PoolTrace {
        self.mp.trace()
    }
}

pub struct InputGrads {
    pub video: Array2<f64>,
    pub audio: Array2<f64>,
    pub nodes: Array3<f64>,
}

/// Options for turning one video into a graph.
#[derive(Debug, Clone, Default)]
pub struct InterpretOptions {
    pub directed: bool,
    pub importance: Importance,
    pub graph: GraphConfig,
    pub lexicon: Lexicon,
}

/// Selected narration nodes of one video, before graph construction.
pub fn select_nodes(
    model: &Model,
    video: &ModalityFeatures,
    audio: &ModalityFeatures,
    timeline: &TokenTimeline,
    table: &EmbeddingTable,
    importance: Importance,
) -> Result<Vec<SelectedNode>> {
    let nodes = embed_tokens(timeline, table);
    let cache = model.forward(video.to_f64().view(), audio.to_f64().view(), &nodes.data, StreamSource::Fused)?;
    let trace = cache.trace();
    let cells = reverse_map(&trace)?;
    let unpooled = unpool(&trace, &cache.mp.output)?;
    select_words(timeline, &cells, &unpooled, importance)
}

/// Runs the model on one video and builds its semantic graph.
pub fn interpret(
    model: &Model,
    video: &ModalityFeatures,
    audio: &ModalityFeatures,
    timeline: &TokenTimeline,
    table: &EmbeddingTable,
    options: &InterpretOptions,
) -> Result<SemanticGraph> {
    let selected = select_nodes(model, video, audio, timeline, table, options.importance)?;
    if options.directed {
        build_directed_graph(&aggregate_directed(&selected)?, &options.lexicon, &options.graph)
    } else {
        build_undirected_graph(&aggregate_undirected(&selected, options.importance), &options.lexicon, &options.graph)
    }
}
