//! Self-supervised semantic graphs for narrated multimodal feature streams.
//!
//! The pipeline fuses video and audio streams with two-branch cross-modal
//! attention, re-weights narration word embeddings against the fused stream,
//! refines them with depthwise message passing and max pooling, and reads
//! out one embedding per video for a triplet objective. The max-pool
//! argmax trace maps the surviving cells back to narration words, which
//! become the nodes of an interpretable graph.

pub mod assignment;
pub mod cli;
pub mod corpus;
pub mod data;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod graph;
pub mod linalg;
pub mod message_passing;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod training;

mod fsutil;

pub use error::{Error, Result};
pub use par::ExecPolicy;
