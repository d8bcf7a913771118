use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;

/// Reserved padding word. Never becomes a graph node or counts in a metric.
pub const PAD: &str = "<pad>";

/// Narration words per time segment, each segment padded or truncated to
/// exactly `max_nodes` entries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenTimeline {
    segments: Vec<Vec<String>>,
    max_nodes: usize,
}

impl TokenTimeline {
    /// Pads short segments with [`PAD`] and keeps the first `max_nodes` words
    /// of long ones.
    pub fn new<S: AsRef<str>>(segments: &[Vec<S>], max_nodes: usize) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Shape("timeline needs at least one segment".into()));
        }
        if max_nodes == 0 {
            return Err(Error::Config("max_nodes must be positive".into()));
        }
        let segments = segments
            .iter()
            .map(|words| {
                let mut seg: Vec<String> = words.iter().take(max_nodes).map(|w| w.as_ref().to_string()).collect();
                seg.resize(max_nodes, PAD.to_string());
                seg
            })
            .collect();
        Ok(TokenTimeline { segments, max_nodes })
    }

    pub fn segments(&self) -> usize {
        self.segments.len()
    }

    pub fn max_nodes(&self) -> usize {
        self.max_nodes
    }

    pub fn word(&self, t: usize, n: usize) -> &str {
        &self.segments[t][n]
    }

    pub fn segment(&self, t: usize) -> &[String] {
        &self.segments[t]
    }

    /// Non-padding words of segment `t`, in order.
    pub fn words(&self, t: usize) -> impl Iterator<Item = &str> {
        self.segments[t].iter().map(String::as_str).filter(|w| *w != PAD)
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    t: usize,
    words: Vec<String>,
}

/// Writes one JSON record per segment; padding is not written.
pub fn save_token_timeline(timeline: &TokenTimeline, path: &Path) -> Result<()> {
    let mut out = String::new();
    for t in 0..timeline.segments() {
        let rec = Record {
            t,
            words: timeline.words(t).map(str::to_string).collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    fsutil::write_atomic(path, out.as_bytes())
}

/// Reads a timeline file. When `expected_segments` is given the file must
/// contain exactly that many segments.
pub fn load_token_timeline(path: &Path, expected_segments: Option<usize>, max_nodes: usize) -> Result<TokenTimeline> {
    let text = fsutil::read_to_string(path)?;
    let mut slots: Vec<Option<Vec<String>>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::format("timeline record", path, format!("line {}: {e}", lineno + 1)))?;
        if rec.t >= slots.len() {
            slots.resize(rec.t + 1, None);
        }
        if slots[rec.t].replace(rec.words).is_some() {
            return Err(Error::format(
                "timeline record",
                path,
                format!("line {}: duplicate segment t={}", lineno + 1, rec.t),
            ));
        }
    }
    let segments: Vec<Vec<String>> = slots
        .into_iter()
        .enumerate()
        .map(|(t, s)| s.ok_or_else(|| Error::format("timeline record", path, format!("missing segment t={t}"))))
        .collect::<Result<_>>()?;
    if let Some(expected) = expected_segments {
        if segments.len() != expected {
            return Err(Error::Shape(format!(
                "{}: timeline has {} segments, configuration expects {expected}",
                path.display(),
                segments.len()
            )));
        }
    }
    TokenTimeline::new(&segments, max_nodes)
}
