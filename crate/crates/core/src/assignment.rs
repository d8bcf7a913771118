//! Semantic assignment: follow the pool trace back to the narration grid and
//! turn the surviving cells into word records.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{s, Array1, Array3};
use serde::{Deserialize, Serialize};

use crate::data::{TokenTimeline, PAD};
use crate::error::{Error, Result};
use crate::message_passing::PoolTrace;

/// Scalar importance derived from a node's activation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Importance {
    #[default]
    L2Norm,
    MeanAbs,
}

impl Importance {
    pub fn of(self, feature: &Array1<f64>) -> f64 {
        match self {
            Importance::L2Norm => feature.dot(feature).sqrt(),
            Importance::MeanAbs if feature.is_empty() => 0.0,
            Importance::MeanAbs => feature.iter().map(|v| v.abs()).sum::<f64>() / feature.len() as f64,
        }
    }
}

/// A narration word that survived pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedNode {
    pub word: String,
    pub time_segment: Option<usize>,
    /// Sum of the features of the `count` occurrences this record stands for
    /// (directed records), or their mean (undirected records).
    pub feature: Array1<f64>,
    pub activation: f64,
    /// Number of grid occurrences merged into this record.
    pub count: usize,
}

/// Walks every final pooled cell back through all stages, channel by
/// channel, and calls `visit(t, n, channel, final_cell)` with the original
/// grid coordinates.
fn walk(trace: &PoolTrace, mut visit: impl FnMut(usize, usize, usize, (usize, usize))) -> Result<()> {
    trace.validate()?;
    let Some(last) = trace.layers.last() else {
        return Err(Error::Trace("trace has no layers".into()));
    };
    for ((i, j, c), &idx) in last.argmax.indexed_iter() {
        let mut flat = idx;
        let mut grid = last.input_shape;
        for layer in trace.layers.iter().rev().skip(1) {
            let (t, n) = (flat / grid.1, flat % grid.1);
            flat = layer.argmax[[t, n, c]];
            grid = layer.input_shape;
        }
        visit(flat / grid.1, flat % grid.1, c, (i, j));
    }
    Ok(())
}

/// Original-grid cells that survive every pooling stage.
pub fn reverse_map(trace: &PoolTrace) -> Result<BTreeSet<(usize, usize)>> {
    let mut cells = BTreeSet::new();
    walk(trace, |t, n, _, _| {
        cells.insert((t, n));
    })?;
    Ok(cells)
}

/// Max-unpools the final refined nodes onto the original `T x N x C` grid:
/// channel `c` of a selected cell carries the final value whose channel-`c`
/// argmax path ends there, other entries are zero.
pub fn unpool(trace: &PoolTrace, ne_hat: &Array3<f64>) -> Result<Array3<f64>> {
    let Some(last) = trace.layers.last() else {
        return Err(Error::Trace("trace has no layers".into()));
    };
    if ne_hat.dim() != last.argmax.dim() {
        return Err(Error::Shape(format!(
            "refined nodes {:?} vs trace output {:?}",
            ne_hat.dim(),
            last.argmax.dim()
        )));
    }
    let (t_len, n_len) = trace.layers[0].input_shape;
    let mut out = Array3::zeros((t_len, n_len, ne_hat.dim().2));
    walk(trace, |t, n, c, (i, j)| out[[t, n, c]] += ne_hat[[i, j, c]])?;
    Ok(out)
}

/// One record per selected non-padding cell, ordered by `(t, n)`.
pub fn select_words(timeline: &TokenTimeline, cells: &BTreeSet<(usize, usize)>, unpooled: &Array3<f64>, importance: Importance) -> Result<Vec<SelectedNode>> {
    let (t_len, n_len, _) = unpooled.dim();
    if (timeline.segments(), timeline.max_nodes()) != (t_len, n_len) {
        return Err(Error::Shape(format!(
            "timeline grid {}x{} vs node grid {t_len}x{n_len}",
            timeline.segments(),
            timeline.max_nodes()
        )));
    }
    let mut out = Vec::new();
    for &(t, n) in cells {
        if t >= t_len || n >= n_len {
            return Err(Error::Shape(format!("cell ({t}, {n}) outside {t_len}x{n_len} grid")));
        }
        let word = timeline.word(t, n);
        if word == PAD {
            continue;
        }
        let feature = unpooled.slice(s![t, n, ..]).to_owned();
        out.push(SelectedNode {
            word: word.to_string(),
            time_segment: Some(t),
            activation: importance.of(&feature),
            feature,
            count: 1,
        });
    }
    Ok(out)
}

/// Merges occurrences of a word within one segment by summing activations
/// and features. Occurrences in different segments stay separate.
pub fn aggregate_directed(selected: &[SelectedNode]) -> Result<Vec<SelectedNode>> {
    let mut groups: BTreeMap<(usize, &str), SelectedNode> = BTreeMap::new();
    for node in selected {
        let t = node
            .time_segment
            .ok_or_else(|| Error::Shape(format!("directed aggregation needs a time segment on {:?}", node.word)))?;
        groups
            .entry((t, node.word.as_str()))
            .and_modify(|acc| {
                acc.feature += &node.feature;
                acc.activation += node.activation;
                acc.count += node.count;
            })
            .or_insert_with(|| node.clone());
    }
    Ok(groups.into_values().collect())
}

/// One record per word: the mean feature over all occurrences, with
/// importance recomputed from that mean. Records that already merge several
/// occurrences are weighted by their counts.
pub fn aggregate_undirected(selected: &[SelectedNode], importance: Importance) -> Vec<SelectedNode> {
    let mut groups: BTreeMap<&str, (Array1<f64>, usize)> = BTreeMap::new();
    for node in selected {
        let entry = groups.entry(node.word.as_str()).or_insert_with(|| (Array1::zeros(node.feature.len()), 0));
        if node.time_segment.is_some() || node.count == 1 {
            entry.0 += &node.feature;
        } else {
            // undirected records already hold a mean
            entry.0.scaled_add(node.count as f64, &node.feature);
        }
        entry.1 += node.count;
    }
    groups
        .into_iter()
        .map(|(word, (sum, count))| {
            let feature = sum / count as f64;
            SelectedNode {
                word: word.to_string(),
                time_segment: None,
                activation: importance.of(&feature),
                feature,
                count,
            }
        })
        .collect()
}
