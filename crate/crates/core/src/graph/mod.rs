//! Semantic graphs built from selected narration nodes.
//!
//! Directed graphs keep one node per `(word, segment)` and connect object
//! pairs through an action/state node; undirected graphs keep one node per
//! word and connect pairs by cosine similarity.

mod export;
mod lexicon;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::assignment::SelectedNode;
use crate::error::{Error, Result};
use crate::linalg::cosine;

pub use export::{export_graph, load_graph_json, to_dot, to_json, ExportFormat, MAX_NODE_SIZE, MIN_NODE_SIZE};
pub use lexicon::{Lexicon, Role, ACTIONS, FILLERS, OBJECTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Minimum cosine similarity for an edge.
    pub tau: f64,
    /// Largest segment gap between an action and either object it links.
    pub window: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { tau: 0.5, window: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub word: String,
    pub time_segment: Option<usize>,
    pub importance: f64,
    pub role: Role,
    pub feature: Vec<f64>,
}

impl GraphNode {
    fn feature_view(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.feature)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub relation_word: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGraph {
    pub directed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_label: Option<String>,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl SemanticGraph {
    pub fn empty(directed: bool) -> Self {
        SemanticGraph {
            directed,
            video_id: None,
            task_label: None,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(Error::Shape(format!("duplicate node id {}", n.id)));
            }
            if self.directed != n.time_segment.is_some() {
                return Err(Error::Shape(format!(
                    "node {} ({:?}): time segment presence must match directedness",
                    n.id, n.word
                )));
            }
            if n.importance.is_nan() || n.importance < 0.0 || n.feature.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("node {} ({:?})", n.id, n.word)));
            }
        }
        for e in &self.edges {
            if !ids.contains(&e.src) || !ids.contains(&e.dst) {
                return Err(Error::Shape(format!("edge {} -> {} references a missing node", e.src, e.dst)));
            }
            if !(-1.0..=1.0).contains(&e.weight) {
                return Err(Error::Shape(format!("edge weight {} outside [-1, 1]", e.weight)));
            }
        }
        Ok(())
    }

    /// Node words, one entry per node.
    pub fn words(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.word.as_str()).collect()
    }

    /// Edge lookup; for undirected graphs `(u, v)` and `(v, u)` are the same edge.
    pub fn edge(&self, u: usize, v: usize) -> Option<&GraphEdge> {
        self.edges
            .iter()
            .find(|e| (e.src == u && e.dst == v) || (!self.directed && e.src == v && e.dst == u))
    }

    /// Number of weakly connected components.
    pub fn components(&self) -> usize {
        let index: BTreeMap<usize, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, index[&e.src]), find(&mut parent, index[&e.dst]));
            parent[a] = b;
        }
        (0..self.nodes.len()).filter(|&i| find(&mut parent, i) == i).count()
    }
}

fn to_nodes(selected: &[SelectedNode], lexicon: &Lexicon) -> Vec<GraphNode> {
    selected
        .iter()
        .enumerate()
        .map(|(id, s)| GraphNode {
            id,
            word: s.word.clone(),
            time_segment: s.time_segment,
            importance: s.activation,
            role: lexicon.classify(&s.word),
            feature: s.feature.to_vec(),
        })
        .collect()
}

/// Object -> action -> object chains plus the object -> object relation edge
/// each chain implies.
fn directed_edges(nodes: &[GraphNode], config: &GraphConfig) -> Vec<GraphEdge> {
    let objects: Vec<&GraphNode> = nodes.iter().filter(|n| n.role == Role::Object).collect();
    let mut edges = Vec::new();
    let mut chain_seen = BTreeSet::new();
    for a in nodes.iter().filter(|n| n.role == Role::ActionState) {
        let ta = a.time_segment.unwrap_or(0);
        for o1 in &objects {
            let t1 = o1.time_segment.unwrap_or(0);
            if t1 > ta || ta - t1 > config.window {
                continue;
            }
            let c1 = cosine(o1.feature_view(), a.feature_view());
            if c1 < config.tau {
                continue;
            }
            for o2 in &objects {
                let t2 = o2.time_segment.unwrap_or(0);
                if o2.id == o1.id || t2 < ta || t2 - ta > config.window {
                    continue;
                }
                if t2 < t1 || (t1 == t2 && o2.id < o1.id) {
                    continue;
                }
                let c2 = cosine(a.feature_view(), o2.feature_view());
                if c2 < config.tau {
                    continue;
                }
                edges.push(GraphEdge {
                    src: o1.id,
                    dst: o2.id,
                    weight: c1.min(c2),
                    relation_word: Some(a.word.clone()),
                });
                for (src, dst, w) in [(o1.id, a.id, c1), (a.id, o2.id, c2)] {
                    if chain_seen.insert((src, dst)) {
                        edges.push(GraphEdge {
                            src,
                            dst,
                            weight: w,
                            relation_word: None,
                        });
                    }
                }
            }
        }
    }
    edges
}

fn undirected_edges(nodes: &[GraphNode], config: &GraphConfig) -> Vec<GraphEdge> {
    let mut edges = Vec::new();
    for (i, u) in nodes.iter().enumerate() {
        for v in &nodes[i + 1..] {
            let c = cosine(u.feature_view(), v.feature_view());
            if c >= config.tau {
                edges.push(GraphEdge {
                    src: u.id,
                    dst: v.id,
                    weight: c,
                    relation_word: None,
                });
            }
        }
    }
    edges
}

/// Graph over per-segment nodes. Every node must carry a time segment.
pub fn build_directed_graph(nodes: &[SelectedNode], lexicon: &Lexicon, config: &GraphConfig) -> Result<SemanticGraph> {
    if let Some(n) = nodes.iter().find(|n| n.time_segment.is_none()) {
        return Err(Error::Shape(format!("directed graph node {:?} has no time segment", n.word)));
    }
    let graph_nodes = to_nodes(nodes, lexicon);
    let edges = directed_edges(&graph_nodes, config);
    Ok(SemanticGraph {
        edges,
        nodes: graph_nodes,
        ..SemanticGraph::empty(true)
    })
}

/// Graph over time-averaged word nodes with cosine-similarity edges.
pub fn build_undirected_graph(nodes: &[SelectedNode], lexicon: &Lexicon, config: &GraphConfig) -> Result<SemanticGraph> {
    if let Some(n) = nodes.iter().find(|n| n.time_segment.is_some()) {
        return Err(Error::Shape(format!("undirected graph node {:?} carries a time segment", n.word)));
    }
    let graph_nodes = to_nodes(nodes, lexicon);
    let edges = undirected_edges(&graph_nodes, config);
    Ok(SemanticGraph {
        edges,
        nodes: graph_nodes,
        ..SemanticGraph::empty(false)
    })
}

/// Merges two graphs: nodes with the same `(word, segment)` key sum their
/// importance and average their features; edges are rebuilt.
pub fn aggregate_graphs(g1: &SemanticGraph, g2: &SemanticGraph, config: &GraphConfig) -> Result<SemanticGraph> {
    if g1.directed != g2.directed {
        return Err(Error::Shape("cannot aggregate a directed graph with an undirected one".into()));
    }
    let mut merged: BTreeMap<(String, Option<usize>), (GraphNode, usize)> = BTreeMap::new();
    for n in g1.nodes.iter().chain(&g2.nodes) {
        merged
            .entry((n.word.clone(), n.time_segment))
            .and_modify(|(acc, k)| {
                acc.importance += n.importance;
                for (a, b) in acc.feature.iter_mut().zip(&n.feature) {
                    *a += b;
                }
                *k += 1;
            })
            .or_insert_with(|| (n.clone(), 1));
    }
    let nodes: Vec<GraphNode> = merged
        .into_values()
        .enumerate()
        .map(|(id, (mut n, k))| {
            n.id = id;
            let f = Array1::from(n.feature) / k as f64;
            n.feature = f.to_vec();
            n
        })
        .collect();
    let edges = if g1.directed {
        directed_edges(&nodes, config)
    } else {
        undirected_edges(&nodes, config)
    };
    let same = |a: &Option<String>, b: &Option<String>| if a == b { a.clone() } else { None };
    Ok(SemanticGraph {
        directed: g1.directed,
        video_id: None,
        task_label: same(&g1.task_label, &g2.task_label),
        nodes,
        edges,
    })
}
