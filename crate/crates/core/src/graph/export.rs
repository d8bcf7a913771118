use std::fmt::Write as _;
use std::path::Path;

use super::{Role, SemanticGraph};
use crate::error::{Error, Result};
use crate::fsutil;

pub const MIN_NODE_SIZE: f64 = 0.3;
pub const MAX_NODE_SIZE: f64 = 1.5;
const MIN_PEN: f64 = 0.5;
const MAX_PEN: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::Config(format!("unknown export format {other:?}"))),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Node size for importance relative to the graph maximum.
pub(crate) fn node_size(importance: f64, max_importance: f64) -> f64 {
    if max_importance <= 0.0 {
        return MIN_NODE_SIZE;
    }
    MIN_NODE_SIZE + (MAX_NODE_SIZE - MIN_NODE_SIZE) * (importance / max_importance).clamp(0.0, 1.0)
}

/// Graphviz text; darker and larger nodes are more important, thicker edges
/// are more similar.
pub fn to_dot(g: &SemanticGraph) -> String {
    let (kind, arrow) = if g.directed { ("digraph", "->") } else { ("graph", "--") };
    let max_importance = g.nodes.iter().map(|n| n.importance).fold(0.0, f64::max);
    let mut out = String::new();
    let _ = writeln!(out, "{kind} semantic_graph {{");
    let _ = writeln!(out, "  node [style=filled, fontname=\"Helvetica\"];");
    for n in &g.nodes {
        let size = node_size(n.importance, max_importance);
        let rel = (size - MIN_NODE_SIZE) / (MAX_NODE_SIZE - MIN_NODE_SIZE);
        let gray = (90.0 - 60.0 * rel).round() as i64;
        let font = if gray < 55 { "white" } else { "black" };
        let shape = match n.role {
            Role::Object => "ellipse",
            Role::ActionState => "box",
            Role::Other => "plaintext",
        };
        let label = match n.time_segment {
            Some(t) => format!("{}@{t}", n.word),
            None => n.word.clone(),
        };
        let _ = writeln!(
            out,
            "  n{} [label=\"{}\", shape={shape}, width={size:.3}, height={:.3}, fillcolor=\"gray{gray}\", fontcolor={font}];",
            n.id,
            escape(&label),
            size * 0.6,
        );
    }
    for e in &g.edges {
        let pen = MIN_PEN + (MAX_PEN - MIN_PEN) * e.weight.abs().min(1.0);
        let label = e
            .relation_word
            .as_ref()
            .map(|w| format!(", label=\"{}\", style=dashed", escape(w)))
            .unwrap_or_default();
        let _ = writeln!(out, "  n{} {arrow} n{} [penwidth={pen:.3}{label}];", e.src, e.dst);
    }
    out.push_str("}\n");
    out
}

pub fn to_json(g: &SemanticGraph) -> String {
    let mut s = serde_json::to_string_pretty(g).expect("graph serializes");
    s.push('\n');
    s
}

pub fn export_graph(g: &SemanticGraph, format: ExportFormat, path: &Path) -> Result<()> {
    g.validate()?;
    let text = match format {
        ExportFormat::Dot => to_dot(g),
        ExportFormat::Json => to_json(g),
    };
    fsutil::write_atomic(path, text.as_bytes())
}

pub fn load_graph_json(path: &Path) -> Result<SemanticGraph> {
    let text = fsutil::read_to_string(path)?;
    let g: SemanticGraph = serde_json::from_str(&text).map_err(|e| Error::format("graph json", path, e.to_string()))?;
    g.validate()?;
    Ok(g)
}
