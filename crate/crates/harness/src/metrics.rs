//! Complexity metrics for an arbitrary network given as an edge list.

use std::path::Path;

use neuroevo_core::complexity::{graph_report, GraphView};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// Nodes plus edges; every node counts since an edge list has no
    /// input layer to exclude.
    pub n_s: usize,
    pub modularity: f64,
    pub efficiency: f64,
    pub n_c: f64,
    pub n_nodes: usize,
    pub n_edges: usize,
}

/// Parse `u v` pairs, one per line. Blank lines and `#` comments are
/// skipped; extra columns (such as weights) are ignored.
pub fn parse_edge_list(text: &str) -> Result<Vec<(u32, u32)>> {
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        let mut id = || -> Option<u32> { it.next()?.parse().ok() };
        match (id(), id()) {
            (Some(u), Some(v)) => edges.push((u, v)),
            _ => {
                return Err(HarnessError::Config(format!(
                    "line {}: expected two node ids, got {line:?}",
                    i + 1
                )))
            }
        }
    }
    Ok(edges)
}

pub fn metrics_for_edges(edges: &[(u32, u32)], seed: u64) -> Result<MetricsRow> {
    let graph = GraphView::from_edges(edges.iter().copied());
    let (n_nodes, n_edges) = (graph.node_count(), graph.edge_count());
    let (modularity, efficiency, n_c) = if n_edges == 0 {
        (0.0, 0.0, 0.0)
    } else {
        graph_report(&graph, seed)?
    };
    Ok(MetricsRow {
        n_s: n_nodes + n_edges,
        modularity,
        efficiency,
        n_c,
        n_nodes,
        n_edges,
    })
}

pub fn metrics_for_file(path: &Path, seed: u64) -> Result<MetricsRow> {
    if !path.exists() {
        return Err(HarnessError::MissingInput(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
    metrics_for_edges(&parse_edge_list(&text)?, seed)
}
