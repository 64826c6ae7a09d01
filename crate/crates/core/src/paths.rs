//! Learned edge importances and receptive subgraphs.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::model::Model;
use crate::tape::Tape;

/// Discretized importance of an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Level {
    /// `w < 0.1`
    Green,
    /// `0.1 ≤ w < 0.2`
    Blue,
    /// `w ≥ 0.2`
    Red,
}

impl Level {
    pub fn of(w: f64) -> Level {
        if w >= 0.2 {
            Level::Red
        } else if w >= 0.1 {
            Level::Blue
        } else {
            Level::Green
        }
    }

    pub fn color(self) -> &'static str {
        match self {
            Level::Green => "green",
            Level::Blue => "blue",
            Level::Red => "red",
        }
    }
}

/// Attention weight of edge `src → dst`: how much `src` contributes to `dst`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeImportance {
    /// Edge id in the self-looped graph.
    pub edge: usize,
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
    pub level: Level,
}

/// Runs a forward pass and returns the attention of layer `layer` on every
/// edge of the self-looped graph, in edge order.
pub fn extract_importance(model: &Model, raw: &Graph, x: &Matrix, layer: usize) -> Result<Vec<EdgeImportance>> {
    let variant = model.config().variant;
    if !variant.has_attention() {
        return Err(Error::NoAttention(variant.as_str()));
    }
    if layer >= model.config().depth {
        return Err(Error::IndexOutOfRange {
            op: "extract_importance",
            index: layer,
            len: model.config().depth,
        });
    }
    let ctx = model.prepare(raw)?;
    let mut tape = Tape::new();
    let fwd = model.forward(&mut tape, &ctx, x)?;
    let alpha = tape.value(fwd.attention[layer])?;
    Ok(ctx
        .graph
        .edges()
        .enumerate()
        .map(|(edge, (src, dst))| {
            let weight = alpha.get(edge, 0);
            EdgeImportance {
                edge,
                src,
                dst,
                weight,
                level: Level::of(weight),
            }
        })
        .collect())
}

/// Nodes and edges that can pass a message to `target` within `hops` steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subgraph {
    /// Sorted node ids.
    pub nodes: Vec<usize>,
    /// Sorted edge ids of `g`.
    pub edges: Vec<usize>,
}

/// Keeps every node within `hops` in-edge steps of `target`, and every edge
/// `j → i` that lies on a walk of length at most `hops` ending at `target`,
/// i.e. with `dist(i) + 1 ≤ hops`.
pub fn receptive_subgraph(g: &Graph, target: usize, hops: usize) -> Result<Subgraph> {
    g.in_edge_range(target)?;
    let mut dist = vec![usize::MAX; g.num_nodes()];
    dist[target] = 0;
    let mut queue = VecDeque::from([target]);
    while let Some(i) = queue.pop_front() {
        if dist[i] >= hops {
            continue;
        }
        for (j, _) in g.neighborhood(i)? {
            if dist[j] == usize::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    let nodes = (0..g.num_nodes()).filter(|&i| dist[i] <= hops).collect();
    let edges = g
        .edges()
        .enumerate()
        .filter(|&(_, (_, dst))| dist[dst] < hops)
        .map(|(e, _)| e)
        .collect();
    Ok(Subgraph { nodes, edges })
}
