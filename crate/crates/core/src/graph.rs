//! Immutable sparse graph storage.
//!
//! Edges are stored as two flat endpoint arrays sorted by `(dst, src)`, so the
//! in-edges of node `i` form the contiguous range
//! `row_offsets[i]..row_offsets[i + 1]`. The endpoint arrays double as the
//! gather indices for per-edge attention: gathering rows of `H` by `edge_dst`
//! and by `edge_src` gives the `LH` and `RH` products without materializing
//! the 0/1 selection matrices.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::tape::SegmentIndex;

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edge_src: Arc<[usize]>,
    edge_dst: Arc<[usize]>,
    row_offsets: Vec<usize>,
    has_self_loops: bool,
}

impl Graph {
    /// Builds a graph from `(src, dst)` pairs.
    ///
    /// With `undirected`, every pair is stored in both orientations. Input
    /// self-loops and duplicate directed edges (after mirroring) are rejected.
    pub fn from_edges(edges: &[(usize, usize)], num_nodes: usize, undirected: bool) -> Result<Self> {
        let mut pairs = Vec::with_capacity(if undirected { edges.len() * 2 } else { edges.len() });
        for &(src, dst) in edges {
            for id in [src, dst] {
                if id >= num_nodes {
                    return Err(Error::NodeOutOfRange { id, num_nodes });
                }
            }
            if src == dst {
                return Err(Error::SelfLoopInInput { node: src });
            }
            pairs.push((dst, src));
            if undirected {
                pairs.push((src, dst));
            }
        }
        Self::from_sorted_pairs(num_nodes, pairs, false)
    }

    /// Returns a copy with exactly one `(i, i)` edge added for every node.
    pub fn with_self_loops(&self) -> Result<Self> {
        if self.has_self_loops {
            return Err(Error::SelfLoopsPresent);
        }
        let mut pairs: Vec<(usize, usize)> = self.edges().map(|(s, d)| (d, s)).collect();
        pairs.extend((0..self.num_nodes).map(|i| (i, i)));
        Self::from_sorted_pairs(self.num_nodes, pairs, true)
    }

    /// `pairs` holds `(dst, src)`; sorting them yields the canonical layout.
    fn from_sorted_pairs(num_nodes: usize, mut pairs: Vec<(usize, usize)>, has_self_loops: bool) -> Result<Self> {
        pairs.sort_unstable();
        if let Some(w) = pairs.windows(2).find(|w| w[0] == w[1]) {
            let (dst, src) = w[0];
            return Err(Error::DuplicateEdge { src, dst });
        }
        let mut row_offsets = vec![0usize; num_nodes + 1];
        for &(dst, _) in &pairs {
            row_offsets[dst + 1] += 1;
        }
        for i in 0..num_nodes {
            row_offsets[i + 1] += row_offsets[i];
        }
        let edge_dst: Arc<[usize]> = pairs.iter().map(|&(d, _)| d).collect();
        let edge_src: Arc<[usize]> = pairs.iter().map(|&(_, s)| s).collect();
        Ok(Graph {
            num_nodes,
            edge_src,
            edge_dst,
            row_offsets,
            has_self_loops,
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edge_src.len()
    }

    #[inline]
    pub fn has_self_loops(&self) -> bool {
        self.has_self_loops
    }

    pub fn edge_src(&self) -> &Arc<[usize]> {
        &self.edge_src
    }

    pub fn edge_dst(&self) -> &Arc<[usize]> {
        &self.edge_dst
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    /// Iterates `(src, dst)` in storage order.
    pub fn edges(&self) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        self.edge_src.iter().copied().zip(self.edge_dst.iter().copied())
    }

    /// Edge ids of the in-edges of `node`.
    pub fn in_edge_range(&self, node: usize) -> Result<Range<usize>> {
        self.check_node(node)?;
        Ok(self.row_offsets[node]..self.row_offsets[node + 1])
    }

    /// In-neighbors of `node` as `(src, edge id)`, sorted by source id.
    pub fn neighborhood(&self, node: usize) -> Result<impl ExactSizeIterator<Item = (usize, usize)> + '_> {
        let range = self.in_edge_range(node)?;
        Ok(range.map(move |e| (self.edge_src[e], e)))
    }

    /// In-degree, counting the self-loop when present.
    pub fn degree(&self, node: usize) -> usize {
        self.row_offsets[node + 1] - self.row_offsets[node]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|i| self.degree(i)).collect()
    }

    /// Segment index grouping edges by destination node.
    pub fn segment_index(&self) -> SegmentIndex {
        SegmentIndex::from_sorted_unchecked(self.edge_dst.clone(), self.num_nodes)
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                id: node,
                num_nodes: self.num_nodes,
            });
        }
        Ok(())
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::ShapeMismatch {
                op: "relabel",
                lhs: (self.num_nodes, 1),
                rhs: (perm.len(), 1),
            });
        }
        let pairs = self.edges().map(|(s, d)| (perm[d], perm[s])).collect();
        Self::from_sorted_pairs(self.num_nodes, pairs, self.has_self_loops)
    }

    /// Induced subgraph on `nodes` (given in the new label order).
    ///
    /// Returns the subgraph and, for each old node, its new id if retained.
    pub fn induced(&self, nodes: &[usize]) -> Result<(Self, Vec<Option<usize>>)> {
        let mut new_id = vec![None; self.num_nodes];
        for (k, &n) in nodes.iter().enumerate() {
            self.check_node(n)?;
            new_id[n] = Some(k);
        }
        let pairs = self
            .edges()
            .filter_map(|(s, d)| Some((new_id[d]?, new_id[s]?)))
            .collect();
        let g = Self::from_sorted_pairs(nodes.len(), pairs, self.has_self_loops)?;
        Ok((g, new_id))
    }

    /// Connected component id per node, treating edges as undirected.
    /// Components are numbered in order of their smallest node id.
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.num_nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (s, d) in self.edges() {
            let (a, b) = (find(&mut parent, s), find(&mut parent, d));
            if a != b {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                parent[hi] = lo;
            }
        }
        let mut label = vec![usize::MAX; self.num_nodes];
        let mut next = 0;
        let mut out = vec![0; self.num_nodes];
        for i in 0..self.num_nodes {
            let r = find(&mut parent, i);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            out[i] = label[r];
        }
        out
    }

    /// Disjoint union; node ids of later graphs are shifted past earlier ones.
    pub fn disjoint_union(graphs: &[Graph]) -> Result<Self> {
        let loops = graphs.first().is_some_and(|g| g.has_self_loops);
        if graphs.iter().any(|g| g.has_self_loops != loops) {
            return Err(Error::InvalidConfig("mixed self-loop policy in union".into()));
        }
        let mut offset = 0;
        let mut pairs = Vec::new();
        for g in graphs {
            pairs.extend(g.edges().map(|(s, d)| (d + offset, s + offset)));
            offset += g.num_nodes;
        }
        Self::from_sorted_pairs(offset, pairs, loops)
    }
}

/// Per-edge weights over a graph's sparsity pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    graph: Graph,
    edge_weight: Arc<[f64]>,
}

impl NormalizedAdjacency {
    /// `weight(i←j) = 1/√(d̂ᵢ d̂ⱼ)`.
    pub fn symmetric(g: &Graph) -> Result<Self> {
        let deg = Self::checked_degrees(g)?;
        let edge_weight = g
            .edges()
            .map(|(s, d)| 1.0 / libm::sqrt((deg[d] * deg[s]) as f64))
            .collect();
        Ok(NormalizedAdjacency {
            graph: g.clone(),
            edge_weight,
        })
    }

    /// `weight(i←j) = 1/d̂ᵢ`.
    pub fn row(g: &Graph) -> Result<Self> {
        let deg = Self::checked_degrees(g)?;
        let edge_weight = g.edges().map(|(_, d)| 1.0 / deg[d] as f64).collect();
        Ok(NormalizedAdjacency {
            graph: g.clone(),
            edge_weight,
        })
    }

    fn checked_degrees(g: &Graph) -> Result<Vec<usize>> {
        if !g.has_self_loops() {
            let node = (0..g.num_nodes()).find(|&i| g.degree(i) == 0).unwrap_or(0);
            return Err(Error::MissingSelfLoops { node });
        }
        Ok(g.degrees())
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn edge_weight(&self) -> &Arc<[f64]> {
        &self.edge_weight
    }

    /// Weight of edge `src → dst`, if present.
    pub fn weight(&self, src: usize, dst: usize) -> Option<f64> {
        let mut nb = self.graph.neighborhood(dst).ok()?;
        nb.find(|&(s, _)| s == src).map(|(_, e)| self.edge_weight[e])
    }
}
