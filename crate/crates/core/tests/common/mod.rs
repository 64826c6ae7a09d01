#![allow(dead_code)]

use std::collections::BTreeSet;

use geniepath_core::{Graph, Matrix};
use proptest::prelude::*;

/// A simple undirected graph as `(num_nodes, edges)` with `a < b` in every
/// pair, no repeats.
pub fn undirected(max_nodes: usize, max_edges: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=max_nodes).prop_flat_map(move |n| {
        let pairs = proptest::collection::vec((0..n, 0..n), 0..=max_edges);
        pairs.prop_map(move |raw| {
            let set: BTreeSet<(usize, usize)> = raw
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            (n, set.into_iter().collect())
        })
    })
}

/// Same graph with a permutation of its node ids.
pub fn undirected_with_perm(
    max_nodes: usize,
    max_edges: usize,
) -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>)> {
    undirected(max_nodes, max_edges).prop_flat_map(|(n, edges)| {
        let perm = Just((0..n).collect::<Vec<_>>()).prop_shuffle();
        (Just(n), Just(edges), perm)
    })
}

pub fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-scale..scale, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

pub fn looped(n: usize, edges: &[(usize, usize)]) -> Graph {
    Graph::from_edges(edges, n, true).unwrap().with_self_loops().unwrap()
}

/// Dense `N x N` matrix with `a[dst][src] = weight`.
pub fn dense(n: usize, g: &Graph, weight: impl Fn(usize) -> f64) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for (e, (s, d)) in g.edges().enumerate() {
        a.set(d, s, a.get(d, s) + weight(e));
    }
    a
}
