//! DOT rendering of receptive paths.

use std::fmt::Write as _;

use geniepath_core::paths::{EdgeImportance, Subgraph};

/// Renders the edges of `sub` with their importances. Arrows point from the
/// contributing node to the aggregating one; the target is filled black.
/// Colors follow the importance level and pen width is `1 + 9w`.
///
/// `importances` is indexed by edge id, as returned by
/// [`extract_importance`](geniepath_core::paths::extract_importance).
pub fn export_dot(sub: &Subgraph, importances: &[EdgeImportance], target: usize) -> String {
    let mut out = String::from("digraph receptive_paths {\n  node [shape=circle];\n");
    for &n in &sub.nodes {
        if n == target {
            writeln!(out, "  {n} [style=filled, fillcolor=black, fontcolor=white];").unwrap();
        } else {
            writeln!(out, "  {n};").unwrap();
        }
    }
    for &e in &sub.edges {
        let imp = &importances[e];
        writeln!(
            out,
            "  {} -> {} [color={}, penwidth={:.4}, label=\"{:.4}\"];",
            imp.src,
            imp.dst,
            imp.level.color(),
            1.0 + 9.0 * imp.weight,
            imp.weight
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use geniepath_core::paths::Level;

    fn imp(edge: usize, src: usize, dst: usize, weight: f64) -> EdgeImportance {
        EdgeImportance {
            edge,
            src,
            dst,
            weight,
            level: Level::of(weight),
        }
    }

    #[test]
    fn single_self_loop() {
        let sub = Subgraph {
            nodes: vec![0],
            edges: vec![0],
        };
        let dot = export_dot(&sub, &[imp(0, 0, 0, 1.0)], 0);
        assert_eq!(
            dot,
            "digraph receptive_paths {\n  node [shape=circle];\n  0 [style=filled, fillcolor=black, fontcolor=white];\n  0 -> 0 [color=red, penwidth=10.0000, label=\"1.0000\"];\n}\n"
        );
    }

    #[test]
    fn colors_follow_levels() {
        let sub = Subgraph {
            nodes: vec![0, 1, 2, 3],
            edges: vec![0, 1, 2],
        };
        let imps = [imp(0, 1, 0, 0.05), imp(1, 2, 0, 0.15), imp(2, 3, 0, 0.3)];
        let dot = export_dot(&sub, &imps, 0);
        assert!(dot.contains("1 -> 0 [color=green, penwidth=1.4500"));
        assert!(dot.contains("2 -> 0 [color=blue, penwidth=2.3500"));
        assert!(dot.contains("3 -> 0 [color=red, penwidth=3.7000"));
        assert_eq!(dot, export_dot(&sub, &imps, 0));
    }
}
