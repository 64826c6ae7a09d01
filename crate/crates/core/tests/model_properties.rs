mod common;

use common::{dense, looped, matrix, undirected, undirected_with_perm};
use geniepath_core::data::{gen_planted_path, Batch, Labels, Task};
use geniepath_core::gradcheck::grad_check;
use geniepath_core::layers::{self, BreadthParams, DepthParams, NodeState};
use geniepath_core::metrics;
use geniepath_core::paths::{extract_importance, Level};
use geniepath_core::train::{evaluate, grad_check_model};
use geniepath_core::{Graph, Matrix, Model, ModelConfig, Residual, Split, SynthSpec, Tape, Var, Variant};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A model with every parameter, including attention vectors and biases,
/// drawn from `U(-1, 1)`.
fn random_model(variant: Variant, depth: usize, input: usize, classes: usize, seed: u64) -> Model {
    let config = ModelConfig {
        variant,
        depth,
        hidden: 4,
        bias: true,
        seed,
        ..ModelConfig::default()
    };
    let mut model = Model::new(config, input, classes).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for p in model.params_mut().iter_mut() {
        p.value = Matrix::from_fn(p.value.rows(), p.value.cols(), |_, _| rng.random_range(-1.0..1.0));
    }
    model
}

fn embedding(model: &Model, g: &Graph, x: &Matrix) -> Matrix {
    model.predict(&model.prepare(g).unwrap(), x).unwrap().1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn relabeling_commutes_with_every_variant((n, edges, perm) in undirected_with_perm(12, 24), seed in any::<u64>()) {
        let x = Matrix::from_fn(n, 3, |i, j| ((seed % 97) as f64 + 1.7 * i as f64 + 0.3 * j as f64).sin());
        let g = Graph::from_edges(&edges, n, true).unwrap();
        let moved: Vec<(usize, usize)> = edges.iter().rev().map(|&(a, b)| (perm[b], perm[a])).collect();
        let g2 = Graph::from_edges(&moved, n, true).unwrap();
        let mut x2 = Matrix::zeros(n, 3);
        for i in 0..n {
            x2.row_mut(perm[i]).copy_from_slice(x.row(i));
        }
        for variant in Variant::ALL {
            let model = random_model(variant, 2, 3, 2, seed);
            let a = embedding(&model, &g, &x);
            let b = embedding(&model, &g2, &x2);
            for i in 0..n {
                for j in 0..a.cols() {
                    prop_assert!((a.get(i, j) - b.get(perm[i], j)).abs() <= 1e-9, "{variant} node {i}");
                }
            }
        }
    }

    #[test]
    fn attention_is_normalized_at_every_layer((n, edges) in undirected(15, 30), seed in any::<u64>()) {
        let g = Graph::from_edges(&edges, n, true).unwrap();
        let x = Matrix::from_fn(n, 3, |i, j| ((seed % 89) as f64 + i as f64 * 0.9 - j as f64).cos() * 3.0);
        for variant in [Variant::GeniePath, Variant::GeniePathLazy, Variant::BreadthOnly] {
            let model = random_model(variant, 3, 3, 2, seed);
            let ctx = model.prepare(&g).unwrap();
            let mut tape = Tape::new();
            let fwd = model.forward(&mut tape, &ctx, &x).unwrap();
            prop_assert_eq!(fwd.attention.len(), 3);
            for &alpha in &fwd.attention {
                let alpha = tape.value(alpha).unwrap();
                let mut sums = vec![0.0; n];
                for (e, (_, d)) in ctx.graph.edges().enumerate() {
                    sums[d] += alpha.get(e, 0);
                }
                for s in sums {
                    prop_assert!((s - 1.0).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn tied_projections_give_symmetric_scores((n, edges) in undirected(12, 24), h in matrix(12, 3, 2.0), w in matrix(3, 3, 1.0), v in matrix(3, 1, 1.0)) {
        let g = looped(n, &edges);
        let h = Matrix::from_fn(n, 3, |i, j| h.get(i, j));
        let mut t = Tape::new();
        let hv = t.leaf(h).unwrap();
        let w_s = t.leaf(w.clone()).unwrap();
        let w_d = t.leaf(w.clone()).unwrap();
        let theta = BreadthParams { w: w_s, w_s, w_d, v: t.leaf(v).unwrap(), bias: None };
        let raw = layers::raw_attention_scores(&mut t, hv, &g, &theta).unwrap();
        let raw = t.value(raw).unwrap();
        let score = |s: usize, d: usize| {
            let e = g.neighborhood(d).unwrap().find(|&(src, _)| src == s).unwrap().1;
            raw.get(e, 0)
        };
        for (s, d) in g.edges() {
            prop_assert_eq!(score(s, d).to_bits(), score(d, s).to_bits());
        }
    }

    #[test]
    fn zero_attention_vector_is_mean_aggregation((n, edges) in undirected(10, 20), h in matrix(10, 3, 2.0), w in matrix(3, 3, 1.0), ws in matrix(3, 3, 1.0)) {
        let g = looped(n, &edges);
        let h = Matrix::from_fn(n, 3, |i, j| h.get(i, j));
        let mut t = Tape::new();
        let hv = t.leaf(h.clone()).unwrap();
        let theta = BreadthParams {
            w: t.leaf(w.clone()).unwrap(),
            w_s: t.leaf(ws.clone()).unwrap(),
            w_d: t.leaf(ws).unwrap(),
            v: t.leaf(Matrix::zeros(3, 1)).unwrap(),
            bias: None,
        };
        let b = layers::breadth_preactivation(&mut t, hv, &g, &theta).unwrap();
        let deg = g.degrees();
        let mean = dense(n, &g, |e| 1.0 / deg[g.edge_dst()[e]] as f64);
        let oracle = mean.matmul(&h).unwrap().matmul(&w).unwrap();
        prop_assert!(t.value(b.pre).unwrap().max_abs_diff(&oracle) <= 1e-9);
    }

    #[test]
    fn layer_gradients_match_differences((n, edges) in undirected(6, 8), seed in any::<u64>()) {
        let g = looped(n, &edges);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let k = 3;
        let names = ["h", "c", "w", "w_s", "w_d", "v", "w_i", "w_f", "w_o", "w_c", "mu", "l_i", "l_f", "l_o", "l_c"];
        let shapes = [(n, k), (n, k), (k, k), (k, k), (k, k), (k, 1), (k, k), (k, k), (k, k), (k, k), (n, k), (2 * k, k), (2 * k, k), (2 * k, k), (2 * k, k)];
        let params: Vec<(&str, Matrix)> = names.iter().zip(shapes).map(|(&name, (r, c))| (name, m(r, c))).collect();

        let layer = |t: &mut Tape, p: &[Var]| {
            let theta = BreadthParams { w: p[2], w_s: p[3], w_d: p[4], v: p[5], bias: None };
            let phi = DepthParams { w_i: p[6], w_f: p[7], w_o: p[8], w_c: p[9], bias: None };
            let (next, _) = layers::geniepath_layer(t, NodeState { h: p[0], c: p[1], mu: None }, &g, &theta, &phi)?;
            let lazy = DepthParams { w_i: p[11], w_f: p[12], w_o: p[13], w_c: p[14], bias: None };
            let (mu, c) = layers::lazy_update(t, next.h, p[10], next.c, &lazy)?;
            let a = t.sum_squares(mu)?;
            let b = t.sum_squares(c)?;
            let ab = t.add(a, b)?;
            let adj = geniepath_core::NormalizedAdjacency::symmetric(&g)?;
            let gcn = layers::gcn_layer(t, p[0], &adj, p[2], None, layers::Activation::Tanh)?;
            let gcn = t.sum_squares(gcn)?;
            t.add(ab, gcn)
        };
        let report = grad_check(layer, &params, 1e-6).unwrap();
        prop_assert!(report.max_rel_error < 1e-5, "{:?}", report.worst());
    }

    #[test]
    fn metrics_stay_in_the_unit_interval(z in matrix(6, 3, 4.0), cls in proptest::collection::vec(0usize..3, 6), bits in proptest::collection::vec(any::<bool>(), 18), keep in 1usize..7) {
        let mask: Vec<usize> = (0..keep).collect();
        let multi_class = Labels::MultiClass { num_classes: 3, classes: cls.into_iter().map(Some).collect() };
        let multi_label = Labels::MultiLabel {
            num_classes: 3,
            targets: bits.chunks(3).map(|c| Some(c.to_vec())).collect(),
        };
        for labels in [multi_class, multi_label] {
            let m = metrics::compute(&z, &labels, &mask, 0.3).unwrap();
            for v in [m.accuracy, m.micro_f1, m.macro_f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn importance_levels_follow_weights((n, edges) in undirected(12, 24), seed in any::<u64>()) {
        let g = Graph::from_edges(&edges, n, true).unwrap();
        let x = Matrix::from_fn(n, 3, |i, j| (i as f64 * 2.1 + j as f64).sin() * 4.0);
        let model = random_model(Variant::GeniePath, 2, 3, 2, seed);
        for imp in extract_importance(&model, &g, &x, 1).unwrap() {
            prop_assert!((0.0..=1.0).contains(&imp.weight));
            prop_assert_eq!(imp.level, Level::of(imp.weight));
        }
    }
}

#[test]
fn full_model_gradients_for_every_variant_and_task() {
    for variant in Variant::ALL {
        for residual in [Residual::None, Residual::Add, Residual::Concat] {
            for task in [Task::MultiClass, Task::MultiLabel] {
                let config = ModelConfig {
                    variant,
                    depth: 2,
                    hidden: 3,
                    residual,
                    task,
                    bias: true,
                    l2_penalty: 0.01,
                    ..ModelConfig::default()
                };
                let batch = geniepath_core::gradcheck::fixture_batch(task, 3);
                let model = geniepath_core::gradcheck::fixture_model(config, 3).unwrap();
                let report = grad_check_model(&model, &batch, 1e-6, false).unwrap();
                assert!(
                    report.max_rel_error < 1e-5,
                    "{variant} {residual:?} {task:?}: {:?}",
                    report.worst()
                );
            }
        }
    }
}

#[test]
fn test_scores_ignore_training_graphs() {
    let spec = SynthSpec {
        num_graphs: 6,
        nodes_per_graph: 12,
        hub_degree: 3,
        train_graphs: 3,
        val_graphs: 1,
        ..SynthSpec::default()
    };
    let ds = gen_planted_path(&spec).unwrap();
    let model = random_model(Variant::GeniePath, 3, ds.num_features(), 2, 7);
    let before = evaluate(&model, &ds, Split::Test).unwrap();

    let mut changed = ds.clone();
    let test_nodes: Vec<usize> = (0..ds.num_nodes())
        .filter(|&i| spec.split_of_graph(i / spec.nodes_per_graph) == Split::Test)
        .collect();
    for i in 0..ds.num_nodes() {
        if !test_nodes.contains(&i) {
            for v in changed.features.row_mut(i) {
                *v = -3.0 * *v + 1.0;
            }
        }
    }
    let mut extra: Vec<(usize, usize)> = ds.graph.edges().filter(|&(s, d)| s < d).collect();
    extra.push((1, 5));
    changed.graph = Graph::from_edges(&extra, ds.num_nodes(), true).unwrap();

    let after = evaluate(&model, &changed, Split::Test).unwrap();
    assert_eq!(before, after);
    let batch: Batch = changed.batch(Split::Test).unwrap();
    assert!(batch.node_ids.iter().all(|i| test_nodes.contains(i)));
}
