//! Trains models at several depths on the planted-path benchmark and prints
//! test accuracy.
//!
//! usage: depth_sweep [key=value ...]
//! keys: variants, depths, seeds, noise, epochs, hidden, lr, l2, patience,
//! bias, hub, nodes, features, decoy

use std::collections::HashMap;
use std::env;
use std::time::Instant;

use geniepath_core::data::{gen_planted_path, Split, SynthSpec};
use geniepath_core::train::{evaluate, train};
use geniepath_core::{Model, ModelConfig, Variant};

fn main() {
    let opts: HashMap<String, String> = env::args()
        .skip(1)
        .map(|a| {
            let (k, v) = a.split_once('=').expect("key=value");
            (k.to_string(), v.to_string())
        })
        .collect();
    let get = |k: &str, d: &str| opts.get(k).cloned().unwrap_or_else(|| d.to_string());
    let list = |k: &str, d: &str| -> Vec<String> { get(k, d).split(',').map(str::to_string).collect() };
    let defaults = SynthSpec::default();
    let spec = SynthSpec {
        noise_std: get("noise", "0.1").parse().unwrap(),
        hub_degree: get("hub", &defaults.hub_degree.to_string()).parse().unwrap(),
        nodes_per_graph: get("nodes", &defaults.nodes_per_graph.to_string()).parse().unwrap(),
        num_features: get("features", &defaults.num_features.to_string()).parse().unwrap(),
        decoy_scale: get("decoy", &defaults.decoy_scale.to_string()).parse().unwrap(),
        ..defaults
    };
    let ds = gen_planted_path(&spec).unwrap();
    for variant in list("variants", "geniepath,gcn-mean") {
        let variant: Variant = variant.parse().unwrap();
        for depth in list("depths", "3,7") {
            for seed in list("seeds", "0") {
                let config = ModelConfig {
                    variant,
                    depth: depth.parse().unwrap(),
                    epochs: get("epochs", "300").parse().unwrap(),
                    hidden: get("hidden", "16").parse().unwrap(),
                    lr: get("lr", "0.005").parse().unwrap(),
                    l2_penalty: get("l2", "0.0005").parse().unwrap(),
                    seed: seed.parse().unwrap(),
                    patience: get("patience", "50").parse().unwrap(),
                    bias: get("bias", "false").parse().unwrap(),
                    ..ModelConfig::default()
                };
                let start = Instant::now();
                let out = train(Model::new(config, ds.num_features(), 2).unwrap(), &ds).unwrap();
                let test = evaluate(&out.model, &ds, Split::Test).unwrap();
                let last = out.history.last().unwrap();
                println!(
                    "{variant:>14} T={depth} seed={seed} test={:.3} train={:.3} best_epoch={} epochs_run={} {:.1}s",
                    test.accuracy,
                    last.train.accuracy,
                    out.best_epoch,
                    out.history.len() - 1,
                    start.elapsed().as_secs_f64()
                );
            }
        }
    }
}
