//! Datasets, split handling and the planted-path synthetic benchmark.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    MultiClass,
    MultiLabel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Per-node labels; `None` marks an unlabeled node.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    MultiClass {
        num_classes: usize,
        classes: Vec<Option<usize>>,
    },
    MultiLabel {
        num_classes: usize,
        targets: Vec<Option<Vec<bool>>>,
    },
}

impl Labels {
    pub fn task(&self) -> Task {
        match self {
            Labels::MultiClass { .. } => Task::MultiClass,
            Labels::MultiLabel { .. } => Task::MultiLabel,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            Labels::MultiClass { num_classes, .. } | Labels::MultiLabel { num_classes, .. } => *num_classes,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Labels::MultiClass { classes, .. } => classes.len(),
            Labels::MultiLabel { targets, .. } => targets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_labeled(&self, node: usize) -> bool {
        match self {
            Labels::MultiClass { classes, .. } => classes[node].is_some(),
            Labels::MultiLabel { targets, .. } => targets[node].is_some(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Labels::MultiClass { num_classes, classes } => {
                for &c in classes.iter().flatten() {
                    if c >= *num_classes {
                        return Err(Error::LabelOutOfRange {
                            label: c,
                            num_classes: *num_classes,
                        });
                    }
                }
            }
            Labels::MultiLabel { num_classes, targets } => {
                for t in targets.iter().flatten() {
                    if t.len() != *num_classes {
                        return Err(Error::LabelWidth {
                            len: t.len(),
                            num_classes: *num_classes,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Labels of `nodes`, in that order.
    pub fn select(&self, nodes: &[usize]) -> Labels {
        match self {
            Labels::MultiClass { num_classes, classes } => Labels::MultiClass {
                num_classes: *num_classes,
                classes: nodes.iter().map(|&n| classes[n]).collect(),
            },
            Labels::MultiLabel { num_classes, targets } => Labels::MultiLabel {
                num_classes: *num_classes,
                targets: nodes.iter().map(|&n| targets[n].clone()).collect(),
            },
        }
    }
}

/// One graph (possibly with many connected components) with features,
/// labels and a split assignment per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: Matrix,
    pub labels: Labels,
    pub splits: Vec<Option<Split>>,
}

/// The part of a dataset needed to score one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// Raw graph (no self-loops) over the retained nodes.
    pub graph: Graph,
    pub features: Matrix,
    pub labels: Labels,
    /// Batch-local ids of the nodes being scored.
    pub mask: Vec<usize>,
    /// Original node id of each batch node.
    pub node_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(graph: Graph, features: Matrix, labels: Labels, splits: Vec<Option<Split>>) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n {
            return Err(Error::ShapeMismatch {
                op: "dataset features",
                lhs: (n, features.cols()),
                rhs: features.shape(),
            });
        }
        if labels.len() != n || splits.len() != n {
            return Err(Error::ShapeMismatch {
                op: "dataset labels/splits",
                lhs: (n, 1),
                rhs: (labels.len(), splits.len()),
            });
        }
        labels.validate()?;
        for (node, s) in splits.iter().enumerate() {
            if s.is_some() && !labels.is_labeled(node) {
                return Err(Error::Unlabeled { node });
            }
        }
        Ok(Dataset {
            graph,
            features,
            labels,
            splits,
        })
    }

    pub fn task(&self) -> Task {
        self.labels.task()
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.num_classes()
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| self.splits[i] == Some(split))
            .collect()
    }

    /// Restricts the dataset to the connected components that contain nodes
    /// of `split`. Message passing never crosses components, so scores on the
    /// batch equal scores on the full graph, and a test batch built from
    /// disjoint test graphs never touches training structure.
    pub fn batch(&self, split: Split) -> Result<Batch> {
        let comp = self.graph.components();
        let num_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
        let mut keep = vec![false; num_comp];
        for (i, s) in self.splits.iter().enumerate() {
            if *s == Some(split) {
                keep[comp[i]] = true;
            }
        }
        let nodes: Vec<usize> = (0..self.num_nodes()).filter(|&i| keep[comp[i]]).collect();
        let mask: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|&(_, &n)| self.splits[n] == Some(split))
            .map(|(k, _)| k)
            .collect();
        self.batch_of(nodes, mask)
    }

    /// The whole graph, scoring every labeled node.
    pub fn full_batch(&self) -> Result<Batch> {
        let nodes: Vec<usize> = (0..self.num_nodes()).collect();
        let mask = nodes.iter().copied().filter(|&n| self.labels.is_labeled(n)).collect();
        self.batch_of(nodes, mask)
    }

    fn batch_of(&self, nodes: Vec<usize>, mask: Vec<usize>) -> Result<Batch> {
        let (graph, _) = self.graph.induced(&nodes)?;
        let features = Matrix::from_fn(nodes.len(), self.features.cols(), |i, j| self.features.get(nodes[i], j));
        Ok(Batch {
            graph,
            features,
            labels: self.labels.select(&nodes),
            mask,
            node_ids: nodes,
        })
    }
}

/// Parameters of the planted-path benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_graphs: usize,
    pub nodes_per_graph: usize,
    /// Distance `k` from each target to the node carrying its label.
    pub signal_hops: usize,
    /// Number of noise neighbors hanging off the hub.
    pub hub_degree: usize,
    pub noise_std: f64,
    pub seed: u64,
    /// Feature width; column 0 carries the planted signal.
    pub num_features: usize,
    /// The first `train_graphs` graphs are training graphs, the next
    /// `val_graphs` validation graphs, the rest test graphs.
    pub train_graphs: usize,
    pub val_graphs: usize,
    /// Nodes farther than `signal_hops` from the target get `±decoy_scale`
    /// added to column 0, with a sign independent of the label. Zero turns
    /// decoys off.
    pub decoy_scale: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_graphs: 350,
            nodes_per_graph: 24,
            signal_hops: 3,
            hub_degree: 8,
            noise_std: 0.1,
            seed: 0,
            num_features: 4,
            train_graphs: 200,
            val_graphs: 50,
            decoy_scale: 0.0,
        }
    }
}

/// Node roles inside one planted-path graph (local ids).
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedLayout {
    pub target: usize,
    /// `chain[0]` is the target, `chain[k]` the signal node.
    pub chain: Vec<usize>,
    pub hub: usize,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.signal_hops;
        let fail = |msg: alloc::string::String| Err(Error::InfeasibleSpec(msg));
        if k == 0 {
            return fail("signal_hops must be at least 1".into());
        }
        if self.nodes_per_graph < k + 2 + self.hub_degree {
            return fail(format!(
                "{} nodes per graph cannot hold a {k}-hop chain, a hub and {} hub neighbors",
                self.nodes_per_graph, self.hub_degree
            ));
        }
        if self.num_features == 0 {
            return fail("num_features must be at least 1".into());
        }
        if self.train_graphs + self.val_graphs > self.num_graphs {
            return fail("train_graphs + val_graphs exceeds num_graphs".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail("noise_std must be finite and non-negative".into());
        }
        if !(self.decoy_scale >= 0.0 && self.decoy_scale.is_finite()) {
            return fail("decoy_scale must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Layout shared by every generated graph.
    pub fn layout(&self) -> PlantedLayout {
        let k = self.signal_hops;
        PlantedLayout {
            target: 0,
            chain: (0..=k).collect(),
            hub: k + 1,
        }
    }

    pub fn split_of_graph(&self, g: usize) -> Split {
        if g < self.train_graphs {
            Split::Train
        } else if g < self.train_graphs + self.val_graphs {
            Split::Val
        } else {
            Split::Test
        }
    }
}

/// Generates the planted-path benchmark.
///
/// Every graph is a tree: the target (local node 0) starts a chain of `k`
/// edges ending at the signal node. A hub hangs off the chain node just
/// before the signal (off the signal node itself when `k = 1`) and carries
/// `hub_degree` noise neighbors; the remaining nodes attach at random below
/// the hub's neighbors. Column 0 of the signal node is `+1` for label 1 and
/// `-1` for label 0. Every other feature entry is `N(0, noise_std²)`; with a
/// nonzero `decoy_scale`, nodes more than `k` hops from the target also carry
/// a random `±decoy_scale` in column 0. Only targets are labeled, and labels are exactly balanced
/// within each split.
pub fn gen_planted_path(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.nodes_per_graph;
    let k = spec.signal_hops;
    let layout = spec.layout();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|_| Error::InfeasibleSpec("bad noise_std".into()))?;

    let mut labels_of_graph = vec![0usize; spec.num_graphs];
    for split in Split::ALL {
        let graphs: Vec<usize> = (0..spec.num_graphs)
            .filter(|&g| spec.split_of_graph(g) == split)
            .collect();
        let mut labels: Vec<usize> = (0..graphs.len()).map(|i| i % 2).collect();
        labels.shuffle(&mut rng);
        for (g, l) in graphs.into_iter().zip(labels) {
            labels_of_graph[g] = l;
        }
    }

    let total = spec.num_graphs * n;
    let mut edges = Vec::with_capacity(spec.num_graphs * (n - 1));
    let mut features = Matrix::zeros(total, spec.num_features);
    let mut classes = vec![None; total];
    let mut splits = vec![None; total];

    for (g, &label) in labels_of_graph.iter().enumerate() {
        let base = g * n;
        // Distance of every local node from the target; the graph is a tree
        // grown one node at a time.
        let mut dist = vec![0usize; n];
        for w in layout.chain.windows(2) {
            edges.push((base + w[0], base + w[1]));
            dist[w[1]] = dist[w[0]] + 1;
        }
        let anchor = if k >= 2 { layout.chain[k - 1] } else { layout.chain[k] };
        edges.push((base + anchor, base + layout.hub));
        dist[layout.hub] = dist[anchor] + 1;
        let first_spoke = layout.hub + 1;
        for s in first_spoke..first_spoke + spec.hub_degree {
            edges.push((base + layout.hub, base + s));
            dist[s] = dist[layout.hub] + 1;
        }
        let attach_from = if spec.hub_degree > 0 { first_spoke } else { layout.hub };
        for v in first_spoke + spec.hub_degree..n {
            let parent = rng.random_range(attach_from..v);
            edges.push((base + parent, base + v));
            dist[v] = dist[parent] + 1;
        }

        for local in 0..n {
            let row = features.row_mut(base + local);
            for x in row.iter_mut() {
                *x = noise.sample(&mut rng);
            }
            if dist[local] > k {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                row[0] += sign * spec.decoy_scale;
            }
        }
        let signal = base + layout.chain[k];
        features.set(signal, 0, if label == 1 { 1.0 } else { -1.0 });

        let target = base + layout.target;
        classes[target] = Some(label);
        splits[target] = Some(spec.split_of_graph(g));
    }

    let graph = Graph::from_edges(&edges, total, true)?;
    Dataset::new(
        graph,
        features,
        Labels::MultiClass {
            num_classes: 2,
            classes,
        },
        splits,
    )
}
