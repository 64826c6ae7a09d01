//! Model assembly for every supported variant.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use crate::data::Task;
pub use crate::layers::{Activation, Residual};

use crate::error::{Error, Result};
use crate::graph::{Graph, NormalizedAdjacency};
use crate::layers::{self, BreadthParams, DepthParams, NodeState};
use crate::matrix::Matrix;
use crate::params::{glorot_uniform, ParamKind, ParamSet};
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Breadth attention followed by the gated depth update at every layer.
    GeniePath,
    /// `T` stacked breadth layers, then `T` gated updates over the saved states.
    GeniePathLazy,
    /// Symmetric-normalized propagation.
    Gcn,
    /// Row-normalized (mean) propagation.
    GcnMean,
    /// Breadth attention only, no depth gate.
    BreadthOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::GeniePath,
        Variant::GeniePathLazy,
        Variant::Gcn,
        Variant::GcnMean,
        Variant::BreadthOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::GeniePath => "geniepath",
            Variant::GeniePathLazy => "geniepath-lazy",
            Variant::Gcn => "gcn",
            Variant::GcnMean => "gcn-mean",
            Variant::BreadthOnly => "breadth-only",
        }
    }

    pub fn has_attention(self) -> bool {
        !matches!(self, Variant::Gcn | Variant::GcnMean)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Number of propagation layers `T`.
    pub depth: usize,
    /// Hidden width `K`.
    pub hidden: usize,
    pub residual: Residual,
    pub lr: f64,
    pub l2_penalty: f64,
    pub epochs: usize,
    pub seed: u64,
    pub task: Task,
    /// Adds bias terms to every linear map; off by default.
    pub bias: bool,
    /// Early-stopping patience in epochs on the validation metric.
    pub patience: usize,
    /// Hidden activation of the GCN baselines.
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::GeniePath,
            depth: 2,
            hidden: 16,
            residual: Residual::None,
            lr: 0.005,
            l2_penalty: 5e-4,
            epochs: 1000,
            seed: 0,
            task: Task::MultiClass,
            bias: false,
            patience: 50,
            activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidConfig("depth must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidConfig("hidden must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("lr must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::InvalidConfig("l2_penalty must be non-negative".into()));
        }
        Ok(())
    }
}

/// A graph prepared for one model: self-loops added, normalization cached.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub graph: Graph,
    pub adjacency: Option<NormalizedAdjacency>,
}

/// Tape handles produced by [`Model::forward`].
#[derive(Clone, Debug)]
pub struct Forward {
    pub logits: Var,
    /// Final node embeddings fed to the classifier.
    pub embedding: Var,
    /// One handle per parameter, in [`ParamSet`] order.
    pub params: Vec<Var>,
    /// Per-layer attention weights (`|E| x 1`) for attention variants.
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    input_dim: usize,
    num_classes: usize,
    params: ParamSet,
}

fn layer_name(t: usize, what: &str) -> String {
    format!("layer{t}.{what}")
}

fn depth_name(t: usize, what: &str) -> String {
    format!("depth{t}.{what}")
}

impl Model {
    /// Builds a model with Glorot-uniform weights, zero attention vectors and
    /// zero biases, seeded from `config.seed`.
    pub fn new(config: ModelConfig, input_dim: usize, num_classes: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::InvalidConfig("input and output widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let k = config.hidden;
        let mut params = ParamSet::new();
        let weight = |p: &mut ParamSet, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            p.push(name, ParamKind::Weight, glorot_uniform(rows, cols, rng));
        };
        let bias = |p: &mut ParamSet, name: &str, cols: usize| {
            if config.bias {
                p.push(name, ParamKind::Bias, Matrix::zeros(1, cols));
            }
        };

        weight(&mut params, "input.w_x", input_dim, k, &mut rng);
        for t in 0..config.depth {
            match config.variant {
                Variant::GeniePath | Variant::GeniePathLazy | Variant::BreadthOnly => {
                    weight(&mut params, &layer_name(t, "w"), k, k, &mut rng);
                    bias(&mut params, &layer_name(t, "b"), k);
                    weight(&mut params, &layer_name(t, "w_s"), k, k, &mut rng);
                    weight(&mut params, &layer_name(t, "w_d"), k, k, &mut rng);
                    params.push(&layer_name(t, "v"), ParamKind::AttentionVector, Matrix::zeros(k, 1));
                }
                Variant::Gcn | Variant::GcnMean => {
                    weight(&mut params, &layer_name(t, "w"), k, k, &mut rng);
                    bias(&mut params, &layer_name(t, "b"), k);
                }
            }
            let gate_in = match config.variant {
                Variant::GeniePath => Some((k, layer_name as fn(usize, &str) -> String)),
                Variant::GeniePathLazy => Some((2 * k, depth_name as fn(usize, &str) -> String)),
                _ => None,
            };
            if let Some((rows, name)) = gate_in {
                for gate in ["w_i", "w_f", "w_o", "w_c"] {
                    weight(&mut params, &name(t, gate), rows, k, &mut rng);
                }
                for gate in ["b_i", "b_f", "b_o", "b_c"] {
                    bias(&mut params, &name(t, gate), k);
                }
            }
            if config.residual == Residual::Concat {
                weight(&mut params, &layer_name(t, "w_res"), 2 * k, k, &mut rng);
            }
        }
        weight(&mut params, "output.w", k, num_classes, &mut rng);
        bias(&mut params, "output.b", num_classes);

        Ok(Model {
            config,
            input_dim,
            num_classes,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Adds self-loops (unless present) and caches the normalized adjacency
    /// the variant needs.
    pub fn prepare(&self, raw: &Graph) -> Result<GraphContext> {
        let graph = if raw.has_self_loops() {
            raw.clone()
        } else {
            raw.with_self_loops()?
        };
        let adjacency = match self.config.variant {
            Variant::Gcn => Some(NormalizedAdjacency::symmetric(&graph)?),
            Variant::GcnMean => Some(NormalizedAdjacency::row(&graph)?),
            _ => None,
        };
        Ok(GraphContext { graph, adjacency })
    }

    /// Records the parameters as leaves, then the full forward pass.
    pub fn forward(&self, tape: &mut Tape, ctx: &GraphContext, x: &Matrix) -> Result<Forward> {
        let vars = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect::<Result<Vec<_>>>()?;
        self.forward_with(tape, ctx, x, vars)
    }

    /// Records the forward pass using `vars` (one per parameter, in
    /// [`ParamSet`] order) in place of the stored values.
    pub fn forward_with(&self, tape: &mut Tape, ctx: &GraphContext, x: &Matrix, vars: Vec<Var>) -> Result<Forward> {
        if x.cols() != self.input_dim || x.rows() != ctx.graph.num_nodes() {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: (ctx.graph.num_nodes(), self.input_dim),
                rhs: x.shape(),
            });
        }
        if vars.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                op: "forward parameters",
                lhs: (self.params.len(), 1),
                rhs: (vars.len(), 1),
            });
        }
        for (p, &v) in self.params.iter().zip(&vars) {
            if tape.shape(v)? != p.value.shape() {
                return Err(Error::ShapeMismatch {
                    op: "forward parameters",
                    lhs: p.value.shape(),
                    rhs: tape.shape(v)?,
                });
            }
        }
        let p = |name: &str| -> Result<Var> {
            self.params
                .index_of(name)
                .map(|i| vars[i])
                .ok_or_else(|| Error::UnknownParam(name.into()))
        };
        let opt = |name: &str| self.params.index_of(name).map(|i| vars[i]);
        let breadth = |t: usize| -> Result<BreadthParams> {
            Ok(BreadthParams {
                w: p(&layer_name(t, "w"))?,
                w_s: p(&layer_name(t, "w_s"))?,
                w_d: p(&layer_name(t, "w_d"))?,
                v: p(&layer_name(t, "v"))?,
                bias: opt(&layer_name(t, "b")),
            })
        };
        let depth = |t: usize, name: fn(usize, &str) -> String| -> Result<DepthParams> {
            let bias = match (
                opt(&name(t, "b_i")),
                opt(&name(t, "b_f")),
                opt(&name(t, "b_o")),
                opt(&name(t, "b_c")),
            ) {
                (Some(a), Some(b), Some(c), Some(d)) => Some([a, b, c, d]),
                _ => None,
            };
            Ok(DepthParams {
                w_i: p(&name(t, "w_i"))?,
                w_f: p(&name(t, "w_f"))?,
                w_o: p(&name(t, "w_o"))?,
                w_c: p(&name(t, "w_c"))?,
                bias,
            })
        };
        let residual = self.config.residual;
        let wrap = |tape: &mut Tape, t: usize, out: Var, input: Var| {
            layers::residual_wrap(tape, out, input, residual, opt(&layer_name(t, "w_res")))
        };

        let xv = tape.leaf(x.clone())?;
        let h0 = layers::input_embed(tape, xv, p("input.w_x")?)?;
        let g = &ctx.graph;
        let mut attention = Vec::new();

        let embedding = match self.config.variant {
            Variant::GeniePath => {
                let c0 = tape.leaf(Matrix::zeros(g.num_nodes(), self.config.hidden))?;
                let mut state = NodeState { h: h0, c: c0, mu: None };
                for t in 0..self.config.depth {
                    let prev = state.h;
                    let (next, alpha) = layers::geniepath_layer(tape, state, g, &breadth(t)?, &depth(t, layer_name)?)?;
                    attention.push(alpha);
                    state = NodeState {
                        h: wrap(tape, t, next.h, prev)?,
                        ..next
                    };
                }
                state.h
            }
            Variant::GeniePathLazy => {
                let mut hs = Vec::with_capacity(self.config.depth + 1);
                hs.push(h0);
                for t in 0..self.config.depth {
                    let prev = hs[t];
                    let (h, alpha) = layers::breadth_aggregate(tape, prev, g, &breadth(t)?)?;
                    attention.push(alpha);
                    hs.push(wrap(tape, t, h, prev)?);
                }
                let mut mu = h0;
                let mut c = tape.leaf(Matrix::zeros(g.num_nodes(), self.config.hidden))?;
                // Update t reads the state after t + 1 breadth steps, so the
                // last breadth layer reaches the output.
                for t in 0..self.config.depth {
                    let (m, cn) = layers::lazy_update(tape, hs[t + 1], mu, c, &depth(t, depth_name)?)?;
                    mu = m;
                    c = cn;
                }
                mu
            }
            Variant::BreadthOnly => {
                let mut h = h0;
                for t in 0..self.config.depth {
                    let (next, alpha) = layers::breadth_aggregate(tape, h, g, &breadth(t)?)?;
                    attention.push(alpha);
                    h = wrap(tape, t, next, h)?;
                }
                h
            }
            Variant::Gcn | Variant::GcnMean => {
                let adj = ctx
                    .adjacency
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("graph context lacks normalized adjacency".into()))?;
                let mut h = h0;
                for t in 0..self.config.depth {
                    let next = layers::gcn_layer(
                        tape,
                        h,
                        adj,
                        p(&layer_name(t, "w"))?,
                        opt(&layer_name(t, "b")),
                        self.config.activation,
                    )?;
                    h = wrap(tape, t, next, h)?;
                }
                h
            }
        };

        let logits = tape.matmul(embedding, p("output.w")?)?;
        let logits = match opt("output.b") {
            Some(b) => tape.add_row(logits, b)?,
            None => logits,
        };
        Ok(Forward {
            logits,
            embedding,
            params: vars,
            attention,
        })
    }

    /// Forward pass without gradients; returns `(logits, embedding)`.
    pub fn predict(&self, ctx: &GraphContext, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, ctx, x)?;
        Ok((tape.value(fwd.logits)?.clone(), tape.value(fwd.embedding)?.clone()))
    }
}
