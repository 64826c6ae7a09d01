//! Graph layers recorded on a [`Tape`].
//!
//! The adaptive path layer is a breadth step followed by a depth step:
//!
//! ```text
//! α(i←j)  = softmax over j ∈ N(i) ∪ {i} of vᵀ tanh(W_sᵀ hᵢ + W_dᵀ hⱼ)
//! h_tmp,i = tanh(Wᵀ Σⱼ α(i←j) hⱼ)
//! i, f, o = σ(W_iᵀ h_tmp), σ(W_fᵀ h_tmp), σ(W_oᵀ h_tmp)
//! C̃      = tanh(W_cᵀ h_tmp)
//! C'      = f ⊙ C + i ⊙ C̃
//! h'      = o ⊙ tanh(C')
//! ```
//!
//! Attention is computed per edge: `H·W_s` is gathered by destination and
//! `H·W_d` by source, so nothing of size `N x N` is ever built. All graphs
//! passed here must already carry self-loops.

use crate::error::{Error, Result};
use crate::graph::{Graph, NormalizedAdjacency};
use crate::tape::{Tape, Var};

/// Breadth parameters Θ of one layer. `v` is `K x 1`, the rest `K x K`.
#[derive(Clone, Copy, Debug)]
pub struct BreadthParams {
    pub w: Var,
    pub w_s: Var,
    pub w_d: Var,
    pub v: Var,
    pub bias: Option<Var>,
}

/// Gate parameters Φ of one depth update, each `K_in x K`.
#[derive(Clone, Copy, Debug)]
pub struct DepthParams {
    pub w_i: Var,
    pub w_f: Var,
    pub w_o: Var,
    pub w_c: Var,
    /// Optional `1 x K` biases for the i, f, o and C̃ gates.
    pub bias: Option<[Var; 4]>,
}

/// Per-node hidden state, memory and (lazy variant) depth state.
#[derive(Clone, Copy, Debug)]
pub struct NodeState {
    pub h: Var,
    pub c: Var,
    pub mu: Option<Var>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

/// Skip connection around a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Residual {
    None,
    /// `H' + H`.
    Add,
    /// `[H' | H] · W_r` with `W_r` of shape `2K x K`.
    Concat,
}

fn require_self_loops(g: &Graph) -> Result<()> {
    if !g.has_self_loops() {
        return Err(Error::MissingSelfLoops { node: 0 });
    }
    Ok(())
}

fn linear(tape: &mut Tape, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    match bias {
        Some(b) => tape.add_row(y, b),
        None => Ok(y),
    }
}

/// `H⁽⁰⁾ = X · W_x`.
pub fn input_embed(tape: &mut Tape, x: Var, w_x: Var) -> Result<Var> {
    tape.matmul(x, w_x)
}

/// Unnormalized edge scores `vᵀ tanh(W_sᵀ h_dst + W_dᵀ h_src)`, `|E| x 1`.
pub fn raw_attention_scores(tape: &mut Tape, h: Var, g: &Graph, theta: &BreadthParams) -> Result<Var> {
    require_self_loops(g)?;
    let hs = tape.matmul(h, theta.w_s)?;
    let hd = tape.matmul(h, theta.w_d)?;
    let at_dst = tape.gather_rows(hs, g.edge_dst().clone())?;
    let at_src = tape.gather_rows(hd, g.edge_src().clone())?;
    let pre = tape.add(at_dst, at_src)?;
    let act = tape.tanh(pre)?;
    tape.matmul(act, theta.v)
}

/// Attention weights α, one per edge, normalized over each node's in-edges.
pub fn attention_scores(tape: &mut Tape, h: Var, g: &Graph, theta: &BreadthParams) -> Result<Var> {
    let raw = raw_attention_scores(tape, h, g, theta)?;
    tape.segment_softmax(raw, &g.segment_index())
}

/// Output of [`breadth_preactivation`].
#[derive(Clone, Copy, Debug)]
pub struct Breadth {
    /// `Wᵀ Σⱼ α(i←j) hⱼ` (plus bias), before the `tanh`.
    pub pre: Var,
    /// Per-edge attention weights.
    pub alpha: Var,
}

pub fn breadth_preactivation(tape: &mut Tape, h: Var, g: &Graph, theta: &BreadthParams) -> Result<Breadth> {
    let alpha = attention_scores(tape, h, g, theta)?;
    let msgs = tape.gather_rows(h, g.edge_src().clone())?;
    let weighted = tape.scale_rows(msgs, alpha)?;
    let agg = tape.segment_sum(weighted, &g.segment_index())?;
    let pre = linear(tape, agg, theta.w, theta.bias)?;
    Ok(Breadth { pre, alpha })
}

/// `h_tmp = tanh(Wᵀ Σⱼ α(i←j) hⱼ)`. Returns `(h_tmp, α)`.
pub fn breadth_aggregate(tape: &mut Tape, h: Var, g: &Graph, theta: &BreadthParams) -> Result<(Var, Var)> {
    let b = breadth_preactivation(tape, h, g, theta)?;
    Ok((tape.tanh(b.pre)?, b.alpha))
}

/// Gated memory update shared by both variants. `x` is `h_tmp`, or
/// `[h | μ]` for the lazy variant.
fn gated_update(tape: &mut Tape, x: Var, c_prev: Var, phi: &DepthParams) -> Result<(Var, Var)> {
    let b = phi.bias;
    let i = linear(tape, x, phi.w_i, b.map(|b| b[0]))?;
    let i = tape.sigmoid(i)?;
    let f = linear(tape, x, phi.w_f, b.map(|b| b[1]))?;
    let f = tape.sigmoid(f)?;
    let o = linear(tape, x, phi.w_o, b.map(|b| b[2]))?;
    let o = tape.sigmoid(o)?;
    let c_tilde = linear(tape, x, phi.w_c, b.map(|b| b[3]))?;
    let c_tilde = tape.tanh(c_tilde)?;

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, c_tilde)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next)?;
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Depth step of the adaptive path layer. Returns `(H', C')`.
pub fn depth_update(tape: &mut Tape, h_tmp: Var, c_prev: Var, phi: &DepthParams) -> Result<(Var, Var)> {
    let (hr, hc) = tape.shape(h_tmp)?;
    let (cr, cc) = tape.shape(c_prev)?;
    if (hr, hc) != (cr, cc) {
        return Err(Error::ShapeMismatch {
            op: "depth_update",
            lhs: (hr, hc),
            rhs: (cr, cc),
        });
    }
    gated_update(tape, h_tmp, c_prev, phi)
}

/// One adaptive path layer: breadth then depth. Returns the next state and
/// the layer's attention weights.
pub fn geniepath_layer(
    tape: &mut Tape,
    state: NodeState,
    g: &Graph,
    theta: &BreadthParams,
    phi: &DepthParams,
) -> Result<(NodeState, Var)> {
    let (h_tmp, alpha) = breadth_aggregate(tape, state.h, g, theta)?;
    let (h, c) = depth_update(tape, h_tmp, state.c, phi)?;
    Ok((NodeState { h, c, mu: state.mu }, alpha))
}

/// Lazy depth step: gates read `[h⁽ᵗ⁾ | μ⁽ᵗ⁾]`. Returns `(μ', C')`.
pub fn lazy_update(tape: &mut Tape, h_t: Var, mu_t: Var, c_t: Var, phi: &DepthParams) -> Result<(Var, Var)> {
    let (mr, mc) = tape.shape(mu_t)?;
    let c_shape = tape.shape(c_t)?;
    if (mr, mc) != c_shape {
        return Err(Error::ShapeMismatch {
            op: "lazy_update",
            lhs: (mr, mc),
            rhs: c_shape,
        });
    }
    let x = tape.concat_cols(h_t, mu_t)?;
    gated_update(tape, x, c_t, phi)
}

/// `Ã · H` as gather, per-edge scale and segment sum.
pub fn propagate(tape: &mut Tape, h: Var, adj: &NormalizedAdjacency) -> Result<Var> {
    let g = adj.graph();
    let weights = crate::matrix::Matrix::from_vec(g.num_edges(), 1, adj.edge_weight().to_vec())?;
    let weights = tape.leaf(weights)?;
    let msgs = tape.gather_rows(h, g.edge_src().clone())?;
    let weighted = tape.scale_rows(msgs, weights)?;
    tape.segment_sum(weighted, &g.segment_index())
}

pub fn activate(tape: &mut Tape, x: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Identity => Ok(x),
        Activation::Tanh => tape.tanh(x),
        Activation::Relu => tape.relu(x),
    }
}

/// `act(Ã H W + b)`.
pub fn gcn_layer(
    tape: &mut Tape,
    h: Var,
    adj: &NormalizedAdjacency,
    w: Var,
    bias: Option<Var>,
    act: Activation,
) -> Result<Var> {
    let p = propagate(tape, h, adj)?;
    let z = linear(tape, p, w, bias)?;
    activate(tape, z, act)
}

/// Applies a skip connection from `input` to `out`. `proj` is required for
/// [`Residual::Concat`].
pub fn residual_wrap(tape: &mut Tape, out: Var, input: Var, kind: Residual, proj: Option<Var>) -> Result<Var> {
    match kind {
        Residual::None => Ok(out),
        Residual::Add => tape.add(out, input),
        Residual::Concat => {
            let cat = tape.concat_cols(out, input)?;
            let w = proj.ok_or_else(|| Error::InvalidConfig("concat residual without projection".into()))?;
            tape.matmul(cat, w)
        }
    }
}
