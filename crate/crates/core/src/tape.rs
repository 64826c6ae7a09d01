//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive application together with the values it
//! needs for its backward rule. Handles ([`Var`]) are indices into the tape, so
//! recording order is a topological order and [`Tape::backward`] is a single
//! reverse sweep. A tape supports exactly one backward pass; call
//! [`Tape::reset`] to record the next iteration.
//!
//! Besides the dense primitives, the tape carries three edge primitives that
//! keep graph attention linear in the number of edges:
//!
//! * [`Tape::gather_rows`]: row `e` of the output is row `index[e]` of the input.
//! * [`Tape::segment_softmax`]: softmax within each destination's group of edges.
//! * [`Tape::segment_sum`]: per-destination sum of edge rows.
//!
//! Reductions always run in edge order, so two recordings of the same
//! computation produce bit-identical values.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Maps each edge to its segment (destination node).
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentIndex {
    segment_of_edge: Arc<[usize]>,
    num_segments: usize,
}

impl SegmentIndex {
    pub fn new(segment_of_edge: impl Into<Arc<[usize]>>, num_segments: usize) -> Result<Self> {
        let segment_of_edge = segment_of_edge.into();
        if let Some(&bad) = segment_of_edge.iter().find(|&&s| s >= num_segments) {
            return Err(Error::IndexOutOfRange {
                op: "segment_index",
                index: bad,
                len: num_segments,
            });
        }
        Ok(SegmentIndex {
            segment_of_edge,
            num_segments,
        })
    }

    pub(crate) fn from_sorted_unchecked(segment_of_edge: Arc<[usize]>, num_segments: usize) -> Self {
        SegmentIndex {
            segment_of_edge,
            num_segments,
        }
    }

    pub fn num_segments(&self) -> usize {
        self.num_segments
    }

    pub fn num_edges(&self) -> usize {
        self.segment_of_edge.len()
    }

    pub fn segment_of_edge(&self) -> &[usize] {
        &self.segment_of_edge
    }
}

/// Targets for the fused loss primitives, restricted to the masked rows.
#[derive(Clone, Debug)]
enum LossTarget {
    /// Class index per masked row.
    Classes(Arc<[usize]>),
    /// `m x C` 0/1 matrix, one row per masked row.
    Bits(Arc<Matrix>),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    ConcatCols(Var, Var),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    GatherRows(Var, Arc<[usize]>),
    SegmentSoftmax(Var, SegmentIndex),
    SegmentSum(Var, SegmentIndex),
    Sum(Var),
    SumSquares(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        rows: Arc<[usize]>,
        target: LossTarget,
    },
    SigmoidCrossEntropy {
        logits: Var,
        rows: Arc<[usize]>,
        target: LossTarget,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
    corrupt_tanh: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or zeros of `shape` if the loss does not depend on it.
    pub fn get_or_zeros(&self, var: Var, shape: (usize, usize)) -> Matrix {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }

    pub fn take(&mut self, var: Var) -> Option<Matrix> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears all recordings so the tape can be used for a new forward pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Test hook: use a wrong derivative for `tanh` in the backward pass.
    #[doc(hidden)]
    pub fn corrupt_tanh_backward(&mut self, on: bool) {
        self.corrupt_tanh = on;
    }

    pub fn value(&self, var: Var) -> Result<&Matrix> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.nodes.get(var.0).map(|n| &n.value).ok_or(Error::UnknownVar)
    }

    pub fn shape(&self, var: Var) -> Result<(usize, usize)> {
        self.value(var).map(Matrix::shape)
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Matrix) -> Result<Var> {
        self.push(value, Op::Leaf, "leaf")
    }

    fn push(&mut self, value: Matrix, op: Op, name: &'static str) -> Result<Var> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn unary(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let v = self.value(a)?.map(f);
        self.push(v, op, name)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a)?.matmul(self.value(b)?)?;
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a)?.add(self.value(b)?)?;
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a)?.hadamard(self.value(b)?)?;
        self.push(v, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, "scale", |x| c * x, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "tanh", libm::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "sigmoid", sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "relu", |x| x.max(0.0), Op::Relu(a))
    }

    /// `[A | B]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a)?, self.value(b)?);
        if av.rows() != bv.rows() {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let mut out = Matrix::zeros(av.rows(), av.cols() + bv.cols());
        for i in 0..av.rows() {
            let row = out.row_mut(i);
            row[..av.cols()].copy_from_slice(av.row(i));
            row[av.cols()..].copy_from_slice(bv.row(i));
        }
        self.push(out, Op::ConcatCols(a, b), "concat_cols")
    }

    /// Adds the `1 x K` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a)?, self.value(b)?);
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let mut out = av.clone();
        for i in 0..out.rows() {
            for (o, &x) in out.row_mut(i).iter_mut().zip(bv.row(0)) {
                *o += x;
            }
        }
        self.push(out, Op::AddRow(a, b), "add_row")
    }

    /// Multiplies row `e` of `values` (`E x K`) by the scalar `weights[e]` (`E x 1`).
    pub fn scale_rows(&mut self, values: Var, weights: Var) -> Result<Var> {
        let (v, w) = (self.value(values)?, self.value(weights)?);
        if w.cols() != 1 || w.rows() != v.rows() {
            return Err(Error::ShapeMismatch {
                op: "scale_rows",
                lhs: v.shape(),
                rhs: w.shape(),
            });
        }
        let mut out = v.clone();
        for e in 0..out.rows() {
            let c = w.get(e, 0);
            out.row_mut(e).iter_mut().for_each(|x| *x *= c);
        }
        self.push(out, Op::ScaleRows(values, weights), "scale_rows")
    }

    pub fn gather_rows(&mut self, h: Var, index: Arc<[usize]>) -> Result<Var> {
        let hv = self.value(h)?;
        let mut out = Matrix::zeros(index.len(), hv.cols());
        for (e, &src) in index.iter().enumerate() {
            if src >= hv.rows() {
                return Err(Error::IndexOutOfRange {
                    op: "gather_rows",
                    index: src,
                    len: hv.rows(),
                });
            }
            out.row_mut(e).copy_from_slice(hv.row(src));
        }
        self.push(out, Op::GatherRows(h, index), "gather_rows")
    }

    /// Softmax of an `E x 1` score column within each segment.
    pub fn segment_softmax(&mut self, scores: Var, seg: &SegmentIndex) -> Result<Var> {
        let s = self.value(scores)?;
        if s.is_empty() {
            return Err(Error::Empty { op: "segment_softmax" });
        }
        if s.cols() != 1 || s.rows() != seg.num_edges() {
            return Err(Error::ShapeMismatch {
                op: "segment_softmax",
                lhs: s.shape(),
                rhs: (seg.num_edges(), 1),
            });
        }
        if !s.is_finite() {
            return Err(Error::NonFinite { op: "segment_softmax" });
        }
        let n = seg.num_segments();
        let mut max = vec![f64::NEG_INFINITY; n];
        for (e, &g) in seg.segment_of_edge.iter().enumerate() {
            max[g] = max[g].max(s.get(e, 0));
        }
        let mut out = Matrix::zeros(s.rows(), 1);
        let mut denom = vec![0.0; n];
        for (e, &g) in seg.segment_of_edge.iter().enumerate() {
            let x = libm::exp(s.get(e, 0) - max[g]);
            out.set(e, 0, x);
            denom[g] += x;
        }
        for (e, &g) in seg.segment_of_edge.iter().enumerate() {
            let x = out.get(e, 0) / denom[g];
            out.set(e, 0, x);
        }
        self.push(out, Op::SegmentSoftmax(scores, seg.clone()), "segment_softmax")
    }

    /// Sums `E x K` edge rows into an `N x K` matrix by segment.
    pub fn segment_sum(&mut self, values: Var, seg: &SegmentIndex) -> Result<Var> {
        let v = self.value(values)?;
        if v.rows() != seg.num_edges() {
            return Err(Error::ShapeMismatch {
                op: "segment_sum",
                lhs: v.shape(),
                rhs: (seg.num_edges(), v.cols()),
            });
        }
        let mut out = Matrix::zeros(seg.num_segments(), v.cols());
        for (e, &g) in seg.segment_of_edge.iter().enumerate() {
            for (o, &x) in out.row_mut(g).iter_mut().zip(v.row(e)) {
                *o += x;
            }
        }
        self.push(out, Op::SegmentSum(values, seg.clone()), "segment_sum")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a)?.sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(a), "sum")
    }

    /// `Σ aᵢⱼ²`.
    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a)?.as_slice().iter().map(|x| x * x).sum();
        self.push(Matrix::filled(1, 1, s), Op::SumSquares(a), "sum_squares")
    }

    fn check_loss_rows(&self, logits: Var, rows: &[usize], op: &'static str) -> Result<&Matrix> {
        let z = self.value(logits)?;
        if rows.is_empty() {
            return Err(Error::EmptyMask);
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= z.rows()) {
            return Err(Error::IndexOutOfRange {
                op,
                index: bad,
                len: z.rows(),
            });
        }
        Ok(z)
    }

    /// Mean softmax cross-entropy over `rows` of `logits` with class targets.
    pub fn softmax_cross_entropy(&mut self, logits: Var, rows: Arc<[usize]>, classes: Arc<[usize]>) -> Result<Var> {
        let z = self.check_loss_rows(logits, &rows, "softmax_cross_entropy")?;
        if classes.len() != rows.len() {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                lhs: (rows.len(), 1),
                rhs: (classes.len(), 1),
            });
        }
        let mut total = 0.0;
        for (&r, &c) in rows.iter().zip(classes.iter()) {
            if c >= z.cols() {
                return Err(Error::LabelOutOfRange {
                    label: c,
                    num_classes: z.cols(),
                });
            }
            let row = z.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + libm::log(row.iter().map(|&x| libm::exp(x - m)).sum::<f64>());
            total += lse - row[c];
        }
        let loss = total / rows.len() as f64;
        let op = Op::SoftmaxCrossEntropy {
            logits,
            rows,
            target: LossTarget::Classes(classes),
        };
        self.push(Matrix::filled(1, 1, loss), op, "softmax_cross_entropy")
    }

    /// Mean over `rows` and classes of the sigmoid binary cross-entropy.
    pub fn sigmoid_cross_entropy(&mut self, logits: Var, rows: Arc<[usize]>, targets: Arc<Matrix>) -> Result<Var> {
        let z = self.check_loss_rows(logits, &rows, "sigmoid_cross_entropy")?;
        if targets.rows() != rows.len() || targets.cols() != z.cols() {
            return Err(Error::ShapeMismatch {
                op: "sigmoid_cross_entropy",
                lhs: (rows.len(), z.cols()),
                rhs: targets.shape(),
            });
        }
        let mut total = 0.0;
        for (k, &r) in rows.iter().enumerate() {
            for (&x, &y) in z.row(r).iter().zip(targets.row(k)) {
                total += softplus(x) - y * x;
            }
        }
        let loss = total / (rows.len() * z.cols()) as f64;
        let op = Op::SigmoidCrossEntropy {
            logits,
            rows,
            target: LossTarget::Bits(targets),
        };
        self.push(Matrix::filled(1, 1, loss), op, "sigmoid_cross_entropy")
    }

    /// Runs the reverse sweep from `loss` and consumes the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss)?;
        if shape != (1, 1) {
            return Err(Error::NotScalar {
                rows: shape.0,
                cols: shape.1,
            });
        }
        let nodes = core::mem::take(&mut self.nodes);
        self.consumed = true;
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(val(*b))?;
                    let gb = val(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(val(*b))?;
                    let gb = g.hadamard(val(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut grads, *a, g.scale(*c)),
                Op::Tanh(a) => {
                    let y = &node.value;
                    let gx = if self.corrupt_tanh {
                        g.zip_map(y, |gi, yi| gi * (1.0 - yi))
                    } else {
                        g.zip_map(y, |gi, yi| gi * (1.0 - yi * yi))
                    };
                    accumulate(&mut grads, *a, gx);
                }
                Op::Sigmoid(a) => {
                    let gx = g.zip_map(&node.value, |gi, yi| gi * yi * (1.0 - yi));
                    accumulate(&mut grads, *a, gx);
                }
                Op::Relu(a) => {
                    let gx = g.zip_map(val(*a), |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                    accumulate(&mut grads, *a, gx);
                }
                Op::ConcatCols(a, b) => {
                    let ca = val(*a).cols();
                    let cb = val(*b).cols();
                    let ga = Matrix::from_fn(g.rows(), ca, |i, j| g.get(i, j));
                    let gb = Matrix::from_fn(g.rows(), cb, |i, j| g.get(i, ca + j));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, &x) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *b, gb);
                }
                Op::ScaleRows(values, weights) => {
                    let v = val(*values);
                    let w = val(*weights);
                    let mut gv = g.clone();
                    let mut gw = Matrix::zeros(w.rows(), 1);
                    for e in 0..g.rows() {
                        let c = w.get(e, 0);
                        gv.row_mut(e).iter_mut().for_each(|x| *x *= c);
                        gw.set(e, 0, dot(g.row(e), v.row(e)));
                    }
                    accumulate(&mut grads, *values, gv);
                    accumulate(&mut grads, *weights, gw);
                }
                Op::GatherRows(h, index) => {
                    let hv = val(*h);
                    let mut gh = Matrix::zeros(hv.rows(), hv.cols());
                    for (e, &src) in index.iter().enumerate() {
                        for (o, &x) in gh.row_mut(src).iter_mut().zip(g.row(e)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *h, gh);
                }
                Op::SegmentSoftmax(scores, seg) => {
                    let y = &node.value;
                    let mut inner = vec![0.0; seg.num_segments()];
                    for (e, &s) in seg.segment_of_edge.iter().enumerate() {
                        inner[s] += y.get(e, 0) * g.get(e, 0);
                    }
                    let gs = Matrix::from_fn(y.rows(), 1, |e, _| {
                        y.get(e, 0) * (g.get(e, 0) - inner[seg.segment_of_edge[e]])
                    });
                    accumulate(&mut grads, *scores, gs);
                }
                Op::SegmentSum(values, seg) => {
                    let cols = g.cols();
                    let gv = Matrix::from_fn(seg.num_edges(), cols, |e, k| g.get(seg.segment_of_edge[e], k));
                    accumulate(&mut grads, *values, gv);
                }
                Op::Sum(a) => {
                    let (r, c) = val(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::SumSquares(a) => {
                    let ga = val(*a).scale(2.0 * g.get(0, 0));
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxCrossEntropy { logits, rows, target } => {
                    let z = val(*logits);
                    let LossTarget::Classes(classes) = target else {
                        unreachable!()
                    };
                    let scale = g.get(0, 0) / rows.len() as f64;
                    let mut gz = Matrix::zeros(z.rows(), z.cols());
                    for (&r, &c) in rows.iter().zip(classes.iter()) {
                        let row = z.row(r);
                        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|&x| libm::exp(x - m)).sum();
                        let out = gz.row_mut(r);
                        for (j, o) in out.iter_mut().enumerate() {
                            let p = libm::exp(row[j] - m) / denom;
                            *o += scale * (p - if j == c { 1.0 } else { 0.0 });
                        }
                    }
                    accumulate(&mut grads, *logits, gz);
                }
                Op::SigmoidCrossEntropy { logits, rows, target } => {
                    let z = val(*logits);
                    let LossTarget::Bits(targets) = target else {
                        unreachable!()
                    };
                    let scale = g.get(0, 0) / (rows.len() * z.cols()) as f64;
                    let mut gz = Matrix::zeros(z.rows(), z.cols());
                    for (k, &r) in rows.iter().enumerate() {
                        let zr = z.row(r);
                        let yr = targets.row(k);
                        for (j, o) in gz.row_mut(r).iter_mut().enumerate() {
                            *o += scale * (sigmoid(zr[j]) - yr[j]);
                        }
                    }
                    accumulate(&mut grads, *logits, gz);
                }
            }
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(Error::NonFinite { op: "backward" });
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], var: Var, g: Matrix) {
    match &mut grads[var.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl Matrix {
    fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        let data = self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Matrix::from_vec(self.rows(), self.cols(), data).expect("same shape")
    }
}
