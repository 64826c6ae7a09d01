//! Central finite-difference checks of tape gradients.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::{Batch, Labels, Task};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::model::{Model, ModelConfig};
use crate::params::ParamKind;
use crate::tape::{Tape, Var};

/// `(f(x + ε) − f(x − ε)) / 2ε`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamError {
    pub name: String,
    /// Largest relative error over the parameter's entries.
    pub max_rel_error: f64,
    /// Row and column of that entry.
    pub worst_entry: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub params: Vec<ParamError>,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamError> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn evaluate<F>(f: &F, params: &[Matrix], corrupt: bool) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    tape.corrupt_tanh_backward(corrupt);
    let vars = params
        .iter()
        .map(|p| tape.leaf(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut tape, &vars)?;
    let shape = tape.shape(loss)?;
    if shape != (1, 1) {
        return Err(Error::NotScalar {
            rows: shape.0,
            cols: shape.1,
        });
    }
    Ok((tape, vars, loss))
}

fn loss_value<F>(f: &F, params: &[Matrix]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, _, loss) = evaluate(f, params, false)?;
    Ok(tape.value(loss)?.get(0, 0))
}

/// Compares the tape's gradients of `f` against central differences.
///
/// The error for one entry is `|analytic − numeric| / max(1, |analytic|)`.
/// `f` is evaluated twice at the unperturbed point first; differing values
/// are reported as [`Error::NonDeterministic`].
pub fn grad_check<F>(f: F, params: &[(&str, Matrix)], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_with(f, params, eps, false)
}

#[doc(hidden)]
pub fn grad_check_with<F>(f: F, params: &[(&str, Matrix)], eps: f64, corrupt_backward: bool) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut values: Vec<Matrix> = params.iter().map(|(_, m)| m.clone()).collect();

    let (mut tape, vars, loss) = evaluate(&f, &values, corrupt_backward)?;
    let first = tape.value(loss)?.get(0, 0);
    let grads = tape.backward(loss)?;
    let second = loss_value(&f, &values)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        params: Vec::with_capacity(params.len()),
    };
    for (p, (name, _)) in params.iter().enumerate() {
        let shape = values[p].shape();
        let analytic = grads.get_or_zeros(vars[p], shape);
        let mut worst = ParamError {
            name: name.to_string(),
            max_rel_error: 0.0,
            worst_entry: (0, 0),
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let x = values[p].get(i, j);
                values[p].set(i, j, x + eps);
                let up = loss_value(&f, &values)?;
                values[p].set(i, j, x - eps);
                let down = loss_value(&f, &values)?;
                values[p].set(i, j, x);
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic.get(i, j);
                let err = libm::fabs(a - numeric) / libm::fabs(a).max(1.0);
                if err > worst.max_rel_error || (i, j) == (0, 0) {
                    worst.max_rel_error = err;
                    worst.worst_entry = (i, j);
                    worst.analytic = a;
                    worst.numeric = numeric;
                }
            }
        }
        report.max_rel_error = report.max_rel_error.max(worst.max_rel_error);
        report.params.push(worst);
    }
    Ok(report)
}

/// A 6-node ring with one chord, 4 smooth non-constant features and
/// `num_classes` labels on every node.
pub fn fixture_batch(task: Task, num_classes: usize) -> Batch {
    let n = 6;
    let graph =
        Graph::from_edges(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)], n, true).expect("valid fixture");
    let features = Matrix::from_fn(n, 4, |i, j| libm::sin(1.3 * i as f64 + 0.7 * j as f64 + 0.1));
    let labels = match task {
        Task::MultiClass => Labels::MultiClass {
            num_classes,
            classes: (0..n).map(|i| Some(i % num_classes)).collect(),
        },
        Task::MultiLabel => Labels::MultiLabel {
            num_classes,
            targets: (0..n)
                .map(|i| Some((0..num_classes).map(|c| (i + c) % 3 == 0).collect()))
                .collect(),
        },
    };
    Batch {
        graph,
        features,
        labels,
        mask: (0..n).collect(),
        node_ids: (0..n).collect(),
    }
}

/// A model for [`fixture_batch`] whose zero-initialized parameters
/// (attention vectors, biases) are set to small nonzero values, so every
/// path through the layers carries gradient.
pub fn fixture_model(config: ModelConfig, num_classes: usize) -> Result<Model> {
    let mut model = Model::new(config, 4, num_classes)?;
    for (k, p) in model.params_mut().iter_mut().enumerate() {
        if p.kind != ParamKind::Weight {
            let cols = p.value.cols();
            p.value = Matrix::from_fn(p.value.rows(), cols, |i, j| {
                0.5 * libm::sin(0.9 * (i * cols + j) as f64 + 0.37 * k as f64 + 0.2)
            });
        }
    }
    Ok(model)
}
