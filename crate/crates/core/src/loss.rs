//! Masked classification losses and the L2 term.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::data::Labels;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::{ParamKind, ParamSet};
use crate::tape::{Tape, Var};

/// Mean loss over the masked nodes: softmax cross-entropy for multi-class
/// labels, per-class sigmoid cross-entropy for multi-label ones.
pub fn masked_loss(tape: &mut Tape, logits: Var, labels: &Labels, mask: &[usize]) -> Result<Var> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (rows, cols) = tape.shape(logits)?;
    if labels.len() != rows || labels.num_classes() != cols {
        return Err(Error::ShapeMismatch {
            op: "masked_loss",
            lhs: (rows, cols),
            rhs: (labels.len(), labels.num_classes()),
        });
    }
    let idx: Arc<[usize]> = mask.into();
    match labels {
        Labels::MultiClass { classes, .. } => {
            let targets = mask
                .iter()
                .map(|&n| classes.get(n).copied().flatten().ok_or(Error::Unlabeled { node: n }))
                .collect::<Result<Vec<_>>>()?;
            tape.softmax_cross_entropy(logits, idx, targets.into())
        }
        Labels::MultiLabel { targets, num_classes } => {
            let mut bits = Matrix::zeros(mask.len(), *num_classes);
            for (k, &n) in mask.iter().enumerate() {
                let t = targets
                    .get(n)
                    .and_then(|t| t.as_ref())
                    .ok_or(Error::Unlabeled { node: n })?;
                for (o, &b) in bits.row_mut(k).iter_mut().zip(t) {
                    *o = if b { 1.0 } else { 0.0 };
                }
            }
            tape.sigmoid_cross_entropy(logits, idx, Arc::new(bits))
        }
    }
}

/// `coeff · Σ ‖W‖²` over weight matrices (attention vectors and biases are
/// not penalized). `vars` follows `params` order.
pub fn l2_penalty(tape: &mut Tape, params: &ParamSet, vars: &[Var], coeff: f64) -> Result<Option<Var>> {
    if coeff == 0.0 {
        return Ok(None);
    }
    let mut total: Option<Var> = None;
    for (p, &v) in params.iter().zip(vars) {
        if p.kind != ParamKind::Weight {
            continue;
        }
        let sq = tape.sum_squares(v)?;
        total = Some(match total {
            Some(t) => tape.add(t, sq)?,
            None => sq,
        });
    }
    total.map(|t| tape.scale(t, coeff)).transpose()
}
