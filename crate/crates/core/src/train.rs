//! Full-batch training with early stopping on the validation split.

use alloc::vec::Vec;

use crate::data::{Batch, Dataset, Split};
use crate::error::{Error, Result};
use crate::gradcheck::{grad_check_with, GradCheckReport};
use crate::loss::{l2_penalty, masked_loss};
use crate::matrix::Matrix;
use crate::metrics::{self, Metrics};
use crate::model::{GraphContext, Model};
use crate::optim::{adam_step, AdamState};
use crate::params::ParamSet;
use crate::tape::{Tape, Var};

/// Metrics of the parameters as they were at the start of `epoch`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: Metrics,
    pub val: Option<Metrics>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// The model restored to its best validation epoch.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

struct Prepared {
    batch: Batch,
    ctx: GraphContext,
}

impl Prepared {
    fn new(model: &Model, dataset: &Dataset, split: Split) -> Result<Option<Self>> {
        let batch = dataset.batch(split)?;
        if batch.mask.is_empty() {
            return Ok(None);
        }
        let ctx = model.prepare(&batch.graph)?;
        Ok(Some(Prepared { batch, ctx }))
    }

    fn score(&self, model: &Model) -> Result<Metrics> {
        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &self.ctx, &self.batch.features)?;
        let loss = masked_loss(&mut tape, fwd.logits, &self.batch.labels, &self.batch.mask)?;
        let loss = tape.value(loss)?.get(0, 0);
        metrics::compute(tape.value(fwd.logits)?, &self.batch.labels, &self.batch.mask, loss)
    }
}

/// Masked data loss plus the L2 term, recorded on `tape` with `vars` as the
/// parameters. Returns `(objective, data loss, logits)`.
pub fn objective(
    tape: &mut Tape,
    model: &Model,
    ctx: &GraphContext,
    batch: &Batch,
    vars: Vec<Var>,
) -> Result<(Var, Var, Var)> {
    let fwd = model.forward_with(tape, ctx, &batch.features, vars)?;
    let data = masked_loss(tape, fwd.logits, &batch.labels, &batch.mask)?;
    let total = match l2_penalty(tape, model.params(), &fwd.params, model.config().l2_penalty)? {
        Some(reg) => tape.add(data, reg)?,
        None => data,
    };
    Ok((total, data, fwd.logits))
}

/// Finite-difference check of the full training objective on `batch`.
pub fn grad_check_model(model: &Model, batch: &Batch, eps: f64, corrupt_backward: bool) -> Result<GradCheckReport> {
    let ctx = model.prepare(&batch.graph)?;
    let params: Vec<(&str, Matrix)> = model
        .params()
        .iter()
        .map(|p| (p.name.as_str(), p.value.clone()))
        .collect();
    grad_check_with(
        |tape, vars| Ok(objective(tape, model, &ctx, batch, vars.to_vec())?.0),
        &params,
        eps,
        corrupt_backward,
    )
}

fn diverged(epoch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { .. } | Error::NonFiniteGradient { .. } => Error::Diverged { epoch },
        other => other,
    }
}

/// Scores `model` on the nodes of `split`. The loss excludes the L2 term.
pub fn evaluate(model: &Model, dataset: &Dataset, split: Split) -> Result<Metrics> {
    Prepared::new(model, dataset, split)?
        .ok_or(Error::EmptyMask)?
        .score(model)
}

/// Trains with Adam for up to `epochs` updates.
///
/// Epoch `e` records the metrics of the parameters after `e` updates, so a
/// zero-epoch run records only the initial model. The returned model is the
/// one with the best validation score (accuracy for multi-class, micro-F1 for
/// multi-label; ties go to the lower validation loss, then the earlier
/// epoch). Without validation nodes the training score is used. Training
/// stops early after `patience` epochs without improvement.
pub fn train(mut model: Model, dataset: &Dataset) -> Result<TrainOutcome> {
    if dataset.task() != model.config().task {
        return Err(Error::InvalidConfig("model task does not match dataset labels".into()));
    }
    let train = Prepared::new(&model, dataset, Split::Train)?.ok_or(Error::EmptyMask)?;
    let val = Prepared::new(&model, dataset, Split::Val)?;
    let config = model.config().clone();
    let mut adam = AdamState::new(model.params());
    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, ParamSet)> = None;

    for epoch in 0..=config.epochs {
        let on_err = diverged(epoch);
        let mut tape = Tape::new();
        let vars = model
            .params()
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect::<Result<Vec<_>>>()
            .map_err(&on_err)?;
        let (total, data_loss, logits) =
            objective(&mut tape, &model, &train.ctx, &train.batch, vars.clone()).map_err(&on_err)?;
        let loss_value = tape.value(data_loss)?.get(0, 0);
        if !loss_value.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let train_metrics = metrics::compute(tape.value(logits)?, &train.batch.labels, &train.batch.mask, loss_value)?;
        let val_metrics = match &val {
            Some(v) => Some(v.score(&model).map_err(&on_err)?),
            None => None,
        };

        let chosen = val_metrics.as_ref().unwrap_or(&train_metrics);
        let score = chosen.selection_score(&dataset.labels);
        let improved = match &best {
            None => true,
            Some((s, l, _, _)) => score > *s || (score == *s && chosen.loss < *l),
        };
        if improved {
            best = Some((score, chosen.loss, epoch, model.params().clone()));
        }
        history.push(EpochRecord {
            epoch,
            train: train_metrics,
            val: val_metrics,
        });

        let best_epoch = best.as_ref().map_or(0, |b| b.2);
        if epoch == config.epochs || epoch - best_epoch >= config.patience.max(1) {
            break;
        }

        let mut grads = tape.backward(total).map_err(&on_err)?;
        let grads: Vec<Matrix> = vars
            .iter()
            .zip(model.params().iter())
            .map(|(&v, p)| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Matrix::zeros(p.value.rows(), p.value.cols()))
            })
            .collect();
        adam_step(model.params_mut(), &grads, &mut adam, config.lr).map_err(&on_err)?;
    }

    let (_, _, best_epoch, params) = best.expect("at least one epoch is recorded");
    *model.params_mut() = params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}
