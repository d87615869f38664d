use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelInput, WetModel};
use super::weights::{derive_weights, EnsembleWeights};
use crate::config::{TrainConfig, WeightsMode};
use crate::error::{Result, WetError};
use crate::numerics::{derive_seed, Graph, LossKind, Optimizer, Tensor, Var};

/// A labelled model input; `label` is 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: ModelInput,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub branch_val_errors: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Standalone validation error of each branch at the best epoch.
    pub branch_val_errors: Vec<f64>,
    pub final_weights: EnsembleWeights,
}

/// Best-epoch state: val loss, epoch, parameters, weights, branch errors.
type Snapshot = (f64, usize, Vec<Tensor>, EnsembleWeights, Vec<f64>);

/// Scores of a model over a labelled set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    /// Mean training objective.
    pub loss: f64,
    pub accuracy: f64,
    pub branch_errors: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Mean of the per-branch losses, plus the loss of the combined output
/// when the ensemble weights are learned.
fn objective(
    g: &mut Graph,
    model: &WetModel,
    kind: LossKind,
    probs: &[Var],
    combined: Var,
    label: f64,
) -> Result<Var> {
    let target = Tensor::new(&[1, 1], vec![label])?;
    let mut terms = Vec::with_capacity(probs.len() + 1);
    for &p in probs {
        terms.push(g.loss(kind, p, &target)?);
    }
    if model.learned.is_some() {
        terms.push(g.loss(kind, combined, &target)?);
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    g.scale(total, 1.0 / terms.len() as f64)
}

pub fn evaluate(
    model: &WetModel,
    data: &[Example],
    loss: LossKind,
    threshold: f64,
) -> Result<EvalSummary> {
    if data.is_empty() {
        return Err(WetError::invalid("cannot evaluate on an empty set"));
    }
    let n = model.branch_count();
    let mut total = 0.0;
    let mut correct = 0usize;
    let mut branch_wrong = vec![0usize; n];
    let mut probabilities = Vec::with_capacity(data.len());
    for ex in data {
        let mut g = Graph::eval();
        let out = model.forward(&mut g, &ex.input, 0)?;
        let obj = objective(
            &mut g,
            model,
            loss,
            &out.branch_probs,
            out.combined,
            ex.label,
        )?;
        total += g.value(obj).item();
        let truth = ex.label >= 0.5;
        for (j, &p) in out.branch_probs.iter().enumerate() {
            if (g.value(p).item() >= threshold) != truth {
                branch_wrong[j] += 1;
            }
        }
        let p = g.value(out.combined).item().clamp(0.0, 1.0);
        if (p >= threshold) == truth {
            correct += 1;
        }
        probabilities.push(p);
    }
    let m = data.len() as f64;
    Ok(EvalSummary {
        loss: total / m,
        accuracy: correct as f64 / m,
        branch_errors: branch_wrong.iter().map(|&w| w as f64 / m).collect(),
        probabilities,
    })
}

fn diverged(epoch: usize, e: WetError) -> WetError {
    match e {
        WetError::Numeric { op, detail } => WetError::Diverged {
            epoch,
            detail: format!("{op}: {detail}"),
        },
        other => other,
    }
}

/// Mini-batch training with early stopping on validation loss. The
/// parameters and weights of the best epoch are restored at the end.
pub fn train(
    model: &mut WetModel,
    train_set: &[Example],
    val_set: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainingReport> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(WetError::invalid(
            "training and validation sets must be non-empty",
        ));
    }
    if model.weights.mode != cfg.weights_mode {
        return Err(WetError::invalid(format!(
            "model was built for {} weights but training asks for {}",
            model.weights.mode, cfg.weights_mode
        )));
    }
    let ids = model.param_ids();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let dropout_base = derive_seed(cfg.seed, "dropout");
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut epochs = Vec::new();
    let mut best: Option<Snapshot> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let mut step = 0u64;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grad();
            for &i in batch {
                let ex = &train_set[i];
                let mut g = Graph::new(true);
                let seed = dropout_base.wrapping_add(step);
                step += 1;
                let out = model
                    .forward(&mut g, &ex.input, seed)
                    .map_err(|e| diverged(epoch, e))?;
                let obj = objective(
                    &mut g,
                    model,
                    cfg.loss,
                    &out.branch_probs,
                    out.combined,
                    ex.label,
                )
                .map_err(|e| diverged(epoch, e))?;
                epoch_loss += g.value(obj).item();
                g.backward_into(obj, &mut model.store)
                    .map_err(|e| diverged(epoch, e))?;
            }
            model.store.scale_grads(1.0 / batch.len() as f64);
            optimizer.step(&mut model.store, &ids)?;
        }
        model.store.zero_grad();
        model.sync_weights();
        let train_loss = epoch_loss / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(WetError::Diverged {
                epoch,
                detail: "training loss is not finite".into(),
            });
        }

        let summary =
            evaluate(model, val_set, cfg.loss, cfg.threshold).map_err(|e| diverged(epoch, e))?;
        if cfg.weights_mode == WeightsMode::ValidationDerived {
            let w = derive_weights(&summary.branch_errors, cfg.temperature)?;
            model.set_weights(w)?;
        }
        // accuracy of the ensemble under the weights just set
        let val_accuracy = if cfg.weights_mode == WeightsMode::ValidationDerived {
            evaluate(model, val_set, cfg.loss, cfg.threshold)?.accuracy
        } else {
            summary.accuracy
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.5}, val loss {:.5}, val accuracy {val_accuracy:.4}",
            summary.loss
        );
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: summary.loss,
            val_accuracy,
            branch_val_errors: summary.branch_errors.clone(),
            weights: model.weights.a.clone(),
        });

        let improved = match &best {
            None => true,
            Some((loss, ..)) => summary.loss < loss - cfg.min_delta,
        };
        if improved {
            best = Some((
                summary.loss,
                epoch,
                model.store.snapshot(),
                model.weights.clone(),
                summary.branch_errors,
            ));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_val_loss, best_epoch, params, weights, branch_val_errors) =
        best.expect("at least one epoch ran");
    model.store.restore(&params);
    model.weights = weights;
    Ok(TrainingReport {
        config: cfg.clone(),
        epochs,
        best_epoch,
        best_val_loss,
        stopped_early,
        branch_val_errors,
        final_weights: model.weights.clone(),
    })
}
