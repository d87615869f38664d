use serde::{Deserialize, Serialize};

use super::metrics::{confusion, metrics, MetricsReport};
use super::ttest::{paired_t_test, TTestResult};
use crate::config::{ModelConfig, TrainConfig};
use crate::dataprep::{stratified_folds, stratified_split};
use crate::ensemble::{evaluate, train, Example, WetModel};
use crate::error::{Result, WetError};
use crate::numerics::{derive_seed, ActivationKind, LossKind, OptimizerKind};

/// The varied hyperparameter of one case study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AxisValues {
    Dropout(Vec<f64>),
    Activation(Vec<ActivationKind>),
    BatchSize(Vec<usize>),
    FcWidth(Vec<usize>),
    Optimizer(Vec<OptimizerKind>),
    Loss(Vec<LossKind>),
}

impl AxisValues {
    pub fn name(&self) -> &'static str {
        match self {
            AxisValues::Dropout(_) => "dropout",
            AxisValues::Activation(_) => "activation",
            AxisValues::BatchSize(_) => "batch_size",
            AxisValues::FcWidth(_) => "fc_width",
            AxisValues::Optimizer(_) => "optimizer",
            AxisValues::Loss(_) => "loss",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AxisValues::Dropout(v) => v.len(),
            AxisValues::Activation(v) => v.len(),
            AxisValues::BatchSize(v) => v.len(),
            AxisValues::FcWidth(v) => v.len(),
            AxisValues::Optimizer(v) => v.len(),
            AxisValues::Loss(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies value `i` to copies of the base configs; returns its label.
    pub fn apply(&self, i: usize, m: &mut ModelConfig, t: &mut TrainConfig) -> String {
        match self {
            AxisValues::Dropout(v) => {
                m.dropout = v[i];
                format!("{}", v[i])
            }
            AxisValues::Activation(v) => {
                m.activation = v[i];
                v[i].to_string()
            }
            AxisValues::BatchSize(v) => {
                t.batch_size = v[i];
                v[i].to_string()
            }
            AxisValues::FcWidth(v) => {
                m.fc_width = v[i];
                v[i].to_string()
            }
            AxisValues::Optimizer(v) => {
                t.optimizer = v[i];
                v[i].to_string()
            }
            AxisValues::Loss(v) => {
                t.loss = v[i];
                v[i].to_string()
            }
        }
    }
}

/// One-axis-at-a-time sweep; each case study varies a single axis around
/// the base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub case_studies: Vec<AxisValues>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        AblationGrid {
            case_studies: vec![
                AxisValues::Dropout(vec![0.5, 0.6, 0.7, 0.8]),
                AxisValues::Activation(ActivationKind::all().to_vec()),
                AxisValues::BatchSize(vec![8, 32, 64, 128]),
                AxisValues::FcWidth(vec![64, 128, 256, 512]),
                AxisValues::Optimizer(OptimizerKind::all().to_vec()),
                AxisValues::Loss(LossKind::all().to_vec()),
            ],
        }
    }
}

impl AblationGrid {
    pub fn cell_count(&self) -> usize {
        self.case_studies.iter().map(AxisValues::len).sum()
    }
}

/// Data for training and scoring a configuration.
#[derive(Debug, Clone)]
pub struct DataSplits {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub param_count: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub val_accuracy: f64,
    pub test: MetricsReport,
}

/// Holds out a stratified validation fraction of `examples`.
pub fn validation_split(
    examples: &[Example],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<Example>, Vec<Example>)> {
    let labels: Vec<bool> = examples.iter().map(|e| e.label >= 0.5).collect();
    let (a, b) = stratified_split(&labels, 1.0 - fraction, seed)?;
    Ok((
        a.iter().map(|&i| examples[i].clone()).collect(),
        b.iter().map(|&i| examples[i].clone()).collect(),
    ))
}

/// Hard predictions of a model over a labelled set, scored.
pub fn score(model: &WetModel, data: &[Example], threshold: f64) -> Result<MetricsReport> {
    let mut preds = Vec::with_capacity(data.len());
    for ex in data {
        preds.push(model.predict(&ex.input)?.probability >= threshold);
    }
    let truth: Vec<bool> = data.iter().map(|e| e.label >= 0.5).collect();
    metrics(&confusion(&preds, &truth)?)
}

pub fn train_and_score(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    data: &DataSplits,
) -> Result<CellResult> {
    let mut model = WetModel::new(model_cfg.clone(), train_cfg.weights_mode, train_cfg.seed)?;
    let report = train(&mut model, &data.train, &data.val, train_cfg)?;
    let val = evaluate(&model, &data.val, train_cfg.loss, train_cfg.threshold)?;
    Ok(CellResult {
        param_count: model.param_count(),
        best_epoch: report.best_epoch,
        epochs_run: report.epochs.len(),
        val_accuracy: val.accuracy,
        test: score(&model, &data.test, train_cfg.threshold)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub case_study: usize,
    pub axis: String,
    pub value: String,
    pub param_count: usize,
    pub test_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub best_epoch: Option<usize>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

/// Trains and scores every cell. A failing cell is recorded and the sweep
/// continues. Each cell trains from a seed derived from `seed` and the
/// cell's axis and value.
pub fn ablate(
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    grid: &AblationGrid,
    data: &DataSplits,
    seed: u64,
) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(grid.cell_count());
    for (c, axis) in grid.case_studies.iter().enumerate() {
        if axis.is_empty() {
            return Err(WetError::invalid(format!(
                "case study {} ({}) has no values",
                c + 1,
                axis.name()
            )));
        }
        for i in 0..axis.len() {
            let (mut m, mut t) = (base_model.clone(), base_train.clone());
            let value = axis.apply(i, &mut m, &mut t);
            t.seed = derive_seed(seed, &format!("ablation/{}/{value}", axis.name()));
            let param_count = WetModel::new(m.clone(), t.weights_mode, t.seed)
                .map(|w| w.param_count())
                .unwrap_or(0);
            let row = match train_and_score(&m, &t, data) {
                Ok(r) => AblationRow {
                    case_study: c + 1,
                    axis: axis.name().into(),
                    value,
                    param_count: r.param_count,
                    test_accuracy: Some(r.test.accuracy),
                    val_accuracy: Some(r.val_accuracy),
                    best_epoch: Some(r.best_epoch),
                    status: "ok".into(),
                },
                Err(e) => {
                    log::warn!("ablation cell {}={value} failed: {e}", axis.name());
                    AblationRow {
                        case_study: c + 1,
                        axis: axis.name().into(),
                        value,
                        param_count,
                        test_accuracy: None,
                        val_accuracy: None,
                        best_epoch: None,
                        status: format!("failed: {e}"),
                    }
                }
            };
            log::info!("ablation {}={}: {}", row.axis, row.value, row.status);
            rows.push(row);
        }
    }
    Ok(AblationReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scores_a: Vec<f64>,
    pub scores_b: Vec<f64>,
    pub t_test: TTestResult,
}

/// Per-fold test accuracy of one configuration under stratified k-fold.
pub fn cross_validate(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    examples: &[Example],
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let labels: Vec<bool> = examples.iter().map(|e| e.label >= 0.5).collect();
    let folds = stratified_folds(&labels, k, seed)?;
    let mut scores = Vec::with_capacity(k);
    for (f, held) in folds.iter().enumerate() {
        let test: Vec<Example> = held.iter().map(|&i| examples[i].clone()).collect();
        let rest: Vec<Example> = (0..examples.len())
            .filter(|i| held.binary_search(i).is_err())
            .map(|i| examples[i].clone())
            .collect();
        let (train, val) = validation_split(
            &rest,
            train_cfg.val_fraction,
            derive_seed(seed, &format!("fold{f}")),
        )?;
        let result = train_and_score(model_cfg, train_cfg, &DataSplits { train, val, test })?;
        scores.push(result.test.accuracy);
    }
    Ok(scores)
}

/// Paired comparison of two configurations over the same folds.
pub fn compare_configs(
    a: (&ModelConfig, &TrainConfig),
    b: (&ModelConfig, &TrainConfig),
    examples: &[Example],
    k: usize,
    seed: u64,
) -> Result<Comparison> {
    let scores_a = cross_validate(a.0, a.1, examples, k, seed)?;
    let scores_b = cross_validate(b.0, b.1, examples, k, seed)?;
    let t_test = paired_t_test(&scores_a, &scores_b)?;
    Ok(Comparison {
        scores_a,
        scores_b,
        t_test,
    })
}
