//! End-to-end pipelines: deviation forecaster, LL/LG fault-type classifier
//! (SVM or LSTM) and fault locator, plus evaluation.

mod models;
mod pipelines;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    fault_class, featurize, ids_fingerprint, Channels, Dataset, DatasetError, LabeledExample, Normalizer, Task,
};
use crate::neuro::{
    load_checkpoint, save_checkpoint, Activation, CheckpointHeader, DenseLayer, LstmCell, NeuroError, Params,
    SvmModel, TrainConfig,
};

pub use models::{
    FaultTypeLstm, ForecasterModel, LocatorModel, LstmClassifier, SeqSample, VecSample, FAULT_TYPE_HEAD,
    FORECASTER_HIDDEN, LOCATOR_HEAD, LSTM_HIDDEN,
};
pub use pipelines::{
    default_config, train_fault_type, train_fault_type_with, train_forecaster, train_locator, train_locator_with,
    FaultTypeVariant, TrainOutcome, SVM_C_REG, TASK_FORGET_BIAS,
};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("task mismatch: {0}")]
    TaskMismatch(String),
    #[error("too few examples: {0}")]
    TooFewExamples(String),
    #[error("normalization leakage: {0}")]
    Leakage(String),
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Neuro(#[from] NeuroError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Forecaster(ForecasterModel),
    Svm(SvmModel),
    Lstm(LstmClassifier),
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Forecaster(_) => "forecaster",
            ModelKind::Svm(_) => "svm",
            ModelKind::Lstm(_) => "lstm",
        }
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let dense = |l: &DenseLayer| vec![vec![l.outputs(), l.inputs()], vec![l.outputs()]];
        match self {
            ModelKind::Forecaster(m) => m.layers.iter().flat_map(dense).collect(),
            ModelKind::Svm(m) => vec![vec![m.w.len()], vec![1]],
            ModelKind::Lstm(m) => {
                let c = &m.cell;
                let mut v = vec![vec![4 * c.hidden, c.input + c.hidden], vec![4 * c.hidden]];
                v.extend(dense(&m.fc));
                v.extend(dense(&m.out));
                v
            }
        }
    }
}

/// A trained model with the feature pipeline it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel {
    pub task: Task,
    pub channels: Channels,
    pub normalizer: Normalizer,
    pub config: TrainConfig,
    pub kind: ModelKind,
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    task: Task,
    channels: Channels,
    normalizer: Normalizer,
    c_reg: Option<f64>,
}

impl TaskModel {
    pub fn save(&self, path: &Path) -> Result<(), TaskError> {
        let meta = ModelMeta {
            task: self.task,
            channels: self.channels,
            normalizer: self.normalizer.clone(),
            c_reg: match &self.kind {
                ModelKind::Svm(m) => Some(m.c_reg),
                _ => None,
            },
        };
        let header = CheckpointHeader {
            architecture: self.kind.name().to_string(),
            shapes: self.kind.shapes(),
            config: serde_json::to_value(&self.config).map_err(|e| TaskError::Model(e.to_string()))?,
            seed: self.config.seed,
            meta: serde_json::to_value(&meta).map_err(|e| TaskError::Model(e.to_string()))?,
        };
        match &self.kind {
            ModelKind::Forecaster(m) => save_checkpoint(path, &header, m)?,
            ModelKind::Svm(m) => save_checkpoint(path, &header, m)?,
            ModelKind::Lstm(m) => save_checkpoint(path, &header, m)?,
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TaskError> {
        let (header, values) = load_checkpoint(path)?;
        let bad = |m: &str| TaskError::Model(format!("{}: {m}", path.display()));
        let meta: ModelMeta = serde_json::from_value(header.meta.clone()).map_err(|e| bad(&e.to_string()))?;
        let shapes = &header.shapes;
        if shapes.iter().any(|s| s.is_empty() || s.len() > 2) {
            return Err(bad("tensor shapes must be 1-D or 2-D"));
        }
        let config: TrainConfig = serde_json::from_value(header.config.clone()).map_err(|e| bad(&e.to_string()))?;
        let dense = |s: &[usize], act| DenseLayer {
            w: Array2::zeros((s[0], s.get(1).copied().unwrap_or(0))),
            b: Array1::zeros(s[0]),
            activation: act,
        };
        let mut kind = match (header.architecture.as_str(), shapes.len()) {
            ("forecaster", 6) => ModelKind::Forecaster(ForecasterModel {
                layers: [
                    dense(&shapes[0], Activation::Tanh),
                    dense(&shapes[2], Activation::Tanh),
                    dense(&shapes[4], Activation::Identity),
                ],
            }),
            ("svm", 2) => ModelKind::Svm(SvmModel {
                w: Array1::zeros(shapes[0][0]),
                b: 0.0,
                c_reg: meta.c_reg.ok_or_else(|| bad("missing c_reg"))?,
            }),
            ("lstm", 6) => {
                let hidden = shapes[0][0] / 4;
                ModelKind::Lstm(LstmClassifier {
                    cell: LstmCell {
                        w: Array2::zeros((4 * hidden, shapes[0].get(1).copied().unwrap_or(0))),
                        b: Array1::zeros(4 * hidden),
                        input: shapes[0].get(1).copied().unwrap_or(0).saturating_sub(hidden),
                        hidden,
                    },
                    fc: dense(&shapes[2], Activation::Relu),
                    out: dense(&shapes[4], Activation::Identity),
                })
            }
            (arch, _) => return Err(bad(&format!("unknown architecture `{arch}`"))),
        };
        match &mut kind {
            ModelKind::Forecaster(m) => m.set_flat(&values)?,
            ModelKind::Svm(m) => m.set_flat(&values)?,
            ModelKind::Lstm(m) => m.set_flat(&values)?,
        }
        Ok(Self { task: meta.task, channels: meta.channels, normalizer: meta.normalizer, config, kind })
    }
}

/// Test-set metrics. Classification fields are empty for regression and
/// vice versa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub model: String,
    pub side: Side,
    pub test_size: usize,
    pub accuracy: Option<f64>,
    /// Mean absolute error over every (example, bus) entry.
    pub mean_l1: Option<f64>,
    /// Mean squared error over every (example, bus) entry.
    pub mean_l2: Option<f64>,
    pub class_names: Vec<String>,
    /// `confusion[actual][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Recall per actual class; `None` when the class is absent.
    pub per_class_recall: Vec<Option<f64>>,
    /// Recall of the no-fault class (locator tasks).
    pub no_fault_recall: Option<f64>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Rows are actual classes, columns predicted classes.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("actual");
        for n in &self.class_names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            out.push_str(name);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// Confusion matrix, accuracy and per-class recall.
pub fn confusion_metrics(truth: &[usize], pred: &[usize], classes: usize) -> (Vec<Vec<usize>>, f64, Vec<Option<f64>>) {
    let mut m = vec![vec![0usize; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        m[t][p] += 1;
    }
    let hits: usize = (0..classes).map(|c| m[c][c]).sum();
    let recall = m
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let n: usize = row.iter().sum();
            (n > 0).then(|| row[c] as f64 / n as f64)
        })
        .collect();
    (m, hits as f64 / truth.len().max(1) as f64, recall)
}

/// Mean and sample standard deviation of repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl SeedSummary {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n.max(1.0);
        let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { values, mean, std: var.sqrt() }
    }
}

pub fn class_names(task: Task, n_buses: usize) -> Vec<String> {
    match task {
        Task::FaultType => vec!["ll".into(), "lg".into()],
        Task::Locate3Phi | Task::LocateLL => {
            std::iter::once("none".to_string()).chain((1..=n_buses).map(|b| format!("bus{b}"))).collect()
        }
        Task::Forecast => Vec::new(),
    }
}

pub(crate) fn side_ids(ds: &Dataset, side: Side) -> Result<&[usize], TaskError> {
    let split = ds.manifest.split.as_ref().ok_or(DatasetError::NotSplit)?;
    Ok(match side {
        Side::Train => &split.train,
        Side::Test => &split.test,
    })
}

/// Statistics must come from exactly the train split of `ds`.
pub fn check_normalizer(ds: &Dataset, norm: &Normalizer) -> Result<(), TaskError> {
    let train = side_ids(ds, Side::Train)?;
    if norm.fitted_on != ids_fingerprint(train) {
        return Err(TaskError::Leakage(
            "normalizer statistics were not fitted on this dataset's train split".into(),
        ));
    }
    Ok(())
}

/// Featurized, normalized examples on one side of the split. The fault-type
/// task keeps only LL and LG runs.
pub fn prepare(ds: &Dataset, side: Side, norm: &Normalizer) -> Result<Vec<LabeledExample>, TaskError> {
    check_normalizer(ds, norm)?;
    let task = ds.manifest.task;
    let mut out = Vec::new();
    for &id in side_ids(ds, side)? {
        let ex = featurize(&ds.examples[id].series, task)?;
        if task == Task::FaultType && ex.label.class() == Some(fault_class::NONE) {
            continue;
        }
        out.push(norm.normalize(&ex));
    }
    Ok(out)
}

pub fn seq_samples(examples: &[LabeledExample], channels: Channels) -> Vec<SeqSample> {
    examples
        .iter()
        .map(|e| SeqSample { x: e.sequence(channels), label: e.label.class().expect("classification label") })
        .collect()
}

pub fn vec_samples(examples: &[LabeledExample]) -> Vec<VecSample> {
    examples
        .iter()
        .map(|e| VecSample {
            x: Array1::from_vec(e.flat(Channels::Magnitude)),
            y: Array1::from_vec(e.label.vector().expect("regression label").to_vec()),
        })
        .collect()
}

/// Flattened rows with labels LL → +1, LG → −1.
pub fn svm_matrix(examples: &[LabeledExample], channels: Channels) -> (Array2<f64>, Vec<f64>) {
    let rows: Vec<Vec<f64>> = examples.iter().map(|e| e.flat(channels)).collect();
    let dim = rows.first().map_or(0, |r| r.len());
    let x = Array2::from_shape_vec((rows.len(), dim), rows.concat()).expect("rows share a length");
    let y = examples
        .iter()
        .map(|e| if e.label.class() == Some(fault_class::LL) { 1.0 } else { -1.0 })
        .collect();
    (x, y)
}

fn svm_class(m: &SvmModel, x: ndarray::ArrayView1<f64>) -> usize {
    if m.decision(x) >= 0.0 {
        fault_class::LL
    } else {
        fault_class::LG
    }
}

/// Forward-only evaluation of `model` on one side of `ds`'s split.
pub fn evaluate(model: &TaskModel, ds: &Dataset, side: Side) -> Result<EvalReport, TaskError> {
    let task = ds.manifest.task;
    if model.task != task {
        return Err(TaskError::TaskMismatch(format!(
            "model trained for {} cannot evaluate a {} dataset",
            model.task.name(),
            task.name()
        )));
    }
    let examples = prepare(ds, side, &model.normalizer)?;
    if examples.is_empty() {
        return Err(TaskError::TooFewExamples(format!("the {side:?} split is empty")));
    }
    let mut report = EvalReport {
        task,
        model: model.kind.name().to_string(),
        side,
        test_size: examples.len(),
        accuracy: None,
        mean_l1: None,
        mean_l2: None,
        class_names: class_names(task, ds.manifest.n_buses),
        confusion: Vec::new(),
        per_class_recall: Vec::new(),
        no_fault_recall: None,
    };
    let (truth, pred): (Vec<usize>, Vec<usize>) = match &model.kind {
        ModelKind::Forecaster(m) => {
            let samples = vec_samples(&examples);
            let (mut l1, mut l2, mut n) = (0.0, 0.0, 0usize);
            for chunk in samples.chunks(crate::neuro::EVAL_CHUNK) {
                let x = Array2::from_shape_fn((chunk.len(), chunk[0].x.len()), |(k, i)| chunk[k].x[i]);
                let y = m.predict(&x)?;
                for (k, s) in chunk.iter().enumerate() {
                    for (p, t) in y.row(k).iter().zip(&s.y) {
                        l1 += (p - t).abs();
                        l2 += (p - t).powi(2);
                        n += 1;
                    }
                }
            }
            report.mean_l1 = Some(l1 / n as f64);
            report.mean_l2 = Some(l2 / n as f64);
            return Ok(report);
        }
        ModelKind::Svm(m) => {
            let (x, _) = svm_matrix(&examples, model.channels);
            let pred = x.rows().into_iter().map(|r| svm_class(m, r)).collect();
            (examples.iter().map(|e| e.label.class().expect("class")).collect(), pred)
        }
        ModelKind::Lstm(m) => {
            let samples = seq_samples(&examples, model.channels);
            let mut pred = Vec::with_capacity(samples.len());
            for chunk in samples.chunks(crate::neuro::EVAL_CHUNK) {
                let refs: Vec<&SeqSample> = chunk.iter().collect();
                pred.extend(m.predict(&refs)?);
            }
            (samples.iter().map(|s| s.label).collect(), pred)
        }
    };
    let classes = report.class_names.len();
    let (confusion, accuracy, recall) = confusion_metrics(&truth, &pred, classes);
    report.accuracy = Some(accuracy);
    report.confusion = confusion;
    if matches!(task, Task::Locate3Phi | Task::LocateLL) {
        report.no_fault_recall = recall[0];
    }
    report.per_class_recall = recall;
    Ok(report)
}

/// Mean cross-entropy or MSE over one side, as the training loop computes it.
pub fn side_loss(model: &TaskModel, ds: &Dataset, side: Side) -> Result<(f64, Option<f64>), TaskError> {
    let examples = prepare(ds, side, &model.normalizer)?;
    Ok(match &model.kind {
        ModelKind::Forecaster(m) => crate::neuro::evaluate_all(m, &vec_samples(&examples))?,
        ModelKind::Lstm(m) => crate::neuro::evaluate_all(m, &seq_samples(&examples, model.channels))?,
        ModelKind::Svm(m) => {
            let (x, y) = svm_matrix(&examples, model.channels);
            let acc = x.rows().into_iter().zip(&y).filter(|(r, &yk)| m.predict(*r) == yk).count() as f64;
            (m.objective(x.view(), &y), Some(acc / y.len().max(1) as f64))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_predictor_on_balanced_binary_set() {
        let truth = vec![0, 1, 0, 1, 1, 0];
        let (m, acc, recall) = confusion_metrics(&truth, &[0; 6], 2);
        assert_eq!(acc, 0.5);
        assert_eq!(m, vec![vec![3, 0], vec![3, 0]]);
        assert_eq!(recall, vec![Some(1.0), Some(0.0)]);
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let truth = vec![0, 1, 2, 2, 1, 0, 0];
        let pred = vec![0, 2, 2, 1, 1, 0, 1];
        let (m, acc, recall) = confusion_metrics(&truth, &pred, 4);
        for c in 0..4 {
            assert_eq!(m[c].iter().sum::<usize>(), truth.iter().filter(|&&t| t == c).count());
        }
        let trace: usize = (0..4).map(|c| m[c][c]).sum();
        assert_eq!(acc, trace as f64 / 7.0);
        assert_eq!(recall[3], None);
    }

    #[test]
    fn seed_summary() {
        let s = SeedSummary::new(vec![1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }

    #[test]
    fn class_name_lists() {
        assert_eq!(class_names(Task::Locate3Phi, 3), vec!["none", "bus1", "bus2", "bus3"]);
        assert_eq!(class_names(Task::FaultType, 3).len(), 2);
    }
}
