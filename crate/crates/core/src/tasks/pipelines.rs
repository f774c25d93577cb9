use serde::{Deserialize, Serialize};

use super::{
    evaluate, prepare, seq_samples, side_ids, svm_matrix, vec_samples, EvalReport, ForecasterModel, LstmClassifier,
    ModelKind, Side, TaskError, TaskModel,
};
use crate::dataset::{Channels, Dataset, NormMode, Normalizer, Task};
use crate::neuro::{hinge_train_traced, train_loop, SvmModel, Trace, TrainConfig};

/// Regularization strength of the fault-type SVM.
pub const SVM_C_REG: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultTypeVariant {
    Svm,
    Lstm,
}

impl FaultTypeVariant {
    /// The SVM reads magnitude and angle; the LSTM reads magnitude only.
    pub fn default_channels(self) -> Channels {
        match self {
            FaultTypeVariant::Svm => Channels::MagnitudeAngle,
            FaultTypeVariant::Lstm => Channels::Magnitude,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TaskModel,
    pub trace: Trace,
    /// Metrics on the test split.
    pub report: EvalReport,
}

/// Forget-gate bias for the task LSTMs. The fault dip sits 60 to 85 steps
/// before the final hidden state; with a bias of 1 the memory decays too
/// fast for the gradient to find it, and 3 still leaves the 24-way locator
/// on a long plateau.
pub const TASK_FORGET_BIAS: f64 = 5.0;

fn lstm_config(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        grad_clip: Some(5.0),
        forget_bias: TASK_FORGET_BIAS,
        ..TrainConfig::adam(steps, 32, seed)
    }
}

/// Training settings used when the caller does not override them.
pub fn default_config(task: Task, variant: Option<FaultTypeVariant>, seed: u64) -> TrainConfig {
    match (task, variant) {
        (Task::Forecast, _) => TrainConfig::adam(2000, 32, seed),
        (Task::FaultType, Some(FaultTypeVariant::Svm)) => TrainConfig::sgd(20000, 16, seed),
        (Task::FaultType, _) => lstm_config(800, seed),
        (Task::Locate3Phi | Task::LocateLL, _) => lstm_config(2000, seed),
    }
}

fn require_task(ds: &Dataset, allowed: &[Task], what: &str) -> Result<(), TaskError> {
    if !allowed.contains(&ds.manifest.task) {
        return Err(TaskError::TaskMismatch(format!("{what} needs a {:?} dataset, got {}", allowed, ds.manifest.task.name())));
    }
    Ok(())
}

/// The manifest's normalizer when present, otherwise one fitted on the
/// train split. Either way it must describe exactly the train split.
fn train_normalizer(ds: &Dataset) -> Result<Normalizer, TaskError> {
    if let Some(n) = &ds.manifest.normalization {
        super::check_normalizer(ds, n)?;
        return Ok(n.clone());
    }
    let task = ds.manifest.task;
    let train = side_ids(ds, Side::Train)?;
    let feats = train
        .iter()
        .map(|&i| crate::dataset::featurize(&ds.examples[i].series, task))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<_> = feats.iter().collect();
    let mode = if task == Task::Forecast { NormMode::PerFeature } else { NormMode::PerChannel };
    Ok(Normalizer::fit(&refs, train, mode)?)
}

fn non_empty<T>(v: Vec<T>, what: &str) -> Result<Vec<T>, TaskError> {
    if v.is_empty() {
        return Err(TaskError::TooFewExamples(format!("no {what} examples")));
    }
    Ok(v)
}

fn finish(ds: &Dataset, model: TaskModel, trace: Trace) -> Result<TrainOutcome, TaskError> {
    let report = evaluate(&model, ds, Side::Test)?;
    Ok(TrainOutcome { model, trace, report })
}

/// Pre-fault magnitudes → per-bus maximum deviation, trained on MSE.
pub fn train_forecaster(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, TaskError> {
    require_task(ds, &[Task::Forecast], "the forecaster")?;
    let norm = train_normalizer(ds)?;
    let samples = non_empty(vec_samples(&prepare(ds, Side::Train, &norm)?), "training")?;
    let mut net = ForecasterModel::new(ds.manifest.n_buses, cfg.init_scale, cfg.seed);
    let trace = train_loop(&mut net, &samples, cfg)?;
    let model = TaskModel {
        task: Task::Forecast,
        channels: Channels::Magnitude,
        normalizer: norm,
        config: cfg.clone(),
        kind: ModelKind::Forecaster(net),
    };
    finish(ds, model, trace)
}

pub fn train_fault_type(ds: &Dataset, variant: FaultTypeVariant, cfg: &TrainConfig) -> Result<TrainOutcome, TaskError> {
    train_fault_type_with(ds, variant, variant.default_channels(), cfg)
}

/// Binary LL/LG classifier on the LL and LG runs of a fault-type dataset.
pub fn train_fault_type_with(
    ds: &Dataset,
    variant: FaultTypeVariant,
    channels: Channels,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TaskError> {
    require_task(ds, &[Task::FaultType], "the fault-type classifier")?;
    let norm = train_normalizer(ds)?;
    let train = non_empty(prepare(ds, Side::Train, &norm)?, "LL/LG training")?;
    let (kind, trace) = match variant {
        FaultTypeVariant::Svm => {
            let (x, y) = svm_matrix(&train, channels);
            let init = SvmModel::new(x.ncols(), SVM_C_REG)?;
            let (m, trace) = hinge_train_traced(init, x.view(), &y, cfg)?;
            (ModelKind::Svm(m), trace)
        }
        FaultTypeVariant::Lstm => {
            let samples = seq_samples(&train, channels);
            let input = samples[0].x.ncols();
            let mut m = LstmClassifier::fault_type(input, cfg);
            let trace = train_loop(&mut m, &samples, cfg)?;
            (ModelKind::Lstm(m), trace)
        }
    };
    let model = TaskModel { task: Task::FaultType, channels, normalizer: norm, config: cfg.clone(), kind };
    finish(ds, model, trace)
}

pub fn train_locator(ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, TaskError> {
    train_locator_with(ds, Channels::Magnitude, cfg)
}

/// (N + 1)-way bus classifier; class 0 is the no-fault pool.
pub fn train_locator_with(ds: &Dataset, channels: Channels, cfg: &TrainConfig) -> Result<TrainOutcome, TaskError> {
    require_task(ds, &[Task::Locate3Phi, Task::LocateLL], "the locator")?;
    let norm = train_normalizer(ds)?;
    let samples = non_empty(seq_samples(&prepare(ds, Side::Train, &norm)?, channels), "training")?;
    let input = samples[0].x.ncols();
    let mut m = LstmClassifier::locator(input, ds.manifest.n_buses, cfg);
    let trace = train_loop(&mut m, &samples, cfg)?;
    let model =
        TaskModel { task: ds.manifest.task, channels, normalizer: norm, config: cfg.clone(), kind: ModelKind::Lstm(m) };
    finish(ds, model, trace)
}
