//! Simulation campaigns turned into labelled, split, serialized datasets.

mod campaign;
mod features;
mod io;
mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::transient::{max_voltage_deviation, FaultKind, PmuSeries, ScenarioRecord, SimError};

pub use campaign::{derive_seed, generate, generate_campaign, CampaignConfig};
pub use features::{featurize, ids_fingerprint, Channels, LabeledExample, NormMode, Normalizer};
pub use io::{load_dataset, load_manifest, write_dataset};
pub use split::split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Forecast,
    FaultType,
    #[serde(rename = "locate_3phi")]
    Locate3Phi,
    #[serde(rename = "locate_ll")]
    LocateLL,
}

/// Class ids for the fault-type task. `NONE` marks the no-fault pool, which
/// the binary classifier never sees.
pub mod fault_class {
    pub const LL: usize = 0;
    pub const LG: usize = 1;
    pub const NONE: usize = 2;
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Forecast => "forecast",
            Task::FaultType => "fault_type",
            Task::Locate3Phi => "locate_3phi",
            Task::LocateLL => "locate_ll",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "forecast" => Task::Forecast,
            "fault_type" | "fault-type" => Task::FaultType,
            "locate_3phi" | "locate-3phi" => Task::Locate3Phi,
            "locate_ll" | "locate-ll" => Task::LocateLL,
            _ => return None,
        })
    }

    /// Fault kinds simulated at every bus for this task.
    pub fn fault_kinds(self) -> &'static [FaultKind] {
        match self {
            Task::Forecast => &[FaultKind::BranchTrip],
            Task::FaultType => &[FaultKind::LineLine, FaultKind::LineGround],
            Task::Locate3Phi => &[FaultKind::ThreePhaseBus],
            Task::LocateLL => &[FaultKind::LineLine],
        }
    }

    pub fn has_no_fault_pool(self) -> bool {
        self != Task::Forecast
    }

    pub fn is_classification(self) -> bool {
        self != Task::Forecast
    }

    /// Whether a scenario of `kind` belongs in this task's data.
    pub fn accepts(self, kind: FaultKind) -> bool {
        (kind == FaultKind::None && self.has_no_fault_pool()) || self.fault_kinds().contains(&kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(usize),
    Vector(Vec<f64>),
}

impl Label {
    pub fn class(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<&[f64]> {
        match self {
            Label::Vector(v) => Some(v),
            Label::Class(_) => None,
        }
    }
}

/// Label of a simulated run under `task`.
pub(crate) fn campaign_label(task: Task, series: &PmuSeries) -> Label {
    let sc = &series.scenario;
    match task {
        Task::Forecast => Label::Vector(max_voltage_deviation(series)),
        Task::FaultType => Label::Class(match sc.kind {
            FaultKind::LineLine => fault_class::LL,
            FaultKind::LineGround => fault_class::LG,
            _ => fault_class::NONE,
        }),
        Task::Locate3Phi | Task::LocateLL => Label::Class(sc.bus.unwrap_or(0)),
    }
}

/// One simulated run with its task label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: usize,
    pub series: PmuSeries,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train_fraction: f64,
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub task: Task,
    pub n_buses: usize,
    pub runs_per_bus: usize,
    pub seed: u64,
    pub network_hash: String,
    pub campaign: CampaignConfig,
    /// Examples per label, keyed by the label's display form.
    pub counts: BTreeMap<String, usize>,
    /// Stratification key per example: the class for classification tasks,
    /// the disturbed bus for forecasting.
    pub strata: Vec<usize>,
    pub scenarios: Vec<ScenarioRecord>,
    /// Diverged simulations that were re-drawn.
    pub redraws: usize,
    pub split: Option<Split>,
    pub normalization: Option<Normalizer>,
    /// SHA-256 over network hash, task, campaign settings and seeds.
    pub hash: String,
}

impl DatasetManifest {
    pub fn compute_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.network_hash.as_bytes());
        h.update(self.task.name().as_bytes());
        h.update(self.runs_per_bus.to_le_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(serde_json::to_vec(&self.campaign).expect("config serializes"));
        hex::encode(h.finalize())
    }

    pub fn verify_hash(&self) -> bool {
        self.hash == self.compute_hash()
    }

    pub fn total(&self) -> usize {
        self.scenarios.len()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn example(&self, id: usize) -> &Example {
        &self.examples[id]
    }

    pub fn train(&self) -> Result<Vec<&Example>, DatasetError> {
        let split = self.manifest.split.as_ref().ok_or(DatasetError::NotSplit)?;
        Ok(split.train.iter().map(|&i| &self.examples[i]).collect())
    }

    pub fn test(&self) -> Result<Vec<&Example>, DatasetError> {
        let split = self.manifest.split.as_ref().ok_or(DatasetError::NotSplit)?;
        Ok(split.test.iter().map(|&i| &self.examples[i]).collect())
    }

    /// Splits the dataset and fits the normalizer on the train side only.
    pub fn split_and_normalize(&mut self, train_fraction: f64, seed: u64) -> Result<(), DatasetError> {
        self.manifest = split(&self.manifest, train_fraction, seed)?;
        self.fit_normalizer()
    }

    /// Fits per-channel statistics for sequence tasks and per-feature
    /// statistics for forecasting, using train examples only.
    pub fn fit_normalizer(&mut self) -> Result<(), DatasetError> {
        let task = self.manifest.task;
        let split = self.manifest.split.as_ref().ok_or(DatasetError::NotSplit)?;
        let feats = split
            .train
            .iter()
            .map(|&i| featurize(&self.examples[i].series, task))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&LabeledExample> = feats.iter().collect();
        let mode = if task == Task::Forecast { NormMode::PerFeature } else { NormMode::PerChannel };
        self.manifest.normalization = Some(Normalizer::fit(&refs, &split.train, mode)?);
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("campaign infeasible: {diverged} of {total} simulations diverged")]
    CampaignInfeasible { diverged: usize, total: usize },
    #[error("too few examples: {0}")]
    TooFewExamples(String),
    #[error("task mismatch: {0}")]
    TaskMismatch(String),
    #[error("dataset has no train/test split")]
    NotSplit,
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}
