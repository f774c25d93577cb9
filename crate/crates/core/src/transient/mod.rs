//! Quasi-static phasor simulation of the grid under fluctuations and
//! faults, sampled like a PMU.

mod fluctuation;
mod pmu;
mod sim;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, Impedance, NetworkModel};
use crate::powerflow::PowerFlowError;

pub use fluctuation::{draw_fluctuation, FluctuationBounds, FluctuationPlan};
pub use pmu::{read_pmu_csv, write_pmu_csv, write_series, ScenarioRecord};
pub use sim::{simulate, simulate_with, simulate_with_trace, SimOptions, SimTrace};

/// PMU reporting interval in seconds.
pub const SAMPLE_DT: f64 = 0.04;
/// Samples per run; 100 × 40 ms covers the 4 s horizon.
pub const SAMPLES: usize = 100;
pub const HORIZON: f64 = 4.0;

/// Time stamp of PMU sample `k`.
pub fn sample_time(k: usize) -> f64 {
    k as f64 * SAMPLE_DT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    None,
    #[serde(rename = "three_phase")]
    ThreePhaseBus,
    BranchTrip,
    #[serde(rename = "ll")]
    LineLine,
    #[serde(rename = "lg")]
    LineGround,
}

impl FaultKind {
    pub fn is_bus_fault(self) -> bool {
        matches!(self, Self::ThreePhaseBus | Self::LineLine | Self::LineGround)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ThreePhaseBus => "three_phase",
            Self::BranchTrip => "branch_trip",
            Self::LineLine => "ll",
            Self::LineGround => "lg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => Self::None,
            "three_phase" | "3ph" | "3phi" => Self::ThreePhaseBus,
            "branch_trip" | "trip" => Self::BranchTrip,
            "ll" => Self::LineLine,
            "lg" => Self::LineGround,
            _ => return None,
        })
    }
}

/// One disturbance script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub kind: FaultKind,
    pub bus: Option<usize>,
    /// Zero-based index into `NetworkModel::branches`.
    pub branch: Option<usize>,
    pub t_apply: f64,
    pub t_clear: f64,
    pub zf: Impedance,
}

impl FaultScenario {
    pub fn none() -> Self {
        Self { kind: FaultKind::None, bus: None, branch: None, t_apply: 0.0, t_clear: 0.0, zf: Impedance::new(0.0, 0.0) }
    }

    pub fn bus_fault(kind: FaultKind, bus: usize, t_apply: f64, t_clear: f64, zf: Complex64) -> Self {
        Self { kind, bus: Some(bus), branch: None, t_apply, t_clear, zf: Impedance::new(zf.re, zf.im) }
    }

    pub fn branch_trip(branch: usize, t_apply: f64, t_clear: f64) -> Self {
        Self {
            kind: FaultKind::BranchTrip,
            bus: None,
            branch: Some(branch),
            t_apply,
            t_clear,
            zf: Impedance::new(0.0, 0.0),
        }
    }

    pub fn zf(&self) -> Complex64 {
        self.zf.to_complex()
    }

    pub fn validate(&self, net: &NetworkModel) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !self.zf().is_finite() {
            return bad("fault impedance is not finite".into());
        }
        if self.kind == FaultKind::None {
            if self.bus.is_some() || self.branch.is_some() {
                return bad("a no-fault scenario carries no location".into());
            }
            return Ok(());
        }
        if !(0.0 < self.t_apply && self.t_apply < self.t_clear && self.t_clear <= HORIZON) {
            return bad(format!(
                "fault times must satisfy 0 < t_apply < t_clear <= {HORIZON}; got {} / {}",
                self.t_apply, self.t_clear
            ));
        }
        if self.kind == FaultKind::BranchTrip {
            match (self.bus, self.branch) {
                (None, Some(k)) if k < net.branches.len() && net.branches[k].in_service => Ok(()),
                _ => bad("branch trip needs one in-service branch and no bus".into()),
            }
        } else {
            match (self.bus, self.branch) {
                (Some(b), None) if (1..=net.n_buses()).contains(&b) => Ok(()),
                _ => bad(format!("{} fault needs one existing bus and no branch", self.kind.name())),
            }
        }
    }
}

/// Per-bus voltage magnitude and angle at the PMU rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PmuSeries {
    pub dt: f64,
    /// steps × buses, per-unit.
    pub v_mag: Array2<f64>,
    /// steps × buses, radians.
    pub v_ang: Array2<f64>,
    pub scenario: FaultScenario,
    pub seed: u64,
}

impl PmuSeries {
    pub fn steps(&self) -> usize {
        self.v_mag.nrows()
    }

    pub fn n_buses(&self) -> usize {
        self.v_mag.ncols()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("pre-fault power flow failed: {0}")]
    PreFaultDivergence(PowerFlowError),
    #[error("numerical blow-up at t = {t:.3} s")]
    NumericalBlowup { t: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no feasible fluctuation plan after {0} draws")]
    InfeasiblePlan(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("PMU file error: {0}")]
    Io(String),
}

/// Per-bus max over time of |v_mag(t) − v_mag(0)|.
pub fn max_voltage_deviation(series: &PmuSeries) -> Vec<f64> {
    let first = series.v_mag.row(0);
    series
        .v_mag
        .columns()
        .into_iter()
        .zip(first.iter())
        .map(|(col, &v0)| col.iter().fold(0.0_f64, |m, &v| m.max((v - v0).abs())))
        .collect()
}
