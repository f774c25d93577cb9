//! Per-unit network representation, admittance assembly and
//! sequence-network reduction.

mod network;
mod sequence;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

pub use network::{
    Admittance, Branch, Bus, BusKind, Generator, Impedance, Load, NetworkModel, REF23_JSON,
};
pub use sequence::{
    augmented_ybus, equivalent_fault_shunt, load_admittances, thevenin_at_bus, SequenceImpedances,
};

pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("network parse error: {0}")]
    Parse(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("singular network: {0}")]
    SingularNetwork(String),
    #[error("fault kind {0:?} is not representable as a shunt")]
    UnsupportedKind(crate::transient::FaultKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sequence {
    Positive,
    /// Branch-wise identical to `Positive`; machines differ (see `augmented_ybus`).
    Negative,
    Zero,
}

/// Bus admittance matrix from in-service branches and bus shunts.
pub fn build_ybus(net: &NetworkModel, sequence: Sequence) -> Result<CMatrix, GridError> {
    let n = net.n_buses();
    let mut y = CMatrix::zeros(n, n);
    for (k, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let z = match sequence {
            Sequence::Positive | Sequence::Negative => br.z1(),
            Sequence::Zero => br.z0(),
        };
        if z.norm() == 0.0 {
            return Err(GridError::SingularNetwork(format!(
                "branch {k} has zero impedance"
            )));
        }
        let yb = z.inv();
        let (i, j) = (net.index_of(br.from_bus), net.index_of(br.to_bus));
        y[(i, i)] += yb;
        y[(j, j)] += yb;
        y[(i, j)] -= yb;
        y[(j, i)] -= yb;
    }
    for (i, bus) in net.buses.iter().enumerate() {
        y[(i, i)] += bus.shunt_admittance.to_complex();
    }
    Ok(y)
}
