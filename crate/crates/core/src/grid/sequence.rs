use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{build_ybus, CMatrix, GridError, NetworkModel, Sequence};
use crate::transient::FaultKind;

/// Thevenin impedances seen from a fault bus in each sequence network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceImpedances {
    pub z1: Complex64,
    pub z2: Complex64,
    pub z0: Complex64,
}

/// Constant-impedance equivalent of each bus load at the given voltages.
pub fn load_admittances(net: &NetworkModel, prefault_v: &[Complex64]) -> Vec<Complex64> {
    net.bus_loads()
        .into_iter()
        .zip(prefault_v)
        .map(|(s, v)| s.conj() / v.norm_sqr())
        .collect()
}

/// Sequence Ybus with loads folded in as shunts and machines tied to the
/// reference through their sequence reactance (internal EMF shorted).
pub fn augmented_ybus(
    net: &NetworkModel,
    sequence: Sequence,
    prefault_v: &[Complex64],
) -> Result<CMatrix, GridError> {
    let mut y = build_ybus(net, sequence)?;
    if prefault_v.len() == net.n_buses() {
        for (i, yl) in load_admittances(net, prefault_v).into_iter().enumerate() {
            y[(i, i)] += yl;
        }
    }
    for g in &net.generators {
        let x = match sequence {
            Sequence::Positive => Some(g.xd_prime),
            Sequence::Negative => Some(g.x2()),
            Sequence::Zero => g.x0,
        };
        if let Some(x) = x {
            let i = net.index_of(g.bus);
            y[(i, i)] += Complex64::new(0.0, x).inv();
        }
    }
    Ok(y)
}

fn driving_point(y: CMatrix, idx: usize, label: &str) -> Result<Complex64, GridError> {
    let n = y.nrows();
    let mut rhs = nalgebra::DVector::from_element(n, Complex64::new(0.0, 0.0));
    rhs[idx] = Complex64::new(1.0, 0.0);
    let z = y
        .lu()
        .solve(&rhs)
        .map(|col| col[idx])
        .filter(|z| z.is_finite() && z.norm() < 1e12 && z.norm() > 0.0)
        .ok_or_else(|| {
            GridError::SingularNetwork(format!("{label} network has no path to reference"))
        })?;
    Ok(z)
}

/// Driving-point impedances at `bus` in the positive, negative and zero
/// sequence networks. Loads are converted to constant admittances at
/// `prefault_v`; pass an empty slice to ignore them.
pub fn thevenin_at_bus(
    net: &NetworkModel,
    bus: usize,
    prefault_v: &[Complex64],
) -> Result<SequenceImpedances, GridError> {
    if bus < 1 || bus > net.n_buses() {
        return Err(GridError::Invalid(format!("bus {bus} does not exist")));
    }
    let idx = net.index_of(bus);
    let z1 = driving_point(augmented_ybus(net, Sequence::Positive, prefault_v)?, idx, "positive-sequence")?;
    let z2 = driving_point(augmented_ybus(net, Sequence::Negative, prefault_v)?, idx, "negative-sequence")?;
    let z0 = driving_point(augmented_ybus(net, Sequence::Zero, prefault_v)?, idx, "zero-sequence")?;
    Ok(SequenceImpedances { z1, z2, z0 })
}

/// Shunt impedance that, placed at the fault bus of the positive-sequence
/// network, reproduces the positive-sequence fault current.
pub fn equivalent_fault_shunt(
    kind: FaultKind,
    seq: &SequenceImpedances,
    zf: Complex64,
) -> Result<Complex64, GridError> {
    match kind {
        FaultKind::ThreePhaseBus => Ok(zf),
        FaultKind::LineLine => Ok(seq.z2 + zf),
        FaultKind::LineGround => Ok(seq.z2 + seq.z0 + zf * 3.0),
        other => Err(GridError::UnsupportedKind(other)),
    }
}
