//! Newton–Raphson AC power flow in polar coordinates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{build_ybus, BusKind, CMatrix, GridError, NetworkModel, Sequence};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("no convergence after {iterations} iterations (mismatch {mismatch:.3e} pu)")]
    NoConvergence { iterations: usize, mismatch: f64 },
    #[error("singular Jacobian at iteration {0}")]
    SingularJacobian(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub v_mag: Vec<f64>,
    pub v_ang: Vec<f64>,
    pub p_inj: Vec<f64>,
    pub q_inj: Vec<f64>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.v_mag
            .iter()
            .zip(&self.v_ang)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    /// Golden-file CSV: `bus_id,v_mag,v_ang_rad`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bus_id,v_mag,v_ang_rad\n");
        for (i, (m, a)) in self.v_mag.iter().zip(&self.v_ang).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, m, a));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial (v_mag, v_ang); flat start when absent.
    pub warm_start: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, warm_start: None }
    }
}

/// Index bookkeeping for the reduced Newton system.
#[derive(Debug, Clone)]
pub struct PowerFlowProblem {
    pub ybus: CMatrix,
    /// Non-slack buses; their angles are unknowns.
    pub pvpq: Vec<usize>,
    /// PQ buses; their magnitudes are unknowns.
    pub pq: Vec<usize>,
    pub slack: usize,
}

impl PowerFlowProblem {
    pub fn new(net: &NetworkModel) -> Result<Self, PowerFlowError> {
        let ybus = build_ybus(net, Sequence::Positive)?;
        let pvpq = (0..net.n_buses()).filter(|&i| net.buses[i].kind != BusKind::Slack).collect();
        let pq = (0..net.n_buses()).filter(|&i| net.buses[i].kind == BusKind::Pq).collect();
        Ok(Self { ybus, pvpq, pq, slack: net.slack_index() })
    }

    pub fn unknowns(&self) -> usize {
        self.pvpq.len() + self.pq.len()
    }

    /// Complex power injections S = V ⊙ conj(Y V).
    pub fn computed_injections(&self, v_mag: &[f64], v_ang: &[f64]) -> Vec<Complex64> {
        let v: Vec<Complex64> =
            v_mag.iter().zip(v_ang).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
        let n = v.len();
        (0..n)
            .map(|i| {
                let current: Complex64 = (0..n).map(|j| self.ybus[(i, j)] * v[j]).sum();
                v[i] * current.conj()
            })
            .collect()
    }

    /// Reduced mismatch vector `[ΔP(pvpq); ΔQ(pq)]`.
    pub fn mismatch(&self, injections: &[Complex64], v_mag: &[f64], v_ang: &[f64]) -> DVector<f64> {
        let s = self.computed_injections(v_mag, v_ang);
        let mut f = DVector::zeros(self.unknowns());
        for (k, &i) in self.pvpq.iter().enumerate() {
            f[k] = injections[i].re - s[i].re;
        }
        let off = self.pvpq.len();
        for (k, &i) in self.pq.iter().enumerate() {
            f[off + k] = injections[i].im - s[i].im;
        }
        f
    }

    /// Analytic Jacobian of computed `[P(pvpq); Q(pq)]` with respect to
    /// `[θ(pvpq); |V|(pq)]`.
    pub fn jacobian(&self, v_mag: &[f64], v_ang: &[f64]) -> DMatrix<f64> {
        let s = self.computed_injections(v_mag, v_ang);
        let n = v_mag.len();
        // Full dense partials, then select rows/columns.
        let mut dp_dth = DMatrix::zeros(n, n);
        let mut dp_dv = DMatrix::zeros(n, n);
        let mut dq_dth = DMatrix::zeros(n, n);
        let mut dq_dv = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let y = self.ybus[(i, j)];
                let (g, b) = (y.re, y.im);
                if i == j {
                    let vi = v_mag[i];
                    dp_dth[(i, i)] = -s[i].im - b * vi * vi;
                    dp_dv[(i, i)] = s[i].re / vi + g * vi;
                    dq_dth[(i, i)] = s[i].re - g * vi * vi;
                    dq_dv[(i, i)] = s[i].im / vi - b * vi;
                } else {
                    let th = v_ang[i] - v_ang[j];
                    let (sn, cs) = th.sin_cos();
                    let vv = v_mag[i] * v_mag[j];
                    dp_dth[(i, j)] = vv * (g * sn - b * cs);
                    dp_dv[(i, j)] = v_mag[i] * (g * cs + b * sn);
                    dq_dth[(i, j)] = -vv * (g * cs + b * sn);
                    dq_dv[(i, j)] = v_mag[i] * (g * sn - b * cs);
                }
            }
        }
        let m = self.unknowns();
        let off = self.pvpq.len();
        let mut jac = DMatrix::zeros(m, m);
        for (r, &i) in self.pvpq.iter().enumerate() {
            for (c, &j) in self.pvpq.iter().enumerate() {
                jac[(r, c)] = dp_dth[(i, j)];
            }
            for (c, &j) in self.pq.iter().enumerate() {
                jac[(r, off + c)] = dp_dv[(i, j)];
            }
        }
        for (r, &i) in self.pq.iter().enumerate() {
            for (c, &j) in self.pvpq.iter().enumerate() {
                jac[(off + r, c)] = dq_dth[(i, j)];
            }
            for (c, &j) in self.pq.iter().enumerate() {
                jac[(off + r, off + c)] = dq_dv[(i, j)];
            }
        }
        jac
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), PowerFlowError> {
    if expected != got {
        return Err(PowerFlowError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Per-bus mismatch `scheduled − computed`. Quantities left free by the bus
/// kind (slack P and Q, PV Q) are reported as zero.
pub fn residual(
    net: &NetworkModel,
    injections: &[Complex64],
    v_mag: &[f64],
    v_ang: &[f64],
) -> Result<Vec<Complex64>, PowerFlowError> {
    let n = net.n_buses();
    check_len(n, injections.len())?;
    check_len(n, v_mag.len())?;
    check_len(n, v_ang.len())?;
    let problem = PowerFlowProblem::new(net)?;
    let s = problem.computed_injections(v_mag, v_ang);
    Ok(net
        .buses
        .iter()
        .enumerate()
        .map(|(i, bus)| {
            let d = injections[i] - s[i];
            match bus.kind {
                BusKind::Slack => Complex64::new(0.0, 0.0),
                BusKind::Pv => Complex64::new(d.re, 0.0),
                BusKind::Pq => d,
            }
        })
        .collect())
}

pub fn solve(
    net: &NetworkModel,
    injections: &[Complex64],
    tol: f64,
    max_iter: usize,
) -> Result<PowerFlowSolution, PowerFlowError> {
    solve_with(net, injections, &SolveOptions { tol, max_iter, warm_start: None })
}

pub fn solve_with(
    net: &NetworkModel,
    injections: &[Complex64],
    opts: &SolveOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let n = net.n_buses();
    check_len(n, injections.len())?;
    let problem = PowerFlowProblem::new(net)?;

    let (mut v_mag, mut v_ang) = match &opts.warm_start {
        Some((m, a)) => {
            check_len(n, m.len())?;
            check_len(n, a.len())?;
            (m.clone(), a.clone())
        }
        None => (vec![1.0; n], vec![0.0; n]),
    };
    for (i, bus) in net.buses.iter().enumerate() {
        if let (BusKind::Slack | BusKind::Pv, Some(v)) = (bus.kind, bus.v_setpoint) {
            v_mag[i] = v;
        }
    }
    v_ang[problem.slack] = 0.0;

    let off = problem.pvpq.len();
    let mut iterations = 0;
    let mut f = problem.mismatch(injections, &v_mag, &v_ang);
    let mut norm = f.amax();
    while norm > opts.tol {
        if iterations == opts.max_iter {
            return Err(PowerFlowError::NoConvergence { iterations, mismatch: norm });
        }
        iterations += 1;
        let jac = problem.jacobian(&v_mag, &v_ang);
        let dx = jac
            .lu()
            .solve(&f)
            .filter(|dx| dx.iter().all(|v| v.is_finite()))
            .ok_or(PowerFlowError::SingularJacobian(iterations))?;
        for (k, &i) in problem.pvpq.iter().enumerate() {
            v_ang[i] += dx[k];
        }
        for (k, &i) in problem.pq.iter().enumerate() {
            v_mag[i] += dx[off + k];
        }
        f = problem.mismatch(injections, &v_mag, &v_ang);
        norm = f.amax();
        if !norm.is_finite() {
            return Err(PowerFlowError::NoConvergence { iterations, mismatch: norm });
        }
    }
    if v_mag.iter().any(|&v| v <= 0.0) {
        return Err(PowerFlowError::NoConvergence { iterations, mismatch: norm });
    }

    let s = problem.computed_injections(&v_mag, &v_ang);
    Ok(PowerFlowSolution {
        p_inj: s.iter().map(|c| c.re).collect(),
        q_inj: s.iter().map(|c| c.im).collect(),
        v_mag,
        v_ang,
        iterations,
        max_mismatch: norm,
    })
}
