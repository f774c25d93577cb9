use std::f64::consts::PI;

use nalgebra::{DVector, Dyn, LU};
use ndarray::Array2;
use num_complex::Complex64;

use super::{sample_time, FaultKind, FaultScenario, FluctuationPlan, PmuSeries, SimError, SAMPLES, SAMPLE_DT};
use crate::grid::{
    equivalent_fault_shunt, load_admittances, thevenin_at_bus, CMatrix, NetworkModel, Sequence,
};
use crate::powerflow::{self, PowerFlowSolution};

/// Shunts below this magnitude are treated as a bolted short.
const BOLTED: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// RK4 step in seconds.
    pub dt_internal: f64,
    pub blowup_limit: f64,
    /// Power-flow tolerance for the initial operating point.
    pub pf_tol: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { dt_internal: 0.005, blowup_limit: 10.0, pf_tol: 1e-10 }
    }
}

/// A PMU series plus internal machine trajectories at the sample instants.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub series: PmuSeries,
    /// samples × generators, per-unit speed deviation.
    pub speed_dev: Array2<f64>,
    pub prefault: PowerFlowSolution,
}

pub fn simulate(
    net: &NetworkModel,
    scenario: &FaultScenario,
    plan: &FluctuationPlan,
    seed: u64,
) -> Result<PmuSeries, SimError> {
    simulate_with(net, scenario, plan, seed, &SimOptions::default())
}

pub fn simulate_with(
    net: &NetworkModel,
    scenario: &FaultScenario,
    plan: &FluctuationPlan,
    seed: u64,
    opts: &SimOptions,
) -> Result<PmuSeries, SimError> {
    simulate_with_trace(net, scenario, plan, seed, opts).map(|t| t.series)
}

#[derive(Debug, Clone, Copy)]
struct Machine {
    bus: usize,
    y_int: Complex64,
    e_mag: f64,
    pm: f64,
    two_h: f64,
    damping: f64,
    fluct_gain: f64,
}

/// Network topology/parameter configuration in force between events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Config {
    fault_on: bool,
    branch_open: bool,
    fluctuated: bool,
}

impl Config {
    fn key(self) -> usize {
        self.fault_on as usize | (self.branch_open as usize) << 1 | (self.fluctuated as usize) << 2
    }
}

struct Factored {
    lu: LU<Complex64, Dyn, Dyn>,
    clamp: Option<usize>,
}

struct Simulator<'a> {
    net: &'a NetworkModel,
    scenario: &'a FaultScenario,
    plan: &'a FluctuationPlan,
    machines: Vec<Machine>,
    y_load: Vec<Complex64>,
    fault_shunt: Option<Complex64>,
    cache: [Option<Factored>; 8],
    omega_s: f64,
}

impl<'a> Simulator<'a> {
    fn config_at(&self, t: f64) -> Config {
        let s = self.scenario;
        Config {
            fault_on: s.kind.is_bus_fault() && t >= s.t_apply && t < s.t_clear,
            branch_open: s.kind == FaultKind::BranchTrip && t >= s.t_apply,
            fluctuated: !self.plan.is_identity() && t >= self.plan.t_step,
        }
    }

    fn build(&self, cfg: Config) -> Result<Factored, SimError> {
        let n = self.net.n_buses();
        let mut y: CMatrix = if cfg.branch_open {
            let mut tripped = self.net.clone();
            tripped.branches[self.scenario.branch.expect("validated")].in_service = false;
            crate::grid::build_ybus(&tripped, Sequence::Positive)?
        } else {
            crate::grid::build_ybus(self.net, Sequence::Positive)?
        };
        for i in 0..n {
            let yl = self.y_load[i];
            y[(i, i)] += if cfg.fluctuated {
                Complex64::new(yl.re * (1.0 + self.plan.load_p[i]), yl.im * (1.0 + self.plan.load_q[i]))
            } else {
                yl
            };
        }
        for m in &self.machines {
            y[(m.bus, m.bus)] += m.y_int;
        }
        let mut clamp = None;
        if cfg.fault_on {
            let b = self.net.index_of(self.scenario.bus.expect("validated"));
            let zs = self.fault_shunt.expect("bus fault has a shunt");
            if zs.norm() < BOLTED {
                for j in 0..n {
                    y[(b, j)] = Complex64::new(0.0, 0.0);
                }
                y[(b, b)] = Complex64::new(1.0, 0.0);
                clamp = Some(b);
            } else {
                y[(b, b)] += zs.inv();
            }
        }
        Ok(Factored { lu: y.lu(), clamp })
    }

    fn factored(&mut self, cfg: Config) -> Result<&Factored, SimError> {
        let k = cfg.key();
        if self.cache[k].is_none() {
            self.cache[k] = Some(self.build(cfg)?);
        }
        Ok(self.cache[k].as_ref().expect("just filled"))
    }

    fn emfs(&self, delta: &[f64]) -> Vec<Complex64> {
        self.machines.iter().zip(delta).map(|(m, &d)| Complex64::from_polar(m.e_mag, d)).collect()
    }

    /// Bus voltages for the given rotor angles.
    fn network(&mut self, cfg: Config, delta: &[f64], t: f64) -> Result<DVector<Complex64>, SimError> {
        let n = self.net.n_buses();
        let e = self.emfs(delta);
        let mut rhs = DVector::from_element(n, Complex64::new(0.0, 0.0));
        for (m, e) in self.machines.iter().zip(&e) {
            rhs[m.bus] += e * m.y_int;
        }
        let f = self.factored(cfg)?;
        if let Some(b) = f.clamp {
            rhs[b] = Complex64::new(0.0, 0.0);
        }
        let v = f.lu.solve(&rhs).ok_or(SimError::NumericalBlowup { t })?;
        Ok(v)
    }

    fn electrical_power(&self, delta: &[f64], v: &DVector<Complex64>) -> Vec<f64> {
        self.machines
            .iter()
            .zip(self.emfs(delta))
            .map(|(m, e)| (e * ((e - v[m.bus]) * m.y_int).conj()).re)
            .collect()
    }

    fn derivatives(
        &mut self,
        cfg: Config,
        delta: &[f64],
        dw: &[f64],
        t: f64,
    ) -> Result<(Vec<f64>, Vec<f64>), SimError> {
        let v = self.network(cfg, delta, t)?;
        let pe = self.electrical_power(delta, &v);
        let d_delta = dw.iter().map(|w| self.omega_s * w).collect();
        let d_dw = self
            .machines
            .iter()
            .zip(pe)
            .zip(dw)
            .map(|((m, pe), w)| {
                let pm = if cfg.fluctuated { m.pm * m.fluct_gain } else { m.pm };
                (pm - pe - m.damping * w) / m.two_h
            })
            .collect();
        Ok((d_delta, d_dw))
    }

    fn rk4(&mut self, cfg: Config, delta: &mut [f64], dw: &mut [f64], t: f64, h: f64) -> Result<(), SimError> {
        let axpy = |x: &[f64], k: &[f64], s: f64| x.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
        let (k1d, k1w) = self.derivatives(cfg, delta, dw, t)?;
        let (k2d, k2w) = self.derivatives(cfg, &axpy(delta, &k1d, h / 2.0), &axpy(dw, &k1w, h / 2.0), t)?;
        let (k3d, k3w) = self.derivatives(cfg, &axpy(delta, &k2d, h / 2.0), &axpy(dw, &k2w, h / 2.0), t)?;
        let (k4d, k4w) = self.derivatives(cfg, &axpy(delta, &k3d, h), &axpy(dw, &k3w, h), t)?;
        for i in 0..delta.len() {
            delta[i] += h / 6.0 * (k1d[i] + 2.0 * k2d[i] + 2.0 * k3d[i] + k4d[i]);
            dw[i] += h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
        }
        Ok(())
    }

    fn center_of_inertia(&self, delta: &[f64]) -> f64 {
        let (num, den) = self
            .machines
            .iter()
            .zip(delta)
            .fold((0.0, 0.0), |(n, d), (m, &a)| (n + m.two_h * a, d + m.two_h));
        num / den
    }
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Runs one scenario. Steps:
/// initialize machines from the power flow, integrate the swing equations
/// with RK4 against the algebraic network, switch network configuration at
/// fault and fluctuation instants, and sample bus phasors every 40 ms.
///
/// Angles are reported relative to the drift of the centre of inertia, so
/// the t = 0 sample equals the power-flow angles.
pub fn simulate_with_trace(
    net: &NetworkModel,
    scenario: &FaultScenario,
    plan: &FluctuationPlan,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimTrace, SimError> {
    scenario.validate(net)?;
    let n = net.n_buses();
    if plan.gen_p.len() != n || plan.load_p.len() != n || plan.load_q.len() != n {
        return Err(SimError::InvalidScenario(format!("fluctuation plan does not cover {n} buses")));
    }
    if !plan.is_feasible() {
        return Err(SimError::InvalidScenario("fluctuation plan makes a load negative".into()));
    }

    let pf = powerflow::solve(net, &net.scheduled_injections(), opts.pf_tol, powerflow::DEFAULT_MAX_ITER)
        .map_err(SimError::PreFaultDivergence)?;
    let v0 = pf.voltages();
    let y_load = load_admittances(net, &v0);

    // Machine current = net current leaving the bus into network and load.
    let ybus = crate::grid::build_ybus(net, Sequence::Positive)?;
    let mut machines = Vec::with_capacity(net.generators.len());
    let mut delta = Vec::with_capacity(net.generators.len());
    for g in &net.generators {
        let i = net.index_of(g.bus);
        let current: Complex64 = (0..n).map(|j| ybus[(i, j)] * v0[j]).sum::<Complex64>() + y_load[i] * v0[i];
        let z_int = Complex64::new(0.0, g.xd_prime);
        let e = v0[i] + z_int * current;
        delta.push(e.arg());
        machines.push(Machine {
            bus: i,
            y_int: z_int.inv(),
            e_mag: e.norm(),
            pm: 0.0,
            two_h: 2.0 * g.inertia_h,
            damping: g.damping_d,
            fluct_gain: 1.0 + plan.gen_p[i],
        });
    }

    let fault_shunt = if scenario.kind.is_bus_fault() {
        let bus = scenario.bus.expect("validated");
        let seq = match scenario.kind {
            FaultKind::ThreePhaseBus => None,
            _ => Some(thevenin_at_bus(net, bus, &v0)?),
        };
        let seq = seq.unwrap_or(crate::grid::SequenceImpedances {
            z1: Complex64::new(0.0, 0.0),
            z2: Complex64::new(0.0, 0.0),
            z0: Complex64::new(0.0, 0.0),
        });
        Some(equivalent_fault_shunt(scenario.kind, &seq, scenario.zf())?)
    } else {
        None
    };

    let mut sim = Simulator {
        net,
        scenario,
        plan,
        machines,
        y_load,
        fault_shunt,
        cache: Default::default(),
        omega_s: 2.0 * PI * net.base_freq,
    };

    // Mechanical power equals the initial electrical power exactly, so an
    // undisturbed run sits at a fixed point.
    let cfg0 = sim.config_at(0.0);
    let v_init = sim.network(cfg0, &delta, 0.0)?;
    let pe0 = sim.electrical_power(&delta, &v_init);
    for (m, pe) in sim.machines.iter_mut().zip(pe0) {
        m.pm = pe;
    }
    let coi0 = sim.center_of_inertia(&delta);

    let mut dw = vec![0.0; sim.machines.len()];
    let mut v_mag = Array2::zeros((SAMPLES, n));
    let mut v_ang = Array2::zeros((SAMPLES, n));
    let mut speed_dev = Array2::zeros((SAMPLES, sim.machines.len()));

    let t_end = sample_time(SAMPLES - 1);
    let mut events: Vec<f64> = Vec::new();
    if scenario.kind != FaultKind::None {
        events.extend([scenario.t_apply, scenario.t_clear]);
    }
    if !plan.is_identity() {
        events.push(plan.t_step);
    }
    let mut breakpoints: Vec<f64> = (1..SAMPLES).map(sample_time).collect();
    breakpoints.extend(events.into_iter().filter(|&t| t > 0.0 && t < t_end));
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut record = |sim: &mut Simulator, k: usize, delta: &[f64], dw: &[f64]| -> Result<(), SimError> {
        let t = sample_time(k);
        let v = sim.network(sim.config_at(t), delta, t)?;
        let shift = sim.center_of_inertia(delta) - coi0;
        for i in 0..n {
            let mag = v[i].norm();
            if !mag.is_finite() || mag > opts.blowup_limit {
                return Err(SimError::NumericalBlowup { t });
            }
            v_mag[[k, i]] = mag;
            v_ang[[k, i]] = if shift == 0.0 { v[i].arg() } else { wrap_angle(v[i].arg() - shift) };
        }
        for (g, w) in dw.iter().enumerate() {
            speed_dev[[k, g]] = *w;
        }
        Ok(())
    };
    record(&mut sim, 0, &delta, &dw)?;

    let mut t = 0.0;
    let mut next_sample = 1;
    for &b in &breakpoints {
        let cfg = sim.config_at(t);
        let span = b - t;
        let steps = ((span / opts.dt_internal) - 1e-9).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for s in 0..steps {
            sim.rk4(cfg, &mut delta, &mut dw, t + s as f64 * h, h)?;
        }
        if delta.iter().chain(&dw).any(|x| !x.is_finite()) {
            return Err(SimError::NumericalBlowup { t: b });
        }
        t = b;
        if next_sample < SAMPLES && (t - sample_time(next_sample)).abs() < 1e-12 {
            record(&mut sim, next_sample, &delta, &dw)?;
            next_sample += 1;
        }
    }
    debug_assert_eq!(next_sample, SAMPLES);

    Ok(SimTrace {
        series: PmuSeries { dt: SAMPLE_DT, v_mag, v_ang, scenario: scenario.clone(), seed },
        speed_dev,
        prefault: pf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_stays_in_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn undisturbed_run_is_constant() {
        let net = NetworkModel::ref23();
        let s = simulate(&net, &FaultScenario::none(), &FluctuationPlan::none(23), 0).unwrap();
        for k in 0..SAMPLES {
            for i in 0..23 {
                assert!((s.v_mag[[k, i]] - s.v_mag[[0, i]]).abs() < 1e-9);
            }
        }
    }
}
