//! Small networks and independent oracles shared by the integration and
//! acceptance tests.
#![allow(dead_code)]

use gridfault::grid::{Admittance, Branch, Bus, BusKind, Generator, Impedance, Load, NetworkModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bus(id: usize, kind: BusKind) -> Bus {
    let v_setpoint = (kind != BusKind::Pq).then_some(1.0);
    Bus { id, kind, v_setpoint, shunt_admittance: Admittance::default() }
}

fn gen(bus: usize, p_set: f64) -> Generator {
    Generator { bus, p_set, xd_prime: 0.25, inertia_h: 5.0, damping_d: 2.0, x2: None, x0: Some(0.1) }
}

/// Slack 1.0∠0 feeding a P-only load through j0.1.
pub fn two_bus_pf(p: f64) -> NetworkModel {
    NetworkModel {
        base_mva: 100.0,
        base_freq: 50.0,
        buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)],
        branches: vec![Branch { from_bus: 1, to_bus: 2, z1: Impedance::new(0.0, 0.1), z0: None, in_service: true }],
        generators: vec![gen(1, 0.0)],
        loads: vec![Load { bus: 2, p, q: 0.0 }],
    }
}

/// Two machines joined by one line, load at bus 2. Dynamically stable
/// under short faults at either bus.
pub fn two_bus_sim() -> NetworkModel {
    NetworkModel {
        base_mva: 100.0,
        base_freq: 50.0,
        buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::Pv)],
        branches: vec![Branch { from_bus: 1, to_bus: 2, z1: Impedance::new(0.01, 0.1), z0: None, in_service: true }],
        generators: vec![gen(1, 0.0), gen(2, 0.3)],
        loads: vec![Load { bus: 2, p: 0.6, q: 0.2 }],
    }
}

/// Ring of `n` buses plus one chord, machines at bus 1 (slack) and bus
/// `n/2 + 1` (PV), light loads elsewhere. Impedances drawn from `seed`.
pub fn ring(n: usize, seed: u64) -> NetworkModel {
    assert!(n >= 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pv = n / 2 + 1;
    let buses = (1..=n)
        .map(|i| {
            let kind = match i {
                1 => BusKind::Slack,
                _ if i == pv => BusKind::Pv,
                _ => BusKind::Pq,
            };
            Bus { shunt_admittance: Admittance { g: 0.0, b: rng.gen_range(0.0..0.02) }, ..bus(i, kind) }
        })
        .collect();
    let line = |a: usize, b: usize, rng: &mut ChaCha8Rng| Branch {
        from_bus: a,
        to_bus: b,
        z1: Impedance::new(rng.gen_range(0.005..0.02), rng.gen_range(0.05..0.15)),
        z0: None,
        in_service: true,
    };
    let mut branches: Vec<Branch> = (1..=n).map(|i| line(i, i % n + 1, &mut rng)).collect();
    branches.push(line(1, n / 2 + 1 + (n > 4) as usize, &mut rng));
    let loads = (2..=n)
        .filter(|&i| i != pv)
        .map(|i| Load { bus: i, p: rng.gen_range(0.1..0.3), q: rng.gen_range(0.0..0.1) })
        .collect();
    NetworkModel { base_mva: 100.0, base_freq: 50.0, buses, branches, generators: vec![gen(1, 0.0), gen(pv, 0.4)], loads }
}

/// Active and reactive power drawn at bus 2 of [`two_bus_pf`] for voltage
/// `v∠θ`, written out from the line equations.
pub fn two_bus_flow(v: f64, theta: f64, x: f64) -> (f64, f64) {
    let p = -v * theta.sin() / x;
    let q = (v * theta.cos() - v * v) / x;
    (p, q)
}

/// Zooming grid search for the bus-2 voltage that draws `(p, 0)`.
/// Independent of the Newton solver.
pub fn two_bus_grid_search(p: f64, x: f64) -> (f64, f64) {
    let (mut v, mut th) = (1.0, 0.0);
    let mut half = (0.5, 0.5);
    for _ in 0..60 {
        let mut best = (f64::INFINITY, v, th);
        for i in -10..=10 {
            for j in -10..=10 {
                let vi = v + half.0 * i as f64 / 10.0;
                let tj = th + half.1 * j as f64 / 10.0;
                let (pp, qq) = two_bus_flow(vi, tj, x);
                let err = (pp - p).powi(2) + qq.powi(2);
                if err < best.0 && vi > 0.5 {
                    best = (err, vi, tj);
                }
            }
        }
        (v, th) = (best.1, best.2);
        half = (half.0 * 0.5, half.1 * 0.5);
    }
    (v, th)
}

/// Dense complex matrix inverse by Gauss-Jordan with partial pivoting,
/// written independently of nalgebra.
pub fn invert(a: &[Vec<num_complex::Complex64>]) -> Vec<Vec<num_complex::Complex64>> {
    use num_complex::Complex64;
    let n = a.len();
    let mut m: Vec<Vec<Complex64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| Complex64::new((i == j) as u8 as f64, 0.0)));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm())).unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f.norm() != 0.0 {
                    for c in 0..2 * n {
                        let sub = f * m[col][c];
                        m[r][c] -= sub;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}
