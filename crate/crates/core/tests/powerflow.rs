mod common;

use gridfault::grid::NetworkModel;
use gridfault::powerflow::{residual, solve, PowerFlowProblem, DEFAULT_MAX_ITER};

#[test]
fn two_bus_matches_closed_form_and_grid_search() {
    let (p, x) = (0.5, 0.1);
    let net = common::two_bus_pf(p);
    let sol = solve(&net, &net.scheduled_injections(), 1e-10, DEFAULT_MAX_ITER).unwrap();
    let theta = -(2.0 * p * x).asin() / 2.0;
    assert!((sol.v_ang[1] - theta).abs() < 1e-6);
    assert!((sol.v_mag[1] - theta.cos()).abs() < 1e-6);
    let (v_gs, th_gs) = common::two_bus_grid_search(p, x);
    assert!((sol.v_mag[1] - v_gs).abs() < 1e-6, "{} vs {v_gs}", sol.v_mag[1]);
    assert!((sol.v_ang[1] - th_gs).abs() < 1e-6);
    let r = residual(&net, &net.scheduled_injections(), &sol.v_mag, &sol.v_ang).unwrap();
    assert!(r.iter().all(|c| c.norm() < 1e-8));
}

#[test]
fn ref23_converges_quickly() {
    let net = NetworkModel::ref23();
    let sol = solve(&net, &net.scheduled_injections(), 1e-8, 10).unwrap();
    assert!(sol.iterations <= 10);
    assert!(sol.max_mismatch <= 1e-8);
    let r = residual(&net, &net.scheduled_injections(), &sol.v_mag, &sol.v_ang).unwrap();
    assert!(r.iter().all(|c| c.norm() <= 1e-8));
}

#[test]
fn jacobian_matches_finite_differences() {
    for net in [NetworkModel::ref23(), common::ring(6, 9)] {
        let pf = PowerFlowProblem::new(&net).unwrap();
        let n = net.n_buses();
        let v_mag: Vec<f64> = (0..n).map(|i| 1.0 + 0.03 * ((i * 5) as f64).sin()).collect();
        let v_ang: Vec<f64> = (0..n).map(|i| 0.1 * ((i * 3) as f64).cos()).collect();
        let zero = vec![num_complex::Complex64::new(0.0, 0.0); n];
        let j = pf.jacobian(&v_mag, &v_ang);
        let h = 1e-6;
        // Mismatch against zero injections is minus the computed power.
        let computed = |m: &[f64], a: &[f64]| -pf.mismatch(&zero, m, a);
        for (col, &bus) in pf.pvpq.iter().enumerate() {
            let (mut up, mut dn) = (v_ang.clone(), v_ang.clone());
            up[bus] += h;
            dn[bus] -= h;
            let d = (computed(&v_mag, &up) - computed(&v_mag, &dn)) / (2.0 * h);
            for row in 0..pf.unknowns() {
                assert!((j[(row, col)] - d[row]).abs() < 1e-5, "dθ col {col} row {row}");
            }
        }
        for (k, &bus) in pf.pq.iter().enumerate() {
            let col = pf.pvpq.len() + k;
            let (mut up, mut dn) = (v_mag.clone(), v_mag.clone());
            up[bus] += h;
            dn[bus] -= h;
            let d = (computed(&up, &v_ang) - computed(&dn, &v_ang)) / (2.0 * h);
            for row in 0..pf.unknowns() {
                assert!((j[(row, col)] - d[row]).abs() < 1e-5, "dV col {col} row {row}");
            }
        }
    }
}
