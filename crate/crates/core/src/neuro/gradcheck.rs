//! Central finite-difference checks of every hand-derived gradient.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{l1_loss, mse_loss, softmax_xent, Activation, DenseLayer, LstmCell, Params, SvmModel};

pub const FD_EPS: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor so that entries that are zero on both sides compare
/// by absolute error.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < REL_TOL
    }
}

/// Largest `|a − n| / max(|a|, |n|, floor)` over all entries.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// `(f(x + εe_i) − f(x − εe_i)) / 2ε` for every coordinate.
pub fn central_difference(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

fn normal_array2(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || scale * (2.0 * rng.gen::<f64>() - 1.0))
}

fn report(name: &str, pairs: &[(Vec<f64>, Vec<f64>)]) -> GradCheck {
    let entries = pairs.iter().map(|p| p.0.len()).sum();
    let max_rel_err = pairs.iter().map(|(a, n)| rel_error(a, n)).fold(0.0, f64::max);
    GradCheck { name: name.to_string(), entries, max_rel_err }
}

/// Dense layer under the probe loss `Σ r⊙y`; activation cycles with `seed`.
pub fn check_dense(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let act = [Activation::Tanh, Activation::Sigmoid, Activation::Relu, Activation::Identity][(seed % 4) as usize];
    let (inp, out, batch) = (rng.gen_range(2..7), rng.gen_range(2..7), rng.gen_range(1..5));
    let mut layer = DenseLayer::new(inp, out, act, 1.5, &mut rng);
    layer.b = Array1::from_shape_simple_fn(out, || 0.5 * (2.0 * rng.gen::<f64>() - 1.0));
    let x = normal_array2(&mut rng, (batch, inp), 1.0);
    let r = normal_array2(&mut rng, (batch, out), 1.0);
    let probe = |l: &DenseLayer, x: &Array2<f64>| (l.forward(x.view()).expect("shapes") * &r).sum();
    let g = layer.backward(x.view(), r.view()).expect("shapes");

    let theta = layer.flat();
    let num_p = central_difference(&theta, FD_EPS, |p| {
        let mut l = layer.clone();
        l.set_flat(p).expect("length");
        probe(&l, &x)
    });
    let x_flat = x.iter().copied().collect::<Vec<_>>();
    let num_x = central_difference(&x_flat, FD_EPS, |p| {
        probe(&layer, &Array2::from_shape_vec(x.raw_dim(), p.to_vec()).expect("length"))
    });
    let ana_p = g.clone().into_layer(&layer).flat();
    report(&format!("dense/{act:?}"), &[(ana_p, num_p), (g.dx.iter().copied().collect(), num_x)])
}

/// LSTM unrolled `steps` times under `Σ_t R_t⊙h_t + r⊙h_T`.
pub fn check_lstm(seed: u64, steps: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (inp, hid, batch) = (rng.gen_range(2..5), rng.gen_range(2..6), rng.gen_range(1..4));
    let mut cell = LstmCell::new(inp, hid, 2.0, &mut rng);
    cell.b.mapv_inplace(|v| v + 0.3 * (2.0 * rng.gen::<f64>() - 1.0));
    let x = Array3::from_shape_simple_fn((steps, batch, inp), || 2.0 * rng.gen::<f64>() - 1.0);
    let r_seq = Array3::from_shape_simple_fn((steps, batch, hid), || 2.0 * rng.gen::<f64>() - 1.0);
    let r_last = normal_array2(&mut rng, (batch, hid), 1.0);
    let probe = |c: &LstmCell, x: &Array3<f64>| {
        let cache = c.forward(x.view()).expect("shapes");
        (&cache.hidden_states() * &r_seq).sum() + (&cache.final_hidden() * &r_last).sum()
    };
    let cache = cell.forward(x.view()).expect("shapes");
    let g = cell.backward(&cache, Some(r_seq.view()), Some(r_last.view())).expect("shapes");

    let theta = cell.flat();
    let num_p = central_difference(&theta, FD_EPS, |p| {
        let mut c = cell.clone();
        c.set_flat(p).expect("length");
        probe(&c, &x)
    });
    let x_flat = x.iter().copied().collect::<Vec<_>>();
    let num_x = central_difference(&x_flat, FD_EPS, |p| {
        probe(&cell, &Array3::from_shape_vec(x.raw_dim(), p.to_vec()).expect("length"))
    });
    let dx: Vec<f64> = g.dx.iter().copied().collect();
    let ana_p = g.into_cell(&cell).flat();
    report(&format!("lstm/{steps}"), &[(ana_p, num_p), (dx, num_x)])
}

/// Softmax cross-entropy on random logits with 2 to 6 classes.
pub fn check_softmax_xent(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.gen_range(2..7);
    let logits: Vec<f64> = (0..classes).map(|_| 3.0 * (2.0 * rng.gen::<f64>() - 1.0)).collect();
    let label = rng.gen_range(0..classes);
    let f = |z: &[f64]| softmax_xent(Array1::from_vec(z.to_vec()).view(), label).expect("label").0;
    let (_, d) = softmax_xent(Array1::from_vec(logits.clone()).view(), label).expect("label");
    report("softmax_xent", &[(d.to_vec(), central_difference(&logits, FD_EPS, f))])
}

/// SVM objective on random data whose margins stay away from the hinge kink.
pub fn check_hinge(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, dim) = (rng.gen_range(3..12), rng.gen_range(2..6));
    let mut model = SvmModel::new(dim, 0.05 + rng.gen::<f64>()).expect("positive");
    model.w = Array1::from_shape_simple_fn(dim, || 2.0 * rng.gen::<f64>() - 1.0);
    model.b = rng.gen::<f64>() - 0.5;
    let mut x = normal_array2(&mut rng, (n, dim), 2.0);
    let y: Vec<f64> = (0..n).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    for k in 0..n {
        while (y[k] * model.decision(x.row(k)) - 1.0).abs() < 1e-2 {
            x.row_mut(k).mapv_inplace(|v| v * 1.1 + 0.01);
        }
    }
    let idx: Vec<usize> = (0..n).collect();
    let (_, g) = model.subgradient(x.view(), &y, &idx);
    let theta = model.flat();
    let num = central_difference(&theta, FD_EPS, |p| {
        let mut m = model.clone();
        m.set_flat(p).expect("length");
        m.objective(x.view(), &y)
    });
    report("hinge", &[(g.flat(), num)])
}

fn regression_pair(rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>) {
    let shape = (rng.gen_range(1..5), rng.gen_range(1..7));
    let target = normal_array2(rng, shape, 1.0);
    let mut pred = normal_array2(rng, shape, 1.0);
    pred.zip_mut_with(&target, |p, &t| {
        if (*p - t).abs() < 1e-2 {
            *p = t + 0.1;
        }
    });
    (pred, target)
}

pub fn check_l2(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pred, target) = regression_pair(&mut rng);
    let (_, g) = mse_loss(pred.view(), target.view()).expect("shapes");
    let flat: Vec<f64> = pred.iter().copied().collect();
    let num = central_difference(&flat, FD_EPS, |p| {
        mse_loss(Array2::from_shape_vec(pred.raw_dim(), p.to_vec()).expect("len").view(), target.view()).expect("shapes").0
    });
    report("l2", &[(g.iter().copied().collect(), num)])
}

pub fn check_l1(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pred, target) = regression_pair(&mut rng);
    let (_, g) = l1_loss(pred.view(), target.view()).expect("shapes");
    let flat: Vec<f64> = pred.iter().copied().collect();
    let num = central_difference(&flat, FD_EPS, |p| {
        l1_loss(Array2::from_shape_vec(pred.raw_dim(), p.to_vec()).expect("len").view(), target.view()).expect("shapes").0
    });
    report("l1", &[(g.iter().copied().collect(), num)])
}

/// Every check for one seed, with the LSTM unrolled five steps.
pub fn suite(seed: u64) -> Vec<GradCheck> {
    vec![
        check_dense(seed),
        check_lstm(seed, 5),
        check_softmax_xent(seed),
        check_hinge(seed),
        check_l1(seed),
        check_l2(seed),
    ]
}
