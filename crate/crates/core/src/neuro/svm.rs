use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{hinge, shape_err, NeuroError, OptimizerState, Params, Trace, TraceRow, TrainConfig};

/// Linear classifier `sign(w·x + b)` trained on
/// `c_reg·|w|²/2 + mean hinge(y(w·x + b))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub w: Array1<f64>,
    pub b: f64,
    pub c_reg: f64,
}

impl SvmModel {
    pub fn new(dim: usize, c_reg: f64) -> Result<Self, NeuroError> {
        if !(c_reg > 0.0 && c_reg.is_finite()) {
            return Err(NeuroError::InvalidConfig(format!("c_reg must be positive, got {c_reg}")));
        }
        Ok(Self { w: Array1::zeros(dim), b: 0.0, c_reg })
    }

    pub fn decision(&self, x: ArrayView1<f64>) -> f64 {
        self.w.dot(&x) + self.b
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> f64 {
        if self.decision(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn objective(&self, x: ArrayView2<f64>, y: &[f64]) -> f64 {
        let hinge_sum: f64 = x.rows().into_iter().zip(y).map(|(r, &yk)| hinge(yk * self.decision(r)).0).sum();
        0.5 * self.c_reg * self.w.dot(&self.w) + hinge_sum / y.len().max(1) as f64
    }

    /// Objective value and its subgradient over the rows `idx`.
    pub fn subgradient(&self, x: ArrayView2<f64>, y: &[f64], idx: &[usize]) -> (f64, SvmModel) {
        let mut g = SvmModel { w: &self.w * self.c_reg, b: 0.0, c_reg: self.c_reg };
        let n = idx.len().max(1) as f64;
        let mut loss = 0.0;
        for &k in idx {
            let row = x.row(k);
            let (h, dm) = hinge(y[k] * self.decision(row));
            loss += h / n;
            if dm != 0.0 {
                g.w.scaled_add(dm * y[k] / n, &row);
                g.b += dm * y[k] / n;
            }
        }
        (loss + 0.5 * self.c_reg * self.w.dot(&self.w), g)
    }
}

impl Params for SvmModel {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice().expect("standard layout"), std::slice::from_ref(&self.b)]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_slice_mut().expect("standard layout"), std::slice::from_mut(&mut self.b)]
    }
}

/// Stochastic subgradient descent on the SVM objective. Labels must be ±1.
/// The returned model is the average of the iterates over the second half
/// of training.
pub fn hinge_train(model: SvmModel, x: ArrayView2<f64>, y: &[f64], cfg: &TrainConfig) -> Result<SvmModel, NeuroError> {
    hinge_train_traced(model, x, y, cfg).map(|(m, _)| m)
}

/// [`hinge_train`] that also returns the per-step mini-batch objective and
/// accuracy.
pub fn hinge_train_traced(
    model: SvmModel,
    x: ArrayView2<f64>,
    y: &[f64],
    cfg: &TrainConfig,
) -> Result<(SvmModel, Trace), NeuroError> {
    cfg.validate()?;
    if x.nrows() != y.len() || x.ncols() != model.w.len() {
        return Err(shape_err((y.len(), model.w.len()), x.dim()));
    }
    if y.is_empty() {
        return Err(NeuroError::InvalidConfig("training set is empty".into()));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(NeuroError::InvalidConfig("SVM labels must be +1 or -1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.shuffle(&mut rng);
    let batch = cfg.batch_size.min(y.len());
    let mut pos = 0;
    let mut m = model;
    let mut opt = OptimizerState::new(&m, cfg);
    let average_from = cfg.steps / 2 + 1;
    let mut avg = m.zeros_like();
    let mut count = 0.0;
    let mut rows = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if pos == order.len() {
                order.shuffle(&mut rng);
                pos = 0;
            }
            idx.push(order[pos]);
            pos += 1;
        }
        let (loss, g) = m.subgradient(x, y, &idx);
        if !loss.is_finite() {
            return Err(NeuroError::NanLoss(step));
        }
        let hits = idx.iter().filter(|&&k| m.predict(x.row(k)) == y[k]).count();
        rows.push(TraceRow { step, loss, accuracy: Some(hits as f64 / idx.len() as f64) });
        opt.step(&mut m, &g)?;
        if step >= average_from {
            count += 1.0;
            avg.w.scaled_add(1.0, &m.w);
            avg.b += m.b;
        }
    }
    avg.w /= count;
    avg.b /= count;
    let hits = x.rows().into_iter().zip(y).filter(|(r, &yk)| avg.predict(*r) == yk).count();
    let final_accuracy = Some(hits as f64 / y.len() as f64);
    let trace = Trace { rows, final_loss: avg.objective(x, y), final_accuracy };
    Ok((avg, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn margin_two_only_regularizes() {
        let m = SvmModel { w: array![1.0, 0.5], b: 0.0, c_reg: 0.1 };
        let x = array![[2.0, 0.0]];
        let (_, g) = m.subgradient(x.view(), &[1.0], &[0]);
        assert_eq!(g.w, &m.w * 0.1);
        assert_eq!(g.b, 0.0);
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let x = Array2::from_shape_fn((40, 2), |(k, i)| {
            let side = if k % 2 == 0 { 1.0 } else { -1.0 };
            side * (1.0 + 0.05 * k as f64) + if i == 1 { 0.3 * (k as f64).sin() } else { 0.0 }
        });
        let y: Vec<f64> = (0..40).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let cfg = TrainConfig { learning_rate: 0.1, ..TrainConfig::sgd(2000, 8, 3) };
        let m = hinge_train(SvmModel::new(2, 1e-3).unwrap(), x.view(), &y, &cfg).unwrap();
        assert!(x.rows().into_iter().zip(&y).all(|(r, &yk)| m.predict(r) == yk));
    }

    fn grid_min(x: &Array2<f64>, y: &[f64], c_reg: f64) -> f64 {
        let obj = |w0: f64, w1: f64, b: f64| SvmModel { w: array![w0, w1], b, c_reg }.objective(x.view(), y);
        let search = |centre: [f64; 3], half: f64, n: i32| {
            let mut best = (f64::INFINITY, centre);
            let h = half / n as f64;
            for i in -n..=n {
                for j in -n..=n {
                    for k in -n..=n {
                        let p = [centre[0] + h * i as f64, centre[1] + h * j as f64, centre[2] + h * k as f64];
                        let v = obj(p[0], p[1], p[2]);
                        if v < best.0 {
                            best = (v, p);
                        }
                    }
                }
            }
            best
        };
        let (_, coarse) = search([0.0; 3], 4.0, 40);
        search(coarse, 0.2, 40).0
    }

    #[test]
    fn twenty_point_objective_matches_grid_search() {
        // Two overlapping clouds, so the optimum has active hinge terms.
        let x = Array2::from_shape_fn((20, 2), |(k, i)| {
            let centre = if k < 10 { 1.0 } else { -1.0 };
            centre * if i == 0 { 0.8 } else { 0.3 } + 1.1 * ((k * 7 + i * 3) as f64 * 1.3).sin()
        });
        let y: Vec<f64> = (0..20).map(|k| if k < 10 { 1.0 } else { -1.0 }).collect();
        let c_reg = 0.1;
        let cfg = TrainConfig { learning_rate: 1.0, ..TrainConfig::sgd(20_000, 20, 5) };
        let (m, trace) = hinge_train_traced(SvmModel::new(2, c_reg).unwrap(), x.view(), &y, &cfg).unwrap();
        let oracle = grid_min(&x, &y, c_reg);
        assert!(oracle > 0.1, "toy set should not be trivially separable, got {oracle}");
        assert!(trace.final_loss <= oracle * 1.01, "sgd {} vs grid {oracle}", trace.final_loss);
        assert_eq!(trace.final_loss, m.objective(x.view(), &y));
    }

    #[test]
    fn rejects_non_binary_labels() {
        let x = array![[1.0], [2.0]];
        let cfg = TrainConfig::sgd(10, 1, 0);
        assert!(hinge_train(SvmModel::new(1, 1.0).unwrap(), x.view(), &[1.0, 0.0], &cfg).is_err());
        assert!(SvmModel::new(1, 0.0).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let x = Array2::from_shape_fn((30, 3), |(k, i)| ((k * 3 + i) as f64).sin());
        let y: Vec<f64> = (0..30).map(|k| if (k * 7) % 5 < 2 { 1.0 } else { -1.0 }).collect();
        let cfg = TrainConfig::sgd(300, 4, 11);
        let run = || hinge_train(SvmModel::new(3, 0.01).unwrap(), x.view(), &y, &cfg).unwrap();
        assert_eq!(run(), run());
    }
}
