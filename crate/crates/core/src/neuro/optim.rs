use serde::{Deserialize, Serialize};

use super::{shape_err, NeuroError, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain SGD with step size `lr/√t`.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub init_scale: f64,
    /// Global gradient-norm ceiling applied before each update.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Initial forget-gate bias of LSTM cells; unused by other models.
    #[serde(default = "default_forget_bias")]
    pub forget_bias: f64,
}

fn default_forget_bias() -> f64 {
    super::lstm::DEFAULT_FORGET_BIAS
}

impl TrainConfig {
    /// Adam at 1e-3.
    pub fn adam(steps: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size,
            steps,
            seed,
            init_scale: 1.0,
            grad_clip: None,
            forget_bias: default_forget_bias(),
        }
    }

    /// SGD at 1e-2 with 1/√t decay.
    pub fn sgd(steps: usize, batch_size: usize, seed: u64) -> Self {
        Self { optimizer: OptimizerKind::Sgd, learning_rate: 1e-2, ..Self::adam(steps, batch_size, seed) }
    }

    pub fn validate(&self) -> Result<(), NeuroError> {
        let bad = |m: &str| Err(NeuroError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.init_scale > 0.0) {
            return bad("init_scale must be positive");
        }
        if !self.forget_bias.is_finite() {
            return bad("forget_bias must be finite");
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Optimizer moments laid out like the model's parameter slices.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    lr: f64,
    clip: Option<f64>,
    t: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<P: Params>(model: &P, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Vec<f64>> = match cfg.optimizer {
            OptimizerKind::Adam => model.slices().iter().map(|s| vec![0.0; s.len()]).collect(),
            OptimizerKind::Sgd => Vec::new(),
        };
        Self { kind: cfg.optimizer, lr: cfg.learning_rate, clip: cfg.grad_clip, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    pub fn step<P: Params>(&mut self, model: &mut P, grad: &P) -> Result<(), NeuroError> {
        let grads = grad.slices();
        let mut params = model.slices_mut();
        if grads.len() != params.len() || grads.iter().zip(&params).any(|(g, p)| g.len() != p.len()) {
            return Err(shape_err(params.len(), grads.len()));
        }
        self.t += 1;
        let scale = match self.clip {
            Some(c) => {
                let norm = grads.iter().flat_map(|g| g.iter()).map(|v| v * v).sum::<f64>().sqrt();
                if norm > c {
                    c / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = self.lr / (self.t as f64).sqrt();
                for (p, g) in params.iter_mut().zip(&grads) {
                    for (pv, gv) in p.iter_mut().zip(g.iter()) {
                        *pv -= lr * scale * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.t as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                for (k, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for i in 0..p.len() {
                        let gv = g[i] * scale;
                        m[i] = BETA1 * m[i] + (1.0 - BETA1) * gv;
                        v[i] = BETA2 * v[i] + (1.0 - BETA2) * gv * gv;
                        p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}
