use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SimError, HORIZON};

const MAX_REDRAWS: usize = 100;

/// Uniform bounds for multiplicative power deltas and for the instant at
/// which they are applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationBounds {
    pub lo: f64,
    pub hi: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for FluctuationBounds {
    fn default() -> Self {
        Self { lo: -0.2, hi: 0.2, t_min: 0.2, t_max: 3.0 }
    }
}

/// A sudden step change of every bus's generation and load at `t_step`.
/// Deltas are multiplicative: the new value is `(1 + delta) × nominal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationPlan {
    pub t_step: f64,
    pub gen_p: Vec<f64>,
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
}

impl FluctuationPlan {
    /// No fluctuation at all.
    pub fn none(n_buses: usize) -> Self {
        Self { t_step: HORIZON, gen_p: vec![0.0; n_buses], load_p: vec![0.0; n_buses], load_q: vec![0.0; n_buses] }
    }

    pub fn is_identity(&self) -> bool {
        self.gen_p.iter().chain(&self.load_p).chain(&self.load_q).all(|&d| d == 0.0)
    }

    /// Loads and generation stay non-negative after scaling.
    pub fn is_feasible(&self) -> bool {
        self.gen_p.iter().chain(&self.load_p).chain(&self.load_q).all(|&d| 1.0 + d >= 0.0)
    }
}

/// Independent uniform draws per bus and per quantity.
pub fn draw_fluctuation(
    seed: u64,
    bounds: &FluctuationBounds,
    n_buses: usize,
) -> Result<FluctuationPlan, SimError> {
    if bounds.lo > bounds.hi || bounds.t_min > bounds.t_max || !(bounds.t_min > 0.0) {
        return Err(SimError::InvalidScenario(format!("bad fluctuation bounds {bounds:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.gen::<f64>();
    for _ in 0..MAX_REDRAWS {
        let t_step = uniform(bounds.t_min, bounds.t_max);
        let mut deltas = || (0..n_buses).map(|_| uniform(bounds.lo, bounds.hi)).collect::<Vec<_>>();
        let gen_p = deltas();
        let load_p = deltas();
        let load_q = deltas();
        let plan = FluctuationPlan { t_step, gen_p, load_p, load_q };
        if plan.is_feasible() {
            return Ok(plan);
        }
    }
    Err(SimError::InfeasiblePlan(MAX_REDRAWS))
}
