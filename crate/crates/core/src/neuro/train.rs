use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NeuroError, OptimizerState, Params, TrainConfig};

/// Mean loss over a mini-batch, argmax hits for classifiers, and the
/// gradient stored in a model-shaped value.
pub struct BatchOutput<M> {
    pub loss: f64,
    pub correct: Option<usize>,
    pub grad: M,
}

pub trait Trainable: Params + Clone {
    type Sample;

    fn batch_grad(&self, batch: &[&Self::Sample]) -> Result<BatchOutput<Self>, NeuroError>;

    /// Forward-only mean loss and argmax hits.
    fn batch_eval(&self, batch: &[&Self::Sample]) -> Result<(f64, Option<usize>), NeuroError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    /// Loss and accuracy over the whole training set after the last update.
    pub final_loss: f64,
    pub final_accuracy: Option<f64>,
}

impl Trace {
    /// `step,loss,accuracy`; accuracy is empty for regression.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss,accuracy\n");
        for r in &self.rows {
            let acc = r.accuracy.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", r.step, r.loss, acc);
        }
        out
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }
}

/// Batch size for forward-only evaluation.
pub const EVAL_CHUNK: usize = 256;

/// Forward-only loss and accuracy over `data`, in fixed-size chunks.
pub fn evaluate_all<M: Trainable>(model: &M, data: &[M::Sample]) -> Result<(f64, Option<f64>), NeuroError> {
    let mut loss = 0.0;
    let mut correct: Option<usize> = None;
    for chunk in data.chunks(EVAL_CHUNK) {
        let refs: Vec<&M::Sample> = chunk.iter().collect();
        let (l, c) = model.batch_eval(&refs)?;
        loss += l * chunk.len() as f64;
        if let Some(c) = c {
            *correct.get_or_insert(0) += c;
        }
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, correct.map(|c| c as f64 / n)))
}

/// Mini-batch training. Batches are drawn without replacement from a seeded
/// permutation that is redrawn each epoch.
pub fn train_loop<M: Trainable>(model: &mut M, data: &[M::Sample], cfg: &TrainConfig) -> Result<Trace, NeuroError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NeuroError::InvalidConfig("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut pos = 0;
    let batch = cfg.batch_size.min(data.len());
    let mut opt = OptimizerState::new(model, cfg);
    let mut rows = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let mut refs = Vec::with_capacity(batch);
        while refs.len() < batch {
            if pos == order.len() {
                order.shuffle(&mut rng);
                pos = 0;
            }
            refs.push(&data[order[pos]]);
            pos += 1;
        }
        let out = model.batch_grad(&refs)?;
        if !out.loss.is_finite() || !out.grad.all_finite() {
            return Err(NeuroError::NanLoss(step));
        }
        opt.step(model, &out.grad)?;
        if !model.all_finite() {
            return Err(NeuroError::NanLoss(step));
        }
        rows.push(TraceRow { step, loss: out.loss, accuracy: out.correct.map(|c| c as f64 / batch as f64) });
    }
    let (final_loss, final_accuracy) = evaluate_all(model, data)?;
    Ok(Trace { rows, final_loss, final_accuracy })
}
