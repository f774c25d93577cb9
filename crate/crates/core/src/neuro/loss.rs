use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{shape_err, NeuroError};

/// Max-subtracted softmax.
pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut p = logits.mapv(|v| (v - m).exp());
    let z = p.sum();
    p /= z;
    p
}

/// Cross-entropy of one row of logits against `label`; returns the loss and
/// `p − onehot(label)`.
pub fn softmax_xent(logits: ArrayView1<f64>, label: usize) -> Result<(f64, Array1<f64>), NeuroError> {
    let classes = logits.len();
    if label >= classes {
        return Err(NeuroError::LabelOutOfRange { label, classes });
    }
    let m = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let log_z = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    let mut d = softmax(logits);
    d[label] -= 1.0;
    Ok((log_z - logits[label], d))
}

/// Mean cross-entropy over a batch. Returns the loss, its gradient with
/// respect to the logits and the number of argmax hits.
pub fn softmax_xent_batch(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>, usize), NeuroError> {
    if logits.nrows() != labels.len() {
        return Err(shape_err(labels.len(), logits.nrows()));
    }
    let n = labels.len().max(1) as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    let mut correct = 0;
    for (k, &label) in labels.iter().enumerate() {
        let row = logits.row(k);
        let (l, d) = softmax_xent(row, label)?;
        loss += l;
        grad.row_mut(k).assign(&(d / n));
        if argmax(row) == label {
            correct += 1;
        }
    }
    Ok((loss / n, grad, correct))
}

/// First index of the largest entry.
pub fn argmax(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_pair(pred: &ArrayView2<f64>, target: &ArrayView2<f64>) -> Result<(), NeuroError> {
    if pred.dim() != target.dim() {
        return Err(shape_err(target.dim(), pred.dim()));
    }
    Ok(())
}

/// Mean of squared errors over every element, with its gradient.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>), NeuroError> {
    check_pair(&pred, &target)?;
    let n = pred.len().max(1) as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

/// Mean of absolute errors over every element. The subgradient at zero is 0.
pub fn l1_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>), NeuroError> {
    check_pair(&pred, &target)?;
    let n = pred.len().max(1) as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d.abs()).sum::<f64>() / n;
    Ok((loss, diff.mapv(|d| if d == 0.0 { 0.0 } else { d.signum() / n })))
}

/// `max(0, 1 − margin)` and its derivative with respect to the margin.
pub fn hinge(margin: f64) -> (f64, f64) {
    if margin < 1.0 {
        (1.0 - margin, -1.0)
    } else {
        (0.0, 0.0)
    }
}
