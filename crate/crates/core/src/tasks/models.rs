use ndarray::{Array1, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::neuro::{
    argmax, mse_loss, softmax_xent_batch, Activation, BatchOutput, DenseLayer, LstmCell, NeuroError, Params,
    TrainConfig, Trainable,
};

/// One sequence (steps × features) with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqSample {
    pub x: Array2<f64>,
    pub label: usize,
}

/// One input vector with its regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct VecSample {
    pub x: Array1<f64>,
    pub y: Array1<f64>,
}

/// N → 60 → 40 → N with tanh hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterModel {
    pub layers: [DenseLayer; 3],
}

pub const FORECASTER_HIDDEN: [usize; 2] = [60, 40];

impl ForecasterModel {
    pub fn new(n_buses: usize, init_scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [h1, h2] = FORECASTER_HIDDEN;
        Self {
            layers: [
                DenseLayer::new(n_buses, h1, Activation::Tanh, init_scale, &mut rng),
                DenseLayer::new(h1, h2, Activation::Tanh, init_scale, &mut rng),
                DenseLayer::new(h2, n_buses, Activation::Identity, init_scale, &mut rng),
            ],
        }
    }

    pub fn n_buses(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>, NeuroError> {
        let a = self.layers[0].forward(x.view())?;
        let b = self.layers[1].forward(a.view())?;
        self.layers[2].forward(b.view())
    }

    fn stack(batch: &[&VecSample]) -> (Array2<f64>, Array2<f64>) {
        let n_in = batch[0].x.len();
        let n_out = batch[0].y.len();
        let x = Array2::from_shape_fn((batch.len(), n_in), |(k, i)| batch[k].x[i]);
        let y = Array2::from_shape_fn((batch.len(), n_out), |(k, i)| batch[k].y[i]);
        (x, y)
    }
}

impl Params for ForecasterModel {
    fn slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.slices()).collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.slices_mut()).collect()
    }
}

impl Trainable for ForecasterModel {
    type Sample = VecSample;

    fn batch_grad(&self, batch: &[&VecSample]) -> Result<BatchOutput<Self>, NeuroError> {
        let (x, t) = Self::stack(batch);
        let a = self.layers[0].forward(x.view())?;
        let b = self.layers[1].forward(a.view())?;
        let y = self.layers[2].forward(b.view())?;
        let (loss, dy) = mse_loss(y.view(), t.view())?;
        let g2 = self.layers[2].backward_with_output(b.view(), y.view(), dy.view())?;
        let g1 = self.layers[1].backward_with_output(a.view(), b.view(), g2.dx.view())?;
        let g0 = self.layers[0].backward_with_output(x.view(), a.view(), g1.dx.view())?;
        let grad = Self {
            layers: [g0.into_layer(&self.layers[0]), g1.into_layer(&self.layers[1]), g2.into_layer(&self.layers[2])],
        };
        Ok(BatchOutput { loss, correct: None, grad })
    }

    fn batch_eval(&self, batch: &[&VecSample]) -> Result<(f64, Option<usize>), NeuroError> {
        let (x, t) = Self::stack(batch);
        let y = self.predict(&x)?;
        Ok((mse_loss(y.view(), t.view())?.0, None))
    }
}

/// LSTM over the whole sequence, then a dense head on the last hidden state:
/// `h_T → hidden (ReLU) → classes` with softmax cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmClassifier {
    pub cell: LstmCell,
    pub fc: DenseLayer,
    pub out: DenseLayer,
}

pub const LSTM_HIDDEN: usize = 128;
pub const FAULT_TYPE_HEAD: usize = 64;
pub const LOCATOR_HEAD: usize = 128;

/// Binary LL/LG classifier: LSTM(input, 128) → 64 → 2.
pub type FaultTypeLstm = LstmClassifier;
/// Bus locator: LSTM(input, 128) → 128 → N + 1.
pub type LocatorModel = LstmClassifier;

impl LstmClassifier {
    /// Initialization reads `init_scale`, `forget_bias` and `seed` from `cfg`.
    pub fn new(input: usize, hidden: usize, head: usize, classes: usize, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let s = cfg.init_scale;
        Self {
            cell: LstmCell::with_forget_bias(input, hidden, s, cfg.forget_bias, &mut rng),
            fc: DenseLayer::new(hidden, head, Activation::Relu, s, &mut rng),
            out: DenseLayer::new(head, classes, Activation::Identity, s, &mut rng),
        }
    }

    pub fn fault_type(input: usize, cfg: &TrainConfig) -> FaultTypeLstm {
        Self::new(input, LSTM_HIDDEN, FAULT_TYPE_HEAD, 2, cfg)
    }

    pub fn locator(input: usize, n_buses: usize, cfg: &TrainConfig) -> LocatorModel {
        Self::new(input, LSTM_HIDDEN, LOCATOR_HEAD, n_buses + 1, cfg)
    }

    pub fn classes(&self) -> usize {
        self.out.outputs()
    }

    fn stack(batch: &[&SeqSample]) -> Array3<f64> {
        let (steps, feat) = batch[0].x.dim();
        let mut x = Array3::zeros((steps, batch.len(), feat));
        for (k, s) in batch.iter().enumerate() {
            x.index_axis_mut(Axis(1), k).assign(&s.x);
        }
        x
    }

    pub fn logits(&self, batch: &[&SeqSample]) -> Result<Array2<f64>, NeuroError> {
        let cache = self.cell.forward(Self::stack(batch).view())?;
        let a = self.fc.forward(cache.final_hidden())?;
        self.out.forward(a.view())
    }

    pub fn predict(&self, batch: &[&SeqSample]) -> Result<Vec<usize>, NeuroError> {
        let z = self.logits(batch)?;
        Ok(z.rows().into_iter().map(argmax).collect())
    }
}

impl Params for LstmClassifier {
    fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.cell.slices();
        v.extend(self.fc.slices());
        v.extend(self.out.slices());
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.cell.slices_mut();
        v.extend(self.fc.slices_mut());
        v.extend(self.out.slices_mut());
        v
    }
}

impl Trainable for LstmClassifier {
    type Sample = SeqSample;

    fn batch_grad(&self, batch: &[&SeqSample]) -> Result<BatchOutput<Self>, NeuroError> {
        let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
        let cache = self.cell.forward(Self::stack(batch).view())?;
        let h = cache.final_hidden();
        let a = self.fc.forward(h)?;
        let z = self.out.forward(a.view())?;
        let (loss, dz, correct) = softmax_xent_batch(z.view(), &labels)?;
        let g_out = self.out.backward_with_output(a.view(), z.view(), dz.view())?;
        let g_fc = self.fc.backward_with_output(h, a.view(), g_out.dx.view())?;
        let g_cell = self.cell.backward(&cache, None, Some(g_fc.dx.view()))?;
        let grad = Self {
            cell: g_cell.into_cell(&self.cell),
            fc: g_fc.into_layer(&self.fc),
            out: g_out.into_layer(&self.out),
        };
        Ok(BatchOutput { loss, correct: Some(correct), grad })
    }

    fn batch_eval(&self, batch: &[&SeqSample]) -> Result<(f64, Option<usize>), NeuroError> {
        let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
        let z = self.logits(batch)?;
        let (loss, _, correct) = softmax_xent_batch(z.view(), &labels)?;
        Ok((loss, Some(correct)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::gradcheck::{central_difference, rel_error, FD_EPS};

    #[test]
    fn shapes_follow_the_bus_count() {
        let f = ForecasterModel::new(23, 1.0, 0);
        assert_eq!(f.layers.iter().map(|l| (l.inputs(), l.outputs())).collect::<Vec<_>>(), vec![(23, 60), (60, 40), (40, 23)]);
        let cfg = TrainConfig::adam(1, 1, 0);
        let loc = LstmClassifier::locator(23, 23, &cfg);
        assert_eq!((loc.cell.hidden, loc.fc.outputs(), loc.classes()), (128, 128, 24));
        let ft = LstmClassifier::fault_type(23, &cfg);
        assert_eq!((ft.cell.input, ft.fc.outputs(), ft.classes()), (23, 64, 2));
    }

    fn numeric_check<M: Trainable>(model: &M, batch: &[&M::Sample]) -> f64 {
        let ana = model.batch_grad(batch).unwrap().grad.flat();
        let num = central_difference(&model.flat(), FD_EPS, |p| {
            let mut m = model.clone();
            m.set_flat(p).unwrap();
            m.batch_eval(batch).unwrap().0
        });
        rel_error(&ana, &num)
    }

    #[test]
    fn classifier_gradient_matches_finite_differences() {
        let model = LstmClassifier::new(3, 4, 5, 3, &TrainConfig { init_scale: 1.5, ..TrainConfig::adam(1, 1, 7) });
        let samples: Vec<SeqSample> = (0..3)
            .map(|k| SeqSample {
                x: Array2::from_shape_fn((5, 3), |(t, i)| ((t * 3 + i + k * 7) as f64 * 0.7).sin()),
                label: k,
            })
            .collect();
        let refs: Vec<&SeqSample> = samples.iter().collect();
        assert!(numeric_check(&model, &refs) < 1e-4);
    }

    #[test]
    fn forecaster_gradient_matches_finite_differences() {
        let mut model = ForecasterModel::new(4, 1.0, 3);
        for l in &mut model.layers {
            l.b.mapv_inplace(|v| v + 0.1);
        }
        let samples: Vec<VecSample> = (0..3)
            .map(|k| VecSample {
                x: Array1::from_shape_fn(4, |i| ((i + k) as f64 * 0.9).cos()),
                y: Array1::from_shape_fn(4, |i| 0.1 * (i * k) as f64),
            })
            .collect();
        let refs: Vec<&VecSample> = samples.iter().collect();
        assert!(numeric_check(&model, &refs) < 1e-4);
    }
}
