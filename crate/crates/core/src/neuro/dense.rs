use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{shape_err, uniform, NeuroError, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => super::sigmoid(v),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// `y = act(x Wᵀ + b)` on a batch of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// out × in
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub dx: Array2<f64>,
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
}

impl DenseLayer {
    /// Weights uniform in ±init_scale/√fan_in, zero bias.
    pub fn new(inputs: usize, outputs: usize, activation: Activation, init_scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let bound = init_scale / (inputs as f64).sqrt();
        let w = Array2::from_shape_simple_fn((outputs, inputs), || uniform(rng, bound));
        Self { w, b: Array1::zeros(outputs), activation }
    }

    pub fn inputs(&self) -> usize {
        self.w.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    fn check(&self, x: &ArrayView2<f64>) -> Result<(), NeuroError> {
        if x.ncols() != self.inputs() {
            return Err(shape_err(("batch", self.inputs()), x.dim()));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuroError> {
        self.check(&x)?;
        let mut y = x.dot(&self.w.t());
        y += &self.b;
        let act = self.activation;
        y.mapv_inplace(|v| act.apply(v));
        Ok(y)
    }

    /// Backward pass given the layer output `y` from [`DenseLayer::forward`].
    pub fn backward_with_output(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
        dy: ArrayView2<f64>,
    ) -> Result<DenseGrads, NeuroError> {
        self.check(&x)?;
        if dy.dim() != (x.nrows(), self.outputs()) || y.dim() != dy.dim() {
            return Err(shape_err((x.nrows(), self.outputs()), dy.dim()));
        }
        let act = self.activation;
        let mut dpre = dy.to_owned();
        dpre.zip_mut_with(&y, |d, &yv| *d *= act.grad_from_output(yv));
        Ok(DenseGrads { dx: dpre.dot(&self.w), dw: dpre.t().dot(&x), db: dpre.sum_axis(Axis(0)) })
    }

    /// Recomputes the forward pass, then back-propagates `dy`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>) -> Result<DenseGrads, NeuroError> {
        let y = self.forward(x)?;
        self.backward_with_output(x, y.view(), dy)
    }
}

impl Params for DenseLayer {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice().expect("standard layout"), self.b.as_slice().expect("standard layout")]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_slice_mut().expect("standard layout"), self.b.as_slice_mut().expect("standard layout")]
    }
}

impl DenseGrads {
    pub fn into_layer(self, like: &DenseLayer) -> DenseLayer {
        DenseLayer { w: self.dw, b: self.db, activation: like.activation }
    }
}
