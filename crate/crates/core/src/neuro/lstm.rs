use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand_chacha::ChaCha8Rng;

use super::{shape_err, uniform, NeuroError, Params};

/// Gate pre-activations are clamped to this magnitude so sigmoid outputs
/// stay strictly inside (0, 1) in f64.
const GATE_CLAMP: f64 = 36.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    fn block(self) -> usize {
        match self {
            Gate::Input => 0,
            Gate::Forget => 1,
            Gate::Output => 2,
            Gate::Candidate => 3,
        }
    }
}

/// Standard LSTM cell without peepholes:
/// `i, f, o = σ(W_{i,f,o}[x; h] + b)`, `g = tanh(W_g[x; h] + b_g)`,
/// `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    /// Gate blocks stacked as rows `[i; f; o; g]`, each hidden × (input + hidden).
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub input: usize,
    pub hidden: usize,
}

/// Activations kept from a forward pass. Row `t·B + k` holds step `t` of
/// batch entry `k`; `h` and `c` carry one extra leading step for the zero state.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub steps: usize,
    pub batch: usize,
    x: Array2<f64>,
    h: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    gates: Array2<f64>,
}

impl LstmCache {
    /// (steps, batch, hidden)
    pub fn hidden_states(&self) -> ArrayView3<'_, f64> {
        let hidden = self.h.ncols();
        self.h
            .slice(s![self.batch.., ..])
            .into_shape_with_order((self.steps, self.batch, hidden))
            .expect("contiguous")
    }

    pub fn final_hidden(&self) -> ArrayView2<'_, f64> {
        self.h.slice(s![self.steps * self.batch.., ..])
    }

    /// Activated gate values, (steps·batch) × 4·hidden.
    pub fn gates(&self) -> ArrayView2<'_, f64> {
        self.gates.view()
    }
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub dw: Array2<f64>,
    pub db: Array1<f64>,
    /// (steps, batch, input)
    pub dx: Array3<f64>,
}

pub const DEFAULT_FORGET_BIAS: f64 = 1.0;

impl LstmCell {
    /// Weights uniform in ±init_scale/√(input + hidden); forget bias 1.
    pub fn new(input: usize, hidden: usize, init_scale: f64, rng: &mut ChaCha8Rng) -> Self {
        Self::with_forget_bias(input, hidden, init_scale, DEFAULT_FORGET_BIAS, rng)
    }

    /// As [`LstmCell::new`] with every forget-gate bias set to `forget_bias`.
    pub fn with_forget_bias(
        input: usize,
        hidden: usize,
        init_scale: f64,
        forget_bias: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = init_scale / ((input + hidden) as f64).sqrt();
        let w = Array2::from_shape_simple_fn((4 * hidden, input + hidden), || uniform(rng, bound));
        let mut b = Array1::zeros(4 * hidden);
        b.slice_mut(s![hidden..2 * hidden]).fill(forget_bias);
        Self { w, b, input, hidden }
    }

    pub fn gate_weights(&self, gate: Gate) -> ArrayView2<'_, f64> {
        let k = gate.block();
        self.w.slice(s![k * self.hidden..(k + 1) * self.hidden, ..])
    }

    pub fn forward(&self, x: ArrayView3<f64>) -> Result<LstmCache, NeuroError> {
        let (steps, batch, input) = x.dim();
        if input != self.input || steps == 0 {
            return Err(shape_err(("steps >= 1", "batch", self.input), x.dim()));
        }
        let hd = self.hidden;
        let x2 = x.as_standard_layout().into_owned().into_shape_with_order((steps * batch, input)).expect("contiguous");
        let w_x = self.w.slice(s![.., ..input]);
        let w_h = self.w.slice(s![.., input..]);
        let mut gates = x2.dot(&w_x.t());
        gates += &self.b;
        let mut h = Array2::<f64>::zeros(((steps + 1) * batch, hd));
        let mut c = Array2::<f64>::zeros(((steps + 1) * batch, hd));
        let mut tanh_c = Array2::<f64>::zeros((steps * batch, hd));
        for t in 0..steps {
            let rows = t * batch..(t + 1) * batch;
            let rec = h.slice(s![rows.clone(), ..]).dot(&w_h.t());
            let mut a = gates.slice_mut(s![rows.clone(), ..]);
            a += &rec;
            let a = a.as_slice_mut().expect("contiguous");
            let (c_done, c_next) = c.as_slice_mut().expect("contiguous").split_at_mut((t + 1) * batch * hd);
            let c_prev = &c_done[t * batch * hd..];
            let h_next = &mut h.as_slice_mut().expect("contiguous")[(t + 1) * batch * hd..(t + 2) * batch * hd];
            let tc_t = &mut tanh_c.as_slice_mut().expect("contiguous")[t * batch * hd..(t + 1) * batch * hd];
            for k in 0..batch {
                let a_row = &mut a[k * 4 * hd..(k + 1) * 4 * hd];
                let (ai, rest) = a_row.split_at_mut(hd);
                let (af, rest) = rest.split_at_mut(hd);
                let (ao, ag) = rest.split_at_mut(hd);
                let cp = &c_prev[k * hd..(k + 1) * hd];
                let cn = &mut c_next[k * hd..(k + 1) * hd];
                let hn = &mut h_next[k * hd..(k + 1) * hd];
                let tc = &mut tc_t[k * hd..(k + 1) * hd];
                for j in 0..hd {
                    let ig = super::sigmoid(ai[j].clamp(-GATE_CLAMP, GATE_CLAMP));
                    let fg = super::sigmoid(af[j].clamp(-GATE_CLAMP, GATE_CLAMP));
                    let og = super::sigmoid(ao[j].clamp(-GATE_CLAMP, GATE_CLAMP));
                    let gg = ag[j].tanh();
                    ai[j] = ig;
                    af[j] = fg;
                    ao[j] = og;
                    ag[j] = gg;
                    let cv = fg * cp[j] + ig * gg;
                    cn[j] = cv;
                    tc[j] = cv.tanh();
                    hn[j] = og * tc[j];
                }
            }
        }
        Ok(LstmCache { steps, batch, x: x2, h, c, tanh_c, gates })
    }

    /// Back-propagation through time. `dh_seq` is the loss gradient with
    /// respect to every hidden state (steps, batch, hidden); `dh_last` adds to
    /// the final one.
    pub fn backward(
        &self,
        cache: &LstmCache,
        dh_seq: Option<ArrayView3<f64>>,
        dh_last: Option<ArrayView2<f64>>,
    ) -> Result<LstmGrads, NeuroError> {
        let (steps, batch, hd) = (cache.steps, cache.batch, self.hidden);
        if let Some(d) = &dh_seq {
            if d.dim() != (steps, batch, hd) {
                return Err(shape_err((steps, batch, hd), d.dim()));
            }
        }
        let mut dh_next = match dh_last {
            Some(d) if d.dim() != (batch, hd) => return Err(shape_err((batch, hd), d.dim())),
            Some(d) => d.to_owned(),
            None => Array2::zeros((batch, hd)),
        };
        let w_h = self.w.slice(s![.., self.input..]);
        let mut dc_next = Array2::<f64>::zeros((batch, hd));
        let mut da = Array2::<f64>::zeros((steps * batch, 4 * hd));
        for t in (0..steps).rev() {
            if let Some(d) = &dh_seq {
                dh_next += &d.slice(s![t, .., ..]);
            }
            let dh_s = dh_next.as_slice().expect("contiguous");
            let dc_s = dc_next.as_slice_mut().expect("contiguous");
            let g_all = cache.gates.as_slice().expect("contiguous");
            let c_all = cache.c.as_slice().expect("contiguous");
            let tc_all = cache.tanh_c.as_slice().expect("contiguous");
            let da_all = da.as_slice_mut().expect("contiguous");
            for k in 0..batch {
                let r = t * batch + k;
                let g = &g_all[r * 4 * hd..(r + 1) * 4 * hd];
                let c_prev = &c_all[r * hd..(r + 1) * hd];
                let tc = &tc_all[r * hd..(r + 1) * hd];
                let da_row = &mut da_all[r * 4 * hd..(r + 1) * 4 * hd];
                for j in 0..hd {
                    let (ig, fg, og, gg) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                    let dh = dh_s[k * hd + j];
                    let dc = dh * og * (1.0 - tc[j] * tc[j]) + dc_s[k * hd + j];
                    da_row[j] = dc * gg * ig * (1.0 - ig);
                    da_row[hd + j] = dc * c_prev[j] * fg * (1.0 - fg);
                    da_row[2 * hd + j] = dh * tc[j] * og * (1.0 - og);
                    da_row[3 * hd + j] = dc * ig * (1.0 - gg * gg);
                    dc_s[k * hd + j] = dc * fg;
                }
            }
            dh_next = da.slice(s![t * batch..(t + 1) * batch, ..]).dot(&w_h);
        }
        let mut dw = Array2::zeros(self.w.raw_dim());
        dw.slice_mut(s![.., ..self.input]).assign(&da.t().dot(&cache.x));
        let h_prev = cache.h.slice(s![..steps * batch, ..]);
        dw.slice_mut(s![.., self.input..]).assign(&da.t().dot(&h_prev));
        let db = da.sum_axis(Axis(0));
        let dx = da
            .dot(&self.w.slice(s![.., ..self.input]))
            .into_shape_with_order((steps, batch, self.input))
            .expect("contiguous");
        Ok(LstmGrads { dw, db, dx })
    }
}

impl Params for LstmCell {
    fn slices(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice().expect("standard layout"), self.b.as_slice().expect("standard layout")]
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_slice_mut().expect("standard layout"), self.b.as_slice_mut().expect("standard layout")]
    }
}

impl LstmGrads {
    pub fn into_cell(self, like: &LstmCell) -> LstmCell {
        LstmCell { w: self.dw, b: self.db, input: like.input, hidden: like.hidden }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_cell_gives_zero_hidden_states() {
        let cell = LstmCell { w: Array2::zeros((8, 5)), b: Array1::zeros(8), input: 3, hidden: 2 };
        let x = Array3::from_shape_fn((6, 2, 3), |(t, k, i)| (t + k + i) as f64);
        let cache = cell.forward(x.view()).unwrap();
        assert!(cache.hidden_states().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_hand_computed_cell() {
        let cell = LstmCell::new(3, 4, 1.0, &mut rng(1));
        let x = Array3::from_shape_fn((1, 1, 3), |(_, _, i)| 0.3 * i as f64 - 0.2);
        let h = cell.forward(x.view()).unwrap().final_hidden().to_owned();
        let xv: Vec<f64> = x.iter().copied().chain(std::iter::repeat(0.0).take(4)).collect();
        let pre = |gate: Gate, j: usize| {
            let row = cell.gate_weights(gate).row(j).to_owned();
            row.iter().zip(&xv).map(|(a, b)| a * b).sum::<f64>() + cell.b[gate.block() * 4 + j]
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for j in 0..4 {
            let c = sig(pre(Gate::Input, j)) * pre(Gate::Candidate, j).tanh();
            let expected = sig(pre(Gate::Output, j)) * c.tanh();
            assert!((h[[0, j]] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_entries_are_independent() {
        let cell = LstmCell::new(2, 3, 1.0, &mut rng(2));
        let x = Array3::from_shape_fn((4, 3, 2), |(t, k, i)| ((t * 5 + k * 3 + i) as f64).sin());
        let all = cell.forward(x.view()).unwrap();
        for k in 0..3 {
            let one = cell.forward(x.slice(s![.., k..k + 1, ..])).unwrap();
            for j in 0..3 {
                assert!((one.final_hidden()[[0, j]] - all.final_hidden()[[k, j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gates_stay_inside_unit_interval_under_extreme_input() {
        let cell = LstmCell::new(2, 3, 1.0, &mut rng(3));
        let x = Array3::from_shape_fn((3, 1, 2), |(t, _, i)| if (t + i) % 2 == 0 { 1e4 } else { -1e4 });
        let cache = cell.forward(x.view()).unwrap();
        let hd = 3;
        for row in cache.gates().rows() {
            for &v in row.slice(s![..3 * hd]) {
                assert!(v > 0.0 && v < 1.0);
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let cell = LstmCell::new(2, 3, 1.0, &mut rng(4));
        assert!(cell.forward(Array3::zeros((0, 1, 2)).view()).is_err());
        assert!(cell.forward(Array3::zeros((3, 1, 4)).view()).is_err());
        let cache = cell.forward(Array3::zeros((3, 1, 2)).view()).unwrap();
        assert!(cell.backward(&cache, None, Some(Array2::zeros((2, 3)).view())).is_err());
    }

    #[test]
    fn forget_bias_is_one() {
        let cell = LstmCell::new(2, 3, 1.0, &mut rng(5));
        assert_eq!(cell.b.to_vec(), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
