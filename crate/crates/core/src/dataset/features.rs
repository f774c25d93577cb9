use ndarray::{s, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{campaign_label, DatasetError, Label, Task};
use crate::transient::{PmuSeries, ScenarioRecord};

/// Which PMU channels a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channels {
    Magnitude,
    MagnitudeAngle,
}

impl Channels {
    pub fn count(self) -> usize {
        match self {
            Channels::Magnitude => 1,
            Channels::MagnitudeAngle => 2,
        }
    }
}

/// Model-ready tensor (time × bus × channel) with its label. The fault
/// location is only ever in `label`/`meta`, never in `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: Array3<f64>,
    pub label: Label,
    pub meta: ScenarioRecord,
}

impl LabeledExample {
    /// steps × (buses · channels), bus-major within a row.
    pub fn sequence(&self, channels: Channels) -> Array2<f64> {
        let (t, n, _) = self.features.dim();
        let c = channels.count();
        let view = self.features.slice(s![.., .., ..c]);
        view.to_owned().into_shape_with_order((t, n * c)).expect("contiguous")
    }

    pub fn flat(&self, channels: Channels) -> Vec<f64> {
        self.sequence(channels).into_raw_vec_and_offset().0
    }
}

pub fn featurize(series: &PmuSeries, task: Task) -> Result<LabeledExample, DatasetError> {
    let kind = series.scenario.kind;
    if !task.accepts(kind) {
        return Err(DatasetError::TaskMismatch(format!(
            "{} scenario cannot feed the {} task",
            kind.name(),
            task.name()
        )));
    }
    let (steps, n) = series.v_mag.dim();
    let features = match task {
        Task::Forecast => series.v_mag.slice(s![0..1, ..]).to_owned().insert_axis(Axis(2)),
        _ => {
            let mut f = Array3::zeros((steps, n, 2));
            f.slice_mut(s![.., .., 0]).assign(&series.v_mag);
            f.slice_mut(s![.., .., 1]).assign(&series.v_ang);
            f
        }
    };
    if features.iter().any(|v| !v.is_finite()) {
        return Err(DatasetError::Invalid("non-finite feature value".into()));
    }
    Ok(LabeledExample { features, label: campaign_label(task, series), meta: ScenarioRecord::from_series(series) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// One affine map per channel, pooled over time and buses.
    PerChannel,
    /// One affine map per (bus, channel), pooled over time.
    PerFeature,
}

/// Zero-mean/unit-variance map fitted on a train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mode: NormMode,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Fingerprint of the example ids the statistics came from.
    pub fitted_on: String,
}

pub fn ids_fingerprint(ids: &[usize]) -> String {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for id in sorted {
        h.update((id as u64).to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl Normalizer {
    fn slot(&self, bus: usize, ch: usize, channels: usize) -> usize {
        match self.mode {
            NormMode::PerChannel => ch,
            NormMode::PerFeature => bus * channels + ch,
        }
    }

    pub fn fit(examples: &[&LabeledExample], ids: &[usize], mode: NormMode) -> Result<Self, DatasetError> {
        let first = examples.first().ok_or_else(|| DatasetError::TooFewExamples("cannot fit on nothing".into()))?;
        let (_, n, c) = first.features.dim();
        let slots = match mode {
            NormMode::PerChannel => c,
            NormMode::PerFeature => n * c,
        };
        let mut probe = Self { mode, mean: vec![0.0; slots], std: vec![0.0; slots], fitted_on: ids_fingerprint(ids) };
        let mut count = vec![0usize; slots];
        let mut sum = vec![0.0; slots];
        for ex in examples {
            for ((_, b, ch), v) in ex.features.indexed_iter() {
                let k = probe.slot(b, ch, c);
                sum[k] += v;
                count[k] += 1;
            }
        }
        for k in 0..slots {
            probe.mean[k] = sum[k] / count[k] as f64;
        }
        let mut sq = vec![0.0; slots];
        for ex in examples {
            for ((_, b, ch), v) in ex.features.indexed_iter() {
                let k = probe.slot(b, ch, c);
                sq[k] += (v - probe.mean[k]).powi(2);
            }
        }
        for k in 0..slots {
            let sd = (sq[k] / count[k] as f64).sqrt();
            probe.std[k] = if sd > 1e-12 { sd } else { 1.0 };
        }
        Ok(probe)
    }

    pub fn apply(&self, features: &Array3<f64>) -> Array3<f64> {
        let c = features.dim().2;
        let mut out = features.clone();
        for ((_, b, ch), v) in out.indexed_iter_mut() {
            let k = self.slot(b, ch, c);
            *v = (*v - self.mean[k]) / self.std[k];
        }
        out
    }

    pub fn normalize(&self, ex: &LabeledExample) -> LabeledExample {
        LabeledExample { features: self.apply(&ex.features), label: ex.label.clone(), meta: ex.meta.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transient::{FaultKind, FaultScenario, SAMPLES, SAMPLE_DT};
    use num_complex::Complex64;

    fn series(kind: FaultKind, bus: Option<usize>, n: usize) -> PmuSeries {
        let mut scenario = FaultScenario::none();
        if let Some(b) = bus {
            scenario = FaultScenario::bus_fault(kind, b, 1.0, 1.2, Complex64::new(0.0, 0.0));
        }
        let v_mag = Array2::from_shape_fn((SAMPLES, n), |(t, i)| 1.0 - 0.001 * (t as f64) * (i as f64 + 1.0));
        let v_ang = Array2::from_shape_fn((SAMPLES, n), |(t, i)| 0.01 * (i as f64) - 1e-4 * t as f64);
        PmuSeries { dt: SAMPLE_DT, v_mag, v_ang, scenario, seed: 0 }
    }

    #[test]
    fn locate_labels() {
        let nf = featurize(&series(FaultKind::None, None, 4), Task::Locate3Phi).unwrap();
        assert_eq!(nf.label, Label::Class(0));
        let f = featurize(&series(FaultKind::ThreePhaseBus, Some(7), 9), Task::Locate3Phi).unwrap();
        assert_eq!(f.label, Label::Class(7));
        assert_eq!(f.features.dim(), (SAMPLES, 9, 2));
    }

    #[test]
    fn task_mismatch() {
        let s = series(FaultKind::LineGround, Some(2), 4);
        assert!(matches!(featurize(&s, Task::Locate3Phi), Err(DatasetError::TaskMismatch(_))));
        assert!(matches!(featurize(&s, Task::Forecast), Err(DatasetError::TaskMismatch(_))));
    }

    #[test]
    fn forecast_on_constant_series() {
        let mut s = series(FaultKind::BranchTrip, None, 5);
        s.scenario = FaultScenario::branch_trip(0, 1.0, 1.2);
        s.v_mag.fill(1.01);
        let ex = featurize(&s, Task::Forecast).unwrap();
        assert_eq!(ex.label, Label::Vector(vec![0.0; 5]));
        assert_eq!(ex.features.dim(), (1, 5, 1));
        assert!(ex.features.iter().all(|&v| v == 1.01));
    }

    #[test]
    fn permuting_buses_of_no_fault_example_only_permutes_columns() {
        let s = series(FaultKind::None, None, 5);
        let perm = [3, 0, 4, 1, 2];
        let mut p = s.clone();
        for (dst, &src) in perm.iter().enumerate() {
            p.v_mag.column_mut(dst).assign(&s.v_mag.column(src));
            p.v_ang.column_mut(dst).assign(&s.v_ang.column(src));
        }
        for task in [Task::Locate3Phi, Task::LocateLL, Task::FaultType] {
            let a = featurize(&s, task).unwrap();
            let b = featurize(&p, task).unwrap();
            assert_eq!(a.label, b.label);
            for (dst, &src) in perm.iter().enumerate() {
                assert_eq!(b.features.slice(s![.., dst, ..]), a.features.slice(s![.., src, ..]));
            }
        }
    }

    #[test]
    fn normalizer_centers_train_data() {
        let a = featurize(&series(FaultKind::None, None, 3), Task::LocateLL).unwrap();
        let b = featurize(&series(FaultKind::LineLine, Some(1), 3), Task::LocateLL).unwrap();
        let norm = Normalizer::fit(&[&a, &b], &[0, 1], NormMode::PerChannel).unwrap();
        let (na, nb) = (norm.apply(&a.features), norm.apply(&b.features));
        for ch in 0..2 {
            let vals: Vec<f64> = na
                .slice(s![.., .., ch])
                .iter()
                .chain(nb.slice(s![.., .., ch]).iter())
                .copied()
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
        }
        assert_eq!(norm.fitted_on, ids_fingerprint(&[1, 0]));
    }

    #[test]
    fn sequence_selects_channels() {
        let ex = featurize(&series(FaultKind::None, None, 3), Task::FaultType).unwrap();
        let mag = ex.sequence(Channels::Magnitude);
        assert_eq!(mag.dim(), (SAMPLES, 3));
        assert_eq!(mag[[10, 2]], ex.features[[10, 2, 0]]);
        let both = ex.sequence(Channels::MagnitudeAngle);
        assert_eq!(both.dim(), (SAMPLES, 6));
        assert_eq!(both[[10, 5]], ex.features[[10, 2, 1]]);
        assert_eq!(ex.flat(Channels::MagnitudeAngle).len(), SAMPLES * 6);
    }
}
