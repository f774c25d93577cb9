//! PMU series files: `pmu.csv` with header `t,bus,v_mag,v_ang` (one row per
//! sample and bus) and a `scenario.json` sidecar.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{sample_time, FaultKind, FaultScenario, PmuSeries, SimError, SAMPLE_DT};
use crate::grid::Impedance;

pub const PMU_HEADER: &str = "t,bus,v_mag,v_ang";

/// Contents of `scenario.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub kind: FaultKind,
    pub bus: Option<usize>,
    pub branch: Option<usize>,
    pub t_apply: f64,
    pub t_clear: f64,
    pub zf: Impedance,
    pub seed: u64,
    pub dt: f64,
    pub steps: usize,
}

impl ScenarioRecord {
    pub fn from_series(s: &PmuSeries) -> Self {
        let sc = &s.scenario;
        Self {
            kind: sc.kind,
            bus: sc.bus,
            branch: sc.branch,
            t_apply: sc.t_apply,
            t_clear: sc.t_clear,
            zf: sc.zf,
            seed: s.seed,
            dt: s.dt,
            steps: s.steps(),
        }
    }

    pub fn scenario(&self) -> FaultScenario {
        FaultScenario {
            kind: self.kind,
            bus: self.bus,
            branch: self.branch,
            t_apply: self.t_apply,
            t_clear: self.t_clear,
            zf: self.zf,
        }
    }
}

/// Values use Rust's shortest round-trip float formatting, so a
/// write/read cycle is bit-exact.
pub fn write_pmu_csv(series: &PmuSeries) -> String {
    let mut out = String::with_capacity(series.steps() * series.n_buses() * 48);
    out.push_str(PMU_HEADER);
    out.push('\n');
    for k in 0..series.steps() {
        for i in 0..series.n_buses() {
            let _ = writeln!(out, "{:.2},{},{},{}", sample_time(k), i + 1, series.v_mag[[k, i]], series.v_ang[[k, i]]);
        }
    }
    out
}

pub fn read_pmu_csv(text: &str, scenario: FaultScenario, seed: u64) -> Result<PmuSeries, SimError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == PMU_HEADER => {}
        _ => return Err(SimError::Io(format!("line 1: expected header `{PMU_HEADER}`"))),
    }
    let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = || SimError::Io(format!("line {}: malformed row `{line}`", ln + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(err());
        }
        let t: f64 = f[0].parse().map_err(|_| err())?;
        let bus: usize = f[1].parse().map_err(|_| err())?;
        let mag: f64 = f[2].parse().map_err(|_| err())?;
        let ang: f64 = f[3].parse().map_err(|_| err())?;
        let k = (t / SAMPLE_DT).round() as usize;
        if bus == 0 {
            return Err(err());
        }
        rows.push((k, bus - 1, mag, ang));
    }
    let steps = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let buses = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if steps * buses != rows.len() || rows.is_empty() {
        return Err(SimError::Io(format!(
            "expected a full {steps} x {buses} grid of rows, found {}",
            rows.len()
        )));
    }
    let mut v_mag = Array2::from_elem((steps, buses), f64::NAN);
    let mut v_ang = Array2::from_elem((steps, buses), f64::NAN);
    for (k, i, m, a) in rows {
        v_mag[[k, i]] = m;
        v_ang[[k, i]] = a;
    }
    if v_mag.iter().any(|v| v.is_nan()) {
        return Err(SimError::Io("duplicate or missing (t, bus) rows".into()));
    }
    Ok(PmuSeries { dt: SAMPLE_DT, v_mag, v_ang, scenario, seed })
}

/// Writes `pmu.csv` and `scenario.json` into `dir`.
pub fn write_series(series: &PmuSeries, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("pmu.csv"), write_pmu_csv(series))?;
    let rec = ScenarioRecord::from_series(series);
    std::fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(&rec)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transient::SAMPLES;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut v_mag = Array2::zeros((SAMPLES, 3));
        let mut v_ang = Array2::zeros((SAMPLES, 3));
        for k in 0..SAMPLES {
            for i in 0..3 {
                v_mag[[k, i]] = 1.0 / (1.0 + k as f64 * 0.37 + i as f64);
                v_ang[[k, i]] = -(k as f64).sqrt() * 1e-3 * (i as f64 + 0.1);
            }
        }
        let s = PmuSeries { dt: SAMPLE_DT, v_mag, v_ang, scenario: FaultScenario::none(), seed: 3 };
        let text = write_pmu_csv(&s);
        assert!(text.starts_with("t,bus,v_mag,v_ang\n0.00,1,"));
        let back = read_pmu_csv(&text, FaultScenario::none(), 3).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn malformed_row_names_line() {
        let err = read_pmu_csv("t,bus,v_mag,v_ang\n0.00,1,1.0\n", FaultScenario::none(), 0).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
