//! Long-format `series,x,y` exports for external plotting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gridfault::transient::{max_voltage_deviation, read_pmu_csv, sample_time, FaultScenario, PmuSeries, ScenarioRecord};

use crate::{CliError, PlotKind};

pub const PLOT_HEADER: &str = "series,x,y";
const TRACE_HEADER: &str = "step,loss,accuracy";

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::parse(path, e))
}

/// `pmu.csv` plus its optional `scenario.json` sidecar, from a run
/// directory or the CSV path itself.
pub fn load_run(input: &Path) -> Result<PmuSeries, CliError> {
    let (csv, sidecar) = if input.is_dir() {
        (input.join("pmu.csv"), input.join("scenario.json"))
    } else {
        (input.to_path_buf(), input.with_file_name("scenario.json"))
    };
    let (scenario, seed) = if sidecar.exists() {
        let rec: ScenarioRecord = serde_json::from_str(&read(&sidecar)?).map_err(|e| CliError::parse(&sidecar, e))?;
        (rec.scenario(), rec.seed)
    } else {
        (FaultScenario::none(), 0)
    };
    read_pmu_csv(&read(&csv)?, scenario, seed).map_err(|e| CliError::parse(&csv, e))
}

fn push(out: &mut String, series: &str, x: impl std::fmt::Display, y: f64) {
    let _ = writeln!(out, "{series},{x},{y}");
}

pub fn voltage(s: &PmuSeries) -> String {
    let mut out = format!("{PLOT_HEADER}\n");
    for i in 0..s.n_buses() {
        for k in 0..s.steps() {
            push(&mut out, &format!("bus{}", i + 1), format!("{:.2}", sample_time(k)), s.v_mag[[k, i]]);
        }
    }
    out
}

/// The faulted bus and one reference bus from the same run.
pub fn fault_compare(s: &PmuSeries, reference: Option<usize>, path: &Path) -> Result<String, CliError> {
    let fault = s
        .scenario
        .bus
        .ok_or_else(|| CliError::parse(path, "scenario has no faulted bus"))?;
    let other = reference.unwrap_or(if fault == 1 { 2 } else { 1 });
    if other == fault || other == 0 || other > s.n_buses() || fault > s.n_buses() {
        return Err(CliError::Invalid(format!("reference bus {other} must differ from fault bus {fault} and exist")));
    }
    let mut out = format!("{PLOT_HEADER}\n");
    for (name, bus) in [(format!("faulted_bus{fault}"), fault), (format!("bus{other}"), other)] {
        for k in 0..s.steps() {
            push(&mut out, &name, format!("{:.2}", sample_time(k)), s.v_mag[[k, bus - 1]]);
        }
    }
    Ok(out)
}

pub fn deviation(s: &PmuSeries) -> String {
    let mut out = format!("{PLOT_HEADER}\n");
    for (i, d) in max_voltage_deviation(s).into_iter().enumerate() {
        push(&mut out, "max_deviation", i + 1, d);
    }
    out
}

/// `step,loss,accuracy` → `loss` and (when present) `accuracy` series.
pub fn trace(text: &str, path: &Path) -> Result<String, CliError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => return Err(CliError::parse(path, format!("line 1: expected header `{TRACE_HEADER}`"))),
    }
    let mut loss = format!("{PLOT_HEADER}\n");
    let mut acc = String::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || CliError::parse(path, format!("line {}: malformed row `{line}`", ln + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let step: usize = f[0].parse().map_err(|_| bad())?;
        let l: f64 = f[1].parse().map_err(|_| bad())?;
        push(&mut loss, "loss", step, l);
        if !f[2].is_empty() {
            let a: f64 = f[2].parse().map_err(|_| bad())?;
            push(&mut acc, "accuracy", step, a);
        }
    }
    Ok(loss + &acc)
}

fn is_trace(input: &Path) -> bool {
    input.is_file() && std::fs::read_to_string(input).is_ok_and(|t| t.lines().next().map(str::trim) == Some(TRACE_HEADER))
}

/// Resolves `auto` and renders the requested series.
pub fn render(input: &Path, kind: PlotKind, reference: Option<usize>) -> Result<(PlotKind, String), CliError> {
    if !input.exists() {
        return Err(CliError::parse(input, "no such file or directory"));
    }
    let kind = match kind {
        PlotKind::Auto if is_trace(input) => PlotKind::Trace,
        PlotKind::Auto => PlotKind::Voltage,
        k => k,
    };
    let csv = match kind {
        PlotKind::Trace => trace(&read(input)?, input)?,
        PlotKind::Voltage => voltage(&load_run(input)?),
        PlotKind::Deviation => deviation(&load_run(input)?),
        PlotKind::FaultCompare => fault_compare(&load_run(input)?, reference, input)?,
        PlotKind::Auto => unreachable!("resolved above"),
    };
    Ok((kind, csv))
}

pub fn output_name(kind: PlotKind) -> PathBuf {
    PathBuf::from(match kind {
        PlotKind::Trace => "trace_plot.csv",
        PlotKind::Deviation => "deviation_plot.csv",
        PlotKind::FaultCompare => "fault_compare_plot.csv",
        PlotKind::Voltage | PlotKind::Auto => "voltage_plot.csv",
    })
}
