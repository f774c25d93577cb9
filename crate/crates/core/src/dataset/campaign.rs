use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{campaign_label, io, Dataset, DatasetError, DatasetManifest, Example, Label, Task};
use crate::grid::NetworkModel;
use crate::transient::{
    draw_fluctuation, simulate, FaultKind, FaultScenario, FluctuationBounds, PmuSeries,
    ScenarioRecord,
};

const MAX_ATTEMPTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub runs_per_bus: usize,
    pub seed: u64,
    pub fluctuation: FluctuationBounds,
    /// Per-run multiplicative spread of the base operating point (loads and
    /// generator set-points), drawn before the power flow.
    pub operating_spread: f64,
    pub t_apply: f64,
    pub t_apply_jitter: f64,
    pub fault_duration: f64,
    pub duration_jitter: f64,
    /// Reactance of the LL/LG fault impedance, scaled by `zf_scale`.
    pub zf_unsymmetrical: f64,
    pub zf_scale: (f64, f64),
    /// Largest tolerated share of diverged simulations.
    pub max_divergence: f64,
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl CampaignConfig {
    pub fn new(runs_per_bus: usize, seed: u64) -> Self {
        Self {
            runs_per_bus,
            seed,
            fluctuation: FluctuationBounds::default(),
            operating_spread: 0.1,
            t_apply: 1.0,
            t_apply_jitter: 0.4,
            fault_duration: 0.2,
            duration_jitter: 0.1,
            zf_unsymmetrical: 0.01,
            zf_scale: (0.5, 2.0),
            max_divergence: 0.1,
            jobs: None,
        }
    }
}

/// SplitMix64-style mixing of a base seed with two stream indices.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
struct Job {
    kind: FaultKind,
    bus: Option<usize>,
    run: usize,
}

fn jobs_for(task: Task, n_buses: usize, runs_per_bus: usize) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &kind in task.fault_kinds() {
        for bus in 1..=n_buses {
            for run in 0..runs_per_bus {
                jobs.push(Job { kind, bus: Some(bus), run });
            }
        }
    }
    if task.has_no_fault_pool() {
        for bus in 1..=n_buses {
            for run in 0..runs_per_bus {
                jobs.push(Job { kind: FaultKind::None, bus: Some(bus), run });
            }
        }
    }
    jobs
}

fn perturbed_network(net: &NetworkModel, spread: f64, rng: &mut ChaCha8Rng) -> NetworkModel {
    let mut out = net.clone();
    let factor = |rng: &mut ChaCha8Rng| 1.0 + spread * (2.0 * rng.gen::<f64>() - 1.0);
    for load in &mut out.loads {
        load.p *= factor(rng);
        load.q *= factor(rng);
    }
    for g in &mut out.generators {
        g.p_set *= factor(rng);
    }
    out
}

fn draw_scenario(net: &NetworkModel, job: Job, cfg: &CampaignConfig, rng: &mut ChaCha8Rng) -> FaultScenario {
    let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.gen::<f64>();
    let t_apply = cfg.t_apply + uniform(-cfg.t_apply_jitter, cfg.t_apply_jitter);
    let t_clear = t_apply + cfg.fault_duration + uniform(-cfg.duration_jitter, cfg.duration_jitter);
    let bus = job.bus.expect("fault jobs carry a bus");
    match job.kind {
        FaultKind::None => FaultScenario::none(),
        FaultKind::ThreePhaseBus => FaultScenario::bus_fault(job.kind, bus, t_apply, t_clear, Complex64::new(0.0, 0.0)),
        FaultKind::LineLine | FaultKind::LineGround => {
            let x = cfg.zf_unsymmetrical * uniform(cfg.zf_scale.0, cfg.zf_scale.1);
            FaultScenario::bus_fault(job.kind, bus, t_apply, t_clear, Complex64::new(0.0, x))
        }
        FaultKind::BranchTrip => {
            // Trips cycle through the bus's branches whose loss keeps the grid connected.
            let candidates: Vec<usize> = net
                .incident_branches(bus)
                .into_iter()
                .filter(|&k| net.branches[k].in_service && net.is_connected_without(Some(k)))
                .collect();
            let branch = candidates[job.run % candidates.len()];
            FaultScenario::branch_trip(branch, t_apply, t_clear)
        }
    }
}

fn label_key(task: Task, label: &Label) -> String {
    match (task, label) {
        (Task::FaultType, Label::Class(c)) => ["ll", "lg", "none"][*c].to_string(),
        (_, Label::Class(c)) => c.to_string(),
        (_, Label::Vector(_)) => "deviation".to_string(),
    }
}

fn run_job(
    net: &NetworkModel,
    task: Task,
    cfg: &CampaignConfig,
    id: usize,
    job: Job,
) -> Result<(PmuSeries, usize), DatasetError> {
    let mut failures = 0;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = derive_seed(cfg.seed, id as u64, attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = perturbed_network(net, cfg.operating_spread, &mut rng);
        let plan = draw_fluctuation(rng.gen(), &cfg.fluctuation, net.n_buses())?;
        let scenario = draw_scenario(net, job, cfg, &mut rng);
        debug_assert!(task.accepts(scenario.kind));
        match simulate(&base, &scenario, &plan, seed) {
            Ok(series) => return Ok((series, failures)),
            Err(_) => failures += 1,
        }
    }
    Err(DatasetError::CampaignInfeasible { diverged: failures, total: MAX_ATTEMPTS })
}

/// Runs a campaign in memory: `runs_per_bus` scenarios per bus for each of
/// the task's fault kinds, plus an equally sized no-fault pool for
/// classification tasks. Each run's seed depends only on the campaign seed
/// and its index, so the result is independent of `cfg.jobs`.
pub fn generate(net: &NetworkModel, task: Task, cfg: &CampaignConfig) -> Result<Dataset, DatasetError> {
    if cfg.runs_per_bus == 0 {
        return Err(DatasetError::Invalid("runs_per_bus must be at least 1".into()));
    }
    net.validate().map_err(crate::transient::SimError::from)?;
    let jobs = jobs_for(task, net.n_buses(), cfg.runs_per_bus);
    let run_all = || -> Vec<Result<(PmuSeries, usize), DatasetError>> {
        jobs.par_iter().enumerate().map(|(id, &job)| run_job(net, task, cfg, id, job)).collect()
    };
    let results = match cfg.jobs {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| DatasetError::Invalid(e.to_string()))?
            .install(run_all),
        None => run_all(),
    };

    let mut examples = Vec::with_capacity(jobs.len());
    let mut redraws = 0;
    for (id, r) in results.into_iter().enumerate() {
        let (series, failed) = r.map_err(|_| DatasetError::CampaignInfeasible {
            diverged: redraws + MAX_ATTEMPTS,
            total: jobs.len(),
        })?;
        redraws += failed;
        let label = campaign_label(task, &series);
        examples.push(Example { id, series, label });
    }
    if redraws as f64 > cfg.max_divergence * jobs.len() as f64 {
        return Err(DatasetError::CampaignInfeasible { diverged: redraws, total: jobs.len() });
    }

    let mut counts = BTreeMap::new();
    for ex in &examples {
        *counts.entry(label_key(task, &ex.label)).or_insert(0) += 1;
    }
    let strata = examples
        .iter()
        .zip(&jobs)
        .map(|(ex, job)| ex.label.class().unwrap_or(job.bus.unwrap_or(0)))
        .collect();
    let mut manifest = DatasetManifest {
        task,
        n_buses: net.n_buses(),
        runs_per_bus: cfg.runs_per_bus,
        seed: cfg.seed,
        network_hash: net.fingerprint(),
        campaign: cfg.clone(),
        counts,
        strata,
        scenarios: examples.iter().map(|e| ScenarioRecord::from_series(&e.series)).collect(),
        redraws,
        split: None,
        normalization: None,
        hash: String::new(),
    };
    manifest.hash = manifest.compute_hash();
    Ok(Dataset { manifest, examples })
}

/// Generates a campaign and writes it to `dir`.
pub fn generate_campaign(
    net: &NetworkModel,
    task: Task,
    cfg: &CampaignConfig,
    dir: &Path,
) -> Result<Dataset, DatasetError> {
    let ds = generate(net, task, cfg)?;
    io::write_dataset(&ds, dir)?;
    Ok(ds)
}
