use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use gridfault::dataset::{generate, load_dataset, write_dataset, CampaignConfig, Channels, Task};
use gridfault::grid::{Impedance, NetworkModel};
use gridfault::neuro::OptimizerKind;
use gridfault::tasks::{
    default_config, evaluate, train_fault_type_with, train_forecaster, train_locator_with, EvalReport,
    FaultTypeVariant, Side, TaskModel, TrainOutcome,
};
use gridfault::transient::{
    draw_fluctuation, simulate, write_series, FaultKind, FaultScenario, FluctuationBounds, FluctuationPlan,
};
use serde_json::{json, Value};

use crate::provenance::{resolve_seed, sha256_file, write_record, RunRecord};
use crate::{
    plot, ChannelArg, Cli, CliError, Command, DatasetArgs, EvalArgs, FaultArg, ModelArg, NetArgs, OptimizerArg,
    PlotArgs, SideArg, SimulateArgs, TaskArg, TrainArgs,
};

pub const DATA_DIR_ENV: &str = "GRIDFAULT_DATA_DIR";

/// Shared state of one invocation.
struct Ctx<'a> {
    cli: &'a Cli,
    seed: u64,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
}

impl Ctx<'_> {
    fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(())
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    match &cli.out {
        Some(p) => p.clone(),
        None => {
            let root = std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("gridfault-out"), PathBuf::from);
            root.join(cli.command.name())
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (seed, source) = resolve_seed(cli.seed);
    let out = out_dir(cli);
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut ctx = Ctx { cli, seed, out, inputs: BTreeMap::new(), outputs: Vec::new() };
    let summary = match &cli.command {
        Command::NetValidate(a) => net_validate(&mut ctx, a)?,
        Command::Simulate(a) => simulate_cmd(&mut ctx, a)?,
        Command::Dataset(a) => dataset_cmd(&mut ctx, a)?,
        Command::Train(a) => train_cmd(&mut ctx, a)?,
        Command::Eval(a) => eval_cmd(&mut ctx, a)?,
        Command::PlotData(a) => plot_cmd(&mut ctx, a)?,
    };
    // A closed stdout (`| head`) must not abort before run.json is written.
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    let rec = RunRecord {
        tool: "gridfault",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name(),
        args: ctx.cli,
        seed: ctx.seed,
        seed_source: source,
        inputs: ctx.inputs,
        outputs: ctx.outputs,
        summary,
    };
    write_record(&ctx.out, &rec)
}

/// Reads the network file. A missing `ref23.json` resolves to the built-in copy.
fn load_net(ctx: &mut Ctx<'_>, a: &NetArgs) -> Result<NetworkModel, CliError> {
    if a.net.exists() {
        ctx.input(&a.net)?;
        return Ok(NetworkModel::load(&a.net)?);
    }
    if a.net.file_name().is_some_and(|n| n == "ref23.json") {
        ctx.inputs.insert("builtin:ref23.json".into(), NetworkModel::ref23().fingerprint());
        return Ok(NetworkModel::ref23());
    }
    Err(CliError::parse(&a.net, "no such file"))
}

fn net_validate(ctx: &mut Ctx<'_>, a: &NetArgs) -> Result<Value, CliError> {
    let net = load_net(ctx, a)?;
    net.validate()?;
    Ok(json!({
        "buses": net.buses.len(),
        "branches": net.branches.len(),
        "generators": net.generators.len(),
        "loads": net.loads.len(),
        "fingerprint": net.fingerprint(),
    }))
}

fn fault_kind(f: FaultArg) -> FaultKind {
    match f {
        FaultArg::None => FaultKind::None,
        FaultArg::ThreePhase => FaultKind::ThreePhaseBus,
        FaultArg::Ll => FaultKind::LineLine,
        FaultArg::Lg => FaultKind::LineGround,
        FaultArg::Trip => FaultKind::BranchTrip,
    }
}

fn simulate_cmd(ctx: &mut Ctx<'_>, a: &SimulateArgs) -> Result<Value, CliError> {
    let net = load_net(ctx, &a.net)?;
    let kind = fault_kind(a.fault);
    let scenario = match kind {
        FaultKind::None => FaultScenario::none(),
        FaultKind::BranchTrip => FaultScenario::branch_trip(
            a.branch.ok_or_else(|| CliError::Invalid("--fault trip needs --branch".into()))?,
            a.t_apply,
            a.t_clear,
        ),
        _ => FaultScenario {
            kind,
            bus: Some(a.bus.ok_or_else(|| CliError::Invalid(format!("--fault {} needs --bus", kind.name())))?),
            branch: None,
            t_apply: a.t_apply,
            t_clear: a.t_clear,
            zf: Impedance::new(a.zf_r, a.zf_x),
        },
    };
    let plan = if a.no_fluctuation {
        FluctuationPlan::none(net.n_buses())
    } else {
        draw_fluctuation(ctx.seed, &FluctuationBounds::default(), net.n_buses())?
    };
    let series = simulate(&net, &scenario, &plan, ctx.seed)?;
    write_series(&series, &ctx.out).map_err(|e| CliError::io(&ctx.out, e))?;
    ctx.outputs.extend(["pmu.csv".to_string(), "scenario.json".to_string()]);
    let min = series.v_mag.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(json!({
        "fault": kind.name(),
        "samples": series.steps(),
        "buses": series.n_buses(),
        "min_v_mag": min,
        "fluctuation_t_step": plan.t_step,
    }))
}

fn task_of(t: TaskArg) -> Task {
    match t {
        TaskArg::Forecast => Task::Forecast,
        TaskArg::FaultType => Task::FaultType,
        TaskArg::Locate3Phi => Task::Locate3Phi,
        TaskArg::LocateLl => Task::LocateLL,
    }
}

/// Train share of the split when `--train-fraction` is absent.
pub fn default_train_fraction(task: Task) -> f64 {
    match task {
        Task::Forecast => 0.8,
        _ => 2000.0 / 2300.0,
    }
}

fn dataset_cmd(ctx: &mut Ctx<'_>, a: &DatasetArgs) -> Result<Value, CliError> {
    let net = load_net(ctx, &a.net)?;
    let task = task_of(a.task);
    let cfg = CampaignConfig { jobs: a.jobs, ..CampaignConfig::new(a.runs_per_bus, ctx.seed) };
    let mut ds = generate(&net, task, &cfg)?;
    ds.split_and_normalize(a.train_fraction.unwrap_or(default_train_fraction(task)), ctx.seed)?;
    write_dataset(&ds, &ctx.out)?;
    ctx.outputs.extend(["manifest.json".to_string(), "labels.csv".to_string(), "examples/".to_string()]);
    let split = ds.manifest.split.as_ref().expect("split above");
    Ok(json!({
        "task": task.name(),
        "examples": ds.examples.len(),
        "counts": ds.manifest.counts,
        "train": split.train.len(),
        "test": split.test.len(),
        "redraws": ds.manifest.redraws,
        "hash": ds.manifest.hash,
    }))
}

fn channels_of(c: ChannelArg) -> Channels {
    match c {
        ChannelArg::Mag => Channels::Magnitude,
        ChannelArg::MagAngle => Channels::MagnitudeAngle,
    }
}

fn write_report(ctx: &mut Ctx<'_>, report: &EvalReport) -> Result<(), CliError> {
    ctx.write("report.json", &report.to_json())?;
    if !report.confusion.is_empty() {
        ctx.write("confusion.csv", &report.confusion_csv())?;
    }
    Ok(())
}

fn report_summary(r: &EvalReport) -> Value {
    json!({
        "task": r.task.name(),
        "model": r.model,
        "side": r.side,
        "size": r.test_size,
        "accuracy": r.accuracy,
        "mean_l1": r.mean_l1,
        "mean_l2": r.mean_l2,
        "no_fault_recall": r.no_fault_recall,
    })
}

fn train_cmd(ctx: &mut Ctx<'_>, a: &TrainArgs) -> Result<Value, CliError> {
    let manifest = a.data.join("manifest.json");
    ctx.input(&manifest)?;
    let ds = load_dataset(&a.data)?;
    let task = ds.manifest.task;
    let model = a.model.unwrap_or(if task == Task::Forecast { ModelArg::Forecaster } else { ModelArg::Lstm });
    let variant = match model {
        ModelArg::Svm => Some(FaultTypeVariant::Svm),
        ModelArg::Lstm => Some(FaultTypeVariant::Lstm),
        ModelArg::Forecaster => None,
    };
    let mut cfg = default_config(task, variant, ctx.seed);
    if let Some(o) = a.optimizer {
        cfg.optimizer = match o {
            OptimizerArg::Sgd => OptimizerKind::Sgd,
            OptimizerArg::Adam => OptimizerKind::Adam,
        };
    }
    cfg.learning_rate = a.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    cfg.steps = a.steps.unwrap_or(cfg.steps);
    cfg.init_scale = a.init_scale.unwrap_or(cfg.init_scale);
    if let Some(c) = a.grad_clip {
        cfg.grad_clip = (c > 0.0).then_some(c);
    }

    let outcome: TrainOutcome = match (task, model) {
        (Task::Forecast, ModelArg::Forecaster) => train_forecaster(&ds, &cfg)?,
        (Task::FaultType, ModelArg::Svm | ModelArg::Lstm) => {
            let v = variant.expect("classifier variant");
            let ch = a.channels.map_or(v.default_channels(), channels_of);
            train_fault_type_with(&ds, v, ch, &cfg)?
        }
        (Task::Locate3Phi | Task::LocateLL, ModelArg::Lstm) => {
            train_locator_with(&ds, a.channels.map_or(Channels::Magnitude, channels_of), &cfg)?
        }
        (t, m) => {
            return Err(CliError::Invalid(format!("model {m:?} does not apply to {} datasets", t.name())));
        }
    };
    let ckpt = ctx.out.join("model.ckpt");
    outcome.model.save(&ckpt)?;
    ctx.outputs.push("model.ckpt".into());
    ctx.write("trace.csv", &outcome.trace.to_csv())?;
    write_report(ctx, &outcome.report)?;
    Ok(json!({
        "config": cfg,
        "final_train_loss": outcome.trace.final_loss,
        "final_train_accuracy": outcome.trace.final_accuracy,
        "test": report_summary(&outcome.report),
    }))
}

fn eval_cmd(ctx: &mut Ctx<'_>, a: &EvalArgs) -> Result<Value, CliError> {
    ctx.input(&a.model)?;
    ctx.input(&a.data.join("manifest.json"))?;
    let model = TaskModel::load(&a.model)?;
    let ds = load_dataset(&a.data)?;
    let side = match a.side {
        SideArg::Train => Side::Train,
        SideArg::Test => Side::Test,
    };
    let report = evaluate(&model, &ds, side)?;
    write_report(ctx, &report)?;
    Ok(report_summary(&report))
}

fn plot_cmd(ctx: &mut Ctx<'_>, a: &PlotArgs) -> Result<Value, CliError> {
    let (kind, csv) = plot::render(&a.input, a.kind, a.reference_bus)?;
    if a.input.is_file() {
        ctx.input(&a.input)?;
    } else {
        ctx.input(&a.input.join("pmu.csv"))?;
    }
    let name = plot::output_name(kind);
    ctx.write(&name.to_string_lossy(), &csv)?;
    Ok(json!({ "kind": kind, "rows": csv.lines().count().saturating_sub(1), "file": name }))
}
