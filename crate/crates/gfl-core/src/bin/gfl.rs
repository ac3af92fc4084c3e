//! Command-line driver: graph generation, task runs over seeded trial
//! ensembles, and layer sweeps with consolidated CSV output.
//!
//! Exit codes: 0 all claimed bounds satisfied, 1 bound violation,
//! 2 configuration or input error.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gfl_core::constructions::{TaskKind, TaskSpec};
use gfl_core::graph::{generate_csl, generate_fc, identity_demands, sample_demands, DemandSet, Graph};
use gfl_core::linalg::sym_eig;
use gfl_core::verify::{run_task, Engine, ErrorReport};
use gfl_core::{GflError, Result};

#[derive(Parser)]
#[command(name = "gfl", about = "Linear graph transformer task runner", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a random graph, print its spectrum summary, write JSON.
    Generate(GenerateArgs),
    /// Run one task over seeded trials and emit per-layer reports.
    Run(RunArgs),
    /// Run one task at several depths and emit one final-layer row each.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Graph family: fc or csl.
    #[arg(long, default_value = "fc")]
    graph: String,
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Second neighbor offset for csl graphs.
    #[arg(long, default_value_t = 2)]
    skip: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the graph JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct TaskArgs {
    /// Task name, e.g. electric_gd, sqrt_series, heat_series, electric_fast,
    /// heat_fast, subspace_top_k, subspace_bottom_k.
    #[arg(long)]
    task: String,
    /// Graph source: fc, csl, or a path to a graph JSON file.
    #[arg(long, default_value = "fc")]
    graph: String,
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Second neighbor offset for csl graphs.
    #[arg(long, default_value_t = 2)]
    skip: usize,
    /// Demand or eigenvector column count.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Gradient step; defaults to 1/lambda_max of each trial graph.
    #[arg(long)]
    delta: Option<f64>,
    /// Diffusion time for the heat tasks.
    #[arg(long)]
    temp: Option<f64>,
    /// Spectral shift for subspace_bottom_k; defaults to lambda_max.
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Base seed; trial t uses seed + t. GFL_SEED overrides.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Project demand columns onto the zero-sum subspace.
    #[arg(long = "project-demands", value_enum, default_value_t = OnOff::On)]
    project_demands: OnOff,
    /// full runs dense layer weights; efficient runs the constrained recursion.
    #[arg(long, default_value = "full")]
    engine: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    task: TaskArgs,
    #[arg(long, default_value_t = 10)]
    layers: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    task: TaskArgs,
    /// Comma-separated depth list, e.g. 2,4,8. Empty emits only the header.
    #[arg(long, default_value = "")]
    layers: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Generate(args) => cmd_generate(args),
        Cmd::Run(args) => cmd_run(args),
        Cmd::Sweep(args) => cmd_sweep_layers(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn env_seed(flag_seed: u64) -> Result<u64> {
    match std::env::var("GFL_SEED") {
        Ok(text) => text
            .parse::<u64>()
            .map_err(|_| GflError::Constraint(format!("GFL_SEED must be a 64-bit integer, got {text:?}"))),
        Err(_) => Ok(flag_seed),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<ExitCode> {
    let seed = env_seed(args.seed)?;
    let g = match args.graph.as_str() {
        "fc" => generate_fc(args.n, seed)?,
        "csl" => generate_csl(args.n, args.skip, seed)?,
        other => {
            return Err(GflError::Constraint(format!(
                "generate needs --graph fc or csl, got {other}"
            )))
        }
    };
    let dec = sym_eig(g.laplacian().as_mat())?;
    g.write_file(&args.out)?;
    println!(
        "n={} d={} lambda_min={} lambda_max={}",
        g.n,
        g.d(),
        dec.eigenvalues[1],
        dec.eigenvalues.last().unwrap()
    );
    Ok(ExitCode::SUCCESS)
}

enum GraphSource {
    Fc,
    Csl,
    File(PathBuf),
}

impl GraphSource {
    fn parse(text: &str) -> Self {
        match text {
            "fc" => GraphSource::Fc,
            "csl" => GraphSource::Csl,
            other => GraphSource::File(PathBuf::from(other)),
        }
    }

    /// Builds the trial graph; file sources carry no generation seed.
    fn build(&self, n: usize, skip: usize, seed: u64) -> Result<(Graph, Option<u64>)> {
        match self {
            GraphSource::Fc => Ok((generate_fc(n, seed)?, Some(seed))),
            GraphSource::Csl => Ok((generate_csl(n, skip, seed)?, Some(seed))),
            GraphSource::File(path) => Ok((Graph::read_file(path)?, None)),
        }
    }
}

fn parse_task(args: &TaskArgs, layers: usize) -> Result<TaskSpec> {
    let kind = TaskKind::from_str(&args.task)?;
    Ok(TaskSpec {
        kind,
        layers,
        k: args.k,
        delta: args.delta,
        temp: args.temp,
        mu: args.mu,
        lambda_max_hint: None,
    })
}

enum TrialOutcome {
    Report(ErrorReport),
    Failed { trial: usize, error: String },
}

/// Runs all trials for one depth; per-trial failures are recorded and the
/// remaining trials still run.
fn run_trials(args: &TaskArgs, task: &TaskSpec, base_seed: u64) -> Result<Vec<TrialOutcome>> {
    let source = GraphSource::parse(&args.graph);
    let engine = Engine::from_str(&args.engine)?;
    let project = args.project_demands == OnOff::On;
    let mut outcomes = Vec::with_capacity(args.trials);
    for trial in 0..args.trials {
        let trial_seed = base_seed + trial as u64;
        let result = (|| -> Result<ErrorReport> {
            let (g, graph_seed) = source.build(args.n, args.skip, trial_seed)?;
            let demands: DemandSet = if task.kind.is_fast() {
                identity_demands(g.n)
            } else {
                sample_demands(g.n, task.k, project, trial_seed)?
            };
            let mut report = run_task(&g, task, &demands, engine)?;
            report.graph_seed = graph_seed;
            report.trial = Some(trial);
            Ok(report)
        })();
        match result {
            Ok(report) => outcomes.push(TrialOutcome::Report(report)),
            Err(e) => outcomes.push(TrialOutcome::Failed { trial, error: e.to_string() }),
        }
    }
    Ok(outcomes)
}

struct Tally {
    trials_ok: usize,
    trials_total: usize,
    checks_passed: usize,
    checks_total: usize,
    worst_margin: Option<f64>,
    any_failed_trial: bool,
}

fn tally(outcomes: &[TrialOutcome]) -> Tally {
    let mut t = Tally {
        trials_ok: 0,
        trials_total: outcomes.len(),
        checks_passed: 0,
        checks_total: 0,
        worst_margin: None,
        any_failed_trial: false,
    };
    for outcome in outcomes {
        match outcome {
            TrialOutcome::Report(report) => {
                t.trials_ok += 1;
                for row in &report.layers {
                    if let Some(sat) = row.satisfied {
                        t.checks_total += 1;
                        if sat {
                            t.checks_passed += 1;
                        }
                    }
                }
                if let Some(m) = report.worst_margin() {
                    t.worst_margin = Some(t.worst_margin.map_or(m, |w: f64| w.max(m)));
                }
            }
            TrialOutcome::Failed { trial, error } => {
                t.any_failed_trial = true;
                eprintln!("trial {trial}: error: {error}");
            }
        }
    }
    t
}

fn exit_for(t: &Tally) -> ExitCode {
    if t.any_failed_trial {
        ExitCode::from(2)
    } else if t.checks_passed < t.checks_total {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn print_summary(t: &Tally) {
    let margin = t
        .worst_margin
        .map(|m| m.to_string())
        .unwrap_or_else(|| "n/a".into());
    eprintln!(
        "trials ok: {}/{}; bound checks passed: {}/{}; worst error/bound margin: {margin}",
        t.trials_ok, t.trials_total, t.checks_passed, t.checks_total
    );
}

const CSV_HEADER: &str = "task,trial,layer,error,bound,satisfied,lambda_min,lambda_max\n";

fn push_csv_row(out: &mut String, report: &ErrorReport, row: &gfl_core::verify::LayerRow) {
    let bound = row.bound.map(|b| b.to_string()).unwrap_or_else(|| "na".into());
    let sat = row.satisfied.map(|s| s.to_string()).unwrap_or_else(|| "na".into());
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        report.task.kind.name(),
        report.trial.unwrap_or(0),
        row.layer,
        row.error,
        bound,
        sat,
        report.lambda_min,
        report.lambda_max
    );
}

fn render_run(outcomes: &[TrialOutcome], format: Format) -> Result<String> {
    match format {
        Format::Csv => {
            let mut out = String::from(CSV_HEADER);
            for outcome in outcomes {
                if let TrialOutcome::Report(report) = outcome {
                    for row in &report.layers {
                        push_csv_row(&mut out, report, row);
                    }
                }
            }
            Ok(out)
        }
        Format::Json => {
            let mut entries = Vec::with_capacity(outcomes.len());
            for outcome in outcomes {
                entries.push(match outcome {
                    TrialOutcome::Report(report) => serde_json::to_value(report)?,
                    TrialOutcome::Failed { trial, error } => {
                        serde_json::json!({ "trial": trial, "error": error })
                    }
                });
            }
            let mut text = serde_json::to_string_pretty(&entries)?;
            text.push('\n');
            Ok(text)
        }
    }
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let task = parse_task(&args.task, args.layers)?;
    let seed = env_seed(args.task.seed)?;
    let outcomes = run_trials(&args.task, &task, seed)?;
    let text = render_run(&outcomes, args.task.format)?;
    emit(&text, &args.task.out)?;
    let t = tally(&outcomes);
    print_summary(&t);
    Ok(exit_for(&t))
}

fn parse_layer_list(text: &str) -> Result<Vec<usize>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<usize>()
                .map_err(|_| GflError::Constraint(format!("bad depth in --layers: {piece:?}")))
        })
        .collect()
}

/// One row per (depth, trial), holding that run's final layer; rows ordered
/// by (trial, depth). Identical trial seeds across depths keep each trial's
/// graph and demands fixed, so rows differ only in network depth.
fn cmd_sweep_layers(args: SweepArgs) -> Result<ExitCode> {
    let depths = parse_layer_list(&args.layers)?;
    let seed = env_seed(args.task.seed)?;
    let mut per_depth = Vec::with_capacity(depths.len());
    for &layers in &depths {
        let task = parse_task(&args.task, layers)?;
        per_depth.push(run_trials(&args.task, &task, seed)?);
    }

    let mut all = Vec::new();
    for outcomes in &per_depth {
        all.extend(outcomes.iter().map(|o| match o {
            TrialOutcome::Report(r) => TrialOutcome::Report(r.clone()),
            TrialOutcome::Failed { trial, error } => {
                TrialOutcome::Failed { trial: *trial, error: error.clone() }
            }
        }));
    }
    let t = tally(&all);

    let mut keyed: Vec<(usize, usize, &ErrorReport)> = Vec::new();
    for (di, outcomes) in per_depth.iter().enumerate() {
        for outcome in outcomes {
            if let TrialOutcome::Report(report) = outcome {
                keyed.push((report.trial.unwrap_or(0), depths[di], report));
            }
        }
    }
    keyed.sort_by_key(|(trial, depth, _)| (*trial, *depth));

    let text = match args.task.format {
        Format::Csv => {
            let mut out = String::from(CSV_HEADER);
            for (_, _, report) in &keyed {
                if let Some(row) = report.layers.last() {
                    push_csv_row(&mut out, report, row);
                }
            }
            out
        }
        Format::Json => {
            let mut entries = Vec::with_capacity(keyed.len());
            for (trial, depth, report) in &keyed {
                if let Some(row) = report.layers.last() {
                    entries.push(serde_json::json!({
                        "task": report.task.kind.name(),
                        "trial": trial,
                        "layer": depth,
                        "error": row.error,
                        "bound": row.bound,
                        "satisfied": row.satisfied,
                        "lambda_min": report.lambda_min,
                        "lambda_max": report.lambda_max,
                    }));
                }
            }
            let mut text = serde_json::to_string_pretty(&entries)?;
            text.push('\n');
            text
        }
    };
    emit(&text, &args.task.out)?;
    print_summary(&t);
    Ok(exit_for(&t))
}
