//! Command-line front end: training, checkpoint evaluation, parameter
//! sweeps, and baseline comparisons. All outputs land in the chosen
//! directory as `metrics.csv`, `config.json`, `training.csv`, and
//! `checkpoints/`. Set `DREEM_THREADS` to let methods or sweep points
//! run in parallel.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dreem_core::env::ScenarioConfig;
use dreem_core::harness::{
    evaluate_checkpoint, run_experiment, ExperimentSpec, Method, Preset, SweepAxis, SweepSpec,
};

#[derive(Parser)]
#[command(
    name = "dreem",
    about = "Energy-aware base-station on/off control: simulator, baselines, and learned policies",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Experiment spec as JSON; overrides the preset when given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset to start from.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training-episode override.
    #[arg(long)]
    episodes: Option<usize>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_json_file(path)
                .with_context(|| format!("loading spec from {}", path.display()))?,
            None => Preset::parse(&self.preset)?.spec(),
        };
        if let Some(seed) = self.seed {
            spec.scenario.seed = seed;
        }
        if let Some(out) = &self.out {
            spec.out_dir = out.clone();
        }
        if let Some(episodes) = self.episodes {
            spec.episodes = episodes;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the learned method(s) of the spec and evaluate them.
    Train(SpecArgs),
    /// Evaluate a saved checkpoint on a scenario (zero-padded when the
    /// scenario is smaller than the trained dimensions).
    Eval {
        /// Directory holding theta_f.json / theta_e.json / q.json /
        /// manifest.json.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Scenario config as JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out/eval")]
        out: PathBuf,
        /// Evaluation episodes.
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Seed override for the evaluation streams.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the spec once per value of a scenario axis.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        /// Axis: r_min | snr | m
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. 0.1,0.3,0.5
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Run the classical baselines only.
    Baselines {
        #[command(flatten)]
        spec: SpecArgs,
        /// Comma-separated subset of full,sequential,milp_inst,milp_trans
        #[arg(long, value_delimiter = ',', default_value = "full,sequential,milp_inst,milp_trans")]
        methods: Vec<String>,
    },
}

fn print_report(report: &dreem_core::harness::ExperimentReport) {
    if !report.sweep_points.is_empty() {
        for (value, sub) in &report.sweep_points {
            println!("== sweep point {value} -> {}", sub.out_dir.display());
            print_report(sub);
        }
        return;
    }
    for run in &report.methods {
        let rows = run.rows.len();
        match run.eval_avg_power {
            Some(p) => println!(
                "  {:<12} {rows:>6} rows, eval avg power {p:.3} W/slot",
                run.method.name()
            ),
            None => println!("  {:<12} {rows:>6} rows", run.method.name()),
        }
    }
    for (method, err) in &report.failures {
        eprintln!("  {:<12} FAILED: {err}", method.name());
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train(args) => {
            let spec = args.resolve()?;
            let report = run_experiment(&spec)?;
            println!("artifacts in {}", report.out_dir.display());
            print_report(&report);
            if !report.failures.is_empty() {
                bail!("{} method(s) failed", report.failures.len());
            }
        }
        Command::Eval {
            checkpoint,
            config,
            out,
            episodes,
            seed,
        } => {
            let mut scenario = ScenarioConfig::from_json_file(&config)
                .with_context(|| format!("loading scenario from {}", config.display()))?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let report = evaluate_checkpoint(&checkpoint, &scenario, episodes, &out)?;
            println!("artifacts in {}", report.out_dir.display());
            print_report(&report);
        }
        Command::Sweep { spec, axis, values } => {
            let mut spec = spec.resolve()?;
            if values.is_empty() {
                bail!("sweep needs at least one value");
            }
            spec.sweep = Some(SweepSpec {
                axis: SweepAxis::parse(&axis)?,
                values,
            });
            spec.validate()?;
            let report = run_experiment(&spec)?;
            println!("artifacts in {}", report.out_dir.display());
            print_report(&report);
        }
        Command::Baselines { spec, methods } => {
            let mut spec = spec.resolve()?;
            spec.methods = methods
                .iter()
                .map(|m| Method::parse(m))
                .collect::<dreem_core::Result<Vec<_>>>()?;
            if spec.methods.iter().any(|m| m.is_learned()) {
                bail!("baselines runs classical methods only; use train for learned ones");
            }
            spec.validate()?;
            let report = run_experiment(&spec)?;
            println!("artifacts in {}", report.out_dir.display());
            print_report(&report);
            if !report.failures.is_empty() {
                bail!("{} method(s) failed", report.failures.len());
            }
        }
    }
    Ok(())
}
