//! Experiment orchestration: method runners over shared seeded
//! environment streams, sweeps, CSV metrics, and checkpoint layout.
//!
//! Every method inside one experiment sees the same per-episode
//! environment seeds, so cross-method comparisons are paired. Learned
//! methods additionally run a frozen-policy evaluation phase on a second
//! shared seed stream; when the experiment contains a learned method,
//! the baselines are evaluated on that stream too.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agent::{AgentConfig, DreemAgent, EpisodeLog, EpisodeMode, EpsilonSchedule, TrainLosses};
use crate::baselines::{
    all_on_reference_power, exhaustive_onoff, full_association, sequential_onoff,
    ExhaustiveObjective, SlotDecision,
};
use crate::env::{ScenarioConfig, UdnEnv};
use crate::error::{Error, Result};
use crate::powermodel::{compute_rates, reward, ModeDecision};

/// One deterministic RNG; every random draw in the crate flows from one
/// of these.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const STREAM_TRAIN: u64 = 1;
pub const STREAM_EVAL: u64 = 2;
pub const STREAM_AGENT: u64 = 3;

/// Stable seed derivation (splitmix64 over a stream/index mix), so
/// episode `i` of any method reads the same environment.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Thread cap from `DREEM_THREADS` (default 1).
pub fn max_threads() -> usize {
    std::env::var("DREEM_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|n| *n >= 1)
        .unwrap_or(1)
}

/// Strategy under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dreem,
    VanillaDqn,
    Full,
    Sequential,
    MilpInst,
    MilpTrans,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Dreem => "dreem",
            Method::VanillaDqn => "vanilla_dqn",
            Method::Full => "full",
            Method::Sequential => "sequential",
            Method::MilpInst => "milp_inst",
            Method::MilpTrans => "milp_trans",
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, Method::Dreem | Method::VanillaDqn)
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "dreem" => Ok(Method::Dreem),
            "vanilla_dqn" => Ok(Method::VanillaDqn),
            "full" => Ok(Method::Full),
            "sequential" => Ok(Method::Sequential),
            "milp_inst" => Ok(Method::MilpInst),
            "milp_trans" => Ok(Method::MilpTrans),
            other => Err(Error::config(format!("unknown method '{other}'"))),
        }
    }
}

/// Sweepable scenario axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    RMin,
    SnrDb,
    M,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::RMin => "r_min",
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::M => "m",
        }
    }

    pub fn parse(s: &str) -> Result<SweepAxis> {
        match s {
            "r_min" => Ok(SweepAxis::RMin),
            "snr" | "snr_db" => Ok(SweepAxis::SnrDb),
            "m" | "M" => Ok(SweepAxis::M),
            other => Err(Error::config(format!("unknown sweep axis '{other}'"))),
        }
    }

    /// Scenario with this axis set to `value`.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut s = base.clone();
        match self {
            SweepAxis::RMin => {
                if !(value > 0.0) {
                    return Err(Error::config("r_min sweep values must be positive"));
                }
                s.r_min = vec![value; s.k];
            }
            SweepAxis::SnrDb => {
                if !value.is_finite() {
                    return Err(Error::config("snr sweep values must be finite"));
                }
                s.snr_db = value;
            }
            SweepAxis::M => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::config("M sweep values must be positive integers"));
                }
                s.m = value as usize;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

fn default_eval_episodes() -> usize {
    10
}

/// Full experiment description; this is what `config.json` snapshots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub agent: AgentConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Training-stream episodes (baselines report on this stream too).
    pub episodes: usize,
    /// Frozen-policy evaluation episodes, run when a learned method is
    /// present.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.agent.validate()?;
        if self.methods.is_empty() {
            return Err(Error::config("methods must be non-empty"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep values must be non-empty"));
            }
            for v in &sweep.values {
                sweep.axis.apply(&self.scenario, *v)?;
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let spec: ExperimentSpec =
            serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Built-in experiment presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Preset> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::config(format!("unknown preset '{other}'"))),
        }
    }

    pub fn spec(&self) -> ExperimentSpec {
        match self {
            Preset::Desk => ExperimentSpec {
                scenario: ScenarioConfig::desk(),
                agent: AgentConfig {
                    hidden: vec![64; 4],
                    updates_per_episode: 8,
                    epsilon: EpsilonSchedule {
                        start: 1.0,
                        end: 0.05,
                        decay_episodes: 150,
                    },
                    ..AgentConfig::default()
                },
                sweep: None,
                episodes: 300,
                eval_episodes: 10,
                methods: vec![Method::Dreem],
                out_dir: PathBuf::from("out/desk"),
            },
            Preset::Paper => ExperimentSpec {
                scenario: ScenarioConfig::paper(),
                agent: AgentConfig {
                    hidden: vec![512; 4],
                    updates_per_episode: 1,
                    epsilon: EpsilonSchedule {
                        start: 1.0,
                        end: 0.05,
                        decay_episodes: 500,
                    },
                    ..AgentConfig::default()
                },
                sweep: None,
                episodes: 1000,
                eval_episodes: 10,
                methods: vec![Method::Dreem],
                out_dir: PathBuf::from("out/paper"),
            },
        }
    }
}

/// One metrics line: one (method, episode, slot) triple.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub method: Method,
    pub episode: usize,
    pub slot: usize,
    pub p_tx: f64,
    pub p_mode: f64,
    pub p_trans: f64,
    pub p_tot: f64,
    pub reward: f64,
    pub n_active: usize,
    pub feasible: bool,
    pub size_a_f: usize,
    pub size_a_d: usize,
    pub min_rate_margin: f64,
}

pub const METRICS_HEADER: &str =
    "method,episode,slot,p_tx,p_mode,p_trans,p_tot,reward,n_active,feasible,size_A_F,size_A_D,min_rate_margin";

/// Writes the metrics CSV. Floats print in shortest round-trip decimal
/// form, so re-reading reproduces the exact values.
pub fn emit_metrics(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method.name(),
            r.episode,
            r.slot,
            r.p_tx,
            r.p_mode,
            r.p_trans,
            r.p_tot,
            r.reward,
            r.n_active,
            r.feasible,
            r.size_a_f,
            r.size_a_d,
            r.min_rate_margin
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Per-episode training progress of a learned method.
#[derive(Debug, Clone)]
pub struct TrainingRow {
    pub method: Method,
    pub episode: usize,
    pub epsilon: f64,
    pub losses: Option<TrainLosses>,
    pub energy: f64,
    pub cum_reward: f64,
    pub feasible_frac: f64,
}

pub const TRAINING_HEADER: &str =
    "method,episode,epsilon,loss_f,loss_e,loss_q,energy,cum_reward,feasible_frac";

pub fn emit_training(rows: &[TrainingRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::with_capacity(48 * (rows.len() + 1));
    out.push_str(TRAINING_HEADER);
    out.push('\n');
    for r in rows {
        let (lf, le, lq) = match r.losses {
            Some(l) => (l.l_f.to_string(), l.l_e.to_string(), l.l_q.to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method.name(),
            r.episode,
            r.epsilon,
            lf,
            le,
            lq,
            r.energy,
            r.cum_reward,
            r.feasible_frac
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// What one method produced, ready for assembly.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: Method,
    pub rows: Vec<MetricsRow>,
    pub training: Vec<TrainingRow>,
    /// Mean slot power over the eval phase, when it ran.
    pub eval_avg_power: Option<f64>,
    /// Per eval episode: mean |A_F| / |A| over slots.
    pub eval_a_f_ratio: Vec<f64>,
    pub eval_energy: Vec<f64>,
    pub agent: Option<DreemAgent>,
}

/// Summary of a finished experiment (also returned for each sweep point).
#[derive(Debug)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub methods: Vec<MethodRun>,
    pub failures: Vec<(Method, String)>,
    pub sweep_points: Vec<(f64, ExperimentReport)>,
}

fn episode_rows(method: Method, episode: usize, log: &EpisodeLog) -> Vec<MetricsRow> {
    log.slots
        .iter()
        .map(|s| MetricsRow {
            method,
            episode,
            slot: s.t,
            p_tx: s.breakdown.p_tx,
            p_mode: s.breakdown.p_mode,
            p_trans: s.breakdown.p_trans,
            p_tot: s.breakdown.p_tot,
            reward: s.reward,
            n_active: s.alpha.n_active(),
            feasible: s.feasible,
            size_a_f: s.size_a_f,
            size_a_d: s.size_a_d,
            min_rate_margin: s.min_rate_margin,
        })
        .collect()
}

fn feasible_frac(log: &EpisodeLog) -> f64 {
    if log.slots.is_empty() {
        return 1.0;
    }
    log.slots.iter().filter(|s| s.feasible).count() as f64 / log.slots.len() as f64
}

/// Runs one baseline over one environment episode.
fn baseline_episode(
    method: Method,
    scenario: &ScenarioConfig,
    episode: usize,
    env_seed: u64,
) -> Result<Vec<MetricsRow>> {
    let mut env = UdnEnv::new(scenario, env_seed)?;
    let sigma2 = env.sigma2;
    let m = scenario.m;
    let full_space = 1usize << m;
    let mut alpha_prev = ModeDecision::all_on(m);
    let mut rows = Vec::with_capacity(scenario.t);
    for t in 0..scenario.t {
        env.advance()?;
        let d: SlotDecision = match method {
            Method::Full => {
                full_association(env.h_cur(), &scenario.r_min, sigma2, &alpha_prev, scenario)?
            }
            Method::Sequential => {
                sequential_onoff(env.h_cur(), &scenario.r_min, sigma2, &alpha_prev, scenario)?
            }
            Method::MilpInst => exhaustive_onoff(
                env.h_cur(),
                &scenario.r_min,
                sigma2,
                &alpha_prev,
                scenario,
                ExhaustiveObjective::Instantaneous,
            )?,
            Method::MilpTrans => exhaustive_onoff(
                env.h_cur(),
                &scenario.r_min,
                sigma2,
                &alpha_prev,
                scenario,
                ExhaustiveObjective::WithTransition,
            )?,
            Method::Dreem | Method::VanillaDqn => {
                return Err(Error::contract("learned methods use the agent runner"))
            }
        };
        let p_all_on = all_on_reference_power(env.h_cur(), &scenario.r_min, sigma2, scenario)?;
        let r = reward(&d.breakdown, p_all_on, d.feasible);
        let rates = compute_rates(&d.p, env.h_cur(), sigma2);
        let min_rate_margin = rates
            .iter()
            .zip(&scenario.r_min)
            .map(|(rate, req)| rate - req)
            .fold(f64::INFINITY, f64::min);
        rows.push(MetricsRow {
            method,
            episode,
            slot: t,
            p_tx: d.breakdown.p_tx,
            p_mode: d.breakdown.p_mode,
            p_trans: d.breakdown.p_trans,
            p_tot: d.breakdown.p_tot,
            reward: r,
            n_active: d.alpha.n_active(),
            feasible: d.feasible,
            // No filtering stage: the full space is what these methods
            // implicitly consider.
            size_a_f: full_space,
            size_a_d: full_space,
            min_rate_margin,
        });
        alpha_prev = d.alpha;
    }
    Ok(rows)
}

fn run_method(spec: &ExperimentSpec, method: Method, eval_phase: bool) -> Result<MethodRun> {
    let master = spec.scenario.seed;
    let mut rows = Vec::new();
    let mut training = Vec::new();
    let mut eval_powers = Vec::new();
    let mut eval_a_f_ratio = Vec::new();
    let mut eval_energy = Vec::new();
    let mut agent_out = None;
    if method.is_learned() {
        let agent_seed = derive_seed(master, STREAM_AGENT, method as u64);
        let mut agent = DreemAgent::new(
            &spec.scenario,
            spec.agent.clone(),
            method == Method::Dreem,
            agent_seed,
        )?;
        for ep in 0..spec.episodes {
            let env_seed = derive_seed(master, STREAM_TRAIN, ep as u64);
            let log = agent.run_episode(&spec.scenario, env_seed, EpisodeMode::Train)?;
            rows.extend(episode_rows(method, ep, &log));
            training.push(TrainingRow {
                method,
                episode: ep,
                epsilon: log.epsilon,
                losses: log.losses,
                energy: log.energy,
                cum_reward: log.cum_reward,
                feasible_frac: feasible_frac(&log),
            });
        }
        if eval_phase {
            let full_space = (1usize << spec.scenario.m) as f64;
            for j in 0..spec.eval_episodes {
                let env_seed = derive_seed(master, STREAM_EVAL, j as u64);
                let log = agent.run_episode(&spec.scenario, env_seed, EpisodeMode::Eval)?;
                let n = log.slots.len().max(1) as f64;
                eval_powers.push(log.energy / n);
                eval_a_f_ratio.push(
                    log.slots.iter().map(|s| s.size_a_f as f64).sum::<f64>() / n / full_space,
                );
                eval_energy.push(log.energy);
                rows.extend(episode_rows(method, spec.episodes + j, &log));
            }
        }
        agent_out = Some(agent);
    } else {
        for ep in 0..spec.episodes {
            let env_seed = derive_seed(master, STREAM_TRAIN, ep as u64);
            rows.extend(baseline_episode(method, &spec.scenario, ep, env_seed)?);
        }
        if eval_phase {
            for j in 0..spec.eval_episodes {
                let env_seed = derive_seed(master, STREAM_EVAL, j as u64);
                let ep_rows = baseline_episode(method, &spec.scenario, spec.episodes + j, env_seed)?;
                let n = ep_rows.len().max(1) as f64;
                eval_powers.push(ep_rows.iter().map(|r| r.p_tot).sum::<f64>() / n);
                eval_energy.push(ep_rows.iter().map(|r| r.p_tot).sum::<f64>());
                rows.extend(ep_rows);
            }
        }
    }
    let eval_avg_power = if eval_powers.is_empty() {
        None
    } else {
        Some(eval_powers.iter().sum::<f64>() / eval_powers.len() as f64)
    };
    Ok(MethodRun {
        method,
        rows,
        training,
        eval_avg_power,
        eval_a_f_ratio,
        eval_energy,
        agent: agent_out,
    })
}

/// Runs every method of the spec (or every sweep point), writes
/// `metrics.csv`, `config.json`, `training.csv`, and `checkpoints/`, and
/// returns the in-memory report.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out_dir)?;
    std::fs::write(
        spec.out_dir.join("config.json"),
        serde_json::to_string_pretty(spec)?,
    )?;

    if let Some(sweep) = &spec.sweep {
        let mut points = Vec::new();
        for value in &sweep.values {
            let mut sub = spec.clone();
            sub.scenario = sweep.axis.apply(&spec.scenario, *value)?;
            sub.sweep = None;
            sub.out_dir = spec.out_dir.join(format!("{}_{}", sweep.axis.name(), value));
            let report = run_experiment(&sub)?;
            points.push((*value, report));
        }
        return Ok(ExperimentReport {
            out_dir: spec.out_dir.clone(),
            methods: Vec::new(),
            failures: Vec::new(),
            sweep_points: points,
        });
    }

    let eval_phase = spec.eval_episodes > 0 && spec.methods.iter().any(|m| m.is_learned());
    let cap = max_threads();
    let mut outcomes: Vec<Option<Result<MethodRun>>> = Vec::new();
    outcomes.resize_with(spec.methods.len(), || None);
    if cap <= 1 || spec.methods.len() <= 1 {
        for (i, method) in spec.methods.iter().enumerate() {
            outcomes[i] = Some(run_method(spec, *method, eval_phase));
        }
    } else {
        // Waves of at most `cap` methods; results land in spec order.
        let mut next = 0usize;
        while next < spec.methods.len() {
            let end = (next + cap).min(spec.methods.len());
            let wave: Vec<usize> = (next..end).collect();
            let mut results: Vec<(usize, Result<MethodRun>)> = Vec::with_capacity(wave.len());
            std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|&i| {
                        let method = spec.methods[i];
                        scope.spawn(move || (i, run_method(spec, method, eval_phase)))
                    })
                    .collect();
                for h in handles {
                    results.push(h.join().expect("method thread panicked"));
                }
            });
            for (i, r) in results {
                outcomes[i] = Some(r);
            }
            next = end;
        }
    }

    let mut methods = Vec::new();
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    let mut training = Vec::new();
    for (method, outcome) in spec.methods.iter().zip(outcomes.into_iter()) {
        match outcome.expect("every method ran") {
            Ok(run) => {
                rows.extend(run.rows.iter().cloned());
                training.extend(run.training.iter().cloned());
                methods.push(run);
            }
            Err(e) => failures.push((*method, e.to_string())),
        }
    }
    emit_metrics(&rows, spec.out_dir.join("metrics.csv"))?;
    if !training.is_empty() {
        emit_training(&training, spec.out_dir.join("training.csv"))?;
    }
    for run in &methods {
        if let Some(agent) = &run.agent {
            agent.save(spec.out_dir.join("checkpoints").join(run.method.name()))?;
        }
    }
    if !failures.is_empty() {
        let mut text = String::new();
        for (m, e) in &failures {
            writeln!(text, "{}: {}", m.name(), e).expect("string write");
        }
        std::fs::write(spec.out_dir.join("errors.txt"), text)?;
    }
    Ok(ExperimentReport {
        out_dir: spec.out_dir.clone(),
        methods,
        failures,
        sweep_points: Vec::new(),
    })
}

/// Loads a checkpointed agent and evaluates it on `scenario` for
/// `episodes` seeded episodes, zero-padding when the scenario is smaller
/// than the trained dimensions. Writes `metrics.csv` into `out_dir`.
pub fn evaluate_checkpoint(
    checkpoint_dir: impl AsRef<Path>,
    scenario: &ScenarioConfig,
    episodes: usize,
    out_dir: impl AsRef<Path>,
) -> Result<ExperimentReport> {
    scenario.validate()?;
    let mut agent = DreemAgent::load(checkpoint_dir.as_ref())?;
    let method = if agent.use_dsn {
        Method::Dreem
    } else {
        Method::VanillaDqn
    };
    let out_dir = out_dir.as_ref().to_path_buf();
    std::fs::create_dir_all(&out_dir)?;
    let mut rows = Vec::new();
    let mut eval_powers = Vec::new();
    let mut eval_a_f_ratio = Vec::new();
    let mut eval_energy = Vec::new();
    let full_space = (1usize << scenario.m) as f64;
    for j in 0..episodes {
        let env_seed = derive_seed(scenario.seed, STREAM_EVAL, j as u64);
        let log = if scenario.m == agent.m && scenario.k == agent.k {
            agent.run_episode(scenario, env_seed, EpisodeMode::Eval)?
        } else {
            agent.eval_zero_padded(scenario, env_seed)?
        };
        let n = log.slots.len().max(1) as f64;
        eval_powers.push(log.energy / n);
        eval_a_f_ratio
            .push(log.slots.iter().map(|s| s.size_a_f as f64).sum::<f64>() / n / full_space);
        eval_energy.push(log.energy);
        rows.extend(episode_rows(method, j, &log));
    }
    emit_metrics(&rows, out_dir.join("metrics.csv"))?;
    let eval_avg_power = if eval_powers.is_empty() {
        None
    } else {
        Some(eval_powers.iter().sum::<f64>() / eval_powers.len() as f64)
    };
    Ok(ExperimentReport {
        out_dir,
        methods: vec![MethodRun {
            method,
            rows,
            training: Vec::new(),
            eval_avg_power,
            eval_a_f_ratio,
            eval_energy,
            agent: Some(agent),
        }],
        failures: Vec::new(),
        sweep_points: Vec::new(),
    })
}
