//! Command-line pipeline: model -> abstraction -> checking -> controller
//! -> simulation, with sample-size refinement and cached abstractions.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::abstraction::{self, IntervalMdp};
use crate::checker::{self, AdvDir, CheckParams, Objective, ProbResult};
use crate::geometry::{build_partition, LabelRule, Partition};
use crate::model::{self, HyperRect, JumpSpec, MjlsSpec};
use crate::pctl::{self, Formula, PathFormula, StateFormula};
use crate::runtime::{self, Controller, Monitor, TrueJumps};
use crate::scenario::ModeTransitions;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub bounds: HyperRect,
    pub counts: Vec<usize>,
    #[serde(default)]
    pub labels: Vec<LabelRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialState {
    pub x: Vec<f64>,
    #[serde(default)]
    pub mode: usize,
}

/// Ground truth used by `simulate` for the mode process.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueJumpConfig {
    /// Renormalized interval midpoints of a controlled jump model.
    Midpoints,
    /// Fixed mode sequence, last entry repeating.
    Script(Vec<usize>),
    /// Explicit per-(mode, action) distributions.
    Controlled(Vec<Vec<Vec<(usize, f64)>>>),
}

fn default_samples() -> usize {
    100
}
fn default_beta() -> f64 {
    0.01
}
fn default_gamma() -> f64 {
    2.0
}
fn default_rounds() -> usize {
    1
}
fn default_trials() -> u64 {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Model file, relative to the config file's directory.
    pub model: PathBuf,
    /// Group this many time steps into one abstract step.
    #[serde(default)]
    pub group_steps: Option<usize>,
    pub partition: PartitionConfig,
    pub formula: String,
    pub initial: InitialState,
    /// Scenario sample count of the first round.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Confidence budget split over the transitions of each row.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Sample-count growth factor between refinement rounds.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub true_jumps: Option<TrueJumpConfig>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    /// Resolution base for relative paths; set when loading from a file.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn model_path(&self) -> PathBuf {
        match (&self.base_dir, self.model.is_relative()) {
            (Some(base), true) => base.join(&self.model),
            _ => self.model.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

pub struct Prepared {
    pub spec: MjlsSpec,
    pub model_hash: String,
    pub partition: Partition,
    pub targets: Vec<DVector<f64>>,
    pub formula: Formula,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let path = cfg.model_path();
    let bytes =
        std::fs::read(&path).with_context(|| format!("reading model {}", path.display()))?;
    let model_hash = hex(&Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).context("model file is not UTF-8")?;
    // Grouping runs before validation: step grouping is exactly what makes
    // an under-actuated model (m < n) fully actuated.
    let spec = model::parse_model_with_base(&text, path.parent())?;
    let spec = match cfg.group_steps {
        Some(h) if h > 1 => spec.group_steps(h),
        _ => spec,
    };
    let spec = spec.validate()?;
    let partition = build_partition(
        cfg.partition.bounds.clone(),
        cfg.partition.counts.clone(),
        &cfg.partition.labels,
    )?;
    let targets = partition.cell_centers();
    let formula = pctl::parse_formula(&cfg.formula)?;
    Ok(Prepared {
        spec,
        model_hash,
        partition,
        targets,
        formula,
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct Abstraction {
    pub imdp: IntervalMdp,
    pub mode_transitions: Vec<ModeTransitions>,
    /// True for the mode-product construction, false for the robust merge.
    pub product: bool,
}

fn cache_key(cfg: &RunConfig, prep: &Prepared, w: usize) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prep.model_hash.as_bytes());
    hasher.update(serde_json::to_vec(&cfg.partition).expect("serializable"));
    hasher.update(w.to_le_bytes());
    hasher.update(cfg.beta.to_le_bytes());
    hasher.update(cfg.seed.to_le_bytes());
    hasher.update(cfg.group_steps.unwrap_or(1).to_le_bytes());
    hex(&hasher.finalize())[..32].to_string()
}

/// Builds (or loads from cache) the per-mode transitions and assembles the
/// iMDP appropriate for the model's jump process.
pub fn build_abstraction(
    cfg: &RunConfig,
    prep: &Prepared,
    w: usize,
    cache_dir: Option<&Path>,
) -> Result<Abstraction> {
    let cache_file = cache_dir.map(|dir| dir.join(format!("{}.json", cache_key(cfg, prep, w))));
    let cached: Option<Vec<ModeTransitions>> = cache_file
        .as_ref()
        .filter(|f| f.exists())
        .and_then(|f| std::fs::read_to_string(f).ok())
        .and_then(|text| serde_json::from_str(&text).ok());
    let mode_transitions = match cached {
        Some(trs) if trs.len() == prep.spec.num_modes() => trs,
        _ => {
            let trs: Result<Vec<ModeTransitions>, _> = (0..prep.spec.num_modes())
                .map(|mode| {
                    crate::scenario::build_mode_transitions(
                        &prep.spec,
                        &prep.partition,
                        &prep.targets,
                        mode,
                        w,
                        cfg.beta,
                        cfg.seed,
                    )
                })
                .collect();
            let trs = trs?;
            if let Some(file) = &cache_file {
                std::fs::create_dir_all(file.parent().expect("cache dir"))?;
                std::fs::write(file, serde_json::to_string(&trs)?)?;
            }
            trs
        }
    };

    let (imdp, product) = match &prep.spec.jumps {
        JumpSpec::Controlled(jump) => {
            let mode_imdps: Vec<IntervalMdp> = mode_transitions
                .iter()
                .map(|tr| {
                    abstraction::mode_imdp_from_transitions(&prep.partition, &prep.targets, tr)
                })
                .collect();
            (abstraction::product(jump, &mode_imdps)?, true)
        }
        JumpSpec::Unknown => {
            let robust =
                crate::geometry::robust_enabled_actions(&prep.spec, &prep.partition, &prep.targets)?;
            (
                abstraction::robust_merge(
                    &prep.partition,
                    &prep.targets,
                    &mode_transitions,
                    &robust,
                ),
                false,
            )
        }
    };
    Ok(Abstraction {
        imdp,
        mode_transitions,
        product,
    })
}

/// Abstract state of the configured initial condition.
pub fn initial_state(prep: &Prepared, cfg: &RunConfig, product: bool) -> usize {
    let x = DVector::from_column_slice(&cfg.initial.x);
    let region = prep.partition.label_state(&x);
    if product {
        cfg.initial.mode * (prep.partition.num_regions() + 1) + region
    } else {
        region
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub samples: usize,
    pub num_states: usize,
    pub num_transitions: usize,
    /// None for bare path formulas (nothing to decide).
    pub satisfied: Option<bool>,
    /// Guaranteed value of the outermost probability operator at the
    /// initial state.
    pub value_at_initial: Option<f64>,
    pub millis_abstraction: u128,
    pub millis_check: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub model_hash: String,
    pub formula: String,
    pub satisfied: Option<bool>,
    pub rounds: Vec<RoundReport>,
}

/// Everything the final refinement round produced, kept in memory for the
/// simulate/export steps.
pub struct PipelineResult {
    pub outcome: PipelineOutcome,
    pub prep: Prepared,
    pub imdp: IntervalMdp,
    pub product: bool,
    pub probs: Vec<ProbResult>,
    pub sat: Option<BTreeSet<usize>>,
    pub initial: usize,
}

fn round_samples(cfg: &RunConfig, round: usize) -> usize {
    (cfg.samples as f64 * cfg.gamma.powi(round as i32)).round() as usize
}

/// Runs abstraction and checking, refining the sample count until the
/// formula holds at the initial state or the round budget is exhausted.
/// Writes `values.json`, `policy.json`, `grid.csv` and `manifest.json`.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<PipelineResult> {
    std::fs::create_dir_all(out_dir)?;
    let cache_dir = out_dir.join("cache");
    let prep = prepare(cfg)?;
    let params = CheckParams::default();

    let mut rounds = Vec::new();
    let mut last: Option<(IntervalMdp, bool, Vec<ProbResult>, Option<BTreeSet<usize>>, usize)> =
        None;
    for round in 0..cfg.rounds.max(1) {
        let w = round_samples(cfg, round);
        let t0 = Instant::now();
        let abs = build_abstraction(cfg, &prep, w, Some(&cache_dir))?;
        let millis_abstraction = t0.elapsed().as_millis();

        let t1 = Instant::now();
        let initial = initial_state(&prep, cfg, abs.product);
        let (satisfied, probs, sat) = match &prep.formula {
            Formula::State(sf) => {
                let out = checker::evaluate(&abs.imdp, sf, &params)?;
                (
                    Some(out.sat.contains(&initial)),
                    out.probs,
                    Some(out.sat),
                )
            }
            Formula::Path(path) => {
                let (values, policy, compiled) = checker::synthesize(&abs.imdp, path, &params)?;
                let prob = ProbResult {
                    formula: path.to_string(),
                    objective: Objective::MaxLower,
                    values,
                    policy,
                    path: compiled,
                };
                (None, vec![prob], None)
            }
        };
        let millis_check = t1.elapsed().as_millis();
        let value_at_initial = probs.last().map(|p| p.values[initial]);
        rounds.push(RoundReport {
            round,
            samples: w,
            num_states: abs.imdp.num_states(),
            num_transitions: abs.imdp.num_transitions(),
            satisfied,
            value_at_initial,
            millis_abstraction,
            millis_check,
        });
        let done = satisfied == Some(true) || round + 1 == cfg.rounds.max(1);
        last = Some((abs.imdp, abs.product, probs, sat, initial));
        if done {
            break;
        }
    }

    let (imdp, product, probs, sat, initial) = last.expect("at least one round");
    let outcome = PipelineOutcome {
        model_hash: prep.model_hash.clone(),
        formula: prep.formula.to_string(),
        satisfied: rounds.last().and_then(|r| r.satisfied),
        rounds,
    };

    let result = PipelineResult {
        outcome,
        prep,
        imdp,
        product,
        probs,
        sat,
        initial,
    };
    write_values(&result, &out_dir.join("values.json"))?;
    write_policies(&result, &out_dir.join("policy.json"))?;
    write_grid(&result, &out_dir.join("grid.csv"))?;
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "outcome": result.outcome,
            "config": cfg,
        }))?,
    )?;
    Ok(result)
}

fn state_bounds(result: &PipelineResult, prob: &ProbResult) -> Result<(Vec<f64>, Vec<f64>)> {
    let params = CheckParams::default();
    let other = checker::policy_value(
        &result.imdp,
        &prob.path,
        &prob.policy,
        match prob.objective {
            Objective::MaxLower => AdvDir::Maximize,
            Objective::MinUpper => AdvDir::Minimize,
        },
        params.tol,
        params.max_sweeps,
    )?;
    Ok(match prob.objective {
        Objective::MaxLower => (prob.values.clone(), other),
        Objective::MinUpper => (other, prob.values.clone()),
    })
}

fn write_values(result: &PipelineResult, path: &Path) -> Result<()> {
    let mut subformulas = Vec::new();
    for prob in &result.probs {
        let (lower, upper) = state_bounds(result, prob)?;
        let states: Vec<serde_json::Value> = result
            .imdp
            .states
            .iter()
            .enumerate()
            .map(|(id, st)| {
                serde_json::json!({
                    "id": id,
                    "mode": st.mode,
                    "region": st.region,
                    "lower": lower[id],
                    "upper": upper[id],
                })
            })
            .collect();
        subformulas.push(serde_json::json!({
            "formula": prob.formula,
            "objective": prob.objective,
            "states": states,
        }));
    }
    std::fs::write(
        path,
        serde_json::to_string_pretty(&serde_json::json!({
            "formula": result.outcome.formula,
            "satisfied": result.outcome.satisfied,
            "initial_state": result.initial,
            "sat_states": result.sat,
            "subformulas": subformulas,
        }))?,
    )?;
    Ok(())
}

fn write_policies(result: &PipelineResult, path: &Path) -> Result<()> {
    let subformulas: Vec<serde_json::Value> = result
        .probs
        .iter()
        .map(|prob| {
            serde_json::json!({
                "formula": prob.formula,
                "objective": prob.objective,
                "policy": prob.policy,
            })
        })
        .collect();
    std::fs::write(
        path,
        serde_json::to_string_pretty(&serde_json::json!({
            "actions": result.imdp.actions,
            "targets": result.imdp.targets,
            "subformulas": subformulas,
        }))?,
    )?;
    Ok(())
}

/// One row per region: center coordinates and the guaranteed value of the
/// outermost probability operator (one column per mode in a product).
fn write_grid(result: &PipelineResult, path: &Path) -> Result<()> {
    use std::io::Write as _;
    let Some(prob) = result.probs.last() else {
        return Ok(());
    };
    let partition = &result.prep.partition;
    let p = partition.num_regions();
    let dim = partition.dim();
    let num_modes = if result.product {
        result.prep.spec.num_modes()
    } else {
        1
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<String> = vec!["region".into()];
    header.extend((0..dim).map(|i| format!("c{i}")));
    if result.product {
        header.extend((0..num_modes).map(|m| format!("value_mode{m}")));
    } else {
        header.push("value".into());
    }
    writeln!(file, "{}", header.join(","))?;
    for region in 0..p {
        let center = partition.region_center(region);
        let mut cols: Vec<String> = vec![region.to_string()];
        cols.extend(center.iter().map(|v| format!("{v}")));
        for mode in 0..num_modes {
            let id = if result.product {
                mode * (p + 1) + region
            } else {
                region
            };
            cols.push(format!("{}", prob.values[id]));
        }
        writeln!(file, "{}", cols.join(","))?;
    }
    Ok(())
}

/// Plain-text interval transition dump: one `s a s' [low,high]` line per
/// transition.
pub fn export_transitions(imdp: &IntervalMdp, path: &Path) -> Result<()> {
    use std::io::Write as _;
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        file,
        "# states={} actions={} transitions={}",
        imdp.num_states(),
        imdp.actions.len(),
        imdp.num_transitions()
    )?;
    for (state, state_rows) in imdp.rows.iter().enumerate() {
        for sa in state_rows {
            for &(succ, iv) in &sa.succs {
                writeln!(file, "{state} {} {succ} [{},{}]", sa.action, iv.low, iv.high)?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Simulation glue
// ---------------------------------------------------------------------------

fn true_jumps(cfg: &RunConfig, spec: &MjlsSpec) -> Result<TrueJumps> {
    Ok(match &cfg.true_jumps {
        Some(TrueJumpConfig::Script(seq)) => {
            if seq.is_empty() {
                bail!("true_jumps script must not be empty");
            }
            TrueJumps::Script(seq.clone())
        }
        Some(TrueJumpConfig::Controlled(rows)) => TrueJumps::Controlled(rows.clone()),
        Some(TrueJumpConfig::Midpoints) | None => match &spec.jumps {
            JumpSpec::Controlled(jump) => TrueJumps::midpoints(jump),
            JumpSpec::Unknown => TrueJumps::Script(vec![cfg.initial.mode]),
        },
    })
}

/// Path formula behind the outermost probability operator (or the bare
/// path formula itself).
fn monitored_path(result: &PipelineResult) -> Result<PathFormula> {
    match &result.prep.formula {
        Formula::Path(p) => Ok(p.clone()),
        Formula::State(_) => {
            let prob = result
                .probs
                .last()
                .context("formula contains no probability operator to simulate")?;
            match pctl::parse_formula(&prob.formula)? {
                Formula::State(StateFormula::Prob { path, .. }) => Ok(*path),
                _ => bail!("outermost subformula is not a probability operator"),
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub trials: u64,
    pub successes: u64,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Guaranteed bound at the initial abstract state.
    pub value_at_initial: Option<f64>,
}

/// Simulates the synthesized controller for the outermost probability
/// operator; writes `simulation.json` and `traces.csv`.
pub fn run_simulation(
    cfg: &RunConfig,
    result: &PipelineResult,
    out_dir: &Path,
) -> Result<SimulationSummary> {
    let prob = result
        .probs
        .last()
        .context("nothing to simulate: no probability operator")?;
    let path = monitored_path(result)?;
    let monitor = Monitor::from_path(&result.prep.partition, &path)?;
    let controller = Controller {
        spec: &result.prep.spec,
        partition: &result.prep.partition,
        imdp: &result.imdp,
        policy: &prob.policy,
        product: result.product,
    };
    let jumps = true_jumps(cfg, &result.prep.spec)?;
    let x0 = DVector::from_column_slice(&cfg.initial.x);
    let report = runtime::simulate(
        &controller,
        &monitor,
        &jumps,
        &x0,
        cfg.initial.mode,
        cfg.trials,
        cfg.seed,
    )?;
    runtime::write_traces_csv(&out_dir.join("traces.csv"), &report.traces)?;
    let summary = SimulationSummary {
        trials: report.trials,
        successes: report.successes,
        frequency: report.frequency,
        wilson_low: report.wilson_low,
        wilson_high: report.wilson_high,
        value_at_initial: result.outcome.rounds.last().and_then(|r| r.value_at_initial),
    };
    std::fs::write(
        out_dir.join("simulation.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// Argument parsing and dispatch
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "jumpsynth",
    about = "Controller synthesis for Markov jump linear systems via interval MDP abstractions"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Override the PCTL formula.
    #[arg(long)]
    formula: Option<String>,
    /// Override the first-round sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Override the confidence budget.
    #[arg(long)]
    beta: Option<f64>,
    /// Override the refinement growth factor.
    #[arg(long)]
    gamma: Option<f64>,
    /// Override the number of refinement rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Full pipeline: abstraction, checking, refinement, artifacts.
    Run(CommonArgs),
    /// Abstraction only; populates the cache and dumps the iMDP.
    Abstract(CommonArgs),
    /// Checking on a (possibly cached) abstraction.
    Check(CommonArgs),
    /// Pipeline plus closed-loop Monte Carlo validation.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of simulated trajectories.
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Dump the interval transition relation as text.
    ExportPrism(CommonArgs),
}

fn apply_overrides(cfg: &mut RunConfig, args: &CommonArgs) {
    if let Some(model) = &args.model {
        cfg.model = model.clone();
        // An explicit path is taken as given, not config-relative.
        if model.is_absolute() {
            cfg.base_dir = None;
        }
    }
    if let Some(f) = &args.formula {
        cfg.formula = f.clone();
    }
    if let Some(v) = args.samples {
        cfg.samples = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = args.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
}

fn load(args: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(&args.config)?;
    apply_overrides(&mut cfg, args);
    Ok(cfg)
}

fn exit_code(satisfied: Option<bool>) -> i32 {
    match satisfied {
        Some(false) => 2,
        _ => 0,
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore failure if a pool already exists (e.g. under tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Run(args) | Cmd::Check(args) => {
            let cfg = load(&args)?;
            let result = run_pipeline(&cfg, &args.out)?;
            report_rounds(&result);
            Ok(exit_code(result.outcome.satisfied))
        }
        Cmd::Abstract(args) => {
            let cfg = load(&args)?;
            std::fs::create_dir_all(&args.out)?;
            let prep = prepare(&cfg)?;
            let abs = build_abstraction(&cfg, &prep, cfg.samples, Some(&args.out.join("cache")))?;
            std::fs::write(
                args.out.join("imdp.json"),
                serde_json::to_string(&abs.imdp)?,
            )?;
            println!(
                "abstraction: {} states, {} transitions ({} construction)",
                abs.imdp.num_states(),
                abs.imdp.num_transitions(),
                if abs.product { "product" } else { "robust" }
            );
            Ok(0)
        }
        Cmd::Simulate { common, trials } => {
            let mut cfg = load(&common)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            let result = run_pipeline(&cfg, &common.out)?;
            report_rounds(&result);
            let summary = run_simulation(&cfg, &result, &common.out)?;
            println!(
                "simulation: {}/{} satisfied (frequency {:.4}, 95% Wilson [{:.4},{:.4}], bound {:?})",
                summary.successes,
                summary.trials,
                summary.frequency,
                summary.wilson_low,
                summary.wilson_high,
                summary.value_at_initial
            );
            Ok(exit_code(result.outcome.satisfied))
        }
        Cmd::ExportPrism(args) => {
            let cfg = load(&args)?;
            std::fs::create_dir_all(&args.out)?;
            let prep = prepare(&cfg)?;
            let abs = build_abstraction(&cfg, &prep, cfg.samples, Some(&args.out.join("cache")))?;
            let path = args.out.join("transitions.txt");
            export_transitions(&abs.imdp, &path)?;
            println!("wrote {}", path.display());
            Ok(0)
        }
    }
}

fn report_rounds(result: &PipelineResult) {
    for r in &result.outcome.rounds {
        println!(
            "round {}: W={} states={} transitions={} value={:?} satisfied={:?} ({} ms abstraction, {} ms checking)",
            r.round,
            r.samples,
            r.num_states,
            r.num_transitions,
            r.value_at_initial,
            r.satisfied,
            r.millis_abstraction,
            r.millis_check
        );
    }
    println!(
        "result: {}",
        match result.outcome.satisfied {
            Some(true) => "formula satisfied at the initial state",
            Some(false) => "formula NOT satisfied at the initial state",
            None => "value reported (no threshold to decide)",
        }
    );
}
