//! Command-line driver. Every run writes its artifacts and a `manifest.json`
//! under the output directory.
//!
//! Settings resolve in this order, later wins: built-in defaults, the JSON
//! document given with `--config`, command-line flags.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use maxrenyi_core::contour::{contour_grid, write_contour_csv, ContourObjective};
use maxrenyi_core::coupon::coupon_value;
use maxrenyi_core::entropy::{renyi_entropy, RenyiOrder};
use maxrenyi_core::envs::{brute_force_compare, five_state, write_search_csv, EnvSpec};
use maxrenyi_core::io::{
    model_from_json, policy_from_json, policy_to_json, write_occupancy_csv, EnvModel,
};
use maxrenyi_core::mdp::{
    episodic_step_distribution, occupancy, NonStationaryPolicy, TabularPolicy,
};
use maxrenyi_core::pipeline::{
    collect_dataset, entropy_mixture, estimate_model, evaluate_policy, exploration_policy,
    optimal_value, plan, run_pipeline, sparse_rewards, theoretical_sample_bound,
    write_evaluation_csv, CollectionMode, DataSource, DatasetSize, EnvRef, EvaluationRow,
    Exploration, PlanOptions, PlannerMethod, PolicyMixture, RewardFn, TransitionDataset,
    UnseenValue,
};
use maxrenyi_core::solver::{
    maximize_entropy, EntropyTarget, SolvedPolicy, SolverMethod, SolverOptions,
};
use maxrenyi_core::trainer::{train, write_metrics_csv, Checkpoint, TrainerConfig};
use maxrenyi_core::Error;

/// Policy and occupancy of the entropy-maximising policy on the five-state
/// chain at order 0.5, as published (rows are actions, columns states).
/// Prints to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

const TOY_POLICY: [f64; 5] = [0.321, 0.276, 0.294, 0.401, 0.381];
const TOY_OCCUPANCY: [[f64; 5]; 2] = [
    [0.107, 0.062, 0.047, 0.045, 0.065],
    [0.226, 0.162, 0.113, 0.067, 0.106],
];
const TOY_G: f64 = 43.14;
const TOY_TOL_POLICY: f64 = 0.02;
const TOY_TOL_OCCUPANCY: f64 = 0.002;
const TOY_TOL_G: f64 = 0.5;
/// The published numbers are reproduced at this discount.
const TOY_GAMMA: f64 = 0.99;

#[derive(Parser)]
#[command(
    name = "maxrenyi",
    version,
    about = "Rényi-entropy exploration experiments"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Check a model file or built-in environment.
    Validate(EnvArgs),
    /// Discounted state-action occupancy of a policy.
    Occupancy(OccupancyArgs),
    /// Entropy and G of a policy, or of the entropy maximiser.
    Entropy(EntropyArgs),
    /// Five-state chain reproduction check.
    Toy(ToyArgs),
    /// Brute-force G comparison over a grid of two-state CMPs.
    Search(SearchArgs),
    /// Objective values on the three-cell simplex lattice.
    Contour(ContourArgs),
    /// Sample-complexity bound.
    Bound(BoundArgs),
    /// Sample-based entropy maximisation.
    Train(TrainArgs),
    /// Collect a transition dataset.
    Collect(CollectArgs),
    /// Plan on a dataset for one or more rewards.
    Plan(PlanArgs),
    /// Score planned policies on the true environment.
    Evaluate(EvaluateArgs),
    /// Explore, collect, plan and evaluate in one run.
    Pipeline(PipelineArgs),
}

#[derive(Args, Serialize, Clone, Default)]
struct EnvArgs {
    /// Built-in environment: five-state, two-state-gap, four-rooms, random, symmetric.
    #[arg(long)]
    env: Option<String>,
    /// Model JSON file (overrides --env).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Turns a discounted model into an episodic one with this horizon.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args, Serialize)]
struct OccupancyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    env: EnvArgs,
    /// Policy JSON (default uniform).
    #[arg(long)]
    policy: Option<PathBuf>,
    /// For episodic models: the 1-based step.
    #[arg(long)]
    step: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum MethodArg {
    GradientAscent,
    FrankWolfe,
}

impl From<MethodArg> for SolverMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::GradientAscent => SolverMethod::GradientAscent,
            MethodArg::FrankWolfe => SolverMethod::FrankWolfe,
        }
    }
}

#[derive(Args, Serialize)]
struct EntropyArgs {
    #[command(flatten)]
    #[serde(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Solve for the maximiser instead of scoring a given policy.
    #[arg(long)]
    maximize: bool,
    #[arg(long, value_enum, default_value_t = MethodArg::GradientAscent)]
    method: MethodArg,
}

#[derive(Args, Serialize)]
struct ToyArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = TOY_GAMMA)]
    gamma: f64,
    /// Compare against the published values even when alpha != 0.5.
    #[arg(long)]
    check: bool,
    /// Multiplies every comparison tolerance.
    #[arg(long, default_value_t = 1.0)]
    tolerance_scale: f64,
}

#[derive(Args, Serialize)]
struct SearchArgs {
    #[arg(long, default_value_t = 0.2)]
    step: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// Exit 1 when a counterexample is found.
    #[arg(long)]
    check: bool,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ObjectiveArg {
    G,
    Renyi,
}

#[derive(Args, Serialize)]
struct ContourArgs {
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::G)]
    objective: ObjectiveArg,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
}

#[derive(Args, Serialize)]
struct BoundArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long = "S")]
    n_states: usize,
    #[arg(long = "A")]
    n_actions: usize,
    #[arg(long = "H")]
    horizon: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    p: f64,
    /// Unknown absolute constant.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

/// Flags mirroring `TrainerConfig`; unset flags keep the config value.
#[derive(Args, Serialize, Default)]
struct TrainerFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    lr_policy: Option<f64>,
    #[arg(long)]
    lr_value: Option<f64>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    buffer: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    ppo_epochs: Option<usize>,
    #[arg(long)]
    value_epochs: Option<usize>,
    #[arg(long)]
    reward_cap: Option<f64>,
    /// plain or adam.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    mc_every: Option<usize>,
    #[arg(long)]
    mc_trajectories: Option<usize>,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    #[serde(flatten)]
    trainer: TrainerFlags,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ExplorationArg {
    Trained,
    Uniform,
    Random,
}

impl From<ExplorationArg> for Exploration {
    fn from(e: ExplorationArg) -> Self {
        match e {
            ExplorationArg::Trained => Exploration::Trained,
            ExplorationArg::Uniform => Exploration::Uniform,
            ExplorationArg::Random => Exploration::Random,
        }
    }
}

#[derive(Args, Serialize)]
struct CollectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    env: EnvArgs,
    /// Policy JSON, or a training checkpoint.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Used when no policy file is given. Episodic models use the entropy
    /// mixture for `trained`.
    #[arg(long, value_enum, default_value_t = ExplorationArg::Uniform)]
    exploration: ExplorationArg,
    /// Order of the episodic entropy mixture.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, conflicts_with = "trajectories")]
    transitions: Option<usize>,
    #[arg(long)]
    trajectories: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PlannerArg {
    ValueIteration,
    Npg,
    BatchConstrained,
}

impl From<PlannerArg> for PlannerMethod {
    fn from(p: PlannerArg) -> Self {
        match p {
            PlannerArg::ValueIteration => PlannerMethod::ValueIteration,
            PlannerArg::Npg => PlannerMethod::Npg,
            PlannerArg::BatchConstrained => PlannerMethod::BatchConstrained,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum UnseenArg {
    Pessimistic,
    Optimistic,
}

#[derive(Args, Serialize, Default)]
struct PlannerFlags {
    #[arg(long, value_enum)]
    method: Option<PlannerArg>,
    #[arg(long, value_enum)]
    unseen: Option<UnseenArg>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Serialize)]
struct PlanArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Reward JSON files.
    #[arg(long, required = true, num_args = 1..)]
    reward: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    planner: PlannerFlags,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    env: EnvArgs,
    /// Policy JSON files, paired in order with the rewards.
    #[arg(long, required = true, num_args = 1..)]
    policy: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    reward: Vec<PathBuf>,
}

#[derive(Args, Serialize)]
struct PipelineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    env: EnvArgs,
    #[arg(long, value_enum, default_value_t = ExplorationArg::Trained)]
    exploration: ExplorationArg,
    /// Load the explorer (policy JSON or checkpoint) instead of training.
    #[arg(long)]
    explorer: Option<PathBuf>,
    #[arg(long, conflicts_with = "episodes")]
    transitions: Option<usize>,
    /// Dataset size in trajectories (`--trajectories` sets the trainer batch).
    #[arg(long)]
    episodes: Option<usize>,
    /// Reward JSON files; default is one sparse reward per state-action pair.
    #[arg(long, num_args = 1..)]
    reward: Vec<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    planner: PlannerFlags,
    #[command(flatten)]
    #[serde(flatten)]
    trainer: TrainerFlags,
}

/// The `--config` document. Unknown fields are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    /// When present, must name the subcommand being run.
    subcommand: Option<String>,
    env: Option<EnvSpec>,
    model: Option<PathBuf>,
    /// Partial `TrainerConfig`; omitted fields keep their defaults.
    trainer: Map<String, Value>,
    planner: Option<PlanOptions>,
    out_dir: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    /// Bad flags, config or input files (exit 2).
    Usage(String),
    /// A reproduction check failed (exit 1).
    Check(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Resolved settings shared by every subcommand.
struct Context {
    config: RunConfig,
    out_dir: PathBuf,
    seed: u64,
    workers: Option<usize>,
    outputs: Vec<String>,
}

impl Context {
    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.out_dir.join(name))?))
    }

    fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let mut f = self.create(name)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.write_text(name, &serde_json::to_string_pretty(value)?)
    }

    /// Environment from flags, then config, then `default`.
    fn env(&self, args: &EnvArgs, default: &str) -> CliResult<EnvModel> {
        let model_path = args.model.as_ref().or(self.config.model.as_ref());
        let mut model = if let Some(path) = model_path.filter(|_| args.env.is_none()) {
            model_from_json(&fs::read_to_string(path)?)?
        } else {
            let mut spec = match (&args.env, &self.config.env) {
                (Some(name), _) => EnvSpec::named(name)?,
                (None, Some(spec)) => spec.clone(),
                (None, None) => EnvSpec::named(default)?,
            };
            if let Some(g) = args.gamma {
                spec.set_gamma(g);
            }
            EnvModel::Discounted(spec.build()?)
        };
        if let (Some(g), EnvModel::Discounted(c)) = (args.gamma, &model) {
            model = EnvModel::Discounted(c.with_gamma(g)?);
        }
        if let Some(h) = args.horizon {
            match &model {
                EnvModel::Discounted(c) => {
                    model = EnvModel::Episodic(maxrenyi_core::mdp::EpisodicMdp::from_cmp(c, h)?)
                }
                EnvModel::Episodic(m) if m.horizon() != h => {
                    return Err(usage("--horizon disagrees with the episodic model file"))
                }
                EnvModel::Episodic(_) => {}
            }
        }
        Ok(model)
    }

    /// Trainer settings: defaults with the environment discount, then the
    /// config's `trainer` object, then flags.
    fn trainer(&self, gamma: f64, flags: &TrainerFlags) -> CliResult<TrainerConfig> {
        let base = TrainerConfig {
            gamma,
            seed: self.seed,
            ..TrainerConfig::default()
        };
        let mut value = serde_json::to_value(base)?;
        let obj = value
            .as_object_mut()
            .expect("struct serializes to an object");
        for (k, v) in &self.config.trainer {
            obj.insert(k.clone(), v.clone());
        }
        let flag_value = serde_json::to_value(flags)?;
        for (k, v) in flag_value
            .as_object()
            .expect("flags serialize to an object")
        {
            if !v.is_null() {
                obj.insert(k.clone(), v.clone());
            }
        }
        let cfg: TrainerConfig =
            serde_json::from_value(value).map_err(|e| usage(format!("trainer config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn planner(&self, flags: &PlannerFlags, default_method: PlannerMethod) -> PlanOptions {
        let mut opts = self.config.planner.unwrap_or(PlanOptions {
            method: default_method,
            ..PlanOptions::default()
        });
        if let Some(m) = flags.method {
            opts.method = m.into();
        }
        if let Some(u) = flags.unseen {
            opts.unseen = match u {
                UnseenArg::Pessimistic => UnseenValue::Pessimistic,
                UnseenArg::Optimistic => UnseenValue::Optimistic,
            };
        }
        if let Some(c) = flags.min_count {
            opts.min_count = c;
        }
        if let Some(e) = flags.epsilon {
            opts.epsilon = e;
        }
        opts
    }
}

fn order(alpha: f64) -> CliResult<RenyiOrder> {
    Ok(RenyiOrder::new(alpha)?)
}

fn discounted(model: &EnvModel) -> CliResult<&maxrenyi_core::mdp::DiscountedCmp> {
    match model {
        EnvModel::Discounted(c) => Ok(c),
        EnvModel::Episodic(_) => Err(usage("this command needs a discounted model")),
    }
}

/// Policy JSON or a training checkpoint.
fn load_policy(path: &Path) -> CliResult<SolvedPolicy> {
    let text = fs::read_to_string(path)?;
    if let Ok(cp) = serde_json::from_str::<Checkpoint>(&text) {
        return Ok(SolvedPolicy::Stationary(cp.policy()?));
    }
    Ok(policy_from_json(&text)?)
}

fn load_stationary(path: &Path) -> CliResult<TabularPolicy> {
    load_policy(path)?
        .stationary()
        .cloned()
        .ok_or_else(|| usage(format!("{} is not a stationary policy", path.display())))
}

fn load_reward(path: &Path) -> CliResult<RewardFn> {
    Ok(RewardFn::from_json(&fs::read_to_string(path)?)?)
}

fn reward_id(path: &Path) -> String {
    path.file_stem().map_or_else(
        || path.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

fn print_matrix(label: &str, rows: &[Vec<f64>]) {
    say!("{label}");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.4}")).collect();
        say!("  {}", cells.join("  "));
    }
}

fn cmd_validate(ctx: &mut Context, args: &EnvArgs) -> CliResult<()> {
    let model = match ctx.env(args, "five-state") {
        Ok(m) => m,
        Err(CliError::Usage(msg)) if msg.starts_with("validation error") => {
            ctx.write_json("validation.json", &json!({"valid": false, "error": msg}))?;
            return Err(CliError::Check(msg));
        }
        Err(e) => return Err(e),
    };
    let report = match &model {
        EnvModel::Discounted(c) => {
            let unreachable: Vec<usize> = c
                .reachable_states()
                .iter()
                .enumerate()
                .filter(|(_, r)| !**r)
                .map(|(s, _)| s)
                .collect();
            json!({"valid": true, "kind": "discounted", "n_states": c.n_states(),
                   "n_actions": c.n_actions(), "gamma": c.gamma(), "unreachable_states": unreachable})
        }
        EnvModel::Episodic(m) => {
            json!({"valid": true, "kind": "episodic", "n_states": m.n_states(),
                                        "n_actions": m.n_actions(), "horizon": m.horizon()})
        }
    };
    say!("{}", serde_json::to_string_pretty(&report)?);
    ctx.write_json("validation.json", &report)
}

fn cmd_occupancy(ctx: &mut Context, args: &OccupancyArgs) -> CliResult<()> {
    let model = ctx.env(&args.env, "five-state")?;
    let d = match &model {
        EnvModel::Discounted(c) => {
            let pi = match &args.policy {
                Some(p) => load_stationary(p)?,
                None => TabularPolicy::uniform(c.n_states(), c.n_actions()),
            };
            occupancy(c, &pi, None)?
        }
        EnvModel::Episodic(m) => {
            let step = args
                .step
                .ok_or_else(|| usage("episodic occupancy needs --step"))?;
            let pi = match &args.policy {
                Some(p) => match load_policy(p)? {
                    SolvedPolicy::NonStationary(ns) => ns,
                    SolvedPolicy::Stationary(s) => NonStationaryPolicy::repeated(&s, m.horizon()),
                },
                None => NonStationaryPolicy::uniform(m.horizon(), m.n_states(), m.n_actions()),
            };
            episodic_step_distribution(m, &pi, step)?
        }
    };
    let mut f = ctx.create("occupancy.csv")?;
    write_occupancy_csv(&mut f, &d)?;
    f.flush()?;
    let _ = write_occupancy_csv(std::io::stdout().lock(), &d);
    Ok(())
}

fn cmd_entropy(ctx: &mut Context, args: &EntropyArgs) -> CliResult<()> {
    let model = ctx.env(&args.env, "five-state")?;
    let cmp = discounted(&model)?;
    let alpha = order(args.alpha)?;
    let (policy, report) = if args.maximize {
        let opts = SolverOptions {
            seed: ctx.seed,
            ..SolverOptions::default()
        };
        let r = maximize_entropy(
            EntropyTarget::Discounted(cmp),
            alpha,
            args.method.into(),
            &opts,
        )?;
        let pi = r
            .policy
            .stationary()
            .cloned()
            .expect("discounted solve is stationary");
        (pi, Some(r))
    } else {
        let pi = match &args.policy {
            Some(p) => load_stationary(p)?,
            None => TabularPolicy::uniform(cmp.n_states(), cmp.n_actions()),
        };
        (pi, None)
    };
    let d = occupancy(cmp, &policy, None)?;
    let h = renyi_entropy(d.weights(), alpha);
    let g = coupon_value(d.weights());
    say!("H_{} = {h}", args.alpha);
    say!("G = {g}");
    let mut out = json!({"alpha": args.alpha, "entropy": h, "g": if g.is_finite() { json!(g) } else { json!("inf") },
                         "policy": policy.prob_rows()});
    if let Some(r) = report {
        out["solver"] = serde_json::to_value(&r)?;
        ctx.write_text("policy.json", &policy_to_json(&r.policy)?)?;
    }
    ctx.write_json("entropy.json", &out)
}

#[derive(Serialize)]
struct Comparison {
    quantity: String,
    value: f64,
    reference: f64,
    tolerance: f64,
    pass: bool,
}

fn compare(quantity: String, value: f64, reference: f64, tolerance: f64) -> Comparison {
    Comparison {
        quantity,
        value,
        reference,
        tolerance,
        pass: (value - reference).abs() <= tolerance,
    }
}

fn cmd_toy(ctx: &mut Context, args: &ToyArgs) -> CliResult<()> {
    if !(args.tolerance_scale >= 0.0) {
        return Err(usage("--tolerance-scale must be non-negative"));
    }
    let cmp = five_state(args.gamma)?;
    let alpha = order(args.alpha)?;
    let opts = SolverOptions {
        seed: ctx.seed,
        ..SolverOptions::default()
    };
    let method = if args.gamma < 1.0 {
        SolverMethod::FrankWolfe
    } else {
        SolverMethod::GradientAscent
    };
    let report = maximize_entropy(EntropyTarget::Discounted(&cmp), alpha, method, &opts)?;
    let pi = report.policy.stationary().expect("stationary").clone();
    let d = occupancy(&cmp, &pi, None)?;
    let g = coupon_value(d.weights());
    let by_action = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..2).map(|a| (0..5).map(|s| f(s, a)).collect()).collect()
    };
    print_matrix(
        "policy (rows a1, a2; columns s1..s5)",
        &by_action(&|s, a| pi.prob(s, a)),
    );
    print_matrix("occupancy", &by_action(&|s, a| d.get(s, a)));
    say!("G = {g:.4}");
    let mut checks = Vec::new();
    let compared = args.check || args.alpha == 0.5;
    if compared {
        let k = args.tolerance_scale;
        for (s, r) in TOY_POLICY.iter().enumerate() {
            checks.push(compare(
                format!("pi(a1|s{})", s + 1),
                pi.prob(s, 0),
                *r,
                k * TOY_TOL_POLICY,
            ));
        }
        for (a, row) in TOY_OCCUPANCY.iter().enumerate() {
            for (s, r) in row.iter().enumerate() {
                checks.push(compare(
                    format!("d(s{},a{})", s + 1, a + 1),
                    d.get(s, a),
                    *r,
                    k * TOY_TOL_OCCUPANCY,
                ));
            }
        }
        checks.push(compare("G".into(), g, TOY_G, k * TOY_TOL_G));
        for c in &checks {
            say!(
                "{} {}: {:.4} vs {:.4} (tol {})",
                if c.pass { "PASS" } else { "FAIL" },
                c.quantity,
                c.value,
                c.reference,
                c.tolerance
            );
        }
    }
    let ok = checks.iter().all(|c| c.pass);
    ctx.write_json(
        "toy.json",
        &json!({"alpha": args.alpha, "gamma": args.gamma, "policy": pi.prob_rows(), "occupancy": d.weights(),
                "g": g, "solver": report, "compared": compared, "checks": checks, "pass": ok}),
    )?;
    if ok {
        Ok(())
    } else {
        Err(CliError::Check("toy values outside tolerance".into()))
    }
}

fn cmd_search(ctx: &mut Context, args: &SearchArgs) -> CliResult<()> {
    let report = brute_force_compare(
        args.step,
        order(args.alpha)?,
        args.gamma,
        ctx.workers.unwrap_or(0),
    )?;
    let mut f = ctx.create("search.csv")?;
    write_search_csv(&mut f, &report.rows)?;
    f.flush()?;
    say!("{}", serde_json::to_string_pretty(&report.summary)?);
    ctx.write_json("search_summary.json", &report.summary)?;
    if args.check && report.summary.n_counterexamples > 0 {
        return Err(CliError::Check(format!(
            "{} counterexamples",
            report.summary.n_counterexamples
        )));
    }
    Ok(())
}

fn cmd_contour(ctx: &mut Context, args: &ContourArgs) -> CliResult<()> {
    let objective = match args.objective {
        ObjectiveArg::G => ContourObjective::G,
        ObjectiveArg::Renyi => ContourObjective::Renyi(order(args.alpha)?),
    };
    let points = contour_grid(args.k, objective)?;
    let mut f = ctx.create("contour.csv")?;
    write_contour_csv(&mut f, &points, objective)?;
    f.flush()?;
    say!("{} points", points.len());
    Ok(())
}

fn cmd_bound(ctx: &mut Context, args: &BoundArgs) -> CliResult<()> {
    let b = theoretical_sample_bound(
        args.n_states,
        args.n_actions,
        args.horizon,
        args.eps,
        args.p,
        args.alpha,
        args.c,
    )?;
    say!("{b:e}");
    ctx.write_json("bound.json", &json!({"args": args, "bound": b}))
}

fn cmd_train(ctx: &mut Context, args: &TrainArgs) -> CliResult<()> {
    let model = ctx.env(&args.env, "five-state")?;
    let cmp = discounted(&model)?;
    let cfg = ctx.trainer(cmp.gamma(), &args.trainer)?;
    let result = train(cmp, &cfg)?;
    let mut f = ctx.create("metrics.csv")?;
    write_metrics_csv(&mut f, &result.metrics)?;
    f.flush()?;
    ctx.write_json("checkpoint.json", &Checkpoint::new(&result, &cfg))?;
    ctx.write_text(
        "policy.json",
        &policy_to_json(&SolvedPolicy::Stationary(result.policy.clone()))?,
    )?;
    if let Some(last) = result.metrics.last() {
        say!("final exact entropy {:.6}", last.exact_entropy);
    }
    say!("best exact entropy {:.6}", result.best_exact_entropy());
    Ok(())
}

fn dataset_size(
    transitions: Option<usize>,
    trajectories: Option<usize>,
    default: DatasetSize,
) -> DatasetSize {
    match (transitions, trajectories) {
        (Some(n), _) => DatasetSize::Transitions(n),
        (None, Some(m)) => DatasetSize::Trajectories(m),
        (None, None) => default,
    }
}

fn cmd_collect(ctx: &mut Context, args: &CollectArgs) -> CliResult<()> {
    let model = ctx.env(&args.env, "five-state")?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let dataset = match &model {
        EnvModel::Discounted(cmp) => {
            let pi = match &args.policy {
                Some(p) => load_stationary(p)?,
                None => {
                    let flags = TrainerFlags {
                        alpha: Some(args.alpha),
                        ..TrainerFlags::default()
                    };
                    let cfg = ctx.trainer(cmp.gamma(), &flags)?;
                    exploration_policy(cmp, args.exploration.into(), &cfg, ctx.seed)?
                }
            };
            let size = dataset_size(
                args.transitions,
                args.trajectories,
                DatasetSize::Transitions(1000),
            );
            collect_dataset(
                EnvRef::Discounted(cmp),
                DataSource::Policy(&pi),
                size,
                CollectionMode::DiscountedGeometric,
                ctx.seed,
                &mut rng,
            )?
        }
        EnvModel::Episodic(mdp) => {
            let mixture = match (&args.policy, args.exploration) {
                (Some(p), _) => {
                    let ns = match load_policy(p)? {
                        SolvedPolicy::NonStationary(ns) => ns,
                        SolvedPolicy::Stationary(s) => {
                            NonStationaryPolicy::repeated(&s, mdp.horizon())
                        }
                    };
                    PolicyMixture::new(vec![ns])?
                }
                (None, ExplorationArg::Trained) => entropy_mixture(mdp, order(args.alpha)?)?,
                (None, ExplorationArg::Uniform) => {
                    PolicyMixture::new(vec![NonStationaryPolicy::uniform(
                        mdp.horizon(),
                        mdp.n_states(),
                        mdp.n_actions(),
                    )])?
                }
                (None, ExplorationArg::Random) => {
                    let p = maxrenyi_core::envs::random_policy(
                        mdp.n_states(),
                        mdp.n_actions(),
                        ctx.seed,
                    )?;
                    PolicyMixture::new(vec![NonStationaryPolicy::repeated(&p, mdp.horizon())])?
                }
            };
            if args.transitions.is_some() {
                return Err(usage("episodic collection is sized by --trajectories"));
            }
            let size = DatasetSize::Trajectories(args.trajectories.unwrap_or(1000));
            collect_dataset(
                EnvRef::Episodic(mdp),
                DataSource::Mixture(&mixture),
                size,
                CollectionMode::Episodic,
                ctx.seed,
                &mut rng,
            )?
        }
    };
    let mut f = ctx.create("dataset.jsonl")?;
    dataset.write_jsonl(&mut f)?;
    f.flush()?;
    say!(
        "{} transitions from {} trajectories",
        dataset.len(),
        dataset.meta.trajectories
    );
    Ok(())
}

fn cmd_plan(ctx: &mut Context, args: &PlanArgs) -> CliResult<()> {
    let dataset = TransitionDataset::read_jsonl(BufReader::new(File::open(&args.dataset)?))?;
    let model = estimate_model(&dataset)?;
    let opts = ctx.planner(&args.planner, PlannerMethod::ValueIteration);
    for path in &args.reward {
        let reward = load_reward(path)?;
        let policy = plan(&model, &reward, &opts)?;
        let name = format!("plan_{}.json", reward_id(path));
        ctx.write_text(&name, &policy_to_json(&policy)?)?;
        say!("{name}");
    }
    Ok(())
}

fn env_ref(model: &EnvModel) -> EnvRef<'_> {
    match model {
        EnvModel::Discounted(c) => EnvRef::Discounted(c),
        EnvModel::Episodic(m) => EnvRef::Episodic(m),
    }
}

fn cmd_evaluate(ctx: &mut Context, args: &EvaluateArgs) -> CliResult<()> {
    if args.policy.len() != args.reward.len() {
        return Err(usage("--policy and --reward need the same number of files"));
    }
    let model = ctx.env(&args.env, "five-state")?;
    let env = env_ref(&model);
    let mut rows = Vec::new();
    for (p, r) in args.policy.iter().zip(&args.reward) {
        let reward = load_reward(r)?;
        let j_planned = evaluate_policy(env, &load_policy(p)?, &reward)?;
        let (_, j_optimal) = optimal_value(env, &reward)?;
        rows.push(EvaluationRow {
            reward_id: reward_id(r),
            j_planned,
            j_optimal,
            gap: j_optimal - j_planned,
        });
    }
    let mut f = ctx.create("evaluation.csv")?;
    write_evaluation_csv(&mut f, &rows)?;
    f.flush()?;
    let _ = write_evaluation_csv(std::io::stdout().lock(), &rows);
    Ok(())
}

fn cmd_pipeline(ctx: &mut Context, args: &PipelineArgs) -> CliResult<()> {
    let mut env_args = args.env.clone();
    if env_args.env.is_none()
        && env_args.model.is_none()
        && ctx.config.env.is_none()
        && ctx.config.model.is_none()
    {
        env_args.gamma = env_args.gamma.or(Some(0.9));
    }
    let model = ctx.env(&env_args, "five-state")?;
    let cmp = discounted(&model)?;
    let cfg = ctx.trainer(cmp.gamma(), &args.trainer)?;
    let explorer = match &args.explorer {
        Some(p) => load_stationary(p)?,
        None => exploration_policy(cmp, args.exploration.into(), &cfg, ctx.seed)?,
    };
    let rewards = if args.reward.is_empty() {
        sparse_rewards(cmp.n_states(), cmp.n_actions())?
    } else {
        args.reward
            .iter()
            .map(|p| Ok((reward_id(p), load_reward(p)?)))
            .collect::<CliResult<Vec<_>>>()?
    };
    let size = dataset_size(
        args.transitions,
        args.episodes,
        DatasetSize::Transitions(200),
    );
    let planner = ctx.planner(&args.planner, PlannerMethod::BatchConstrained);
    let outcome = run_pipeline(cmp, &explorer, &rewards, size, &planner, ctx.seed)?;
    ctx.write_text(
        "explorer.json",
        &policy_to_json(&SolvedPolicy::Stationary(explorer))?,
    )?;
    let mut f = ctx.create("dataset.jsonl")?;
    outcome.dataset.write_jsonl(&mut f)?;
    f.flush()?;
    let mut f = ctx.create("evaluation.csv")?;
    write_evaluation_csv(&mut f, &outcome.rows)?;
    f.flush()?;
    let _ = write_evaluation_csv(std::io::stdout().lock(), &outcome.rows);
    let summary = json!({"transitions": outcome.dataset.len(), "worst_gap": outcome.worst_gap(),
                         "n_failing": outcome.n_failing(1e-6), "n_rewards": outcome.rows.len()});
    say!("{summary}");
    ctx.write_json("pipeline_summary.json", &summary)
}

fn config_hash(value: &Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn load_config(path: Option<&PathBuf>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn run(cli: Cli, started: Instant) -> CliResult<()> {
    let config = load_config(cli.config.as_ref())?;
    let resolved = serde_json::to_value(&cli.command)?;
    let name = resolved["subcommand"].as_str().expect("tagged").to_string();
    if let Some(expected) = &config.subcommand {
        if *expected != name {
            return Err(usage(format!("config is for `{expected}`, not `{name}`")));
        }
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let workers = cli.workers.or(config.workers);
    if workers == Some(0) {
        return Err(usage("--workers must be positive"));
    }
    if let Some(w) = workers {
        // a pool may already exist in tests; the sweep falls back to it
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global();
    }
    fs::create_dir_all(&out_dir)?;
    let mut ctx = Context {
        config,
        out_dir,
        seed,
        workers,
        outputs: Vec::new(),
    };
    let outcome = match &cli.command {
        Command::Validate(a) => cmd_validate(&mut ctx, a),
        Command::Occupancy(a) => cmd_occupancy(&mut ctx, a),
        Command::Entropy(a) => cmd_entropy(&mut ctx, a),
        Command::Toy(a) => cmd_toy(&mut ctx, a),
        Command::Search(a) => cmd_search(&mut ctx, a),
        Command::Contour(a) => cmd_contour(&mut ctx, a),
        Command::Bound(a) => cmd_bound(&mut ctx, a),
        Command::Train(a) => cmd_train(&mut ctx, a),
        Command::Collect(a) => cmd_collect(&mut ctx, a),
        Command::Plan(a) => cmd_plan(&mut ctx, a),
        Command::Evaluate(a) => cmd_evaluate(&mut ctx, a),
        Command::Pipeline(a) => cmd_pipeline(&mut ctx, a),
    };
    let full_config = json!({"command": resolved, "config": ctx.config, "seed": ctx.seed, "workers": ctx.workers});
    let manifest = json!({
        "subcommand": name,
        "config": full_config,
        "config_hash": config_hash(&full_config),
        "versions": {
            env!("CARGO_PKG_NAME"): env!("CARGO_PKG_VERSION"),
        },
        "started_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64() - started.elapsed().as_secs_f64()).unwrap_or(0.0),
        "wall_clock_secs": started.elapsed().as_secs_f64(),
        "outputs": ctx.outputs,
        "status": match &outcome {
            Ok(()) => "ok".to_string(),
            Err(CliError::Check(m)) => format!("check failed: {m}"),
            Err(CliError::Usage(m)) => format!("error: {m}"),
        },
    });
    let path = ctx.out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    outcome
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = Cli::parse();
    match run(cli, started) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
