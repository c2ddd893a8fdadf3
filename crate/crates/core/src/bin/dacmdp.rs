use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dacmdp::compiler::{coverage_stats, CoreStates, DacConfig};
use dacmdp::dataset::{generate, BehaviorPolicy, LoadOptions};
use dacmdp::envs::{evaluate_policy, EnvSpec};
use dacmdp::error::{DacError, ErrorCategory, Result};
use dacmdp::harness::{self, candidate_policy_search, default_candidates, EvalSpec, SweepSpec};
use dacmdp::knn::NeighborIndex;
use dacmdp::manifest::RunManifest;
use dacmdp::solver::{solve_parallel, synthetic_mdp, SolveOptions, SolveResult};
use dacmdp::whatif::{policy_settings, ModifierSpec};
use dacmdp::{CoreMdp, Dataset, DatasetFormat, PolicyHandle};

const COST_HELP: &str = "Distance cost C. Rule of thumb: the order of magnitude of the observed rewards";

#[derive(Parser)]
#[command(name = "dacmdp", version, about = "Compile offline datasets into DAC-MDPs, solve them and evaluate the policies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Roll a behavior policy in an environment and save the transitions.
    GenData(GenDataArgs),
    /// Compile a dataset into a core MDP (.dacm).
    Compile(CompileArgs),
    /// Solve a compiled MDP with value iteration and save the Q table.
    Solve(SolveArgs),
    /// Evaluate the lookahead policy of a solved MDP in an environment.
    Eval(EvalArgs),
    /// Apply zero-shot modifiers to a compiled MDP.
    Whatif(WhatifArgs),
    /// Run a parameter sweep described by a JSON file and write a CSV table.
    Sweep(SweepArgs),
    /// Run the weighting × state-kNN × size ablation of a sweep file.
    Ablate(SweepArgs),
    /// Time the solver on a synthetic MDP at several thread counts.
    Bench(BenchArgs),
    /// Print dataset / MDP / Q-table statistics as JSON.
    Inspect(InspectArgs),
}

#[derive(Args, Clone)]
struct EnvArgs {
    /// `cartpole`, `grid` or `grid:<layout>`.
    #[arg(long, default_value = "cartpole")]
    env: String,
    /// Grid layout name or file (overrides the one in --env).
    #[arg(long)]
    layout: Option<String>,
    /// Action slip probability of the grid environment.
    #[arg(long, default_value_t = 0.0)]
    env_slip: f64,
    /// Start grid episodes in a random open cell and heading.
    #[arg(long)]
    exploring_starts: bool,
}

impl EnvArgs {
    fn spec(&self) -> Result<EnvSpec> {
        let spec = match &self.layout {
            Some(l) if self.env == "grid" || self.env.starts_with("grid:") => EnvSpec::grid(l)?,
            Some(_) => return Err(DacError::Config(format!("--layout only applies to grid environments, not {}", self.env))),
            None => self.env.parse()?,
        };
        if !(0.0..=1.0).contains(&self.env_slip) {
            return Err(DacError::Config(format!("--env-slip must lie in [0, 1] (got {})", self.env_slip)));
        }
        Ok(spec.with_slip(self.env_slip).with_exploring_starts(self.exploring_starts))
    }
}

#[derive(Args)]
struct DacArgs {
    /// Neighbors used to compile rewards and transitions.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Neighbors used by the decision-time lookahead.
    #[arg(long, default_value_t = 11)]
    kpi: usize,
    #[arg(long, default_value_t = 1.0, help = COST_HELP)]
    cost: f64,
    /// Discount factor, 0 <= gamma < 1.
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    /// Bellman residual at which value iteration stops.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Inverse-distance neighbor weights instead of uniform 1/k.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    weighted: bool,
    /// One state-level kNN query at decision time instead of one per action.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    sknn: bool,
}

impl DacArgs {
    fn config(&self) -> DacConfig {
        DacConfig {
            k: self.k,
            k_pi: self.kpi,
            cost: self.cost,
            gamma: self.gamma,
            weighted: self.weighted,
            sknn: self.sknn,
            delta_min: self.tol,
            max_iters: self.max_iters,
            ..DacConfig::default()
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// `random`, `scripted`/`optimal`, `mixed` or `eps:<e1>,<e2>,...`.
    #[arg(long, default_value = "random")]
    policy: String,
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// `jsonl` or `binary` (default: from the file extension).
    #[arg(long)]
    format: Option<DatasetFormat>,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    data: PathBuf,
    /// Input dataset format (default: from the file extension).
    #[arg(long)]
    format: Option<DatasetFormat>,
    /// Clip rewards into `lo,hi` while loading.
    #[arg(long, value_parser = parse_clip)]
    clip_rewards: Option<(f32, f32)>,
    #[command(flatten)]
    dac: DacArgs,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// Discount (default: the one stored in the MDP).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset the MDP was compiled from.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    format: Option<DatasetFormat>,
    #[arg(long)]
    mdp: PathBuf,
    /// Solved Q table; solved in-process when absent.
    #[arg(long)]
    q: Option<PathBuf>,
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
    /// Probability of a uniformly random action at each step.
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the MDP's k_pi.
    #[arg(long)]
    kpi: Option<usize>,
    #[arg(long, action = clap::ArgAction::Set)]
    sknn: Option<bool>,
    /// Candidate policies to try online; 1 is pure offline evaluation.
    #[arg(long, default_value_t = 1)]
    ne: usize,
    #[arg(long)]
    threads: Option<usize>,
    /// Report file (JSON); printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WhatifArgs {
    #[arg(long)]
    mdp: PathBuf,
    /// `action_penalty:<action>:<penalty>`, `discount:<gamma>` or `slip:<prob>`; repeatable.
    #[arg(long, required = true)]
    modifier: Vec<String>,
    /// Environment used to resolve action names such as LEFT.
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the evaluation seed of the sweep file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 100_000)]
    states: usize,
    #[arg(long, default_value_t = 5)]
    actions: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Comma-separated thread counts.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    threads: Vec<usize>,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV file; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    format: Option<DatasetFormat>,
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    q: Option<PathBuf>,
    /// Neighbor count for the coverage statistics.
    #[arg(long, default_value_t = 5)]
    k: usize,
}

fn parse_clip(s: &str) -> std::result::Result<(f32, f32), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f32 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f32 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo <= hi) {
        return Err("clip range needs lo <= hi".into());
    }
    Ok((lo, hi))
}

fn load_dataset(path: &Path, format: Option<DatasetFormat>) -> Result<Dataset> {
    Dataset::load(path, format.unwrap_or_else(|| DatasetFormat::from_path(path)))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(DacError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| DacError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| DacError::Io { path: path.to_path_buf(), source: e })
}

/// Write to stdout, ignoring a closed pipe.
fn print_stdout(bytes: &[u8]) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(bytes).and_then(|_| if bytes.ends_with(b"\n") { Ok(()) } else { out.write_all(b"\n") });
}

fn argv() -> Vec<String> {
    std::env::args().collect()
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let env = a.env.spec()?;
    let policy: BehaviorPolicy = a.policy.parse()?;
    let mut m = RunManifest::new("gen-data", argv());
    m.seed = Some(a.seed);
    m.config = json!({ "env": env, "policy": policy, "steps": a.steps, "seed": a.seed });
    let t = Instant::now();
    let ds = generate(&env, &policy, a.steps, a.seed)?;
    m.timings_ms.insert("generate".into(), ms(t));
    let format = a.format.unwrap_or_else(|| DatasetFormat::from_path(&a.out));
    ds.save(&a.out, format)?;
    m.output(&a.out)?;
    m.write_beside(&a.out)?;
    eprintln!("wrote {} transitions to {}", ds.len(), a.out.display());
    Ok(())
}

fn compile(a: CompileArgs) -> Result<()> {
    let cfg = a.dac.config();
    cfg.validate()?;
    set_threads(a.threads)?;
    let mut m = RunManifest::new("compile", argv());
    m.config = json!({ "dac": cfg, "clip_rewards": a.clip_rewards, "threads": a.threads });
    m.input(&a.data)?;
    let format = a.format.unwrap_or_else(|| DatasetFormat::from_path(&a.data));
    let ds = Dataset::load_with(&a.data, format, LoadOptions { clip_rewards: a.clip_rewards })?;

    let t = Instant::now();
    let idx = NeighborIndex::build(&ds);
    m.timings_ms.insert("index".into(), ms(t));
    let t = Instant::now();
    let mdp = dacmdp::compile(&ds, &idx, &cfg)?;
    m.timings_ms.insert("compile".into(), ms(t));

    mdp.save(&a.out)?;
    m.output(&a.out)?;
    m.write_beside(&a.out)?;
    eprintln!("compiled {} core states x {} actions to {}", mdp.n_states, mdp.n_actions, a.out.display());
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    let mdp = CoreMdp::load(&a.mdp)?;
    let mut opts = SolveOptions::from_config(&mdp.config);
    if let Some(g) = a.gamma {
        opts.gamma = g;
    }
    if let Some(t) = a.tol {
        opts.delta_min = t;
    }
    if let Some(n) = a.max_iters {
        opts.max_iters = n;
    }
    opts.validate()?;
    let threads = a.threads.unwrap_or_else(|| rayon::current_num_threads());
    let mut m = RunManifest::new("solve", argv());
    m.config = json!({ "gamma": opts.gamma, "tol": opts.delta_min, "max_iters": opts.max_iters, "threads": threads });
    m.input(&a.mdp)?;

    let res = solve_parallel(&mdp, &opts, threads)?;
    m.timings_ms.insert("solve".into(), res.wall_time.as_secs_f64() * 1e3);
    res.save(&a.out)?;
    m.output(&a.out)?;
    m.write_beside(&a.out)?;
    eprintln!(
        "{} after {} iterations, residual {:.3e}",
        if res.converged { "converged" } else { "stopped (max iterations)" },
        res.iterations,
        res.residual
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    set_threads(a.threads)?;
    let env = a.env.spec()?;
    let ds = load_dataset(&a.data, a.format)?;
    let mdp = CoreMdp::load(&a.mdp)?;
    let mut m = RunManifest::new("eval", argv());
    m.seed = Some(a.seed);
    m.input(&a.data)?;
    m.input(&a.mdp)?;

    let report = if a.ne > 1 {
        if !mdp.modifiers.is_empty() {
            return Err(DacError::Config("--ne > 1 recompiles candidates and cannot be used with a modified MDP".into()));
        }
        let mut cands = default_candidates(&mdp.config);
        if a.ne > cands.len() {
            return Err(DacError::Config(format!("--ne must be at most {} (the candidate grid size)", cands.len())));
        }
        cands.truncate(a.ne);
        let spec = EvalSpec { env: env.clone(), episodes: a.episodes, eps: a.eps, seed: a.seed };
        m.config = json!({ "env": env, "eval": spec, "candidates": cands });
        let t = Instant::now();
        let rep = candidate_policy_search(&ds, &cands, &spec)?;
        m.timings_ms.insert("candidates".into(), ms(t));
        serde_json::to_value(rep)?
    } else {
        let core = CoreStates::from_dataset(&ds);
        if core.len() != mdp.n_states || core.vectors != mdp.state_vectors {
            return Err(DacError::Config(format!(
                "{} was not compiled from {}",
                a.mdp.display(),
                a.data.display()
            )));
        }
        let idx = NeighborIndex::build(&ds);
        let res = match &a.q {
            Some(q) => {
                m.input(q)?;
                let res = SolveResult::load(q)?;
                if res.n_states() != mdp.n_states || res.n_actions != mdp.n_actions {
                    return Err(DacError::Config(format!("{} does not match {}", q.display(), a.mdp.display())));
                }
                res
            }
            None => harness::solve(&mdp, &SolveOptions::from_config(&mdp.config), a.threads)?,
        };
        let mut settings = policy_settings(&mdp);
        if let Some(k) = a.kpi {
            settings.k_pi = k;
        }
        if let Some(s) = a.sknn {
            settings.sknn = s;
        }
        m.config = json!({ "env": env, "episodes": a.episodes, "eps": a.eps, "seed": a.seed, "policy": settings });
        let h = PolicyHandle::new(&ds, &idx, &core, &res, settings)?;
        let t = Instant::now();
        let rep = evaluate_policy(&env, &h, a.episodes, a.eps, a.seed)?;
        m.timings_ms.insert("evaluate".into(), ms(t));
        json!({
            "mean_return": rep.mean_return,
            "std": rep.std,
            "ci90": rep.ci_half_width(1.645),
            "episodes": a.episodes,
            "terminated": rep.terminated.iter().filter(|t| **t).count(),
            "per_episode": rep.per_episode,
        })
    };

    let text = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(out) => {
            write_output(out, text.as_bytes())?;
            m.output(out)?;
            m.write_beside(out)?;
        }
        None => print_stdout(text.as_bytes()),
    }
    Ok(())
}

fn whatif(a: WhatifArgs) -> Result<()> {
    let env = a.env.spec()?;
    let mut mdp = CoreMdp::load(&a.mdp)?;
    let mods = a
        .modifier
        .iter()
        .map(|s| ModifierSpec::parse_with(s, |name| env.parse_action(name)))
        .collect::<Result<Vec<_>>>()?;
    let mut m = RunManifest::new("whatif", argv());
    m.config = json!({ "modifiers": mods });
    m.input(&a.mdp)?;
    for md in &mods {
        mdp = md.apply(&mdp)?;
    }
    mdp.save(&a.out)?;
    m.output(&a.out)?;
    m.write_beside(&a.out)?;
    let applied: Vec<String> = mods.iter().map(|m| m.to_string()).collect();
    eprintln!("applied {} to {}", applied.join(", "), a.out.display());
    Ok(())
}

fn sweep(a: SweepArgs, ablate: bool) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| DacError::Io { path: a.config.clone(), source: e })?;
    let mut spec = SweepSpec::from_json(&text)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(e) = a.episodes {
        spec.episodes = e;
    }
    if a.threads.is_some() {
        spec.threads = a.threads;
    }
    spec.validate()?;
    let name = if ablate { "ablate" } else { "sweep" };
    let mut m = RunManifest::new(name, argv());
    m.seed = Some(spec.seed);
    m.config = serde_json::to_value(&spec)?;
    m.input(&a.config)?;
    let t = Instant::now();
    let rows = if ablate { harness::run_ablation(&spec)? } else { harness::run_sweep(&spec)? };
    m.timings_ms.insert(name.into(), ms(t));
    let mut buf = Vec::new();
    harness::write_csv(&rows, &mut buf)?;
    write_output(&a.out, &buf)?;
    m.output(&a.out)?;
    m.write_beside(&a.out)?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    eprintln!("{} rows ({} failed) written to {}", rows.len(), failed, a.out.display());
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.states == 0 || a.actions == 0 || a.k == 0 {
        return Err(DacError::Config("--states, --actions and --k must be >= 1".into()));
    }
    if a.threads.iter().any(|t| *t == 0) {
        return Err(DacError::Config("--threads entries must be >= 1".into()));
    }
    let opts = SolveOptions { gamma: a.gamma, delta_min: a.tol, max_iters: a.max_iters };
    opts.validate()?;
    let mut m = RunManifest::new("bench", argv());
    m.seed = Some(a.seed);
    m.config = json!({
        "states": a.states, "actions": a.actions, "k": a.k, "threads": a.threads,
        "gamma": a.gamma, "tol": a.tol, "max_iters": a.max_iters, "seed": a.seed,
    });
    let t = Instant::now();
    let mdp = synthetic_mdp(a.states, a.actions, a.k, a.seed);
    m.timings_ms.insert("build".into(), ms(t));

    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["n_states", "n_actions", "k", "threads", "iterations", "wall_time_ms", "residual", "v_hash"])?;
    for &threads in &a.threads {
        let res = solve_parallel(&mdp, &opts, threads)?;
        let wall = res.wall_time.as_secs_f64() * 1e3;
        m.timings_ms.insert(format!("solve_t{threads}"), wall);
        wr.write_record([
            a.states.to_string(),
            a.actions.to_string(),
            a.k.to_string(),
            threads.to_string(),
            res.iterations.to_string(),
            format!("{wall:.3}"),
            format!("{:e}", res.residual),
            res.v_hash(),
        ])?;
    }
    let buf = wr.into_inner().map_err(|e| DacError::Config(e.to_string()))?;
    match &a.out {
        Some(out) => {
            write_output(out, &buf)?;
            m.output(out)?;
            m.write_beside(out)?;
        }
        None => print_stdout(&buf),
    }
    Ok(())
}

fn inspect(a: InspectArgs) -> Result<()> {
    if a.data.is_none() && a.mdp.is_none() && a.q.is_none() {
        return Err(DacError::Config("inspect needs at least one of --data, --mdp, --q".into()));
    }
    let mut out = serde_json::Map::new();
    if let Some(path) = &a.data {
        let ds = load_dataset(path, a.format)?;
        let idx = NeighborIndex::build(&ds);
        let cfg = DacConfig { k: a.k, ..DacConfig::default() };
        let core = CoreStates::from_dataset(&ds);
        let rewards: Vec<f32> = (0..ds.len()).map(|i| ds.reward(i)).collect();
        let lo = rewards.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = rewards.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut ds_json = json!({
            "tuples": ds.len(),
            "state_dim": ds.state_dim(),
            "action_count": ds.action_count(),
            "action_support": ds.action_support(),
            "terminals": (0..ds.len()).filter(|&i| ds.terminal(i)).count(),
            "core_states": core.len(),
            "reward_range": [lo, hi],
            "metadata": ds.metadata,
        });
        match coverage_stats(&ds, &idx, &cfg) {
            Ok(c) => ds_json["coverage"] = serde_json::to_value(c)?,
            Err(e) => ds_json["coverage_error"] = json!(e.to_string()),
        }
        out.insert("dataset".into(), ds_json);
    }
    if let Some(path) = &a.mdp {
        let mdp = CoreMdp::load(path)?;
        let (lo, hi) = mdp.reward_range();
        out.insert(
            "mdp".into(),
            json!({
                "n_states": mdp.n_states,
                "n_actions": mdp.n_actions,
                "width": mdp.width,
                "state_dim": mdp.state_dim,
                "reward_range": [lo, hi],
                "terminal_slots": mdp.terminal.iter().filter(|t| **t).count(),
                "max_row_sum_error": mdp.max_row_sum_error(),
                "config": mdp.config,
                "modifiers": mdp.modifiers,
            }),
        );
    }
    if let Some(path) = &a.q {
        let res = SolveResult::load(path)?;
        let vmin = res.v.iter().copied().fold(f64::INFINITY, f64::min);
        let vmax = res.v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.insert(
            "q".into(),
            json!({
                "n_states": res.n_states(),
                "n_actions": res.n_actions,
                "gamma": res.gamma,
                "iterations": res.iterations,
                "residual": res.residual,
                "converged": res.converged,
                "v_range": [vmin, vmax],
                "v_hash": res.v_hash(),
            }),
        );
    }
    print_stdout(serde_json::to_string_pretty(&out)?.as_bytes());
    Ok(())
}

fn exit_code(e: &DacError) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Numeric => 4,
        ErrorCategory::Io => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::GenData(a) => gen_data(a),
        Cmd::Compile(a) => compile(a),
        Cmd::Solve(a) => solve(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Whatif(a) => whatif(a),
        Cmd::Sweep(a) => sweep(a, false),
        Cmd::Ablate(a) => sweep(a, true),
        Cmd::Bench(a) => bench(a),
        Cmd::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e.category() {
                ErrorCategory::Config => "config",
                ErrorCategory::Data => "data",
                ErrorCategory::Numeric => "numeric",
                ErrorCategory::Io => "io",
            };
            eprintln!("error ({kind}): {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
