//! Experiment orchestration: parameter sweeps, the candidate-policy
//! protocol and ablations, all emitting flat result tables.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compiler::{CoreMdp, CoreStates, DacConfig, NeighborCache};
use crate::dataset::{generate, BehaviorPolicy, Dataset, DatasetFormat};
use crate::envs::{evaluate_policy, EnvSpec, EvalReport};
use crate::error::{DacError, Result};
use crate::knn::NeighborIndex;
use crate::policy::{PolicyHandle, PolicySettings};
use crate::reprs::Representation;
use crate::solver::{solve_parallel, value_iterate, SolveOptions, SolveResult};

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    File { path: PathBuf },
    Generate { env: EnvSpec, policy: BehaviorPolicy, steps: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: DatasetSource,
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match &self.source {
            DatasetSource::File { path } => Dataset::load(path, DatasetFormat::from_path(path)),
            DatasetSource::Generate { env, policy, steps, seed } => generate(env, policy, *steps, *seed),
        }
    }
}

/// Episode budget of one policy evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub env: EnvSpec,
    pub episodes: usize,
    pub eps: f64,
    pub seed: u64,
}

/// Full factorial sweep description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub datasets: Vec<DatasetSpec>,
    /// Evaluation environment.
    pub env: EnvSpec,
    pub cost: Vec<f64>,
    pub k: Vec<usize>,
    pub k_pi: Vec<usize>,
    pub weighted: Vec<bool>,
    pub sknn: Vec<bool>,
    pub eps: Vec<f64>,
    /// Fractions of each dataset to use (leading tuples).
    pub sizes: Vec<f64>,
    pub episodes: usize,
    pub gamma: f64,
    pub delta_min: f64,
    pub max_iters: usize,
    /// Evaluation seed shared by every row, so rows are paired.
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let cfg = DacConfig::default();
        SweepSpec {
            datasets: Vec::new(),
            env: EnvSpec::CartPole,
            cost: vec![cfg.cost],
            k: vec![cfg.k],
            k_pi: vec![cfg.k_pi],
            weighted: vec![cfg.weighted],
            sknn: vec![cfg.sknn],
            eps: vec![0.0],
            sizes: vec![1.0],
            episodes: 50,
            gamma: cfg.gamma,
            delta_min: cfg.delta_min,
            max_iters: cfg.max_iters,
            seed: 0,
            threads: None,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = |name: &str, n: usize| if n == 0 { Err(DacError::Config(format!("sweep axis '{name}' is empty"))) } else { Ok(()) };
        empty("datasets", self.datasets.len())?;
        empty("cost", self.cost.len())?;
        empty("k", self.k.len())?;
        empty("k_pi", self.k_pi.len())?;
        empty("weighted", self.weighted.len())?;
        empty("sknn", self.sknn.len())?;
        empty("eps", self.eps.len())?;
        empty("sizes", self.sizes.len())?;
        if self.episodes == 0 {
            return Err(DacError::Config("episodes must be >= 1".into()));
        }
        if let Some(f) = self.sizes.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(DacError::Config(format!("dataset size fraction {f} outside (0, 1]")));
        }
        if let Some(e) = self.eps.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(DacError::Config(format!("eps {e} outside [0, 1]")));
        }
        for &k in &self.k {
            for &k_pi in &self.k_pi {
                for &cost in &self.cost {
                    DacConfig { k, k_pi, cost, ..self.base_config() }.validate()?;
                }
            }
        }
        Ok(())
    }

    fn base_config(&self) -> DacConfig {
        DacConfig { gamma: self.gamma, delta_min: self.delta_min, max_iters: self.max_iters, ..DacConfig::default() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// One line of a result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub size: usize,
    #[serde(rename = "C")]
    pub cost: f64,
    pub k: usize,
    pub k_pi: usize,
    pub weighted: bool,
    pub sknn: bool,
    pub eps: f64,
    pub mean_return: f64,
    pub std: f64,
    pub episodes: usize,
    pub solve_iters: usize,
    pub wall_time_ms: f64,
    pub error: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_empty()
    }
}

/// A dataset with its index and core states, ready to compile.
#[derive(Debug)]
pub struct Prepared {
    pub ds: Dataset,
    pub idx: NeighborIndex,
    pub core: CoreStates,
    caches: HashMap<usize, NeighborCache>,
}

impl Prepared {
    pub fn new(ds: Dataset) -> Self {
        let idx = NeighborIndex::build(&ds);
        let core = CoreStates::from_dataset(&ds);
        Prepared { ds, idx, core, caches: HashMap::new() }
    }

    /// Neighbor cache for `k`, built on first use.
    pub fn cache(&mut self, k: usize) -> Result<&NeighborCache> {
        if !self.caches.contains_key(&k) {
            let c = NeighborCache::build(&self.core, &self.idx, k)?;
            self.caches.insert(k, c);
        }
        Ok(&self.caches[&k])
    }

    pub fn compile(&mut self, cfg: &DacConfig) -> Result<CoreMdp> {
        cfg.validate()?;
        self.cache(cfg.k)?;
        self.caches[&cfg.k].compile(&self.ds, &self.core, cfg)
    }

    pub fn policy<'a>(&'a self, solve: &'a SolveResult, settings: PolicySettings) -> Result<PolicyHandle<'a>> {
        PolicyHandle::new(&self.ds, &self.idx, &self.core, solve, settings)
    }
}

/// Solve with `threads` workers, or on the current rayon pool when `None`.
pub fn solve(mdp: &CoreMdp, opts: &SolveOptions, threads: Option<usize>) -> Result<SolveResult> {
    match threads {
        Some(t) => solve_parallel(mdp, opts, t),
        None => value_iterate(mdp, opts),
    }
}

/// Compile, solve and evaluate one configuration on a prepared dataset.
pub fn evaluate_config(
    prep: &mut Prepared,
    cfg: &DacConfig,
    eval: &EvalSpec,
    repr: Option<&Representation>,
    threads: Option<usize>,
) -> Result<(EvalReport, SolveResult)> {
    let mdp = prep.compile(cfg)?;
    let res = solve(&mdp, &SolveOptions::from_config(cfg), threads)?;
    let report = {
        let mut h = prep.policy(&res, PolicySettings::from_config(cfg, mdp.n_actions))?;
        if let Some(r) = repr {
            h = h.with_representation(r);
        }
        evaluate_policy(&eval.env, &h, eval.episodes, eval.eps, eval.seed)?
    };
    Ok((report, res))
}

/// Run every axis combination. Failures become rows with `error` set.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for dspec in &spec.datasets {
        let full = dspec.load()?;
        for &frac in &spec.sizes {
            let n = ((full.len() as f64 * frac).round() as usize).max(1);
            let ds = if n >= full.len() { full.clone() } else { full.prefix(n)? };
            let mut prep = Prepared::new(ds);
            sweep_dataset(spec, &dspec.name, &mut prep, &mut rows);
        }
    }
    Ok(rows)
}

fn sweep_dataset(spec: &SweepSpec, name: &str, prep: &mut Prepared, rows: &mut Vec<SweepRow>) {
    let size = prep.ds.len();
    for &k in &spec.k {
        for &weighted in &spec.weighted {
            for &cost in &spec.cost {
                let cfg = DacConfig { k, cost, weighted, ..spec.base_config() };
                let start = Instant::now();
                let solved = prep
                    .compile(&cfg)
                    .and_then(|mdp| solve(&mdp, &SolveOptions::from_config(&cfg), spec.threads));
                let solve_ms = start.elapsed().as_secs_f64() * 1e3;
                for &k_pi in &spec.k_pi {
                    for &sknn in &spec.sknn {
                        for &eps in &spec.eps {
                            let mut row = SweepRow {
                                dataset: name.to_string(),
                                size,
                                cost,
                                k,
                                k_pi,
                                weighted,
                                sknn,
                                eps,
                                mean_return: f64::NAN,
                                std: f64::NAN,
                                episodes: spec.episodes,
                                solve_iters: 0,
                                wall_time_ms: solve_ms,
                                error: String::new(),
                            };
                            let outcome = solved.as_ref().map_err(|e| e.to_string()).and_then(|res| {
                                row.solve_iters = res.iterations;
                                let cfg = DacConfig { k_pi, sknn, ..cfg.clone() };
                                let t = Instant::now();
                                let h = prep.policy(res, PolicySettings::from_config(&cfg, res.n_actions)).map_err(|e| e.to_string())?;
                                let rep = evaluate_policy(&spec.env, &h, spec.episodes, eps, spec.seed).map_err(|e| e.to_string())?;
                                row.wall_time_ms += t.elapsed().as_secs_f64() * 1e3;
                                Ok(rep)
                            });
                            match outcome {
                                Ok(rep) => {
                                    row.mean_return = rep.mean_return;
                                    row.std = rep.std;
                                }
                                Err(e) => row.error = e,
                            }
                            rows.push(row);
                        }
                    }
                }
            }
        }
    }
}

/// The ablation grid: weighting × state-level kNN × {10 %, 100 %} sizes.
pub fn run_ablation(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let spec = SweepSpec { weighted: vec![true, false], sknn: vec![true, false], sizes: vec![0.1, 1.0], ..spec.clone() };
    run_sweep(&spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub config: DacConfig,
    pub mean_return: f64,
    pub std: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub candidates: Vec<Candidate>,
    /// Highest mean return among successful candidates (first on ties).
    pub best: Option<usize>,
    pub n_e: usize,
}

/// The six-candidate grid: `C ∈ {1, 100, 1e6} × k_pi ∈ {11, 51}` at `k = 5`.
pub fn default_candidates(base: &DacConfig) -> Vec<DacConfig> {
    let mut out = Vec::new();
    for cost in [1.0, 100.0, 1e6] {
        for k_pi in [11, 51] {
            out.push(DacConfig { k: 5, cost, k_pi, ..base.clone() });
        }
    }
    out
}

/// Evaluate each candidate with the same episode seeds and pick the best.
pub fn candidate_policy_search(ds: &Dataset, candidates: &[DacConfig], eval: &EvalSpec) -> Result<CandidateReport> {
    if candidates.is_empty() {
        return Err(DacError::Config("need at least one candidate (N_e >= 1)".into()));
    }
    let mut prep = Prepared::new(ds.clone());
    let mut out = Vec::with_capacity(candidates.len());
    for cfg in candidates {
        let c = match evaluate_config(&mut prep, cfg, eval, None, None) {
            Ok((rep, _)) => Candidate { config: cfg.clone(), mean_return: rep.mean_return, std: rep.std, error: None },
            Err(e) => Candidate { config: cfg.clone(), mean_return: f64::NAN, std: f64::NAN, error: Some(e.to_string()) },
        };
        out.push(c);
    }
    let mut best: Option<usize> = None;
    for (i, c) in out.iter().enumerate() {
        if c.error.is_none() && best.is_none_or(|b| c.mean_return > out[b].mean_return) {
            best = Some(i);
        }
    }
    Ok(CandidateReport { n_e: out.len(), candidates: out, best })
}

pub fn write_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|e| DacError::io("<csv>", e))?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|r| r.map_err(DacError::from)).collect()
}
