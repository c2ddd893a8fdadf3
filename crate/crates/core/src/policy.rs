//! Acting on arbitrary states with a solved DAC-MDP.
//!
//! Q-values outside the core come from a one-step lookahead over the `k_pi`
//! nearest dataset tuples, bootstrapping from the solved core values. The
//! optional state-level mode replaces the per-action queries with a single
//! query and averages the solved Q rows of the neighbors.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compiler::{neighbor_weights, CoreStates, DacConfig, NOT_CORE};
use crate::dataset::Dataset;
use crate::error::{DacError, Result};
use crate::knn::NeighborIndex;
use crate::reprs::Representation;
use crate::solver::{argmax, SolveResult};

/// Anything that picks an action for an observation.
pub trait Controller {
    fn act(&self, obs: &[f32]) -> Result<usize>;
}

impl<C: Controller + ?Sized> Controller for &C {
    fn act(&self, obs: &[f32]) -> Result<usize> {
        (**self).act(obs)
    }
}

/// Which core Q row stands in for a neighbor in state-level mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateRows {
    /// The neighbor's own source state when it is a core state, else its
    /// successor.
    #[default]
    Source,
    /// Always the neighbor's successor state.
    Successor,
}

/// Decision-time parameters of a [`PolicyHandle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySettings {
    pub k_pi: usize,
    pub cost: f64,
    pub weighted: bool,
    pub sknn: bool,
    #[serde(default)]
    pub sknn_rows: StateRows,
    pub delta_d: f64,
    /// Added to each action's score after the lookahead.
    pub action_bias: Vec<f64>,
    /// Random-action probability the lookahead plans for. Must match the
    /// slip applied to the solved MDP for core self-consistency.
    pub slip: f64,
}

impl PolicySettings {
    pub fn from_config(cfg: &DacConfig, n_actions: usize) -> Self {
        PolicySettings {
            k_pi: cfg.k_pi,
            cost: cfg.cost,
            weighted: cfg.weighted,
            sknn: cfg.sknn,
            sknn_rows: StateRows::default(),
            delta_d: cfg.delta_d,
            action_bias: vec![0.0; n_actions],
            slip: 0.0,
        }
    }
}

/// A greedy policy over the full state space.
#[derive(Debug)]
pub struct PolicyHandle<'a> {
    ds: &'a Dataset,
    idx: &'a NeighborIndex,
    core: &'a CoreStates,
    solve: &'a SolveResult,
    settings: PolicySettings,
    repr: Option<&'a Representation>,
    queries: AtomicUsize,
}

impl<'a> PolicyHandle<'a> {
    pub fn new(
        ds: &'a Dataset,
        idx: &'a NeighborIndex,
        core: &'a CoreStates,
        solve: &'a SolveResult,
        settings: PolicySettings,
    ) -> Result<Self> {
        let na = ds.action_count();
        if solve.n_actions != na || idx.action_count() != na {
            return Err(DacError::Config(format!(
                "action counts disagree: dataset {na}, index {}, solution {}",
                idx.action_count(),
                solve.n_actions
            )));
        }
        if solve.n_states() != core.len() || core.tuple_core.len() != ds.len() {
            return Err(DacError::Config("solution does not belong to this dataset's core states".into()));
        }
        if settings.action_bias.len() != na {
            return Err(DacError::DimensionMismatch { expected: na, got: settings.action_bias.len() });
        }
        if settings.k_pi == 0 {
            return Err(DacError::Config("k_pi must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&settings.slip) {
            return Err(DacError::Config(format!("slip must lie in [0, 1] (got {})", settings.slip)));
        }
        if settings.sknn {
            if ds.len() < settings.k_pi {
                return Err(DacError::InsufficientSupport { action: usize::MAX, available: ds.len(), required: settings.k_pi });
            }
        } else {
            for (a, &n) in idx.partition_sizes().iter().enumerate() {
                if n < settings.k_pi {
                    return Err(DacError::InsufficientSupport { action: a, available: n, required: settings.k_pi });
                }
            }
        }
        Ok(PolicyHandle { ds, idx, core, solve, settings, repr: None, queries: AtomicUsize::new(0) })
    }

    /// Embed raw observations with `repr` before acting.
    pub fn with_representation(mut self, repr: &'a Representation) -> Self {
        self.repr = Some(repr);
        self
    }

    pub fn settings(&self) -> &PolicySettings {
        &self.settings
    }

    pub fn n_actions(&self) -> usize {
        self.solve.n_actions
    }

    /// Number of kNN queries issued so far.
    pub fn queries(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }

    fn lookahead_raw(&self, s: &[f32], a: usize) -> Result<f64> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        let set = self.idx.knn_query(s, a, self.settings.k_pi)?;
        let w = neighbor_weights(&set.distances, self.settings.weighted, self.settings.delta_d);
        let gamma = self.solve.gamma;
        let mut q = 0.0;
        for ((i, d), w) in set.iter().zip(w) {
            let future = if self.ds.terminal(i) { 0.0 } else { self.solve.v[self.core.tuple_core[i] as usize] };
            q += w * (self.ds.reward(i) as f64 + gamma * future - self.settings.cost * d);
        }
        Ok(q)
    }

    fn mix_and_bias(&self, raw: &[f64]) -> Vec<f64> {
        let rho = self.settings.slip;
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        raw.iter()
            .zip(&self.settings.action_bias)
            .map(|(&q, &b)| if rho > 0.0 { (1.0 - rho) * q + rho * mean } else { q } + b)
            .collect()
    }

    /// One-step lookahead value of `a` in state `s` (already embedded).
    pub fn q_lookahead(&self, s: &[f32], a: usize) -> Result<f64> {
        if a >= self.n_actions() {
            return Err(DacError::ActionOutOfRange { action: a, action_count: self.n_actions() });
        }
        if self.settings.slip > 0.0 {
            return Ok(self.q_values_exact(s)?[a]);
        }
        Ok(self.lookahead_raw(s, a)? + self.settings.action_bias[a])
    }

    /// Lookahead values of every action (one query per action).
    pub fn q_values_exact(&self, s: &[f32]) -> Result<Vec<f64>> {
        let raw = (0..self.n_actions()).map(|a| self.lookahead_raw(s, a)).collect::<Result<Vec<_>>>()?;
        Ok(self.mix_and_bias(&raw))
    }

    /// Action scores from one state-level query, averaging the neighbors'
    /// core Q rows.
    pub fn q_values_state(&self, s: &[f32]) -> Result<Vec<f64>> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        let set = self.idx.knn_query_state(s, self.settings.k_pi)?;
        let w = neighbor_weights(&set.distances, self.settings.weighted, self.settings.delta_d);
        let mut scores = self.settings.action_bias.clone();
        for ((i, _), w) in set.iter().zip(w) {
            let src = self.core.source_core[i];
            let s = match self.settings.sknn_rows {
                StateRows::Source if src != NOT_CORE => src,
                _ => self.core.tuple_core[i],
            };
            let row = self.solve.q_row(s as usize);
            for (sc, q) in scores.iter_mut().zip(row) {
                *sc += w * q;
            }
        }
        Ok(scores)
    }

    /// Scores used for the greedy choice under the configured mode.
    pub fn action_scores(&self, s: &[f32]) -> Result<Vec<f64>> {
        if self.settings.sknn {
            self.q_values_state(s)
        } else {
            self.q_values_exact(s)
        }
    }

    /// Greedy action for an embedded state; ties go to the lowest index.
    pub fn act_greedy(&self, s: &[f32]) -> Result<usize> {
        Ok(argmax(&self.action_scores(s)?))
    }

    /// Uniform random action with probability `eps`, else greedy.
    pub fn act_eps_greedy<R: Rng + ?Sized>(&self, s: &[f32], eps: f64, rng: &mut R) -> Result<usize> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(DacError::Config(format!("eps must lie in [0, 1] (got {eps})")));
        }
        if eps > 0.0 && rng.gen::<f64>() < eps {
            return Ok(rng.gen_range(0..self.n_actions()));
        }
        self.act_greedy(s)
    }

    /// Map a raw observation into the index's state space.
    pub fn embed(&self, obs: &[f32]) -> Result<Vec<f32>> {
        match self.repr {
            Some(r) => r.embed(obs),
            None => Ok(obs.to_vec()),
        }
    }
}

impl Controller for PolicyHandle<'_> {
    fn act(&self, obs: &[f32]) -> Result<usize> {
        match self.repr {
            Some(r) => self.act_greedy(&r.embed(obs)?),
            None => self.act_greedy(obs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::NeighborCache;
    use crate::dataset::ExperienceTuple;
    use crate::solver::{value_iterate, SolveOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, na: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tuples = (0..n)
            .map(|_| ExperienceTuple {
                state: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                action: rng.gen_range(0..na),
                reward: rng.gen_range(-1.0..1.0),
                next_state: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                terminal: rng.gen_bool(0.05),
            })
            .collect();
        Dataset::from_tuples(tuples, na).unwrap()
    }

    fn solved(ds: &Dataset, cfg: &DacConfig) -> (NeighborIndex, CoreStates, SolveResult) {
        let idx = NeighborIndex::build(ds);
        let core = CoreStates::from_dataset(ds);
        let mdp = NeighborCache::build(&core, &idx, cfg.k).unwrap().compile(ds, &core, cfg).unwrap();
        let res = value_iterate(&mdp, &SolveOptions::from_config(cfg)).unwrap();
        (idx, core, res)
    }

    #[test]
    fn lookahead_reproduces_core_q_table() {
        for weighted in [false, true] {
            let ds = random_dataset(300, 3, 11);
            let cfg = DacConfig { k: 4, k_pi: 4, cost: 0.7, gamma: 0.9, weighted, delta_min: 1e-10, ..DacConfig::default() };
            let (idx, core, res) = solved(&ds, &cfg);
            let h = PolicyHandle::new(&ds, &idx, &core, &res, PolicySettings::from_config(&cfg, 3)).unwrap();
            let tol = 10.0 * cfg.delta_min / (1.0 - cfg.gamma);
            for s in 0..core.len() {
                for a in 0..3 {
                    let q = h.q_lookahead(core.vector(s), a).unwrap();
                    assert!((q - res.q(s, a)).abs() <= tol, "s={s} a={a} {q} vs {}", res.q(s, a));
                }
            }
        }
    }

    #[test]
    fn single_tuple_lookahead() {
        let ds = Dataset::from_tuples(
            vec![ExperienceTuple { state: vec![0.0], action: 0, reward: 2.0, next_state: vec![1.0], terminal: false }],
            1,
        )
        .unwrap();
        let cfg = DacConfig { k: 1, k_pi: 1, cost: 1.0, gamma: 0.5, delta_min: 1e-12, ..DacConfig::default() };
        let (idx, core, res) = solved(&ds, &cfg);
        let h = PolicyHandle::new(&ds, &idx, &core, &res, PolicySettings::from_config(&cfg, 1)).unwrap();
        let q = h.q_lookahead(&[0.0], 0).unwrap();
        assert!((q - (2.0 + 0.5 * res.v[0])).abs() < 1e-12);
    }

    #[test]
    fn dominant_action_is_chosen() {
        let mut tuples = Vec::new();
        for a in 0..2 {
            for x in [0.0f32, 1.0] {
                tuples.push(ExperienceTuple {
                    state: vec![x],
                    action: a,
                    reward: if a == 0 { 1.0 } else { 0.0 },
                    next_state: vec![x],
                    terminal: false,
                });
            }
        }
        let ds = Dataset::from_tuples(tuples, 2).unwrap();
        let cfg = DacConfig { k: 2, k_pi: 2, gamma: 0.9, ..DacConfig::default() };
        let (idx, core, res) = solved(&ds, &cfg);
        for sknn in [false, true] {
            let h = PolicyHandle::new(&ds, &idx, &core, &res, PolicySettings { sknn, ..PolicySettings::from_config(&cfg, 2) }).unwrap();
            for x in [-0.5f32, 0.3, 2.0] {
                assert_eq!(h.act_greedy(&[x]).unwrap(), 0);
            }
        }
    }

    #[test]
    fn bias_excludes_action_on_core_states() {
        let ds = random_dataset(200, 2, 5);
        let cfg = DacConfig { k: 3, k_pi: 3, gamma: 0.9, ..DacConfig::default() };
        let (idx, core, res) = solved(&ds, &cfg);
        let (lo, hi) = res.v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let mut settings = PolicySettings::from_config(&cfg, 2);
        settings.action_bias = vec![0.0, -10.0 * (hi - lo).max(1.0)];
        let h = PolicyHandle::new(&ds, &idx, &core, &res, settings).unwrap();
        for s in 0..core.len() {
            assert_eq!(h.act_greedy(core.vector(s)).unwrap(), 0);
        }
    }

    #[test]
    fn query_counts_per_mode() {
        let ds = random_dataset(100, 4, 8);
        let cfg = DacConfig { k: 2, k_pi: 3, ..DacConfig::default() };
        let (idx, core, res) = solved(&ds, &cfg);
        let exact = PolicyHandle::new(&ds, &idx, &core, &res, PolicySettings::from_config(&cfg, 4)).unwrap();
        exact.act_greedy(&[0.1, 0.2]).unwrap();
        assert_eq!(exact.queries(), 4);
        let state = PolicyHandle::new(&ds, &idx, &core, &res, PolicySettings { sknn: true, ..PolicySettings::from_config(&cfg, 4) }).unwrap();
        state.act_greedy(&[0.1, 0.2]).unwrap();
        assert_eq!(state.queries(), 1);
    }

    #[test]
    fn eps_greedy_extremes() {
        let ds = random_dataset(120, 3, 2);
        let cfg = DacConfig { k: 2, k_pi: 2, ..DacConfig::default() };
        let (idx, core, res) = solved(&ds, &cfg);
        let h = PolicyHandle::new(&ds, &idx, &core, &res, PolicySettings::from_config(&cfg, 3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = [0.3f32, -0.2];
        let greedy = h.act_greedy(&s).unwrap();
        for _ in 0..50 {
            assert_eq!(h.act_eps_greedy(&s, 0.0, &mut rng).unwrap(), greedy);
        }
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[h.act_eps_greedy(&s, 1.0, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sigma, "{counts:?}");
        }
        let seq = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| h.act_eps_greedy(&s, 0.5, &mut r).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(seq(9), seq(9));
    }

    #[test]
    fn rejects_k_pi_above_support() {
        let ds = random_dataset(20, 2, 1);
        let cfg = DacConfig { k: 1, k_pi: 1, ..DacConfig::default() };
        let (idx, core, res) = solved(&ds, &cfg);
        let settings = PolicySettings { k_pi: 50, ..PolicySettings::from_config(&cfg, 2) };
        assert!(matches!(PolicyHandle::new(&ds, &idx, &core, &res, settings), Err(DacError::InsufficientSupport { .. })));
    }

    #[test]
    fn constant_reward_shift_moves_q_uniformly() {
        // the identity needs episodes that never end
        let tuples = random_dataset(150, 3, 4).tuples().map(|t| ExperienceTuple { terminal: false, ..t }).collect();
        let ds = Dataset::from_tuples(tuples, 3).unwrap();
        let shifted = ds.map_rewards(|r| r + 2.0);
        let cfg = DacConfig { k: 3, gamma: 0.8, delta_min: 1e-12, ..DacConfig::default() };
        let (_, _, a) = solved(&ds, &cfg);
        let (_, _, b) = solved(&shifted, &cfg);
        for s in 0..a.n_states() {
            for j in 0..3 {
                // rewards are f32, so the shift itself carries rounding
                assert!((b.q(s, j) - a.q(s, j) - 2.0 / 0.2).abs() < 1e-5);
            }
            assert_eq!(a.greedy_action(s), b.greedy_action(s));
        }
    }
}
