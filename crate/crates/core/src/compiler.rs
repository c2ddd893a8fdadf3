//! Compilation of an experience dataset into the finite core-state MDP.
//!
//! Core states are the distinct destination states of the dataset. For every
//! core state and action the k nearest source tuples with that action define
//! the row: reward is the (weighted) mean of `r_i - C·d_i` and the successor
//! distribution puts each neighbor's weight on its destination state.
//!
//! Neighbor sets and distances are cached in a [`NeighborCache`] so that
//! recompiling for another cost factor or weighting mode needs no new kNN
//! queries.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{DacError, Result};
use crate::knn::NeighborIndex;
use crate::whatif::ModifierSpec;

const MDP_MAGIC: &[u8; 4] = b"DACM";
const MDP_VERSION: u32 = 1;
const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Hyperparameters of compilation, solving and acting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DacConfig {
    /// Smoothing factor: neighbors per compiled row.
    pub k: usize,
    /// Policy smoothing: neighbors per decision-time lookahead.
    pub k_pi: usize,
    /// Cost factor on neighbor distance.
    pub cost: f64,
    pub gamma: f64,
    /// Inverse-distance weighted averaging instead of uniform 1/k.
    pub weighted: bool,
    /// Act with one state-level kNN query instead of one per action.
    pub sknn: bool,
    /// Regularizer in the inverse-distance weights `1 / (d + delta_d)`.
    pub delta_d: f64,
    /// Value iteration stops once the sup-norm residual is at most this.
    pub delta_min: f64,
    pub max_iters: usize,
}

impl Default for DacConfig {
    fn default() -> Self {
        DacConfig {
            k: 5,
            k_pi: 11,
            cost: 1.0,
            gamma: 0.99,
            weighted: true,
            sknn: false,
            delta_d: 1e-5,
            delta_min: 1e-6,
            max_iters: 100_000,
        }
    }
}

impl DacConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(DacError::Config(msg));
        if self.k == 0 {
            return fail("k must be >= 1".into());
        }
        if self.k_pi == 0 {
            return fail("k_pi must be >= 1".into());
        }
        if !self.cost.is_finite() || self.cost < 0.0 {
            return fail(format!("cost factor C must be finite and >= 0 (got {})", self.cost));
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma must satisfy 0 <= gamma < 1 (got {})", self.gamma));
        }
        if !(self.delta_d.is_finite() && self.delta_d > 0.0) {
            return fail(format!("delta_d must be finite and > 0 (got {})", self.delta_d));
        }
        if !(self.delta_min.is_finite() && self.delta_min > 0.0) {
            return fail(format!("delta_min must be finite and > 0 (got {})", self.delta_min));
        }
        if self.max_iters == 0 {
            return fail("max_iters must be >= 1".into());
        }
        Ok(())
    }

    /// Neighbor weights for sorted distances under this config's weighting.
    pub fn weights(&self, distances: &[f64]) -> Vec<f64> {
        neighbor_weights(distances, self.weighted, self.delta_d)
    }
}

/// Uniform `1/k` weights, or normalized inverse distances `1/(d + delta_d)`.
pub fn neighbor_weights(distances: &[f64], weighted: bool, delta_d: f64) -> Vec<f64> {
    let k = distances.len() as f64;
    if !weighted {
        return vec![1.0 / k; distances.len()];
    }
    let inv: Vec<f64> = distances.iter().map(|d| 1.0 / (d + delta_d)).collect();
    let total: f64 = inv.iter().sum();
    inv.into_iter().map(|w| w / total).collect()
}

/// Distinct destination states, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreStates {
    pub dim: usize,
    /// Row-major `len × dim`.
    pub vectors: Vec<f32>,
    /// Core index of each tuple's destination state.
    pub tuple_core: Vec<u32>,
    /// Core index of each tuple's source state, or [`NOT_CORE`].
    pub source_core: Vec<u32>,
}

/// Marks a source state that is not a destination state anywhere.
pub const NOT_CORE: u32 = u32::MAX;

impl CoreStates {
    /// Merge destination states that are bit-for-bit identical.
    pub fn from_dataset(ds: &Dataset) -> Self {
        let dim = ds.state_dim();
        let mut seen: HashMap<Vec<u32>, u32> = HashMap::with_capacity(ds.len());
        let mut vectors = Vec::new();
        let mut tuple_core = Vec::with_capacity(ds.len());
        for i in 0..ds.len() {
            let s2 = ds.next_state(i);
            let key: Vec<u32> = s2.iter().map(|x| x.to_bits()).collect();
            let next = seen.len() as u32;
            let id = *seen.entry(key).or_insert_with(|| {
                vectors.extend_from_slice(s2);
                next
            });
            tuple_core.push(id);
        }
        let source_core = (0..ds.len())
            .map(|i| {
                let key: Vec<u32> = ds.state(i).iter().map(|x| x.to_bits()).collect();
                seen.get(&key).copied().unwrap_or(NOT_CORE)
            })
            .collect();
        CoreStates { dim, vectors, tuple_core, source_core }
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.vectors.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

fn check_support(idx: &NeighborIndex, k: usize) -> Result<()> {
    for (a, &n) in idx.partition_sizes().iter().enumerate() {
        if n < k {
            return Err(DacError::InsufficientSupport { action: a, available: n, required: k });
        }
    }
    Ok(())
}

/// The kNN sets of every (core state, action) row for one `k`.
#[derive(Debug, Clone)]
pub struct NeighborCache {
    pub k: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// `n_states × n_actions × k` tuple indices.
    pub indices: Vec<u32>,
    /// Matching L2 distances.
    pub distances: Vec<f64>,
}

impl NeighborCache {
    pub fn build(core: &CoreStates, idx: &NeighborIndex, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(DacError::Config("k must be >= 1".into()));
        }
        check_support(idx, k)?;
        let n_actions = idx.action_count();
        let n_states = core.len();
        let row_len = n_actions * k;
        let mut indices = vec![0u32; n_states * row_len];
        let mut distances = vec![0f64; n_states * row_len];
        indices
            .par_chunks_mut(row_len)
            .zip(distances.par_chunks_mut(row_len))
            .enumerate()
            .try_for_each(|(s, (ids, ds))| -> Result<()> {
                let v = core.vector(s);
                for a in 0..n_actions {
                    let set = idx.knn_query(v, a, k)?;
                    for (j, (i, d)) in set.iter().enumerate() {
                        ids[a * k + j] = i as u32;
                        ds[a * k + j] = d;
                    }
                }
                Ok(())
            })?;
        Ok(NeighborCache { k, n_states, n_actions, indices, distances })
    }

    fn row(&self, s: usize, a: usize) -> (&[u32], &[f64]) {
        let at = (s * self.n_actions + a) * self.k;
        (&self.indices[at..at + self.k], &self.distances[at..at + self.k])
    }

    /// Compile rows for `cfg.cost` and `cfg.weighted` from the cached sets.
    pub fn compile(&self, ds: &Dataset, core: &CoreStates, cfg: &DacConfig) -> Result<CoreMdp> {
        cfg.validate()?;
        if cfg.k != self.k {
            return Err(DacError::Config(format!("cache holds k={} but config asks for k={}", self.k, cfg.k)));
        }
        let k = self.k;
        let rows = self.n_states * self.n_actions;
        let mut succ = vec![0u32; rows * k];
        let mut prob = vec![0f64; rows * k];
        let mut terminal = vec![false; rows * k];
        let mut reward = vec![0f64; rows];

        succ.par_chunks_mut(k)
            .zip(prob.par_chunks_mut(k))
            .zip(terminal.par_chunks_mut(k))
            .zip(reward.par_iter_mut())
            .enumerate()
            .try_for_each(|(row, (((succ, prob), term), r))| -> Result<()> {
                let (ids, dists) = self.row(row / self.n_actions, row % self.n_actions);
                let weights = cfg.weights(dists);
                let mut acc = 0.0;
                let mut used = 0;
                for ((&i, &d), &w) in ids.iter().zip(dists).zip(&weights) {
                    let i = i as usize;
                    acc += w * (ds.reward(i) as f64 - cfg.cost * d);
                    let target = core.tuple_core[i];
                    let t = ds.terminal(i);
                    match (0..used).find(|&j| succ[j] == target && term[j] == t) {
                        Some(j) => prob[j] += w,
                        None => {
                            succ[used] = target;
                            term[used] = t;
                            prob[used] = w;
                            used += 1;
                        }
                    }
                }
                for j in used..k {
                    succ[j] = succ[0];
                    prob[j] = 0.0;
                    term[j] = false;
                }
                if !acc.is_finite() || prob.iter().any(|p| !p.is_finite()) {
                    return Err(DacError::NonFinite(format!("compiled row {row}")));
                }
                *r = acc;
                Ok(())
            })?;

        Ok(CoreMdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            width: k,
            succ,
            prob,
            reward,
            terminal,
            state_dim: core.dim,
            state_vectors: core.vectors.clone(),
            config: cfg.clone(),
            modifiers: Vec::new(),
        })
    }

    /// Per-row `Σ w_i d_i`, the amount one unit of cost removes from a row's
    /// reward.
    pub fn cost_slope(&self, weighted: bool, delta_d: f64) -> Vec<f64> {
        (0..self.n_states * self.n_actions)
            .map(|row| {
                let (_, d) = self.row(row / self.n_actions, row % self.n_actions);
                neighbor_weights(d, weighted, delta_d).iter().zip(d).map(|(w, d)| w * d).sum()
            })
            .collect()
    }
}

/// Compile `ds` with the kNN index `idx` under `cfg`.
pub fn compile(ds: &Dataset, idx: &NeighborIndex, cfg: &DacConfig) -> Result<CoreMdp> {
    cfg.validate()?;
    let core = CoreStates::from_dataset(ds);
    let cache = NeighborCache::build(&core, idx, cfg.k)?;
    cache.compile(ds, &core, cfg)
}

/// Sparse finite MDP over core states with fixed-width rows.
///
/// Row `(s, a)` occupies slots `[(s·A + a)·width, (s·A + a + 1)·width)`.
/// Slots flagged terminal carry probability mass but contribute no
/// successor value.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Slots per row (the compile-time `k` unless a modifier widened rows).
    pub width: usize,
    pub succ: Vec<u32>,
    pub prob: Vec<f64>,
    pub reward: Vec<f64>,
    pub terminal: Vec<bool>,
    pub state_dim: usize,
    pub state_vectors: Vec<f32>,
    /// Configuration the MDP was compiled with.
    pub config: DacConfig,
    /// What-if modifiers applied since compilation, in order.
    pub modifiers: Vec<ModifierSpec>,
}

#[derive(Serialize, Deserialize)]
struct Provenance {
    config: DacConfig,
    #[serde(default)]
    modifiers: Vec<ModifierSpec>,
}

impl CoreMdp {
    #[inline]
    pub fn row_range(&self, s: usize, a: usize) -> std::ops::Range<usize> {
        let at = (s * self.n_actions + a) * self.width;
        at..at + self.width
    }

    #[inline]
    pub fn reward_at(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn state_vector(&self, s: usize) -> &[f32] {
        &self.state_vectors[s * self.state_dim..(s + 1) * self.state_dim]
    }

    pub fn reward_range(&self) -> (f64, f64) {
        self.reward
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
    }

    /// Check every structural invariant: shapes, index bounds,
    /// non-negative finite probabilities, row sums of one.
    pub fn validate(&self) -> Result<()> {
        let rows = self.n_states * self.n_actions;
        let slots = rows * self.width;
        if self.succ.len() != slots || self.prob.len() != slots || self.terminal.len() != slots {
            return Err(DacError::Config("transition arrays do not match n_states × n_actions × width".into()));
        }
        if self.reward.len() != rows {
            return Err(DacError::Config("reward array does not match n_states × n_actions".into()));
        }
        if self.state_vectors.len() != self.n_states * self.state_dim {
            return Err(DacError::Config("state vector array does not match n_states × state_dim".into()));
        }
        if let Some(bad) = self.succ.iter().find(|&&i| i as usize >= self.n_states) {
            return Err(DacError::Config(format!("successor index {bad} >= n_states {}", self.n_states)));
        }
        if self.reward.iter().any(|r| !r.is_finite()) {
            return Err(DacError::NonFinite("MDP rewards".into()));
        }
        for (row, p) in self.prob.chunks(self.width.max(1)).enumerate() {
            if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(DacError::NonFinite(format!("probabilities of row {row}")));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(DacError::Config(format!("row {row} sums to {sum}, not 1")));
            }
        }
        Ok(())
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_sum_error(&self) -> f64 {
        self.prob
            .chunks(self.width)
            .map(|p| (p.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| DacError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| DacError::io(path, e))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MDP_MAGIC)?;
        w.write_all(&MDP_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_states as u64).to_le_bytes())?;
        w.write_all(&(self.n_actions as u32).to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.state_dim as u32).to_le_bytes())?;
        for &i in &self.succ {
            w.write_all(&i.to_le_bytes())?;
        }
        for &p in &self.prob {
            w.write_all(&p.to_le_bytes())?;
        }
        for &r in &self.reward {
            w.write_all(&r.to_le_bytes())?;
        }
        for &t in &self.terminal {
            w.write_all(&[t as u8])?;
        }
        for &x in &self.state_vectors {
            w.write_all(&x.to_le_bytes())?;
        }
        let provenance = Provenance { config: self.config.clone(), modifiers: self.modifiers.clone() };
        let provenance = serde_json::to_vec(&provenance).map_err(std::io::Error::other)?;
        w.write_all(&(provenance.len() as u32).to_le_bytes())?;
        w.write_all(&provenance)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| DacError::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file).read_to_end(&mut bytes).map_err(|e| DacError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            DacError::Binary { offset, msg, .. } => DacError::Binary { path: path.to_path_buf(), offset, msg },
            other => other,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MDP_MAGIC {
            return Err(cur.err("bad magic, expected \"DACM\""));
        }
        let version = cur.u32()?;
        if version != MDP_VERSION {
            return Err(cur.err(format!("unsupported version {version}")));
        }
        let n_states = cur.u64()? as usize;
        let n_actions = cur.u32()? as usize;
        let width = cur.u32()? as usize;
        let state_dim = cur.u32()? as usize;
        let slots = n_states
            .checked_mul(n_actions)
            .and_then(|r| r.checked_mul(width))
            .ok_or_else(|| cur.err("header sizes overflow"))?;
        // reject absurd headers before allocating
        if slots > bytes.len() {
            return Err(cur.err("header promises more slots than the file holds"));
        }
        let succ = (0..slots).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
        let prob = (0..slots).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let reward = (0..n_states * n_actions).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
        let terminal = cur.take(slots)?.iter().map(|&b| b != 0).collect();
        let state_vectors = (0..n_states * state_dim).map(|_| cur.f32()).collect::<Result<Vec<_>>>()?;
        let plen = cur.u32()? as usize;
        let Provenance { config, modifiers } = serde_json::from_slice(cur.take(plen)?)?;
        let mdp = CoreMdp { n_states, n_actions, width, succ, prob, reward, terminal, state_dim, state_vectors, config, modifiers };
        mdp.validate()?;
        Ok(mdp)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> DacError {
        DacError::Binary { path: Default::default(), offset: self.pos as u64, msg: msg.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("truncated input"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Dataset coverage diagnostics: mean kNN distance per query pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    /// Worst average distance to a kNN set over the evaluated pairs.
    pub d_bar_max: f64,
    pub d_bar_mean: f64,
    pub per_action_support: Vec<usize>,
    pub queries: usize,
}

/// Average kNN distance over every (dataset source state, action) pair.
///
/// The continuous-space maximum is not computable; this restricts it to
/// the pairs the dataset can speak about.
pub fn coverage_stats(ds: &Dataset, idx: &NeighborIndex, cfg: &DacConfig) -> Result<CoverageStats> {
    let queries: Vec<&[f32]> = (0..ds.len()).map(|i| ds.state(i)).collect();
    coverage_over(idx, &queries, cfg.k)
}

/// Average kNN distance over `queries × actions`.
pub fn coverage_over(idx: &NeighborIndex, queries: &[&[f32]], k: usize) -> Result<CoverageStats> {
    check_support(idx, k)?;
    let n_actions = idx.action_count();
    let means: Vec<f64> = queries
        .par_iter()
        .map(|q| {
            (0..n_actions)
                .map(|a| idx.knn_query(q, a, k).map(|n| n.mean_distance()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let d_bar_max = means.iter().copied().fold(0.0, f64::max);
    let d_bar_mean = means.iter().sum::<f64>() / means.len().max(1) as f64;
    Ok(CoverageStats { d_bar_max, d_bar_mean, per_action_support: idx.partition_sizes(), queries: means.len() })
}
