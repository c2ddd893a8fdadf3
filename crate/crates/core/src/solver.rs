//! Jacobi value iteration over a [`CoreMdp`].
//!
//! Every sweep reads a frozen snapshot of `V` and writes a separate output
//! buffer, so the per-state arithmetic is independent of scheduling and the
//! result is bit-identical for any thread count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::compiler::{CoreMdp, DacConfig};
use crate::error::{DacError, Result};

const Q_MAGIC: &[u8; 4] = b"DACQ";
const Q_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub gamma: f64,
    pub delta_min: f64,
    pub max_iters: usize,
}

impl SolveOptions {
    pub fn from_config(cfg: &DacConfig) -> Self {
        SolveOptions { gamma: cfg.gamma, delta_min: cfg.delta_min, max_iters: cfg.max_iters }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(DacError::Config(format!("gamma must satisfy 0 <= gamma < 1 (got {})", self.gamma)));
        }
        if !(self.delta_min.is_finite() && self.delta_min > 0.0) {
            return Err(DacError::Config(format!("delta_min must be finite and > 0 (got {})", self.delta_min)));
        }
        if self.max_iters == 0 {
            return Err(DacError::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Output of one Bellman sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    /// Per-state `|V_out - V_in|`.
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub n_actions: usize,
    pub v: Vec<f64>,
    /// Row-major `n_states × n_actions`.
    pub q: Vec<f64>,
    /// Final sup-norm residual.
    pub residual: f64,
    pub iterations: usize,
    /// False when the run stopped at `max_iters`.
    pub converged: bool,
    pub gamma: f64,
    pub residual_history: Vec<f64>,
    pub wall_time: Duration,
}

impl PartialEq for SolveResult {
    /// Equality ignores wall time.
    fn eq(&self, other: &Self) -> bool {
        self.n_actions == other.n_actions
            && self.v == other.v
            && self.q == other.q
            && self.residual == other.residual
            && self.iterations == other.iterations
            && self.converged == other.converged
            && self.gamma == other.gamma
            && self.residual_history == other.residual_history
    }
}

impl SolveResult {
    pub fn n_states(&self) -> usize {
        self.v.len()
    }

    #[inline]
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn q_row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Greedy core action, lowest index on ties.
    pub fn greedy_action(&self, s: usize) -> usize {
        argmax(self.q_row(s))
    }

    /// Indices `t` where `δ_{t+1} > γ·δ_t + 1e-9`.
    pub fn contraction_violations(&self) -> Vec<usize> {
        self.residual_history
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > self.gamma * w[0] + 1e-9)
            .map(|(t, _)| t)
            .collect()
    }

    /// SHA-256 over the little-endian bytes of `V`.
    pub fn v_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.v {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| DacError::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&self.to_bytes()).and_then(|_| w.flush()).map_err(|e| DacError::io(path, e))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + 8 * (self.v.len() + self.q.len()));
        out.extend_from_slice(Q_MAGIC);
        out.extend_from_slice(&Q_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.v.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.n_actions as u32).to_le_bytes());
        out.extend_from_slice(&self.gamma.to_le_bytes());
        out.extend_from_slice(&(self.iterations as u64).to_le_bytes());
        out.extend_from_slice(&self.residual.to_le_bytes());
        out.push(self.converged as u8);
        for x in self.v.iter().chain(&self.q) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    /// Load a Q file. Residual history and wall time are not persisted.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| DacError::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file).read_to_end(&mut bytes).map_err(|e| DacError::io(path, e))?;
        let bad = |offset: usize, msg: &str| DacError::Binary { path: path.to_path_buf(), offset: offset as u64, msg: msg.into() };
        if bytes.len() < 45 || &bytes[..4] != Q_MAGIC {
            return Err(bad(0, "not a Q file (expected magic \"DACQ\")"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(4) != Q_VERSION {
            return Err(bad(4, "unsupported version"));
        }
        let n = u64_at(8) as usize;
        let a = u32_at(16) as usize;
        let gamma = f64_at(20);
        let iterations = u64_at(28) as usize;
        let residual = f64_at(36);
        let converged = bytes[44] != 0;
        let body = 45;
        let need = n.checked_add(n.saturating_mul(a)).and_then(|c| c.checked_mul(8)).unwrap_or(usize::MAX);
        if bytes.len() - body != need {
            return Err(bad(body, "payload length does not match header"));
        }
        let vals: Vec<f64> = (0..n + n * a).map(|i| f64_at(body + 8 * i)).collect();
        let (v, q) = vals.split_at(n);
        Ok(SolveResult {
            n_actions: a,
            v: v.to_vec(),
            q: q.to_vec(),
            residual,
            iterations,
            converged,
            gamma,
            residual_history: Vec::new(),
            wall_time: Duration::ZERO,
        })
    }
}

/// Index of the first maximum.
#[inline]
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Error-free sum: `a + b = s + e` exactly.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Back up one state from `v`, writing its Q row; returns the new value.
///
/// The backup is a compensated dot product (exact products through `fma`,
/// error-free sums), so each Q entry is accurate to about one ulp. Plain
/// accumulation drifts by several ulps once |V| is in the millions, which
/// is enough to break `δ_{t+1} ≤ γ·δ_t + 1e-9` on high-cost MDPs.
#[inline(always)]
fn backup_state(mdp: &CoreMdp, v: &[f64], s: usize, gamma: f64, q_row: &mut [f64]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for (a, q) in q_row.iter_mut().enumerate() {
        let range = mdp.row_range(s, a);
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for j in range {
            if !mdp.terminal[j] {
                let x = v[mdp.succ[j] as usize];
                let p = mdp.prob[j] * x;
                let (t, e) = two_sum(hi, p);
                hi = t;
                lo += e + mdp.prob[j].mul_add(x, -p);
            }
        }
        let g = gamma * hi;
        let (t, e) = two_sum(mdp.reward_at(s, a), g);
        *q = t + (e + gamma.mul_add(hi, -g) + gamma * lo);
        if *q > best {
            best = *q;
        }
    }
    best
}

/// Back up a contiguous block of states starting at `start`. Returns the
/// block's largest residual.
///
/// Uses the hardware `fma` instruction when the CPU has it. `fma` is
/// correctly rounded either way, so results do not depend on the path.
fn sweep_block(mdp: &CoreMdp, v_in: &[f64], gamma: f64, start: usize, v_out: &mut [f64], q_out: &mut [f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("fma") {
        // SAFETY: the feature was detected at runtime
        return unsafe { sweep_block_fma(mdp, v_in, gamma, start, v_out, q_out) };
    }
    sweep_block_generic(mdp, v_in, gamma, start, v_out, q_out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "fma")]
unsafe fn sweep_block_fma(mdp: &CoreMdp, v_in: &[f64], gamma: f64, start: usize, v_out: &mut [f64], q_out: &mut [f64]) -> f64 {
    sweep_block_generic(mdp, v_in, gamma, start, v_out, q_out)
}

#[inline(always)]
fn sweep_block_generic(mdp: &CoreMdp, v_in: &[f64], gamma: f64, start: usize, v_out: &mut [f64], q_out: &mut [f64]) -> f64 {
    let na = mdp.n_actions;
    let mut delta = 0.0f64;
    for (off, (vo, qr)) in v_out.iter_mut().zip(q_out.chunks_mut(na)).enumerate() {
        let s = start + off;
        *vo = backup_state(mdp, v_in, s, gamma, qr);
        let d = (*vo - v_in[s]).abs();
        // NaN propagates through the residual
        if d > delta || d.is_nan() {
            delta = d;
        }
    }
    delta
}

/// One Jacobi sweep `V_out = B V_in` with per-state residuals.
pub fn bellman_sweep(mdp: &CoreMdp, v_in: &[f64], gamma: f64) -> Result<Sweep> {
    if v_in.len() != mdp.n_states {
        return Err(DacError::DimensionMismatch { expected: mdp.n_states, got: v_in.len() });
    }
    if v_in.iter().any(|x| !x.is_finite()) {
        return Err(DacError::NonFinite("input value vector".into()));
    }
    let mut v = vec![0.0; mdp.n_states];
    let mut q = vec![0.0; mdp.n_states * mdp.n_actions];
    sweep_block(mdp, v_in, gamma, 0, &mut v, &mut q);
    let delta = v.iter().zip(v_in).map(|(a, b)| (a - b).abs()).collect();
    Ok(Sweep { v, q, delta })
}

/// Single-threaded value iteration from `V = 0`.
pub fn value_iterate(mdp: &CoreMdp, opts: &SolveOptions) -> Result<SolveResult> {
    iterate(mdp, opts, None)
}

/// Value iteration with sweeps split into `threads` contiguous state blocks.
pub fn solve_parallel(mdp: &CoreMdp, opts: &SolveOptions, threads: usize) -> Result<SolveResult> {
    if threads == 0 {
        return Err(DacError::Config("threads must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| DacError::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| iterate(mdp, opts, Some(threads)))
}

fn iterate(mdp: &CoreMdp, opts: &SolveOptions, threads: Option<usize>) -> Result<SolveResult> {
    opts.validate()?;
    let start = Instant::now();
    let n = mdp.n_states;
    let na = mdp.n_actions;
    let mut v = vec![0.0f64; n];
    let mut v_next = vec![0.0f64; n];
    let mut q = vec![0.0f64; n * na];
    let mut history = Vec::new();
    let mut converged = false;

    let block = match threads {
        Some(t) => n.div_ceil(t).max(1),
        None => n.max(1),
    };

    for it in 1..=opts.max_iters {
        let delta = match threads {
            None => sweep_block(mdp, &v, opts.gamma, 0, &mut v_next, &mut q),
            Some(_) => v_next
                .par_chunks_mut(block)
                .zip(q.par_chunks_mut(block * na))
                .enumerate()
                .map(|(b, (vo, qo))| sweep_block(mdp, &v, opts.gamma, b * block, vo, qo))
                .reduce(|| 0.0, |a, b| if b > a || b.is_nan() { b } else { a }),
        };
        std::mem::swap(&mut v, &mut v_next);
        if !delta.is_finite() {
            return Err(DacError::Diverged { iteration: it });
        }
        history.push(delta);
        if delta <= opts.delta_min {
            converged = true;
            break;
        }
    }

    Ok(SolveResult {
        n_actions: na,
        v,
        q,
        residual: history.last().copied().unwrap_or(0.0),
        iterations: history.len(),
        converged,
        gamma: opts.gamma,
        residual_history: history,
        wall_time: start.elapsed(),
    })
}

/// Random sparse MDP for benchmarks: uniform successors, random
/// probabilities, rewards in `[0, 1)`, no terminal slots.
pub fn synthetic_mdp(n_states: usize, n_actions: usize, k: usize, seed: u64) -> CoreMdp {
    let rows = n_states * n_actions;
    let mut succ = vec![0u32; rows * k];
    let mut prob = vec![0f64; rows * k];
    let mut reward = vec![0f64; rows];
    const CHUNK: usize = 4096;
    succ.par_chunks_mut(CHUNK * k)
        .zip(prob.par_chunks_mut(CHUNK * k))
        .zip(reward.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(c, ((succ, prob), reward))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            for (row, r) in reward.iter_mut().enumerate() {
                *r = rng.gen::<f64>();
                let p = &mut prob[row * k..(row + 1) * k];
                for (j, x) in p.iter_mut().enumerate() {
                    succ[row * k + j] = rng.gen_range(0..n_states as u32);
                    *x = rng.gen::<f64>() + 1e-3;
                }
                let total: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= total);
            }
        });
    CoreMdp {
        n_states,
        n_actions,
        width: k,
        succ,
        prob,
        reward,
        terminal: vec![false; rows * k],
        state_dim: 0,
        state_vectors: Vec::new(),
        config: DacConfig { k, ..DacConfig::default() },
        modifiers: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(n: usize, na: usize, width: usize, succ: Vec<u32>, prob: Vec<f64>, reward: Vec<f64>) -> CoreMdp {
        CoreMdp {
            n_states: n,
            n_actions: na,
            width,
            terminal: vec![false; succ.len()],
            succ,
            prob,
            reward,
            state_dim: 0,
            state_vectors: vec![],
            config: DacConfig::default(),
            modifiers: Vec::new(),
        }
    }

    fn opts(gamma: f64, delta_min: f64) -> SolveOptions {
        SolveOptions { gamma, delta_min, max_iters: 100_000 }
    }

    #[test]
    fn self_loop_single_backup() {
        let mdp = tiny(1, 1, 1, vec![0], vec![1.0], vec![1.0]);
        let sw = bellman_sweep(&mdp, &[0.0], 0.9).unwrap();
        assert_eq!(sw.v, vec![1.0]);
        assert_eq!(sw.delta, vec![1.0]);
    }

    #[test]
    fn myopic_sweep_is_max_reward() {
        let mdp = tiny(2, 2, 1, vec![1, 0, 0, 1], vec![1.0; 4], vec![0.5, -1.0, 3.0, 2.0]);
        let sw = bellman_sweep(&mdp, &[100.0, -7.0], 0.0).unwrap();
        assert_eq!(sw.v, vec![0.5, 3.0]);
    }

    #[test]
    fn two_state_chain_closed_form() {
        let mdp = tiny(2, 1, 1, vec![1, 1], vec![1.0, 1.0], vec![0.0, 1.0]);
        let res = value_iterate(&mdp, &opts(0.5, 1e-12)).unwrap();
        assert!(res.converged);
        assert!((res.v[0] - 1.0).abs() < 1e-11);
        assert!((res.v[1] - 2.0).abs() < 1e-11);
        assert!((res.q(0, 0) - 1.0).abs() < 1e-11);
        assert!(res.contraction_violations().is_empty());
    }

    #[test]
    fn terminal_slots_do_not_bootstrap() {
        let mut mdp = tiny(1, 1, 2, vec![0, 0], vec![0.5, 0.5], vec![1.0]);
        mdp.terminal[1] = true;
        let res = value_iterate(&mdp, &opts(0.9, 1e-12)).unwrap();
        // V = 1 + 0.45 V
        assert!((res.v[0] - 1.0 / 0.55).abs() < 1e-10);
    }

    #[test]
    fn huge_tolerance_stops_after_one_sweep() {
        let mdp = synthetic_mdp(50, 3, 4, 1);
        let res = value_iterate(&mdp, &opts(0.9, 10.0)).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
    }

    #[test]
    fn cutoff_is_flagged() {
        let mdp = synthetic_mdp(20, 2, 3, 2);
        let res = value_iterate(&mdp, &SolveOptions { gamma: 0.99, delta_min: 1e-12, max_iters: 3 }).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 3);
    }

    #[test]
    fn v_is_max_of_q_and_thread_count_invariant() {
        let mdp = synthetic_mdp(1000, 4, 5, 3);
        let o = opts(0.95, 1e-8);
        let seq = value_iterate(&mdp, &o).unwrap();
        for s in 0..mdp.n_states {
            let m = seq.q_row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(seq.v[s], m);
        }
        for t in [1, 2, 3, 7] {
            assert_eq!(solve_parallel(&mdp, &o, t).unwrap(), seq, "threads={t}");
        }
    }

    #[test]
    fn monotone_from_zero_with_nonnegative_rewards() {
        let mdp = synthetic_mdp(200, 3, 4, 9);
        let mut v = vec![0.0; mdp.n_states];
        for _ in 0..30 {
            let next = bellman_sweep(&mdp, &v, 0.9).unwrap().v;
            assert!(next.iter().zip(&v).all(|(a, b)| a >= b));
            v = next;
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mdp = synthetic_mdp(3, 1, 1, 0);
        assert!(bellman_sweep(&mdp, &[0.0, f64::NAN, 0.0], 0.9).is_err());
        assert!(bellman_sweep(&mdp, &[0.0], 0.9).is_err());
        assert!(value_iterate(&mdp, &opts(1.0, 1e-3)).is_err());
        assert!(solve_parallel(&mdp, &opts(0.9, 1e-3), 0).is_err());
    }

    #[test]
    fn q_file_round_trip() {
        let mdp = synthetic_mdp(30, 3, 2, 4);
        let res = value_iterate(&mdp, &opts(0.9, 1e-6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.bin");
        res.save(&p).unwrap();
        let back = SolveResult::load(&p).unwrap();
        assert_eq!(back.v, res.v);
        assert_eq!(back.q, res.q);
        assert_eq!(back.iterations, res.iterations);
        assert_eq!(back.gamma, 0.9);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }
}
