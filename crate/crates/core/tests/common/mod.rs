//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use dacmdp::compiler::{CoreMdp, DacConfig};
use dacmdp::{Dataset, ExperienceTuple};
use rand::Rng;

/// Random sparse MDP with duplicate successors, zero-probability slots and
/// terminal slots, rows normalized exactly enough for the solver's checks.
pub fn random_mdp<R: Rng>(rng: &mut R, n: usize, a: usize, k: usize, terminal_rate: f64) -> CoreMdp {
    let rows = n * a;
    let mut succ = Vec::with_capacity(rows * k);
    let mut prob = Vec::with_capacity(rows * k);
    let mut terminal = Vec::with_capacity(rows * k);
    let mut reward = Vec::with_capacity(rows);
    for _ in 0..rows {
        reward.push(rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-1..2)));
        let mut p: Vec<f64> = (0..k).map(|j| if j > 0 && rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(0.05..1.0) }).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        for x in p {
            succ.push(rng.gen_range(0..n as u32));
            prob.push(x);
            terminal.push(rng.gen_bool(terminal_rate));
        }
    }
    CoreMdp {
        n_states: n,
        n_actions: a,
        width: k,
        succ,
        prob,
        reward,
        terminal,
        state_dim: 0,
        state_vectors: Vec::new(),
        config: DacConfig { k, ..DacConfig::default() },
        modifiers: Vec::new(),
    }
}

/// Dense `n × n` transition matrix of one action plus the expected rewards.
fn dense_action(mdp: &CoreMdp, a: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = mdp.n_states;
    let mut p = vec![vec![0.0; n]; n];
    let mut r = vec![0.0; n];
    for (s, row) in p.iter_mut().enumerate() {
        let at = (s * mdp.n_actions + a) * mdp.width;
        for j in at..at + mdp.width {
            if !mdp.terminal[j] {
                row[mdp.succ[j] as usize] += mdp.prob[j];
            }
        }
        r[s] = mdp.reward[s * mdp.n_actions + a];
    }
    (p, r)
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Exact optimal `(V, Q)` by policy iteration with dense linear solves.
pub fn policy_iteration(mdp: &CoreMdp, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let n = mdp.n_states;
    let na = mdp.n_actions;
    let dense: Vec<_> = (0..na).map(|a| dense_action(mdp, a)).collect();
    let mut pi = vec![0usize; n];
    loop {
        let mut m = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        for s in 0..n {
            let (p, r) = &dense[pi[s]];
            for t in 0..n {
                m[s][t] = -gamma * p[s][t];
            }
            m[s][s] += 1.0;
            b[s] = r[s];
        }
        let v = gauss_solve(m, b);
        let mut q = vec![0.0; n * na];
        for s in 0..n {
            for (a, (p, r)) in dense.iter().enumerate() {
                q[s * na + a] = r[s] + gamma * p[s].iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        let mut changed = false;
        for s in 0..n {
            let row = &q[s * na..(s + 1) * na];
            let best = (0..na).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
            if row[best] > row[pi[s]] + 1e-12 * (1.0 + row[pi[s]].abs()) {
                pi[s] = best;
                changed = true;
            }
        }
        if !changed {
            let v = (0..n).map(|s| q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
            return (v, q);
        }
    }
}

/// Squared L2 distance accumulated in coordinate order in f64.
pub fn sq_dist(x: &[f32], y: &[f32]) -> f64 {
    x.iter().zip(y).map(|(&a, &b)| (a as f64 - b as f64).powi(2)).sum()
}

/// Full-sort kNN over tuples with action `a` (all tuples when `None`),
/// ranked by `(distance, index)`.
pub fn brute_knn(ds: &Dataset, s: &[f32], a: Option<usize>, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(f64, usize)> = (0..ds.len())
        .filter(|&i| a.is_none_or(|a| ds.action(i) == a))
        .map(|i| (sq_dist(ds.state(i), s), i))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    all.into_iter().take(k).map(|(d, i)| (i, d.sqrt())).collect()
}

/// Dataset on a coarse lattice so exact distance ties are common.
pub fn lattice_dataset<R: Rng>(rng: &mut R, n: usize, dim: usize, actions: usize, levels: i32) -> Dataset {
    let coord = |rng: &mut R| rng.gen_range(-levels..=levels) as f32 * 0.25;
    let tuples = (0..n)
        .map(|i| ExperienceTuple {
            state: (0..dim).map(|_| coord(rng)).collect(),
            // every action appears at least once
            action: if i < actions { i } else { rng.gen_range(0..actions) },
            reward: rng.gen_range(-1.0..1.0),
            next_state: (0..dim).map(|_| coord(rng)).collect(),
            terminal: rng.gen_bool(0.05),
        })
        .collect();
    Dataset::from_tuples(tuples, actions).unwrap()
}
