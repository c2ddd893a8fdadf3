//! Exact k-nearest-neighbor search over dataset source states.
//!
//! Neighbors are ranked by the pair (squared L2 distance, tuple index), so
//! equal distances resolve to the lower dataset index. Both backends compute
//! distances with the same accumulation order and return identical answers.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{DacError, Result};

/// `k` neighbors sorted by `(distance, index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub indices: Vec<usize>,
    /// L2 distances, non-decreasing.
    pub distances: Vec<f64>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.distances.iter().copied())
    }

    pub fn mean_distance(&self) -> f64 {
        self.distances.iter().sum::<f64>() / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchBackend {
    BruteForce,
    #[default]
    KdTree,
}

impl FromStr for SearchBackend {
    type Err = DacError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "brute" | "brute_force" => Ok(SearchBackend::BruteForce),
            "kdtree" | "kd_tree" => Ok(SearchBackend::KdTree),
            other => Err(DacError::Config(format!("unknown knn backend {other:?}"))),
        }
    }
}

/// Squared euclidean distance accumulated in f64 in coordinate order.
#[inline]
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Running k-best list kept sorted by `(dist², id)`.
struct Best {
    k: usize,
    items: Vec<(f64, u32)>,
}

impl Best {
    fn new(k: usize) -> Self {
        Best { k, items: Vec::with_capacity(k + 1) }
    }

    #[inline]
    fn full(&self) -> bool {
        self.items.len() == self.k
    }

    #[inline]
    fn worst(&self) -> f64 {
        if self.full() {
            self.items[self.k - 1].0
        } else {
            f64::INFINITY
        }
    }

    #[inline]
    fn offer(&mut self, d2: f64, id: u32) {
        if self.full() {
            let (wd, wid) = self.items[self.k - 1];
            if d2 > wd || (d2 == wd && id > wid) {
                return;
            }
        }
        let pos = self.items.partition_point(|&(d, i)| d < d2 || (d == d2 && i < id));
        self.items.insert(pos, (d2, id));
        self.items.truncate(self.k);
    }

    fn into_set(self) -> NeighborSet {
        NeighborSet {
            indices: self.items.iter().map(|&(_, i)| i as usize).collect(),
            distances: self.items.iter().map(|&(d, _)| d.sqrt()).collect(),
        }
    }
}

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { dim: u32, value: f32, left: u32, right: u32 },
}

/// Point set for one partition, optionally organized as a kd-tree.
#[derive(Debug, Clone)]
struct PointSet {
    dim: usize,
    /// coordinates, reordered to match `ids`
    points: Vec<f32>,
    /// dataset tuple indices
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

impl PointSet {
    fn build(states: &[f32], dim: usize, ids: Vec<u32>, backend: SearchBackend) -> Self {
        let mut set = PointSet { dim, points: Vec::new(), ids, nodes: Vec::new() };
        if backend == SearchBackend::KdTree && !set.ids.is_empty() {
            let mut order = set.ids.clone();
            set.build_node(states, &mut order, 0);
            set.ids = order;
        }
        set.points = Vec::with_capacity(set.ids.len() * dim);
        for &id in &set.ids {
            let i = id as usize;
            set.points.extend_from_slice(&states[i * dim..(i + 1) * dim]);
        }
        set
    }

    fn build_node(&mut self, states: &[f32], order: &mut [u32], offset: usize) -> u32 {
        let dim = self.dim;
        let coord = |id: u32, d: usize| states[id as usize * dim + d];
        let node_id = self.nodes.len() as u32;
        if order.len() <= LEAF_SIZE || dim == 0 {
            self.nodes.push(Node::Leaf { start: offset as u32, end: (offset + order.len()) as u32 });
            return node_id;
        }
        let split_dim = (0..dim)
            .map(|d| {
                let (lo, hi) = order.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &id| {
                    let v = coord(id, d);
                    (lo.min(v), hi.max(v))
                });
                (d, hi - lo)
            })
            .fold((0, f32::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        if order.iter().all(|&id| coord(id, split_dim) == coord(order[0], split_dim)) {
            // every coordinate identical: nothing to split on
            self.nodes.push(Node::Leaf { start: offset as u32, end: (offset + order.len()) as u32 });
            return node_id;
        }
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| coord(a, split_dim).total_cmp(&coord(b, split_dim)).then(a.cmp(&b)));
        let value = coord(order[mid], split_dim);
        self.nodes.push(Node::Split { dim: split_dim as u32, value, left: 0, right: 0 });
        let (lo, hi) = order.split_at_mut(mid);
        let left = self.build_node(states, lo, offset);
        let right = self.build_node(states, hi, offset + mid);
        self.nodes[node_id as usize] = Node::Split { dim: split_dim as u32, value, left, right };
        node_id
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    fn point(&self, slot: usize) -> &[f32] {
        &self.points[slot * self.dim..(slot + 1) * self.dim]
    }

    fn query(&self, q: &[f32], k: usize) -> NeighborSet {
        let mut best = Best::new(k);
        if self.nodes.is_empty() {
            for slot in 0..self.len() {
                best.offer(squared_distance(q, self.point(slot)), self.ids[slot]);
            }
        } else {
            self.search(0, q, &mut best);
        }
        best.into_set()
    }

    fn search(&self, node: u32, q: &[f32], best: &mut Best) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for slot in start as usize..end as usize {
                    best.offer(squared_distance(q, self.point(slot)), self.ids[slot]);
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim as usize] as f64 - value as f64;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // `<=` keeps equal-distance candidates with lower indices reachable
                if diff * diff <= best.worst() {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Per-action and action-agnostic exact kNN over dataset source states.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dim: usize,
    backend: SearchBackend,
    per_action: Vec<PointSet>,
    global: PointSet,
}

impl NeighborIndex {
    pub fn build(ds: &Dataset) -> Self {
        Self::build_with(ds, SearchBackend::default())
    }

    pub fn build_with(ds: &Dataset, backend: SearchBackend) -> Self {
        let dim = ds.state_dim();
        let mut partitions: Vec<Vec<u32>> = vec![Vec::new(); ds.action_count()];
        for i in 0..ds.len() {
            partitions[ds.action(i)].push(i as u32);
        }
        let states = ds.states();
        let per_action = partitions
            .into_par_iter()
            .map(|ids| PointSet::build(states, dim, ids, backend))
            .collect();
        let global = PointSet::build(states, dim, (0..ds.len() as u32).collect(), backend);
        NeighborIndex { dim, backend, per_action, global }
    }

    pub fn backend(&self) -> SearchBackend {
        self.backend
    }

    pub fn state_dim(&self) -> usize {
        self.dim
    }

    pub fn action_count(&self) -> usize {
        self.per_action.len()
    }

    pub fn len(&self) -> usize {
        self.global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global.len() == 0
    }

    /// Number of tuples indexed under each action.
    pub fn partition_sizes(&self) -> Vec<usize> {
        self.per_action.iter().map(PointSet::len).collect()
    }

    /// Tuple indices with action `a`, ascending.
    pub fn partition(&self, a: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = self.per_action[a].ids.iter().map(|&i| i as usize).collect();
        ids.sort_unstable();
        ids
    }

    fn check_query(&self, s: &[f32], k: usize) -> Result<()> {
        if s.len() != self.dim {
            return Err(DacError::DimensionMismatch { expected: self.dim, got: s.len() });
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(DacError::NonFinite("query state".into()));
        }
        if k == 0 {
            return Err(DacError::Config("k must be >= 1".into()));
        }
        Ok(())
    }

    /// The `k` tuples with action exactly `a` nearest to `s`.
    pub fn knn_query(&self, s: &[f32], a: usize, k: usize) -> Result<NeighborSet> {
        self.check_query(s, k)?;
        let part = self
            .per_action
            .get(a)
            .ok_or(DacError::ActionOutOfRange { action: a, action_count: self.per_action.len() })?;
        if part.len() < k {
            return Err(DacError::InsufficientSupport { action: a, available: part.len(), required: k });
        }
        Ok(part.query(s, k))
    }

    /// The `k` tuples nearest to `s` regardless of action.
    pub fn knn_query_state(&self, s: &[f32], k: usize) -> Result<NeighborSet> {
        self.check_query(s, k)?;
        if self.global.len() < k {
            return Err(DacError::InsufficientSupport { action: usize::MAX, available: self.global.len(), required: k });
        }
        Ok(self.global.query(s, k))
    }
}
