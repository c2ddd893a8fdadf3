//! Seeded desk-scale environments: CartPole and a heading-based grid world.
//!
//! Both are fully deterministic given the reset seed. Policy evaluation rolls
//! independent episodes in parallel, each with its own handle and seed.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DacError, Result};
use crate::policy::Controller;

/// Outcome of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f32>,
    pub reward: f32,
    /// The episode ended in a terminal state (value zero afterwards).
    pub terminal: bool,
    /// The horizon was reached without a terminal state.
    pub truncated: bool,
}

// Classic pole-balancing constants.
const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_POLE_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_POLE_LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;
const X_THRESHOLD: f64 = 2.4;
pub const CARTPOLE_HORIZON: usize = 500;

/// Cart-pole with Euler integration, actions {0: push left, 1: push right},
/// +1 reward for every step including the failing one.
#[derive(Debug, Clone)]
pub struct CartPole {
    /// x, x_dot, theta, theta_dot
    pub state: [f64; 4],
    pub horizon: usize,
    steps: usize,
    done: bool,
}

impl Default for CartPole {
    fn default() -> Self {
        CartPole { state: [0.0; 4], horizon: CARTPOLE_HORIZON, steps: 0, done: false }
    }
}

impl CartPole {
    pub fn reset(&mut self, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in self.state.iter_mut() {
            *s = rng.gen_range(-0.05..0.05);
        }
        self.steps = 0;
        self.done = false;
        self.obs()
    }

    pub fn obs(&self) -> Vec<f32> {
        self.state.iter().map(|&x| x as f32).collect()
    }

    /// One Euler step of the cart-pole equations of motion.
    pub fn integrate(state: [f64; 4], force: f64) -> [f64; 4] {
        let [x, x_dot, theta, theta_dot] = state;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_POLE_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        [x + TAU * x_dot, x_dot + TAU * x_acc, theta + TAU * theta_dot, theta_dot + TAU * theta_acc]
    }

    pub fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(DacError::StepAfterTerminal);
        }
        if action > 1 {
            return Err(DacError::ActionOutOfRange { action, action_count: 2 });
        }
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        self.state = Self::integrate(self.state, force);
        self.steps += 1;
        let [x, _, theta, _] = self.state;
        let terminal = x.abs() > X_THRESHOLD || theta.abs() > THETA_THRESHOLD;
        let truncated = !terminal && self.steps >= self.horizon;
        self.done = terminal || truncated;
        Ok(Step { obs: self.obs(), reward: 1.0, terminal, truncated })
    }

    /// Linear state-feedback controller that balances indefinitely from the
    /// reset distribution.
    pub fn expert_action(&self) -> usize {
        let [x, x_dot, theta, theta_dot] = self.state;
        let u = 0.1 * x + 0.5 * x_dot + 10.0 * theta + 2.0 * theta_dot;
        usize::from(u > 0.0)
    }
}

/// Cell contents of a grid layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Free,
    Wall,
    Goal,
    /// Obstacle that pays a small reward every time it is bumped.
    Bonus,
    /// Obstacle that costs a large penalty every time it is bumped.
    Hazard,
}

/// Grid room parsed from a text map:
/// `#` wall, `.` free, `G` goal, `B` bonus, `H` hazard, `S` start.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayout {
    pub name: String,
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
    pub goal: (usize, usize),
    pub starts: Vec<(usize, usize)>,
    pub wall_bump_reward: f32,
    pub goal_reward: f32,
    pub bonus_reward: f32,
    pub hazard_reward: f32,
    pub step_reward: f32,
    pub horizon: usize,
}

pub const SIMPLE_ROOM: &str = "\
##########
#........#
#........#
#.....G..#
#........#
#........#
##########";

pub const BOX_AND_PILLAR_ROOM: &str = "\
##########
#........#
#..B.....#
#........#
#.S....G.#
#........#
##########";

// The short route runs through a tunnel lined with hazards and jogs once, so
// the agent must face a hazard at each of its four bends. The long route loops
// around the top, separated from the hazards by walls.
pub const TUNNEL_ROOM: &str = "\
#################
#...............#
#.#############.#
#.##HHHHHHHHH##.#
#.##HHHHHHHHH##.#
#.##HHHHHHHHH##.#
#.##HHHHHHHHH##.#
#.##HHHHHHHHH##.#
#.##HH.....HH##.#
#S.....HHH.....G#
#.##HHHHHHHHH##.#
#################";

impl GridLayout {
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = rows.len();
        let width = rows.iter().map(|r| r.chars().count()).max().unwrap_or(0);
        if height == 0 || width == 0 {
            return Err(DacError::Config(format!("layout {name:?} is empty")));
        }
        let mut cells = vec![Cell::Wall; width * height];
        let mut goal = None;
        let mut starts = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                cells[y * width + x] = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    'S' => {
                        starts.push((x, y));
                        Cell::Free
                    }
                    'G' => {
                        if goal.replace((x, y)).is_some() {
                            return Err(DacError::Config(format!("layout {name:?} has more than one goal")));
                        }
                        Cell::Goal
                    }
                    'B' => Cell::Bonus,
                    'H' => Cell::Hazard,
                    other => {
                        return Err(DacError::Config(format!(
                            "layout {name:?}: unknown map character {other:?} at ({x}, {y})"
                        )))
                    }
                };
            }
        }
        let goal = goal.ok_or_else(|| DacError::Config(format!("layout {name:?} has no goal 'G'")))?;
        Ok(GridLayout {
            name: name.to_string(),
            width,
            height,
            cells,
            goal,
            starts,
            wall_bump_reward: -1.0,
            goal_reward: 1.0,
            bonus_reward: 0.02,
            hazard_reward: -10.0,
            step_reward: 0.0,
            horizon: 100,
        })
    }

    /// One of the shipped layouts: `simple`, `box_and_pillar`, `tunnel`.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "simple" => Self::parse(name, SIMPLE_ROOM),
            "box_and_pillar" => Self::parse(name, BOX_AND_PILLAR_ROOM),
            "tunnel" => Self::parse(name, TUNNEL_ROOM),
            other => Err(DacError::Config(format!(
                "unknown layout {other:?} (expected simple, box_and_pillar or tunnel)"
            ))),
        }
    }

    /// A shipped layout name, or otherwise a path to a text map.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if let Ok(layout) = Self::named(name_or_path) {
            return Ok(layout);
        }
        let text = std::fs::read_to_string(name_or_path).map_err(|e| DacError::io(name_or_path, e))?;
        Self::parse(name_or_path, &text)
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        if x >= self.width || y >= self.height {
            Cell::Wall
        } else {
            self.cells[y * self.width + x]
        }
    }

    /// Cells the agent may occupy (free cells and the goal).
    pub fn is_open(&self, x: usize, y: usize) -> bool {
        matches!(self.cell(x, y), Cell::Free | Cell::Goal)
    }

    pub fn open_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.cell(x, y) == Cell::Free)
            .collect()
    }

    /// Open cells 4-adjacent to at least one hazard.
    pub fn hazard_adjacent(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.cell(x, y) != Cell::Hazard {
                    continue;
                }
                for h in 0..4 {
                    if let Some((nx, ny)) = self.ahead(x, y, h) {
                        if self.is_open(nx, ny) {
                            out.insert((nx, ny));
                        }
                    }
                }
            }
        }
        out
    }

    fn ahead(&self, x: usize, y: usize, heading: usize) -> Option<(usize, usize)> {
        let (dx, dy) = HEADINGS[heading];
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height)
            .then_some((nx as usize, ny as usize))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(match self.cell(x, y) {
                    Cell::Wall => '#',
                    Cell::Goal => 'G',
                    Cell::Bonus => 'B',
                    Cell::Hazard => 'H',
                    Cell::Free if self.starts.contains(&(x, y)) => 'S',
                    Cell::Free => '.',
                });
            }
            if y + 1 < self.height {
                out.push('\n');
            }
        }
        out
    }
}

impl Serialize for GridLayout {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if Self::named(&self.name).ok().as_ref() == Some(self) {
            s.serialize_str(&self.name)
        } else {
            s.serialize_str(&self.to_text())
        }
    }
}

impl<'de> Deserialize<'de> for GridLayout {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        if text.contains('\n') {
            GridLayout::parse("custom", &text)
        } else {
            GridLayout::named(&text)
        }
        .map_err(serde::de::Error::custom)
    }
}

/// east, north, west, south; rows grow downwards.
const HEADINGS: [(i64, i64); 4] = [(1, 0), (0, -1), (-1, 0), (0, 1)];

pub const GRID_FORWARD: usize = 0;
pub const GRID_TURN_LEFT: usize = 1;
pub const GRID_TURN_RIGHT: usize = 2;

/// Grid navigation with actions {forward, turn left, turn right}.
///
/// Observations are `[x / (w-1), y / (h-1), cos(heading), sin(heading)]`
/// (dimension 4 for every layout). Bumping a wall, bonus or hazard keeps the
/// agent in place and pays that obstacle's reward; entering the goal ends the
/// episode. With `slip > 0` each chosen action is replaced by a uniformly
/// random one with that probability.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub layout: GridLayout,
    pub slip: f64,
    pub exploring_starts: bool,
    pos: (usize, usize),
    heading: usize,
    rng: ChaCha8Rng,
    steps: usize,
    done: bool,
    /// shortest action count to the goal, indexed by (cell, heading)
    goal_distance: Vec<u32>,
}

impl GridWorld {
    pub fn new(layout: GridLayout, slip: f64, exploring_starts: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&slip) {
            return Err(DacError::Config(format!("slip probability {slip} outside [0, 1]")));
        }
        let open = layout.open_cells();
        if open.is_empty() {
            return Err(DacError::Config(format!("layout {:?} has no free cell", layout.name)));
        }
        let goal_distance = Self::distances_to_goal(&layout);
        let pos = layout.starts.first().copied().unwrap_or(open[0]);
        Ok(GridWorld {
            layout,
            slip,
            exploring_starts,
            pos,
            heading: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
            done: false,
            goal_distance,
        })
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    pub fn heading(&self) -> usize {
        self.heading
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f32> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let candidates = if self.exploring_starts || self.layout.starts.is_empty() {
            self.layout.open_cells()
        } else {
            self.layout.starts.clone()
        };
        self.pos = candidates[self.rng.gen_range(0..candidates.len())];
        self.heading = self.rng.gen_range(0..4);
        self.steps = 0;
        self.done = false;
        self.obs()
    }

    pub fn obs(&self) -> Vec<f32> {
        Self::features(&self.layout, self.pos, self.heading)
    }

    pub fn features(layout: &GridLayout, pos: (usize, usize), heading: usize) -> Vec<f32> {
        let norm = |v: usize, n: usize| if n > 1 { v as f32 / (n - 1) as f32 } else { 0.0 };
        let (dx, dy) = HEADINGS[heading];
        vec![norm(pos.0, layout.width), norm(pos.1, layout.height), dx as f32, -dy as f32]
    }

    /// Deterministic transition `(pos, heading, action) -> (pos', heading', reward, terminal)`.
    fn transition(layout: &GridLayout, pos: (usize, usize), heading: usize, action: usize) -> ((usize, usize), usize, f32, bool) {
        match action {
            GRID_TURN_LEFT => (pos, (heading + 1) % 4, layout.step_reward, false),
            GRID_TURN_RIGHT => (pos, (heading + 3) % 4, layout.step_reward, false),
            _ => {
                let Some((nx, ny)) = layout.ahead(pos.0, pos.1, heading) else {
                    return (pos, heading, layout.wall_bump_reward, false);
                };
                match layout.cell(nx, ny) {
                    Cell::Free => ((nx, ny), heading, layout.step_reward, false),
                    Cell::Goal => ((nx, ny), heading, layout.goal_reward, true),
                    Cell::Wall => (pos, heading, layout.wall_bump_reward, false),
                    Cell::Bonus => (pos, heading, layout.bonus_reward, false),
                    Cell::Hazard => (pos, heading, layout.hazard_reward, false),
                }
            }
        }
    }

    pub fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(DacError::StepAfterTerminal);
        }
        if action > 2 {
            return Err(DacError::ActionOutOfRange { action, action_count: 3 });
        }
        let executed = if self.slip > 0.0 && self.rng.gen::<f64>() < self.slip {
            self.rng.gen_range(0..3)
        } else {
            action
        };
        let (pos, heading, reward, terminal) = Self::transition(&self.layout, self.pos, self.heading, executed);
        self.pos = pos;
        self.heading = heading;
        self.steps += 1;
        let truncated = !terminal && self.steps >= self.layout.horizon;
        self.done = terminal || truncated;
        Ok(Step { obs: self.obs(), reward, terminal, truncated })
    }

    fn state_id(layout: &GridLayout, pos: (usize, usize), heading: usize) -> usize {
        (pos.1 * layout.width + pos.0) * 4 + heading
    }

    /// Backward breadth-first search over (cell, heading) from the goal.
    fn distances_to_goal(layout: &GridLayout) -> Vec<u32> {
        let n = layout.width * layout.height * 4;
        // forward edges, inverted
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut queue = VecDeque::new();
        let mut dist = vec![u32::MAX; n];
        for y in 0..layout.height {
            for x in 0..layout.width {
                if layout.cell(x, y) != Cell::Free {
                    continue;
                }
                for h in 0..4 {
                    let from = Self::state_id(layout, (x, y), h);
                    for a in 0..3 {
                        let (p, nh, _, terminal) = Self::transition(layout, (x, y), h, a);
                        if terminal {
                            if dist[from] == u32::MAX {
                                dist[from] = 1;
                                queue.push_back(from);
                            }
                        } else {
                            preds[Self::state_id(layout, p, nh)].push(from);
                        }
                    }
                }
            }
        }
        while let Some(s) = queue.pop_front() {
            for &p in &preds[s] {
                if dist[p] == u32::MAX {
                    dist[p] = dist[s] + 1;
                    queue.push_back(p);
                }
            }
        }
        dist
    }

    /// First action on a shortest path to the goal (lowest index on ties).
    pub fn expert_action(&self) -> usize {
        (0..3)
            .min_by_key(|&a| {
                let (p, h, _, terminal) = Self::transition(&self.layout, self.pos, self.heading, a);
                if terminal {
                    0
                } else {
                    self.goal_distance[Self::state_id(&self.layout, p, h)]
                }
            })
            .unwrap_or(GRID_FORWARD)
    }
}

/// Serializable environment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    CartPole,
    Grid {
        layout: GridLayout,
        #[serde(default)]
        slip: f64,
        #[serde(default)]
        exploring_starts: bool,
    },
}

impl EnvSpec {
    pub fn grid(layout: &str) -> Result<Self> {
        Ok(EnvSpec::Grid { layout: GridLayout::load(layout)?, slip: 0.0, exploring_starts: false })
    }

    pub fn with_slip(self, rho: f64) -> Self {
        match self {
            EnvSpec::Grid { layout, exploring_starts, .. } => EnvSpec::Grid { layout, slip: rho, exploring_starts },
            other => other,
        }
    }

    pub fn with_exploring_starts(self, on: bool) -> Self {
        match self {
            EnvSpec::Grid { layout, slip, .. } => EnvSpec::Grid { layout, slip, exploring_starts: on },
            other => other,
        }
    }

    pub fn name(&self) -> String {
        match self {
            EnvSpec::CartPole => "cartpole".into(),
            EnvSpec::Grid { layout, slip, .. } if *slip > 0.0 => format!("grid:{}:slip{}", layout.name, slip),
            EnvSpec::Grid { layout, .. } => format!("grid:{}", layout.name),
        }
    }

    pub fn action_count(&self) -> usize {
        match self {
            EnvSpec::CartPole => 2,
            EnvSpec::Grid { .. } => 3,
        }
    }

    /// Resolve an action name (`LEFT`, `RIGHT`, `FORWARD`, ...) or index.
    pub fn parse_action(&self, name: &str) -> Result<usize> {
        if let Ok(i) = name.parse::<usize>() {
            return if i < self.action_count() {
                Ok(i)
            } else {
                Err(DacError::ActionOutOfRange { action: i, action_count: self.action_count() })
            };
        }
        let upper = name.to_ascii_uppercase();
        let idx = match (self, upper.as_str()) {
            (EnvSpec::CartPole, "LEFT") => 0,
            (EnvSpec::CartPole, "RIGHT") => 1,
            (EnvSpec::Grid { .. }, "FORWARD") => GRID_FORWARD,
            (EnvSpec::Grid { .. }, "LEFT" | "TURN_LEFT") => GRID_TURN_LEFT,
            (EnvSpec::Grid { .. }, "RIGHT" | "TURN_RIGHT") => GRID_TURN_RIGHT,
            _ => return Err(DacError::Config(format!("unknown action name {name:?} for {}", self.name()))),
        };
        Ok(idx)
    }
}

impl FromStr for EnvSpec {
    type Err = DacError;

    /// `cartpole` or `grid` / `grid:<layout>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "cartpole" => Ok(EnvSpec::CartPole),
            None if s == "grid" => EnvSpec::grid("simple"),
            Some(("grid", layout)) => EnvSpec::grid(layout),
            _ => Err(DacError::Config(format!("unknown environment {s:?} (expected cartpole or grid:<layout>)"))),
        }
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// A live environment instance.
#[derive(Debug, Clone)]
pub enum EnvironmentHandle {
    CartPole(CartPole),
    Grid(GridWorld),
}

impl EnvironmentHandle {
    pub fn new(spec: &EnvSpec) -> Result<Self> {
        Ok(match spec {
            EnvSpec::CartPole => EnvironmentHandle::CartPole(CartPole::default()),
            EnvSpec::Grid { layout, slip, exploring_starts } => {
                EnvironmentHandle::Grid(GridWorld::new(layout.clone(), *slip, *exploring_starts)?)
            }
        })
    }

    pub fn obs_dim(&self) -> usize {
        4
    }

    pub fn action_count(&self) -> usize {
        match self {
            EnvironmentHandle::CartPole(_) => 2,
            EnvironmentHandle::Grid(_) => 3,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvironmentHandle::CartPole(c) => c.horizon,
            EnvironmentHandle::Grid(g) => g.layout.horizon,
        }
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f32> {
        match self {
            EnvironmentHandle::CartPole(c) => c.reset(seed),
            EnvironmentHandle::Grid(g) => g.reset(seed),
        }
    }

    pub fn step(&mut self, action: usize) -> Result<Step> {
        match self {
            EnvironmentHandle::CartPole(c) => c.step(action),
            EnvironmentHandle::Grid(g) => g.step(action),
        }
    }

    pub fn expert_action(&self) -> usize {
        match self {
            EnvironmentHandle::CartPole(c) => c.expert_action(),
            EnvironmentHandle::Grid(g) => g.expert_action(),
        }
    }
}

/// Undiscounted return statistics over evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_return: f64,
    pub std: f64,
    pub per_episode: Vec<f64>,
    /// Whether each episode ended in a terminal state before the horizon.
    pub terminated: Vec<bool>,
    pub lengths: Vec<usize>,
}

impl EvalReport {
    fn from_episodes(episodes: Vec<Episode>) -> Self {
        let n = episodes.len() as f64;
        let per_episode: Vec<f64> = episodes.iter().map(|e| e.ret).collect();
        let mean = per_episode.iter().sum::<f64>() / n;
        let var = if episodes.len() > 1 {
            per_episode.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        EvalReport {
            mean_return: mean,
            std: var.sqrt(),
            terminated: episodes.iter().map(|e| e.terminated).collect(),
            lengths: episodes.iter().map(|e| e.length).collect(),
            per_episode,
        }
    }

    /// Half-width of a normal-approximation confidence interval for the mean.
    pub fn ci_half_width(&self, z: f64) -> f64 {
        z * self.std / (self.per_episode.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub ret: f64,
    pub length: usize,
    pub terminated: bool,
}

/// Per-episode seeds derived from one evaluation seed. Every caller that
/// evaluates with the same seed sees the same start states (paired
/// comparisons).
pub fn episode_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..episodes).map(|_| rng.gen()).collect()
}

/// Roll one episode. `eps` mixes in uniformly random actions; `visit` sees
/// the environment after reset and after every step.
pub fn run_episode(
    spec: &EnvSpec,
    controller: &(impl Controller + ?Sized),
    eps: f64,
    seed: u64,
    mut visit: impl FnMut(&EnvironmentHandle),
) -> Result<Episode> {
    let mut env = EnvironmentHandle::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut obs = env.reset(seed);
    visit(&env);
    let mut ret = 0.0;
    let mut length = 0;
    loop {
        let action = if eps > 0.0 && rng.gen::<f64>() < eps {
            rng.gen_range(0..env.action_count())
        } else {
            controller.act(&obs)?
        };
        let step = env.step(action)?;
        visit(&env);
        ret += step.reward as f64;
        length += 1;
        if step.terminal || step.truncated {
            return Ok(Episode { ret, length, terminated: step.terminal });
        }
        obs = step.obs;
    }
}

/// Evaluate `controller` for `episodes` seeded episodes (in parallel).
pub fn evaluate_policy(
    spec: &EnvSpec,
    controller: &(impl Controller + Sync + ?Sized),
    episodes: usize,
    eps: f64,
    seed: u64,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(DacError::Config("episodes must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(DacError::Config(format!("eps {eps} outside [0, 1]")));
    }
    let results: Result<Vec<Episode>> = episode_seeds(seed, episodes)
        .into_par_iter()
        .map(|s| run_episode(spec, controller, eps, s, |_| {}))
        .collect();
    Ok(EvalReport::from_episodes(results?))
}

/// Controller following the environment's scripted expert.
#[derive(Debug, Clone)]
pub struct ScriptedController {
    spec: EnvSpec,
}

impl ScriptedController {
    pub fn new(spec: &EnvSpec) -> Self {
        ScriptedController { spec: spec.clone() }
    }
}

impl Controller for ScriptedController {
    fn act(&self, obs: &[f32]) -> Result<usize> {
        match &self.spec {
            EnvSpec::CartPole => {
                let mut c = CartPole::default();
                for (s, &o) in c.state.iter_mut().zip(obs) {
                    *s = o as f64;
                }
                Ok(c.expert_action())
            }
            EnvSpec::Grid { layout, .. } => {
                let mut g = GridWorld::new(layout.clone(), 0.0, false)?;
                let x = (obs[0] * (layout.width - 1) as f32).round() as usize;
                let y = (obs[1] * (layout.height - 1) as f32).round() as usize;
                let heading = HEADINGS
                    .iter()
                    .position(|&(dx, dy)| dx as f32 == obs[2].round() && -dy as f32 == obs[3].round())
                    .unwrap_or(0);
                g.pos = (x, y);
                g.heading = heading;
                Ok(g.expert_action())
            }
        }
    }
}

/// Uniformly random actions from a per-observation hash (deterministic).
#[derive(Debug, Clone, Copy)]
pub struct RandomController {
    pub action_count: usize,
    pub seed: u64,
}

impl Controller for RandomController {
    fn act(&self, obs: &[f32]) -> Result<usize> {
        let mut h = self.seed;
        for x in obs {
            h = (h ^ x.to_bits() as u64).wrapping_mul(0x100_0000_01B3);
        }
        Ok(ChaCha8Rng::seed_from_u64(h).gen_range(0..self.action_count))
    }
}
