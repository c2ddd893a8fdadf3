//! Experience datasets: validated storage, JSONL/binary persistence and
//! seeded generation from the bundled environments.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, EnvironmentHandle};
use crate::error::{DacError, Result};

const BINARY_MAGIC: &[u8; 4] = b"DACD";
const BINARY_VERSION: u32 = 1;

/// One `(s, a, r, s', terminal)` transition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperienceTuple {
    pub state: Vec<f32>,
    pub action: usize,
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Jsonl,
    Binary,
}

impl DatasetFormat {
    /// `.jsonl`/`.json` map to JSONL, everything else to binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DatasetFormat::Jsonl,
            _ => DatasetFormat::Binary,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = DacError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(DatasetFormat::Jsonl),
            "binary" | "bin" => Ok(DatasetFormat::Binary),
            other => Err(DacError::Config(format!(
                "unknown dataset format {other:?} (expected jsonl or binary)"
            ))),
        }
    }
}

/// Options applied while loading. Nothing is transformed unless asked for.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Clip every reward into `[lo, hi]`.
    pub clip_rewards: Option<(f32, f32)>,
}

/// An immutable, validated experience dataset stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    state_dim: usize,
    action_count: usize,
    states: Vec<f32>,
    actions: Vec<u32>,
    rewards: Vec<f32>,
    next_states: Vec<f32>,
    terminals: Vec<bool>,
    pub metadata: BTreeMap<String, String>,
}

impl Dataset {
    pub fn from_tuples(tuples: Vec<ExperienceTuple>, action_count: usize) -> Result<Self> {
        let first = tuples.first().ok_or(DacError::EmptyDataset)?;
        let mut builder = DatasetBuilder::new(first.state.len(), action_count);
        for t in &tuples {
            builder.push(&t.state, t.action, t.reward, &t.next_state, t.terminal)?;
        }
        builder.finish()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn state(&self, i: usize) -> &[f32] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f32] {
        &self.next_states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> usize {
        self.actions[i] as usize
    }

    pub fn reward(&self, i: usize) -> f32 {
        self.rewards[i]
    }

    pub fn terminal(&self, i: usize) -> bool {
        self.terminals[i]
    }

    /// Row-major `len × state_dim` source states.
    pub fn states(&self) -> &[f32] {
        &self.states
    }

    pub fn next_states(&self) -> &[f32] {
        &self.next_states
    }

    pub fn tuple(&self, i: usize) -> ExperienceTuple {
        ExperienceTuple {
            state: self.state(i).to_vec(),
            action: self.action(i),
            reward: self.reward(i),
            next_state: self.next_state(i).to_vec(),
            terminal: self.terminal(i),
        }
    }

    pub fn tuples(&self) -> impl Iterator<Item = ExperienceTuple> + '_ {
        (0..self.len()).map(|i| self.tuple(i))
    }

    /// Number of tuples recorded for each action.
    pub fn action_support(&self) -> Vec<usize> {
        let mut counts = vec![0; self.action_count];
        for &a in &self.actions {
            counts[a as usize] += 1;
        }
        counts
    }

    /// The first `n` tuples (clamped to the dataset size).
    pub fn prefix(&self, n: usize) -> Result<Self> {
        self.select((0..n.min(self.len())).collect::<Vec<_>>().as_slice())
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut builder = DatasetBuilder::new(self.state_dim, self.action_count);
        for &i in indices {
            builder.push(
                self.state(i),
                self.action(i),
                self.reward(i),
                self.next_state(i),
                self.terminal(i),
            )?;
        }
        let mut ds = builder.finish()?;
        ds.metadata = self.metadata.clone();
        Ok(ds)
    }

    /// Replace every state and next state by `f(state)`.
    pub fn map_states<F>(&self, out_dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f32]) -> Result<Vec<f32>>,
    {
        let mut builder = DatasetBuilder::new(out_dim, self.action_count);
        for i in 0..self.len() {
            let s = f(self.state(i))?;
            let s2 = f(self.next_state(i))?;
            builder.push(&s, self.action(i), self.reward(i), &s2, self.terminal(i))?;
        }
        let mut ds = builder.finish()?;
        ds.metadata = self.metadata.clone();
        Ok(ds)
    }

    /// Replace every reward by `f(reward)`.
    pub fn map_rewards(&self, f: impl Fn(f32) -> f32) -> Self {
        let mut ds = self.clone();
        ds.rewards.iter_mut().for_each(|r| *r = f(*r));
        ds
    }

    pub fn load(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Self> {
        Self::load_with(path, format, LoadOptions::default())
    }

    pub fn load_with(path: impl AsRef<Path>, format: DatasetFormat, opts: LoadOptions) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| DacError::io(path, e))?;
        let mut ds = match format {
            DatasetFormat::Jsonl => read_jsonl(path, BufReader::new(file))?,
            DatasetFormat::Binary => read_binary(path, BufReader::new(file))?,
        };
        if let Some((lo, hi)) = opts.clip_rewards {
            if !(lo <= hi) {
                return Err(DacError::Config(format!("reward clip range [{lo}, {hi}] is empty")));
            }
            for r in &mut ds.rewards {
                *r = r.clamp(lo, hi);
            }
        }
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: DatasetFormat) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| DacError::io(path, e))?;
        let mut w = BufWriter::new(file);
        match format {
            DatasetFormat::Jsonl => self.write_jsonl(&mut w),
            DatasetFormat::Binary => self.write_binary(&mut w),
        }
        .and_then(|_| w.flush())
        .map_err(|e| DacError::io(path, e))
    }

    fn write_jsonl<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let header = JsonlHeader {
            action_count: self.action_count,
            state_dim: self.state_dim,
            metadata: self.metadata.clone(),
        };
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
        for i in 0..self.len() {
            // f32 values are widened to f64 so the decimal text parses back
            // to the identical bit pattern.
            let rec = JsonlRecordOut {
                s: self.state(i).iter().map(|&x| x as f64).collect(),
                a: self.action(i),
                r: self.reward(i) as f64,
                s2: self.next_state(i).iter().map(|&x| x as f64).collect(),
                t: self.terminal(i),
            };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    fn write_binary<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&(self.action_count as u32).to_le_bytes())?;
        w.write_all(&(self.state_dim as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for i in 0..self.len() {
            for x in self.state(i) {
                w.write_all(&x.to_le_bytes())?;
            }
            w.write_all(&self.actions[i].to_le_bytes())?;
            w.write_all(&self.rewards[i].to_le_bytes())?;
            for x in self.next_state(i) {
                w.write_all(&x.to_le_bytes())?;
            }
            w.write_all(&[self.terminals[i] as u8])?;
        }
        Ok(())
    }
}

/// Incremental, validating constructor.
pub struct DatasetBuilder {
    ds: Dataset,
}

impl DatasetBuilder {
    pub fn new(state_dim: usize, action_count: usize) -> Self {
        DatasetBuilder {
            ds: Dataset {
                state_dim,
                action_count,
                states: Vec::new(),
                actions: Vec::new(),
                rewards: Vec::new(),
                next_states: Vec::new(),
                terminals: Vec::new(),
                metadata: BTreeMap::new(),
            },
        }
    }

    pub fn push(&mut self, state: &[f32], action: usize, reward: f32, next_state: &[f32], terminal: bool) -> Result<()> {
        let d = self.ds.state_dim;
        for v in [state, next_state] {
            if v.len() != d {
                return Err(DacError::DimensionMismatch { expected: d, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(DacError::NonFinite(format!("state vector of tuple {}", self.ds.len())));
            }
        }
        if !reward.is_finite() {
            return Err(DacError::NonFinite(format!("reward of tuple {}", self.ds.len())));
        }
        if action >= self.ds.action_count {
            return Err(DacError::ActionOutOfRange { action, action_count: self.ds.action_count });
        }
        self.ds.states.extend_from_slice(state);
        self.ds.actions.push(action as u32);
        self.ds.rewards.push(reward);
        self.ds.next_states.extend_from_slice(next_state);
        self.ds.terminals.push(terminal);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ds.is_empty()
    }

    pub fn finish(self) -> Result<Dataset> {
        if self.ds.is_empty() {
            return Err(DacError::EmptyDataset);
        }
        Ok(self.ds)
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    action_count: usize,
    state_dim: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct JsonlRecord {
    s: Vec<f32>,
    a: usize,
    r: f32,
    s2: Vec<f32>,
    #[serde(default)]
    t: bool,
}

#[derive(Serialize)]
struct JsonlRecordOut {
    s: Vec<f64>,
    a: usize,
    r: f64,
    s2: Vec<f64>,
    t: bool,
}

fn read_jsonl<R: BufRead>(path: &Path, reader: R) -> Result<Dataset> {
    let parse_err = |line: usize, msg: String| DacError::Parse { path: path.to_path_buf(), line, msg };

    let mut header: Option<JsonlHeader> = None;
    let mut records: Vec<(usize, JsonlRecord)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| DacError::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if header.is_none() && records.is_empty() && trimmed.contains("\"action_count\"") {
            let h: JsonlHeader = serde_json::from_str(trimmed).map_err(|e| parse_err(lineno, e.to_string()))?;
            header = Some(h);
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(trimmed).map_err(|e| parse_err(lineno, e.to_string()))?;
        records.push((lineno, rec));
    }
    if records.is_empty() {
        return Err(DacError::EmptyDataset);
    }

    let (action_count, state_dim, metadata) = match header {
        Some(h) => (h.action_count, h.state_dim, h.metadata),
        None => {
            let max_a = records.iter().map(|(_, r)| r.a).max().unwrap_or(0);
            (max_a + 1, records[0].1.s.len(), BTreeMap::new())
        }
    };

    let mut builder = DatasetBuilder::new(state_dim, action_count);
    for (lineno, rec) in records {
        builder
            .push(&rec.s, rec.a, rec.r, &rec.s2, rec.t)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
    }
    let mut ds = builder.finish()?;
    ds.metadata = metadata;
    Ok(ds)
}

struct ByteReader<'p, R> {
    inner: R,
    offset: u64,
    path: &'p Path,
}

impl<R: Read> ByteReader<'_, R> {
    fn err(&self, msg: impl Into<String>) -> DacError {
        DacError::Binary { path: self.path.to_path_buf(), offset: self.offset, msg: msg.into() }
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| self.err(format!("truncated input: {e}")))?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        self.bytes::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.bytes::<8>().map(u64::from_le_bytes)
    }

    fn f32(&mut self) -> Result<f32> {
        self.bytes::<4>().map(f32::from_le_bytes)
    }
}

fn read_binary<R: Read>(path: &Path, reader: R) -> Result<Dataset> {
    let mut r = ByteReader { inner: reader, offset: 0, path };
    if &r.bytes::<4>()? != BINARY_MAGIC {
        return Err(r.err("bad magic, expected \"DACD\""));
    }
    let version = r.u32()?;
    if version != BINARY_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let action_count = r.u32()? as usize;
    let state_dim = r.u32()? as usize;
    let count = r.u64()?;

    let mut builder = DatasetBuilder::new(state_dim, action_count);
    let mut s = vec![0f32; state_dim];
    let mut s2 = vec![0f32; state_dim];
    for _ in 0..count {
        let record_offset = r.offset;
        for x in s.iter_mut() {
            *x = r.f32()?;
        }
        let a = r.u32()? as usize;
        let reward = r.f32()?;
        for x in s2.iter_mut() {
            *x = r.f32()?;
        }
        let t = r.bytes::<1>()?[0];
        if t > 1 {
            return Err(r.err(format!("terminal flag byte {t} is not 0 or 1")));
        }
        builder.push(&s, a, reward, &s2, t == 1).map_err(|e| DacError::Binary {
            path: path.to_path_buf(),
            offset: record_offset,
            msg: e.to_string(),
        })?;
    }
    builder.finish()
}

/// Behavior policy used to collect a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorPolicy {
    /// Uniform random actions.
    Random,
    /// The environment's scripted near-optimal controller.
    Scripted,
    /// Each episode draws one ε from the list and follows ε-greedy around the
    /// scripted controller for the whole episode.
    EpsMixture { eps: Vec<f64> },
}

impl BehaviorPolicy {
    /// ε values used for the mixed-bag datasets.
    pub fn mixed_bag() -> Self {
        BehaviorPolicy::EpsMixture { eps: vec![0.0, 0.1, 0.2, 0.4, 0.6, 1.0] }
    }

    fn episode_eps(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            BehaviorPolicy::Random => 1.0,
            BehaviorPolicy::Scripted => 0.0,
            BehaviorPolicy::EpsMixture { eps } => eps[rng.gen_range(0..eps.len())],
        }
    }

    fn validate(&self) -> Result<()> {
        if let BehaviorPolicy::EpsMixture { eps } = self {
            if eps.is_empty() || eps.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return Err(DacError::Config("eps mixture needs a non-empty list of values in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        match self {
            BehaviorPolicy::Random => "random".into(),
            BehaviorPolicy::Scripted => "scripted".into(),
            BehaviorPolicy::EpsMixture { eps } => {
                let parts: Vec<String> = eps.iter().map(|e| e.to_string()).collect();
                format!("eps_mixture[{}]", parts.join(","))
            }
        }
    }
}

impl FromStr for BehaviorPolicy {
    type Err = DacError;

    /// `random`, `scripted` (alias `optimal`), `mixed`, or `eps:0.1,0.5`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(BehaviorPolicy::Random),
            "scripted" | "optimal" => Ok(BehaviorPolicy::Scripted),
            "mixed" => Ok(BehaviorPolicy::mixed_bag()),
            other => {
                let list = other
                    .strip_prefix("eps:")
                    .ok_or_else(|| DacError::Config(format!("unknown behavior policy {other:?}")))?;
                let eps = list
                    .split(',')
                    .map(|e| e.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| DacError::Config(format!("bad eps list {list:?}: {e}")))?;
                let p = BehaviorPolicy::EpsMixture { eps };
                p.validate()?;
                Ok(p)
            }
        }
    }
}

/// Roll `steps` transitions of `policy` in a fresh environment built from
/// `env`, restarting whenever an episode terminates or hits the horizon.
pub fn generate(env: &EnvSpec, policy: &BehaviorPolicy, steps: usize, seed: u64) -> Result<Dataset> {
    if steps == 0 {
        return Err(DacError::Config("steps must be >= 1".into()));
    }
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut handle = EnvironmentHandle::new(env)?;
    let mut builder = DatasetBuilder::new(handle.obs_dim(), handle.action_count());

    let mut obs = handle.reset(rng.gen());
    let mut eps = policy.episode_eps(&mut rng);
    while builder.len() < steps {
        let action = if rng.gen::<f64>() < eps {
            rng.gen_range(0..handle.action_count())
        } else {
            handle.expert_action()
        };
        let step = handle.step(action)?;
        builder.push(&obs, action, step.reward, &step.obs, step.terminal)?;
        if step.terminal || step.truncated {
            obs = handle.reset(rng.gen());
            eps = policy.episode_eps(&mut rng);
        } else {
            obs = step.obs;
        }
    }

    let mut ds = builder.finish()?;
    ds.metadata.insert("generator".into(), env.name());
    ds.metadata.insert("policy".into(), policy.name());
    ds.metadata.insert("seed".into(), seed.to_string());
    ds.metadata.insert("steps".into(), steps.to_string());
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let t = |s: f32, a, r, t| ExperienceTuple {
            state: vec![s, 0.0],
            action: a,
            reward: r,
            next_state: vec![s + 1.0, 0.5],
            terminal: t,
        };
        Dataset::from_tuples(vec![t(0.0, 0, 1.0, false), t(1.0, 1, -0.5, false), t(2.0, 0, 0.25, true)], 2).unwrap()
    }

    #[test]
    fn minimal_jsonl_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.jsonl");
        std::fs::write(
            &path,
            "{\"action_count\":2,\"state_dim\":4}\n{\"s\":[0,0,0,0],\"a\":0,\"r\":1.0,\"s2\":[0,0,0,0],\"t\":false}\n",
        )
        .unwrap();
        let ds = Dataset::load(&path, DatasetFormat::Jsonl).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.state_dim(), 4);
        assert_eq!(ds.action_count(), 2);
    }

    #[test]
    fn headerless_jsonl_infers_action_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nohdr.jsonl");
        std::fs::write(
            &path,
            "{\"s\":[1],\"a\":0,\"r\":0,\"s2\":[2],\"t\":false}\n{\"s\":[2],\"a\":3,\"r\":0,\"s2\":[3],\"t\":true}\n",
        )
        .unwrap();
        let ds = Dataset::load(&path, DatasetFormat::Jsonl).unwrap();
        assert_eq!(ds.action_count(), 4);
        assert_eq!(ds.state_dim(), 1);
        assert!(ds.terminal(1));
    }

    #[test]
    fn action_out_of_range_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"action_count\":2,\"state_dim\":1}\n{\"s\":[0],\"a\":5,\"r\":1.0,\"s2\":[0],\"t\":false}\n",
        )
        .unwrap();
        let err = Dataset::load(&path, DatasetFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("action out of range"), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn dimension_mismatch_and_non_finite_are_rejected() {
        let mut b = DatasetBuilder::new(2, 1);
        assert!(matches!(
            b.push(&[0.0], 0, 0.0, &[0.0, 0.0], false),
            Err(DacError::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(b.push(&[0.0, f32::NAN], 0, 0.0, &[0.0, 0.0], false), Err(DacError::NonFinite(_))));
        assert!(matches!(b.push(&[0.0, 0.0], 0, f32::INFINITY, &[0.0, 0.0], false), Err(DacError::NonFinite(_))));
        assert!(matches!(b.finish(), Err(DacError::EmptyDataset)));
    }

    #[test]
    fn jsonl_save_writes_header_plus_one_line_per_tuple() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("three.jsonl");
        let ds = tiny();
        ds.save(&path, DatasetFormat::Jsonl).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().contains("action_count"));
        assert_eq!(Dataset::load(&path, DatasetFormat::Jsonl).unwrap(), ds);
    }

    #[test]
    fn binary_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("three.dacd");
        let ds = tiny();
        ds.save(&path, DatasetFormat::Binary).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DACD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        // per record: 2 f32 + u32 + f32 + 2 f32 + u8
        assert_eq!(bytes.len(), 24 + 3 * (8 + 4 + 4 + 8 + 1));
        let back = Dataset::load(&path, DatasetFormat::Binary).unwrap();
        assert!(back.tuples().eq(ds.tuples()));
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.dacd");
        tiny().save(&path, DatasetFormat::Binary).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = Dataset::load(&path, DatasetFormat::Binary).unwrap_err();
        assert!(matches!(err, DacError::Binary { .. }), "{err}");
    }

    #[test]
    fn reward_clipping_is_opt_in() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.dacd");
        let ds = Dataset::from_tuples(
            vec![ExperienceTuple { state: vec![0.0], action: 0, reward: 7.0, next_state: vec![1.0], terminal: false }],
            1,
        )
        .unwrap();
        ds.save(&path, DatasetFormat::Binary).unwrap();
        assert_eq!(Dataset::load(&path, DatasetFormat::Binary).unwrap().reward(0), 7.0);
        let clipped =
            Dataset::load_with(&path, DatasetFormat::Binary, LoadOptions { clip_rewards: Some((-1.0, 1.0)) }).unwrap();
        assert_eq!(clipped.reward(0), 1.0);
    }

    #[test]
    fn behavior_policy_parsing() {
        assert_eq!("random".parse::<BehaviorPolicy>().unwrap(), BehaviorPolicy::Random);
        assert_eq!("mixed".parse::<BehaviorPolicy>().unwrap(), BehaviorPolicy::mixed_bag());
        assert_eq!(
            "eps:0.1,0.5".parse::<BehaviorPolicy>().unwrap(),
            BehaviorPolicy::EpsMixture { eps: vec![0.1, 0.5] }
        );
        assert!("eps:2".parse::<BehaviorPolicy>().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&EnvSpec::CartPole, &BehaviorPolicy::Random, 100, 7).unwrap();
        let b = generate(&EnvSpec::CartPole, &BehaviorPolicy::Random, 100, 7).unwrap();
        let c = generate(&EnvSpec::CartPole, &BehaviorPolicy::Random, 100, 8).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn single_step_generation() {
        let ds = generate(&EnvSpec::CartPole, &BehaviorPolicy::Scripted, 1, 3).unwrap();
        assert_eq!(ds.len(), 1);
        // a freshly reset pole cannot fall in one step
        assert!(!ds.terminal(0));
    }
}
