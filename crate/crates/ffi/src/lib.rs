//! C ABI over the `dacmdp` library.
//!
//! Every fallible function returns a [`DacmdpStatus`]; on failure the message
//! is available from [`dacmdp_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function. Handles are
//! immutable after creation and may be shared across threads for reading.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dacmdp::compiler::{CoreStates, DacConfig};
use dacmdp::error::ErrorCategory;
use dacmdp::solver::{solve_parallel, value_iterate, SolveOptions, SolveResult};
use dacmdp::whatif::{policy_settings, ModifierSpec};
use dacmdp::{CoreMdp, DacError, Dataset, DatasetFormat, NeighborIndex, PolicyHandle, PolicySettings};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DacmdpStatus {
    Ok = 0,
    /// Invalid parameter value.
    ErrConfig = 1,
    /// Malformed or inconsistent data.
    ErrData = 2,
    /// Non-finite values or divergence.
    ErrNumeric = 3,
    /// File could not be read or written.
    ErrIo = 4,
    /// A required pointer argument was null.
    ErrNull = 5,
    /// Internal panic caught at the boundary.
    ErrPanic = 6,
}

/// Dataset file format selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DacmdpFormat {
    /// Chosen from the file extension.
    Auto = 0,
    Jsonl = 1,
    Binary = 2,
}

/// Compilation and solve settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DacmdpConfig {
    pub k: usize,
    pub k_pi: usize,
    pub cost: f64,
    pub gamma: f64,
    pub weighted: bool,
    pub sknn: bool,
    pub delta_min: f64,
    pub max_iters: usize,
}

impl From<DacmdpConfig> for DacConfig {
    fn from(c: DacmdpConfig) -> Self {
        DacConfig {
            k: c.k,
            k_pi: c.k_pi,
            cost: c.cost,
            gamma: c.gamma,
            weighted: c.weighted,
            sknn: c.sknn,
            delta_min: c.delta_min,
            max_iters: c.max_iters,
            ..DacConfig::default()
        }
    }
}

pub struct DacmdpDataset {
    ds: Dataset,
}

pub struct DacmdpMdp {
    mdp: CoreMdp,
}

pub struct DacmdpSolution {
    res: SolveResult,
}

pub struct DacmdpPolicy {
    ds: Dataset,
    idx: NeighborIndex,
    core: CoreStates,
    res: SolveResult,
    settings: PolicySettings,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &DacError) -> DacmdpStatus {
    match e.category() {
        ErrorCategory::Config => DacmdpStatus::ErrConfig,
        ErrorCategory::Data => DacmdpStatus::ErrData,
        ErrorCategory::Numeric => DacmdpStatus::ErrNumeric,
        ErrorCategory::Io => DacmdpStatus::ErrIo,
    }
}

enum Fail {
    Dac(DacError),
    Null(&'static str),
}

impl From<DacError> for Fail {
    fn from(e: DacError) -> Self {
        Fail::Dac(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DacmdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DacmdpStatus::Ok,
        Ok(Err(Fail::Dac(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            DacmdpStatus::ErrNull
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            DacmdpStatus::ErrPanic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Dac(DacError::Config(format!("{what} is not valid UTF-8"))))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread ("" if none). Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dacmdp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dacmdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn dacmdp_config_default() -> DacmdpConfig {
    let d = DacConfig::default();
    DacmdpConfig {
        k: d.k,
        k_pi: d.k_pi,
        cost: d.cost,
        gamma: d.gamma,
        weighted: d.weighted,
        sknn: d.sknn,
        delta_min: d.delta_min,
        max_iters: d.max_iters,
    }
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_dataset_load(
    path: *const c_char,
    format: DacmdpFormat,
    out: *mut *mut DacmdpDataset,
) -> DacmdpStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let format = match format {
            DacmdpFormat::Auto => DatasetFormat::from_path(&path),
            DacmdpFormat::Jsonl => DatasetFormat::Jsonl,
            DacmdpFormat::Binary => DatasetFormat::Binary,
        };
        let ds = Dataset::load(&path, format)?;
        put(out, DacmdpDataset { ds }, "out")
    })
}

/// Number of tuples (0 for a null handle).
#[no_mangle]
pub unsafe extern "C" fn dacmdp_dataset_len(ds: *const DacmdpDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.ds.len())
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_dataset_state_dim(ds: *const DacmdpDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.ds.state_dim())
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_dataset_free(ds: *mut DacmdpDataset) {
    free(ds)
}

/// Compile `ds` into a core MDP.
#[no_mangle]
pub unsafe extern "C" fn dacmdp_compile(
    ds: *const DacmdpDataset,
    config: *const DacmdpConfig,
    out: *mut *mut DacmdpMdp,
) -> DacmdpStatus {
    guard(|| {
        let ds = &as_ref(ds, "ds")?.ds;
        let cfg: DacConfig = (*as_ref(config, "config")?).into();
        cfg.validate()?;
        let idx = NeighborIndex::build(ds);
        let mdp = dacmdp::compile(ds, &idx, &cfg)?;
        put(out, DacmdpMdp { mdp }, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_mdp_load(path: *const c_char, out: *mut *mut DacmdpMdp) -> DacmdpStatus {
    guard(|| {
        let mdp = CoreMdp::load(path_arg(path, "path")?)?;
        put(out, DacmdpMdp { mdp }, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_mdp_save(mdp: *const DacmdpMdp, path: *const c_char) -> DacmdpStatus {
    guard(|| {
        let mdp = &as_ref(mdp, "mdp")?.mdp;
        mdp.save(path_arg(path, "path")?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_mdp_n_states(mdp: *const DacmdpMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.mdp.n_states)
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_mdp_n_actions(mdp: *const DacmdpMdp) -> usize {
    mdp.as_ref().map_or(0, |m| m.mdp.n_actions)
}

/// New MDP with `modifier` (`action_penalty:<a>:<p>`, `discount:<g>` or
/// `slip:<p>`, numeric actions) applied. The input is left unchanged.
#[no_mangle]
pub unsafe extern "C" fn dacmdp_mdp_apply_modifier(
    mdp: *const DacmdpMdp,
    modifier: *const c_char,
    out: *mut *mut DacmdpMdp,
) -> DacmdpStatus {
    guard(|| {
        let mdp = &as_ref(mdp, "mdp")?.mdp;
        if modifier.is_null() {
            return Err(Fail::Null("modifier"));
        }
        let text = CStr::from_ptr(modifier)
            .to_str()
            .map_err(|_| Fail::Dac(DacError::Config("modifier is not valid UTF-8".into())))?;
        let spec: ModifierSpec = text.parse()?;
        put(out, DacmdpMdp { mdp: spec.apply(mdp)? }, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_mdp_free(mdp: *mut DacmdpMdp) {
    free(mdp)
}

/// Solve with value iteration. `gamma < 0` uses the MDP's stored discount;
/// `threads == 0` uses the global worker pool.
#[no_mangle]
pub unsafe extern "C" fn dacmdp_solve(
    mdp: *const DacmdpMdp,
    gamma: f64,
    delta_min: f64,
    max_iters: usize,
    threads: usize,
    out: *mut *mut DacmdpSolution,
) -> DacmdpStatus {
    guard(|| {
        let mdp = &as_ref(mdp, "mdp")?.mdp;
        let mut opts = SolveOptions::from_config(&mdp.config);
        if gamma >= 0.0 || gamma.is_nan() {
            opts.gamma = gamma;
        }
        opts.delta_min = delta_min;
        opts.max_iters = max_iters;
        let res = if threads == 0 { value_iterate(mdp, &opts)? } else { solve_parallel(mdp, &opts, threads)? };
        put(out, DacmdpSolution { res }, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_solution_load(path: *const c_char, out: *mut *mut DacmdpSolution) -> DacmdpStatus {
    guard(|| {
        let res = SolveResult::load(path_arg(path, "path")?)?;
        put(out, DacmdpSolution { res }, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_solution_save(sol: *const DacmdpSolution, path: *const c_char) -> DacmdpStatus {
    guard(|| {
        let sol = &as_ref(sol, "solution")?.res;
        sol.save(path_arg(path, "path")?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_solution_iterations(sol: *const DacmdpSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.res.iterations)
}

/// Final sup-norm residual (NaN for a null handle).
#[no_mangle]
pub unsafe extern "C" fn dacmdp_solution_residual(sol: *const DacmdpSolution) -> f64 {
    sol.as_ref().map_or(f64::NAN, |s| s.res.residual)
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_solution_converged(sol: *const DacmdpSolution) -> bool {
    sol.as_ref().is_some_and(|s| s.res.converged)
}

/// Copy V into `out` (capacity `len`, must be at least the state count).
#[no_mangle]
pub unsafe extern "C" fn dacmdp_solution_values(sol: *const DacmdpSolution, out: *mut f64, len: usize) -> DacmdpStatus {
    guard(|| {
        let v = &as_ref(sol, "solution")?.res.v;
        copy_out(v, out, len)
    })
}

/// Copy the row-major `n_states × n_actions` Q table into `out`.
#[no_mangle]
pub unsafe extern "C" fn dacmdp_solution_q(sol: *const DacmdpSolution, out: *mut f64, len: usize) -> DacmdpStatus {
    guard(|| {
        let q = &as_ref(sol, "solution")?.res.q;
        copy_out(q, out, len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_solution_free(sol: *mut DacmdpSolution) {
    free(sol)
}

unsafe fn copy_out(src: &[f64], out: *mut f64, len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    if len < src.len() {
        return Err(Fail::Dac(DacError::Config(format!("output buffer holds {len} values, {} needed", src.len()))));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

/// Lookahead policy over a solved MDP. `ds` must be the dataset the MDP was
/// compiled from; modifiers recorded on the MDP are honored. The policy keeps
/// its own copies, so the inputs may be freed afterwards.
#[no_mangle]
pub unsafe extern "C" fn dacmdp_policy_new(
    ds: *const DacmdpDataset,
    mdp: *const DacmdpMdp,
    sol: *const DacmdpSolution,
    out: *mut *mut DacmdpPolicy,
) -> DacmdpStatus {
    guard(|| {
        let ds = &as_ref(ds, "ds")?.ds;
        let mdp = &as_ref(mdp, "mdp")?.mdp;
        let res = &as_ref(sol, "solution")?.res;
        let core = CoreStates::from_dataset(ds);
        if core.len() != mdp.n_states || core.vectors != mdp.state_vectors {
            return Err(Fail::Dac(DacError::Config("MDP was not compiled from this dataset".into())));
        }
        if res.n_states() != mdp.n_states || res.n_actions != mdp.n_actions {
            return Err(Fail::Dac(DacError::Config("solution does not match the MDP".into())));
        }
        let p = DacmdpPolicy {
            idx: NeighborIndex::build(ds),
            ds: ds.clone(),
            core,
            res: res.clone(),
            settings: policy_settings(mdp),
        };
        p.handle()?;
        put(out, p, "out")
    })
}

impl DacmdpPolicy {
    fn handle(&self) -> dacmdp::Result<PolicyHandle<'_>> {
        PolicyHandle::new(&self.ds, &self.idx, &self.core, &self.res, self.settings.clone())
    }
}

unsafe fn obs_arg<'a>(obs: *const f32, len: usize) -> Result<&'a [f32], Fail> {
    if obs.is_null() {
        return Err(Fail::Null("obs"));
    }
    Ok(std::slice::from_raw_parts(obs, len))
}

/// Greedy action for the observation `obs[0..len]`.
#[no_mangle]
pub unsafe extern "C" fn dacmdp_policy_act(
    policy: *const DacmdpPolicy,
    obs: *const f32,
    len: usize,
    action: *mut usize,
) -> DacmdpStatus {
    guard(|| {
        let p = as_ref(policy, "policy")?;
        let obs = obs_arg(obs, len)?;
        if action.is_null() {
            return Err(Fail::Null("action"));
        }
        *action = p.handle()?.act_greedy(obs)?;
        Ok(())
    })
}

/// Per-action scores for `obs` written to `out` (capacity `out_len`).
#[no_mangle]
pub unsafe extern "C" fn dacmdp_policy_scores(
    policy: *const DacmdpPolicy,
    obs: *const f32,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> DacmdpStatus {
    guard(|| {
        let p = as_ref(policy, "policy")?;
        let obs = obs_arg(obs, len)?;
        let scores = p.handle()?.action_scores(obs)?;
        copy_out(&scores, out, out_len)
    })
}

#[no_mangle]
pub unsafe extern "C" fn dacmdp_policy_free(policy: *mut DacmdpPolicy) {
    free(policy)
}
