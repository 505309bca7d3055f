//! C ABI over the allact library.
//!
//! Every function returns an [`AllactStatus`]. On failure a description is
//! kept in a thread-local slot readable with [`allact_last_error`]. Experiments
//! are opaque handles created from TOML text and released with
//! [`allact_experiment_free`]. Panics never cross the boundary; they surface as
//! [`AllactStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use allact::analysis::{fit_inverse_n, mse_sweep, reference_gradient, MseRow};
use allact::config::ExperimentConfig;
use allact::envs::rollout;
use allact::error::Error;
use allact::estimators::{trajectory_estimate, EstimatorKind};
use allact::rng;
use allact::trainer::{steps_to_solve, train_agent, Agent, RunRecord};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllactStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Argument = 4,
    Numeric = 5,
    Unsupported = 6,
    Io = 7,
    /// An output buffer is shorter than required.
    BufferTooSmall = 8,
    Panic = 9,
}

/// Opaque experiment: a resolved config and the agent of the last training run.
pub struct AllactExperiment {
    config: ExperimentConfig,
    agent: Option<Agent>,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut e = e.borrow_mut();
        e.clear();
        e.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn status_of(err: &Error) -> AllactStatus {
    match err {
        Error::Config(_) => AllactStatus::Config,
        Error::Io { .. } => AllactStatus::Io,
        Error::Unsupported(_) => AllactStatus::Unsupported,
        e if e.is_numeric() => AllactStatus::Numeric,
        _ => AllactStatus::Argument,
    }
}

struct Failure(AllactStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: AllactStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, recording any error or panic in the thread-local slot.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AllactStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AllactStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("panic: {msg}"));
            AllactStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(AllactStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AllactStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a>(h: *mut AllactExperiment) -> Result<&'a mut AllactExperiment, Failure> {
    h.as_mut().ok_or_else(|| fail(AllactStatus::NullPointer, "experiment handle is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(AllactStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len < need {
        return Err(fail(
            AllactStatus::BufferTooSmall,
            format!("{what} holds {len} values, {need} needed"),
        ));
    }
    if need == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(AllactStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(fail(AllactStatus::NullPointer, format!("{what} is null")));
    }
    p.write(value);
    Ok(())
}

/// Copies the last error message of this thread into `buf` as a NUL-terminated
/// string, truncating to `len - 1` bytes. Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn allact_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = e.len().min(len - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

/// Creates an experiment from TOML text layered over the preset named by
/// `env.kind`.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn allact_experiment_new(
    config_toml: *const c_char,
    out: *mut *mut AllactExperiment,
) -> AllactStatus {
    guard(|| {
        let config = ExperimentConfig::from_toml_str(text(config_toml, "config")?)?;
        config.validate()?;
        let h = Box::into_raw(Box::new(AllactExperiment { config, agent: None }));
        write_out(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// Creates an experiment from a named preset (`bandit`, `lqr`, `pendulum`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn allact_experiment_preset(
    name: *const c_char,
    out: *mut *mut AllactExperiment,
) -> AllactStatus {
    guard(|| {
        let config = ExperimentConfig::preset(text(name, "preset name")?)?;
        let h = Box::into_raw(Box::new(AllactExperiment { config, agent: None }));
        write_out(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// Releases an experiment. Null is ignored.
///
/// # Safety
/// `h` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn allact_experiment_free(h: *mut AllactExperiment) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of policy parameters, the length of every gradient.
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn allact_param_dim(h: *mut AllactExperiment, out: *mut usize) -> AllactStatus {
    guard(|| {
        let exp = handle(h)?;
        let agent = current_agent(exp, exp.config.seed)?;
        write_out(out, agent.policy.param_dim(), "out")
    })
}

fn current_agent(exp: &AllactExperiment, seed: u64) -> Result<Agent, Failure> {
    match &exp.agent {
        Some(a) => Ok(a.clone()),
        None => Ok(Agent::init(&exp.config, seed)?),
    }
}

/// Trains one run of `episodes` episodes with the configured estimator and
/// keeps the resulting agent in the handle.
///
/// Writes per-episode scores and cumulative environment steps (each buffer
/// needs `episodes` slots) and the number of completed episodes to `written`.
/// A run stopped by a numeric failure still writes its episodes and returns
/// `Numeric`.
///
/// # Safety
/// Buffers must be valid for their stated lengths; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn allact_train(
    h: *mut AllactExperiment,
    seed: u64,
    episodes: usize,
    scores: *mut f64,
    scores_len: usize,
    env_steps: *mut u64,
    env_steps_len: usize,
    written: *mut usize,
) -> AllactStatus {
    guard(|| {
        let exp = handle(h)?;
        let scores = slice_mut(scores, scores_len, episodes, "scores")?;
        let steps = slice_mut(env_steps, env_steps_len, episodes, "env_steps")?;
        let mut cfg = exp.config.clone();
        cfg.train.episodes = episodes;
        cfg.train.window = cfg.train.window.min(episodes.max(1));
        let (record, agent) = train_agent(&cfg, seed)?;
        scores[..record.episodes()].copy_from_slice(&record.scores);
        steps[..record.episodes()].copy_from_slice(&record.env_steps);
        write_out(written, record.episodes(), "written")?;
        exp.agent = Some(agent);
        match record.failure {
            Some(f) => Err(fail(AllactStatus::Numeric, f)),
            None => Ok(()),
        }
    })
}

/// One gradient estimate over a fresh rollout of the current agent.
///
/// `estimator` is `reinforce`, `mc-<N>` or `quad-<N>`. `grad` needs
/// [`allact_param_dim`] slots. Results depend only on the handle and `seed`.
///
/// # Safety
/// `estimator` must be a NUL-terminated string and `grad` valid for `grad_len`.
#[no_mangle]
pub unsafe extern "C" fn allact_estimate(
    h: *mut AllactExperiment,
    estimator: *const c_char,
    seed: u64,
    grad: *mut f64,
    grad_len: usize,
) -> AllactStatus {
    guard(|| {
        let exp = handle(h)?;
        let kind: EstimatorKind = text(estimator, "estimator")?.parse()?;
        let agent = current_agent(exp, exp.config.seed)?;
        let out = slice_mut(grad, grad_len, agent.policy.param_dim(), "grad")?;
        let spec = exp.config.env_spec()?;
        let mut r = rng::from_seed(seed);
        let traj = rollout(&spec, &agent.policy, &mut r)?;
        let est = trajectory_estimate(kind, &traj, &agent.policy, &agent.critics, &agent.critics, &mut r)?;
        out[..est.grad.len()].copy_from_slice(&est.grad);
        Ok(())
    })
}

/// Monte Carlo gradient MSE of the current agent for each `ns[i]` against a
/// REINFORCE reference of `sweep.reference_rollouts` rollouts.
///
/// # Safety
/// `ns` must hold `n` values; `mse` and `se` must each hold `n` slots.
#[no_mangle]
pub unsafe extern "C" fn allact_mse_sweep(
    h: *mut AllactExperiment,
    ns: *const usize,
    n: usize,
    estimates: usize,
    seed: u64,
    mse: *mut f64,
    se: *mut f64,
) -> AllactStatus {
    guard(|| {
        let exp = handle(h)?;
        let ns = slice(ns, n, "ns")?;
        let mse = slice_mut(mse, n, n, "mse")?;
        let se = slice_mut(se, n, n, "se")?;
        let agent = current_agent(exp, exp.config.seed)?;
        let spec = exp.config.env_spec()?;
        let mut r = rng::from_seed(seed);
        let reference =
            reference_gradient(&spec, &agent.policy, &agent.critics, exp.config.sweep.reference_rollouts, &mut r)?;
        let rows = mse_sweep(&spec, &agent.policy, &agent.critics, ns, estimates, &reference, &mut r)?;
        for (i, row) in rows.iter().enumerate() {
            mse[i] = row.mse;
            se[i] = row.se;
        }
        Ok(())
    })
}

/// Least-squares fit `mse ≈ c0 + c1 / N_S` with its R².
///
/// # Safety
/// `ns` and `mse` must hold `n` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn allact_fit_inverse_n(
    ns: *const usize,
    mse: *const f64,
    n: usize,
    c0: *mut f64,
    c1: *mut f64,
    r_squared: *mut f64,
) -> AllactStatus {
    guard(|| {
        let ns = slice(ns, n, "ns")?;
        let mse = slice(mse, n, "mse")?;
        if ns.contains(&0) {
            return Err(fail(AllactStatus::Argument, "N_S must be ≥ 1"));
        }
        let rows: Vec<MseRow> = ns
            .iter()
            .zip(mse)
            .map(|(&n_s, &m)| MseRow {
                n_s,
                mse: m,
                n_estimates: 0,
                se: 0.0,
                reference_norm: 0.0,
            })
            .collect();
        let fit = fit_inverse_n(&rows)?;
        write_out(c0, fit.c0, "c0")?;
        write_out(c1, fit.c1, "c1")?;
        write_out(r_squared, fit.r_squared, "r_squared")
    })
}

/// Environment steps at the first episode whose trailing `window`-episode
/// mean score reaches `threshold`. `solved` is set to 0 when never reached.
///
/// # Safety
/// `scores` and `env_steps` must hold `n` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn allact_steps_to_solve(
    scores: *const f64,
    env_steps: *const u64,
    n: usize,
    threshold: f64,
    window: usize,
    solved: *mut u8,
    steps: *mut u64,
) -> AllactStatus {
    guard(|| {
        let record = RunRecord {
            seed: 0,
            estimator: String::new(),
            scores: slice(scores, n, "scores")?.to_vec(),
            discounted_returns: vec![0.0; n],
            env_steps: slice(env_steps, n, "env_steps")?.to_vec(),
            episode_seconds: vec![0.0; n],
            final_digest: String::new(),
            failure: None,
        };
        let s = steps_to_solve(&record, threshold, window);
        write_out(solved, u8::from(s.is_some()), "solved")?;
        write_out(steps, s.unwrap_or(0), "steps")
    })
}
