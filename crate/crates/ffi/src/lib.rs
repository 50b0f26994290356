//! C ABI over the simulation engine.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every fallible call returns an
//! [`MbStatus`] and leaves a message retrievable with
//! [`mb_last_error_message`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use matchbandit::algorithms::{run, AlgoConfig, RunTrace};
use matchbandit::environment::{generate_instance, instance_from_json, Environment};
use matchbandit::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Runtime = 4,
    Panic = 5,
}

/// A market instance with its feedback streams.
pub struct MbEnvironment {
    env: Environment,
}

/// The record of one completed run.
pub struct MbTrace {
    trace: RunTrace,
    cumulative: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> MbStatus {
    match e {
        Error::Config(_) | Error::Json(_) => MbStatus::Config,
        Error::InvalidArgument(_) | Error::InfeasibleMatching(_) | Error::RankZero => MbStatus::InvalidArgument,
        _ => MbStatus::Runtime,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (MbStatus, String)>) -> MbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MbStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside the engine".into());
            MbStatus::Panic
        }
    }
}

fn lift<T>(r: matchbandit::Result<T>) -> Result<T, (MbStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (MbStatus, String) {
    (MbStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MbStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MbStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Generates a random market with `n_agents` agents, `n_arms` arms,
/// `dim`-dimensional features and capacity `capacity`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mb_environment_generate(
    n_agents: usize,
    n_arms: usize,
    dim: usize,
    capacity: usize,
    seed: u64,
    feedback_seed: u64,
    out: *mut *mut MbEnvironment,
) -> MbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let instance = lift(generate_instance(n_agents, n_arms, dim, capacity, seed))?;
        let env = lift(Environment::new(instance, feedback_seed))?;
        *out = Box::into_raw(Box::new(MbEnvironment { env }));
        Ok(())
    })
}

/// Loads a market from an instance JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mb_environment_from_json(
    json: *const c_char,
    feedback_seed: u64,
    out: *mut *mut MbEnvironment,
) -> MbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let instance = lift(instance_from_json(text))?;
        let env = lift(Environment::new(instance, feedback_seed))?;
        *out = Box::into_raw(Box::new(MbEnvironment { env }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mb_environment_free(env: *mut MbEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Expected revenue of the optimal matching.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mb_environment_oracle_value(env: *const MbEnvironment, out: *mut f64) -> MbStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = env.env.oracle.value;
        Ok(())
    })
}

/// Runs the policy described by `config_json` on a copy of the market, so
/// the same handle replays identical feedback on every call.
///
/// # Safety
/// `env` must be a live handle, `config_json` NUL-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn mb_run(
    env: *const MbEnvironment,
    config_json: *const c_char,
    out: *mut *mut MbTrace,
) -> MbStatus {
    guard(|| {
        let env = env.as_ref().ok_or_else(|| null("env"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config = lift(AlgoConfig::from_json(read_str(config_json, "config_json")?))?;
        let mut copy = env.env.clone();
        let trace = lift(run(&mut copy, &config))?;
        let cumulative = trace.cumulative_regret();
        *out = Box::into_raw(Box::new(MbTrace { trace, cumulative }));
        Ok(())
    })
}

/// # Safety
/// `trace` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mb_trace_free(trace: *mut MbTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of rounds played.
///
/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mb_trace_rounds(trace: *const MbTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.rounds.len())
}

/// Number of epochs; zero for the per-round baseline.
///
/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mb_trace_epochs(trace: *const MbTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.epoch_count())
}

/// Combinatorial optimizer calls over the run.
///
/// # Safety
/// `trace` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mb_trace_optimizer_calls(trace: *const MbTrace) -> u64 {
    trace.as_ref().map_or(0, |t| t.trace.optimizer.calls)
}

/// Copies up to `len` cumulative regret values into `buf` and stores the
/// number written in `written`.
///
/// # Safety
/// `trace` must be a live handle, `buf` valid for `len` doubles and
/// `written` writable.
#[no_mangle]
pub unsafe extern "C" fn mb_trace_cumulative_regret(
    trace: *const MbTrace,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> MbStatus {
    guard(|| {
        let trace = trace.as_ref().ok_or_else(|| null("trace"))?;
        if written.is_null() {
            return Err(null("written"));
        }
        let n = len.min(trace.cumulative.len());
        if n > 0 {
            if buf.is_null() {
                return Err(null("buf"));
            }
            ptr::copy_nonoverlapping(trace.cumulative.as_ptr(), buf, n);
        }
        *written = n;
        Ok(())
    })
}

/// Crate version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
