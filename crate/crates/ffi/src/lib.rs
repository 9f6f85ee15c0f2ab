//! C ABI over `maxrenyi-core`.
//!
//! Models and policies cross the boundary as opaque handles created by
//! `mr_*_new`/`mr_*_from_*` and released with the matching `mr_*_free`.
//! Every fallible call returns an [`MrStatus`]; on failure the message is
//! available from [`mr_last_error`] on the same thread until the next call.
//! Arrays are row-major: transitions `[s][a][s']`, policies and occupancies
//! `[s][a]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use maxrenyi_core::coupon::coupon_value;
use maxrenyi_core::entropy::{renyi_entropy, RenyiOrder};
use maxrenyi_core::envs::EnvSpec;
use maxrenyi_core::io::{model_from_json, EnvModel};
use maxrenyi_core::mdp::{occupancy, DiscountedCmp, TabularPolicy};
use maxrenyi_core::solver::{maximize_entropy, EntropyTarget, SolverMethod, SolverOptions};
use maxrenyi_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A model or policy failed validation.
    Validation = 3,
    Singular = 4,
    Unsupported = 5,
    BufferTooSmall = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrSolverMethod {
    GradientAscent = 0,
    FrankWolfe = 1,
}

/// Discounted controlled Markov process.
pub struct MrCmp(DiscountedCmp);

/// Stationary tabular policy.
pub struct MrPolicy(TabularPolicy);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Validation(_) => MrStatus::Validation,
            Error::Singular(_) => MrStatus::Singular,
            Error::GammaOneUnsupported | Error::InfeasibleN(_) | Error::PolicySpaceTooLarge(_) => {
                MrStatus::Unsupported
            }
            _ => MrStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: MrStatus, msg: &str) -> Failure {
    Failure(status, msg.to_string())
}

/// Runs `f`, records any failure and converts panics.
fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> MrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside maxrenyi".into());
            MrStatus::Panic
        }
    }
}

unsafe fn input<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(fail(MrStatus::NullPointer, "null input array"));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(fail(MrStatus::NullPointer, "null output array"));
    }
    if len < needed {
        return Err(fail(
            MrStatus::BufferTooSmall,
            &format!("output needs {needed} entries, got {len}"),
        ));
    }
    Ok(slice::from_raw_parts_mut(p, needed))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(MrStatus::NullPointer, "null handle"))
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(MrStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MrStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(MrStatus::NullPointer, "null output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next `mr_*` call on the same thread.
#[no_mangle]
pub extern "C" fn mr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `transition` must hold `n_states * n_actions * n_states` values and
/// `init` `n_states` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_cmp_new(
    n_states: usize,
    n_actions: usize,
    transition: *const f64,
    init: *const f64,
    gamma: f64,
    out: *mut *mut MrCmp,
) -> MrStatus {
    guard(|| {
        let size = n_states
            .checked_mul(n_actions)
            .and_then(|x| x.checked_mul(n_states))
            .ok_or_else(|| fail(MrStatus::InvalidArgument, "model size overflows"))?;
        let t = input(transition, size)?.to_vec();
        let mu = input(init, n_states)?.to_vec();
        let cmp = DiscountedCmp::new(n_states, n_actions, t, mu, gamma)?;
        store(out, MrCmp(cmp))
    })
}

/// Parses a discounted model JSON document.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_cmp_from_json(json: *const c_char, out: *mut *mut MrCmp) -> MrStatus {
    guard(|| match model_from_json(text(json)?)? {
        EnvModel::Discounted(c) => store(out, MrCmp(c)),
        EnvModel::Episodic(_) => Err(fail(
            MrStatus::Unsupported,
            "episodic models are not exposed over the C ABI",
        )),
    })
}

/// Built-in environment by name (`five-state`, `two-state-gap`, `four-rooms`,
/// `random`, `symmetric`) with the given discount.
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_cmp_builtin(
    name: *const c_char,
    gamma: f64,
    out: *mut *mut MrCmp,
) -> MrStatus {
    guard(|| {
        let mut spec = EnvSpec::named(text(name)?)?;
        spec.set_gamma(gamma);
        store(out, MrCmp(spec.build()?))
    })
}

/// # Safety
/// `cmp` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mr_cmp_free(cmp: *mut MrCmp) {
    if !cmp.is_null() {
        drop(Box::from_raw(cmp));
    }
}

/// Zero for a NULL handle.
///
/// # Safety
/// `cmp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mr_cmp_n_states(cmp: *const MrCmp) -> usize {
    cmp.as_ref().map_or(0, |c| c.0.n_states())
}

/// # Safety
/// `cmp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mr_cmp_n_actions(cmp: *const MrCmp) -> usize {
    cmp.as_ref().map_or(0, |c| c.0.n_actions())
}

/// # Safety
/// `probs` must hold `n_states * n_actions` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_policy_from_probs(
    n_states: usize,
    n_actions: usize,
    probs: *const f64,
    out: *mut *mut MrPolicy,
) -> MrStatus {
    guard(|| {
        let size = n_states
            .checked_mul(n_actions)
            .ok_or_else(|| fail(MrStatus::InvalidArgument, "policy size overflows"))?;
        let p = input(probs, size)?.to_vec();
        store(
            out,
            MrPolicy(TabularPolicy::from_probs(n_states, n_actions, p)?),
        )
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_policy_uniform(
    n_states: usize,
    n_actions: usize,
    out: *mut *mut MrPolicy,
) -> MrStatus {
    guard(|| {
        if n_states == 0 || n_actions == 0 {
            return Err(fail(MrStatus::InvalidArgument, "sizes must be positive"));
        }
        store(out, MrPolicy(TabularPolicy::uniform(n_states, n_actions)))
    })
}

/// # Safety
/// `policy` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mr_policy_free(policy: *mut MrPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Copies the action probabilities into `out` (`len >= n_states * n_actions`).
///
/// # Safety
/// `policy` must be a live handle and `out` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn mr_policy_probs(
    policy: *const MrPolicy,
    out: *mut f64,
    len: usize,
) -> MrStatus {
    guard(|| {
        let p = &handle(policy)?.0;
        output(out, len, p.probs().len())?.copy_from_slice(p.probs());
        Ok(())
    })
}

/// Normalized discounted state-action occupancy, `n_states * n_actions`
/// values.
///
/// # Safety
/// Handles must be live; `out` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn mr_occupancy(
    cmp: *const MrCmp,
    policy: *const MrPolicy,
    out: *mut f64,
    len: usize,
) -> MrStatus {
    guard(|| {
        let d = occupancy(&handle(cmp)?.0, &handle(policy)?.0, None)?;
        output(out, len, d.weights().len())?.copy_from_slice(d.weights());
        Ok(())
    })
}

fn alpha_order(alpha: f64) -> Result<RenyiOrder, Failure> {
    Ok(RenyiOrder::new(alpha)?)
}

fn check_simplex(d: &[f64]) -> Result<(), Failure> {
    let sum: f64 = d.iter().sum();
    if d.is_empty() || d.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(fail(
            MrStatus::InvalidArgument,
            "input is not a probability vector",
        ));
    }
    Ok(())
}

/// Rényi entropy of order `alpha` in `[0, 1]` (1 gives Shannon) in nats.
///
/// # Safety
/// `d` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_renyi_entropy(
    d: *const f64,
    len: usize,
    alpha: f64,
    out: *mut f64,
) -> MrStatus {
    guard(|| {
        let d = input(d, len)?;
        check_simplex(d)?;
        let h = renyi_entropy(d, alpha_order(alpha)?);
        output(out, 1, 1)?[0] = h;
        Ok(())
    })
}

/// Expected draws to see every cell; `+inf` when a cell is zero.
///
/// # Safety
/// `d` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mr_coupon_value(d: *const f64, len: usize, out: *mut f64) -> MrStatus {
    guard(|| {
        let d = input(d, len)?;
        check_simplex(d)?;
        output(out, 1, 1)?[0] = coupon_value(d);
        Ok(())
    })
}

/// Maximises the occupancy entropy of order `alpha`. `method` is an
/// `MrSolverMethod` value. Writes a new policy handle and, when `value` is
/// non-NULL, the attained entropy.
///
/// # Safety
/// `cmp` must be live; `out` writable; `value` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn mr_maximize_entropy(
    cmp: *const MrCmp,
    alpha: f64,
    method: u32,
    seed: u64,
    out: *mut *mut MrPolicy,
    value: *mut f64,
) -> MrStatus {
    guard(|| {
        let cmp = &handle(cmp)?.0;
        let method = match method {
            m if m == MrSolverMethod::GradientAscent as u32 => SolverMethod::GradientAscent,
            m if m == MrSolverMethod::FrankWolfe as u32 => SolverMethod::FrankWolfe,
            other => {
                return Err(fail(
                    MrStatus::InvalidArgument,
                    &format!("unknown solver method {other}"),
                ))
            }
        };
        let opts = SolverOptions {
            seed,
            ..SolverOptions::default()
        };
        let report = maximize_entropy(
            EntropyTarget::Discounted(cmp),
            alpha_order(alpha)?,
            method,
            &opts,
        )?;
        let policy = report
            .policy
            .stationary()
            .cloned()
            .expect("discounted solve is stationary");
        if !value.is_null() {
            *value = report.value;
        }
        store(out, MrPolicy(policy))
    })
}
