//! C ABI over the bandit, the context featurizer and the statistics
//! routines. See `include/sleepcoach.h` for the generated declarations.
//!
//! Every fallible call returns an [`ScStatus`]; on anything but `SC_OK` the
//! message is available from [`sc_last_error`] on the same thread. No call
//! unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chrono::Utc;
use sleepcoach::bandit::{load_state, save_state, BanditError, BanditModel};
use sleepcoach::context::{featurize, TempThresholds, CONTEXT_DIM};
use sleepcoach::domain::ContextSnapshot;
use sleepcoach::simkit::{ols_trend, paired_t_test, wilcoxon_signed_rank, StatsError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    UnknownArm = 4,
    CorruptState = 5,
    Numeric = 6,
    Statistics = 7,
    Panic = 99,
}

/// Opaque LinUCB model.
pub struct ScBandit {
    model: BanditModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

struct Failure(ScStatus, String);

impl From<BanditError> for Failure {
    fn from(e: BanditError) -> Self {
        let status = match e {
            BanditError::DimensionMismatch { .. } => ScStatus::DimensionMismatch,
            BanditError::UnknownArm(_) => ScStatus::UnknownArm,
            BanditError::CorruptState(_) => ScStatus::CorruptState,
            BanditError::NotPositiveDefinite(_) => ScStatus::Numeric,
            _ => ScStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        Failure(ScStatus::Statistics, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ScStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(ScStatus::InvalidArgument, msg.into())
}

/// Runs `f`, records any failure and maps panics to `Panic`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ScStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ScStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ScStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn bandit<'a>(p: *const ScBandit) -> Result<&'a ScBandit, Failure> {
    p.as_ref().ok_or_else(|| null("bandit"))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn sc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Length of the context vectors produced by [`sc_featurize`].
#[no_mangle]
pub extern "C" fn sc_context_dim() -> usize {
    CONTEXT_DIM
}

/// Creates a model with `n_arms` named arms. `*out` receives the handle,
/// to be released with [`sc_bandit_free`].
///
/// # Safety
/// `arm_names` must point to `n_arms` NUL-terminated strings; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sc_bandit_new(
    arm_names: *const *const c_char,
    n_arms: usize,
    dim: usize,
    alpha: f64,
    seed: u64,
    out: *mut *mut ScBandit,
) -> ScStatus {
    guard(|| {
        let out = self::out(out, "out")?;
        *out = ptr::null_mut();
        let names = slice(arm_names, n_arms, "arm_names")?
            .iter()
            .map(|&p| {
                if p.is_null() {
                    return Err(null("arm name"));
                }
                CStr::from_ptr(p)
                    .to_str()
                    .map(str::to_string)
                    .map_err(|_| invalid("arm name is not UTF-8"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let model = BanditModel::new(&names, dim, alpha, seed)?;
        *out = Box::into_raw(Box::new(ScBandit { model }));
        Ok(())
    })
}

/// # Safety
/// `bandit` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sc_bandit_free(bandit: *mut ScBandit) {
    if !bandit.is_null() {
        drop(Box::from_raw(bandit));
    }
}

/// # Safety
/// `bandit` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sc_bandit_arm_count(bandit: *const ScBandit) -> usize {
    bandit.as_ref().map_or(0, |b| b.model.arms().len())
}

/// Writes each arm's UCB score into `out_ucb[0..n_arms]`.
///
/// # Safety
/// `x` must hold `len` doubles and `out_ucb` room for `out_len`.
#[no_mangle]
pub unsafe extern "C" fn sc_bandit_score(
    bandit: *const ScBandit,
    x: *const f64,
    len: usize,
    out_ucb: *mut f64,
    out_len: usize,
) -> ScStatus {
    guard(|| {
        let b = self::bandit(bandit)?;
        let scores = b.model.score(slice(x, len, "x")?)?;
        if out_len < scores.len() {
            return Err(invalid(format!("out_ucb holds {out_len}, need {}", scores.len())));
        }
        if out_ucb.is_null() {
            return Err(null("out_ucb"));
        }
        let dst = std::slice::from_raw_parts_mut(out_ucb, scores.len());
        for (d, s) in dst.iter_mut().zip(&scores) {
            *d = s.ucb;
        }
        Ok(())
    })
}

/// # Safety
/// `x` must hold `len` doubles; `out_arm` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_bandit_select(
    bandit: *const ScBandit,
    x: *const f64,
    len: usize,
    out_arm: *mut usize,
) -> ScStatus {
    guard(|| {
        let b = self::bandit(bandit)?;
        let dst = out(out_arm, "out_arm")?;
        *dst = b.model.select(slice(x, len, "x")?)?.index;
        Ok(())
    })
}

/// Applies `A += x xᵀ`, `b += r x` to arm `arm`. `reward` must be in [0, 1].
///
/// # Safety
/// `bandit` must be a live handle not used concurrently; `x` must hold
/// `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sc_bandit_update(
    bandit: *mut ScBandit,
    arm: usize,
    x: *const f64,
    len: usize,
    reward: f64,
) -> ScStatus {
    guard(|| {
        let b = bandit.as_mut().ok_or_else(|| null("bandit"))?;
        let id = b
            .model
            .arms()
            .get(arm)
            .map(|a| a.id.clone())
            .ok_or_else(|| Failure(ScStatus::UnknownArm, format!("no arm at index {arm}")))?;
        b.model.update(&id, slice(x, len, "x")?, reward)?;
        Ok(())
    })
}

/// Serializes the model. Release `*out_buf` with [`sc_buffer_free`].
///
/// # Safety
/// `out_buf` and `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_bandit_save(
    bandit: *const ScBandit,
    out_buf: *mut *mut u8,
    out_len: *mut usize,
) -> ScStatus {
    guard(|| {
        let b = self::bandit(bandit)?;
        let (buf, len) = (out(out_buf, "out_buf")?, out(out_len, "out_len")?);
        let bytes = save_state(&b.model).into_boxed_slice();
        *len = bytes.len();
        *buf = Box::into_raw(bytes).cast::<u8>();
        Ok(())
    })
}

/// # Safety
/// `buf` must hold `len` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_bandit_load(buf: *const u8, len: usize, out: *mut *mut ScBandit) -> ScStatus {
    guard(|| {
        let out = self::out(out, "out")?;
        *out = ptr::null_mut();
        let model = load_state(slice(buf, len, "buf")?, None)?;
        *out = Box::into_raw(Box::new(ScBandit { model }));
        Ok(())
    })
}

/// # Safety
/// `buf`/`len` must be exactly what [`sc_bandit_save`] returned.
#[no_mangle]
pub unsafe extern "C" fn sc_buffer_free(buf: *mut u8, len: usize) {
    if !buf.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buf, len)));
    }
}

/// One-hot context for a local hour, temperature and provider condition
/// text, using the default temperature thresholds.
///
/// # Safety
/// `condition` must be NUL-terminated; `out` must have room for `out_len`
/// doubles, at least [`sc_context_dim`].
#[no_mangle]
pub unsafe extern "C" fn sc_featurize(
    local_hour: u8,
    temperature_c: f64,
    condition: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> ScStatus {
    guard(|| {
        if condition.is_null() {
            return Err(null("condition"));
        }
        let condition = CStr::from_ptr(condition)
            .to_str()
            .map_err(|_| invalid("condition is not UTF-8"))?;
        if out_len < CONTEXT_DIM {
            return Err(invalid(format!("out holds {out_len}, need {CONTEXT_DIM}")));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let snapshot = ContextSnapshot {
            local_hour,
            temperature_c,
            weather_condition: condition.to_string(),
            location_label: None,
            captured_at: Utc::now().fixed_offset(),
            degraded: false,
        };
        let x = featurize(&snapshot, &TempThresholds::default()).map_err(|e| invalid(e.to_string()))?;
        std::slice::from_raw_parts_mut(out, CONTEXT_DIM).copy_from_slice(x.as_slice());
        Ok(())
    })
}

/// Two-sided paired t-test of `a − b`.
///
/// # Safety
/// `a` and `b` must hold `n` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_paired_t(
    a: *const f64,
    b: *const f64,
    n: usize,
    out_t: *mut f64,
    out_p: *mut f64,
) -> ScStatus {
    guard(|| {
        let r = paired_t_test(slice(a, n, "a")?, slice(b, n, "b")?)?;
        *out(out_t, "out_t")? = r.statistic;
        *out(out_p, "out_p")? = r.p_value;
        Ok(())
    })
}

/// Wilcoxon signed-rank test of `a − b`: exact for up to 20 nonzero
/// differences, normal approximation above.
///
/// # Safety
/// `a` and `b` must hold `n` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_wilcoxon(
    a: *const f64,
    b: *const f64,
    n: usize,
    out_w: *mut f64,
    out_p: *mut f64,
) -> ScStatus {
    guard(|| {
        let r = wilcoxon_signed_rank(slice(a, n, "a")?, slice(b, n, "b")?)?;
        *out(out_w, "out_w")? = r.statistic;
        *out(out_p, "out_p")? = r.p_value;
        Ok(())
    })
}

/// Least-squares line through `(x[i], y[i])` with the slope's two-sided p.
///
/// # Safety
/// `x` and `y` must hold `n` doubles; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sc_ols_trend(
    x: *const f64,
    y: *const f64,
    n: usize,
    out_slope: *mut f64,
    out_intercept: *mut f64,
    out_r_squared: *mut f64,
    out_p: *mut f64,
) -> ScStatus {
    guard(|| {
        let pts: Vec<(f64, f64)> = slice(x, n, "x")?
            .iter()
            .copied()
            .zip(slice(y, n, "y")?.iter().copied())
            .collect();
        let r = ols_trend(&pts)?;
        let reg = r.regression.expect("trend always carries a regression");
        *out(out_slope, "out_slope")? = reg.slope;
        *out(out_intercept, "out_intercept")? = reg.intercept;
        *out(out_r_squared, "out_r_squared")? = reg.r_squared;
        *out(out_p, "out_p")? = r.p_value;
        Ok(())
    })
}
