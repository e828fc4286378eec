//! C ABI over `smd_meta`.
//!
//! Studies are collected in an opaque `SmdInput` handle. Every call returns an
//! `SMD_*` status code; on failure `smd_last_error_message` describes the most
//! recent error on the calling thread. Method selectors are indices into the
//! method lists documented on each constant group.

use smd_meta::effect::{
    ci_hksj, ci_ssw_kdb, ci_z, effect_iv, effect_ssw, EffectCiMethod, Weighting,
};
use smd_meta::qstat::MetaInput;
use smd_meta::smd::{hedges_g, ArmSummary, Study};
use smd_meta::tau2::{estimate, interval, Tau2CiMethod, Tau2Method};
use smd_meta::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

pub const SMD_OK: i32 = 0;
pub const SMD_ERR_NULL: i32 = 1;
pub const SMD_ERR_ARGUMENT: i32 = 2;
pub const SMD_ERR_INVARIANT: i32 = 3;
pub const SMD_ERR_NUMERICAL: i32 = 4;
pub const SMD_ERR_PANIC: i32 = 5;

pub const SMD_TAU2_DL: u32 = 0;
pub const SMD_TAU2_REML: u32 = 1;
pub const SMD_TAU2_MP: u32 = 2;
pub const SMD_TAU2_J: u32 = 3;
pub const SMD_TAU2_KDB: u32 = 4;

pub const SMD_TAU2_CI_QP: u32 = 0;
pub const SMD_TAU2_CI_BJ: u32 = 1;
pub const SMD_TAU2_CI_J: u32 = 2;
pub const SMD_TAU2_CI_PL: u32 = 3;
pub const SMD_TAU2_CI_KDB: u32 = 4;

/// Effect weightings 0..4 are inverse-variance with the matching SMD_TAU2_*
/// estimator; 5 is effective-sample-size weighting.
pub const SMD_EFFECT_SSW: u32 = 5;

pub const SMD_EFFECT_CI_Z_DL: u32 = 0;
pub const SMD_EFFECT_CI_Z_REML: u32 = 1;
pub const SMD_EFFECT_CI_Z_MP: u32 = 2;
pub const SMD_EFFECT_CI_Z_J: u32 = 3;
pub const SMD_EFFECT_CI_Z_KDB: u32 = 4;
pub const SMD_EFFECT_CI_HKSJ: u32 = 5;
pub const SMD_EFFECT_CI_HKSJ_KDB: u32 = 6;
pub const SMD_EFFECT_CI_SSW_KDB: u32 = 7;

/// Opaque collection of studies.
pub struct SmdInput {
    studies: Vec<Study>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SmdTau2Estimate {
    pub value: f64,
    /// 1 when the estimate was clamped to zero.
    pub truncated: i32,
    /// 1 when the iteration limit was reached.
    pub max_iter: i32,
    pub iterations: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SmdTau2Interval {
    pub lower: f64,
    /// +INFINITY when unbounded.
    pub upper: f64,
    pub lower_truncated: i32,
    pub upper_truncated: i32,
    pub flat: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SmdEffect {
    pub value: f64,
    pub variance: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SmdEffectInterval {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub half_width: f64,
    pub degenerate: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code_of(e: &Error) -> i32 {
    if e.is_numerical() {
        SMD_ERR_NUMERICAL
    } else {
        match e {
            Error::Domain { .. } => SMD_ERR_ARGUMENT,
            _ => SMD_ERR_INVARIANT,
        }
    }
}

struct Fail(i32, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(code_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SMD_OK
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            SMD_ERR_PANIC
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SMD_ERR_NULL, format!("{what} is a null pointer"))
}

fn pick<T: Copy>(list: &[T], index: u32, what: &str) -> Result<T, Fail> {
    list.get(index as usize).copied().ok_or_else(|| {
        Fail(
            SMD_ERR_ARGUMENT,
            format!("{what} selector {index} is out of range 0..{}", list.len()),
        )
    })
}

/// # Safety
/// `handle` must be null or a live pointer from `smd_input_new`.
unsafe fn meta(handle: *const SmdInput) -> Result<MetaInput, Fail> {
    let h: &SmdInput = unsafe { handle.as_ref() }.ok_or_else(|| null("handle"))?;
    Ok(MetaInput::new(h.studies.clone())?)
}

unsafe fn out_ref<'a, T>(out: *mut T) -> Result<&'a mut T, Fail> {
    unsafe { out.as_mut() }.ok_or_else(|| null("out"))
}

/// New empty input. Release with `smd_input_free`.
#[no_mangle]
pub extern "C" fn smd_input_new() -> *mut SmdInput {
    Box::into_raw(Box::new(SmdInput {
        studies: Vec::new(),
    }))
}

/// # Safety
/// `handle` must be null or a pointer from `smd_input_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn smd_input_free(handle: *mut SmdInput) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// Number of studies added so far (0 for a null handle).
///
/// # Safety
/// `handle` must be null or a live pointer from `smd_input_new`.
#[no_mangle]
pub unsafe extern "C" fn smd_input_len(handle: *const SmdInput) -> usize {
    unsafe { handle.as_ref() }.map_or(0, |h| h.studies.len())
}

/// Add a study given Hedges's g and its variance.
///
/// # Safety
/// `handle` must be null or a live pointer from `smd_input_new`.
#[no_mangle]
pub unsafe extern "C" fn smd_input_add_study(
    handle: *mut SmdInput,
    n_t: u32,
    n_c: u32,
    g: f64,
    var_g: f64,
) -> i32 {
    guard(|| {
        let h = unsafe { handle.as_mut() }.ok_or_else(|| null("handle"))?;
        h.studies.push(Study::new(n_t, n_c, g, var_g)?);
        Ok(())
    })
}

/// Add a study given arm sizes, means and standard deviations.
///
/// # Safety
/// `handle` must be null or a live pointer from `smd_input_new`.
#[no_mangle]
pub unsafe extern "C" fn smd_input_add_arms(
    handle: *mut SmdInput,
    n_t: u32,
    mean_t: f64,
    sd_t: f64,
    n_c: u32,
    mean_c: f64,
    sd_c: f64,
) -> i32 {
    guard(|| {
        let h = unsafe { handle.as_mut() }.ok_or_else(|| null("handle"))?;
        let t = ArmSummary::new(n_t, mean_t, sd_t)?;
        let c = ArmSummary::new(n_c, mean_c, sd_c)?;
        h.studies.push(hedges_g(&t, &c)?);
        Ok(())
    })
}

/// Point estimate of the between-study variance; `method` is an SMD_TAU2_* value.
///
/// # Safety
/// `handle` must be a live input pointer and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smd_tau2(
    handle: *const SmdInput,
    method: u32,
    out: *mut SmdTau2Estimate,
) -> i32 {
    guard(|| {
        let m = pick(&Tau2Method::ALL, method, "tau2 method")?;
        let input = unsafe { meta(handle) }?;
        let out = unsafe { out_ref(out) }?;
        let r = estimate(&input, m)?;
        *out = SmdTau2Estimate {
            value: r.value,
            truncated: r.is_truncated() as i32,
            max_iter: matches!(r.status, smd_meta::tau2::Tau2Status::MaxIter) as i32,
            iterations: r.iterations as u64,
        };
        Ok(())
    })
}

/// Confidence interval for the between-study variance; `method` is an
/// SMD_TAU2_CI_* value and `level` lies in (0, 1).
///
/// # Safety
/// `handle` must be a live input pointer and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smd_tau2_ci(
    handle: *const SmdInput,
    method: u32,
    level: f64,
    out: *mut SmdTau2Interval,
) -> i32 {
    guard(|| {
        let m = pick(&Tau2CiMethod::ALL, method, "tau2 interval")?;
        let input = unsafe { meta(handle) }?;
        let out = unsafe { out_ref(out) }?;
        let ci = interval(&input, m, level)?;
        *out = SmdTau2Interval {
            lower: ci.lo,
            upper: ci.hi,
            lower_truncated: ci.lo_truncated as i32,
            upper_truncated: ci.hi_truncated as i32,
            flat: ci.flat as i32,
        };
        Ok(())
    })
}

/// Overall effect; `weighting` is an SMD_TAU2_* value for inverse-variance
/// weights or SMD_EFFECT_SSW.
///
/// # Safety
/// `handle` must be a live input pointer and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smd_effect(
    handle: *const SmdInput,
    weighting: u32,
    out: *mut SmdEffect,
) -> i32 {
    guard(|| {
        let w = pick(&Weighting::ALL, weighting, "weighting")?;
        let input = unsafe { meta(handle) }?;
        let out = unsafe { out_ref(out) }?;
        let r = match w {
            Weighting::InverseVariance(m) => effect_iv(&input, &estimate(&input, m)?),
            Weighting::EffectiveSize => effect_ssw(&input)?,
        };
        *out = SmdEffect {
            value: r.value,
            variance: r.variance,
        };
        Ok(())
    })
}

/// Confidence interval for the overall effect; `method` is an SMD_EFFECT_CI_* value.
///
/// # Safety
/// `handle` must be a live input pointer and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn smd_effect_ci(
    handle: *const SmdInput,
    method: u32,
    level: f64,
    out: *mut SmdEffectInterval,
) -> i32 {
    guard(|| {
        let c = pick(&EffectCiMethod::ALL, method, "effect interval")?;
        let input = unsafe { meta(handle) }?;
        let out = unsafe { out_ref(out) }?;
        let ci = match c {
            EffectCiMethod::Z(m) => ci_z(&input, &estimate(&input, m)?, level)?,
            EffectCiMethod::Hksj(m) => ci_hksj(&input, &estimate(&input, m)?, level)?,
            EffectCiMethod::SswKdb => ci_ssw_kdb(&input, level)?,
        };
        *out = SmdEffectInterval {
            lower: ci.lo(),
            upper: ci.hi(),
            center: ci.center,
            half_width: ci.half_width,
            degenerate: ci.degenerate as i32,
        };
        Ok(())
    })
}

/// Message for the last failed call on this thread, or "" after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn smd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Name of a method selector, or null when out of range. `kind`: 0 tau2
/// estimator, 1 tau2 interval, 2 effect weighting, 3 effect interval.
#[no_mangle]
pub extern "C" fn smd_method_name(kind: u32, index: u32) -> *const c_char {
    static NAMES: std::sync::OnceLock<[Vec<CString>; 4]> = std::sync::OnceLock::new();
    let names = NAMES.get_or_init(|| {
        let c = |s: &str| CString::new(s).expect("no nul");
        [
            Tau2Method::ALL.iter().map(|m| c(m.name())).collect(),
            Tau2CiMethod::ALL.iter().map(|m| c(m.name())).collect(),
            Weighting::ALL.iter().map(|m| c(m.name())).collect(),
            EffectCiMethod::ALL.iter().map(|m| c(m.name())).collect(),
        ]
    });
    names
        .get(kind as usize)
        .and_then(|v| v.get(index as usize))
        .map_or(ptr::null(), |s| s.as_ptr())
}
