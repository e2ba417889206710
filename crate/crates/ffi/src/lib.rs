//! C ABI over `singstab`.
//!
//! Families live behind an opaque handle created from the JSON system format
//! and released with [`singstab_family_free`]. Every fallible call returns a
//! [`SingstabStatus`]; on failure a message is kept per thread and can be
//! read with [`singstab_last_error_message`]. Strings returned by the library
//! must be released with [`singstab_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use singstab::exponent::{self, EstimateOptions, SearchOptions, Target};
use singstab::model::{self, SystemFamily};
use singstab::simulate::{self, SimOptions};
use singstab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingstabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Schema = 3,
    Dimension = 4,
    Singular = 5,
    NonFinite = 6,
    Precondition = 7,
    Convergence = 8,
    InvalidArgument = 9,
    Signal = 10,
    Numeric = 11,
    Panic = 12,
}

impl From<&Error> for SingstabStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension(_) => SingstabStatus::Dimension,
            Error::Singular { .. } => SingstabStatus::Singular,
            Error::NonFinite(_) => SingstabStatus::NonFinite,
            Error::Precondition(_) => SingstabStatus::Precondition,
            Error::Convergence { .. } => SingstabStatus::Convergence,
            Error::InvalidArgument(_) => SingstabStatus::InvalidArgument,
            Error::Schema { .. } => SingstabStatus::Schema,
            Error::Signal(_) => SingstabStatus::Signal,
            Error::Fit(_) | Error::Io(_) => SingstabStatus::Numeric,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingstabTarget {
    SigmaEps = 0,
    SigmaBar = 1,
    SigmaHat = 2,
    SigmaTilde = 3,
}

impl From<SingstabTarget> for Target {
    fn from(t: SingstabTarget) -> Self {
        match t {
            SingstabTarget::SigmaEps => Target::SigmaEps,
            SingstabTarget::SigmaBar => Target::SigmaBar,
            SingstabTarget::SigmaHat => Target::SigmaHat,
            SingstabTarget::SigmaTilde => Target::SigmaTilde,
        }
    }
}

/// Opaque handle to a validated family.
pub struct SingstabFamily {
    inner: SystemFamily,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingstabEstimateOptions {
    pub eps: f64,
    pub mu: f64,
    pub depth: usize,
    pub budget: u64,
    pub forbid_self_switch: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingstabBounds {
    pub certified_lower: f64,
    pub heuristic_upper: f64,
    pub abscissa_floor: f64,
    /// True when the upper bound holds for every word over the sampled grid.
    pub upper_grid_certified: bool,
    pub depth_reached: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs replaced");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Runs `body`, recording its error message and converting panics.
fn guard(body: impl FnOnce() -> Result<(), (SingstabStatus, String)>) -> SingstabStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SingstabStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SingstabStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (SingstabStatus, String) {
    (SingstabStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (SingstabStatus, String) {
    (SingstabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SingstabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (SingstabStatus::InvalidUtf8, format!("{what}: {e}")))
}

unsafe fn family_ref<'a>(f: *const SingstabFamily) -> Result<&'a SystemFamily, (SingstabStatus, String)> {
    f.as_ref().map(|h| &h.inner).ok_or_else(|| null("family"))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next library call on the same thread.
#[no_mangle]
pub extern "C" fn singstab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn singstab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses and validates a system document; `*out` receives a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn singstab_family_from_json(json: *const c_char, out: *mut *mut SingstabFamily) -> SingstabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let parsed = model::parse_family(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SingstabFamily { inner: parsed.family }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `family` must come from [`singstab_family_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn singstab_family_free(family: *mut SingstabFamily) {
    if !family.is_null() {
        drop(Box::from_raw(family));
    }
}

/// State dimension and number of modes.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn singstab_family_shape(
    family: *const SingstabFamily,
    dim: *mut usize,
    modes: *mut usize,
) -> SingstabStatus {
    guard(|| {
        let f = family_ref(family)?;
        if dim.is_null() || modes.is_null() {
            return Err(null("output"));
        }
        *dim = f.d();
        *modes = f.len();
        Ok(())
    })
}

/// Whether every fast block is Hurwitz. When `abscissas` is non-null it
/// receives one spectral abscissa per mode and must hold `len` entries.
///
/// # Safety
/// `pass` must be valid; `abscissas`, if non-null, must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn singstab_d_hurwitz(
    family: *const SingstabFamily,
    pass: *mut bool,
    abscissas: *mut f64,
    len: usize,
) -> SingstabStatus {
    guard(|| {
        let f = family_ref(family)?;
        if pass.is_null() {
            return Err(null("pass"));
        }
        let report = model::d_hurwitz_check(f);
        if !abscissas.is_null() {
            if len < report.modes.len() {
                return Err((
                    SingstabStatus::Dimension,
                    format!("abscissa buffer holds {len} entries, family has {} modes", report.modes.len()),
                ));
            }
            let out = std::slice::from_raw_parts_mut(abscissas, report.modes.len());
            for (slot, m) in out.iter_mut().zip(&report.modes) {
                *slot = m.abscissa;
            }
        }
        *pass = report.pass;
        Ok(())
    })
}

/// Defaults matching the command-line tool.
#[no_mangle]
pub extern "C" fn singstab_estimate_options_default() -> SingstabEstimateOptions {
    let d = EstimateOptions::default();
    SingstabEstimateOptions {
        eps: d.eps,
        mu: d.mu,
        depth: d.search.depth,
        budget: d.search.budget,
        forbid_self_switch: d.search.forbid_self_switch,
    }
}

/// Exponent bounds for one target system. Infinite bounds are reported as
/// IEEE infinities.
///
/// # Safety
/// `opts` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn singstab_lambda_estimate(
    family: *const SingstabFamily,
    target: SingstabTarget,
    opts: *const SingstabEstimateOptions,
    out: *mut SingstabBounds,
) -> SingstabStatus {
    guard(|| {
        let f = family_ref(family)?;
        let o = opts.as_ref().ok_or_else(|| null("opts"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if o.depth == 0 || o.budget == 0 {
            return Err((SingstabStatus::InvalidArgument, "depth and budget must be positive".into()));
        }
        let est_opts = EstimateOptions {
            eps: o.eps,
            mu: o.mu,
            search: SearchOptions {
                depth: o.depth,
                budget: o.budget,
                forbid_self_switch: o.forbid_self_switch,
            },
            ..EstimateOptions::default()
        };
        let e = exponent::lambda_estimate(f, target.into(), &est_opts).map_err(lib_err)?;
        *out = SingstabBounds {
            certified_lower: e.certified_lower,
            heuristic_upper: e.heuristic_upper,
            abscissa_floor: e.abscissa_floor,
            upper_grid_certified: e.upper_grid_certified,
            depth_reached: e.depth_reached,
        };
        Ok(())
    })
}

/// Simulates along a signal given as JSON and returns the trajectory as CSV
/// (`t,x1..xd,mode`) in `*csv`, to be released with [`singstab_string_free`].
///
/// # Safety
/// `signal_json` must be NUL-terminated, `x0` must hold `dim` doubles and
/// `csv` must be a valid pointer.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn singstab_simulate_csv(
    family: *const SingstabFamily,
    target: SingstabTarget,
    signal_json: *const c_char,
    x0: *const f64,
    dim: usize,
    t_end: f64,
    dt_out: f64,
    eps: f64,
    csv: *mut *mut c_char,
) -> SingstabStatus {
    guard(|| {
        let f = family_ref(family)?;
        if csv.is_null() {
            return Err(null("csv"));
        }
        *csv = ptr::null_mut();
        if x0.is_null() {
            return Err(null("x0"));
        }
        let signal = model::parse_signal(read_str(signal_json, "signal_json")?).map_err(lib_err)?;
        signal.check_admissible(f.len(), f.tau(), false).map_err(lib_err)?;
        let x0 = std::slice::from_raw_parts(x0, dim);
        let opts = SimOptions {
            eps,
            ..SimOptions::default()
        };
        let tr = simulate::simulate(f, &signal, target.into(), x0, t_end, dt_out, &opts).map_err(lib_err)?;
        let text = CString::new(tr.to_csv()).expect("CSV has no NUL bytes");
        *csv = text.into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn singstab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
