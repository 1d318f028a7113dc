//! C ABI over `pqlab-core`.
//!
//! Every fallible call returns a [`PqlabStatus`]; on failure the message is
//! available from [`pqlab_last_error`] on the same thread. Handles are
//! opaque and owned by the caller until passed to their `_free` function.
//! Absent report values (no current, no flicker block) are NaN.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::str::FromStr;

use pqlab_core::netmodel::{path_impedance, Conductor, Tap};
use pqlab_core::pqmetrics::{aggregate_report, harmonic_spectrum, thd, ObservedTraces, PQReport, ReportConfig};
use pqlab_core::workbench::{load_model, parse_scenario, run_scenario, scenario_hash, Scenario};
use pqlab_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Validation = 3,
    Runtime = 4,
    OutOfRange = 5,
    Panic = 6,
}

/// Parsed scenario.
pub struct PqlabScenario(Scenario);

/// Report records, ordered by window then phase.
pub struct PqlabReport(Vec<PQReport>);

/// One report record. `phase` is 1, 2 or 3.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PqlabRecord {
    pub t_start: f64,
    pub phase: u32,
    pub u_rms: f64,
    pub i_rms: f64,
    pub p: f64,
    pub q: f64,
    pub e_p: f64,
    pub e_q: f64,
    pub f_c: f64,
    pub thdu: f64,
    pub thdi: f64,
    pub pst: f64,
    pub plt: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: PqlabStatus, msg: &str) -> PqlabStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> PqlabStatus {
    let status = if e.is_validation() {
        PqlabStatus::Validation
    } else {
        PqlabStatus::Runtime
    };
    fail(status, &e.to_string())
}

fn guard(f: impl FnOnce() -> PqlabStatus) -> PqlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(PqlabStatus::Ok) => {
            set_error("");
            PqlabStatus::Ok
        }
        Ok(s) => s,
        Err(_) => fail(PqlabStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, PqlabStatus> {
    if p.is_null() {
        return Err(fail(PqlabStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(PqlabStatus::InvalidUtf8, &format!("{what} is not valid UTF-8")))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! core {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_error(e),
        }
    };
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn pqlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn pqlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn pqlab_scenario_parse(text_toml: *const c_char, out: *mut *mut PqlabScenario) -> PqlabStatus {
    guard(|| {
        if out.is_null() {
            return fail(PqlabStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let t = tri!(text(text_toml, "scenario text"));
        let s = core!(parse_scenario(t));
        *out = Box::into_raw(Box::new(PqlabScenario(s)));
        PqlabStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn pqlab_scenario_free(s: *mut PqlabScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Writes the 64-character hex hash and a terminating NUL; `buf_len` must be at least 65.
#[no_mangle]
pub unsafe extern "C" fn pqlab_scenario_hash(s: *const PqlabScenario, buf: *mut c_char, buf_len: usize) -> PqlabStatus {
    guard(|| {
        if s.is_null() || buf.is_null() {
            return fail(PqlabStatus::NullPointer, "scenario or buffer is null");
        }
        let h = core!(scenario_hash(&(*s).0));
        if buf_len < h.len() + 1 {
            return fail(PqlabStatus::OutOfRange, &format!("buffer needs {} bytes", h.len() + 1));
        }
        ptr::copy_nonoverlapping(h.as_ptr().cast::<c_char>(), buf, h.len());
        *buf.add(h.len()) = 0;
        PqlabStatus::Ok
    })
}

/// Runs the scenario, writing artifacts under `out_dir`. `report` may be null;
/// otherwise it receives the report, or null when none was requested.
#[no_mangle]
pub unsafe extern "C" fn pqlab_scenario_run(
    s: *const PqlabScenario,
    out_dir: *const c_char,
    report: *mut *mut PqlabReport,
) -> PqlabStatus {
    guard(|| {
        if s.is_null() {
            return fail(PqlabStatus::NullPointer, "scenario is null");
        }
        if !report.is_null() {
            *report = ptr::null_mut();
        }
        let dir = tri!(text(out_dir, "output directory"));
        let outcome = core!(run_scenario(&(*s).0, Path::new(dir)));
        if let (false, Some(r)) = (report.is_null(), outcome.report) {
            *report = Box::into_raw(Box::new(PqlabReport(r)));
        }
        PqlabStatus::Ok
    })
}

/// Report for `n_channels` (1 to 3) voltage channels of `n_samples` each,
/// stored channel after channel. `currents` is null or laid out the same way.
#[no_mangle]
pub unsafe extern "C" fn pqlab_analyze(
    rate: f64,
    voltages: *const f64,
    currents: *const f64,
    n_channels: usize,
    n_samples: usize,
    f_nominal: f64,
    cycles: usize,
    allow_short: bool,
    out: *mut *mut PqlabReport,
) -> PqlabStatus {
    guard(|| {
        if voltages.is_null() || out.is_null() {
            return fail(PqlabStatus::NullPointer, "voltages or out is null");
        }
        *out = ptr::null_mut();
        if !(1..=3).contains(&n_channels) {
            return fail(PqlabStatus::OutOfRange, "n_channels must be 1, 2 or 3");
        }
        let split = |p: *const f64| -> Vec<Vec<f64>> {
            let all = std::slice::from_raw_parts(p, n_channels * n_samples);
            all.chunks(n_samples.max(1)).map(<[f64]>::to_vec).collect()
        };
        let traces = ObservedTraces {
            rate,
            t0: 0.0,
            voltages: split(voltages),
            currents: (!currents.is_null()).then(|| split(currents)),
        };
        let cfg = ReportConfig {
            f_nominal,
            cycles,
            allow_short,
        };
        let rep = core!(aggregate_report(&traces, &cfg));
        *out = Box::into_raw(Box::new(PqlabReport(rep)));
        PqlabStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn pqlab_report_len(r: *const PqlabReport) -> usize {
    if r.is_null() {
        0
    } else {
        (*r).0.len()
    }
}

#[no_mangle]
pub unsafe extern "C" fn pqlab_report_get(r: *const PqlabReport, index: usize, out: *mut PqlabRecord) -> PqlabStatus {
    guard(|| {
        if r.is_null() || out.is_null() {
            return fail(PqlabStatus::NullPointer, "report or out is null");
        }
        let recs = &(*r).0;
        let Some(rec) = recs.get(index) else {
            return fail(PqlabStatus::OutOfRange, &format!("index {index} beyond {} records", recs.len()));
        };
        let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
        *out = PqlabRecord {
            t_start: rec.t_start,
            phase: rec.phase.trim_start_matches('L').parse().unwrap_or(0),
            u_rms: rec.u_rms,
            i_rms: rec.i_rms,
            p: rec.p,
            q: rec.q,
            e_p: rec.e_p,
            e_q: rec.e_q,
            f_c: rec.f_c,
            thdu: rec.thdu,
            thdi: opt(rec.thdi),
            pst: opt(rec.pst),
            plt: opt(rec.plt),
        };
        PqlabStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn pqlab_report_free(r: *mut PqlabReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Series R and X in mOhm from the supply to `tap` along one conductor.
/// `model` is `nominal`, `measured`, or a model override file path.
#[no_mangle]
pub unsafe extern "C" fn pqlab_path_impedance(
    model: *const c_char,
    tap: *const c_char,
    conductor: *const c_char,
    f_hz: f64,
    r_mohm: *mut f64,
    x_mohm: *mut f64,
) -> PqlabStatus {
    guard(|| {
        if r_mohm.is_null() || x_mohm.is_null() {
            return fail(PqlabStatus::NullPointer, "output pointer is null");
        }
        let m = core!(load_model(tri!(text(model, "model"))));
        let t = core!(Tap::from_str(tri!(text(tap, "tap"))));
        let c = core!(Conductor::from_str(tri!(text(conductor, "conductor"))));
        let z = core!(path_impedance(&m, t, c, f_hz));
        *r_mohm = z.re;
        *x_mohm = z.im;
        PqlabStatus::Ok
    })
}

/// THD (orders 2..40) of a whole-cycle window.
#[no_mangle]
pub unsafe extern "C" fn pqlab_thd(samples: *const f64, n: usize, rate: f64, f_c: f64, out: *mut f64) -> PqlabStatus {
    guard(|| {
        if samples.is_null() || out.is_null() {
            return fail(PqlabStatus::NullPointer, "samples or out is null");
        }
        let x = std::slice::from_raw_parts(samples, n);
        let spec = core!(harmonic_spectrum(x, rate, f_c));
        *out = core!(thd(&spec));
        PqlabStatus::Ok
    })
}
