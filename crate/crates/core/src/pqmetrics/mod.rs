//! Power-quality quantities computed from sampled voltage and current.

mod flicker;
mod report;
mod spectrum;

pub use flicker::{
    flicker_instantaneous, flicker_plt, flicker_pst, pst_from_pinst, FlickerMeter, MIN_FLICKER_RATE_HZ,
    SHORT_OBSERVATION_S, STANDARD_OBSERVATION_S,
};
pub use report::{aggregate_report, format_report, ObservedTraces, PQReport, ReportConfig};
pub use spectrum::{fundamental_frequency, harmonic_spectrum, thd, HarmonicSpectrum, MAX_ORDER};

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn rms(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::ShortWindow("rms of an empty window".into()));
    }
    Ok((x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt())
}

/// Mean of the instantaneous product.
pub fn active_power(u: &[f64], i: &[f64]) -> Result<f64> {
    if u.len() != i.len() {
        return Err(Error::LengthMismatch(u.len(), i.len()));
    }
    if u.is_empty() {
        return Err(Error::ShortWindow("power of an empty window".into()));
    }
    Ok(u.iter().zip(i).map(|(a, b)| a * b).sum::<f64>() / u.len() as f64)
}

/// Number of whole cycles of `f_c` in `len` samples, if the window is synchronous.
pub(crate) fn whole_cycles(len: usize, rate: f64, f_c: f64) -> Result<usize> {
    if !(rate > 0.0 && f_c > 0.0) {
        return Err(Error::invalid(format!("rate and frequency must be > 0, got {rate}, {f_c}")));
    }
    let c = len as f64 * f_c / rate;
    let rounded = c.round();
    if rounded < 1.0 {
        return Err(Error::ShortWindow(format!("{len} samples hold less than one {f_c} Hz cycle")));
    }
    if (c - rounded).abs() > 1e-6 {
        return Err(Error::NonSynchronous(format!(
            "{len} samples at {rate} Hz span {c} cycles of {f_c} Hz"
        )));
    }
    Ok(rounded as usize)
}

/// Rms phasor of the component at `cycles` periods per window.
pub(crate) fn dft_bin(x: &[f64], cycles: usize) -> Complex64 {
    let n = x.len() as f64;
    let w = TAU * cycles as f64 / n;
    let sum: Complex64 = x
        .iter()
        .enumerate()
        .map(|(k, v)| v * Complex64::from_polar(1.0, -w * k as f64))
        .sum();
    // Phase convention matches `sqrt(2)|X| sin(wt + arg X)`.
    sum * Complex64::new(0.0, 2f64.sqrt() / n)
}

/// Fundamental reactive power, positive when the current lags.
pub fn reactive_power_fundamental(u: &[f64], i: &[f64], rate: f64, f_c: f64) -> Result<f64> {
    if u.len() != i.len() {
        return Err(Error::LengthMismatch(u.len(), i.len()));
    }
    let c = whole_cycles(u.len(), rate, f_c)?;
    let (u1, i1) = (dft_bin(u, c), dft_bin(i, c));
    for (name, x, ph) in [("voltage", u, u1), ("current", i, i1)] {
        let r = rms(x)?;
        if r == 0.0 || ph.norm() < 1e-9 * r {
            return Err(Error::NoFundamental(format!("{name} fundamental is below the noise floor")));
        }
    }
    Ok((u1 * i1.conj()).im)
}

/// Power over one contiguous window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowPower {
    pub t_start: f64,
    pub duration: f64,
    pub p: f64,
    pub q: f64,
}

/// Accumulated active (Wh) and reactive (varh) energy.
pub fn accumulate_energy(windows: &[WindowPower]) -> Result<(f64, f64)> {
    let (mut e_p, mut e_q) = (0.0, 0.0);
    for (k, w) in windows.iter().enumerate() {
        if !(w.duration > 0.0) {
            return Err(Error::invalid(format!("window {k} has non-positive duration")));
        }
        if k > 0 {
            let prev = &windows[k - 1];
            let expected = prev.t_start + prev.duration;
            if (w.t_start - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(Error::WindowGap(expected));
            }
        }
        e_p += w.p * w.duration / 3600.0;
        e_q += w.q * w.duration / 3600.0;
    }
    Ok((e_p, e_q))
}
