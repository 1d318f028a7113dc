//! Flickermeter for a 230 V / 50 Hz reference lamp.
//!
//! Chain: mean-square normalisation, squaring demodulator, 0.05 Hz high-pass
//! and 35 Hz Butterworth low-pass, lamp-eye weighting, squaring with 300 ms
//! smoothing, then a log-binned cumulative classifier.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MIN_FLICKER_RATE_HZ: f64 = 2000.0;
pub const SHORT_OBSERVATION_S: f64 = 60.0;
pub const STANDARD_OBSERVATION_S: f64 = 600.0;

const LAMP_MAINS_HZ: f64 = 50.0;
const NORMALISATION_TAU_S: f64 = 60.0;
const HIGH_PASS_HZ: f64 = 0.05;
const LOW_PASS_HZ: f64 = 35.0;
const BUTTERWORTH_Q: [f64; 3] = [0.5176, std::f64::consts::FRAC_1_SQRT_2, 1.9319];
const WEIGHT_K: f64 = 1.74802;
const WEIGHT_LAMBDA_HZ: f64 = 4.05981;
const WEIGHT_F1_HZ: f64 = 9.15494;
const WEIGHT_F2_HZ: f64 = 2.27979;
const WEIGHT_F3_HZ: f64 = 1.22535;
const WEIGHT_F4_HZ: f64 = 21.9;
const SMOOTHING_TAU_S: f64 = 0.3;
const WARM_UP_S: f64 = 5.0;

/// 8.8 Hz sinusoidal fluctuation of this relative depth reads Pinst = 1 at its peak.
const REFERENCE_DEPTH: f64 = 0.0025;
const REFERENCE_HZ: f64 = 8.8;

const CLASSIFIER_BINS: usize = 10_000;
/// Dynamic range of the classifier below the observed maximum.
const CLASSIFIER_RANGE: f64 = 1e9;

/// (weight, percentiles averaged) for each Pst term.
const PST_TERMS: [(f64, &[f64]); 5] = [
    (0.0314, &[0.1]),
    (0.0525, &[0.7, 1.0, 1.5]),
    (0.0657, &[2.2, 3.0, 4.0]),
    (0.28, &[6.0, 8.0, 10.0, 13.0, 17.0]),
    (0.08, &[30.0, 50.0, 80.0]),
];

/// Transposed direct-form II section, `a0` normalised to 1.
#[derive(Debug, Clone, Copy)]
struct Section {
    b: [f64; 3],
    a: [f64; 3],
    s1: f64,
    s2: f64,
}

impl Section {
    /// Bilinear map of `(b0 + b1 s + b2 s^2) / (a0 + a1 s + a2 s^2)`.
    fn second_order(b: [f64; 3], a: [f64; 3], fs: f64) -> Self {
        let k = 2.0 * fs;
        let map = |c: [f64; 3]| {
            [
                c[0] + c[1] * k + c[2] * k * k,
                2.0 * c[0] - 2.0 * c[2] * k * k,
                c[0] - c[1] * k + c[2] * k * k,
            ]
        };
        Self::normalised(map(b), map(a))
    }

    /// Bilinear map of `(b0 + b1 s) / (a0 + a1 s)`.
    fn first_order(b: [f64; 2], a: [f64; 2], fs: f64) -> Self {
        let k = 2.0 * fs;
        let map = |c: [f64; 2]| [c[0] + c[1] * k, c[0] - c[1] * k, 0.0];
        Self::normalised(map(b), map(a))
    }

    fn normalised(b: [f64; 3], a: [f64; 3]) -> Self {
        Section {
            b: b.map(|x| x / a[0]),
            a: a.map(|x| x / a[0]),
            s1: 0.0,
            s2: 0.0,
        }
    }

    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s1;
        self.s1 = self.b[1] * x - self.a[1] * y + self.s2;
        self.s2 = self.b[2] * x - self.a[2] * y;
        y
    }

    /// Sets the state to the steady response to a constant input.
    fn prime(&mut self, x0: f64) {
        let y0 = self.response_at(Complex64::new(1.0, 0.0)).re * x0;
        self.s2 = self.b[2] * x0 - self.a[2] * y0;
        self.s1 = self.b[1] * x0 - self.a[1] * y0 + self.s2;
    }

    fn response_at(&self, z: Complex64) -> Complex64 {
        let zi = 1.0 / z;
        let poly = |c: [f64; 3]| c[0] + zi * (c[1] + zi * c[2]);
        poly(self.b) / poly(self.a)
    }

    fn response(&self, f: f64, fs: f64) -> Complex64 {
        self.response_at(Complex64::from_polar(1.0, TAU * f / fs))
    }
}

/// Instantaneous flicker sensation generator for one sampling rate.
#[derive(Debug, Clone)]
pub struct FlickerMeter {
    rate: f64,
    normaliser: Section,
    high_pass: Section,
    band: Vec<Section>,
    smoothing: Section,
    gain: f64,
}

impl FlickerMeter {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= MIN_FLICKER_RATE_HZ) {
            return Err(Error::invalid(format!(
                "flickermeter needs a sampling rate of at least {MIN_FLICKER_RATE_HZ} Hz, got {rate}"
            )));
        }
        let fs = rate;
        let normaliser = Section::first_order([1.0, 0.0], [1.0, NORMALISATION_TAU_S], fs);
        let tau_hp = 1.0 / (TAU * HIGH_PASS_HZ);
        let high_pass = Section::first_order([0.0, tau_hp], [1.0, tau_hp], fs);

        let wc = TAU * LOW_PASS_HZ;
        let mut band: Vec<Section> = BUTTERWORTH_Q
            .iter()
            .map(|q| Section::second_order([wc * wc, 0.0, 0.0], [wc * wc, wc / q, 1.0], fs))
            .collect();
        let (w1, w2, w3, w4) = (TAU * WEIGHT_F1_HZ, TAU * WEIGHT_F2_HZ, TAU * WEIGHT_F3_HZ, TAU * WEIGHT_F4_HZ);
        let lambda = TAU * WEIGHT_LAMBDA_HZ;
        band.push(Section::second_order([0.0, WEIGHT_K * w1, 0.0], [w1 * w1, 2.0 * lambda, 1.0], fs));
        band.push(Section::second_order(
            [1.0, 1.0 / w2, 0.0],
            [1.0, 1.0 / w3 + 1.0 / w4, 1.0 / (w3 * w4)],
            fs,
        ));
        let smoothing = Section::first_order([1.0, 0.0], [1.0, SMOOTHING_TAU_S], fs);

        let h_ref = band
            .iter()
            .fold(high_pass.response(REFERENCE_HZ, fs), |h, s| h * s.response(REFERENCE_HZ, fs))
            .norm();
        let ripple = smoothing.response(2.0 * REFERENCE_HZ, fs).norm();
        let gain = 2.0 / (REFERENCE_DEPTH * REFERENCE_DEPTH * h_ref * h_ref * (1.0 + ripple));

        Ok(FlickerMeter {
            rate,
            normaliser,
            high_pass,
            band,
            smoothing,
            gain,
        })
    }

    /// Instantaneous flicker sensation, one value per input sample.
    pub fn pinst(&self, u: &[f64]) -> Vec<f64> {
        let mut normaliser = self.normaliser;
        let mut high_pass = self.high_pass;
        let mut band = self.band.clone();
        let mut smoothing = self.smoothing;

        let first = ((self.rate / LAMP_MAINS_HZ).round() as usize).clamp(1, u.len().max(1));
        let ms0 = u[..first.min(u.len())].iter().map(|v| v * v).sum::<f64>() / first as f64;
        normaliser.prime(ms0);
        high_pass.prime(1.0);

        let mut step = |v: f64| {
            let sq = v * v;
            let ms = normaliser.process(sq);
            let mut x = if ms > 0.0 { sq / ms } else { 0.0 };
            x = high_pass.process(x);
            for s in band.iter_mut() {
                x = s.process(x);
            }
            self.gain * smoothing.process(x * x)
        };
        // Settle the band filters on the repeated first cycle so a steady
        // input reads steady from the first sample.
        if !u.is_empty() {
            let warm = (WARM_UP_S * self.rate).round() as usize;
            for k in 0..warm {
                step(u[k % first]);
            }
        }
        u.iter().map(|v| step(*v)).collect()
    }
}

pub fn flicker_instantaneous(u: &[f64], rate: f64) -> Result<Vec<f64>> {
    Ok(FlickerMeter::new(rate)?.pinst(u))
}

/// Short-term severity from a Pinst record via a log-binned cumulative
/// probability function.
pub fn pst_from_pinst(pinst: &[f64]) -> Result<f64> {
    if pinst.is_empty() {
        return Err(Error::ShortWindow("empty Pinst record".into()));
    }
    if pinst.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("Pinst record contains non-finite values"));
    }
    let hi = pinst.iter().fold(0.0f64, |m, p| m.max(*p));
    if hi <= 0.0 {
        return Ok(0.0);
    }
    let top = hi * (1.0 + 1e-12);
    let lo = top / CLASSIFIER_RANGE;
    let span = (top / lo).ln();
    let mut counts = vec![0u64; CLASSIFIER_BINS];
    for p in pinst {
        let b = if *p <= lo {
            0
        } else {
            (((p / lo).ln() / span * CLASSIFIER_BINS as f64) as usize).min(CLASSIFIER_BINS - 1)
        };
        counts[b] += 1;
    }
    let edge = |b: usize| lo * (span * b as f64 / CLASSIFIER_BINS as f64).exp();
    let total = pinst.len() as f64;
    let percentile = |x: f64| -> f64 {
        let target = x / 100.0 * total;
        let mut above = 0.0;
        for b in (0..CLASSIFIER_BINS).rev() {
            let c = counts[b] as f64;
            if c > 0.0 && above + c >= target {
                let frac = (target - above) / c;
                let (e_lo, e_hi) = (edge(b), edge(b + 1));
                return e_hi * (e_lo / e_hi).powf(frac);
            }
            above += c;
        }
        lo
    };
    let pst2: f64 = PST_TERMS
        .iter()
        .map(|(k, ps)| k * ps.iter().map(|p| percentile(*p)).sum::<f64>() / ps.len() as f64)
        .sum();
    Ok(pst2.sqrt())
}

/// Short-term flicker severity of a voltage trace.
///
/// Observation shorter than 600 s needs `allow_short`; 60 s is the floor.
pub fn flicker_pst(u: &[f64], rate: f64, allow_short: bool) -> Result<f64> {
    let meter = FlickerMeter::new(rate)?;
    let duration = u.len() as f64 / rate;
    if duration < SHORT_OBSERVATION_S - 1e-9 {
        return Err(Error::ShortWindow(format!(
            "flicker observation of {duration} s is below {SHORT_OBSERVATION_S} s"
        )));
    }
    if duration < STANDARD_OBSERVATION_S - 1e-9 && !allow_short {
        return Err(Error::ShortWindow(format!(
            "flicker observation of {duration} s is below {STANDARD_OBSERVATION_S} s; enable short observation to accept it"
        )));
    }
    pst_from_pinst(&meter.pinst(u))
}

/// Long-term severity: cube root of the mean cube of 12 Pst values.
pub fn flicker_plt(pst: &[f64]) -> Result<f64> {
    if pst.len() != 12 {
        return Err(Error::invalid(format!("Plt needs exactly 12 Pst values, got {}", pst.len())));
    }
    if pst.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid("Pst values must be finite and >= 0"));
    }
    Ok((pst.iter().map(|p| p.powi(3)).sum::<f64>() / 12.0).cbrt())
}

/// Analog magnitude of the lamp-eye weighting at `f`.
#[cfg(test)]
fn analog_weighting(f: f64) -> f64 {
    let s = Complex64::new(0.0, TAU * f);
    let (w1, w2, w3, w4) = (TAU * WEIGHT_F1_HZ, TAU * WEIGHT_F2_HZ, TAU * WEIGHT_F3_HZ, TAU * WEIGHT_F4_HZ);
    let l = TAU * WEIGHT_LAMBDA_HZ;
    let h = WEIGHT_K * w1 * s / (s * s + 2.0 * l * s + w1 * w1) * (1.0 + s / w2) / ((1.0 + s / w3) * (1.0 + s / w4));
    h.norm()
}
