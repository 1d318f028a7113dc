use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use super::whole_cycles;
use crate::error::{Error, Result};

/// Highest harmonic order carried in groups and in THD.
pub const MAX_ORDER: usize = 40;

/// Grouped DFT of a synchronous window. Every bin lands in exactly one
/// group, so the squared groups sum to the squared rms.
///
/// With C cycles per window, order `h` collects bins `C*h - 1 ..= C*h + 1`
/// and interharmonic group `h` collects the bins strictly between orders
/// `h` and `h + 1`. Bins above the last interharmonic group form `residual`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicSpectrum {
    pub resolution_hz: f64,
    pub cycles: usize,
    /// Index 0 is the DC group, index h the order-h group.
    pub harmonics: Vec<f64>,
    /// Index h lies between orders h and h + 1; index 0 holds subharmonics.
    pub interharmonics: Vec<f64>,
    pub residual: f64,
    /// Rms per DFT bin.
    pub bins: Vec<f64>,
}

impl HarmonicSpectrum {
    pub fn order(&self, h: usize) -> f64 {
        self.harmonics.get(h).copied().unwrap_or(0.0)
    }

    pub fn fundamental(&self) -> f64 {
        self.order(1)
    }

    /// Root-sum-square of every group.
    pub fn total_rms(&self) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        (sq(&self.harmonics) + sq(&self.interharmonics) + self.residual * self.residual).sqrt()
    }
}

fn bin_rms(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (0..=n / 2)
        .map(|k| {
            let m = buf[k].norm() / n as f64;
            if k == 0 || 2 * k == n {
                m
            } else {
                m * 2f64.sqrt()
            }
        })
        .collect()
}

pub fn harmonic_spectrum(x: &[f64], rate: f64, f_c: f64) -> Result<HarmonicSpectrum> {
    let c = whole_cycles(x.len(), rate, f_c)?;
    let bins = bin_rms(x);
    // Sideband bins need room between neighbouring orders.
    let side = usize::from(c >= 3);
    let group = |lo: usize, hi: usize| -> f64 {
        if lo >= bins.len() || lo > hi {
            return 0.0;
        }
        bins[lo..=hi.min(bins.len() - 1)].iter().map(|b| b * b).sum::<f64>().sqrt()
    };
    let mut harmonics = Vec::with_capacity(MAX_ORDER + 1);
    harmonics.push(group(0, side));
    for h in 1..=MAX_ORDER {
        harmonics.push(group(c * h - side, c * h + side));
    }
    let interharmonics = (0..MAX_ORDER)
        .map(|h| group(c * h + side + 1, c * (h + 1) - side - 1))
        .collect();
    let residual = group(c * MAX_ORDER + side + 1, usize::MAX - 1);
    Ok(HarmonicSpectrum {
        resolution_hz: f_c / c as f64,
        cycles: c,
        harmonics,
        interharmonics,
        residual,
        bins,
    })
}

/// Total harmonic distortion over orders 2..=40.
pub fn thd(s: &HarmonicSpectrum) -> Result<f64> {
    let g1 = s.fundamental();
    if !(g1 > 0.0) {
        return Err(Error::NoFundamental("fundamental group is zero".into()));
    }
    let h: f64 = s.harmonics[2..].iter().map(|g| g * g).sum();
    Ok(h.sqrt() / g1)
}

/// Fundamental frequency from a Hann-windowed DFT with two-point
/// interpolation of the dominant peak.
pub fn fundamental_frequency(u: &[f64], rate: f64) -> Result<f64> {
    let n = u.len();
    if n < 8 {
        return Err(Error::ShortWindow(format!("{n} samples are too few for a frequency estimate")));
    }
    let mean = u.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = u
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos();
            Complex64::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf[..=n / 2].iter().map(|c| c.norm()).collect();
    let (k, peak) = mag
        .iter()
        .enumerate()
        .skip(1)
        .fold((0, 0.0), |best, (k, m)| if *m > best.1 { (k, *m) } else { best });
    let total: f64 = mag.iter().map(|m| m * m).sum();
    let lobe: f64 = mag[k.saturating_sub(2)..(k + 3).min(mag.len())].iter().map(|m| m * m).sum();
    if peak == 0.0 || lobe < 0.5 * total {
        return Err(Error::NoFundamental("no spectral line dominates the signal".into()));
    }
    if k + 1 >= mag.len() {
        return Err(Error::NoFundamental("spectral peak sits at the Nyquist bin".into()));
    }
    let delta = if mag[k + 1] > mag[k - 1] {
        let a = mag[k + 1] / mag[k];
        (2.0 * a - 1.0) / (a + 1.0)
    } else {
        let a = mag[k - 1] / mag[k];
        -(2.0 * a - 1.0) / (a + 1.0)
    };
    let f = (k as f64 + delta) * rate / n as f64;
    // Windows sized by rounding to whole samples may fall short by up to one sample.
    if f * (n + 1) as f64 / rate < 10.0 {
        return Err(Error::ShortWindow(format!(
            "frequency estimate needs 10 cycles, signal holds {:.2}",
            f * n as f64 / rate
        )));
    }
    Ok(f)
}
