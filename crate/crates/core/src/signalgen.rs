//! Supply-voltage synthesis: pure and clipped sines, harmonic mixes and
//! amplitude-modulated fluctuation, sampled as one- or three-channel waveforms.

use std::f64::consts::{SQRT_2, TAU};

use serde::Serialize;

use crate::error::{Error, Result};

/// Desk-scale default: 200 samples per 50 Hz cycle.
pub const DEFAULT_RATE_HZ: f64 = 10_000.0;

/// Upper bound for synthesized spectral content unless overridden.
pub const DEFAULT_MAX_COMPONENT_HZ: f64 = 2400.0;

/// Fundamental displacement of L1, L2, L3.
pub const PHASE_DISPLACEMENT: [f64; 3] = [0.0, -TAU / 3.0, TAU / 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingSpec {
    pub rate: f64,
    pub duration: f64,
}

impl SamplingSpec {
    pub fn new(rate: f64, duration: f64) -> Result<Self> {
        let s = SamplingSpec { rate, duration };
        s.validate()?;
        Ok(s)
    }

    pub fn desk(duration: f64) -> Result<Self> {
        Self::new(DEFAULT_RATE_HZ, duration)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::invalid(format!("sampling rate must be > 0, got {}", self.rate)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(format!("duration must be > 0, got {}", self.duration)));
        }
        let n = self.rate * self.duration;
        if (n - n.round()).abs() > 1e-6 * n.max(1.0) || n.round() < 1.0 {
            return Err(Error::invalid(format!(
                "rate * duration must be a whole sample count, got {n}"
            )));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.rate * self.duration).round() as usize
    }

    pub fn nyquist(&self) -> f64 {
        self.rate / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PureSine {
    pub u_rms: f64,
    pub f_c: f64,
    /// Extra phase added to each of L1, L2, L3 on top of the standard displacement.
    pub phase_offsets: [f64; 3],
}

impl PureSine {
    pub fn new(u_rms: f64, f_c: f64) -> Self {
        PureSine {
            u_rms,
            f_c,
            phase_offsets: [0.0; 3],
        }
    }

    pub fn with_phase(mut self, phi: f64) -> Self {
        self.phase_offsets = [phi; 3];
        self
    }

    fn validate(&self, s: &SamplingSpec, limit_hz: f64) -> Result<()> {
        if !(self.u_rms.is_finite() && self.u_rms >= 0.0) {
            return Err(Error::invalid(format!("u_rms must be >= 0, got {}", self.u_rms)));
        }
        if self.phase_offsets.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("phase offsets must be finite"));
        }
        // A lone sine may sit exactly at Nyquist (alternating samples at φ = π/2).
        check_frequency("fundamental", self.f_c, s, limit_hz, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicComponent {
    /// Multiple of the fundamental; fractional values give sub/interharmonics.
    pub order: f64,
    /// RMS magnitude in volts.
    pub magnitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicMix {
    pub f_c: f64,
    pub components: Vec<HarmonicComponent>,
}

impl HarmonicMix {
    /// Components given as `(order, rms)` pairs, all at zero phase.
    pub fn from_orders(f_c: f64, parts: &[(f64, f64)]) -> Self {
        HarmonicMix {
            f_c,
            components: parts
                .iter()
                .map(|&(order, magnitude)| HarmonicComponent {
                    order,
                    magnitude,
                    phase: 0.0,
                })
                .collect(),
        }
    }

    fn validate(&self, s: &SamplingSpec, limit_hz: f64) -> Result<()> {
        if !(self.f_c.is_finite() && self.f_c > 0.0) {
            return Err(Error::invalid(format!("f_c must be > 0, got {}", self.f_c)));
        }
        if self.components.is_empty() {
            return Err(Error::invalid("harmonic mix needs at least one component"));
        }
        for (i, c) in self.components.iter().enumerate() {
            if !(c.order.is_finite() && c.order > 0.0) {
                return Err(Error::invalid(format!("component {i}: order must be > 0")));
            }
            if !(c.magnitude.is_finite() && c.magnitude >= 0.0) {
                return Err(Error::invalid(format!("component {i}: magnitude must be >= 0")));
            }
            if !c.phase.is_finite() {
                return Err(Error::invalid(format!("component {i}: phase must be finite")));
            }
            check_frequency(&format!("component {i}"), c.order * self.f_c, s, limit_hz, true)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModulationShape {
    Sinusoidal,
    Rectangular,
}

/// Envelope modulation. `depth` is ΔU/U, the envelope peak-to-peak over nominal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Modulation {
    pub shape: ModulationShape,
    pub depth: f64,
    pub f_m: f64,
    /// Fraction of each modulation period spent on the high plateau (rectangular only).
    pub duty: f64,
}

impl Modulation {
    pub fn sinusoidal(depth: f64, f_m: f64) -> Self {
        Modulation {
            shape: ModulationShape::Sinusoidal,
            depth,
            f_m,
            duty: 0.5,
        }
    }

    pub fn rectangular(depth: f64, f_m: f64, duty: f64) -> Self {
        Modulation {
            shape: ModulationShape::Rectangular,
            depth,
            f_m,
            duty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupplySpec {
    PureSine(PureSine),
    ClippedSine { base: PureSine, clip_ratio: f64 },
    HarmonicMix(HarmonicMix),
    Modulated { base: Box<SupplySpec>, modulation: Modulation },
}

impl SupplySpec {
    /// Fundamental frequency of the underlying carrier.
    pub fn fundamental_hz(&self) -> f64 {
        match self {
            SupplySpec::PureSine(p) => p.f_c,
            SupplySpec::ClippedSine { base, .. } => base.f_c,
            SupplySpec::HarmonicMix(h) => h.f_c,
            SupplySpec::Modulated { base, .. } => base.fundamental_hz(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub rate: f64,
    pub channels: Vec<Vec<f64>>,
}

impl Waveform {
    pub fn new(rate: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::invalid(format!("waveform rate must be > 0, got {rate}")));
        }
        if channels.is_empty() {
            return Err(Error::invalid("waveform needs at least one channel"));
        }
        let n = channels[0].len();
        if let Some(c) = channels.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch(n, c.len()));
        }
        if channels.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("waveform contains non-finite samples"));
        }
        Ok(Waveform { rate, channels })
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.rate
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 / self.rate
    }

    fn map_channels(&self, mut f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Waveform {
        Waveform {
            rate: self.rate,
            channels: self
                .channels
                .iter()
                .enumerate()
                .map(|(i, c)| f(i, c))
                .collect(),
        }
    }
}

fn check_frequency(what: &str, f: f64, s: &SamplingSpec, limit_hz: f64, strict: bool) -> Result<()> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::invalid(format!("{what}: frequency must be > 0, got {f}")));
    }
    if f > s.nyquist() || (strict && f == s.nyquist()) {
        return Err(Error::Aliasing {
            what: what.to_string(),
            freq_hz: f,
            nyquist_hz: s.nyquist(),
        });
    }
    if f > limit_hz {
        return Err(Error::invalid(format!(
            "{what}: {f} Hz exceeds the synthesis limit of {limit_hz} Hz"
        )));
    }
    Ok(())
}

/// Adds `√2·rms·sin(2π f t + φ)` into `out`.
fn add_tone(out: &mut [f64], rate: f64, rms: f64, freq: f64, phase: f64) {
    let peak = SQRT_2 * rms;
    for (n, y) in out.iter_mut().enumerate() {
        let t = n as f64 / rate;
        *y += peak * (TAU * freq * t + phase).sin();
    }
}

pub fn synth_sine(spec: &PureSine, s: &SamplingSpec) -> Result<Waveform> {
    s.validate()?;
    spec.validate(s, DEFAULT_MAX_COMPONENT_HZ)?;
    let mut ch = vec![0.0; s.sample_count()];
    add_tone(&mut ch, s.rate, spec.u_rms, spec.f_c, spec.phase_offsets[0]);
    Waveform::new(s.rate, vec![ch])
}

pub fn synth_harmonic_mix(spec: &HarmonicMix, s: &SamplingSpec) -> Result<Waveform> {
    s.validate()?;
    spec.validate(s, DEFAULT_MAX_COMPONENT_HZ)?;
    let mut ch = vec![0.0; s.sample_count()];
    for c in &spec.components {
        add_tone(&mut ch, s.rate, c.magnitude, c.order * spec.f_c, c.phase);
    }
    Waveform::new(s.rate, vec![ch])
}

pub fn synth_three_phase(spec: &SupplySpec, s: &SamplingSpec) -> Result<Waveform> {
    synth_three_phase_with_limit(spec, s, DEFAULT_MAX_COMPONENT_HZ)
}

pub fn synth_three_phase_with_limit(
    spec: &SupplySpec,
    s: &SamplingSpec,
    limit_hz: f64,
) -> Result<Waveform> {
    s.validate()?;
    let n = s.sample_count();
    match spec {
        SupplySpec::PureSine(p) => {
            p.validate(s, limit_hz)?;
            let channels = (0..3)
                .map(|k| {
                    let mut ch = vec![0.0; n];
                    let phase = PHASE_DISPLACEMENT[k] + p.phase_offsets[k];
                    add_tone(&mut ch, s.rate, p.u_rms, p.f_c, phase);
                    ch
                })
                .collect();
            Waveform::new(s.rate, channels)
        }
        SupplySpec::ClippedSine { base, clip_ratio } => {
            let w = synth_three_phase_with_limit(&SupplySpec::PureSine(base.clone()), s, limit_hz)?;
            clip_waveform(&w, *clip_ratio)
        }
        SupplySpec::HarmonicMix(h) => {
            h.validate(s, limit_hz)?;
            let channels = (0..3)
                .map(|k| {
                    let mut ch = vec![0.0; n];
                    for c in &h.components {
                        // A time shift of the whole signal moves order h by h times the displacement.
                        let phase = c.phase + c.order * PHASE_DISPLACEMENT[k];
                        add_tone(&mut ch, s.rate, c.magnitude, c.order * h.f_c, phase);
                    }
                    ch
                })
                .collect();
            Waveform::new(s.rate, channels)
        }
        SupplySpec::Modulated { base, modulation } => {
            let w = synth_three_phase_with_limit(base, s, limit_hz)?;
            modulate_amplitude(&w, modulation)
        }
    }
}

/// Flat-tops every channel at `clip_ratio` times that channel's own peak.
pub fn clip_waveform(w: &Waveform, clip_ratio: f64) -> Result<Waveform> {
    if !(clip_ratio > 0.0 && clip_ratio <= 1.0) {
        return Err(Error::invalid(format!("clip_ratio must be in (0, 1], got {clip_ratio}")));
    }
    Ok(w.map_channels(|_, c| {
        let peak = c.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let level = clip_ratio * peak;
        c.iter().map(|x| x.clamp(-level, level)).collect()
    }))
}

/// Flat-tops every channel at an absolute level in volts.
pub fn clip_to_level(w: &Waveform, level: f64) -> Result<Waveform> {
    if !(level.is_finite() && level >= 0.0) {
        return Err(Error::invalid(format!("clip level must be >= 0, got {level}")));
    }
    Ok(w.map_channels(|_, c| c.iter().map(|x| x.clamp(-level, level)).collect()))
}

/// Applies the same envelope to every channel.
pub fn modulate_amplitude(base: &Waveform, m: &Modulation) -> Result<Waveform> {
    if !(m.depth.is_finite() && m.depth >= 0.0) {
        return Err(Error::invalid(format!("modulation depth must be >= 0, got {}", m.depth)));
    }
    if !(m.f_m.is_finite() && m.f_m > 0.0) {
        return Err(Error::invalid(format!("modulation frequency must be > 0, got {}", m.f_m)));
    }
    if m.f_m >= base.rate / 2.0 {
        return Err(Error::Aliasing {
            what: "modulation".into(),
            freq_hz: m.f_m,
            nyquist_hz: base.rate / 2.0,
        });
    }
    if m.shape == ModulationShape::Rectangular && !(0.0..=1.0).contains(&m.duty) {
        return Err(Error::invalid(format!("duty must be in [0, 1], got {}", m.duty)));
    }
    let half = m.depth / 2.0;
    let rate = base.rate;
    let envelope: Vec<f64> = (0..base.len())
        .map(|n| match m.shape {
            ModulationShape::Sinusoidal => 1.0 + half * (TAU * m.f_m * n as f64 / rate).sin(),
            ModulationShape::Rectangular => {
                // Evaluated half a sample late so edges land on the nearest sample.
                let phase = ((n as f64 + 0.5) / rate * m.f_m).fract();
                if phase < m.duty {
                    1.0 + half
                } else {
                    1.0 - half
                }
            }
        })
        .collect();
    Ok(base.map_channels(|_, c| c.iter().zip(&envelope).map(|(x, e)| x * e).collect()))
}
