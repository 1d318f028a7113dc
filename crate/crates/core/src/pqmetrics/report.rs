use std::fmt::Write as _;

use serde::Serialize;

use super::flicker::{flicker_plt, pst_from_pinst, FlickerMeter, MIN_FLICKER_RATE_HZ, SHORT_OBSERVATION_S};
use super::spectrum::{fundamental_frequency, harmonic_spectrum, thd};
use super::{accumulate_energy, active_power, reactive_power_fundamental, rms, WindowPower};
use crate::error::{Error, Result};

/// Currents below this rms are treated as absent.
const CURRENT_FLOOR_A: f64 = 1e-6;

/// Voltage channels (one per phase) with optional aligned currents.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTraces {
    pub rate: f64,
    /// Time of the first sample, in seconds.
    pub t0: f64,
    pub voltages: Vec<Vec<f64>>,
    pub currents: Option<Vec<Vec<f64>>>,
}

impl ObservedTraces {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::invalid(format!("rate must be > 0, got {}", self.rate)));
        }
        if self.voltages.is_empty() || self.voltages.len() > 3 {
            return Err(Error::invalid(format!(
                "expected 1 to 3 voltage channels, got {}",
                self.voltages.len()
            )));
        }
        let n = self.voltages[0].len();
        for v in &self.voltages {
            if v.len() != n {
                return Err(Error::LengthMismatch(n, v.len()));
            }
        }
        if let Some(cur) = &self.currents {
            if cur.len() != self.voltages.len() {
                return Err(Error::invalid(format!(
                    "{} current channels for {} voltage channels",
                    cur.len(),
                    self.voltages.len()
                )));
            }
            for c in cur {
                if c.len() != n {
                    return Err(Error::LengthMismatch(n, c.len()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportConfig {
    pub f_nominal: f64,
    /// Fundamental cycles per aggregation window.
    pub cycles: usize,
    /// Accept a single flicker observation between 60 s and 600 s.
    pub allow_short: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            f_nominal: 50.0,
            cycles: 10,
            allow_short: false,
        }
    }
}

/// Quantities for one aggregation window on one phase.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PQReport {
    pub t_start: f64,
    pub phase: String,
    pub u_rms: f64,
    pub i_rms: f64,
    pub p: f64,
    pub q: f64,
    /// Accumulated up to the end of this window, Wh.
    pub e_p: f64,
    /// Accumulated up to the end of this window, varh.
    pub e_q: f64,
    pub f_c: f64,
    pub thdu: f64,
    pub thdi: Option<f64>,
    pub pst: Option<f64>,
    pub plt: Option<f64>,
}

/// Flicker blocks as (start sample, length).
fn flicker_blocks(len: usize, rate: f64, allow_short: bool) -> Vec<(usize, usize)> {
    let block = (super::STANDARD_OBSERVATION_S * rate).round() as usize;
    let full = len / block;
    if full > 0 {
        return (0..full).map(|b| (b * block, block)).collect();
    }
    if allow_short && len as f64 / rate >= SHORT_OBSERVATION_S - 1e-9 {
        return vec![(0, len)];
    }
    Vec::new()
}

pub fn aggregate_report(traces: &ObservedTraces, cfg: &ReportConfig) -> Result<Vec<PQReport>> {
    traces.validate()?;
    if cfg.cycles == 0 || !(cfg.f_nominal > 0.0) {
        return Err(Error::invalid("aggregation needs cycles > 0 and f_nominal > 0"));
    }
    let rate = traces.rate;
    let len = traces.voltages[0].len();
    let nominal_n = cfg.cycles as f64 * rate / cfg.f_nominal;
    if (len as f64) < nominal_n {
        return Err(Error::ShortWindow(format!(
            "{len} samples do not cover one {}-cycle window",
            cfg.cycles
        )));
    }

    let mut per_phase = Vec::with_capacity(traces.voltages.len());
    for (ch, u) in traces.voltages.iter().enumerate() {
        let f_trace = fundamental_frequency(u, rate)?;
        if (f_trace - cfg.f_nominal).abs() > 0.1 * cfg.f_nominal {
            return Err(Error::NoFundamental(format!(
                "measured {f_trace:.3} Hz is far from the nominal {} Hz",
                cfg.f_nominal
            )));
        }
        // Windows follow the measured frequency so the DFT stays synchronous.
        let n = (cfg.cycles as f64 * rate / f_trace).round() as usize;
        let f_win = cfg.cycles as f64 * rate / n as f64;
        let windows = len / n;
        if windows == 0 {
            return Err(Error::ShortWindow("trace shorter than one aggregation window".into()));
        }

        let blocks = if rate >= MIN_FLICKER_RATE_HZ {
            flicker_blocks(len, rate, cfg.allow_short)
        } else {
            Vec::new()
        };
        let mut pst = Vec::with_capacity(blocks.len());
        if !blocks.is_empty() {
            let pinst = FlickerMeter::new(rate)?.pinst(u);
            for (s, l) in &blocks {
                pst.push(pst_from_pinst(&pinst[*s..s + l])?);
            }
        }

        let current = traces.currents.as_ref().map(|c| &c[ch]);
        let mut powers = Vec::with_capacity(windows);
        let mut records = Vec::with_capacity(windows);
        for k in 0..windows {
            let range = k * n..(k + 1) * n;
            let uw = &u[range.clone()];
            let u_rms = rms(uw)?;
            let thdu = thd(&harmonic_spectrum(uw, rate, f_win)?)?;
            let f_c = fundamental_frequency(uw, rate)?;
            let (i_rms, p, q, thdi) = match current {
                Some(i) => {
                    let iw = &i[range.clone()];
                    let i_rms = rms(iw)?;
                    if i_rms < CURRENT_FLOOR_A {
                        (i_rms, active_power(uw, iw)?, 0.0, None)
                    } else {
                        let spec = harmonic_spectrum(iw, rate, f_win)?;
                        let thdi = if spec.fundamental() > 0.0 { Some(thd(&spec)?) } else { None };
                        let q = match reactive_power_fundamental(uw, iw, rate, f_win) {
                            Ok(q) => q,
                            Err(Error::NoFundamental(_)) => 0.0,
                            Err(e) => return Err(e),
                        };
                        (i_rms, active_power(uw, iw)?, q, thdi)
                    }
                }
                None => (0.0, 0.0, 0.0, None),
            };
            let t_start = traces.t0 + (k * n) as f64 / rate;
            let duration = n as f64 / rate;
            powers.push(WindowPower { t_start, duration, p, q });
            let (prev_p, prev_q) = records.last().map_or((0.0, 0.0), |r: &PQReport| (r.e_p, r.e_q));
            let block = blocks
                .iter()
                .position(|(s, l)| range.start >= *s && range.end <= s + l);
            let plt = match block {
                Some(b) if b >= 11 => Some(flicker_plt(&pst[b - 11..=b])?),
                _ => None,
            };
            records.push(PQReport {
                t_start,
                phase: format!("L{}", ch + 1),
                u_rms,
                i_rms,
                p,
                q,
                e_p: prev_p + p * duration / 3600.0,
                e_q: prev_q + q * duration / 3600.0,
                f_c,
                thdu,
                thdi,
                pst: block.map(|b| pst[b]),
                plt,
            });
        }
        let (e_p, _) = accumulate_energy(&powers)?;
        debug_assert!((e_p - records.last().map_or(0.0, |r| r.e_p)).abs() <= 1e-9 * e_p.abs().max(1.0));
        per_phase.push(records);
    }

    let windows = per_phase.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::with_capacity(windows * per_phase.len());
    for k in 0..windows {
        for recs in &per_phase {
            out.push(recs[k].clone());
        }
    }
    Ok(out)
}

/// Shortest round-trip text, in exponent form outside 1e-4..1e15.
fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

/// One line per record, `key=value` pairs, `NA` for absent values.
pub fn format_report(reports: &[PQReport]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), num);
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(
            s,
            "t_start={} phase={} U_rms={} I_rms={} P={} Q={} E_P={} E_Q={} f_c={} THDU={} THDI={} Pst={} Plt={}",
            num(r.t_start),
            r.phase,
            num(r.u_rms),
            num(r.i_rms),
            num(r.p),
            num(r.q),
            num(r.e_p),
            num(r.e_q),
            num(r.f_c),
            num(r.thdu),
            opt(r.thdi),
            opt(r.pst),
            opt(r.plt),
        );
    }
    s
}
