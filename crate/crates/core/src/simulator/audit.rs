use serde::Serialize;

use super::{SimConfig, SimResult};
use crate::error::{Error, Result};
use crate::netmodel::{Conductor, GridModel, Phase, SectionId, Tap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerAudit {
    /// Mean power delivered by the three phase sources, in watts.
    pub p_source: f64,
    /// Mean power absorbed at the attachment terminals, switch and diodes included.
    pub p_loads: f64,
    pub p_shunt: f64,
    /// Sum of R i^2 over section conductors.
    pub p_losses: f64,
    /// |source - loads - shunt - losses| relative to |source|.
    pub mismatch: f64,
    pub window_start: usize,
    pub window_len: usize,
}

/// Sample range after settling that holds the largest whole number of
/// `f_ref` cycles.
pub(crate) fn whole_cycle_window(len: usize, dt: f64, f_ref: f64, settle_cycles: usize) -> Result<(usize, usize)> {
    let per_cycle = 1.0 / (f_ref * dt);
    let start = (settle_cycles as f64 * per_cycle).ceil() as usize;
    let available = len.saturating_sub(start);
    let cycles = (available as f64 / per_cycle + 1e-9).floor();
    if cycles < 1.0 {
        return Err(Error::ShortWindow(format!(
            "{len} samples hold no full {f_ref} Hz cycle after {settle_cycles} settling cycles"
        )));
    }
    let n = ((cycles * per_cycle).round() as usize).min(available);
    Ok((start, n))
}

fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

pub fn power_audit(result: &SimResult, model: &GridModel, cfg: &SimConfig) -> Result<PowerAudit> {
    let (start, n) = whole_cycle_window(result.len(), result.dt, cfg.f_ref, cfg.settle_cycles)?;
    let w = |x: &[f64]| x[start..start + n].to_vec();

    let mut p_source = 0.0;
    for p in Phase::ALL {
        let v = w(result.node_voltage(Tap::P1, p.conductor()));
        let i = w(result.section_current(SectionId::I, p.conductor()));
        p_source += mean_product(&v, &i);
    }

    let terminal = |tap: Tap, phase: Phase, i: &[f64]| {
        let v = w(&result.phase_voltage(tap, phase));
        mean_product(&v, &w(i))
    };
    let p_loads: f64 = result
        .loads
        .iter()
        .zip(&result.load_currents)
        .map(|((t, p), i)| terminal(*t, *p, i))
        .sum();
    let p_shunt: f64 = result
        .shunt_caps
        .iter()
        .zip(&result.shunt_currents)
        .map(|((t, p), i)| terminal(*t, *p, i))
        .sum();

    let mut p_losses = 0.0;
    for s in SectionId::ALL {
        for c in Conductor::ALL {
            let i = w(result.section_current(s, c));
            p_losses += model.section(s).conductor(c).r_ohm() * mean_product(&i, &i);
        }
    }
    let mismatch = (p_source - p_loads - p_shunt - p_losses).abs() / p_source.abs().max(1e-12);
    Ok(PowerAudit {
        p_source,
        p_loads,
        p_shunt,
        p_losses,
        mismatch,
        window_start: start,
        window_len: n,
    })
}
