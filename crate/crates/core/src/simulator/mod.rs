//! Fixed-step nodal solver for the grid with switched loads, a phasor
//! steady-state solution for linear networks, and a power audit.
//!
//! The source neutral at P1 is the ground reference. Section frequency
//! dependence (the parasitic model) is not represented in time-domain or
//! phasor solutions; both use the DC resistance and series inductance.

mod audit;
mod netlist;
mod phasor;
mod transient;

use serde::Serialize;

pub use audit::{power_audit, PowerAudit};
pub use phasor::{solve_phasor_steady_state, solve_phasor_with_sources, PhasorSolution};
pub use transient::{run_transient, run_transient_with, zero_crossings};

use crate::error::{Error, Result};
use crate::loads::DEFAULT_MAX_SWITCHING_HZ;
use crate::netmodel::{Conductor, Phase, SectionId, Tap};

/// Default settling discarded before steady-state metrics, in fundamental cycles.
pub const DEFAULT_SETTLE_CYCLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Trapezoidal,
    BackwardEuler,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trapezoidal" => Ok(Method::Trapezoidal),
            "backward_euler" | "backward-euler" => Ok(Method::BackwardEuler),
            other => Err(Error::invalid(format!(
                "unknown integration method '{other}' (trapezoidal, backward_euler)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    /// Step in seconds; defaults to the supply sample period and must match it.
    pub dt: Option<f64>,
    pub method: Method,
    /// Defaults to the supply duration.
    pub t_end: Option<f64>,
    /// Normwise backward error allowed for each linear solve.
    pub tolerance: f64,
    /// Frequency whose whole cycles define audit windows.
    pub f_ref: f64,
    pub settle_cycles: usize,
    pub max_switching_hz: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: None,
            method: Method::Trapezoidal,
            t_end: None,
            tolerance: 1e-9,
            f_ref: 50.0,
            settle_cycles: DEFAULT_SETTLE_CYCLES,
            max_switching_hz: DEFAULT_MAX_SWITCHING_HZ,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
            }
            if let Some(t_end) = self.t_end {
                if !(t_end >= dt) {
                    return Err(Error::invalid(format!("t_end must be >= dt, got {t_end}")));
                }
            }
        }
        if let Some(t_end) = self.t_end {
            if !(t_end.is_finite() && t_end > 0.0) {
                return Err(Error::invalid(format!("t_end must be > 0, got {t_end}")));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("solver tolerance must be > 0"));
        }
        if !(self.f_ref.is_finite() && self.f_ref > 0.0) {
            return Err(Error::invalid("reference frequency must be > 0"));
        }
        if !(self.max_switching_hz > 0.0) {
            return Err(Error::invalid("switching cap must be > 0"));
        }
        Ok(())
    }
}

/// One accepted time step. Node voltages are indexed `tap * 4 + conductor`
/// against ground; section currents `section * 4 + conductor`, positive away
/// from the supply.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub n: usize,
    pub t: f64,
    pub node_voltages: &'a [f64],
    pub section_currents: &'a [f64],
    /// Per attachment, flowing from the phase conductor into the load.
    pub load_currents: &'a [f64],
    /// Per shunt capacitor, phase to neutral.
    pub shunt_currents: &'a [f64],
}

impl StepView<'_> {
    pub fn node_voltage(&self, tap: Tap, c: Conductor) -> f64 {
        self.node_voltages[tap.index() * 4 + c.index()]
    }

    pub fn phase_voltage(&self, tap: Tap, phase: Phase) -> f64 {
        self.node_voltage(tap, phase.conductor()) - self.node_voltage(tap, Conductor::N)
    }

    pub fn section_current(&self, s: SectionId, c: Conductor) -> f64 {
        self.section_currents[s.index() * 4 + c.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub dt: f64,
    pub time: Vec<f64>,
    pub node_voltages: Vec<Vec<f64>>,
    pub section_currents: Vec<Vec<f64>>,
    pub load_currents: Vec<Vec<f64>>,
    /// Tap and phase of each attachment, parallel to `load_currents`.
    pub loads: Vec<(Tap, Phase)>,
    pub shunt_caps: Vec<(Tap, Phase)>,
    pub shunt_currents: Vec<Vec<f64>>,
}

impl SimResult {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn node_voltage(&self, tap: Tap, c: Conductor) -> &[f64] {
        &self.node_voltages[tap.index() * 4 + c.index()]
    }

    /// Phase-to-local-neutral voltage.
    pub fn phase_voltage(&self, tap: Tap, phase: Phase) -> Vec<f64> {
        let l = self.node_voltage(tap, phase.conductor());
        let n = self.node_voltage(tap, Conductor::N);
        l.iter().zip(n).map(|(a, b)| a - b).collect()
    }

    pub fn section_current(&self, s: SectionId, c: Conductor) -> &[f64] {
        &self.section_currents[s.index() * 4 + c.index()]
    }

    /// Worst relative KCL residual over the four conductors at `tap`, per
    /// sample. Terms below `floor` amperes are treated as `floor`.
    pub fn kcl_residual(&self, tap: Tap, floor: f64) -> Result<Vec<f64>> {
        let feed = tap
            .feeding_section()
            .ok_or_else(|| Error::invalid("KCL is not audited at the supply node"))?;
        let out: Vec<SectionId> = tap.outgoing_sections().collect();
        let mut worst = vec![0.0f64; self.len()];
        for c in Conductor::ALL {
            for (n, w) in worst.iter_mut().enumerate() {
                let mut sum = self.section_current(feed, c)[n];
                let mut largest = sum.abs();
                let mut term = |x: f64, sum: &mut f64| {
                    *sum += x;
                    largest = largest.max(x.abs());
                };
                for s in &out {
                    term(-self.section_current(*s, c)[n], &mut sum);
                }
                for (k, (t, p)) in self.loads.iter().enumerate() {
                    if *t != tap {
                        continue;
                    }
                    let i = self.load_currents[k][n];
                    if c == p.conductor() {
                        term(-i, &mut sum);
                    } else if c == Conductor::N {
                        term(i, &mut sum);
                    }
                }
                for (k, (t, p)) in self.shunt_caps.iter().enumerate() {
                    if *t != tap {
                        continue;
                    }
                    let i = self.shunt_currents[k][n];
                    if c == p.conductor() {
                        term(-i, &mut sum);
                    } else if c == Conductor::N {
                        term(i, &mut sum);
                    }
                }
                *w = w.max(sum.abs() / largest.max(floor));
            }
        }
        Ok(worst)
    }
}
