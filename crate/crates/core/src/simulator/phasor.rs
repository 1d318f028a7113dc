use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::netlist::{self, Kind, KNOWN_NODES, SWITCH_ON_OHM};
use crate::error::{Error, Result};
use crate::loads::{LoadAttachment, SwitchMode};
use crate::netmodel::{Conductor, GridModel, Phase, SectionId, Tap};
use crate::signalgen::PHASE_DISPLACEMENT;

/// Complex rms phasors; a phasor `V` stands for `sqrt(2)|V| sin(wt + arg V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasorSolution {
    pub f_hz: f64,
    /// Indexed `tap * 4 + conductor`.
    pub node_voltages: Vec<Complex64>,
    /// Indexed `section * 4 + conductor`.
    pub section_currents: Vec<Complex64>,
    pub load_currents: Vec<Complex64>,
}

impl PhasorSolution {
    pub fn node_voltage(&self, tap: Tap, c: Conductor) -> Complex64 {
        self.node_voltages[tap.index() * 4 + c.index()]
    }

    pub fn phase_voltage(&self, tap: Tap, phase: Phase) -> Complex64 {
        self.node_voltage(tap, phase.conductor()) - self.node_voltage(tap, Conductor::N)
    }

    pub fn section_current(&self, s: SectionId, c: Conductor) -> Complex64 {
        self.section_currents[s.index() * 4 + c.index()]
    }
}

/// Balanced source of `u_rms` per phase with the standard L1, L2, L3 displacement.
pub fn solve_phasor_steady_state(
    model: &GridModel,
    attachments: &[LoadAttachment],
    u_rms: f64,
    f: f64,
) -> Result<PhasorSolution> {
    if !(u_rms.is_finite() && u_rms >= 0.0) {
        return Err(Error::invalid(format!("source voltage must be >= 0, got {u_rms}")));
    }
    let sources = PHASE_DISPLACEMENT.map(|phi| Complex64::from_polar(u_rms, phi));
    solve_phasor_with_sources(model, attachments, sources, f)
}

pub fn solve_phasor_with_sources(
    model: &GridModel,
    attachments: &[LoadAttachment],
    sources: [Complex64; 3],
    f: f64,
) -> Result<PhasorSolution> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::invalid(format!("phasor frequency must be > 0, got {f}")));
    }
    for a in attachments {
        if !a.element.is_linear() {
            return Err(Error::NonlinearElement(format!(
                "attachment at {} {} has no phasor model",
                a.tap, a.phase
            )));
        }
        if a.schedule.mode != SwitchMode::AlwaysOn {
            return Err(Error::invalid(format!(
                "phasor solution needs always-on schedules (attachment at {} {})",
                a.tap, a.phase
            )));
        }
    }
    let net = netlist::build(model, attachments)?;
    let w = TAU * f;
    let admittance = |kind: Kind| -> Complex64 {
        match kind {
            Kind::Rl { r, l } => 1.0 / Complex64::new(r, w * l),
            Kind::Resistor { r } => Complex64::new(1.0 / r, 0.0),
            Kind::Capacitor { c } => Complex64::new(0.0, w * c),
            Kind::Switch { .. } => Complex64::new(1.0 / SWITCH_ON_OHM, 0.0),
            Kind::Diode { .. } => unreachable!("rejected above"),
        }
    };

    let m = net.unknowns();
    let mut known = [Complex64::new(0.0, 0.0); KNOWN_NODES];
    known[..3].copy_from_slice(&sources);
    let mut a = DMatrix::<Complex64>::zeros(m, m);
    let mut b = DVector::<Complex64>::zeros(m);
    for br in &net.branches {
        let y = admittance(br.kind);
        let (ua, ub) = (br.a.checked_sub(KNOWN_NODES), br.b.checked_sub(KNOWN_NODES));
        match (ua, ub) {
            (Some(p), Some(q)) => {
                a[(p, p)] += y;
                a[(q, q)] += y;
                a[(p, q)] -= y;
                a[(q, p)] -= y;
            }
            (Some(p), None) => {
                a[(p, p)] += y;
                b[p] += y * known[br.b];
            }
            (None, Some(q)) => {
                a[(q, q)] += y;
                b[q] += y * known[br.a];
            }
            (None, None) => {}
        }
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("phasor nodal matrix is singular".into()))?;

    let v: Vec<Complex64> = known.iter().copied().chain(x.iter().copied()).collect();
    let current = |k: usize| {
        let br = net.branches[k];
        admittance(br.kind) * (v[br.a] - v[br.b])
    };
    Ok(PhasorSolution {
        f_hz: f,
        node_voltages: v[..Tap::ALL.len() * 4].to_vec(),
        section_currents: net.section_branch.iter().map(|&k| current(k)).collect(),
        load_currents: net.switch_branch.iter().map(|&k| current(k)).collect(),
    })
}
