//! Flattening of grid model + attachments into a two-terminal branch list.
//!
//! Node ids 0..2 are the P1 phase sources and 3 is the P1 neutral (ground).
//! Tap nodes follow, then load-internal nodes.

use crate::error::{Error, Result};
use crate::loads::{LoadAttachment, LoadElement};
use crate::netmodel::{Conductor, GridModel, Phase, SectionId, Tap};

pub(crate) const KNOWN_NODES: usize = 4;
pub(crate) const GROUND: usize = 3;

pub(crate) const SWITCH_ON_OHM: f64 = 1e-3;
pub(crate) const SWITCH_OFF_OHM: f64 = 1e7;
pub(crate) const DIODE_ON_OHM: f64 = 1e-3;
pub(crate) const DIODE_OFF_SIEMENS: f64 = 1e-8;

pub(crate) fn tap_node(tap: Tap, c: Conductor) -> usize {
    tap.index() * 4 + c.index()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Kind {
    /// Series R-L; either may be zero but not both.
    Rl { r: f64, l: f64 },
    Resistor { r: f64 },
    Capacitor { c: f64 },
    /// Series switch of attachment `load`.
    Switch { load: usize },
    /// Ideal diode with forward drop, conducting a -> b; `slot` indexes the diode state vector.
    Diode { vf: f64, slot: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Branch {
    pub a: usize,
    pub b: usize,
    pub kind: Kind,
}

#[derive(Debug, Clone)]
pub(crate) struct Netlist {
    pub node_count: usize,
    pub branches: Vec<Branch>,
    /// Branch index of each attachment's switch.
    pub switch_branch: Vec<usize>,
    pub diode_count: usize,
    /// Branch index per section conductor, `[section * 4 + conductor]`.
    pub section_branch: Vec<usize>,
    pub shunt_branch: Vec<(Tap, Phase, usize)>,
}

impl Netlist {
    pub fn unknowns(&self) -> usize {
        self.node_count - KNOWN_NODES
    }
}

pub(crate) fn build(model: &GridModel, attachments: &[LoadAttachment]) -> Result<Netlist> {
    model.validate()?;
    // P1 occupies ids 0..4; P1 tap-node ids coincide with the known nodes.
    let mut node_count = Tap::ALL.len() * 4;
    let mut branches = Vec::new();
    let push = |branches: &mut Vec<Branch>, br: Branch| {
        branches.push(br);
        branches.len() - 1
    };

    let mut section_branch = Vec::with_capacity(24);
    for sec in SectionId::ALL {
        for c in Conductor::ALL {
            let p = model.section(sec).conductor(c);
            let (r, l) = (p.r_ohm(), p.l_h());
            if r == 0.0 && l == 0.0 {
                return Err(Error::invalid(format!(
                    "section {sec} conductor {c} has zero impedance; time-domain solution needs R > 0 or L > 0"
                )));
            }
            let br = Branch {
                a: tap_node(sec.parent_tap(), c),
                b: tap_node(sec.child_tap(), c),
                kind: Kind::Rl { r, l },
            };
            section_branch.push(push(&mut branches, br));
        }
    }

    let mut shunt_branch = Vec::new();
    for (tap, phase, farads) in model.shunt_capacitors() {
        if farads <= 0.0 {
            continue;
        }
        let br = Branch {
            a: tap_node(tap, phase.conductor()),
            b: tap_node(tap, Conductor::N),
            kind: Kind::Capacitor { c: farads },
        };
        let idx = push(&mut branches, br);
        shunt_branch.push((tap, phase, idx));
    }

    let mut switch_branch = Vec::with_capacity(attachments.len());
    let mut diode_count = 0;
    for (k, att) in attachments.iter().enumerate() {
        if att.tap == Tap::P1 {
            return Err(Error::invalid("loads cannot attach at P1, the supply input"));
        }
        att.element.validate()?;
        let line = tap_node(att.tap, att.phase.conductor());
        let neutral = tap_node(att.tap, Conductor::N);
        let x = node_count;
        node_count += 1;
        let sw = push(&mut branches, Branch { a: line, b: x, kind: Kind::Switch { load: k } });
        switch_branch.push(sw);

        let mut add = |a: usize, b: usize, kind: Kind| {
            push(&mut branches, Branch { a, b, kind });
        };
        match att.element {
            LoadElement::Resistive { r_ohm } => add(x, neutral, Kind::Resistor { r: r_ohm }),
            LoadElement::Capacitive { c_uf } => add(x, neutral, Kind::Capacitor { c: c_uf * 1e-6 }),
            LoadElement::Inductive { l_h, r_series_ohm } => add(x, neutral, Kind::Rl { r: r_series_ohm, l: l_h }),
            LoadElement::SeriesRlc { r_ohm, l_h, c_uf } => {
                if c_uf > 0.0 && (r_ohm > 0.0 || l_h > 0.0) {
                    let y = node_count;
                    node_count += 1;
                    add(x, y, Kind::Rl { r: r_ohm, l: l_h });
                    add(y, neutral, Kind::Capacitor { c: c_uf * 1e-6 });
                } else if c_uf > 0.0 {
                    add(x, neutral, Kind::Capacitor { c: c_uf * 1e-6 });
                } else {
                    add(x, neutral, Kind::Rl { r: r_ohm, l: l_h });
                }
            }
            LoadElement::ParallelRlc { r_ohm, l_h, c_uf } => {
                if r_ohm > 0.0 {
                    add(x, neutral, Kind::Resistor { r: r_ohm });
                }
                if l_h > 0.0 {
                    add(x, neutral, Kind::Rl { r: 0.0, l: l_h });
                }
                if c_uf > 0.0 {
                    add(x, neutral, Kind::Capacitor { c: c_uf * 1e-6 });
                }
            }
            LoadElement::GraetzRectifier {
                r_dc_ohm,
                c_dc_uf,
                diode_drop_v,
            } => {
                let (p, m) = (node_count, node_count + 1);
                node_count += 2;
                for (a, b) in [(x, p), (neutral, p), (m, x), (m, neutral)] {
                    add(a, b, Kind::Diode { vf: diode_drop_v, slot: diode_count });
                    diode_count += 1;
                }
                add(p, m, Kind::Resistor { r: r_dc_ohm });
                if c_dc_uf > 0.0 {
                    add(p, m, Kind::Capacitor { c: c_dc_uf * 1e-6 });
                }
            }
        }
    }

    Ok(Netlist {
        node_count,
        branches,
        switch_branch,
        diode_count,
        section_branch,
        shunt_branch,
    })
}
