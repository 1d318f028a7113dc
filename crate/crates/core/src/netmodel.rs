//! The single-fed radial grid model: six lumped R–L sections per conductor,
//! tap points P1–P7, optional phase-to-neutral shunt capacitance, and the
//! impedance calculations used to characterize it.
//!
//! Topology (P1 is the supply input):
//!
//! ```text
//!   P1 --I-- P2 --II-- P3 --III-- P4 --IV-- P5
//!                       |
//!                       +--V-- P6 --VI-- P7
//! ```
//!
//! Resistances are stored in milliohms, inductances in microhenries, shunt
//! capacitances in nanofarads; impedances are returned in milliohms.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency at which the measured reactances were recorded.
pub const MEASUREMENT_FREQUENCY_HZ: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Conductor {
    L1,
    L2,
    L3,
    N,
}

impl Conductor {
    pub const ALL: [Conductor; 4] = [Conductor::L1, Conductor::L2, Conductor::L3, Conductor::N];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn phase(self) -> Option<Phase> {
        match self {
            Conductor::L1 => Some(Phase::L1),
            Conductor::L2 => Some(Phase::L2),
            Conductor::L3 => Some(Phase::L3),
            Conductor::N => None,
        }
    }
}

impl fmt::Display for Conductor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Conductor::L1 => "L1",
            Conductor::L2 => "L2",
            Conductor::L3 => "L3",
            Conductor::N => "N",
        };
        f.write_str(s)
    }
}

impl FromStr for Conductor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L1" => Ok(Conductor::L1),
            "L2" => Ok(Conductor::L2),
            "L3" => Ok(Conductor::L3),
            "N" => Ok(Conductor::N),
            other => Err(Error::UnknownConductor(other.to_string())),
        }
    }
}

/// A phase conductor; loads connect between a phase and the local neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Phase {
    L1,
    L2,
    L3,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::L1, Phase::L2, Phase::L3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn conductor(self) -> Conductor {
        Conductor::ALL[self.index()]
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.conductor().fmt(f)
    }
}

impl FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Conductor::from_str(s)?
            .phase()
            .ok_or_else(|| Error::invalid("loads connect to a phase conductor (L1, L2, L3), not N"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SectionId {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl SectionId {
    pub const ALL: [SectionId; 6] = [
        SectionId::I,
        SectionId::II,
        SectionId::III,
        SectionId::IV,
        SectionId::V,
        SectionId::VI,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Tap on the supply side of the section.
    pub fn parent_tap(self) -> Tap {
        match self {
            SectionId::I => Tap::P1,
            SectionId::II => Tap::P2,
            SectionId::III | SectionId::V => Tap::P3,
            SectionId::IV => Tap::P4,
            SectionId::VI => Tap::P6,
        }
    }

    /// Tap on the load side of the section.
    pub fn child_tap(self) -> Tap {
        match self {
            SectionId::I => Tap::P2,
            SectionId::II => Tap::P3,
            SectionId::III => Tap::P4,
            SectionId::IV => Tap::P5,
            SectionId::V => Tap::P6,
            SectionId::VI => Tap::P7,
        }
    }
}

impl fmt::Display for SectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SectionId::I => "I",
            SectionId::II => "II",
            SectionId::III => "III",
            SectionId::IV => "IV",
            SectionId::V => "V",
            SectionId::VI => "VI",
        };
        f.write_str(s)
    }
}

impl FromStr for SectionId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SectionId::ALL
            .into_iter()
            .find(|id| id.to_string() == s.trim())
            .ok_or_else(|| Error::UnknownSection(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Tap {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
}

impl Tap {
    pub const ALL: [Tap; 7] = [Tap::P1, Tap::P2, Tap::P3, Tap::P4, Tap::P5, Tap::P6, Tap::P7];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Section feeding this tap; `None` for the supply input.
    pub fn feeding_section(self) -> Option<SectionId> {
        SectionId::ALL.into_iter().find(|s| s.child_tap() == self)
    }

    /// Sections leaving this tap toward the loads.
    pub fn outgoing_sections(self) -> impl Iterator<Item = SectionId> {
        SectionId::ALL.into_iter().filter(move |s| s.parent_tap() == self)
    }

    /// Sections on the unique path from P1 to this tap, supply side first.
    pub fn path(self) -> Vec<SectionId> {
        let mut path = Vec::new();
        let mut tap = self;
        while let Some(sec) = tap.feeding_section() {
            path.push(sec);
            tap = sec.parent_tap();
        }
        path.reverse();
        path
    }
}

impl fmt::Display for Tap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.index() + 1)
    }
}

impl FromStr for Tap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Tap::ALL
            .into_iter()
            .find(|t| t.to_string() == s.trim())
            .ok_or_else(|| Error::UnknownTap(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConductorParams {
    pub r_mohm: f64,
    pub l_uh: f64,
}

impl ConductorParams {
    pub fn new(r_mohm: f64, l_uh: f64) -> Self {
        ConductorParams { r_mohm, l_uh }
    }

    /// Series inductance reproducing reactance `x_mohm` at 50 Hz.
    pub fn from_measurement(r_mohm: f64, x_mohm: f64) -> Self {
        ConductorParams {
            r_mohm,
            l_uh: x_mohm / (TAU * MEASUREMENT_FREQUENCY_HZ) * 1e3,
        }
    }

    pub fn r_ohm(&self) -> f64 {
        self.r_mohm * 1e-3
    }

    pub fn l_h(&self) -> f64 {
        self.l_uh * 1e-6
    }

    fn validate(&self) -> Result<()> {
        if !(self.r_mohm.is_finite() && self.r_mohm >= 0.0 && self.l_uh.is_finite() && self.l_uh >= 0.0) {
            return Err(Error::invalid(format!(
                "conductor parameters must be >= 0, got R = {} mOhm, L = {} uH",
                self.r_mohm, self.l_uh
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Section {
    pub id: SectionId,
    /// Indexed by [`Conductor::index`].
    pub conductors: [ConductorParams; 4],
}

impl Section {
    pub fn uniform(id: SectionId, params: ConductorParams) -> Self {
        Section {
            id,
            conductors: [params; 4],
        }
    }

    pub fn conductor(&self, c: Conductor) -> &ConductorParams {
        &self.conductors[c.index()]
    }
}

/// Optional resistance rise with frequency, `R(f) = R_dc·(1 + (f/f_k)^α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParasiticModel {
    pub f_k_hz: f64,
    pub alpha: f64,
}

impl Default for ParasiticModel {
    fn default() -> Self {
        ParasiticModel {
            f_k_hz: 20_000.0,
            alpha: 0.5,
        }
    }
}

impl ParasiticModel {
    pub fn resistance_factor(&self, f: f64) -> f64 {
        1.0 + (f / self.f_k_hz).powf(self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridModel {
    /// Indexed by [`SectionId::index`].
    pub sections: [Section; 6],
    /// Phase-to-neutral capacitance per tap, nF for L1, L2, L3.
    pub shunt_caps_nf: BTreeMap<Tap, [f64; 3]>,
    pub parasitic: Option<ParasiticModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpedancePoint {
    pub f_hz: f64,
    pub r_mohm: f64,
    pub x_mohm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

impl FromStr for Spacing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(Spacing::Log),
            "linear" => Ok(Spacing::Linear),
            other => Err(Error::invalid(format!("spacing must be 'log' or 'linear', got '{other}'"))),
        }
    }
}

const NOMINAL: [(f64, f64); 6] = [
    (150.0, 100.0),
    (150.0, 100.0),
    (100.0, 220.0),
    (50.0, 6.8),
    (100.0, 220.0),
    (50.0, 6.8),
];

// Bridge readings at 50 Hz, [section][conductor] in mOhm.
const MEASURED_R: [[f64; 4]; 6] = [
    [172.6, 179.1, 176.3, 181.5],
    [163.4, 164.7, 169.4, 164.3],
    [126.8, 125.5, 125.7, 129.2],
    [61.0, 60.8, 62.6, 61.1],
    [129.6, 131.2, 130.7, 127.3],
    [59.8, 60.9, 61.3, 62.5],
];
const MEASURED_X: [[f64; 4]; 6] = [
    [32.9, 33.4, 33.6, 33.5],
    [33.7, 33.3, 33.3, 33.1],
    [68.8, 68.9, 67.5, 68.8],
    [2.7, 2.7, 2.7, 2.6],
    [69.2, 68.9, 67.7, 68.2],
    [2.7, 2.8, 2.7, 2.6],
];

/// Measured 50 Hz resistance and reactance of one conductor, in mOhm.
pub fn measured_reading(section: SectionId, conductor: Conductor) -> (f64, f64) {
    (
        MEASURED_R[section.index()][conductor.index()],
        MEASURED_X[section.index()][conductor.index()],
    )
}

pub fn nominal_model() -> GridModel {
    let sections = SectionId::ALL.map(|id| {
        let (r, l) = NOMINAL[id.index()];
        Section::uniform(id, ConductorParams::new(r, l))
    });
    GridModel {
        sections,
        shunt_caps_nf: BTreeMap::new(),
        parasitic: None,
    }
}

pub fn measured_model() -> GridModel {
    let sections = SectionId::ALL.map(|id| Section {
        id,
        conductors: Conductor::ALL.map(|c| {
            let (r, x) = measured_reading(id, c);
            ConductorParams::from_measurement(r, x)
        }),
    });
    GridModel {
        sections,
        shunt_caps_nf: BTreeMap::new(),
        parasitic: None,
    }
}

/// Series impedance of one conductor of `sec` at `f`, in mOhm.
pub fn section_impedance(
    sec: &Section,
    conductor: Conductor,
    f: f64,
    parasitic: Option<&ParasiticModel>,
) -> Result<Complex64> {
    if !(f.is_finite() && f >= 0.0) {
        return Err(Error::invalid(format!("frequency must be >= 0, got {f}")));
    }
    let p = sec.conductor(conductor);
    let r = match parasitic {
        Some(m) => p.r_mohm * m.resistance_factor(f),
        None => p.r_mohm,
    };
    // 2π f [Hz] · L [uH] · 1e-6 [H/uH] · 1e3 [mOhm/Ohm]
    let x = TAU * f * p.l_uh * 1e-3;
    Ok(Complex64::new(r, x))
}

impl GridModel {
    pub fn section(&self, id: SectionId) -> &Section {
        &self.sections[id.index()]
    }

    pub fn section_impedance(&self, id: SectionId, conductor: Conductor, f: f64) -> Result<Complex64> {
        section_impedance(self.section(id), conductor, f, self.parasitic.as_ref())
    }

    pub fn with_parasitic(mut self, m: ParasiticModel) -> Self {
        self.parasitic = Some(m);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.sections.iter().enumerate() {
            if s.id.index() != i {
                return Err(Error::invalid(format!("section slot {i} holds section {}", s.id)));
            }
            for c in &s.conductors {
                c.validate()?;
            }
        }
        for (tap, caps) in &self.shunt_caps_nf {
            if caps.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(Error::invalid(format!("shunt capacitance at {tap} must be >= 0")));
            }
        }
        if let Some(m) = &self.parasitic {
            if !(m.f_k_hz > 0.0 && m.alpha.is_finite()) {
                return Err(Error::invalid("parasitic model needs f_k > 0 and finite alpha"));
            }
        }
        Ok(())
    }

    /// Non-zero shunt capacitances as (tap, phase, farads).
    pub fn shunt_capacitors(&self) -> impl Iterator<Item = (Tap, Phase, f64)> + '_ {
        self.shunt_caps_nf.iter().flat_map(|(tap, caps)| {
            Phase::ALL
                .into_iter()
                .filter(move |p| caps[p.index()] > 0.0)
                .map(move |p| (*tap, p, caps[p.index()] * 1e-9))
        })
    }

    /// Overrides from the structured-text model file, applied on top of `base`.
    pub fn from_override_toml(text: &str) -> Result<GridModel> {
        let raw: RawModelFile = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| format!("byte {}", s.start))
                .unwrap_or_else(|| "model file".into());
            Error::parse(location, e.message().to_string())
        })?;
        let mut model = match raw.base.as_deref().unwrap_or("nominal") {
            "nominal" => nominal_model(),
            "measured" => measured_model(),
            other => {
                return Err(Error::parse("base", format!("expected 'nominal' or 'measured', got '{other}'")))
            }
        };
        for (sec_name, conductors) in &raw.sections {
            let sec = SectionId::from_str(sec_name)
                .map_err(|e| Error::parse(format!("sections.{sec_name}"), e.to_string()))?;
            for (cond_name, ov) in conductors {
                let targets: Vec<Conductor> = if cond_name == "all" {
                    Conductor::ALL.to_vec()
                } else {
                    vec![Conductor::from_str(cond_name).map_err(|e| {
                        Error::parse(format!("sections.{sec_name}.{cond_name}"), e.to_string())
                    })?]
                };
                for c in targets {
                    let p = &mut model.sections[sec.index()].conductors[c.index()];
                    if let Some(r) = ov.r_mohm {
                        p.r_mohm = r;
                    }
                    if let Some(l) = ov.l_uh {
                        p.l_uh = l;
                    }
                }
            }
        }
        for (tap_name, caps) in &raw.shunt_caps {
            let tap = Tap::from_str(tap_name)
                .map_err(|e| Error::parse(format!("shunt_caps.{tap_name}"), e.to_string()))?;
            let c = match caps {
                RawCaps::All(c) => [*c; 3],
                RawCaps::PerPhase(c) => *c,
            };
            model.shunt_caps_nf.insert(tap, c);
        }
        if let Some(p) = raw.parasitic {
            let d = ParasiticModel::default();
            model.parasitic = Some(ParasiticModel {
                f_k_hz: p.f_k_hz.unwrap_or(d.f_k_hz),
                alpha: p.alpha.unwrap_or(d.alpha),
            });
        }
        model.validate()?;
        Ok(model)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModelFile {
    base: Option<String>,
    #[serde(default)]
    sections: BTreeMap<String, BTreeMap<String, RawConductor>>,
    #[serde(default)]
    shunt_caps: BTreeMap<String, RawCaps>,
    parasitic: Option<RawParasitic>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConductor {
    #[serde(rename = "R_mOhm")]
    r_mohm: Option<f64>,
    #[serde(rename = "L_uH")]
    l_uh: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawCaps {
    All(f64),
    PerPhase([f64; 3]),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParasitic {
    #[serde(rename = "f_k_Hz")]
    f_k_hz: Option<f64>,
    alpha: Option<f64>,
}

/// Sum of section impedances on the path from P1 to `tap`, in mOhm.
pub fn path_impedance(model: &GridModel, tap: Tap, conductor: Conductor, f: f64) -> Result<Complex64> {
    tap.path()
        .into_iter()
        .try_fold(Complex64::new(0.0, 0.0), |acc, s| {
            Ok(acc + model.section_impedance(s, conductor, f)?)
        })
}

pub fn frequency_sweep(
    model: &GridModel,
    tap: Tap,
    conductor: Conductor,
    f_min: f64,
    f_max: f64,
    n_points: usize,
    spacing: Spacing,
) -> Result<Vec<ImpedancePoint>> {
    if !(f_min.is_finite() && f_max.is_finite() && f_min > 0.0 && f_min < f_max) {
        return Err(Error::invalid(format!(
            "sweep range needs 0 < f_min < f_max, got {f_min}..{f_max}"
        )));
    }
    if n_points < 2 {
        return Err(Error::invalid(format!("sweep needs at least 2 points, got {n_points}")));
    }
    let last = (n_points - 1) as f64;
    (0..n_points)
        .map(|i| {
            let u = i as f64 / last;
            let f = match spacing {
                Spacing::Linear => f_min + (f_max - f_min) * u,
                Spacing::Log => f_min * (f_max / f_min).powf(u),
            };
            // Pin the endpoints against rounding in powf.
            let f = if i == 0 { f_min } else if i == n_points - 1 { f_max } else { f };
            let z = path_impedance(model, tap, conductor, f)?;
            Ok(ImpedancePoint {
                f_hz: f,
                r_mohm: z.re,
                x_mohm: z.im,
            })
        })
        .collect()
}

/// Returns a copy of `model` with `c_nf` nanofarads added phase-to-neutral on every phase at `tap`.
pub fn add_shunt_capacitance(model: &GridModel, tap: Tap, c_nf: f64) -> Result<GridModel> {
    if !(c_nf.is_finite() && c_nf >= 0.0) {
        return Err(Error::invalid(format!("capacitance must be >= 0, got {c_nf}")));
    }
    let mut out = model.clone();
    let entry = out.shunt_caps_nf.entry(tap).or_insert([0.0; 3]);
    for c in entry.iter_mut() {
        *c += c_nf;
    }
    Ok(out)
}

/// Admittance seen by the supply between `phase` and neutral at P1 with no loads
/// attached, in siemens. Zero when there is no shunt path.
pub fn driving_point_admittance(model: &GridModel, phase: Phase, f: f64) -> Result<Complex64> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::invalid(format!("frequency must be > 0, got {f}")));
    }
    let omega = TAU * f;
    let cap_y = |tap: Tap| -> Complex64 {
        let c = model
            .shunt_caps_nf
            .get(&tap)
            .map_or(0.0, |c| c[phase.index()] * 1e-9);
        Complex64::new(0.0, omega * c)
    };
    // Unknowns: taps P2..P7 on the phase conductor, then on the neutral.
    let idx = |tap: Tap, neutral: bool| (tap.index() - 1) + if neutral { 6 } else { 0 };
    let mut y = DMatrix::<Complex64>::zeros(12, 12);
    let mut rhs = DVector::<Complex64>::zeros(12);
    let source = Complex64::new(1.0, 0.0);
    for sec in SectionId::ALL {
        for (neutral, cond) in [(false, phase.conductor()), (true, Conductor::N)] {
            let g = 1.0 / (model.section_impedance(sec, cond, f)? * 1e-3);
            let (a, b) = (sec.parent_tap(), sec.child_tap());
            let j = idx(b, neutral);
            y[(j, j)] += g;
            if a == Tap::P1 {
                if !neutral {
                    rhs[j] += g * source;
                }
            } else {
                let i = idx(a, neutral);
                y[(i, i)] += g;
                y[(i, j)] -= g;
                y[(j, i)] -= g;
            }
        }
    }
    for tap in &Tap::ALL[1..] {
        let yc = cap_y(*tap);
        let (i, j) = (idx(*tap, false), idx(*tap, true));
        y[(i, i)] += yc;
        y[(j, j)] += yc;
        y[(i, j)] -= yc;
        y[(j, i)] -= yc;
    }
    let v = y
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("driving-point network".into()))?;
    let mut current = cap_y(Tap::P1) * source;
    for sec in Tap::P1.outgoing_sections() {
        let z = model.section_impedance(sec, phase.conductor(), f)? * 1e-3;
        current += (source - v[idx(sec.child_tap(), false)]) / z;
    }
    Ok(current / source)
}

/// Driving-point impedance in mOhm; `None` when the network is open (no shunt capacitance).
pub fn driving_point_impedance(model: &GridModel, phase: Phase, f: f64) -> Result<Option<Complex64>> {
    if model.shunt_capacitors().all(|(_, p, _)| p != phase) {
        return Ok(None);
    }
    let y = driving_point_admittance(model, phase, f)?;
    Ok(Some(1e3 / y))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 0.05;

    #[test]
    fn nominal_values() {
        let m = nominal_model();
        let s1 = m.section(SectionId::I).conductor(Conductor::L1);
        assert_eq!((s1.r_mohm, s1.l_uh), (150.0, 100.0));
        let s4 = m.section(SectionId::IV).conductor(Conductor::N);
        assert_eq!((s4.r_mohm, s4.l_uh), (50.0, 6.8));
        assert_eq!(m.section(SectionId::III).conductors, m.section(SectionId::V).conductors);
        assert_eq!(m.section(SectionId::IV).conductors, m.section(SectionId::VI).conductors);
        assert!(m.shunt_caps_nf.is_empty());
    }

    #[test]
    fn nominal_reactance_row() {
        let m = nominal_model();
        let expected = [31.4, 31.4, 69.1, 2.1, 69.1, 2.1];
        for (sec, x) in SectionId::ALL.into_iter().zip(expected) {
            for c in Conductor::ALL {
                let z = m.section_impedance(sec, c, 50.0).unwrap();
                assert!((z.im - x).abs() < TOL, "{sec} {c}: {}", z.im);
            }
        }
    }

    #[test]
    fn measured_values_round_trip() {
        let m = measured_model();
        let z = m.section_impedance(SectionId::I, Conductor::L1, 50.0).unwrap();
        assert!((z.re - 172.6).abs() < 1e-12);
        assert!((z.im - 32.9).abs() < 1e-9);
        let z = m.section_impedance(SectionId::VI, Conductor::N, 50.0).unwrap();
        assert!((z.re - 62.5).abs() < 1e-12);
        assert!((z.im - 2.6).abs() < 1e-9);
        let l = m.section(SectionId::I).conductor(Conductor::L1).l_uh;
        assert!((l - 104.7).abs() < 0.05, "L = {l}");
    }

    #[test]
    fn section_impedance_cases() {
        let m = nominal_model();
        let z = m.section_impedance(SectionId::I, Conductor::L1, 50.0).unwrap();
        assert!((z.im - 31.4).abs() < TOL);
        for sec in SectionId::ALL {
            let z = m.section_impedance(sec, Conductor::N, 0.0).unwrap();
            assert_eq!(z.im, 0.0);
            assert_eq!(z.re, m.section(sec).conductor(Conductor::N).r_mohm);
        }
        let z = m.section_impedance(SectionId::III, Conductor::L2, 100.0).unwrap();
        assert!((z.im - 138.2).abs() < TOL, "{}", z.im);
        assert!(m.section_impedance(SectionId::III, Conductor::L2, -1.0).is_err());
        assert!(matches!("L4".parse::<Conductor>(), Err(Error::UnknownConductor(_))));
    }

    #[test]
    fn path_sums() {
        let z = path_impedance(&nominal_model(), Tap::P5, Conductor::L1, 50.0).unwrap();
        assert!((z.re - 450.0).abs() < 1e-9);
        // 134.0 is the sum of four table entries each rounded to 0.1 mOhm.
        assert!((z.im - 134.0).abs() < 0.1, "{}", z.im);

        let z = path_impedance(&measured_model(), Tap::P5, Conductor::L1, 50.0).unwrap();
        assert!((z.re - 523.8).abs() < 1e-9);
        assert!((z.im - 138.1).abs() < 1e-9);

        let z = path_impedance(&nominal_model(), Tap::P1, Conductor::L1, 50.0).unwrap();
        assert_eq!(z, Complex64::new(0.0, 0.0));
        assert!(matches!("P9".parse::<Tap>(), Err(Error::UnknownTap(_))));
    }

    #[test]
    fn topology() {
        assert_eq!(Tap::P5.path(), vec![SectionId::I, SectionId::II, SectionId::III, SectionId::IV]);
        assert_eq!(Tap::P7.path(), vec![SectionId::I, SectionId::II, SectionId::V, SectionId::VI]);
        assert_eq!(Tap::P3.outgoing_sections().collect::<Vec<_>>(), vec![SectionId::III, SectionId::V]);
        assert!(Tap::P1.path().is_empty());
        for t in Tap::ALL {
            assert_eq!(t.to_string().parse::<Tap>().unwrap(), t);
        }
    }

    #[test]
    fn sweep_ideal_and_parasitic() {
        let m = nominal_model();
        let pts = frequency_sweep(&m, Tap::P7, Conductor::L2, 20.0, 200_000.0, 41, Spacing::Log).unwrap();
        assert_eq!(pts.len(), 41);
        assert_eq!(pts[0].f_hz, 20.0);
        assert_eq!(pts[40].f_hz, 200_000.0);
        for w in pts.windows(2) {
            assert!(w[1].x_mohm > w[0].x_mohm);
            assert_eq!(w[1].r_mohm, w[0].r_mohm);
        }
        let x = |f: f64| path_impedance(&m, Tap::P5, Conductor::L1, f).unwrap().im;
        for f in [20.0, 50.0, 1234.5, 50_000.0] {
            assert!((x(2.0 * f) - 2.0 * x(f)).abs() <= 1e-12 * x(2.0 * f));
        }

        let p = m.clone().with_parasitic(ParasiticModel::default());
        let r = |f: f64| path_impedance(&p, Tap::P5, Conductor::L1, f).unwrap().re;
        assert!(r(200_000.0) > r(20_000.0));
        assert!(r(20_000.0) > r(50.0));
        assert!(r(200_000.0) > r(20.0));

        assert!(frequency_sweep(&m, Tap::P5, Conductor::L1, 0.0, 10.0, 5, Spacing::Log).is_err());
        assert!(frequency_sweep(&m, Tap::P5, Conductor::L1, 100.0, 10.0, 5, Spacing::Log).is_err());
        assert!(frequency_sweep(&m, Tap::P5, Conductor::L1, 10.0, 100.0, 1, Spacing::Linear).is_err());
    }

    #[test]
    fn shunt_capacitance_effects() {
        let m = nominal_model();
        let same = add_shunt_capacitance(&m, Tap::P5, 0.0).unwrap();
        assert_eq!(driving_point_impedance(&same, Phase::L1, 1000.0).unwrap(), None);
        assert!(add_shunt_capacitance(&m, Tap::P5, -1.0).is_err());

        // Without shunt capacitance the supply sees an open circuit.
        assert!(driving_point_admittance(&m, Phase::L1, 200_000.0).unwrap().norm() < 1e-12);
        let with_c = add_shunt_capacitance(&m, Tap::P5, 10.0).unwrap();
        let y = driving_point_admittance(&with_c, Phase::L1, 200_000.0).unwrap();
        assert!(y.norm() > 0.0);
        // Oracle: series chain I-II-III-IV on L1 and N closed by the 10 nF capacitor.
        let w = TAU * 200_000.0;
        let zl = path_impedance(&m, Tap::P5, Conductor::L1, 200_000.0).unwrap() * 1e-3;
        let zn = path_impedance(&m, Tap::P5, Conductor::N, 200_000.0).unwrap() * 1e-3;
        let zc = Complex64::new(0.0, -1.0 / (w * 10e-9));
        let expect = 1.0 / (zl + zn + zc);
        assert!((y - expect).norm() < 1e-9 * expect.norm());
    }

    #[test]
    fn shunt_caps_everywhere_resonate() {
        let mut m = nominal_model();
        for tap in &Tap::ALL[1..] {
            m = add_shunt_capacitance(&m, *tap, 10.0).unwrap();
        }
        let pts: Vec<f64> = (0..400)
            .map(|i| 20.0 * (10_000.0_f64).powf(i as f64 / 399.0))
            .collect();
        let x: Vec<f64> = pts
            .iter()
            .map(|f| driving_point_impedance(&m, Phase::L1, *f).unwrap().unwrap().im)
            .collect();
        assert!(x[0] < 0.0, "capacitive at low frequency");
        assert!(x.windows(2).any(|w| w[0] < 0.0 && w[1] >= 0.0), "reactance must cross zero below 200 kHz");
    }

    #[test]
    fn override_file() {
        let text = r#"
base = "measured"
[sections.III.L1]
R_mOhm = 130.0
[sections.IV.all]
L_uH = 10.0
[shunt_caps]
P5 = 10.0
P7 = [1.0, 2.0, 3.0]
[parasitic]
alpha = 0.7
"#;
        let m = GridModel::from_override_toml(text).unwrap();
        assert_eq!(m.section(SectionId::III).conductor(Conductor::L1).r_mohm, 130.0);
        assert_eq!(m.section(SectionId::III).conductor(Conductor::L2).r_mohm, 125.5);
        for c in Conductor::ALL {
            assert_eq!(m.section(SectionId::IV).conductor(c).l_uh, 10.0);
        }
        assert_eq!(m.shunt_caps_nf[&Tap::P5], [10.0; 3]);
        assert_eq!(m.shunt_caps_nf[&Tap::P7], [1.0, 2.0, 3.0]);
        assert_eq!(m.parasitic.unwrap().alpha, 0.7);
        assert_eq!(m.parasitic.unwrap().f_k_hz, 20_000.0);

        let err = GridModel::from_override_toml("[sections.VII.L1]\nR_mOhm = 1.0").unwrap_err();
        assert!(err.to_string().contains("sections.VII"), "{err}");
        assert!(GridModel::from_override_toml("[shunt_caps]\nP9 = 1.0").is_err());
        assert!(GridModel::from_override_toml("bogus = 1").is_err());
        assert!(GridModel::from_override_toml("[sections.I.L1]\nR_mOhm = -1.0").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_conductor() -> impl Strategy<Value = Conductor> {
            prop::sample::select(Conductor::ALL.to_vec())
        }

        proptest! {
            #[test]
            fn path_is_sum_of_sections(f in 0.0f64..200_000.0, c in any_conductor(), measured in any::<bool>()) {
                let m = if measured { measured_model() } else { nominal_model() };
                let z = path_impedance(&m, Tap::P5, c, f).unwrap();
                let mut sum = Complex64::new(0.0, 0.0);
                for s in [SectionId::I, SectionId::II, SectionId::III, SectionId::IV] {
                    sum += m.section_impedance(s, c, f).unwrap();
                }
                prop_assert_eq!(z, sum);
            }

            #[test]
            fn nominal_branches_symmetric(f in 0.0f64..200_000.0, c in any_conductor()) {
                let m = nominal_model();
                prop_assert_eq!(
                    path_impedance(&m, Tap::P5, c, f).unwrap(),
                    path_impedance(&m, Tap::P7, c, f).unwrap()
                );
            }
        }
    }
}
