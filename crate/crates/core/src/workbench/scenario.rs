//! Scenario files: TOML with units in field names.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loads::{preset, LoadAttachment, LoadElement, SwitchMode, SwitchSchedule, SyncMode};
use crate::netmodel::{add_shunt_capacitance, measured_model, nominal_model, Conductor, GridModel, Phase, Spacing, Tap};
use crate::pqmetrics::ReportConfig;
use crate::signalgen::{
    synth_three_phase, HarmonicComponent, HarmonicMix, Modulation, PureSine, SamplingSpec, SupplySpec,
};
use crate::simulator::SimConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    /// `nominal`, `measured`, or the custom file path as written.
    pub model_source: String,
    pub model: GridModel,
    pub supply: SupplySpec,
    pub sampling: SamplingSpec,
    pub attachments: Vec<LoadAttachment>,
    pub sim: SimConfig,
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outputs {
    /// Full node-voltage and section-current trace.
    pub traces: bool,
    /// Observation-tap waveform in the analyzer input format.
    pub waveform: bool,
    pub report: Option<ReportRequest>,
    pub sweep: Option<SweepRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRequest {
    pub tap: Tap,
    pub config: ReportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRequest {
    pub tap: Tap,
    pub conductor: Conductor,
    pub f_min: f64,
    pub f_max: f64,
    pub points: usize,
    pub spacing: Spacing,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    supply: RawSupply,
    #[serde(default)]
    sampling: RawSampling,
    #[serde(default)]
    loads: Vec<RawLoad>,
    #[serde(default)]
    sim: RawSim,
    #[serde(default)]
    outputs: RawOutputs,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<String>,
    file: Option<PathBuf>,
    #[serde(rename = "shunt_caps_nF", default)]
    shunt_caps_nf: BTreeMap<String, f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSupply {
    kind: Option<String>,
    #[serde(rename = "U_rms_V")]
    u_rms_v: Option<f64>,
    #[serde(rename = "f_Hz")]
    f_hz: Option<f64>,
    #[serde(rename = "phase_offsets_rad")]
    phase_offsets_rad: Option<[f64; 3]>,
    clip_ratio: Option<f64>,
    harmonics: Option<Vec<RawHarmonic>>,
    modulation: Option<RawModulation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHarmonic {
    order: f64,
    #[serde(rename = "U_rms_V")]
    u_rms_v: f64,
    #[serde(rename = "phase_rad", default)]
    phase_rad: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModulation {
    shape: String,
    /// Envelope peak-to-peak over nominal.
    #[serde(rename = "dU_U")]
    du_u: f64,
    #[serde(rename = "f_m_Hz")]
    f_m_hz: f64,
    duty: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    #[serde(rename = "rate_Hz")]
    rate_hz: Option<f64>,
    duration_s: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoad {
    tap: String,
    phase: String,
    preset: Option<String>,
    element: Option<RawElement>,
    switch: Option<RawSwitch>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    kind: String,
    #[serde(rename = "R_Ohm")]
    r_ohm: Option<f64>,
    #[serde(rename = "L_H")]
    l_h: Option<f64>,
    #[serde(rename = "C_uF")]
    c_uf: Option<f64>,
    #[serde(rename = "U_diode_V")]
    u_diode_v: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSwitch {
    mode: String,
    #[serde(rename = "f_sw_Hz")]
    f_sw_hz: Option<f64>,
    duty: Option<f64>,
    phase_offset_s: Option<f64>,
    times_s: Option<Vec<f64>>,
    sync: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt_s: Option<f64>,
    method: Option<String>,
    t_end_s: Option<f64>,
    tolerance: Option<f64>,
    settle_cycles: Option<usize>,
    #[serde(rename = "max_switching_Hz")]
    max_switching_hz: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    #[serde(default = "yes")]
    traces: bool,
    #[serde(default = "yes")]
    waveform: bool,
    #[serde(default = "default_report")]
    report: Option<RawReport>,
    sweep: Option<RawSweep>,
}

impl Default for RawOutputs {
    fn default() -> Self {
        RawOutputs {
            traces: true,
            waveform: true,
            report: default_report(),
            sweep: None,
        }
    }
}

fn yes() -> bool {
    true
}

fn default_report() -> Option<RawReport> {
    Some(RawReport::default())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReport {
    tap: Option<String>,
    cycles: Option<usize>,
    #[serde(default)]
    allow_short_flicker: bool,
    #[serde(default = "yes")]
    enabled: bool,
}

impl Default for RawReport {
    fn default() -> Self {
        RawReport {
            tap: None,
            cycles: None,
            allow_short_flicker: false,
            enabled: true,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    tap: String,
    conductor: String,
    #[serde(rename = "f_min_Hz")]
    f_min_hz: f64,
    #[serde(rename = "f_max_Hz")]
    f_max_hz: f64,
    points: usize,
    spacing: Option<String>,
}

pub const DEFAULT_OBSERVATION_TAP: Tap = Tap::P5;

/// Line and column of a byte offset, both 1-based.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let head = &text[..offset.min(text.len())];
    let line = head.matches('\n').count() + 1;
    let col = head.rfind('\n').map_or(head.len(), |p| head.len() - p - 1) + 1;
    (line, col)
}

fn at<T>(location: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } => e,
        other => Error::parse(location, other.to_string()),
    })
}

fn parse_field<T: FromStr<Err = Error>>(location: &str, s: &str) -> Result<T> {
    at(location, s.parse())
}

fn require(location: &str, v: Option<f64>) -> Result<f64> {
    v.ok_or_else(|| Error::parse(location, "missing value"))
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_scenario_in(text, None)
}

/// Parses a scenario; a custom model file is resolved against `base_dir`.
pub fn parse_scenario_in(text: &str, base_dir: Option<&Path>) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let location = e.span().map_or_else(
            || "scenario".to_string(),
            |s| {
                let (l, c) = line_col(text, s.start);
                format!("line {l}, column {c}")
            },
        );
        Error::parse(location, e.message().to_string())
    })?;

    let name = raw.name.unwrap_or_else(|| "scenario".into());
    if name.trim().is_empty() {
        return Err(Error::parse("name", "must not be empty"));
    }

    let (model_source, mut model) = resolve_model(&raw.model, base_dir)?;
    for (tap_name, c_nf) in &raw.model.shunt_caps_nf {
        let loc = format!("model.shunt_caps_nF.{tap_name}");
        let tap: Tap = parse_field(&loc, tap_name)?;
        model = at(&loc, add_shunt_capacitance(&model, tap, *c_nf))?;
    }
    at("model", model.validate())?;

    let sampling = at(
        "sampling",
        SamplingSpec::new(
            raw.sampling.rate_hz.unwrap_or(10_000.0),
            raw.sampling.duration_s.unwrap_or(1.0),
        ),
    )?;
    let supply = resolve_supply(&raw.supply)?;
    // Synthesize a short stretch to surface aliasing and range errors now.
    let probe = SamplingSpec {
        rate: sampling.rate,
        duration: sampling.duration.min(0.1),
    };
    at("supply", synth_three_phase(&supply, &probe).map(|_| ()))?;

    let sim = resolve_sim(&raw.sim, &sampling, supply.fundamental_hz())?;

    let mut attachments = Vec::with_capacity(raw.loads.len());
    for (i, l) in raw.loads.iter().enumerate() {
        attachments.push(resolve_load(i, l, sim.max_switching_hz)?);
    }

    let report = match &raw.outputs.report {
        Some(r) if r.enabled => {
            let tap = match &r.tap {
                Some(t) => parse_field("outputs.report.tap", t)?,
                None => DEFAULT_OBSERVATION_TAP,
            };
            let cycles = r.cycles.unwrap_or(10);
            if cycles == 0 {
                return Err(Error::parse("outputs.report.cycles", "must be > 0"));
            }
            Some(ReportRequest {
                tap,
                config: ReportConfig {
                    f_nominal: supply.fundamental_hz(),
                    cycles,
                    allow_short: r.allow_short_flicker,
                },
            })
        }
        _ => None,
    };
    let sweep = match &raw.outputs.sweep {
        Some(s) => {
            let spacing: Spacing = parse_field("outputs.sweep.spacing", s.spacing.as_deref().unwrap_or("log"))?;
            Some(SweepRequest {
                tap: parse_field("outputs.sweep.tap", &s.tap)?,
                conductor: parse_field("outputs.sweep.conductor", &s.conductor)?,
                f_min: s.f_min_hz,
                f_max: s.f_max_hz,
                points: s.points,
                spacing,
            })
        }
        None => None,
    };

    Ok(Scenario {
        name,
        model_source,
        model,
        supply,
        sampling,
        attachments,
        sim,
        outputs: Outputs {
            traces: raw.outputs.traces,
            waveform: raw.outputs.waveform,
            report,
            sweep,
        },
    })
}

/// `nominal`, `measured`, or a path to a model override file.
pub fn load_model(spec: &str) -> Result<GridModel> {
    match spec {
        "nominal" => Ok(nominal_model()),
        "measured" => Ok(measured_model()),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
            GridModel::from_override_toml(&text)
        }
    }
}

fn resolve_model(raw: &RawModel, base_dir: Option<&Path>) -> Result<(String, GridModel)> {
    match (raw.kind.as_deref().unwrap_or("nominal"), &raw.file) {
        ("nominal", None) => Ok(("nominal".into(), nominal_model())),
        ("measured", None) => Ok(("measured".into(), measured_model())),
        ("custom", Some(file)) => {
            let path = match base_dir {
                Some(d) if file.is_relative() => d.join(file),
                _ => file.clone(),
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::parse("model.file", format!("{}: {e}", path.display())))?;
            let model = GridModel::from_override_toml(&text).map_err(|e| Error::parse("model.file", e.to_string()))?;
            Ok((file.display().to_string(), model))
        }
        ("custom", None) => Err(Error::parse("model.file", "custom model needs a file")),
        ("nominal" | "measured", Some(_)) => Err(Error::parse("model.file", "only custom models take a file")),
        (other, _) => Err(Error::parse(
            "model.kind",
            format!("expected nominal, measured or custom, got '{other}'"),
        )),
    }
}

fn resolve_supply(raw: &RawSupply) -> Result<SupplySpec> {
    let base = PureSine {
        u_rms: raw.u_rms_v.unwrap_or(230.0),
        f_c: raw.f_hz.unwrap_or(50.0),
        phase_offsets: raw.phase_offsets_rad.unwrap_or([0.0; 3]),
    };
    let kind = raw.kind.as_deref().unwrap_or("pure_sine");
    let unused = |field: &str, present: bool| -> Result<()> {
        if present {
            Err(Error::parse(format!("supply.{field}"), format!("not used by a {kind} supply")))
        } else {
            Ok(())
        }
    };
    let spec = match kind {
        "pure_sine" => {
            unused("clip_ratio", raw.clip_ratio.is_some())?;
            unused("harmonics", raw.harmonics.is_some())?;
            SupplySpec::PureSine(base)
        }
        "clipped_sine" => {
            unused("harmonics", raw.harmonics.is_some())?;
            SupplySpec::ClippedSine {
                base,
                clip_ratio: require("supply.clip_ratio", raw.clip_ratio)?,
            }
        }
        "harmonic_mix" => {
            unused("clip_ratio", raw.clip_ratio.is_some())?;
            unused("U_rms_V", raw.u_rms_v.is_some())?;
            let hs = raw
                .harmonics
                .as_ref()
                .ok_or_else(|| Error::parse("supply.harmonics", "harmonic_mix needs harmonics"))?;
            SupplySpec::HarmonicMix(HarmonicMix {
                f_c: base.f_c,
                components: hs
                    .iter()
                    .map(|h| HarmonicComponent {
                        order: h.order,
                        magnitude: h.u_rms_v,
                        phase: h.phase_rad,
                    })
                    .collect(),
            })
        }
        other => {
            return Err(Error::parse(
                "supply.kind",
                format!("expected pure_sine, clipped_sine or harmonic_mix, got '{other}'"),
            ))
        }
    };
    match &raw.modulation {
        None => Ok(spec),
        Some(m) => {
            let modulation = match m.shape.as_str() {
                "sinusoidal" => {
                    if m.duty.is_some() {
                        return Err(Error::parse("supply.modulation.duty", "only rectangular modulation has a duty"));
                    }
                    Modulation::sinusoidal(m.du_u, m.f_m_hz)
                }
                "rectangular" => Modulation::rectangular(m.du_u, m.f_m_hz, m.duty.unwrap_or(0.5)),
                other => {
                    return Err(Error::parse(
                        "supply.modulation.shape",
                        format!("expected sinusoidal or rectangular, got '{other}'"),
                    ))
                }
            };
            Ok(SupplySpec::Modulated {
                base: Box::new(spec),
                modulation,
            })
        }
    }
}

fn resolve_sim(raw: &RawSim, sampling: &SamplingSpec, f_ref: f64) -> Result<SimConfig> {
    let defaults = SimConfig::default();
    if let Some(dt) = raw.dt_s {
        if !((dt * sampling.rate - 1.0).abs() <= 1e-9) {
            return Err(Error::invalid(format!(
                "sim.dt_s = {dt} does not match the sampling rate {} Hz",
                sampling.rate
            )));
        }
    }
    if let Some(t_end) = raw.t_end_s {
        if t_end > sampling.duration + 0.5 / sampling.rate {
            return Err(Error::invalid(format!(
                "sim.t_end_s = {t_end} exceeds the sampled duration {} s",
                sampling.duration
            )));
        }
    }
    let cfg = SimConfig {
        dt: raw.dt_s,
        method: match &raw.method {
            Some(m) => parse_field("sim.method", m)?,
            None => defaults.method,
        },
        t_end: raw.t_end_s,
        tolerance: raw.tolerance.unwrap_or(defaults.tolerance),
        f_ref,
        settle_cycles: raw.settle_cycles.unwrap_or(defaults.settle_cycles),
        max_switching_hz: raw.max_switching_hz.unwrap_or(defaults.max_switching_hz),
    };
    at("sim", cfg.validate())?;
    Ok(cfg)
}

fn resolve_element(loc: &str, e: &RawElement) -> Result<LoadElement> {
    let get = |field: &str, v: Option<f64>| require(&format!("{loc}.{field}"), v);
    let el = match e.kind.as_str() {
        "resistive" => LoadElement::Resistive {
            r_ohm: get("R_Ohm", e.r_ohm)?,
        },
        "capacitive" => LoadElement::Capacitive {
            c_uf: get("C_uF", e.c_uf)?,
        },
        "inductive" => LoadElement::Inductive {
            l_h: get("L_H", e.l_h)?,
            r_series_ohm: e.r_ohm.unwrap_or(0.0),
        },
        "series_rlc" => LoadElement::SeriesRlc {
            r_ohm: get("R_Ohm", e.r_ohm)?,
            l_h: get("L_H", e.l_h)?,
            c_uf: get("C_uF", e.c_uf)?,
        },
        "parallel_rlc" => LoadElement::ParallelRlc {
            r_ohm: get("R_Ohm", e.r_ohm)?,
            l_h: get("L_H", e.l_h)?,
            c_uf: get("C_uF", e.c_uf)?,
        },
        "graetz_rectifier" => LoadElement::GraetzRectifier {
            r_dc_ohm: get("R_Ohm", e.r_ohm)?,
            c_dc_uf: get("C_uF", e.c_uf)?,
            diode_drop_v: e.u_diode_v.unwrap_or(crate::loads::DEFAULT_DIODE_DROP),
        },
        other => {
            return Err(Error::parse(
                format!("{loc}.kind"),
                format!(
                    "unknown element '{other}' (resistive, capacitive, inductive, series_rlc, parallel_rlc, graetz_rectifier)"
                ),
            ))
        }
    };
    at(loc, el.validate())?;
    Ok(el)
}

fn resolve_switch(loc: &str, s: &RawSwitch, max_hz: f64) -> Result<SwitchSchedule> {
    let mode = match s.mode.as_str() {
        "always_on" => SwitchMode::AlwaysOn,
        "periodic" => SwitchMode::PeriodicSquare {
            f_sw_hz: require(&format!("{loc}.f_sw_Hz"), s.f_sw_hz)?,
            duty: s.duty.unwrap_or(0.5),
            phase_offset_s: s.phase_offset_s.unwrap_or(0.0),
        },
        "events" => SwitchMode::EventList {
            times_s: s
                .times_s
                .clone()
                .ok_or_else(|| Error::parse(format!("{loc}.times_s"), "missing value"))?,
        },
        other => {
            return Err(Error::parse(
                format!("{loc}.mode"),
                format!("expected always_on, periodic or events, got '{other}'"),
            ))
        }
    };
    let sync = match s.sync.as_deref().unwrap_or("asynchronous") {
        "asynchronous" => SyncMode::Asynchronous,
        "zero_cross" => SyncMode::ZeroCross,
        other => {
            return Err(Error::parse(
                format!("{loc}.sync"),
                format!("expected asynchronous or zero_cross, got '{other}'"),
            ))
        }
    };
    let schedule = SwitchSchedule { mode, sync };
    at(loc, schedule.validate(max_hz))?;
    Ok(schedule)
}

fn resolve_load(i: usize, l: &RawLoad, max_hz: f64) -> Result<LoadAttachment> {
    let loc = format!("loads[{i}]");
    let tap: Tap = parse_field(&format!("{loc}.tap"), &l.tap)?;
    if tap == Tap::P1 {
        return Err(Error::parse(format!("{loc}.tap"), "loads cannot attach at P1, the supply input"));
    }
    let phase: Phase = parse_field(&format!("{loc}.phase"), &l.phase)?;
    let element = match (&l.preset, &l.element) {
        (Some(name), None) => at(&format!("{loc}.preset"), preset(name))?.element,
        (None, Some(e)) => resolve_element(&format!("{loc}.element"), e)?,
        _ => return Err(Error::parse(&loc, "give exactly one of preset or element")),
    };
    let schedule = match &l.switch {
        Some(s) => resolve_switch(&format!("{loc}.switch"), s, max_hz)?,
        None => SwitchSchedule::always_on(),
    };
    let att = LoadAttachment::new(tap, phase, element, schedule);
    at(&loc, att.validate(max_hz))?;
    Ok(att)
}
