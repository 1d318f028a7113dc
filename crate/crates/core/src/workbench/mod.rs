//! Scenario runner: synthesize the supply, simulate, measure, and write
//! the run artifacts.
//!
//! A run directory holds up to five files: `trace.csv` (every node voltage
//! and section current), `observation.csv` (phase voltages and feeding
//! currents at the observation tap, in the waveform format), `report.txt`,
//! `sweep.csv`, and `manifest.json`.

mod files;
mod scenario;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use files::{
    read_waveform_csv, read_waveform_file, trace_columns, traces_from_waveform, write_sweep_csv,
    write_waveform_csv, write_waveform_file, TraceWriter,
};
pub use scenario::{
    load_model, parse_scenario, parse_scenario_in, Outputs, ReportRequest, Scenario, SweepRequest,
    DEFAULT_OBSERVATION_TAP,
};

use crate::error::{Error, Result};
use crate::netmodel::{frequency_sweep, Conductor, ImpedancePoint, Phase, SectionId, Tap};
use crate::pqmetrics::{aggregate_report, format_report, ObservedTraces, PQReport};
use crate::signalgen::synth_three_phase;
use crate::simulator::run_transient_with;

pub const TRACE_FILE: &str = "trace.csv";
pub const OBSERVATION_FILE: &str = "observation.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    /// sha256 of the canonical scenario JSON.
    pub scenario_hash: String,
    pub versions: BTreeMap<String, String>,
    pub steps: usize,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub report: Option<Vec<PQReport>>,
}

/// Canonical JSON of a scenario. Attachments are sorted, so listing order in
/// the file does not matter; object keys come out sorted.
pub fn canonical_json(s: &Scenario) -> Result<String> {
    let mut value = serde_json::to_value(s).map_err(|e| Error::invalid(e.to_string()))?;
    if let Some(list) = value.get_mut("attachments").and_then(|v| v.as_array_mut()) {
        list.sort_by_cached_key(|a| a.to_string());
    }
    Ok(value.to_string())
}

pub fn scenario_hash(s: &Scenario) -> Result<String> {
    Ok(hex::encode(Sha256::digest(canonical_json(s)?.as_bytes())))
}

pub fn artifact_versions() -> BTreeMap<String, String> {
    [
        ("pqlab", env!("CARGO_PKG_VERSION")),
        ("trace_csv", FORMAT_VERSION),
        ("waveform_csv", FORMAT_VERSION),
        ("report", FORMAT_VERSION),
        ("sweep_csv", FORMAT_VERSION),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Section whose phase currents the analyzer at `tap` sees.
fn observed_section(tap: Tap) -> SectionId {
    tap.feeding_section().unwrap_or(SectionId::I)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn run_scenario(s: &Scenario, out_dir: &Path) -> Result<RunOutcome> {
    run_inner(s, out_dir).map_err(|e| match e {
        Error::Scenario { .. } => e,
        other => Error::Scenario {
            name: s.name.clone(),
            source: Box::new(other),
        },
    })
}

fn run_inner(s: &Scenario, out_dir: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let supply = synth_three_phase(&s.supply, &s.sampling)?;
    let dt = s.sim.dt.unwrap_or(1.0 / supply.rate);
    let mut outputs = Vec::new();

    let mut trace = if s.outputs.traces {
        outputs.push(TRACE_FILE.to_string());
        Some(TraceWriter::new(create(&out_dir.join(TRACE_FILE))?, dt)?)
    } else {
        None
    };
    let observe = s
        .outputs
        .report
        .as_ref()
        .map(|r| r.tap)
        .or(s.outputs.waveform.then_some(DEFAULT_OBSERVATION_TAP));
    let mut volts = vec![Vec::new(); 3];
    let mut amps = vec![Vec::new(); 3];

    let steps = run_transient_with(&s.model, &supply, &s.attachments, &s.sim, |v| {
        if let Some(w) = trace.as_mut() {
            w.write_step(v.t, v.node_voltages, v.section_currents)?;
        }
        if let Some(tap) = observe {
            let sec = observed_section(tap);
            for p in Phase::ALL {
                volts[p.index()].push(v.phase_voltage(tap, p));
                amps[p.index()].push(v.section_current(sec, p.conductor()));
            }
        }
        Ok(())
    })?;
    if let Some(w) = trace {
        w.finish()?;
    }

    let observed = observe.map(|_| ObservedTraces {
        rate: supply.rate,
        t0: 0.0,
        voltages: volts,
        currents: Some(amps),
    });
    if let (true, Some(obs)) = (s.outputs.waveform, &observed) {
        write_waveform_csv(create(&out_dir.join(OBSERVATION_FILE))?, obs)?;
        outputs.push(OBSERVATION_FILE.to_string());
    }

    let report = match (&s.outputs.report, &observed) {
        (Some(req), Some(obs)) => {
            let rep = aggregate_report(obs, &req.config)?;
            std::fs::write(out_dir.join(REPORT_FILE), format_report(&rep))?;
            outputs.push(REPORT_FILE.to_string());
            Some(rep)
        }
        _ => None,
    };

    if let Some(sw) = &s.outputs.sweep {
        let pts = sweep(s, sw)?;
        write_sweep_csv(create(&out_dir.join(SWEEP_FILE))?, &pts)?;
        outputs.push(SWEEP_FILE.to_string());
    }

    outputs.push(MANIFEST_FILE.to_string());
    let manifest = RunManifest {
        scenario: s.name.clone(),
        scenario_hash: scenario_hash(s)?,
        versions: artifact_versions(),
        steps,
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(out_dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(RunOutcome { manifest, report })
}

fn sweep(s: &Scenario, req: &SweepRequest) -> Result<Vec<ImpedancePoint>> {
    frequency_sweep(&s.model, req.tap, req.conductor, req.f_min, req.f_max, req.points, req.spacing)
}

/// Impedance sweep of a named or file-based model, as CSV text.
pub fn sweep_impedance_csv(
    model: &str,
    tap: Tap,
    conductor: Conductor,
    f_min: f64,
    f_max: f64,
    points: usize,
    spacing: crate::netmodel::Spacing,
) -> Result<String> {
    let m = load_model(model)?;
    let pts = frequency_sweep(&m, tap, conductor, f_min, f_max, points, spacing)?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &pts)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests;
