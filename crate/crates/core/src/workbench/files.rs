//! CSV formats: waveform (`# rate=` header), trace, and impedance sweep.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! write-then-read cycle returns bit-identical samples.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::netmodel::{Conductor, ImpedancePoint, SectionId, Tap};
use crate::pqmetrics::ObservedTraces;
use crate::signalgen::Waveform;

const VOLTAGE_COLUMNS: [&str; 3] = ["L1", "L2", "L3"];
const CURRENT_COLUMNS: [&str; 3] = ["I_L1", "I_L2", "I_L3"];

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Voltage waveform with `t0 = 0` and no currents.
pub fn traces_from_waveform(w: &Waveform) -> ObservedTraces {
    ObservedTraces {
        rate: w.rate,
        t0: 0.0,
        voltages: w.channels.clone(),
        currents: None,
    }
}

pub fn write_waveform_csv<W: Write>(out: W, traces: &ObservedTraces) -> Result<()> {
    traces.validate()?;
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "# rate={}", traces.rate).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(out);
    let nv = traces.voltages.len();
    let mut header = vec!["t"];
    header.extend(&VOLTAGE_COLUMNS[..nv]);
    if traces.currents.is_some() {
        header.extend(&CURRENT_COLUMNS[..nv]);
    }
    w.write_record(&header).map_err(io_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for k in 0..traces.voltages[0].len() {
        row.clear();
        row.push((traces.t0 + k as f64 / traces.rate).to_string());
        row.extend(traces.voltages.iter().map(|c| c[k].to_string()));
        if let Some(cur) = &traces.currents {
            row.extend(cur.iter().map(|c| c[k].to_string()));
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_waveform_csv<R: Read>(input: R) -> Result<ObservedTraces> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(io_err)?;
    let rate: f64 = first
        .trim()
        .strip_prefix("# rate=")
        .ok_or_else(|| Error::Ingest {
            line: 1,
            message: "expected '# rate=<Hz>' header".into(),
        })?
        .trim()
        .parse()
        .map_err(|e| Error::Ingest {
            line: 1,
            message: format!("bad rate: {e}"),
        })?;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::Ingest {
            line: 1,
            message: format!("rate must be > 0, got {rate}"),
        });
    }

    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = csv
        .headers()
        .map_err(|e| Error::Ingest {
            line: 2,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let (nv, has_current) = match names.as_slice() {
        ["t", rest @ ..] => {
            let nv = rest.iter().take_while(|n| n.starts_with('L')).count();
            let cur = &rest[nv..];
            if nv == 0 || rest[..nv] != VOLTAGE_COLUMNS[..nv] || !(cur.is_empty() || cur == &CURRENT_COLUMNS[..nv]) {
                return Err(Error::Ingest {
                    line: 2,
                    message: format!("unexpected columns {names:?}; want t,L1[,L2,L3][,I_L1...]"),
                });
            }
            (nv, !cur.is_empty())
        }
        _ => {
            return Err(Error::Ingest {
                line: 2,
                message: format!("first column must be t, got {names:?}"),
            })
        }
    };

    let width = 1 + nv * if has_current { 2 } else { 1 };
    let mut t0 = 0.0;
    let mut voltages = vec![Vec::new(); nv];
    let mut currents = vec![Vec::new(); if has_current { nv } else { 0 }];
    for (k, rec) in csv.records().enumerate() {
        // Comment header and column header precede the first data row.
        let line = k as u64 + 3;
        let rec = rec.map_err(|e| Error::Ingest {
            line: e.position().map_or(line, |p| p.line() + 1),
            message: e.to_string(),
        })?;
        if rec.len() != width {
            return Err(Error::Ingest {
                line,
                message: format!("expected {width} fields, got {}", rec.len()),
            });
        }
        let mut vals = [0.0; 7];
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Ingest {
                line,
                message: format!("'{field}' in column {} is not a number", names[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingest {
                    line,
                    message: format!("non-finite value in column {}", names[j]),
                });
            }
            vals[j] = v;
        }
        if k == 0 {
            t0 = vals[0];
        } else {
            let expected = t0 + k as f64 / rate;
            if (vals[0] - expected).abs() > 1e-3 / rate + 1e-12 * expected.abs() {
                return Err(Error::Ingest {
                    line,
                    message: format!("time {} breaks the {rate} Hz grid (expected {expected})", vals[0]),
                });
            }
        }
        for c in 0..nv {
            voltages[c].push(vals[1 + c]);
            if has_current {
                currents[c].push(vals[1 + nv + c]);
            }
        }
    }
    if voltages[0].is_empty() {
        return Err(Error::Ingest {
            line: 3,
            message: "no samples".into(),
        });
    }
    Ok(ObservedTraces {
        rate,
        t0,
        voltages,
        currents: has_current.then_some(currents),
    })
}

pub fn read_waveform_file(path: &Path) -> Result<ObservedTraces> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_waveform_csv(f)
}

pub fn write_waveform_file(path: &Path, traces: &ObservedTraces) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_waveform_csv(f, traces)
}

pub fn write_sweep_csv<W: Write>(out: W, points: &[ImpedancePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["f_Hz", "R_mOhm", "X_mOhm"]).map_err(io_err)?;
    for p in points {
        w.write_record([p.f_hz.to_string(), p.r_mohm.to_string(), p.x_mohm.to_string()])
            .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Column names of the simulator trace: node voltages to ground, then
/// section currents positive away from the supply.
pub fn trace_columns() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for tap in Tap::ALL {
        for c in Conductor::ALL {
            cols.push(format!("{tap}_{c}_V"));
        }
    }
    for s in SectionId::ALL {
        for c in Conductor::ALL {
            cols.push(format!("{s}_{c}_A"));
        }
    }
    cols
}

/// Streaming writer for the simulator trace CSV.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    row: Vec<String>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, dt: f64) -> Result<Self> {
        let cols = trace_columns();
        writeln!(out, "# pqlab trace dt={dt} columns={}", cols.join(";")).map_err(io_err)?;
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(&cols).map_err(io_err)?;
        Ok(TraceWriter {
            inner,
            row: Vec::with_capacity(cols.len()),
        })
    }

    pub fn write_step(&mut self, t: f64, node_voltages: &[f64], section_currents: &[f64]) -> Result<()> {
        self.row.clear();
        self.row.push(t.to_string());
        self.row.extend(node_voltages.iter().map(f64::to_string));
        self.row.extend(section_currents.iter().map(f64::to_string));
        self.inner.write_record(&self.row).map_err(io_err)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(io_err)
    }
}
