use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pqlab_core::loads::catalog;
use pqlab_core::netmodel::{Conductor, Spacing, Tap};
use pqlab_core::pqmetrics::{aggregate_report, format_report, ReportConfig};
use pqlab_core::workbench::{parse_scenario_in, read_waveform_file, run_scenario, sweep_impedance_csv};
use pqlab_core::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "pqlab", version, about = "Low-voltage grid power-quality laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its artifacts.
    Simulate {
        scenario: PathBuf,
        /// Output directory; defaults to `<scenario name>.out` next to the scenario.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// R and X of the path from the supply to a tap, as CSV on stdout.
    SweepImpedance {
        /// nominal, measured, or a model override file
        #[arg(long, default_value = "nominal")]
        model: String,
        #[arg(long)]
        tap: Tap,
        #[arg(long, default_value = "L1")]
        conductor: Conductor,
        #[arg(long, default_value_t = 20.0)]
        fmin: f64,
        #[arg(long, default_value_t = 200_000.0)]
        fmax: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, default_value = "log")]
        spacing: Spacing,
    },
    /// Power-quality report of a recorded waveform CSV.
    Analyze {
        waveform: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        f_nominal: f64,
        #[arg(long, default_value_t = 10)]
        cycles: usize,
        /// Accept a single 60 s to 600 s flicker observation.
        #[arg(long)]
        allow_short: bool,
    },
    /// Load catalog.
    Presets {
        #[command(subcommand)]
        action: PresetsAction,
    },
}

#[derive(Subcommand)]
enum PresetsAction {
    List,
}

fn fail(kind: &str, code: u8, msg: &str) -> ExitCode {
    let line: String = msg.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error: {kind}: {line}");
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Simulate { scenario, out: dir } => {
            let text = std::fs::read_to_string(&scenario)
                .map_err(|e| Error::Io(format!("{}: {e}", scenario.display())))?;
            let s = parse_scenario_in(&text, scenario.parent())?;
            let dir = dir.unwrap_or_else(|| scenario.with_file_name(format!("{}.out", s.name)));
            let outcome = run_scenario(&s, &dir)?;
            writeln!(out, "scenario={} hash={} steps={}", s.name, outcome.manifest.scenario_hash, outcome.manifest.steps)?;
            for f in &outcome.manifest.outputs {
                writeln!(out, "{}", dir.join(f).display())?;
            }
        }
        Command::SweepImpedance {
            model,
            tap,
            conductor,
            fmin,
            fmax,
            points,
            spacing,
        } => {
            write!(out, "{}", sweep_impedance_csv(&model, tap, conductor, fmin, fmax, points, spacing)?)?;
        }
        Command::Analyze {
            waveform,
            f_nominal,
            cycles,
            allow_short,
        } => {
            let traces = read_waveform_file(&waveform)?;
            let cfg = ReportConfig {
                f_nominal,
                cycles,
                allow_short,
            };
            write!(out, "{}", format_report(&aggregate_report(&traces, &cfg)?))?;
        }
        Command::Presets {
            action: PresetsAction::List,
        } => {
            for p in catalog() {
                writeln!(
                    out,
                    "{}\t{}\t{}",
                    p.name,
                    p.rated,
                    serde_json::to_string(&p.element).expect("element serializes")
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad arguments").trim_start_matches("error: ");
            return fail("validation", EXIT_VALIDATION, first);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // Reader closed the pipe early, as with `| head`.
        Err(Error::Io(m)) if m.contains("Broken pipe") => ExitCode::SUCCESS,
        Err(e) if e.is_validation() => fail("validation", EXIT_VALIDATION, &e.to_string()),
        Err(e) => fail("runtime", EXIT_RUNTIME, &e.to_string()),
    }
}
