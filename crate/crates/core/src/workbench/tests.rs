use super::*;
use crate::loads::{LoadElement, SwitchMode};
use crate::pqmetrics::ReportConfig;
use crate::signalgen::SupplySpec;
use crate::simulator::Method;

const HEATER_AT_P5: &str = r#"
name = "heater"

[sampling]
rate_Hz = 10000
duration_s = 0.4

[[loads]]
tap = "P5"
phase = "L1"
preset = "heater2000"
"#;

#[test]
fn minimal_scenario_defaults() {
    let s = parse_scenario("").unwrap();
    assert_eq!(s.name, "scenario");
    assert_eq!(s.model_source, "nominal");
    assert_eq!(s.model, crate::netmodel::nominal_model());
    match &s.supply {
        SupplySpec::PureSine(p) => assert_eq!((p.u_rms, p.f_c), (230.0, 50.0)),
        other => panic!("{other:?}"),
    }
    assert_eq!((s.sampling.rate, s.sampling.duration), (10_000.0, 1.0));
    assert!(s.attachments.is_empty());
    assert_eq!(s.sim.method, Method::Trapezoidal);
    assert!(s.outputs.traces && s.outputs.waveform);
    assert_eq!(
        s.outputs.report,
        Some(ReportRequest {
            tap: DEFAULT_OBSERVATION_TAP,
            config: ReportConfig::default(),
        })
    );
}

#[test]
fn preset_expands() {
    let s = parse_scenario(HEATER_AT_P5).unwrap();
    assert_eq!(s.attachments.len(), 1);
    assert_eq!(s.attachments[0].element, LoadElement::Resistive { r_ohm: 26.45 });
    assert_eq!(s.attachments[0].schedule.mode, SwitchMode::AlwaysOn);
}

#[test]
fn located_errors() {
    let bad_tap = HEATER_AT_P5.replace("\"P5\"", "\"P9\"");
    let e = parse_scenario(&bad_tap).unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("loads[0].tap") && msg.contains("P1-P7"), "{msg}");
    assert!(e.is_validation());

    let e = parse_scenario(&HEATER_AT_P5.replace("heater2000", "toaster")).unwrap_err();
    assert!(e.to_string().contains("loads[0].preset"), "{e}");

    let e = parse_scenario(&HEATER_AT_P5.replace("phase = \"L1\"", "phase = \"L1\"\ncolour = 3")).unwrap_err();
    let msg = e.to_string();
    assert!(msg.contains("line 11") && msg.contains("colour"), "{msg}");

    let e = parse_scenario("[supply]\nkind = \"square\"\n").unwrap_err();
    assert!(e.to_string().contains("supply.kind"), "{e}");

    let e = parse_scenario("[sampling]\nrate_Hz = 10000\n[sim]\ndt_s = 5e-5\n").unwrap_err();
    assert!(matches!(e, Error::InvalidSpec(_)), "{e:?}");

    let e = parse_scenario("[supply]\nf_Hz = 50\n[supply.modulation]\nshape = \"sinusoidal\"\ndU_U = 0.01\nf_m_Hz = 6000\n");
    assert!(e.unwrap_err().is_validation());

    let e = parse_scenario("[[loads]]\ntap = \"P1\"\nphase = \"L1\"\npreset = \"heater750\"\n").unwrap_err();
    assert!(e.to_string().contains("loads[0].tap"), "{e}");
}

#[test]
fn full_schema() {
    let text = r#"
name = "full"
[model]
kind = "measured"
shunt_caps_nF = { P7 = 100.0 }
[supply]
kind = "clipped_sine"
U_rms_V = 230
f_Hz = 50
clip_ratio = 0.8
[supply.modulation]
shape = "rectangular"
dU_U = 0.01
f_m_Hz = 4
duty = 0.25
[sampling]
rate_Hz = 20000
duration_s = 0.2
[[loads]]
tap = "P3"
phase = "L2"
element = { kind = "graetz_rectifier", R_Ohm = 100.0, C_uF = 470.0 }
switch = { mode = "periodic", f_sw_Hz = 10, duty = 0.5, sync = "zero_cross" }
[[loads]]
tap = "P7"
phase = "L3"
element = { kind = "series_rlc", R_Ohm = 10.0, L_H = 0.01, C_uF = 100.0 }
switch = { mode = "events", times_s = [0.05, 0.1] }
[sim]
method = "backward_euler"
t_end_s = 0.1
[outputs]
traces = false
report = { tap = "P3", cycles = 5 }
sweep = { tap = "P7", conductor = "N", f_min_Hz = 20, f_max_Hz = 200000, points = 5 }
"#;
    let s = parse_scenario(text).unwrap();
    assert_eq!(s.model.shunt_caps_nf[&Tap::P7], [100.0; 3]);
    assert!(matches!(s.supply, SupplySpec::Modulated { .. }));
    assert_eq!(s.sim.method, Method::BackwardEuler);
    assert_eq!(s.sim.t_end, Some(0.1));
    assert_eq!(s.attachments[0].schedule.sync, crate::loads::SyncMode::ZeroCross);
    assert_eq!(s.outputs.report.as_ref().unwrap().config.cycles, 5);
    assert_eq!(s.outputs.sweep.as_ref().unwrap().points, 5);
    assert!(!s.outputs.traces);
}

#[test]
fn hash_ignores_commuting_order() {
    let two = |a: &str, b: &str| format!("{a}\n{b}");
    let l1 = "[[loads]]\ntap = \"P5\"\nphase = \"L1\"\npreset = \"heater2000\"";
    let l2 = "[[loads]]\ntap = \"P7\"\nphase = \"L2\"\npreset = \"cap9u6\"";
    let h1 = scenario_hash(&parse_scenario(&two(l1, l2)).unwrap()).unwrap();
    let h2 = scenario_hash(&parse_scenario(&two(l2, l1)).unwrap()).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(h1.len(), 64);
    let changed = scenario_hash(&parse_scenario(&two(l1, &l2.replace("cap9u6", "choke1123m"))).unwrap()).unwrap();
    assert_ne!(h1, changed);
    let rate = scenario_hash(&parse_scenario(&format!("[sampling]\nrate_Hz = 20000\n{l1}")).unwrap()).unwrap();
    assert_ne!(rate, scenario_hash(&parse_scenario(l1).unwrap()).unwrap());
}

#[test]
fn open_circuit_trace_follows_supply() {
    let dir = tempfile::tempdir().unwrap();
    let s = parse_scenario("[sampling]\nduration_s = 0.2\n").unwrap();
    let out = run_scenario(&s, dir.path()).unwrap();
    assert_eq!(out.manifest.steps, 2000);
    assert_eq!(
        out.manifest.outputs,
        [TRACE_FILE, OBSERVATION_FILE, REPORT_FILE, MANIFEST_FILE]
    );
    let text = std::fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# pqlab trace dt=0.0001"));
    let cols: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(cols, trace_columns());
    let p7 = cols.iter().position(|c| *c == "P7_L1_V").unwrap();
    let supply = crate::signalgen::synth_three_phase(&s.supply, &s.sampling).unwrap();
    for (k, row) in lines.enumerate() {
        let v: f64 = row.split(',').nth(p7).unwrap().parse().unwrap();
        assert!((v - supply.channels[0][k]).abs() < 1e-6, "{k}");
    }
    let rep = out.report.unwrap();
    assert!(rep.iter().all(|r| r.i_rms < 1e-6 && r.thdi.is_none()));
}

#[test]
fn deterministic_and_round_trips() {
    let s = parse_scenario(HEATER_AT_P5).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_scenario(&s, a.path()).unwrap();
    let rb = run_scenario(&s, b.path()).unwrap();
    assert_eq!(ra.manifest, rb.manifest);
    for f in &ra.manifest.outputs {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }

    let obs = read_waveform_file(&a.path().join(OBSERVATION_FILE)).unwrap();
    let req = s.outputs.report.as_ref().unwrap();
    let again = aggregate_report(&obs, &req.config).unwrap();
    assert_eq!(Some(again), ra.report);

    let rep = ra.report.unwrap();
    let l1: Vec<f64> = rep.iter().filter(|r| r.phase == "L1").map(|r| r.p).collect();
    assert_eq!(l1.len(), 2);
    let p = l1[1];
    // Heater at P5 behind the nominal feeder: 26.45 Ohm plus the loop resistance.
    let loop_r = 2.0 * 0.450 + 0.001;
    let i = 230.0 / (26.45 + loop_r);
    assert!((p - i * i * 26.45).abs() < 0.005 * p, "{p}");
}

#[test]
fn waveform_csv_round_trip_and_errors() {
    let traces = ObservedTraces {
        rate: 8000.0,
        t0: 1.5,
        voltages: vec![vec![0.1, -1.0 / 3.0, 2e-300], vec![1.0, 2.0, 3.0]],
        currents: Some(vec![vec![7.0, 8.0, 9.0], vec![f64::MIN_POSITIVE, 0.0, -0.0]]),
    };
    let mut buf = Vec::new();
    write_waveform_csv(&mut buf, &traces).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("# rate=8000\nt,L1,L2,I_L1,I_L2\n"), "{text}");
    assert_eq!(read_waveform_csv(&buf[..]).unwrap(), traces);

    let err = |s: &str| read_waveform_csv(s.as_bytes()).unwrap_err();
    assert!(matches!(err("t,L1\n0,1\n"), Error::Ingest { line: 1, .. }));
    assert!(matches!(err("# rate=100\nt,X\n0,1\n"), Error::Ingest { line: 2, .. }));
    assert!(matches!(err("# rate=100\nt,L1\n0,1\n0.01,abc\n"), Error::Ingest { line: 4, .. }));
    assert!(matches!(err("# rate=100\nt,L1\n0,1\n0.01,2,3\n"), Error::Ingest { line: 4, .. }));
    assert!(matches!(err("# rate=100\nt,L1\n0,1\n0.5,2\n"), Error::Ingest { line: 4, .. }));
    assert!(matches!(err("# rate=100\nt,L1\n"), Error::Ingest { .. }));
}

#[test]
fn sweep_csv_rows() {
    let csv = sweep_impedance_csv("nominal", Tap::P5, Conductor::L1, 50.0, 100.0, 2, crate::netmodel::Spacing::Linear)
        .unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "f_Hz,R_mOhm,X_mOhm");
    let f: Vec<f64> = rows[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(f[0], 50.0);
    assert!((f[1] - 450.0).abs() < 1e-9);
    assert!((f[2] - 134.0).abs() < 0.1);
    assert!(sweep_impedance_csv("nowhere.toml", Tap::P5, Conductor::L1, 50.0, 100.0, 2, crate::netmodel::Spacing::Log).is_err());
}
