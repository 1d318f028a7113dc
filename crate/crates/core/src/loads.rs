//! Load elements, the preset catalog, and switching schedules.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netmodel::{Phase, Tap};

/// Nominal phase-to-neutral voltage used to size heater presets.
pub const NOMINAL_VOLTAGE: f64 = 230.0;

/// Default cap on periodic switching frequency.
pub const DEFAULT_MAX_SWITCHING_HZ: f64 = 5_000.0;

/// Per-diode forward drop of the default rectifier.
pub const DEFAULT_DIODE_DROP: f64 = 0.7;

/// One-port load. Units are carried in the field names. In the RLC composites a
/// zero value omits that element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadElement {
    Resistive { r_ohm: f64 },
    Capacitive { c_uf: f64 },
    Inductive { l_h: f64, r_series_ohm: f64 },
    SeriesRlc { r_ohm: f64, l_h: f64, c_uf: f64 },
    ParallelRlc { r_ohm: f64, l_h: f64, c_uf: f64 },
    GraetzRectifier { r_dc_ohm: f64, c_dc_uf: f64, diode_drop_v: f64 },
}

impl LoadElement {
    pub fn is_linear(&self) -> bool {
        !matches!(self, LoadElement::GraetzRectifier { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let values: &[f64] = match self {
            LoadElement::Resistive { r_ohm } => &[*r_ohm],
            LoadElement::Capacitive { c_uf } => &[*c_uf],
            LoadElement::Inductive { l_h, r_series_ohm } => &[*l_h, *r_series_ohm],
            LoadElement::SeriesRlc { r_ohm, l_h, c_uf } | LoadElement::ParallelRlc { r_ohm, l_h, c_uf } => {
                &[*r_ohm, *l_h, *c_uf]
            }
            LoadElement::GraetzRectifier { r_dc_ohm, c_dc_uf, diode_drop_v } => {
                &[*r_dc_ohm, *c_dc_uf, *diode_drop_v]
            }
        };
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(format!("load element values must be >= 0: {self:?}")));
        }
        match *self {
            LoadElement::Resistive { r_ohm: 0.0 } => {
                Err(Error::invalid("resistive load needs R > 0"))
            }
            LoadElement::Capacitive { c_uf: 0.0 } => {
                Err(Error::invalid("capacitive load needs C > 0"))
            }
            LoadElement::Inductive { l_h, r_series_ohm } if l_h == 0.0 && r_series_ohm == 0.0 => {
                Err(Error::invalid("inductive load needs L > 0 or R_series > 0"))
            }
            LoadElement::SeriesRlc { r_ohm, l_h, c_uf } if r_ohm == 0.0 && l_h == 0.0 && c_uf == 0.0 => {
                Err(Error::invalid("series RLC with all elements omitted is a short circuit"))
            }
            LoadElement::ParallelRlc { r_ohm, l_h, c_uf } if r_ohm == 0.0 && l_h == 0.0 && c_uf == 0.0 => {
                Err(Error::invalid("parallel RLC with all elements omitted is an open circuit"))
            }
            LoadElement::GraetzRectifier { r_dc_ohm: 0.0, .. } => {
                Err(Error::invalid("rectifier needs R_dc > 0"))
            }
            _ => Ok(()),
        }
    }
}

pub fn resistive_from_power(p_w: f64, u_nom: f64) -> Result<LoadElement> {
    if !(p_w.is_finite() && p_w > 0.0 && u_nom.is_finite() && u_nom > 0.0) {
        return Err(Error::invalid(format!("power and voltage must be > 0, got P = {p_w}, U = {u_nom}")));
    }
    Ok(LoadElement::Resistive {
        r_ohm: u_nom * u_nom / p_w,
    })
}

/// Impedance of a linear element in ohms.
pub fn element_impedance(e: &LoadElement, f: f64) -> Result<Complex64> {
    e.validate()?;
    if !(f.is_finite() && f >= 0.0) {
        return Err(Error::invalid(format!("frequency must be >= 0, got {f}")));
    }
    let w = TAU * f;
    let j = Complex64::i();
    let cap = |c_uf: f64| -> Result<Complex64> {
        if w == 0.0 {
            return Err(Error::invalid("capacitor impedance is undefined at f = 0"));
        }
        Ok(1.0 / (j * w * c_uf * 1e-6))
    };
    match *e {
        LoadElement::Resistive { r_ohm } => Ok(Complex64::new(r_ohm, 0.0)),
        LoadElement::Capacitive { c_uf } => cap(c_uf),
        LoadElement::Inductive { l_h, r_series_ohm } => Ok(Complex64::new(r_series_ohm, w * l_h)),
        LoadElement::SeriesRlc { r_ohm, l_h, c_uf } => {
            let mut z = Complex64::new(r_ohm, w * l_h);
            if c_uf > 0.0 {
                z += cap(c_uf)?;
            }
            Ok(z)
        }
        LoadElement::ParallelRlc { r_ohm, l_h, c_uf } => {
            let mut y = Complex64::new(0.0, 0.0);
            if r_ohm > 0.0 {
                y += 1.0 / r_ohm;
            }
            if l_h > 0.0 {
                if w == 0.0 {
                    return Ok(Complex64::new(0.0, 0.0));
                }
                y += 1.0 / (j * w * l_h);
            }
            if c_uf > 0.0 {
                y += j * w * c_uf * 1e-6;
            }
            if y.norm() == 0.0 {
                return Err(Error::invalid("parallel RLC is open at this frequency"));
            }
            Ok(1.0 / y)
        }
        LoadElement::GraetzRectifier { .. } => Err(Error::NonlinearElement(
            "a rectifier bridge has no small-signal impedance".into(),
        )),
    }
}

/// Magnitude of reactive power drawn by `e` connected across `u` volts rms.
pub fn rated_reactive_power(e: &LoadElement, u: f64, f: f64) -> Result<f64> {
    if !(u.is_finite() && u > 0.0) {
        return Err(Error::invalid(format!("voltage must be > 0, got {u}")));
    }
    let z = element_impedance(e, f)?;
    Ok(u * u * (1.0 / z).im.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadPreset {
    pub name: &'static str,
    pub element: LoadElement,
    pub rated: &'static str,
}

pub const PRESET_NAMES: [&str; 6] = [
    "heater750",
    "heater1250",
    "heater2000",
    "cap9u6",
    "choke1123m",
    "graetz_default",
];

pub fn preset(name: &str) -> Result<LoadPreset> {
    let heater = |p: f64| resistive_from_power(p, NOMINAL_VOLTAGE).expect("positive catalog power");
    let (element, rated) = match name {
        "heater750" => (heater(750.0), "0.75 kW convection heater"),
        "heater1250" => (heater(1250.0), "1.25 kW convection heater"),
        "heater2000" => (heater(2000.0), "2 kW convection heater"),
        "cap9u6" => (LoadElement::Capacitive { c_uf: 9.6 }, "9.6 uF capacitor"),
        "choke1123m" => (
            LoadElement::Inductive {
                l_h: 1.123,
                r_series_ohm: 0.0,
            },
            "1.123 H choke, 0.15 kvar",
        ),
        "graetz_default" => (
            LoadElement::GraetzRectifier {
                r_dc_ohm: 100.0,
                c_dc_uf: 470.0,
                diode_drop_v: DEFAULT_DIODE_DROP,
            },
            "Graetz bridge, 470 uF smoothing, 100 Ohm DC load",
        ),
        other => {
            return Err(Error::UnknownPreset {
                name: other.to_string(),
                catalog: PRESET_NAMES.join(", "),
            })
        }
    };
    let name = PRESET_NAMES.iter().find(|n| **n == name).expect("matched above");
    Ok(LoadPreset { name, element, rated })
}

pub fn catalog() -> Vec<LoadPreset> {
    PRESET_NAMES.iter().map(|n| preset(n).expect("catalog entry")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SwitchMode {
    AlwaysOn,
    PeriodicSquare { f_sw_hz: f64, duty: f64, phase_offset_s: f64 },
    /// Toggle times; the switch starts off and the first event turns it on.
    EventList { times_s: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    Asynchronous,
    /// Transitions wait for the next zero crossing of the supply reference.
    ZeroCross,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchSchedule {
    pub mode: SwitchMode,
    pub sync: SyncMode,
}

impl SwitchSchedule {
    pub fn always_on() -> Self {
        SwitchSchedule {
            mode: SwitchMode::AlwaysOn,
            sync: SyncMode::Asynchronous,
        }
    }

    pub fn periodic(f_sw_hz: f64, duty: f64) -> Self {
        SwitchSchedule {
            mode: SwitchMode::PeriodicSquare {
                f_sw_hz,
                duty,
                phase_offset_s: 0.0,
            },
            sync: SyncMode::Asynchronous,
        }
    }

    pub fn events(times_s: Vec<f64>) -> Self {
        SwitchSchedule {
            mode: SwitchMode::EventList { times_s },
            sync: SyncMode::Asynchronous,
        }
    }

    pub fn zero_cross(mut self) -> Self {
        self.sync = SyncMode::ZeroCross;
        self
    }

    pub fn validate(&self, max_switching_hz: f64) -> Result<()> {
        match &self.mode {
            SwitchMode::AlwaysOn => Ok(()),
            SwitchMode::PeriodicSquare {
                f_sw_hz,
                duty,
                phase_offset_s,
            } => {
                if !(f_sw_hz.is_finite() && *f_sw_hz > 0.0) {
                    return Err(Error::invalid(format!("switching frequency must be > 0, got {f_sw_hz}")));
                }
                if *f_sw_hz > max_switching_hz {
                    return Err(Error::invalid(format!(
                        "switching frequency {f_sw_hz} Hz exceeds the {max_switching_hz} Hz cap"
                    )));
                }
                if !(0.0..=1.0).contains(duty) {
                    return Err(Error::invalid(format!("duty must be in [0, 1], got {duty}")));
                }
                if !phase_offset_s.is_finite() {
                    return Err(Error::invalid("phase offset must be finite"));
                }
                Ok(())
            }
            SwitchMode::EventList { times_s } => {
                if times_s.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                    return Err(Error::invalid("event times must be finite and >= 0"));
                }
                if times_s.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("event times must be strictly increasing"));
                }
                Ok(())
            }
        }
    }

    /// State the control section asks for at `t`, before zero-cross deferral.
    pub fn commanded(&self, t: f64) -> bool {
        match &self.mode {
            SwitchMode::AlwaysOn => true,
            SwitchMode::PeriodicSquare {
                f_sw_hz,
                duty,
                phase_offset_s,
            } => ((t - phase_offset_s) * f_sw_hz).rem_euclid(1.0) < *duty,
            SwitchMode::EventList { times_s } => times_s.partition_point(|e| *e <= t) % 2 == 1,
        }
    }
}

/// Switch state at `t`. `zero_cross_times` must be sorted ascending.
///
/// In zero-cross mode each commanded transition is deferred to the next
/// crossing, so the state at `t` is the commanded state at the latest
/// crossing not after `t` (off before the first crossing).
pub fn switch_state(s: &SwitchSchedule, t: f64, zero_cross_times: &[f64]) -> bool {
    match (&s.mode, s.sync) {
        (SwitchMode::AlwaysOn, _) => true,
        (_, SyncMode::Asynchronous) => s.commanded(t),
        (_, SyncMode::ZeroCross) => {
            let k = zero_cross_times.partition_point(|z| *z <= t);
            k > 0 && s.commanded(zero_cross_times[k - 1])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadAttachment {
    pub tap: Tap,
    pub phase: Phase,
    pub element: LoadElement,
    pub schedule: SwitchSchedule,
}

impl LoadAttachment {
    pub fn new(tap: Tap, phase: Phase, element: LoadElement, schedule: SwitchSchedule) -> Self {
        LoadAttachment {
            tap,
            phase,
            element,
            schedule,
        }
    }

    pub fn always_on(tap: Tap, phase: Phase, element: LoadElement) -> Self {
        Self::new(tap, phase, element, SwitchSchedule::always_on())
    }

    pub fn validate(&self, max_switching_hz: f64) -> Result<()> {
        if self.tap == Tap::P1 {
            return Err(Error::invalid("loads cannot attach at P1, the supply input"));
        }
        self.element.validate()?;
        self.schedule.validate(max_switching_hz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heater_resistances() {
        let r = |p| match resistive_from_power(p, 230.0).unwrap() {
            LoadElement::Resistive { r_ohm } => r_ohm,
            _ => unreachable!(),
        };
        assert!((r(2000.0) - 26.45).abs() < 1e-12);
        assert!((r(750.0) - 70.53).abs() < 0.005);
        assert_eq!(r(230.0 * 230.0), 1.0);
        assert!(resistive_from_power(0.0, 230.0).is_err());
        assert!(resistive_from_power(100.0, -1.0).is_err());
    }

    #[test]
    fn impedances() {
        let choke = preset("choke1123m").unwrap().element;
        let z = element_impedance(&choke, 50.0).unwrap();
        assert!((z.im - 352.8).abs() < 0.05);
        let z = element_impedance(&LoadElement::Resistive { r_ohm: 12.0 }, 1234.0).unwrap();
        assert_eq!(z, Complex64::new(12.0, 0.0));
        let z = element_impedance(&preset("cap9u6").unwrap().element, 50.0).unwrap();
        assert!((z.im + 331.6).abs() < 0.05, "{}", z.im);

        let graetz = preset("graetz_default").unwrap().element;
        assert!(matches!(element_impedance(&graetz, 50.0), Err(Error::NonlinearElement(_))));
        let series = LoadElement::SeriesRlc { r_ohm: 1.0, l_h: 0.1, c_uf: 10.0 };
        assert!(element_impedance(&series, 0.0).is_err());
        assert!(element_impedance(&preset("cap9u6").unwrap().element, 0.0).is_err());
    }

    #[test]
    fn reactive_power_ratings() {
        let q = rated_reactive_power(&preset("choke1123m").unwrap().element, 230.0, 50.0).unwrap();
        assert!((q - 150.0).abs() < 1.5, "{q}");
        let q = rated_reactive_power(&preset("cap9u6").unwrap().element, 230.0, 50.0).unwrap();
        let oracle = 230.0 * 230.0 * TAU * 50.0 * 9.6e-6;
        assert!((q - oracle).abs() < 1e-9 && (q - 160.0).abs() < 1.0, "{q}");
        let q = rated_reactive_power(&preset("heater750").unwrap().element, 400.0, 50.0).unwrap();
        assert_eq!(q, 0.0);
    }

    #[test]
    fn preset_catalog() {
        assert_eq!(preset("heater2000").unwrap().element, LoadElement::Resistive { r_ohm: 26.45 });
        assert_eq!(
            preset("choke1123m").unwrap().element,
            LoadElement::Inductive { l_h: 1.123, r_series_ohm: 0.0 }
        );
        assert_eq!(preset("cap9u6").unwrap().element, LoadElement::Capacitive { c_uf: 9.6 });
        let err = preset("toaster").unwrap_err();
        assert!(err.to_string().contains("heater2000"), "{err}");
        assert_eq!(catalog().len(), PRESET_NAMES.len());
    }

    #[test]
    fn schedule_states() {
        let on = SwitchSchedule::always_on();
        assert!((0..100).all(|i| switch_state(&on, i as f64 * 1e-3, &[])));

        let sq = SwitchSchedule::periodic(10.0, 0.5);
        for ms in [0.0, 10.0, 49.9, 100.0, 149.0] {
            assert!(switch_state(&sq, ms * 1e-3, &[]), "{ms} ms");
        }
        for ms in [50.0, 75.0, 99.9, 150.0] {
            assert!(!switch_state(&sq, ms * 1e-3, &[]), "{ms} ms");
        }

        let zc: Vec<f64> = (0..10).map(|k| k as f64 * 0.01).collect();
        let ev = SwitchSchedule::events(vec![0.001]).zero_cross();
        assert!(!switch_state(&ev, 0.005, &zc));
        assert!(!switch_state(&ev, 0.0099, &zc));
        assert!(switch_state(&ev, 0.010, &zc));
        assert!(switch_state(&SwitchSchedule::events(vec![0.001]), 0.001, &zc));
    }

    #[test]
    fn schedule_validation() {
        assert!(SwitchSchedule::periodic(0.0, 0.5).validate(DEFAULT_MAX_SWITCHING_HZ).is_err());
        assert!(SwitchSchedule::periodic(10_000.0, 0.5).validate(DEFAULT_MAX_SWITCHING_HZ).is_err());
        assert!(SwitchSchedule::periodic(10.0, 1.5).validate(DEFAULT_MAX_SWITCHING_HZ).is_err());
        assert!(SwitchSchedule::events(vec![0.2, 0.1]).validate(DEFAULT_MAX_SWITCHING_HZ).is_err());
        assert!(SwitchSchedule::events(vec![0.1, 0.1]).validate(DEFAULT_MAX_SWITCHING_HZ).is_err());
        let p1 = LoadAttachment::always_on(Tap::P1, Phase::L1, LoadElement::Resistive { r_ohm: 1.0 });
        assert!(p1.validate(DEFAULT_MAX_SWITCHING_HZ).is_err());
    }

    #[test]
    fn series_rlc_minimum_at_resonance() {
        let (l, c_uf) = (0.05, 20.0);
        let e = LoadElement::SeriesRlc { r_ohm: 2.0, l_h: l, c_uf };
        let f_res = 1.0 / (TAU * (l * c_uf * 1e-6_f64).sqrt());
        let fs: Vec<f64> = (1..2000).map(|i| i as f64 * 0.5).collect();
        let (best, _) = fs
            .iter()
            .map(|f| (*f, element_impedance(&e, *f).unwrap().norm()))
            .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert!((best - f_res).abs() <= 0.5, "min at {best}, resonance {f_res}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn periodic_square_is_periodic(f in 0.5f64..1000.0, duty in 0.0f64..1.0, t in 0.0f64..10.0, off in -1.0f64..1.0) {
                let s = SwitchSchedule {
                    mode: SwitchMode::PeriodicSquare { f_sw_hz: f, duty, phase_offset_s: off },
                    sync: SyncMode::Asynchronous,
                };
                // Skip instants within rounding distance of an edge.
                let phase = ((t - off) * f).rem_euclid(1.0);
                prop_assume!((phase - duty).abs() > 1e-9 && phase > 1e-9 && phase < 1.0 - 1e-9);
                prop_assert_eq!(switch_state(&s, t, &[]), switch_state(&s, t + 1.0 / f, &[]));
            }

            #[test]
            fn duty_accounting(periods in 1usize..20, duty in 0.0f64..1.0, spp in 20usize..200) {
                let f = 10.0;
                let rate = f * spp as f64;
                let s = SwitchSchedule::periodic(f, duty);
                let n = periods * spp;
                let on = (0..n).filter(|i| switch_state(&s, (*i as f64 + 0.5) / rate, &[])).count();
                let frac = on as f64 / n as f64;
                prop_assert!((frac - duty).abs() <= 1.0 / spp as f64 + 1e-12);
            }

            #[test]
            fn zero_cross_transitions_only_at_crossings(times in prop::collection::vec(0.0f64..0.2, 1..8)) {
                let mut times = times;
                times.sort_by(f64::total_cmp);
                times.dedup();
                let zc: Vec<f64> = (0..=25).map(|k| k as f64 * 0.01).collect();
                let s = SwitchSchedule::events(times).zero_cross();
                let dt = 1e-4;
                let states: Vec<bool> = (0..2500).map(|i| switch_state(&s, i as f64 * dt, &zc)).collect();
                for i in 1..states.len() {
                    if states[i] != states[i - 1] {
                        let t = i as f64 * dt;
                        let near = zc.iter().any(|z| (t - z).abs() <= dt);
                        prop_assert!(near, "transition at {} s", t);
                    }
                }
            }
        }
    }
}
