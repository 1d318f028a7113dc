use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::netlist::{
    self, Kind, Netlist, DIODE_OFF_SIEMENS, DIODE_ON_OHM, GROUND, KNOWN_NODES, SWITCH_OFF_OHM, SWITCH_ON_OHM,
};
use super::{Method, SimConfig, SimResult, StepView};
use crate::error::{Error, Result};
use crate::loads::{switch_state, LoadAttachment, SwitchMode, SyncMode};
use crate::netmodel::{GridModel, Tap};
use crate::signalgen::Waveform;

const MAX_DIODE_ITERATIONS: usize = 50;
/// After this many sweeps only the worst violating diode is flipped per sweep.
const GREEDY_AFTER: usize = 10;
const DIODE_SLACK_V: f64 = 1e-9;
const MAX_CACHED_FACTORS: usize = 4096;

/// Rising and falling zero crossings of `x`, linearly interpolated, in seconds.
pub fn zero_crossings(x: &[f64], rate: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if x.first() == Some(&0.0) {
        out.push(0.0);
    }
    for n in 1..x.len() {
        let (a, b) = (x[n - 1], x[n]);
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            let frac = a / (a - b);
            out.push((n as f64 - 1.0 + frac) / rate);
        }
    }
    out
}

struct Factor {
    a: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    a_norm: f64,
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct Key {
    backward_euler: bool,
    switches: Vec<bool>,
    diodes: Vec<bool>,
}

struct Engine<'a> {
    net: &'a Netlist,
    dt: f64,
    tolerance: f64,
    cache: HashMap<Key, Factor>,
    i_prev: Vec<f64>,
    v_prev: Vec<f64>,
    v: Vec<f64>,
    i: Vec<f64>,
    rhs: DVector<f64>,
    x: DVector<f64>,
    resid: DVector<f64>,
}

impl<'a> Engine<'a> {
    fn new(net: &'a Netlist, dt: f64, tolerance: f64) -> Self {
        let m = net.unknowns();
        Engine {
            net,
            dt,
            tolerance,
            cache: HashMap::new(),
            i_prev: vec![0.0; net.branches.len()],
            v_prev: vec![0.0; net.branches.len()],
            v: vec![0.0; net.node_count],
            i: vec![0.0; net.branches.len()],
            rhs: DVector::zeros(m),
            x: DVector::zeros(m),
            resid: DVector::zeros(m),
        }
    }

    fn conductance(&self, kind: Kind, key: &Key) -> f64 {
        let be = key.backward_euler;
        match kind {
            Kind::Rl { r, l } => {
                let k = if be { l / self.dt } else { 2.0 * l / self.dt };
                1.0 / (r + k)
            }
            Kind::Resistor { r } => 1.0 / r,
            Kind::Capacitor { c } => {
                if be {
                    c / self.dt
                } else {
                    2.0 * c / self.dt
                }
            }
            Kind::Switch { load } => 1.0 / if key.switches[load] { SWITCH_ON_OHM } else { SWITCH_OFF_OHM },
            Kind::Diode { slot, .. } => {
                if key.diodes[slot] {
                    1.0 / DIODE_ON_OHM
                } else {
                    DIODE_OFF_SIEMENS
                }
            }
        }
    }

    /// Companion current source, oriented a -> b alongside the conductance.
    fn source(&self, k: usize, kind: Kind, g: f64, key: &Key) -> f64 {
        let be = key.backward_euler;
        match kind {
            Kind::Rl { r, l } => {
                if be {
                    g * (l / self.dt) * self.i_prev[k]
                } else {
                    g * (self.v_prev[k] + (2.0 * l / self.dt - r) * self.i_prev[k])
                }
            }
            Kind::Capacitor { .. } => {
                if be {
                    -g * self.v_prev[k]
                } else {
                    -(g * self.v_prev[k] + self.i_prev[k])
                }
            }
            Kind::Diode { vf, slot } if key.diodes[slot] => -g * vf,
            _ => 0.0,
        }
    }

    fn factor(&mut self, key: &Key) -> Result<()> {
        if self.cache.contains_key(key) {
            return Ok(());
        }
        let m = self.net.unknowns();
        let mut a = DMatrix::<f64>::zeros(m, m);
        for br in &self.net.branches {
            let g = self.conductance(br.kind, key);
            let (ua, ub) = (unknown(br.a), unknown(br.b));
            if let Some(p) = ua {
                a[(p, p)] += g;
            }
            if let Some(q) = ub {
                a[(q, q)] += g;
            }
            if let (Some(p), Some(q)) = (ua, ub) {
                a[(p, q)] -= g;
                a[(q, p)] -= g;
            }
        }
        let a_norm = a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        let lu = a.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::Singular(
                "nodal matrix is singular; check for floating nodes or zero-impedance loops".into(),
            ));
        }
        if self.cache.len() >= MAX_CACHED_FACTORS {
            self.cache.clear();
        }
        self.cache.insert(key.clone(), Factor { a, lu, a_norm });
        Ok(())
    }

    /// One linear solve with fixed switch and diode states. Fills `v` and `i`.
    fn solve(&mut self, key: &Key, known: [f64; KNOWN_NODES], t: f64) -> Result<()> {
        self.factor(key)?;
        self.rhs.fill(0.0);
        self.v[..KNOWN_NODES].copy_from_slice(&known);
        for (k, br) in self.net.branches.iter().enumerate() {
            let g = self.conductance(br.kind, key);
            let j = self.source(k, br.kind, g, key);
            match (unknown(br.a), unknown(br.b)) {
                (Some(p), Some(q)) => {
                    self.rhs[p] -= j;
                    self.rhs[q] += j;
                }
                (Some(p), None) => {
                    self.rhs[p] += g * known[br.b] - j;
                }
                (None, Some(q)) => {
                    self.rhs[q] += g * known[br.a] + j;
                }
                (None, None) => {}
            }
        }
        let f = &self.cache[key];
        self.x.copy_from(&self.rhs);
        if !f.lu.solve_mut(&mut self.x) {
            return Err(Error::Singular(format!("LU solve failed at t = {t:.6} s")));
        }
        self.resid.gemv(1.0, &f.a, &self.x, 0.0);
        self.resid -= &self.rhs;
        let denom = f.a_norm * self.x.amax() + self.rhs.amax();
        let residual = if denom > 0.0 { self.resid.amax() / denom } else { 0.0 };
        if !(residual <= self.tolerance) {
            return Err(Error::Residual {
                t,
                residual,
                tolerance: self.tolerance,
            });
        }
        self.v[KNOWN_NODES..].copy_from_slice(self.x.as_slice());
        for (k, br) in self.net.branches.iter().enumerate() {
            let g = self.conductance(br.kind, key);
            let j = self.source(k, br.kind, g, key);
            self.i[k] = g * (self.v[br.a] - self.v[br.b]) + j;
        }
        Ok(())
    }

    /// Resolves diode states by repeated solves; returns with `v`, `i` accepted.
    fn step(&mut self, key: &mut Key, known: [f64; KNOWN_NODES], t: f64) -> Result<()> {
        for iter in 0..MAX_DIODE_ITERATIONS {
            self.solve(key, known, t)?;
            if key.diodes.is_empty() {
                return Ok(());
            }
            let mut worst: Option<(usize, f64)> = None;
            let mut flips = Vec::new();
            for (k, br) in self.net.branches.iter().enumerate() {
                if let Kind::Diode { vf, slot } = br.kind {
                    let excess = if key.diodes[slot] {
                        -self.i[k] * DIODE_ON_OHM
                    } else {
                        self.v[br.a] - self.v[br.b] - vf
                    };
                    if excess > DIODE_SLACK_V {
                        flips.push(slot);
                        if worst.is_none_or(|(_, w)| excess > w) {
                            worst = Some((slot, excess));
                        }
                    }
                }
            }
            match worst {
                None => return Ok(()),
                Some((slot, _)) if iter >= GREEDY_AFTER => key.diodes[slot] = !key.diodes[slot],
                Some(_) => {
                    for s in flips {
                        key.diodes[s] = !key.diodes[s];
                    }
                }
            }
        }
        Err(Error::NonConvergence {
            t,
            iterations: MAX_DIODE_ITERATIONS,
        })
    }

    fn accept(&mut self) {
        for (k, br) in self.net.branches.iter().enumerate() {
            self.i_prev[k] = self.i[k];
            self.v_prev[k] = self.v[br.a] - self.v[br.b];
        }
    }
}

fn unknown(node: usize) -> Option<usize> {
    node.checked_sub(KNOWN_NODES)
}

pub(crate) struct Prepared {
    pub net: Netlist,
    pub dt: f64,
    pub steps: usize,
}

pub(crate) fn prepare(
    model: &GridModel,
    supply: &Waveform,
    attachments: &[LoadAttachment],
    cfg: &SimConfig,
) -> Result<Prepared> {
    cfg.validate()?;
    if supply.channel_count() != 3 {
        return Err(Error::invalid(format!(
            "supply must have 3 phase channels, got {}",
            supply.channel_count()
        )));
    }
    let dt = cfg.dt.unwrap_or(1.0 / supply.rate);
    if (dt * supply.rate - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "dt = {dt} s is inconsistent with the supply rate {} Hz",
            supply.rate
        )));
    }
    let steps = match cfg.t_end {
        Some(t_end) => {
            let n = (t_end / dt).round() as usize;
            if n > supply.len() {
                return Err(Error::invalid(format!(
                    "t_end = {t_end} s exceeds the supply duration {} s",
                    supply.duration()
                )));
            }
            n
        }
        None => supply.len(),
    };
    if steps == 0 {
        return Err(Error::invalid("simulation needs at least one step"));
    }
    for a in attachments {
        a.validate(cfg.max_switching_hz)?;
    }
    let net = netlist::build(model, attachments)?;
    Ok(Prepared { net, dt, steps })
}

/// Runs the solver and hands every accepted step to `observer`.
/// Returns the number of steps taken.
pub fn run_transient_with<F>(
    model: &GridModel,
    supply: &Waveform,
    attachments: &[LoadAttachment],
    cfg: &SimConfig,
    mut observer: F,
) -> Result<usize>
where
    F: FnMut(&StepView<'_>) -> Result<()>,
{
    let Prepared { net, dt, steps } = prepare(model, supply, attachments, cfg)?;
    let crossings: Vec<Vec<f64>> = attachments
        .iter()
        .map(|a| match (&a.schedule.mode, a.schedule.sync) {
            (SwitchMode::AlwaysOn, _) | (_, SyncMode::Asynchronous) => Vec::new(),
            (_, SyncMode::ZeroCross) => zero_crossings(&supply.channels[a.phase.index()], supply.rate),
        })
        .collect();

    let mut engine = Engine::new(&net, dt, cfg.tolerance);
    let mut key = Key {
        backward_euler: true,
        switches: vec![false; attachments.len()],
        diodes: vec![false; net.diode_count],
    };
    let tap_nodes = Tap::ALL.len() * 4;
    let mut section_i = vec![0.0; net.section_branch.len()];
    let mut load_i = vec![0.0; attachments.len()];
    let mut shunt_i = vec![0.0; net.shunt_branch.len()];

    for n in 0..steps {
        let t = n as f64 * dt;
        key.backward_euler = n == 0 || cfg.method == Method::BackwardEuler;
        for (k, a) in attachments.iter().enumerate() {
            key.switches[k] = switch_state(&a.schedule, t + 0.5 * dt, &crossings[k]);
        }
        let mut known = [0.0; KNOWN_NODES];
        for (v, ch) in known.iter_mut().zip(&supply.channels) {
            *v = ch[n];
        }
        known[GROUND] = 0.0;
        engine.step(&mut key, known, t)?;
        engine.accept();

        for (dst, &b) in section_i.iter_mut().zip(&net.section_branch) {
            *dst = engine.i[b];
        }
        for (dst, &b) in load_i.iter_mut().zip(&net.switch_branch) {
            *dst = engine.i[b];
        }
        for (dst, &(_, _, b)) in shunt_i.iter_mut().zip(&net.shunt_branch) {
            *dst = engine.i[b];
        }
        observer(&StepView {
            n,
            t,
            node_voltages: &engine.v[..tap_nodes],
            section_currents: &section_i,
            load_currents: &load_i,
            shunt_currents: &shunt_i,
        })?;
    }
    Ok(steps)
}

/// Runs the solver and records every trace.
pub fn run_transient(
    model: &GridModel,
    supply: &Waveform,
    attachments: &[LoadAttachment],
    cfg: &SimConfig,
) -> Result<SimResult> {
    let shunt_caps: Vec<_> = model.shunt_capacitors().filter(|(_, _, c)| *c > 0.0).map(|(t, p, _)| (t, p)).collect();
    let dt = cfg.dt.unwrap_or(1.0 / supply.rate);
    let cap = cfg.t_end.map_or(supply.len(), |t| (t / dt).round() as usize).min(supply.len());
    let mut res = SimResult {
        dt,
        time: Vec::with_capacity(cap),
        node_voltages: (0..Tap::ALL.len() * 4).map(|_| Vec::with_capacity(cap)).collect(),
        section_currents: (0..24).map(|_| Vec::with_capacity(cap)).collect(),
        load_currents: (0..attachments.len()).map(|_| Vec::with_capacity(cap)).collect(),
        loads: attachments.iter().map(|a| (a.tap, a.phase)).collect(),
        shunt_currents: (0..shunt_caps.len()).map(|_| Vec::with_capacity(cap)).collect(),
        shunt_caps,
    };
    run_transient_with(model, supply, attachments, cfg, |s| {
        res.time.push(s.t);
        for (dst, v) in res.node_voltages.iter_mut().zip(s.node_voltages) {
            dst.push(*v);
        }
        for (dst, v) in res.section_currents.iter_mut().zip(s.section_currents) {
            dst.push(*v);
        }
        for (dst, v) in res.load_currents.iter_mut().zip(s.load_currents) {
            dst.push(*v);
        }
        for (dst, v) in res.shunt_currents.iter_mut().zip(s.shunt_currents) {
            dst.push(*v);
        }
        Ok(())
    })?;
    Ok(res)
}
