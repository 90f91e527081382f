//! Closed-loop network `ẇ = (I ⊗ S − L_σ ⊗ K C) w + (I ⊗ B) Φ(w)` integrated
//! with fixed-step RK4 across a switching signal.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::agent::{drift, AgentDynamics};
use crate::error::{Error, Result};
use crate::gain::GainDesign;
use crate::graph::TopologySet;
use crate::schedule::SwitchingSignal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub dt: f64,
    pub horizon: f64,
    pub record_stride: usize,
    pub divergence_guard: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            dt: 1e-3,
            horizon: 10.0,
            record_stride: 10,
            divergence_guard: 1e9,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive and finite, got {}", self.dt),
            });
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: format!("must be finite and non-negative, got {}", self.horizon),
            });
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter {
                name: "record_stride",
                reason: "must be at least 1".into(),
            });
        }
        if self.divergence_guard.is_nan() || self.divergence_guard <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "divergence_guard",
                reason: format!("must be positive, got {}", self.divergence_guard),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub t: f64,
    /// Position in the switching signal of the interval flowing from `t`.
    pub segment: usize,
    pub topology: usize,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub from: usize,
    pub to: usize,
    pub from_segment: usize,
    pub to_segment: usize,
    /// Index of the sample recorded at this instant.
    pub sample: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub agents: usize,
    pub dim: usize,
    pub samples: Vec<Sample>,
    pub switches: Vec<SwitchEvent>,
    pub diverged: bool,
    pub divergence_reason: Option<String>,
}

impl Trajectory {
    pub fn final_error(&self) -> Option<f64> {
        self.samples.last().map(|s| s.error)
    }

    pub fn max_error(&self) -> Option<f64> {
        self.samples.iter().map(|s| s.error).reduce(f64::max)
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.samples.last().map(|s| s.w.as_slice())
    }
}

/// Output disagreement diameter `max y − min y`.
pub fn consensus_error(w: &[f64], dynamics: &AgentDynamics) -> f64 {
    let d = dynamics.dim();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..w.len() / d {
        let y = w[k * d];
        lo = lo.min(y);
        hi = hi.max(y);
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

fn check_state(ts: &TopologySet, dynamics: &AgentDynamics, gain: &GainDesign, w: &[f64]) -> Result<()> {
    let n = ts.node_count();
    let d = dynamics.dim();
    if gain.k.len() != d {
        return Err(Error::Dimension(format!(
            "gain of length {} for agents of dimension {d}",
            gain.k.len()
        )));
    }
    if w.len() != n * d {
        return Err(Error::Dimension(format!(
            "state of length {} for {n} agents of dimension {d}",
            w.len()
        )));
    }
    Ok(())
}

/// `u_k = K ν_k` with `ν_k = Σ_j a_kj (y_j − y_k)`.
pub fn coupling_input(
    ts: &TopologySet,
    i: usize,
    gain: &GainDesign,
    dynamics: &AgentDynamics,
    w: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_state(ts, dynamics, gain, w)?;
    let d = dynamics.dim();
    let a = ts.topology(i).weights();
    let n = ts.node_count();
    Ok((0..n)
        .map(|k| {
            let nu: f64 = (0..n).map(|j| a[(k, j)] * (w[j * d] - w[k * d])).sum();
            gain.k.iter().map(|km| km * nu).collect()
        })
        .collect())
}

/// Vector field of the network, computed in the structured Kronecker form.
pub fn closed_loop_field(
    ts: &TopologySet,
    i: usize,
    gain: &GainDesign,
    dynamics: &AgentDynamics,
    w: &[f64],
) -> Result<Vec<f64>> {
    check_state(ts, dynamics, gain, w)?;
    let net = Network::new(ts, gain, dynamics);
    let mut out = vec![0.0; w.len()];
    net.field(i, w, &mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("closed-loop field".into()));
    }
    Ok(out)
}

/// Same field assembled agent by agent from `drift` and `coupling_input`.
pub fn closed_loop_field_by_agent(
    ts: &TopologySet,
    i: usize,
    gain: &GainDesign,
    dynamics: &AgentDynamics,
    w: &[f64],
) -> Result<Vec<f64>> {
    let u = coupling_input(ts, i, gain, dynamics, w)?;
    let d = dynamics.dim();
    let mut out = Vec::with_capacity(w.len());
    for (k, uk) in u.iter().enumerate() {
        out.extend(drift(dynamics, &w[k * d..(k + 1) * d], uk)?);
    }
    Ok(out)
}

struct Network<'a> {
    laplacians: Vec<&'a DMatrix<f64>>,
    k: &'a [f64],
    dynamics: &'a AgentDynamics,
    n: usize,
    d: usize,
}

impl<'a> Network<'a> {
    fn new(ts: &'a TopologySet, gain: &'a GainDesign, dynamics: &'a AgentDynamics) -> Self {
        Network {
            laplacians: (0..ts.len()).map(|i| ts.laplacian(i).matrix()).collect(),
            k: &gain.k,
            dynamics,
            n: ts.node_count(),
            d: dynamics.dim(),
        }
    }

    fn field(&self, topo: usize, w: &[f64], out: &mut [f64]) {
        let (n, d) = (self.n, self.d);
        let l = self.laplacians[topo];
        for k in 0..n {
            let wk = &w[k * d..(k + 1) * d];
            let ok = &mut out[k * d..(k + 1) * d];
            // −(L ⊗ K C) w restricted to agent k is −K Σ_j l_kj y_j.
            let mut ly = 0.0;
            for j in 0..n {
                ly += l[(k, j)] * w[j * d];
            }
            for m in 0..d - 1 {
                ok[m] = wk[m + 1] - self.k[m] * ly;
            }
            ok[d - 1] = self.dynamics.phi(wk) - self.k[d - 1] * ly;
        }
    }

    fn rk4_step(&self, topo: usize, w: &mut [f64], h: f64, scratch: &mut Rk4Scratch) {
        let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;
        self.field(topo, w, k1);
        for i in 0..w.len() {
            tmp[i] = w[i] + 0.5 * h * k1[i];
        }
        self.field(topo, tmp, k2);
        for i in 0..w.len() {
            tmp[i] = w[i] + 0.5 * h * k2[i];
        }
        self.field(topo, tmp, k3);
        for i in 0..w.len() {
            tmp[i] = w[i] + h * k3[i];
        }
        self.field(topo, tmp, k4);
        for i in 0..w.len() {
            w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(len: usize) -> Self {
        Rk4Scratch {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }
}

fn make_sample(t: f64, segment: usize, topology: usize, w: &[f64], dynamics: &AgentDynamics) -> Sample {
    let d = dynamics.dim();
    Sample {
        t,
        segment,
        topology,
        w: w.to_vec(),
        y: w.iter().step_by(d).copied().collect(),
        error: consensus_error(w, dynamics),
    }
}

/// Splits `[0, len]` into full steps of `dt` and a shorter last step.
fn step_plan(len: f64, dt: f64) -> (usize, f64) {
    let mut n = (len / dt).floor();
    let mut rem = len - n * dt;
    if rem > dt * (1.0 - 1e-12) {
        n += 1.0;
        rem = len - n * dt;
    }
    if rem.abs() < 1e-12 * dt {
        rem = 0.0;
    }
    (n as usize, rem.max(0.0))
}

/// Integrates the network over `[0, cfg.horizon]`.
///
/// Steps never straddle a switch. One sample is recorded at every switch
/// instant (attributed to the interval that flows next), every
/// `record_stride` steps inside an interval, and at the horizon.
pub fn simulate(
    ts: &TopologySet,
    sig: &SwitchingSignal,
    gain: &GainDesign,
    dynamics: &AgentDynamics,
    init: &[f64],
    cfg: &SimulationConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_state(ts, dynamics, gain, init)?;
    if init.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let total = sig.total_duration();
    if cfg.horizon > 0.0 && total < cfg.horizon * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter {
            name: "horizon",
            reason: format!(
                "signal covers {total} which is shorter than the horizon {}",
                cfg.horizon
            ),
        });
    }
    let mut traj = Trajectory {
        agents: ts.node_count(),
        dim: dynamics.dim(),
        samples: Vec::new(),
        switches: Vec::new(),
        diverged: false,
        divergence_reason: None,
    };
    if cfg.horizon == 0.0 {
        return Ok(traj);
    }

    let net = Network::new(ts, gain, dynamics);
    let mut scratch = Rk4Scratch::new(init.len());
    let mut w = init.to_vec();
    let starts = sig.start_times();
    let intervals = sig.intervals();
    let mut last_flowed = 0;

    for (s, iv) in intervals.iter().enumerate() {
        let start = starts[s];
        if start >= cfg.horizon {
            break;
        }
        if s > 0 {
            traj.switches.push(SwitchEvent {
                t: start,
                from: intervals[s - 1].topology,
                to: iv.topology,
                from_segment: s - 1,
                to_segment: s,
                sample: traj.samples.len(),
            });
        }
        let end = (start + iv.duration).min(cfg.horizon);
        if end <= start {
            continue;
        }
        traj.samples.push(make_sample(start, s, iv.topology, &w, dynamics));
        last_flowed = s;
        let (full, rem) = step_plan(end - start, cfg.dt);
        let steps = full + usize::from(rem > 0.0);
        for step in 0..steps {
            let h = if step < full { cfg.dt } else { rem };
            net.rk4_step(iv.topology, &mut w, h, &mut scratch);
            let t = if step + 1 == steps {
                end
            } else {
                start + (step + 1) as f64 * cfg.dt
            };
            let norm = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !norm.is_finite() || norm > cfg.divergence_guard {
                traj.samples.push(make_sample(t, s, iv.topology, &w, dynamics));
                traj.diverged = true;
                traj.divergence_reason = Some(format!(
                    "max-norm {norm:e} exceeded guard {:e} at t = {t}",
                    cfg.divergence_guard
                ));
                return Ok(traj);
            }
            if step + 1 < steps && (step + 1) % cfg.record_stride == 0 {
                traj.samples.push(make_sample(t, s, iv.topology, &w, dynamics));
            }
        }
    }
    let t_end = cfg.horizon.min(total);
    if traj.samples.last().is_none_or(|s| s.t < t_end) {
        let topo = intervals.get(last_flowed).map_or(0, |iv| iv.topology);
        traj.samples.push(make_sample(t_end, last_flowed, topo, &w, dynamics));
    }
    // Switch events at the horizon itself point past the last sample.
    let last = traj.samples.len().saturating_sub(1);
    for ev in &mut traj.switches {
        ev.sample = ev.sample.min(last);
    }
    Ok(traj)
}

/// Convergence verdict on a trajectory: final error below `abs_tol` and
/// at most `rel_tol` times the largest error seen.
pub fn is_converged(traj: &Trajectory, abs_tol: f64, rel_tol: f64) -> bool {
    match (traj.final_error(), traj.max_error()) {
        (Some(f), Some(m)) => !traj.diverged && f < abs_tol && f <= rel_tol * m.max(f64::MIN_POSITIVE),
        _ => false,
    }
}
