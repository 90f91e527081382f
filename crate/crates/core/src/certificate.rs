//! Hybrid Lyapunov certificate for a recorded run.
//!
//! `V(ζ) = ζᵀ (D(ℓ) ⊗ P⁻¹) ζ` is evaluated along the trajectory in the
//! coordinates of the active topology. Rates are measured (flow decay on
//! connected intervals) or bounded numerically (growth on disconnected
//! intervals, jump amplification), and the clock-augmented function
//! `W = e^{Lς} V` is checked for monotonicity in hybrid time.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gain::{lemma1_report, GainDesign, Lemma1Report, RiccatiSolution};
use crate::graph::TopologySet;
use crate::linalg;
use crate::lyapunov::LyapunovFunction;
use crate::report::{ser_finite, ser_finite_opt};
use crate::schedule::{tightest_adt, AdtParams, SwitchingSignal};
use crate::sim::Trajectory;
use crate::transform::{jump_matrix, to_transformed, TransformSet};

/// Relative slack on every inequality checked against recorded data.
pub const CHECK_RTOL: f64 = 1e-9;
/// Chords shorter than this are ignored when measuring decay rates.
pub const MIN_CHORD: f64 = 1e-9;
/// Relative disagreement below which samples are at round-off level.
pub const FLOOR_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct TopologyRates {
    pub label: String,
    pub connected: bool,
    pub cond_j: f64,
    /// Tight bound on `V̇ / V` in this topology's coordinates.
    pub growth_bound: f64,
    /// `2 ‖(D(ℓ) ⊗ P⁻¹) H‖`.
    pub a_nc_prime_printed: f64,
    /// `(g a_nc' + a_φ) / λ̲`.
    pub a_nc_printed: f64,
}

/// Run-independent constants for one design `(ts, P, ℓ, g, T0)`.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateConstants {
    pub ell: f64,
    pub g: f64,
    pub lambda_low: f64,
    pub lambda_high: f64,
    pub phi_lipschitz: f64,
    pub phi_bar: f64,
    pub a_phi: f64,
    /// Growth bound used for disconnected intervals.
    pub a_nc: f64,
    /// Same quantity from the printed formula, for comparison.
    pub a_nc_printed: f64,
    pub upsilon_bar: f64,
    pub a_j: f64,
    pub c_j: f64,
    pub t0: f64,
    pub topologies: Vec<TopologyRates>,
    pub lemma1: Lemma1Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Flow,
    Jump,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Flow => "flow",
            Phase::Jump => "jump",
        }
    }
}

/// One point of the hybrid-time trace.
#[derive(Debug, Clone, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub v: f64,
    pub w: f64,
    pub sigma: f64,
    /// Topology whose coordinates evaluate `V`.
    pub topology: usize,
    pub segment: usize,
    pub phase: Phase,
    /// Sample providing the network state.
    pub sample: usize,
    /// Whether the point lies before the round-off floor.
    pub checked: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConnectedFit {
    pub segment: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// Least-squares slope of `−ln V`, diagnostic only.
    #[serde(serialize_with = "ser_finite_opt")]
    pub fitted_rate: Option<f64>,
    #[serde(serialize_with = "ser_finite_opt")]
    pub min_chord_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub verdict: String,
    pub certified: bool,
    pub reasons: Vec<String>,
    pub constants: CertificateConstants,
    #[serde(serialize_with = "ser_finite_opt")]
    pub a_c: Option<f64>,
    pub tau_declared: f64,
    #[serde(serialize_with = "ser_finite")]
    pub tau_signal: f64,
    pub tau_used: f64,
    pub n0: usize,
    pub upsilon_bar_adjacent: f64,
    pub window_lower: f64,
    pub window_upper: f64,
    pub window_nonempty: bool,
    #[serde(rename = "L", serialize_with = "ser_finite_opt")]
    pub clock_rate: Option<f64>,
    #[serde(serialize_with = "ser_finite_opt")]
    pub epsilon: Option<f64>,
    pub clock_cap: f64,
    pub clock_ok: bool,
    pub min_clock: f64,
    pub w_monotone: bool,
    pub disconnected_growth_ok: bool,
    pub jumps_ok: bool,
    pub lemma1_ok: bool,
    pub jump_factors: Vec<f64>,
    #[serde(serialize_with = "ser_finite_opt")]
    pub max_jump_factor: Option<f64>,
    #[serde(serialize_with = "ser_finite_opt")]
    pub floor_time: Option<f64>,
    pub connected_fits: Vec<ConnectedFit>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

/// Transforms, Lyapunov function and constants for one design.
#[derive(Debug, Clone)]
pub struct CertificateContext<'a> {
    ts: &'a TopologySet,
    transforms: TransformSet,
    gain: GainDesign,
    lyap: LyapunovFunction,
    constants: CertificateConstants,
}

impl<'a> CertificateContext<'a> {
    pub fn new(
        ts: &'a TopologySet,
        gain: &GainDesign,
        sol: &RiccatiSolution,
        ell: f64,
        t0: f64,
        phi_lipschitz: f64,
    ) -> Result<Self> {
        if gain.k0.len() != sol.dim() {
            return Err(Error::Dimension(format!(
                "gain of length {} for P of size {}",
                gain.k0.len(),
                sol.dim()
            )));
        }
        let transforms = TransformSet::build(ts)?;
        let n = ts.node_count();
        let lyap = LyapunovFunction::new(sol, ell, n - 1)?;
        let lemma1 = lemma1_report(&transforms, sol, ell)?;
        let (lo, hi) = (lyap.lambda_low, lyap.lambda_high);
        let g = gain.g;

        let cond_j: Vec<f64> = transforms
            .transforms()
            .iter()
            .map(|tr| linalg::condition_number(tr.j()))
            .collect();
        let phi_bar = phi_lipschitz * cond_j.iter().copied().fold(1.0, f64::max);
        let a_phi = 2.0 * phi_bar * hi;
        let w = lyap.matrix();
        let coupling = 2.0 * phi_bar * (hi / lo).sqrt();

        let mut topologies = Vec::with_capacity(ts.len());
        for (i, tr) in transforms.transforms().iter().enumerate() {
            let h = tr.h(&gain.k0);
            let wh = &w * &h;
            let growth = if h.is_empty() {
                coupling
            } else {
                g * linalg::max_generalized_eigenvalue(&(&wh + wh.transpose()), &w)? + coupling
            };
            let a_nc_prime = 2.0 * linalg::spectral_norm(&wh);
            topologies.push(TopologyRates {
                label: tr.label().to_string(),
                connected: ts.is_connected(i),
                cond_j: cond_j[i],
                growth_bound: growth,
                a_nc_prime_printed: a_nc_prime,
                a_nc_printed: (g * a_nc_prime + a_phi) / lo,
            });
        }
        let disc = ts.disconnected_indices();
        let a_nc = disc
            .iter()
            .map(|&i| topologies[i].growth_bound)
            .fold(f64::NEG_INFINITY, f64::max);
        let a_nc_printed = disc
            .iter()
            .map(|&i| topologies[i].a_nc_printed)
            .fold(f64::NEG_INFINITY, f64::max);
        let a_nc = if a_nc.is_finite() { a_nc } else { 0.0 };
        let a_nc_printed = if a_nc_printed.is_finite() { a_nc_printed } else { 0.0 };

        let mut upsilon_bar: f64 = 1.0;
        for a in transforms.transforms() {
            for b in transforms.transforms() {
                upsilon_bar = upsilon_bar.max(linalg::spectral_norm(&jump_matrix(a, b)));
            }
        }
        let a_j = hi / lo * upsilon_bar * upsilon_bar;
        let c_j = a_nc.max(0.0) * t0 + 2.0 * a_j.ln();

        let constants = CertificateConstants {
            ell,
            g,
            lambda_low: lo,
            lambda_high: hi,
            phi_lipschitz,
            phi_bar,
            a_phi,
            a_nc,
            a_nc_printed,
            upsilon_bar,
            a_j,
            c_j,
            t0,
            topologies,
            lemma1,
        };
        Ok(CertificateContext {
            ts,
            transforms,
            gain: gain.clone(),
            lyap,
            constants,
        })
    }

    pub fn constants(&self) -> &CertificateConstants {
        &self.constants
    }

    pub fn transforms(&self) -> &TransformSet {
        &self.transforms
    }

    pub fn lyapunov(&self) -> &LyapunovFunction {
        &self.lyap
    }

    fn v(&self, topology: usize, w: &[f64]) -> Result<f64> {
        let state = to_transformed(self.transforms.get(topology), &self.gain.dg, w)?;
        Ok(self.lyap.evaluate(&state.zeta))
    }

    /// Builds the hybrid-time trace (without clock values) of a trajectory.
    fn raw_trace(&self, traj: &Trajectory, sig: &SwitchingSignal) -> Result<Vec<TracePoint>> {
        let mut points = Vec::with_capacity(traj.samples.len() + 2 * traj.switches.len());
        let point = |t, v, topology, segment, phase, sample| TracePoint {
            t,
            v,
            w: 0.0,
            sigma: 0.0,
            topology,
            segment,
            phase,
            sample,
            checked: false,
        };
        let mut sw = 0;
        for (k, s) in traj.samples.iter().enumerate() {
            let prev_segment = if k == 0 {
                // Leading zero-length intervals precede the first sample.
                (sw < traj.switches.len() && traj.switches[sw].sample == 0).then_some(0)
            } else {
                Some(traj.samples[k - 1].segment)
            };
            match prev_segment {
                Some(seg) if seg != s.segment => {
                    let topo = if k == 0 {
                        sig.intervals()[0].topology
                    } else {
                        traj.samples[k - 1].topology
                    };
                    points.push(point(s.t, self.v(topo, &s.w)?, topo, seg, Phase::Flow, k));
                    while sw < traj.switches.len() && traj.switches[sw].sample == k {
                        let ev = &traj.switches[sw];
                        points.push(point(s.t, self.v(ev.to, &s.w)?, ev.to, ev.to_segment, Phase::Jump, k));
                        sw += 1;
                    }
                }
                _ => points.push(point(
                    s.t,
                    self.v(s.topology, &s.w)?,
                    s.topology,
                    s.segment,
                    Phase::Flow,
                    k,
                )),
            }
        }
        Ok(points)
    }

    /// Checks one recorded run against the certificate.
    pub fn certify(&self, traj: &Trajectory, sig: &SwitchingSignal, adt: &AdtParams) -> Result<CertificateReport> {
        let c = &self.constants;
        let ts = self.ts;
        let mut reasons = Vec::new();
        let mut notes = Vec::new();
        if (adt.t0 - c.t0).abs() > 0.0 {
            return Err(Error::InvalidParameter {
                name: "T0",
                reason: format!("context built for T0 = {}, run declares {}", c.t0, adt.t0),
            });
        }
        if c.a_nc_printed > c.a_nc {
            notes.push(format!(
                "printed growth formula gives a_nc = {:.4e}; the certificate uses the tight bound {:.4e}",
                c.a_nc_printed, c.a_nc
            ));
        }

        let tau_signal = tightest_adt(sig, adt.n0);
        // The run is judged with the dwell-time constant its signal actually
        // satisfies; unbounded when too few intervals constrain it.
        let tau_used = if tau_signal.is_finite() {
            tau_signal
        } else {
            adt.tau.max(sig.total_duration())
        };
        if tau_signal < adt.tau {
            notes.push(format!(
                "signal satisfies the dwell-time condition only up to tau = {tau_signal:.6}; declared {}",
                adt.tau
            ));
        }

        let mut upsilon_adj: f64 = 1.0;
        for pair in sig.intervals().windows(2) {
            let m = jump_matrix(
                self.transforms.get(pair[0].topology),
                self.transforms.get(pair[1].topology),
            );
            upsilon_adj = upsilon_adj.max(linalg::spectral_norm(&m));
        }

        // Round-off floor: first sample whose state disagreement is at
        // machine level relative to the state.
        let d = traj.dim;
        let floor = traj.samples.iter().position(|s| {
            let scale = s.w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let dis = (1..traj.agents)
                .flat_map(|k| (0..d).map(move |m| (k, m)))
                .fold(0.0f64, |acc, (k, m)| acc.max((s.w[k * d + m] - s.w[m]).abs()));
            dis <= FLOOR_RTOL * (1.0 + scale)
        });
        let floor_time = floor.map(|k| traj.samples[k].t);

        let mut trace = self.raw_trace(traj, sig)?;
        let last_checked = floor.unwrap_or(usize::MAX);
        for p in &mut trace {
            p.checked = p.sample <= last_checked;
        }

        // Measured decay on connected flow chords.
        let mut a_c: Option<f64> = None;
        let mut fits: Vec<ConnectedFit> = Vec::new();
        let mut i = 0;
        while i < trace.len() {
            let seg = trace[i].segment;
            let mut j = i;
            while j + 1 < trace.len() && trace[j + 1].segment == seg && trace[j + 1].phase == Phase::Flow {
                j += 1;
            }
            if ts.is_connected(trace[i].topology) && j > i {
                let pts: Vec<&TracePoint> = trace[i..=j].iter().filter(|p| p.checked && p.v > 0.0).collect();
                let mut min_rate: Option<f64> = None;
                for w2 in pts.windows(2) {
                    let dt = w2[1].t - w2[0].t;
                    if dt < MIN_CHORD {
                        continue;
                    }
                    let rate = -(w2[1].v.ln() - w2[0].v.ln()) / dt;
                    min_rate = Some(min_rate.map_or(rate, |m: f64| m.min(rate)));
                }
                if let Some(r) = min_rate {
                    a_c = Some(a_c.map_or(r, |m: f64| m.min(r)));
                }
                fits.push(ConnectedFit {
                    segment: seg,
                    t_start: trace[i].t,
                    t_end: trace[j].t,
                    fitted_rate: log_slope(&pts),
                    min_chord_rate: min_rate,
                });
            }
            i = j + 1;
        }

        let trivially = floor == Some(0);
        let upper = tau_used * a_c.unwrap_or(0.0).max(0.0) / 2.0;
        let window_nonempty = upper > c.c_j;
        let l = window_nonempty.then_some(0.5 * (c.c_j + upper));
        let epsilon = l.map(|l| (-l + c.c_j).exp());

        // Clock, W and the interval checks.
        let cap = (adt.n0 + 2) as f64;
        let lw = l.unwrap_or(0.0);
        let mut sigma = cap;
        let mut min_clock = cap;
        let mut clock_ok = true;
        let mut w_monotone = true;
        let mut growth_ok = true;
        let mut jumps_ok = true;
        let mut jump_factors = Vec::new();
        let mut w_ref = f64::INFINITY;
        let mut disc_start: Option<(f64, f64)> = None;
        for idx in 0..trace.len() {
            let (head, tail) = trace.split_at_mut(idx);
            let p = &mut tail[0];
            let prev = head.last();
            let connected = ts.is_connected(p.topology);
            match (p.phase, prev) {
                (Phase::Flow, Some(q)) if q.segment == p.segment => {
                    let dt = p.t - q.t;
                    if connected && dt > 0.0 {
                        sigma = if tau_used > 0.0 {
                            (sigma + dt / tau_used).min(cap)
                        } else {
                            cap
                        };
                    }
                }
                (Phase::Jump, Some(q)) if ts.is_connected(q.topology) && !connected => {
                    sigma -= 1.0;
                }
                _ => {}
            }
            p.sigma = sigma;
            p.w = (lw * sigma).exp() * p.v;
            if !p.checked {
                continue;
            }
            min_clock = min_clock.min(sigma);
            if sigma < -1e-12 {
                clock_ok = false;
            }
            let Some(q) = prev else {
                if !connected {
                    disc_start = Some((p.t, p.v));
                    w_ref = p.w;
                }
                continue;
            };
            let q_connected = ts.is_connected(q.topology);
            if p.phase == Phase::Jump {
                if q.v > 0.0 {
                    let f = p.v / q.v;
                    jump_factors.push(f);
                    if f > c.a_j * (1.0 + CHECK_RTOL) {
                        jumps_ok = false;
                    }
                }
                if q_connected && !connected {
                    w_ref = q.w;
                }
                if !connected || !q_connected {
                    if p.w > w_ref * (1.0 + CHECK_RTOL) {
                        w_monotone = false;
                    }
                } else if p.w > q.w * (1.0 + CHECK_RTOL) {
                    w_monotone = false;
                }
                if !connected {
                    disc_start = Some((p.t, p.v));
                }
            } else if connected {
                if q.segment == p.segment && p.w > q.w * (1.0 + CHECK_RTOL) {
                    w_monotone = false;
                }
            } else {
                if p.w > w_ref * (1.0 + CHECK_RTOL) {
                    w_monotone = false;
                }
                if let Some((t0, v0)) = disc_start {
                    if p.v > (c.a_nc * (p.t - t0)).exp() * v0 * (1.0 + CHECK_RTOL) {
                        growth_ok = false;
                    }
                }
            }
        }

        let lemma1_ok = c.lemma1.holds;
        if traj.diverged {
            reasons.push("trajectory diverged".to_string());
        }
        if !trivially {
            match a_c {
                None => reasons.push("no connected flow to measure a_c".to_string()),
                Some(r) if r <= 0.0 => reasons.push(format!("V does not decay on connected flows (a_c = {r:.4e})")),
                _ => {}
            }
            if !window_nonempty {
                reasons.push("tau below empirical tau*".to_string());
            }
            if !growth_ok {
                reasons.push("growth on a disconnected interval exceeds a_nc".to_string());
            }
            if !jumps_ok {
                reasons.push("jump factor exceeds a_j".to_string());
            }
            if !clock_ok {
                reasons.push("clock dropped below zero".to_string());
            }
            if !w_monotone {
                reasons.push("W increases in hybrid time".to_string());
            }
            if !lemma1_ok {
                reasons.push("matrix inequality fails at the selected ell".to_string());
            }
        } else {
            notes.push("initial state is already at consensus (round-off level)".to_string());
        }
        let certified = reasons.is_empty();
        let verdict = if certified {
            "certified".to_string()
        } else {
            format!("uncertified: {}", reasons.join("; "))
        };
        let max_jump_factor = jump_factors.iter().copied().reduce(f64::max);
        Ok(CertificateReport {
            verdict,
            certified,
            reasons,
            constants: c.clone(),
            a_c,
            tau_declared: adt.tau,
            tau_signal,
            tau_used,
            n0: adt.n0,
            upsilon_bar_adjacent: upsilon_adj,
            window_lower: c.c_j,
            window_upper: upper,
            window_nonempty,
            clock_rate: l,
            epsilon,
            clock_cap: cap,
            clock_ok,
            min_clock,
            w_monotone,
            disconnected_growth_ok: growth_ok,
            jumps_ok,
            lemma1_ok,
            jump_factors,
            max_jump_factor,
            floor_time,
            connected_fits: fits,
            notes,
            trace,
        })
    }
}

fn log_slope(points: &[&TracePoint]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.t).sum::<f64>() / n;
    let my = points.iter().map(|p| p.v.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in points {
        sxy += (p.t - mt) * (p.v.ln() - my);
        sxx += (p.t - mt) * (p.t - mt);
    }
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// One-shot certification of a run.
#[allow(clippy::too_many_arguments)]
pub fn certify_run(
    traj: &Trajectory,
    ts: &TopologySet,
    sig: &SwitchingSignal,
    gain: &GainDesign,
    sol: &RiccatiSolution,
    ell: f64,
    adt: &AdtParams,
    phi_lipschitz: f64,
) -> Result<CertificateReport> {
    CertificateContext::new(ts, gain, sol, ell, adt.t0, phi_lipschitz)?.certify(traj, sig, adt)
}

/// Writes the trace as CSV with columns `t,V,W,sigma_clock,active_topo,phase`.
pub fn write_trace_csv<W: std::io::Write>(report: &CertificateReport, ts: &TopologySet, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["t", "V", "W", "sigma_clock", "active_topo", "phase"])?;
    for p in &report.trace {
        wtr.write_record([
            format!("{:.9}", p.t),
            format!("{:.12e}", p.v),
            format!("{:.12e}", p.w),
            format!("{:.9}", p.sigma),
            ts.topology(p.topology).label().to_string(),
            p.phase.as_str().to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::builtin_dynamics;
    use crate::gain::{build_gain, find_ell, solve_riccati, DEFAULT_MAX_ELL};
    use crate::graph::Topology;
    use crate::schedule::normalize_alternation;
    use crate::sim::{simulate, SimulationConfig};
    use std::collections::BTreeMap;

    fn undirected(pairs: &[(usize, usize)]) -> Vec<(usize, usize, f64)> {
        pairs.iter().flat_map(|&(a, b)| [(a, b, 1.0), (b, a, 1.0)]).collect()
    }

    fn set() -> TopologySet {
        let c = Topology::from_edges("path", 3, &undirected(&[(0, 1), (1, 2)])).unwrap();
        let nc = Topology::from_edges("pair", 3, &undirected(&[(0, 1)])).unwrap();
        TopologySet::new(vec![c, nc], None).unwrap()
    }

    struct Setup {
        ts: TopologySet,
        sol: RiccatiSolution,
        gain: GainDesign,
        ell: f64,
    }

    fn setup(g: f64) -> Setup {
        let ts = set();
        let sol = solve_riccati(2, ts.mu(), 1.0).unwrap();
        let trs = TransformSet::build(&ts).unwrap();
        let ell = find_ell(&trs, &sol, DEFAULT_MAX_ELL).unwrap().ell;
        let gain = build_gain(&sol, g).unwrap();
        Setup { ts, sol, gain, ell }
    }

    fn run(s: &Setup, raw: &[(usize, f64)], horizon: f64) -> (Trajectory, SwitchingSignal) {
        let dynamics = builtin_dynamics("bounded_sine", 2, &BTreeMap::new()).unwrap();
        let sig = normalize_alternation(raw, &s.ts).unwrap();
        let cfg = SimulationConfig {
            horizon,
            ..Default::default()
        };
        let init = [1.0, 0.0, -0.5, 0.5, 0.2, -1.0];
        (simulate(&s.ts, &sig, &s.gain, &dynamics, &init, &cfg).unwrap(), sig)
    }

    #[test]
    fn single_connected_interval() {
        let s = setup(10.0);
        let (traj, sig) = run(&s, &[(0, 3.0)], 3.0);
        let adt = AdtParams::new(3.0, 1, 0.5).unwrap();
        let rep = certify_run(&traj, &s.ts, &sig, &s.gain, &s.sol, s.ell, &adt, 1.0).unwrap();
        assert!(rep.jump_factors.is_empty());
        assert_eq!(rep.connected_fits.len(), 1);
        assert!(rep.a_c.unwrap() > 0.0);
        // Without jumps the W check is a V monotonicity check.
        let vs: Vec<f64> = rep.trace.iter().filter(|p| p.checked).map(|p| p.v).collect();
        assert!(vs.windows(2).all(|p| p[1] <= p[0] * (1.0 + CHECK_RTOL)));
        assert!(rep.lambda_ok());
    }

    #[test]
    fn identical_topology_jump_has_unit_factor() {
        let s = setup(10.0);
        // Two connected intervals of the same topology separated by a
        // zero-length disconnected one.
        let (traj, sig) = run(&s, &[(0, 0.5), (0, 0.5)], 1.0);
        let adt = AdtParams::new(0.5, 1, 0.5).unwrap();
        let rep = certify_run(&traj, &s.ts, &sig, &s.gain, &s.sol, s.ell, &adt, 1.0).unwrap();
        assert_eq!(rep.jump_factors.len(), 2);
        let product: f64 = rep.jump_factors.iter().product();
        assert!((product - 1.0).abs() < 1e-9);
        assert!(rep.jump_factors.iter().all(|f| *f <= rep.constants.a_j));
    }

    #[test]
    fn admissible_run_is_certified() {
        let s = setup(20.0);
        let (traj, sig) = run(&s, &[(0, 7.0), (1, 0.3), (0, 7.0), (1, 0.5), (0, 7.0)], 21.8);
        let adt = AdtParams::new(7.0, 1, 0.5).unwrap();
        let rep = certify_run(&traj, &s.ts, &sig, &s.gain, &s.sol, s.ell, &adt, 1.0).unwrap();
        assert!(rep.certified, "{}", rep.verdict);
        assert!(rep.epsilon.unwrap() < 1.0);
        assert!(rep.window_lower < rep.window_upper);
        assert!(rep.constants.lambda_low <= rep.constants.lambda_high);
        // W never increases along checked connected rows.
        let ws: Vec<f64> = rep
            .trace
            .iter()
            .filter(|p| p.checked && s.ts.is_connected(p.topology))
            .map(|p| p.w)
            .collect();
        assert!(ws.windows(2).all(|p| p[1] <= p[0] * (1.0 + CHECK_RTOL)));
    }

    #[test]
    fn zero_dwell_is_uncertified() {
        let s = setup(20.0);
        let raw: Vec<(usize, f64)> = (0..10).flat_map(|_| [(0, 0.0), (1, 0.5)]).collect();
        let (traj, sig) = run(&s, &raw, 5.0);
        let adt = AdtParams::new(0.0, 1, 0.5).unwrap();
        let rep = certify_run(&traj, &s.ts, &sig, &s.gain, &s.sol, s.ell, &adt, 1.0).unwrap();
        assert!(!rep.certified);
        assert!(rep.verdict.contains("tau below empirical tau*"));
        assert!(!rep.window_nonempty);
    }

    #[test]
    fn start_at_consensus_is_trivially_certified() {
        let s = setup(5.0);
        let dynamics = builtin_dynamics("bounded_sine", 2, &BTreeMap::new()).unwrap();
        let sig = normalize_alternation(&[(0, 1.0)], &s.ts).unwrap();
        let cfg = SimulationConfig {
            horizon: 1.0,
            ..Default::default()
        };
        let traj = simulate(&s.ts, &sig, &s.gain, &dynamics, &[0.5, 0.1, 0.5, 0.1, 0.5, 0.1], &cfg).unwrap();
        let adt = AdtParams::new(1.0, 1, 0.5).unwrap();
        let rep = certify_run(&traj, &s.ts, &sig, &s.gain, &s.sol, s.ell, &adt, 1.0).unwrap();
        assert!(rep.certified);
        assert_eq!(rep.floor_time, Some(0.0));
    }

    #[test]
    fn trace_csv_header() {
        let s = setup(10.0);
        let (traj, sig) = run(&s, &[(0, 0.2)], 0.2);
        let adt = AdtParams::new(0.2, 1, 0.5).unwrap();
        let rep = certify_run(&traj, &s.ts, &sig, &s.gain, &s.sol, s.ell, &adt, 1.0).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&rep, &s.ts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,V,W,sigma_clock,active_topo,phase\n"));
        assert_eq!(text.lines().count(), rep.trace.len() + 1);
    }

    impl CertificateReport {
        fn lambda_ok(&self) -> bool {
            self.constants.lambda_low <= self.constants.lambda_high
        }
    }
}
