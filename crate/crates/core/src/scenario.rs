//! Scenario files, the validation gate and the run pipeline.
//!
//! Scenarios are TOML. Edge endpoints are 1-based; `[k, j, w]` means
//! agent `k` listens to agent `j` with weight `w`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{builtin_dynamics, AgentDynamics};
use crate::certificate::{write_trace_csv, CertificateContext, CertificateReport};
use crate::error::{Error, Result};
use crate::gain::{build_gain, find_ell, lemma1_report, solve_riccati, GainDesign, RiccatiSolution, DEFAULT_MAX_ELL};
use crate::graph::{validate_topology_set, Topology, TopologySet};
use crate::schedule::{check_adt, check_disconnected_bound, generate_signal, AdtParams, Interval, SwitchingSignal};
use crate::sim::{is_converged, simulate, SimulationConfig, Trajectory};
use crate::transform::TransformSet;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_UNCERTIFIED: i32 = 4;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DWELL_CONSENSUS_OUT";

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub label: String,
    #[serde(default)]
    pub edges: Vec<(usize, usize, f64)>,
    /// Mirror every edge.
    #[serde(default)]
    pub undirected: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    pub g: f64,
    #[serde(default = "one")]
    pub a: f64,
    pub mu: Option<f64>,
    pub ell: Option<f64>,
    pub max_ell: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalSpec {
    pub topology: String,
    pub duration: f64,
}

/// Alternates connected and disconnected intervals of fixed lengths,
/// cycling through each class in declaration order.
#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodicSpec {
    pub connected: f64,
    pub disconnected: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub tau: f64,
    pub n0: usize,
    #[serde(rename = "T0")]
    pub t0: f64,
    #[serde(default)]
    pub seed: u64,
    pub intervals: Option<Vec<IntervalSpec>>,
    pub periodic: Option<PeriodicSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_guard")]
    pub divergence_guard: f64,
}

fn default_dt() -> f64 {
    SimulationConfig::default().dt
}

fn default_stride() -> usize {
    SimulationConfig::default().record_stride
}

fn default_guard() -> f64 {
    SimulationConfig::default().divergence_guard
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    /// Agent-major stack `w_1, …, w_N`.
    pub state: Option<Vec<f64>>,
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub spread: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            abs_tol: 1e-6,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub agents: usize,
    pub dim: usize,
    #[serde(rename = "topology")]
    pub topologies: Vec<TopologySpec>,
    pub dynamics: DynamicsSpec,
    pub gain: GainSpec,
    pub signal: SignalSpec,
    pub simulation: SimulationSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub convergence: ConvergenceSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl Scenario {
    pub fn from_toml(text: &str, file: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            file: file.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn adt(&self) -> AdtParams {
        AdtParams {
            tau: self.signal.tau,
            n0: self.signal.n0,
            t0: self.signal.t0,
        }
    }

    pub fn sim_config(&self) -> SimulationConfig {
        SimulationConfig {
            dt: self.simulation.dt,
            horizon: self.simulation.horizon,
            record_stride: self.simulation.record_stride,
            divergence_guard: self.simulation.divergence_guard,
        }
    }
}

/// Every object a run needs, built and checked before integration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub ts: TopologySet,
    pub dynamics: AgentDynamics,
    pub sol: RiccatiSolution,
    pub gain: GainDesign,
    pub ell: f64,
    pub adt: AdtParams,
    pub cfg: SimulationConfig,
}

fn build_topologies(sc: &Scenario, errs: &mut Vec<String>) -> Vec<Topology> {
    let n = sc.agents;
    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, spec) in sc.topologies.iter().enumerate() {
        if seen.insert(spec.label.clone(), i).is_some() {
            errs.push(format!("topology label `{}` is used twice", spec.label));
        }
        let mut edges = Vec::new();
        let mut ok = true;
        for &(k, j, w) in &spec.edges {
            if k == 0 || j == 0 || k > n || j > n {
                errs.push(format!(
                    "topology `{}`: edge [{k}, {j}] outside 1..={n} (endpoints are 1-based)",
                    spec.label
                ));
                ok = false;
                continue;
            }
            edges.push((k - 1, j - 1, w));
            if spec.undirected {
                edges.push((j - 1, k - 1, w));
            }
        }
        if !ok {
            continue;
        }
        match Topology::from_edges(spec.label.clone(), n, &edges) {
            Ok(t) => out.push(t),
            Err(e) => errs.push(e.to_string()),
        }
    }
    out
}

fn build_signal(sc: &Scenario, ts: &TopologySet, adt: &AdtParams, seed: u64) -> Result<SwitchingSignal> {
    let horizon = sc.simulation.horizon;
    if let Some(list) = &sc.signal.intervals {
        let mut intervals = Vec::with_capacity(list.len());
        for iv in list {
            let topology = ts.index_of(&iv.topology).ok_or_else(|| Error::InvalidParameter {
                name: "signal.intervals",
                reason: format!("unknown topology label `{}`", iv.topology),
            })?;
            intervals.push(Interval {
                topology,
                duration: iv.duration,
            });
        }
        return SwitchingSignal::new(intervals, ts);
    }
    if let Some(p) = sc.signal.periodic {
        let conn = ts.connected_indices();
        let disc = ts.disconnected_indices();
        if conn.is_empty() {
            return Err(Error::MissingClass("connected"));
        }
        if disc.is_empty() {
            return Err(Error::MissingClass("disconnected"));
        }
        let period = p.connected + p.disconnected;
        if period.is_nan() || period <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "signal.periodic",
                reason: "period must be positive".into(),
            });
        }
        let pairs = ((horizon / period).ceil() as usize).max(1);
        let intervals = (0..pairs)
            .flat_map(|i| {
                [
                    Interval {
                        topology: conn[i % conn.len()],
                        duration: p.connected,
                    },
                    Interval {
                        topology: disc[i % disc.len()],
                        duration: p.disconnected,
                    },
                ]
            })
            .collect();
        return SwitchingSignal::new(intervals, ts);
    }
    generate_signal(ts, adt, horizon, seed)
}

/// Initial stack for a given seed (explicit states ignore the seed).
pub fn initial_state(sc: &Scenario, seed: u64) -> Vec<f64> {
    if let Some(s) = &sc.initial.state {
        return s.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sc.initial.seed.unwrap_or(0) ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let spread = sc.initial.spread;
    (0..sc.agents * sc.dim)
        .map(|_| spread * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

fn push_err<T>(errs: &mut Vec<String>, r: Result<T>) -> Option<T> {
    r.map_err(|e| errs.push(e.to_string())).ok()
}

/// Runs every validator and reports all violations at once.
pub fn prepare(sc: &Scenario) -> Result<Prepared> {
    let mut errs = Vec::new();
    if sc.agents == 0 {
        errs.push("agents must be at least 1".into());
    }
    if sc.dim == 0 {
        errs.push("dim must be at least 1".into());
    }
    if sc.topologies.is_empty() {
        errs.push("at least one [[topology]] is required".into());
    }
    let cfg = sc.sim_config();
    push_err(&mut errs, cfg.validate());
    let adt = push_err(&mut errs, AdtParams::new(sc.signal.tau, sc.signal.n0, sc.signal.t0));
    if sc.signal.intervals.is_some() && sc.signal.periodic.is_some() {
        errs.push("signal: give either `intervals` or `periodic`, not both".into());
    }
    if !(sc.gain.a > 0.0 && sc.gain.a.is_finite()) {
        errs.push(format!("gain.a must be positive, got {}", sc.gain.a));
    }
    if !(sc.gain.g >= 1.0 && sc.gain.g.is_finite()) {
        errs.push(format!("gain.g must be at least 1, got {}", sc.gain.g));
    }
    if let Some(mu) = sc.gain.mu {
        if !(mu > 0.0 && mu.is_finite()) {
            errs.push(format!("gain.mu must be positive, got {mu}"));
        }
    }
    if let Some(ell) = sc.gain.ell {
        if !(ell > 0.0 && ell.is_finite()) {
            errs.push(format!("gain.ell must be positive, got {ell}"));
        }
    }
    let dynamics = if sc.dim > 0 {
        push_err(
            &mut errs,
            builtin_dynamics(&sc.dynamics.name, sc.dim, &sc.dynamics.params),
        )
    } else {
        None
    };
    match (&sc.initial.state, sc.initial.seed) {
        (Some(s), _) => {
            if s.len() != sc.agents * sc.dim {
                errs.push(format!(
                    "initial.state has {} entries, expected agents * dim = {}",
                    s.len(),
                    sc.agents * sc.dim
                ));
            }
            if s.iter().any(|v| !v.is_finite()) {
                errs.push("initial.state contains non-finite entries".into());
            }
        }
        (None, Some(_)) => {
            if !(sc.initial.spread >= 0.0 && sc.initial.spread.is_finite()) {
                errs.push("initial.spread must be finite and non-negative".into());
            }
        }
        (None, None) => errs.push("initial needs `state` or `seed`".into()),
    }

    let topos = if sc.agents > 0 {
        build_topologies(sc, &mut errs)
    } else {
        Vec::new()
    };
    let ts = if topos.len() == sc.topologies.len() && !topos.is_empty() {
        push_err(&mut errs, TopologySet::new(topos, sc.gain.mu))
    } else {
        None
    };
    if let Some(ts) = &ts {
        push_err(&mut errs, validate_topology_set(ts));
        if ts.connected_indices().is_empty() {
            errs.push("topology set has no connected topology".into());
        }
    }

    let mut sig = None;
    if let (Some(ts), Some(adt)) = (&ts, &adt) {
        if let Some(s) = push_err(&mut errs, build_signal(sc, ts, adt, sc.signal.seed)) {
            if !check_disconnected_bound(&s, adt.t0) {
                errs.push(format!(
                    "signal has a disconnected interval longer than T0 = {}",
                    adt.t0
                ));
            }
            if !check_adt(&s, adt.tau, adt.n0) {
                errs.push(format!(
                    "signal violates the average dwell time condition with tau = {}, n0 = {}",
                    adt.tau, adt.n0
                ));
            }
            if cfg.horizon > 0.0 && s.total_duration() < cfg.horizon * (1.0 - 1e-12) {
                errs.push(format!(
                    "signal covers {} but the horizon is {}",
                    s.total_duration(),
                    cfg.horizon
                ));
            }
            sig = Some(s);
        }
    }

    let mut design = None;
    if let (Some(ts), true) = (&ts, sc.dim > 0 && sc.gain.a > 0.0 && sc.gain.g >= 1.0) {
        let built = (|| -> Result<(RiccatiSolution, GainDesign, f64)> {
            let sol = solve_riccati(sc.dim, ts.mu(), sc.gain.a)?;
            let gain = build_gain(&sol, sc.gain.g)?;
            let trs = TransformSet::build(ts)?;
            let ell = match sc.gain.ell {
                Some(ell) => {
                    let rep = lemma1_report(&trs, &sol, ell)?;
                    if !rep.holds {
                        return Err(Error::InvalidParameter {
                            name: "gain.ell",
                            reason: format!("matrix inequality fails at ell = {ell}"),
                        });
                    }
                    ell
                }
                None => find_ell(&trs, &sol, sc.gain.max_ell.unwrap_or(DEFAULT_MAX_ELL))?.ell,
            };
            Ok((sol, gain, ell))
        })();
        design = push_err(&mut errs, built);
    }

    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }
    let (ts, dynamics, adt, _sig) = (ts.unwrap(), dynamics.unwrap(), adt.unwrap(), sig.unwrap());
    let (sol, gain, ell) = design.unwrap();
    Ok(Prepared {
        scenario: sc.clone(),
        ts,
        dynamics,
        sol,
        gain,
        ell,
        adt,
        cfg,
    })
}

/// Outcome of one simulated and certified run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub signal: SwitchingSignal,
    pub trajectory: Trajectory,
    pub initial_error: f64,
    /// `None` for a zero horizon.
    pub certificate: Option<CertificateReport>,
    pub converged: bool,
    pub certified: bool,
    pub exit_code: i32,
    pub status: &'static str,
}

impl Prepared {
    pub fn with_overrides(mut self, dt: Option<f64>, g: Option<f64>, tau: Option<f64>) -> Result<Self> {
        if let Some(dt) = dt {
            self.cfg.dt = dt;
            self.scenario.simulation.dt = dt;
            self.cfg.validate()?;
        }
        if let Some(g) = g {
            self.gain = build_gain(&self.sol, g)?;
            self.scenario.gain.g = g;
        }
        if let Some(tau) = tau {
            self.adt = AdtParams::new(tau, self.adt.n0, self.adt.t0)?;
            self.scenario.signal.tau = tau;
        }
        Ok(self)
    }

    pub fn signal(&self, seed: u64) -> Result<SwitchingSignal> {
        build_signal(&self.scenario, &self.ts, &self.adt, seed)
    }

    pub fn context(&self) -> Result<CertificateContext<'_>> {
        CertificateContext::new(
            &self.ts,
            &self.gain,
            &self.sol,
            self.ell,
            self.adt.t0,
            self.dynamics.phi_lipschitz(),
        )
    }

    /// Simulates and certifies with the given signal and initial seed.
    pub fn run_with(&self, ctx: &CertificateContext<'_>, seed: u64) -> Result<RunResult> {
        let sig = self.signal(seed)?;
        let init = initial_state(&self.scenario, seed);
        let initial_error = crate::sim::consensus_error(&init, &self.dynamics);
        let traj = simulate(&self.ts, &sig, &self.gain, &self.dynamics, &init, &self.cfg)?;
        let conv = self.scenario.convergence;
        if self.cfg.horizon == 0.0 {
            return Ok(RunResult {
                signal: sig,
                trajectory: traj,
                initial_error,
                certificate: None,
                converged: true,
                certified: true,
                exit_code: EXIT_OK,
                status: "zero_horizon",
            });
        }
        let cert = ctx.certify(&traj, &sig, &self.adt)?;
        let converged = is_converged(&traj, conv.abs_tol, conv.rel_tol);
        let certified = cert.certified;
        let (exit_code, status) = if traj.diverged {
            (EXIT_DIVERGED, "diverged")
        } else if !certified {
            (EXIT_UNCERTIFIED, "uncertified")
        } else if !converged {
            (EXIT_UNCERTIFIED, "not_converged")
        } else {
            (EXIT_OK, "certified_converged")
        };
        Ok(RunResult {
            signal: sig,
            trajectory: traj,
            initial_error,
            certificate: Some(cert),
            converged,
            certified,
            exit_code,
            status,
        })
    }

    pub fn run(&self) -> Result<RunResult> {
        let ctx = self.context()?;
        self.run_with(&ctx, self.scenario.signal.seed)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub status: String,
    pub exit_code: i32,
    pub converged: bool,
    pub certified: bool,
    pub verdict: String,
    pub diverged: bool,
    pub divergence_reason: Option<String>,
    pub initial_error: f64,
    pub final_error: f64,
    pub max_error: f64,
    pub samples: usize,
    pub switches: usize,
    pub intervals: usize,
    pub horizon: f64,
    pub dt: f64,
    pub mu: f64,
    pub ell: f64,
    pub g: f64,
    pub k: Vec<f64>,
    pub riccati_residual: f64,
    pub tau: f64,
    pub n0: usize,
    #[serde(rename = "T0")]
    pub t0: f64,
}

pub fn summarize(prep: &Prepared, res: &RunResult) -> Summary {
    let traj = &res.trajectory;
    Summary {
        scenario: prep.scenario.name.clone(),
        status: res.status.to_string(),
        exit_code: res.exit_code,
        converged: res.converged,
        certified: res.certified,
        verdict: res
            .certificate
            .as_ref()
            .map_or_else(|| "not evaluated: zero horizon".to_string(), |c| c.verdict.clone()),
        diverged: traj.diverged,
        divergence_reason: traj.divergence_reason.clone(),
        initial_error: res.initial_error,
        final_error: traj.final_error().unwrap_or(res.initial_error),
        max_error: traj.max_error().unwrap_or(res.initial_error),
        samples: traj.samples.len(),
        switches: traj.switches.len(),
        intervals: res.signal.len(),
        horizon: prep.cfg.horizon,
        dt: prep.cfg.dt,
        mu: prep.ts.mu(),
        ell: prep.ell,
        g: prep.gain.g,
        k: prep.gain.k.clone(),
        riccati_residual: prep.sol.residual_norm,
        tau: prep.adt.tau,
        n0: prep.adt.n0,
        t0: prep.adt.t0,
    }
}

/// `t,topo,y_1..y_N,err,w_1_1..w_N_d`.
pub fn write_trajectory_csv<W: std::io::Write>(traj: &Trajectory, ts: &TopologySet, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "topo".to_string()];
    header.extend((1..=traj.agents).map(|k| format!("y_{k}")));
    header.push("err".into());
    for k in 1..=traj.agents {
        header.extend((1..=traj.dim).map(|m| format!("w_{k}_{m}")));
    }
    wtr.write_record(&header)?;
    for s in &traj.samples {
        let mut row = vec![format!("{:.9}", s.t), ts.topology(s.topology).label().to_string()];
        row.extend(s.y.iter().map(|v| format!("{v:.15e}")));
        row.push(format!("{:.15e}", s.error));
        row.extend(s.w.iter().map(|v| format!("{v:.15e}")));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_switches_csv<W: std::io::Write>(traj: &Trajectory, ts: &TopologySet, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["t", "from", "to", "from_segment", "to_segment"])?;
    for ev in &traj.switches {
        wtr.write_record([
            format!("{:.9}", ev.t),
            ts.topology(ev.from).label().to_string(),
            ts.topology(ev.to).label().to_string(),
            ev.from_segment.to_string(),
            ev.to_segment.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Output directory: explicit override, then the scenario's own, then
/// `$DWELL_CONSENSUS_OUT/<name>`, then `out/<name>`.
pub fn resolve_out_dir(sc: &Scenario, base: &Path, over: Option<&Path>) -> PathBuf {
    if let Some(p) = over {
        return p.to_path_buf();
    }
    if let Some(p) = &sc.output.dir {
        return if p.is_absolute() { p.clone() } else { base.join(p) };
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) => PathBuf::from(root).join(&sc.name),
        None => PathBuf::from("out").join(&sc.name),
    }
}

/// Writes every run artifact into `dir`.
pub fn write_artifacts(dir: &Path, prep: &Prepared, res: &RunResult) -> Result<Summary> {
    fs::create_dir_all(dir)?;
    let ts = &prep.ts;
    write_trajectory_csv(&res.trajectory, ts, fs::File::create(dir.join("trajectory.csv"))?)?;
    write_switches_csv(&res.trajectory, ts, fs::File::create(dir.join("switches.csv"))?)?;
    match &res.certificate {
        Some(cert) => {
            fs::write(dir.join("certificate.json"), serde_json::to_string_pretty(cert)? + "\n")?;
            write_trace_csv(cert, ts, fs::File::create(dir.join("lyapunov.csv"))?)?;
        }
        None => {
            let ctx = prep.context()?;
            let stub = serde_json::json!({
                "verdict": "not evaluated: zero horizon",
                "certified": false,
                "constants": ctx.constants(),
            });
            fs::write(
                dir.join("certificate.json"),
                serde_json::to_string_pretty(&stub)? + "\n",
            )?;
            fs::write(dir.join("lyapunov.csv"), "t,V,W,sigma_clock,active_topo,phase\n")?;
        }
    }
    let summary = summarize(prep, res);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
agents = 3
dim = 2

[[topology]]
label = "path"
edges = [[1, 2, 1.0], [2, 3, 1.0]]
undirected = true

[[topology]]
label = "pair"
edges = [[1, 2, 1.0]]
undirected = true

[dynamics]
name = "bounded_sine"

[gain]
g = 20.0

[signal]
tau = 7.0
n0 = 1
T0 = 0.5
intervals = [
  { topology = "path", duration = 7.0 },
  { topology = "pair", duration = 0.3 },
  { topology = "path", duration = 7.0 },
]

[simulation]
horizon = 14.3

[initial]
state = [1.0, 0.0, -0.5, 0.5, 0.2, -1.0]
"#;

    #[test]
    fn parses_and_runs() {
        let sc = Scenario::from_toml(BASE, "base").unwrap();
        let prep = prepare(&sc).unwrap();
        let res = prep.run().unwrap();
        assert_eq!(res.exit_code, EXIT_OK, "{:?}", res.certificate.map(|c| c.verdict));
        assert!(res.trajectory.final_error().unwrap() < 1e-6);
    }

    #[test]
    fn parse_errors_mention_location() {
        let err = Scenario::from_toml("name = \"x\"\nagents = \"three\"\n", "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml"));
        assert!(msg.contains("line 2"), "{msg}");
        let err = Scenario::from_toml(&BASE.replace("horizon = 14.3", "horizon = 14.3\nhorizn = 1"), "f").unwrap_err();
        assert!(err.to_string().contains("horizn"));
    }

    #[test]
    fn validation_lists_every_violation() {
        let text = BASE
            .replace("duration = 0.3", "duration = 0.9")
            .replace("[1, 2, 1.0], [2, 3, 1.0]", "[1, 2, 1.0], [2, 4, 1.0]")
            .replace("g = 20.0", "g = 0.5");
        let sc = Scenario::from_toml(&text, "v").unwrap();
        let Err(Error::Validation(errs)) = prepare(&sc) else {
            panic!("expected validation failure")
        };
        assert!(errs.iter().any(|e| e.contains("outside 1..=3")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("gain.g")), "{errs:?}");

        let sc = Scenario::from_toml(&BASE.replace("duration = 0.3", "duration = 0.9"), "v").unwrap();
        let Err(Error::Validation(errs)) = prepare(&sc) else {
            panic!("expected validation failure")
        };
        assert!(errs.iter().any(|e| e.contains("T0")), "{errs:?}");
    }

    #[test]
    fn zero_horizon() {
        let sc = Scenario::from_toml(&BASE.replace("horizon = 14.3", "horizon = 0.0"), "z").unwrap();
        let prep = prepare(&sc).unwrap();
        let res = prep.run().unwrap();
        assert_eq!(res.exit_code, EXIT_OK);
        assert!(res.trajectory.samples.is_empty());
        let summary = summarize(&prep, &res);
        assert_eq!(summary.final_error, 1.5);
    }

    #[test]
    fn periodic_signal_cycles_classes() {
        let text = BASE.replace(
            "intervals = [\n  { topology = \"path\", duration = 7.0 },\n  { topology = \"pair\", duration = 0.3 },\n  { topology = \"path\", duration = 7.0 },\n]",
            "periodic = { connected = 0.0, disconnected = 0.5 }",
        );
        let sc = Scenario::from_toml(&text.replace("tau = 7.0", "tau = 0.0"), "p").unwrap();
        let prep = prepare(&sc).unwrap();
        let sig = prep.signal(0).unwrap();
        assert_eq!(sig.len(), 2 * 29);
        assert!(sig.connected_durations().iter().all(|d| *d == 0.0));
    }

    #[test]
    fn seeded_initial_state_is_deterministic() {
        let text = BASE.replace("state = [1.0, 0.0, -0.5, 0.5, 0.2, -1.0]", "seed = 3\nspread = 2.0");
        let sc = Scenario::from_toml(&text, "s").unwrap();
        let a = initial_state(&sc, 5);
        assert_eq!(a, initial_state(&sc, 5));
        assert_ne!(a, initial_state(&sc, 6));
        assert!(a.iter().all(|v| v.abs() <= 2.0));
    }
}
