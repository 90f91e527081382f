//! Weighted directed communication topologies, their Laplacians and the
//! spectral / graph-theoretic connectivity classification.

use std::collections::VecDeque;

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{sort_eigenvalues, RealSchur};

/// Relative zero-eigenvalue tolerance, multiplied by `‖L‖₁`.
pub const ZERO_TOL_REL: f64 = 1e-9;

/// A weighted directed graph on `node_count` nodes. Entry `(k, j)` of the
/// weight matrix is the weight of the information flow `j → k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    label: String,
    weights: DMatrix<f64>,
}

impl Topology {
    pub fn new(label: impl Into<String>, weights: DMatrix<f64>) -> Result<Self> {
        let label = label.into();
        check_weights(&label, &weights)?;
        Ok(Topology { label, weights })
    }

    /// Builds a topology from 0-based `(k, j, weight)` edges, meaning flow
    /// `j → k`. Repeated edges accumulate.
    pub fn from_edges(label: impl Into<String>, node_count: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let label = label.into();
        let mut weights = DMatrix::zeros(node_count, node_count);
        for &(k, j, w) in edges {
            if k >= node_count || j >= node_count {
                return Err(Error::InvalidTopology {
                    label,
                    reason: format!("edge ({k}, {j}) outside 0..{node_count}"),
                });
            }
            weights[(k, j)] += w;
        }
        Topology::new(label, weights)
    }

    /// Graph with no edges.
    pub fn empty(label: impl Into<String>, node_count: usize) -> Self {
        Topology {
            label: label.into(),
            weights: DMatrix::zeros(node_count, node_count),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn node_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Weight of the flow `j → k`.
    pub fn weight(&self, k: usize, j: usize) -> f64 {
        self.weights[(k, j)]
    }

    /// Same graph with nodes relabelled: node `k` becomes `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        if perm.len() != n {
            return Err(Error::Dimension(format!(
                "permutation of length {} for {n} nodes",
                perm.len()
            )));
        }
        let mut w = DMatrix::zeros(n, n);
        for k in 0..n {
            for j in 0..n {
                w[(perm[k], perm[j])] = self.weights[(k, j)];
            }
        }
        Topology::new(self.label.clone(), w)
    }
}

fn check_weights(label: &str, w: &DMatrix<f64>) -> Result<()> {
    let bad = |reason: String| Error::InvalidTopology {
        label: label.to_string(),
        reason,
    };
    if w.nrows() == 0 || w.nrows() != w.ncols() {
        return Err(bad(format!(
            "weight matrix must be square and non-empty, got {:?}",
            w.shape()
        )));
    }
    for k in 0..w.nrows() {
        if w[(k, k)] != 0.0 {
            return Err(bad(format!("self-loop at node {k}")));
        }
        for j in 0..w.ncols() {
            let v = w[(k, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(bad(format!("weight ({k}, {j}) = {v} must be finite and non-negative")));
            }
        }
    }
    Ok(())
}

/// Graph Laplacian: `ℓ_kj = −a_kj` off the diagonal, `ℓ_kk = Σ_m a_km`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian(DMatrix<f64>);

impl Laplacian {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    /// Induced 1-norm (max absolute column sum).
    pub fn norm1(&self) -> f64 {
        self.0
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Default zero tolerance `1e-9 · ‖L‖₁` (any positive value for `L = 0`).
    pub fn default_zero_tol(&self) -> f64 {
        (ZERO_TOL_REL * self.norm1()).max(f64::MIN_POSITIVE)
    }

    /// Checks zero row sums and the Metzler sign pattern.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.size();
        let max_w = self.0.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let tol = 1e-12 * n as f64 * max_w.max(1.0);
        for k in 0..n {
            let row_sum: f64 = self.0.row(k).iter().sum();
            if row_sum.abs() > tol {
                return Err(Error::Analysis(format!("row {k} sums to {row_sum:e}")));
            }
            for j in 0..n {
                let v = self.0[(k, j)];
                if (k == j && v < 0.0) || (k != j && v > 0.0) {
                    return Err(Error::Analysis(format!(
                        "entry ({k}, {j}) = {v} breaks the sign pattern"
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn build_laplacian(topo: &Topology) -> Result<Laplacian> {
    check_weights(topo.label(), topo.weights())?;
    let w = topo.weights();
    let n = w.nrows();
    let mut l = -w.clone();
    for k in 0..n {
        l[(k, k)] = w.row(k).iter().sum();
    }
    Ok(Laplacian(l))
}

/// Spectral summary of a Laplacian.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralInfo {
    /// Sorted by real part, ties by imaginary part.
    #[serde(serialize_with = "serialize_complex")]
    pub eigenvalues: Vec<Complex<f64>>,
    pub zero_multiplicity: usize,
    pub is_connected: bool,
    /// `+∞` when every eigenvalue is zero.
    pub min_nonzero_real: f64,
    pub zero_tol: f64,
}

fn serialize_complex<S: serde::Serializer>(values: &[Complex<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(values.len()))?;
    for v in values {
        seq.serialize_element(&[v.re, v.im])?;
    }
    seq.end()
}

impl SpectralInfo {
    pub fn is_zero(&self, value: Complex<f64>) -> bool {
        value.norm() < self.zero_tol
    }
}

pub fn spectral_analysis(lap: &Laplacian, zero_tol: f64) -> Result<SpectralInfo> {
    if zero_tol.is_nan() || zero_tol <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "zero_tol",
            reason: format!("must be positive, got {zero_tol}"),
        });
    }
    let schur = RealSchur::new(lap.matrix())?;
    let mut eigenvalues = schur.eigenvalues();
    // Stable sort keeps input order among exact ties.
    sort_eigenvalues(&mut eigenvalues);
    let zero_multiplicity = eigenvalues.iter().filter(|v| v.norm() < zero_tol).count();
    let min_nonzero_real = eigenvalues
        .iter()
        .filter(|v| v.norm() >= zero_tol)
        .map(|v| v.re)
        .fold(f64::INFINITY, f64::min);
    Ok(SpectralInfo {
        eigenvalues,
        zero_multiplicity,
        is_connected: zero_multiplicity == 1,
        min_nonzero_real,
        zero_tol,
    })
}

/// True iff some node reaches every other node along the direction of
/// information flow (edge `j → k` whenever `a_kj > 0`).
pub fn check_connected_reachability(topo: &Topology) -> bool {
    let n = topo.node_count();
    let w = topo.weights();
    (0..n).any(|root| {
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut count = 1;
        let mut queue = VecDeque::from([root]);
        while let Some(j) = queue.pop_front() {
            for k in 0..n {
                if !seen[k] && w[(k, j)] > 0.0 {
                    seen[k] = true;
                    count += 1;
                    queue.push_back(k);
                }
            }
        }
        count == n
    })
}

/// Cached per-topology analysis.
#[derive(Debug, Clone)]
pub struct TopologyInfo {
    pub laplacian: Laplacian,
    pub spectral: SpectralInfo,
    pub reachable: bool,
}

/// Ordered family of topologies on a common node set, partitioned into
/// connected and disconnected ones.
#[derive(Debug, Clone)]
pub struct TopologySet {
    topologies: Vec<Topology>,
    info: Vec<TopologyInfo>,
    connected: Vec<usize>,
    disconnected: Vec<usize>,
    mu: f64,
}

impl TopologySet {
    /// Analyses every topology. The partition follows reachability; `mu`
    /// defaults to the smallest nonzero real part over the set (1.0 when
    /// there is none).
    pub fn new(topologies: Vec<Topology>, mu: Option<f64>) -> Result<Self> {
        let first = topologies.first().ok_or_else(|| Error::InvalidParameter {
            name: "topologies",
            reason: "set is empty".into(),
        })?;
        let n = first.node_count();
        let mut info = Vec::with_capacity(topologies.len());
        for t in &topologies {
            if t.node_count() != n {
                return Err(Error::InvalidTopology {
                    label: t.label().to_string(),
                    reason: format!("has {} nodes, expected {n}", t.node_count()),
                });
            }
            if topologies.iter().filter(|o| o.label() == t.label()).count() > 1 {
                return Err(Error::InvalidTopology {
                    label: t.label().to_string(),
                    reason: "duplicate label".into(),
                });
            }
            let laplacian = build_laplacian(t)?;
            let spectral = spectral_analysis(&laplacian, laplacian.default_zero_tol())?;
            info.push(TopologyInfo {
                laplacian,
                spectral,
                reachable: check_connected_reachability(t),
            });
        }
        let (connected, disconnected): (Vec<usize>, Vec<usize>) =
            (0..topologies.len()).partition(|&i| info[i].reachable);
        let floor = info
            .iter()
            .map(|i| i.spectral.min_nonzero_real)
            .fold(f64::INFINITY, f64::min);
        let mu = match mu {
            Some(m) if m > 0.0 && m.is_finite() => m,
            Some(m) => {
                return Err(Error::InvalidParameter {
                    name: "mu",
                    reason: format!("must be positive and finite, got {m}"),
                })
            }
            None if floor.is_finite() => floor,
            None => 1.0,
        };
        Ok(TopologySet {
            topologies,
            info,
            connected,
            disconnected,
            mu,
        })
    }

    pub fn len(&self) -> usize {
        self.topologies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topologies.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.topologies[0].node_count()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "mu",
                reason: format!("must be positive and finite, got {mu}"),
            });
        }
        self.mu = mu;
        Ok(self)
    }

    pub fn topology(&self, i: usize) -> &Topology {
        &self.topologies[i]
    }

    pub fn topologies(&self) -> &[Topology] {
        &self.topologies
    }

    pub fn info(&self, i: usize) -> &TopologyInfo {
        &self.info[i]
    }

    pub fn laplacian(&self, i: usize) -> &Laplacian {
        &self.info[i].laplacian
    }

    pub fn is_connected(&self, i: usize) -> bool {
        self.info[i].reachable
    }

    pub fn connected_indices(&self) -> &[usize] {
        &self.connected
    }

    pub fn disconnected_indices(&self) -> &[usize] {
        &self.disconnected
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.topologies.iter().position(|t| t.label() == label)
    }

    /// Smallest nonzero real part over all topologies (`+∞` if none).
    pub fn min_nonzero_real(&self) -> f64 {
        self.info
            .iter()
            .map(|i| i.spectral.min_nonzero_real)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TopologyEntry {
    pub label: String,
    pub spectral_connected: bool,
    pub reachability_connected: bool,
    pub zero_multiplicity: usize,
    /// `None` stands for `+∞` (no nonzero eigenvalue).
    pub min_nonzero_real: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopologySetReport {
    pub entries: Vec<TopologyEntry>,
    pub mu: f64,
    pub min_nonzero_real: Option<f64>,
    pub mu_ok: bool,
    pub has_connected: bool,
    pub has_disconnected: bool,
    pub valid: bool,
}

/// Classifies every topology with both oracles and checks `μ` against the
/// spectra. Oracle disagreement is an error; a too-large `μ` yields an
/// invalid report.
pub fn validate_topology_set(ts: &TopologySet) -> Result<TopologySetReport> {
    let mut entries = Vec::with_capacity(ts.len());
    for (i, t) in ts.topologies().iter().enumerate() {
        let info = ts.info(i);
        if info.spectral.is_connected != info.reachable {
            return Err(Error::ConnectivityMismatch {
                label: t.label().to_string(),
                spectral: info.spectral.is_connected,
                reachability: info.reachable,
            });
        }
        entries.push(TopologyEntry {
            label: t.label().to_string(),
            spectral_connected: info.spectral.is_connected,
            reachability_connected: info.reachable,
            zero_multiplicity: info.spectral.zero_multiplicity,
            min_nonzero_real: finite(info.spectral.min_nonzero_real),
        });
    }
    let floor = ts.min_nonzero_real();
    let mu_ok = ts.mu() <= floor;
    Ok(TopologySetReport {
        entries,
        mu: ts.mu(),
        min_nonzero_real: finite(floor),
        mu_ok,
        has_connected: !ts.connected_indices().is_empty(),
        has_disconnected: !ts.disconnected_indices().is_empty(),
        valid: mu_ok,
    })
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(n: usize) -> Topology {
        let mut edges = Vec::new();
        for k in 0..n {
            for j in 0..n {
                if k != j {
                    edges.push((k, j, 1.0));
                }
            }
        }
        Topology::from_edges("complete", n, &edges).unwrap()
    }

    fn cycle3() -> Topology {
        // 1→2→3→1: a_21 = a_32 = a_13 = 1.
        Topology::from_edges("cycle", 3, &[(1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn laplacian_of_empty_graph_is_zero() {
        let l = build_laplacian(&Topology::empty("e", 3)).unwrap();
        assert_eq!(l.matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn laplacian_of_complete_graph() {
        let l = build_laplacian(&complete(3)).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
        assert_eq!(l.matrix(), &expect);
    }

    #[test]
    fn laplacian_of_directed_cycle() {
        let l = build_laplacian(&cycle3()).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, -1.0, 1.0, 0.0, 0.0, -1.0, 1.0]);
        assert_eq!(l.matrix(), &expect);
        l.check_invariants().unwrap();
    }

    #[test]
    fn rejects_bad_weights() {
        let mut w = DMatrix::zeros(2, 2);
        w[(0, 1)] = -1.0;
        assert!(Topology::new("neg", w).is_err());
        let mut w = DMatrix::zeros(2, 2);
        w[(1, 1)] = 1.0;
        assert!(Topology::new("loop", w).is_err());
    }

    #[test]
    fn spectrum_of_zero_laplacian() {
        let l = build_laplacian(&Topology::empty("e", 3)).unwrap();
        let s = spectral_analysis(&l, l.default_zero_tol()).unwrap();
        assert_eq!(s.zero_multiplicity, 3);
        assert!(!s.is_connected);
        assert!(s.min_nonzero_real.is_infinite());
        assert!(s.eigenvalues.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn spectrum_of_complete_graph() {
        let l = build_laplacian(&complete(3)).unwrap();
        let s = spectral_analysis(&l, l.default_zero_tol()).unwrap();
        assert_eq!(s.zero_multiplicity, 1);
        assert!(s.is_connected);
        assert!((s.min_nonzero_real - 3.0).abs() < 1e-12);
        let expect = [0.0, 3.0, 3.0];
        for (v, e) in s.eigenvalues.iter().zip(expect) {
            assert!((v.re - e).abs() < 1e-12 && v.im.abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn spectrum_of_directed_cycle() {
        // Characteristic polynomial λ(λ² − 3λ + 3).
        let l = build_laplacian(&cycle3()).unwrap();
        let s = spectral_analysis(&l, l.default_zero_tol()).unwrap();
        assert_eq!(s.zero_multiplicity, 1);
        assert!((s.min_nonzero_real - 1.5).abs() < 1e-12);
        let half = 3f64.sqrt() / 2.0;
        assert!(s.eigenvalues[0].norm() < 1e-12);
        assert!((s.eigenvalues[1] - Complex::new(1.5, -half)).norm() < 1e-12);
        assert!((s.eigenvalues[2] - Complex::new(1.5, half)).norm() < 1e-12);
    }

    #[test]
    fn reachability_examples() {
        assert!(check_connected_reachability(&Topology::empty("one", 1)));
        assert!(!check_connected_reachability(&Topology::empty("two", 2)));
        let chain = Topology::from_edges("chain", 3, &[(1, 0, 1.0), (2, 1, 1.0)]).unwrap();
        assert!(check_connected_reachability(&chain));
        // Reversed orientation: node 3 is the root.
        let rev = Topology::from_edges("rev", 3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(check_connected_reachability(&rev));
        let split = Topology::from_edges("split", 3, &[(1, 0, 1.0), (1, 2, 1.0)]).unwrap();
        assert!(!check_connected_reachability(&split));
    }

    #[test]
    fn validate_mu_against_spectra() {
        let ts = TopologySet::new(vec![complete(3)], Some(2.0)).unwrap();
        assert!(validate_topology_set(&ts).unwrap().valid);
        let ts = TopologySet::new(vec![complete(3)], Some(3.5)).unwrap();
        assert!(!validate_topology_set(&ts).unwrap().valid);
        let ts = TopologySet::new(vec![Topology::empty("e", 3)], Some(1.0)).unwrap();
        let report = validate_topology_set(&ts).unwrap();
        assert!(report.valid);
        assert_eq!(report.min_nonzero_real, None);
    }

    #[test]
    fn derived_mu_is_spectral_floor() {
        let ts = TopologySet::new(vec![complete(3), cycle3()], None).unwrap();
        assert!((ts.mu() - 1.5).abs() < 1e-12);
        assert_eq!(ts.connected_indices(), &[0, 1]);
    }

    #[test]
    fn mismatched_node_counts_rejected() {
        let err = TopologySet::new(vec![complete(3), complete(4)], None).unwrap_err();
        assert!(matches!(err, Error::InvalidTopology { .. }));
    }
}
