//! Per-topology change of coordinates that splits the disagreement dynamics
//! into a zero-spectrum block and a positive-spectrum block.
//!
//! With `M = L[1:,1:] − 1·L[0,1:]` and `J` such that `J⁻¹ M J =
//! blkdiag(L_nc, L_c)`, the transform is `T = [[1, 0], [1, J]]`,
//! `Υ = [1, J]` and `Υ⁻¹ = [−J⁻¹1, J⁻¹]`. `J` comes from an ordered real
//! Schur form followed by a Sylvester decoupling step; complex pairs in
//! `L_c` are balanced to `[[α, β], [−β, α]]`.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Laplacian, SpectralInfo};
use crate::linalg::{self, RealSchur};

#[derive(Debug, Clone)]
pub struct TopologyTransform {
    label: String,
    n: usize,
    rho: usize,
    j: DMatrix<f64>,
    j_inv: DMatrix<f64>,
    l_tilde: DMatrix<f64>,
}

/// Invariant residuals measured while building a transform.
#[derive(Debug, Clone, Serialize)]
pub struct TransformDiagnostics {
    pub inverse_residual: f64,
    pub first_column_residual: f64,
    pub block_coupling: f64,
    pub eigenvalue_distance: f64,
}

/// `(z₁, ζ)` with `ζ = (I ⊗ D_g⁻¹)(Υ⁻¹ ⊗ I_d) w`, agent-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedState {
    pub z1: Vec<f64>,
    pub zeta: Vec<f64>,
}

fn rotation_balance(block: &DMatrix<f64>) -> DMatrix<f64> {
    let (a, b, c, d) = (block[(0, 0)], block[(0, 1)], block[(1, 0)], block[(1, 1)]);
    let theta = 0.5 * (-(a - d)).atan2(b + c);
    let (s, co) = theta.sin_cos();
    let r = DMatrix::from_row_slice(2, 2, &[co, -s, s, co]);
    let eq = r.transpose() * block * &r;
    let (b2, c2) = (eq[(0, 1)], eq[(1, 0)]);
    if b2 * c2 >= 0.0 || b2 == 0.0 {
        return r;
    }
    let scale = (-c2 / b2).sqrt();
    r * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, scale]))
}

pub fn build_transform(
    label: &str,
    lap: &Laplacian,
    spec: &SpectralInfo,
) -> Result<(TopologyTransform, TransformDiagnostics)> {
    let l = lap.matrix();
    let n = lap.size();
    if n == 0 {
        return Err(Error::Dimension("transform of an empty graph".into()));
    }
    let r = n - 1;
    let rho = spec.zero_multiplicity.max(1);
    let mut m = DMatrix::zeros(r, r);
    for i in 0..r {
        for k in 0..r {
            m[(i, k)] = l[(i + 1, k + 1)] - l[(0, k + 1)];
        }
    }

    let mut schur = RealSchur::new(&m)?;
    let tol = spec.zero_tol;
    let p = schur.reorder(|v: Complex<f64>| v.norm() < tol)?;
    if p != rho - 1 {
        return Err(Error::Analysis(format!(
            "topology `{label}`: reduced matrix has {p} near-zero eigenvalues, expected {}",
            rho - 1
        )));
    }

    // Decouple the leading zero block from the rest.
    let t = &schur.t;
    let mut j = schur.q.clone();
    if p > 0 && p < r {
        let t11 = t.view((0, 0), (p, p)).into_owned();
        let t12 = t.view((0, p), (p, r - p)).into_owned();
        let t22 = t.view((p, p), (r - p, r - p)).into_owned();
        let x = linalg::solve_sylvester(&t11, &t22, &(-t12))?;
        let mut e = DMatrix::identity(r, r);
        e.view_mut((0, p), (p, r - p)).copy_from(&x);
        j = &j * e;
    }

    // Balance complex pairs of the positive block.
    let mut offset = 0;
    let mut balance = DMatrix::identity(r, r);
    for &size in &schur.blocks {
        if size == 2 && offset >= p {
            let block = t.view((offset, offset), (2, 2)).into_owned();
            balance
                .view_mut((offset, offset), (2, 2))
                .copy_from(&rotation_balance(&block));
        }
        offset += size;
    }
    j = &j * balance;

    let j_inv = linalg::inverse(&j, "transform J")?;
    let mut l22 = &j_inv * &m * &j;
    let l22_norm = l22.norm().max(f64::MIN_POSITIVE);
    let mut coupling: f64 = 0.0;
    for i in 0..r {
        for k in 0..r {
            if (i < p) != (k < p) {
                coupling = coupling.max(l22[(i, k)].abs());
                l22[(i, k)] = 0.0;
            }
        }
    }
    let coupling = coupling / l22_norm;
    if coupling > 1e-8 {
        return Err(Error::Analysis(format!(
            "topology `{label}`: block decoupling left relative coupling {coupling:e}"
        )));
    }

    let l12 = l.view((0, 1), (1, r)).into_owned() * &j;
    let mut l_tilde = DMatrix::zeros(n, n);
    l_tilde.view_mut((0, 1), (1, r)).copy_from(&l12);
    l_tilde.view_mut((1, 1), (r, r)).copy_from(&l22);

    let tr = TopologyTransform {
        label: label.to_string(),
        n,
        rho,
        j,
        j_inv,
        l_tilde,
    };
    let diag = tr.verify(lap, spec)?;
    Ok((
        tr,
        TransformDiagnostics {
            block_coupling: coupling,
            ..diag
        },
    ))
}

impl TopologyTransform {
    fn verify(&self, lap: &Laplacian, spec: &SpectralInfo) -> Result<TransformDiagnostics> {
        let n = self.n;
        let t = self.t();
        let t_inv = self.t_inv();
        let cond = linalg::condition_number(&self.j).max(1.0);
        let inverse_residual = (&t * &t_inv - DMatrix::<f64>::identity(n, n)).amax();
        if inverse_residual > 1e-10 * cond {
            return Err(Error::Analysis(format!(
                "topology `{}`: T T⁻¹ deviates from I by {inverse_residual:e}",
                self.label
            )));
        }
        let similar = &t_inv * lap.matrix() * &t;
        let scale = 1.0 + lap.matrix().norm() * cond;
        let first_column_residual = (1..n).map(|i| similar[(i, 0)].abs()).fold(0.0, f64::max);
        if first_column_residual > 1e-8 * scale {
            return Err(Error::Analysis(format!(
                "topology `{}`: transformed Laplacian first column residual {first_column_residual:e}",
                self.label
            )));
        }
        let mut reduced = RealSchur::new(&self.l22())?.eigenvalues();
        reduced.push(Complex::new(0.0, 0.0));
        let eigenvalue_distance = linalg::multiset_distance(&reduced, &spec.eigenvalues);
        if eigenvalue_distance > 1e-6 * (1.0 + lap.matrix().norm()) {
            return Err(Error::Analysis(format!(
                "topology `{}`: spectrum of L_22 differs from the Laplacian by {eigenvalue_distance:e}",
                self.label
            )));
        }
        Ok(TransformDiagnostics {
            inverse_residual,
            first_column_residual,
            block_coupling: 0.0,
            eigenvalue_distance,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Number of zero Laplacian eigenvalues `ρ`.
    pub fn rho(&self) -> usize {
        self.rho
    }

    /// Dimension of `L_nc`, i.e. `ρ − 1`.
    pub fn nc_dim(&self) -> usize {
        self.rho - 1
    }

    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn j_inv(&self) -> &DMatrix<f64> {
        &self.j_inv
    }

    pub fn t(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut t = DMatrix::zeros(n, n);
        t[(0, 0)] = 1.0;
        for i in 1..n {
            t[(i, 0)] = 1.0;
        }
        t.view_mut((1, 1), (n - 1, n - 1)).copy_from(&self.j);
        t
    }

    pub fn t_inv(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut t = DMatrix::zeros(n, n);
        t[(0, 0)] = 1.0;
        t.view_mut((1, 0), (n - 1, 1)).copy_from(&self.neg_jinv_ones());
        t.view_mut((1, 1), (n - 1, n - 1)).copy_from(&self.j_inv);
        t
    }

    fn neg_jinv_ones(&self) -> DMatrix<f64> {
        let r = self.n - 1;
        let ones = DMatrix::from_element(r, 1, 1.0);
        -(&self.j_inv * ones)
    }

    /// `Υ = [1, J]`, `(N−1)×N`.
    pub fn upsilon(&self) -> DMatrix<f64> {
        let r = self.n - 1;
        let mut u = DMatrix::zeros(r, self.n);
        u.view_mut((0, 0), (r, 1)).fill(1.0);
        u.view_mut((0, 1), (r, r)).copy_from(&self.j);
        u
    }

    /// `Υ⁻¹ = [−J⁻¹1, J⁻¹]`, `(N−1)×N`.
    pub fn upsilon_inv(&self) -> DMatrix<f64> {
        let r = self.n - 1;
        let mut u = DMatrix::zeros(r, self.n);
        u.view_mut((0, 0), (r, 1)).copy_from(&self.neg_jinv_ones());
        u.view_mut((0, 1), (r, r)).copy_from(&self.j_inv);
        u
    }

    pub fn l_tilde(&self) -> &DMatrix<f64> {
        &self.l_tilde
    }

    pub fn l12(&self) -> DMatrix<f64> {
        self.l_tilde.view((0, 1), (1, self.n - 1)).into_owned()
    }

    pub fn l22(&self) -> DMatrix<f64> {
        self.l_tilde.view((1, 1), (self.n - 1, self.n - 1)).into_owned()
    }

    pub fn l_nc(&self) -> DMatrix<f64> {
        let p = self.nc_dim();
        self.l_tilde.view((1, 1), (p, p)).into_owned()
    }

    pub fn l_c(&self) -> DMatrix<f64> {
        let p = self.nc_dim();
        let c = self.n - 1 - p;
        self.l_tilde.view((1 + p, 1 + p), (c, c)).into_owned()
    }

    /// `H = I ⊗ S − L_22 ⊗ K0 C`.
    pub fn h(&self, k0: &[f64]) -> DMatrix<f64> {
        h_matrix(&self.l22(), k0)
    }

    pub fn h_nc(&self, k0: &[f64]) -> DMatrix<f64> {
        h_matrix(&self.l_nc(), k0)
    }

    pub fn h_c(&self, k0: &[f64]) -> DMatrix<f64> {
        h_matrix(&self.l_c(), k0)
    }
}

/// Transforms of every topology in a set, in set order.
#[derive(Debug, Clone)]
pub struct TransformSet {
    transforms: Vec<TopologyTransform>,
    diagnostics: Vec<TransformDiagnostics>,
}

impl TransformSet {
    pub fn build(ts: &crate::graph::TopologySet) -> Result<Self> {
        let mut transforms = Vec::with_capacity(ts.len());
        let mut diagnostics = Vec::with_capacity(ts.len());
        for i in 0..ts.len() {
            let info = ts.info(i);
            let (tr, diag) = build_transform(ts.topology(i).label(), &info.laplacian, &info.spectral)?;
            transforms.push(tr);
            diagnostics.push(diag);
        }
        Ok(TransformSet {
            transforms,
            diagnostics,
        })
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn get(&self, i: usize) -> &TopologyTransform {
        &self.transforms[i]
    }

    pub fn transforms(&self) -> &[TopologyTransform] {
        &self.transforms
    }

    pub fn diagnostics(&self) -> &[TransformDiagnostics] {
        &self.diagnostics
    }
}

/// `I ⊗ S − A ⊗ K0 C` for a square block `A`.
pub fn h_matrix(a: &DMatrix<f64>, k0: &[f64]) -> DMatrix<f64> {
    let d = k0.len();
    let s = crate::agent::shift_matrix(d);
    let mut k0c = DMatrix::zeros(d, d);
    for (m, &k) in k0.iter().enumerate() {
        k0c[(m, 0)] = k;
    }
    let r = a.nrows();
    linalg::kron(&DMatrix::identity(r, r), &s) - linalg::kron(a, &k0c)
}

/// `(z₁, ζ)` from the flat agent-major state `w` (length `N d`).
pub fn to_transformed(tr: &TopologyTransform, dg: &[f64], w: &[f64]) -> Result<TransformedState> {
    let d = dg.len();
    let n = tr.node_count();
    if w.len() != n * d {
        return Err(Error::Dimension(format!(
            "state of length {} for {n} agents of dimension {d}",
            w.len()
        )));
    }
    let z1 = w[..d].to_vec();
    let r = n - 1;
    let mut zeta = vec![0.0; r * d];
    for a in 0..r {
        for b in 0..r {
            let c = tr.j_inv[(a, b)];
            if c == 0.0 {
                continue;
            }
            for m in 0..d {
                zeta[a * d + m] += c * (w[(b + 1) * d + m] - w[m]);
            }
        }
    }
    for a in 0..r {
        for m in 0..d {
            zeta[a * d + m] /= dg[m];
        }
    }
    Ok(TransformedState { z1, zeta })
}

pub fn from_transformed(tr: &TopologyTransform, dg: &[f64], state: &TransformedState) -> Result<Vec<f64>> {
    let d = dg.len();
    let n = tr.node_count();
    let r = n - 1;
    if state.z1.len() != d || state.zeta.len() != r * d {
        return Err(Error::Dimension(format!(
            "transformed state ({}, {}) for {n} agents of dimension {d}",
            state.z1.len(),
            state.zeta.len()
        )));
    }
    let mut w = vec![0.0; n * d];
    for k in 0..n {
        w[k * d..(k + 1) * d].copy_from_slice(&state.z1);
    }
    for a in 0..r {
        for b in 0..r {
            let c = tr.j[(a, b)];
            if c == 0.0 {
                continue;
            }
            for m in 0..d {
                w[(a + 1) * d + m] += c * state.zeta[b * d + m] * dg[m];
            }
        }
    }
    Ok(w)
}

/// `J_to⁻¹ J_from`, the matrix acting on agent blocks of `ζ` at a switch.
pub fn jump_matrix(from: &TopologyTransform, to: &TopologyTransform) -> DMatrix<f64> {
    &to.j_inv * &from.j
}

/// `ζ⁺ = (J_to⁻¹ J_from ⊗ I_d) ζ`.
pub fn jump_map(from: &TopologyTransform, to: &TopologyTransform, d: usize, zeta: &[f64]) -> Result<Vec<f64>> {
    let r = from.node_count() - 1;
    if to.node_count() != from.node_count() || zeta.len() != r * d {
        return Err(Error::Dimension(format!(
            "jump between {} and {} agents with ζ of length {}",
            from.node_count(),
            to.node_count(),
            zeta.len()
        )));
    }
    let a = jump_matrix(from, to);
    let mut out = vec![0.0; r * d];
    for i in 0..r {
        for k in 0..r {
            let c = a[(i, k)];
            for m in 0..d {
                out[i * d + m] += c * zeta[k * d + m];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_laplacian, spectral_analysis, Topology};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn transform(t: &Topology) -> TopologyTransform {
        let lap = build_laplacian(t).unwrap();
        let spec = spectral_analysis(&lap, lap.default_zero_tol()).unwrap();
        build_transform(t.label(), &lap, &spec).unwrap().0
    }

    fn random_topology(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Topology {
        let w = DMatrix::from_fn(n, n, |k, j| {
            if k != j && rng.random_bool(density) {
                rng.random_range(0.2..2.0)
            } else {
                0.0
            }
        });
        Topology::new("rand", w).unwrap()
    }

    #[test]
    fn two_agent_chain() {
        let t = Topology::from_edges("chain", 2, &[(1, 0, 1.0)]).unwrap();
        let tr = transform(&t);
        assert!((tr.j()[(0, 0)].abs() - 1.0).abs() < 1e-12);
        let lt = tr.l_tilde();
        assert!(lt[(0, 0)].abs() < 1e-12 && lt[(1, 0)].abs() < 1e-12);
        assert!((lt[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(lt[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn connected_has_no_nc_block() {
        let t = Topology::from_edges("ring", 3, &[(1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let tr = transform(&t);
        assert_eq!(tr.nc_dim(), 0);
        assert_eq!(tr.l_c().nrows(), 2);
        // Complex pair is balanced into rotation form.
        let lc = tr.l_c();
        assert!((lc[(0, 0)] - lc[(1, 1)]).abs() < 1e-10);
        assert!((lc[(0, 1)] + lc[(1, 0)]).abs() < 1e-10);
        assert!((lc[(0, 0)] - 1.5).abs() < 1e-10);
    }

    #[test]
    fn empty_graph_is_all_nc() {
        let tr = transform(&Topology::empty("e", 3));
        assert_eq!(tr.nc_dim(), 2);
        assert_eq!(tr.l_c().nrows(), 0);
        assert!(tr.l22().amax() < 1e-14);
    }

    #[test]
    fn random_topologies_satisfy_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(2..7);
            let density = rng.random_range(0.1..0.9);
            let t = random_topology(&mut rng, n, density);
            let lap = build_laplacian(&t).unwrap();
            let spec = spectral_analysis(&lap, lap.default_zero_tol()).unwrap();
            let (tr, diag) = build_transform("rand", &lap, &spec).unwrap();
            assert!(diag.block_coupling <= 1e-8);
            assert!(diag.eigenvalue_distance <= 1e-6 * (1.0 + lap.matrix().norm()));
            // L_nc vanishes because the zero eigenvalue is semisimple.
            assert!(tr.l_nc().amax() <= 1e-8 * (1.0 + lap.matrix().norm()));
            let prod = tr.upsilon_inv() * tr.upsilon().transpose();
            assert_eq!(prod.nrows(), n - 1);
        }
    }

    #[test]
    fn consensus_maps_to_zero_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dg = [3.0, 9.0];
        for _ in 0..100 {
            let n = rng.random_range(2..6);
            let t = random_topology(&mut rng, n, 0.5);
            let tr = transform(&t);
            let common = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let w: Vec<f64> = (0..n).flat_map(|_| common).collect();
            let s = to_transformed(&tr, &dg, &w).unwrap();
            assert!(s.zeta.iter().all(|v| v.abs() < 1e-10));
            let w: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s = to_transformed(&tr, &dg, &w).unwrap();
            let back = from_transformed(&tr, &dg, &s).unwrap();
            for (a, b) in w.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        let tr = transform(&Topology::empty("e", 3));
        let s = to_transformed(&tr, &dg, &[0.0; 6]).unwrap();
        assert!(s.z1.iter().chain(&s.zeta).all(|v| *v == 0.0));
    }

    #[test]
    fn jump_map_matches_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 2;
        let dg = [2.0, 4.0];
        for _ in 0..500 {
            let n = 3;
            let a = transform(&random_topology(&mut rng, n, 0.6));
            let b = transform(&random_topology(&mut rng, n, 0.6));
            let zeta: Vec<f64> = (0..(n - 1) * d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let z1 = vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let state = TransformedState { z1, zeta: zeta.clone() };
            let w = from_transformed(&a, &dg, &state).unwrap();
            let via_w = to_transformed(&b, &dg, &w).unwrap().zeta;
            let direct = jump_map(&a, &b, d, &zeta).unwrap();
            for (x, y) in via_w.iter().zip(&direct) {
                assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
            }
            let same = jump_map(&a, &a, d, &zeta).unwrap();
            for (x, y) in same.iter().zip(&zeta) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn h_matrix_structure() {
        let l = DMatrix::from_row_slice(1, 1, &[2.0]);
        let h = h_matrix(&l, &[1.5, 0.5]);
        let expected = DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, -1.0, 0.0]);
        assert!((h - expected).amax() < 1e-15);
    }
}
