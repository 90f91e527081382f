//! Dense linear-algebra helpers on top of nalgebra.
//!
//! nalgebra supplies the (unordered) real Schur form, LU, SVD and the
//! symmetric eigensolver. Eigenvalue reordering of the quasi-triangular
//! factor, Sylvester solves and the Kronecker helpers live here.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            out.view_mut((i * br, j * bc), (br, bc)).copy_from(&(b * aij));
        }
    }
    out
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// 2-norm condition number `σ_max / σ_min`.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if m.is_empty() {
        return Ok(m.clone());
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Analysis(format!("{what} is singular")))
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

/// Largest generalized eigenvalue of the symmetric pencil `(m, w)` with
/// `w` symmetric positive definite, i.e. `max ζᵀmζ / ζᵀwζ`.
pub fn max_generalized_eigenvalue(m: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<f64> {
    let chol = w
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Analysis("weight matrix is not positive definite".into()))?;
    let l = chol.l();
    let sym = (m + m.transpose()) * 0.5;
    let left = l
        .solve_lower_triangular(&sym)
        .ok_or_else(|| Error::Analysis("triangular solve failed".into()))?;
    let both = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::Analysis("triangular solve failed".into()))?;
    Ok(max_sym_eigenvalue(&both))
}

/// Solves `A X − X B = C` through the vectorised system
/// `(I ⊗ A − Bᵀ ⊗ I) vec X = vec C`.
pub fn solve_sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = a.nrows();
    let r = b.nrows();
    if a.ncols() != p || b.ncols() != r || c.shape() != (p, r) {
        return Err(Error::Dimension(format!(
            "sylvester: A {:?}, B {:?}, C {:?}",
            a.shape(),
            b.shape(),
            c.shape()
        )));
    }
    if p == 0 || r == 0 {
        return Ok(DMatrix::zeros(p, r));
    }
    let op = kron(&DMatrix::identity(r, r), a) - kron(&b.transpose(), &DMatrix::identity(p, p));
    let rhs = DVector::from_column_slice(c.as_slice());
    let lu = op.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSylvester("operator is singular".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSylvester("solution is not finite".into()));
    }
    let x = DMatrix::from_column_slice(p, r, x.as_slice());
    let resid = (a * &x - &x * b - c).norm();
    let scale = 1.0 + c.norm() + (a.norm() + b.norm()) * x.norm();
    if resid > 1e-8 * scale {
        return Err(Error::SingularSylvester(format!(
            "residual {resid:e} too large; spectra of the two blocks are too close"
        )));
    }
    Ok(x)
}

const SCHUR_ATTEMPTS: usize = 8;

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q()
}

/// Real Schur factorisation `M = Q T Qᵀ` with `T` quasi upper triangular.
#[derive(Debug, Clone)]
pub struct RealSchur {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
    /// Diagonal block sizes (1 or 2) from top-left to bottom-right.
    pub blocks: Vec<usize>,
}

impl RealSchur {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::Dimension(format!("schur of {:?}", m.shape())));
        }
        if n == 0 {
            return Ok(RealSchur {
                q: DMatrix::zeros(0, 0),
                t: DMatrix::zeros(0, 0),
                blocks: Vec::new(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Analysis("matrix has non-finite entries".into()));
        }
        // nalgebra's QR iteration has no exceptional shifts and can stall
        // (e.g. on spectra symmetric about the imaginary axis). A seeded
        // random orthogonal conjugation changes the iteration path.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5c4u64);
        let mut found = None;
        for attempt in 0..SCHUR_ATTEMPTS {
            let (q0, mm) = if attempt == 0 {
                (None, m.clone())
            } else {
                let q0 = random_orthogonal(n, &mut rng);
                let mm = q0.transpose() * m * &q0;
                (Some(q0), mm)
            };
            if let Some(schur) = Schur::try_new(mm, f64::EPSILON, 10_000) {
                let (q, t) = schur.unpack();
                let q = match q0 {
                    Some(q0) => q0 * q,
                    None => q,
                };
                found = Some((q, t));
                break;
            }
        }
        let (q, t) = found.ok_or_else(|| Error::Analysis("real Schur iteration did not converge".into()))?;
        let mut out = RealSchur {
            q,
            t,
            blocks: Vec::new(),
        };
        out.clean_structure();
        Ok(out)
    }

    /// Zeroes negligible subdiagonals, splits 2×2 blocks with real
    /// eigenvalues and rebuilds the block list.
    fn clean_structure(&mut self) {
        let n = self.t.nrows();
        for j in 0..n {
            for i in (j + 2)..n {
                self.t[(i, j)] = 0.0;
            }
        }
        for i in 0..n.saturating_sub(1) {
            let scale = self.t[(i, i)].abs() + self.t[(i + 1, i + 1)].abs();
            let sub = self.t[(i + 1, i)];
            if sub.abs() <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
                self.t[(i + 1, i)] = 0.0;
            }
        }
        let mut i = 0;
        while i + 1 < n {
            if self.t[(i + 1, i)] != 0.0 {
                let (a, b, c, d) = (
                    self.t[(i, i)],
                    self.t[(i, i + 1)],
                    self.t[(i + 1, i)],
                    self.t[(i + 1, i + 1)],
                );
                let half = 0.5 * (a - d);
                let disc = half * half + b * c;
                if disc >= 0.0 {
                    // Real pair: rotate the eigenvector of the first
                    // eigenvalue onto e1.
                    let lambda = 0.5 * (a + d) + half.signum() * disc.sqrt();
                    let (vx, vy) = if b.abs() >= c.abs() {
                        (b, lambda - a)
                    } else {
                        (lambda - d, c)
                    };
                    let nrm = vx.hypot(vy);
                    if nrm > 0.0 {
                        let rot = rotation(vx / nrm, vy / nrm);
                        self.apply_local(i, &rot);
                        self.t[(i + 1, i)] = 0.0;
                    }
                    i += 1;
                    continue;
                }
                i += 2;
            } else {
                i += 1;
            }
        }
        self.rebuild_blocks();
    }

    fn rebuild_blocks(&mut self) {
        let n = self.t.nrows();
        self.blocks.clear();
        let mut i = 0;
        while i < n {
            if i + 1 < n && self.t[(i + 1, i)] != 0.0 {
                self.blocks.push(2);
                i += 2;
            } else {
                self.blocks.push(1);
                i += 1;
            }
        }
    }

    /// Applies the orthogonal similarity `G` to rows/columns `at..at+G.n`.
    fn apply_local(&mut self, at: usize, g: &DMatrix<f64>) {
        let k = g.nrows();
        let n = self.t.nrows();
        let rows = g.transpose() * self.t.view((at, 0), (k, n));
        self.t.view_mut((at, 0), (k, n)).copy_from(&rows);
        let cols = self.t.view((0, at), (n, k)) * g;
        self.t.view_mut((0, at), (n, k)).copy_from(&cols);
        let qcols = self.q.view((0, at), (n, k)) * g;
        self.q.view_mut((0, at), (n, k)).copy_from(&qcols);
    }

    fn block_start(&self, idx: usize) -> usize {
        self.blocks[..idx].iter().sum()
    }

    /// Eigenvalues of the diagonal block `idx`.
    pub fn block_eigenvalues(&self, idx: usize) -> Vec<Complex<f64>> {
        let s = self.block_start(idx);
        if self.blocks[idx] == 1 {
            return vec![Complex::new(self.t[(s, s)], 0.0)];
        }
        eig2x2(
            self.t[(s, s)],
            self.t[(s, s + 1)],
            self.t[(s + 1, s)],
            self.t[(s + 1, s + 1)],
        )
        .to_vec()
    }

    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        (0..self.blocks.len()).flat_map(|i| self.block_eigenvalues(i)).collect()
    }

    /// Swaps the adjacent diagonal blocks `idx` and `idx + 1` with an
    /// orthogonal similarity (direct swapping through a Sylvester solve).
    fn swap_adjacent(&mut self, idx: usize) -> Result<()> {
        let p = self.blocks[idx];
        let r = self.blocks[idx + 1];
        let j = self.block_start(idx);
        let a11 = self.t.view((j, j), (p, p)).into_owned();
        let a22 = self.t.view((j + p, j + p), (r, r)).into_owned();
        let a12 = self.t.view((j, j + p), (p, r)).into_owned();
        let x = solve_sylvester(&a11, &a22, &a12)?;

        // Columns of [−X; I] span the invariant subspace of the second block.
        let k = p + r;
        let mut basis = DMatrix::zeros(k, k);
        basis.view_mut((0, 0), (p, r)).copy_from(&(-&x));
        basis.view_mut((p, 0), (r, r)).copy_from(&DMatrix::identity(r, r));
        basis.view_mut((0, r), (p, p)).copy_from(&DMatrix::identity(p, p));
        let g = basis.qr().q();
        self.apply_local(j, &g);

        let sub_norm = self.t.view((j, j), (k, k)).norm();
        let leak = self.t.view((j + r, j), (p, r)).norm();
        if leak > 1e-8 * sub_norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Analysis(format!(
                "Schur block swap lost accuracy (residual {leak:e})"
            )));
        }
        self.t.view_mut((j + r, j), (p, r)).fill(0.0);
        for c in j..j + k {
            for rr in (c + 2)..(j + k) {
                self.t[(rr, c)] = 0.0;
            }
        }
        if r == 1 && p == 1 {
            self.t[(j + 1, j)] = 0.0;
        }
        self.blocks.swap(idx, idx + 1);
        Ok(())
    }

    /// Reorders the factorisation so every block whose eigenvalues satisfy
    /// `select` comes first. Returns the dimension of the leading
    /// selected subspace.
    pub fn reorder<F>(&mut self, select: F) -> Result<usize>
    where
        F: Fn(Complex<f64>) -> bool,
    {
        let mut flags: Vec<bool> = (0..self.blocks.len())
            .map(|i| self.block_eigenvalues(i).into_iter().all(&select))
            .collect();
        loop {
            let pos = (0..flags.len().saturating_sub(1)).find(|&i| !flags[i] && flags[i + 1]);
            match pos {
                Some(i) => {
                    self.swap_adjacent(i)?;
                    flags.swap(i, i + 1);
                }
                None => break,
            }
        }
        Ok(self
            .blocks
            .iter()
            .zip(&flags)
            .filter(|(_, &f)| f)
            .map(|(b, _)| *b)
            .sum())
    }
}

fn rotation(c: f64, s: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Eigenvalues of `[[a, b], [c, d]]`.
pub fn eig2x2(a: f64, b: f64, c: f64, d: f64) -> [Complex<f64>; 2] {
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let disc = half * half + b * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [Complex::new(mean - s, 0.0), Complex::new(mean + s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [Complex::new(mean, -s), Complex::new(mean, s)]
    }
}

/// Sorts eigenvalues by real part, then imaginary part.
pub fn sort_eigenvalues(values: &mut [Complex<f64>]) {
    values.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Largest distance in a greedy nearest-neighbour matching of two
/// eigenvalue multisets; infinite if the sizes differ.
pub fn multiset_distance(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (j, y) in b.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (x - y).norm();
            if d < best_d {
                best_d = d;
                best = Some(j);
            }
        }
        if let Some(j) = best {
            used[j] = true;
            worst = worst.max(best_d);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        let d = (a - b).abs().max();
        assert!(d <= tol, "max abs diff {d:e} > {tol:e}\n{a}\n{b}");
    }

    #[test]
    fn kron_matches_definition() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let k = kron(&a, &b);
        let expect = DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0]);
        assert_eq!(k, expect);
    }

    #[test]
    fn sylvester_residual() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let b = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let c = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let x = solve_sylvester(&a, &b, &c).unwrap();
        assert_close(&(&a * &x - &x * &b), &c, 1e-14);
    }

    #[test]
    fn sylvester_singular_is_reported() {
        let a = DMatrix::from_row_slice(1, 1, &[2.0]);
        let c = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(matches!(solve_sylvester(&a, &a, &c), Err(Error::SingularSylvester(_))));
    }

    #[test]
    fn reorder_brings_selected_first() {
        // Eigenvalues 3, 1±2i, -1, 0.5: pick the negative real part one.
        let m = DMatrix::from_row_slice(
            5,
            5,
            &[
                3.0, 1.0, 0.5, 0.2, 0.1, //
                0.0, 1.0, 2.0, 0.3, 0.7, //
                0.0, -2.0, 1.0, 0.4, 0.2, //
                0.0, 0.0, 0.0, -1.0, 0.9, //
                0.0, 0.0, 0.0, 0.0, 0.5,
            ],
        );
        let q0 = DMatrix::from_fn(5, 5, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 - 2.0 + (i == j) as u8 as f64 * 6.0
        });
        let q0 = q0.qr().q();
        let mixed = &q0 * &m * q0.transpose();
        let mut schur = RealSchur::new(&mixed).unwrap();
        let k = schur.reorder(|l| l.re < 0.0).unwrap();
        assert_eq!(k, 1);
        assert!((schur.t[(0, 0)] + 1.0).abs() < 1e-10);
        assert_close(&(&schur.q * &schur.t * schur.q.transpose()), &mixed, 1e-10);
        assert_close(&(schur.q.transpose() * &schur.q), &DMatrix::identity(5, 5), 1e-12);
        // The complex pair can be moved as a unit as well.
        let k = schur.reorder(|l| l.im.abs() > 0.5).unwrap();
        assert_eq!(k, 2);
        let lead = schur.block_eigenvalues(0);
        assert!(lead
            .iter()
            .all(|l| (l.re - 1.0).abs() < 1e-9 && (l.im.abs() - 2.0).abs() < 1e-9));
        assert_close(&(&schur.q * &schur.t * schur.q.transpose()), &mixed, 1e-10);
    }

    #[test]
    fn generalized_eigenvalue_of_scaled_identity() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 6.0]));
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let g = max_generalized_eigenvalue(&m, &w).unwrap();
        assert!((g - 2.0).abs() < 1e-12);
    }

    #[test]
    fn multiset_distance_handles_permutation() {
        let a = [Complex::new(0.0, 0.0), Complex::new(1.5, 0.8), Complex::new(1.5, -0.8)];
        let b = [Complex::new(1.5, -0.8), Complex::new(0.0, 0.0), Complex::new(1.5, 0.8)];
        assert!(multiset_distance(&a, &b) < 1e-15);
        assert!(multiset_distance(&a, &b[..2]).is_infinite());
    }
}
