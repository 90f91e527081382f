//! Weighted quadratic Lyapunov function `V(ζ) = ζᵀ (D(ℓ) ⊗ P⁻¹) ζ`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gain::RiccatiSolution;
use crate::linalg;

/// Diagonal of `D(ℓ) = diag(1, ℓ, …, ℓ^{r−1})`.
pub fn ell_weights(ell: f64, r: usize) -> Vec<f64> {
    (0..r).map(|i| ell.powi(i as i32)).collect()
}

/// `D(ℓ) ⊗ P⁻¹` for `r` agent blocks.
pub fn weight_matrix(ell: f64, r: usize, p_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let dl = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(ell_weights(ell, r)));
    linalg::kron(&dl, p_inv)
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovFunction {
    pub ell: f64,
    pub blocks: usize,
    pub lambda_low: f64,
    pub lambda_high: f64,
    #[serde(skip)]
    p_inv: DMatrix<f64>,
    #[serde(skip)]
    weights: Vec<f64>,
}

impl LyapunovFunction {
    /// `blocks` is `N_a − 1`.
    pub fn new(sol: &RiccatiSolution, ell: f64, blocks: usize) -> Result<Self> {
        if !(ell > 0.0 && ell.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ell",
                reason: format!("must be positive and finite, got {ell}"),
            });
        }
        let p_inv = sol.p_inv()?;
        let eig = p_inv.clone().symmetric_eigenvalues();
        let top = ell.powi(blocks.saturating_sub(1) as i32);
        Ok(LyapunovFunction {
            ell,
            blocks,
            lambda_low: top.min(1.0) * eig.min(),
            lambda_high: top.max(1.0) * eig.max(),
            p_inv,
            weights: ell_weights(ell, blocks),
        })
    }

    pub fn dim(&self) -> usize {
        self.p_inv.nrows()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        weight_matrix(self.ell, self.blocks, &self.p_inv)
    }

    pub fn evaluate(&self, zeta: &[f64]) -> f64 {
        let d = self.dim();
        debug_assert_eq!(zeta.len(), self.blocks * d);
        let mut v = 0.0;
        for (a, &wt) in self.weights.iter().enumerate() {
            let z = &zeta[a * d..(a + 1) * d];
            let mut q = 0.0;
            for i in 0..d {
                let row: f64 = z.iter().enumerate().map(|(k, zk)| self.p_inv[(i, k)] * zk).sum();
                q += z[i] * row;
            }
            v += wt * q;
        }
        v
    }
}

#[allow(non_snake_case)]
pub fn evaluate_V(sol: &RiccatiSolution, ell: f64, zeta: &[f64]) -> Result<f64> {
    let d = sol.dim();
    if !zeta.len().is_multiple_of(d) {
        return Err(Error::Dimension(format!(
            "ζ of length {} is not a multiple of d = {d}",
            zeta.len()
        )));
    }
    Ok(LyapunovFunction::new(sol, ell, zeta.len() / d)?.evaluate(zeta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain::solve_riccati;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_and_scalar_cases() {
        let sol = solve_riccati(2, 1.0, 1.0).unwrap();
        assert_eq!(evaluate_V(&sol, 3.0, &[0.0; 6]).unwrap(), 0.0);
        let scalar = solve_riccati(1, 0.5, 1.0).unwrap();
        for ell in [0.1, 1.0, 7.0] {
            assert!((evaluate_V(&scalar, ell, &[2.5]).unwrap() - 6.25).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_dense_quadratic_form_and_sandwich() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..=3 {
            let sol = solve_riccati(d, 1.0, 1.0).unwrap();
            for blocks in 1..=4 {
                let ell = rng.random_range(0.3..5.0);
                let lf = LyapunovFunction::new(&sol, ell, blocks).unwrap();
                let w = lf.matrix();
                for _ in 0..50 {
                    let z: Vec<f64> = (0..blocks * d).map(|_| rng.random_range(-4.0..4.0)).collect();
                    let zv = nalgebra::DVector::from_vec(z.clone());
                    let dense = (zv.transpose() * &w * &zv)[(0, 0)];
                    let v = lf.evaluate(&z);
                    assert!((v - dense).abs() <= 1e-10 * (1.0 + dense.abs()));
                    let n2 = zv.norm_squared();
                    assert!(lf.lambda_low * n2 <= v * (1.0 + 1e-12));
                    assert!(v <= lf.lambda_high * n2 * (1.0 + 1e-12));
                }
            }
        }
    }
}
