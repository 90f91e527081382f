//! Riccati-based high-gain design `K = D_g K0`, `K0 = P Cᵀ`.

use nalgebra::{Complex, DMatrix};
use serde::Serialize;

use crate::agent::shift_matrix;
use crate::error::{Error, Result};
use crate::linalg::{self, RealSchur};
use crate::lyapunov::weight_matrix;
use crate::transform::TransformSet;

/// Stabilising solution of `S P + P Sᵀ − 2μ P CᵀC P + aI = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct RiccatiSolution {
    #[serde(serialize_with = "crate::report::ser_matrix")]
    pub p: DMatrix<f64>,
    pub a: f64,
    pub mu: f64,
    pub residual_norm: f64,
}

impl RiccatiSolution {
    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// `K0 = P Cᵀ`, the first column of `P`.
    pub fn k0(&self) -> Vec<f64> {
        self.p.column(0).iter().copied().collect()
    }

    pub fn p_inv(&self) -> Result<DMatrix<f64>> {
        let inv = linalg::inverse(&self.p, "Riccati solution P")?;
        Ok((&inv + inv.transpose()) * 0.5)
    }
}

fn riccati_residual(p: &DMatrix<f64>, s: &DMatrix<f64>, mu: f64, a: f64) -> DMatrix<f64> {
    let d = p.nrows();
    // P CᵀC P = p₁ p₁ᵀ with p₁ the first column of P.
    let p1 = p.column(0).into_owned();
    s * p + p * s.transpose() - (&p1 * p1.transpose()) * (2.0 * mu) + DMatrix::identity(d, d) * a
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// Hamiltonian invariant-subspace solve followed by one Newton step.
pub fn solve_riccati(d: usize, mu: f64, a: f64) -> Result<RiccatiSolution> {
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "must be at least 1".into(),
        });
    }
    for (name, v) in [("mu", mu), ("a", a)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be positive and finite, got {v}"),
            });
        }
    }
    let s = shift_matrix(d);
    let mut ham = DMatrix::zeros(2 * d, 2 * d);
    ham.view_mut((0, 0), (d, d)).copy_from(&s.transpose());
    ham[(0, d)] = -2.0 * mu;
    ham.view_mut((d, 0), (d, d)).fill_diagonal(-a);
    ham.view_mut((d, d), (d, d)).copy_from(&(-&s));

    let mut schur = RealSchur::new(&ham).map_err(|e| Error::Riccati(e.to_string()))?;
    let stable = schur
        .reorder(|v: Complex<f64>| v.re < 0.0)
        .map_err(|e| Error::Riccati(e.to_string()))?;
    if stable != d {
        return Err(Error::Riccati(format!(
            "Hamiltonian has {stable} stable eigenvalues, expected {d}"
        )));
    }
    let u1 = schur.q.view((0, 0), (d, d)).into_owned();
    let u2 = schur.q.view((d, 0), (d, d)).into_owned();
    let u1_inv = u1
        .try_inverse()
        .ok_or_else(|| Error::Riccati("stable subspace is not a graph".into()))?;
    let mut p = symmetrize(&(u2 * u1_inv));
    let mut resid = riccati_residual(&p, &s, mu, a).norm();

    // Kleinman step: (S − 2μ P CᵀC) Δ + Δ (·)ᵀ = −F(P).
    let mut k = s.clone();
    for i in 0..d {
        k[(i, 0)] -= 2.0 * mu * p[(i, 0)];
    }
    let f = riccati_residual(&p, &s, mu, a);
    if let Ok(delta) = linalg::solve_sylvester(&k, &(-k.transpose()), &(-f)) {
        let candidate = symmetrize(&(&p + delta));
        let cand_resid = riccati_residual(&candidate, &s, mu, a).norm();
        if cand_resid.is_finite() && cand_resid < resid {
            p = candidate;
            resid = cand_resid;
        }
    }

    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Riccati("solution is not finite".into()));
    }
    let min_eig = p.clone().symmetric_eigenvalues().min();
    if min_eig <= 0.0 {
        return Err(Error::Riccati(format!(
            "solution is not positive definite (min eigenvalue {min_eig:e})"
        )));
    }
    let pn = p.norm();
    if resid > 1e-8 * (1.0 + pn * pn) {
        return Err(Error::Riccati(format!("residual {resid:e} above tolerance")));
    }
    Ok(RiccatiSolution {
        p,
        a,
        mu,
        residual_norm: resid,
    })
}

/// `K = D_g K0` with `D_g = diag(g, g², …, g^d)`.
#[derive(Debug, Clone, Serialize)]
pub struct GainDesign {
    pub k0: Vec<f64>,
    pub g: f64,
    pub dg: Vec<f64>,
    pub k: Vec<f64>,
}

pub fn build_gain(sol: &RiccatiSolution, g: f64) -> Result<GainDesign> {
    if !(g >= 1.0 && g.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "g",
            reason: format!("must be finite and at least 1, got {g}"),
        });
    }
    let k0 = sol.k0();
    let dg: Vec<f64> = (1..=k0.len()).map(|m| g.powi(m as i32)).collect();
    let k = k0.iter().zip(&dg).map(|(a, b)| a * b).collect();
    Ok(GainDesign { k0, g, dg, k })
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Entry {
    pub label: String,
    /// `−λ_max` of the weighted inequality on the `c` block; `None` when
    /// the block is empty (graph without edges).
    pub a_c_prime: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Report {
    pub ell: f64,
    pub entries: Vec<Lemma1Entry>,
    pub min_a_c_prime: Option<f64>,
    pub holds: bool,
}

/// Evaluates `(D(ℓ) ⊗ P⁻¹) H_c + H_cᵀ (D(ℓ) ⊗ P⁻¹)` for every topology.
/// `D(ℓ)` is restricted to the indices of the `c` block.
pub fn lemma1_report(transforms: &TransformSet, sol: &RiccatiSolution, ell: f64) -> Result<Lemma1Report> {
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "ell",
            reason: format!("must be positive and finite, got {ell}"),
        });
    }
    let p_inv = sol.p_inv()?;
    let k0 = sol.k0();
    let d = sol.dim();
    let mut entries = Vec::with_capacity(transforms.len());
    for tr in transforms.transforms() {
        let r = tr.node_count() - 1;
        let p = tr.nc_dim();
        let a_c_prime = if p == r {
            None
        } else {
            let w = weight_matrix(ell, r, &p_inv);
            let wc = w.view((p * d, p * d), ((r - p) * d, (r - p) * d)).into_owned();
            let h = tr.h_c(&k0);
            let m = &wc * &h + h.transpose() * &wc;
            let top = linalg::max_sym_eigenvalue(&m);
            if !top.is_finite() {
                return Err(Error::NonFinite(format!("matrix-inequality eigenvalue for `{}`", tr.label())));
            }
            Some(-top)
        };
        entries.push(Lemma1Entry {
            label: tr.label().to_string(),
            a_c_prime,
        });
    }
    let min_a_c_prime = entries.iter().filter_map(|e| e.a_c_prime).reduce(f64::min);
    Ok(Lemma1Report {
        ell,
        holds: min_a_c_prime.is_none_or(|v| v > 0.0),
        entries,
        min_a_c_prime,
    })
}

/// Like [`lemma1_report`] but fails on the first indefinite topology.
pub fn verify_lemma1(transforms: &TransformSet, sol: &RiccatiSolution, ell: f64) -> Result<Lemma1Report> {
    let report = lemma1_report(transforms, sol, ell)?;
    if let Some(bad) = report.entries.iter().find(|e| e.a_c_prime.is_some_and(|v| v <= 0.0)) {
        return Err(Error::Lemma1Indefinite {
            label: bad.label.clone(),
            max_eigenvalue: -bad.a_c_prime.unwrap_or_default(),
        });
    }
    Ok(report)
}

pub const DEFAULT_MAX_ELL: f64 = 1024.0;

/// Doubling search `ℓ = 2, 4, 8, …` up to `max_ell`.
pub fn find_ell(transforms: &TransformSet, sol: &RiccatiSolution, max_ell: f64) -> Result<Lemma1Report> {
    let mut ell = 2.0;
    while ell <= max_ell {
        let report = lemma1_report(transforms, sol, ell)?;
        if report.holds {
            return Ok(report);
        }
        ell *= 2.0;
    }
    Err(Error::EllSearchFailed { max_ell })
}
