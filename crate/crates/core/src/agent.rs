//! Homogeneous agents in prime form: `ẇ = S w + B φ(w) + u`, `y = C w`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Scalar nonlinearity acting on the agent state.
pub type Nonlinearity = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Agent model. `S`, `B`, `C` are implied by `dim`; only `φ` and its
/// constants are stored.
#[derive(Clone)]
pub struct AgentDynamics {
    name: String,
    dim: usize,
    phi: Nonlinearity,
    phi_bound: f64,
    phi_lipschitz: f64,
    params: BTreeMap<String, f64>,
}

impl fmt::Debug for AgentDynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentDynamics")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("phi_bound", &self.phi_bound)
            .field("phi_lipschitz", &self.phi_lipschitz)
            .field("params", &self.params)
            .finish()
    }
}

impl AgentDynamics {
    /// Custom dynamics. `phi_bound` must be positive and `phi_lipschitz`
    /// non-negative; neither is checked against `phi` here.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        phi: Nonlinearity,
        phi_bound: f64,
        phi_lipschitz: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be at least 1".into(),
            });
        }
        if !(phi_bound > 0.0 && phi_bound.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "phi_bound",
                reason: format!("must be positive, got {phi_bound}"),
            });
        }
        if !(phi_lipschitz >= 0.0 && phi_lipschitz.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "phi_lipschitz",
                reason: format!("must be non-negative, got {phi_lipschitz}"),
            });
        }
        Ok(AgentDynamics {
            name: name.into(),
            dim,
            phi,
            phi_bound,
            phi_lipschitz,
            params: BTreeMap::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn phi(&self, w: &[f64]) -> f64 {
        (self.phi)(w)
    }

    pub fn phi_bound(&self) -> f64 {
        self.phi_bound
    }

    pub fn phi_lipschitz(&self) -> f64 {
        self.phi_lipschitz
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Shift matrix: ones on the superdiagonal.
    pub fn s_matrix(&self) -> DMatrix<f64> {
        shift_matrix(self.dim)
    }

    /// `B = e_d`.
    pub fn b_vector(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.dim);
        b[self.dim - 1] = 1.0;
        b
    }

    /// `C = e_1ᵀ` as a 1×d row.
    pub fn c_row(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(1, self.dim);
        c[(0, 0)] = 1.0;
        c
    }
}

pub fn shift_matrix(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if j == i + 1 { 1.0 } else { 0.0 })
}

/// `S w + B φ(w) + u`, with `u` a full d-vector.
pub fn drift(dynamics: &AgentDynamics, w: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let d = dynamics.dim();
    if w.len() != d || u.len() != d {
        return Err(Error::Dimension(format!(
            "drift: dim {d}, state {}, input {}",
            w.len(),
            u.len()
        )));
    }
    let phi = dynamics.phi(w);
    if !phi.is_finite() {
        return Err(Error::NonFinite(format!("phi({w:?}) = {phi}")));
    }
    let mut out = vec![0.0; d];
    for m in 0..d - 1 {
        out[m] = w[m + 1] + u[m];
    }
    out[d - 1] = phi + u[d - 1];
    Ok(out)
}

/// `y = C w = w₁`.
pub fn output(dynamics: &AgentDynamics, w: &[f64]) -> Result<f64> {
    if w.len() != dynamics.dim() {
        return Err(Error::Dimension(format!(
            "output: dim {}, state {}",
            dynamics.dim(),
            w.len()
        )));
    }
    Ok(w[0])
}

/// Library of dynamics with bounded, globally Lipschitz `φ`.
///
/// * `zero_phi`: `φ ≡ 0` (stored bound 1.0, any positive value is valid).
/// * `bounded_sine`: `φ(w) = α sin(w₁)`, bound and Lipschitz constant `α`
///   (param `alpha`, default 1).
/// * `saturated_damping`: `φ(w) = −β tanh(w₁) − γ tanh(w_d)`, bound `β + γ`
///   (params `beta`, `gamma`, default 1).
pub fn builtin_dynamics(name: &str, dim: usize, params: &BTreeMap<String, f64>) -> Result<AgentDynamics> {
    let allowed: &[&str] = match name {
        "zero_phi" => &[],
        "bounded_sine" => &["alpha"],
        "saturated_damping" => &["beta", "gamma"],
        other => return Err(Error::UnknownDynamics(other.to_string())),
    };
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::InvalidParameter {
            name: "dynamics.params",
            reason: format!("`{bad}` is not a parameter of {name}"),
        });
    }
    let get = |key: &str| params.get(key).copied().unwrap_or(1.0);
    let mut dynamics = match name {
        "zero_phi" => AgentDynamics::new(name, dim, Arc::new(|_: &[f64]| 0.0), 1.0, 0.0)?,
        "bounded_sine" => {
            let alpha = get("alpha");
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "alpha",
                    reason: format!("must be positive, got {alpha}"),
                });
            }
            AgentDynamics::new(name, dim, Arc::new(move |w: &[f64]| alpha * w[0].sin()), alpha, alpha)?
        }
        _ => {
            let beta = get("beta");
            let gamma = get("gamma");
            if !(beta >= 0.0 && gamma >= 0.0 && beta + gamma > 0.0 && (beta + gamma).is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "beta/gamma",
                    reason: format!("need beta, gamma >= 0 with a positive sum, got {beta}, {gamma}"),
                });
            }
            // With d = 1 both terms act on the same coordinate.
            let lipschitz = if dim == 1 { beta + gamma } else { beta.hypot(gamma) };
            AgentDynamics::new(
                name,
                dim,
                Arc::new(move |w: &[f64]| -beta * w[0].tanh() - gamma * w[w.len() - 1].tanh()),
                beta + gamma,
                lipschitz,
            )?
        }
    };
    dynamics.params = params.clone();
    Ok(dynamics)
}
