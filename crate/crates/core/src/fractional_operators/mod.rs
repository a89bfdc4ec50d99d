//! ψ-Riemann–Liouville integrals, ψ-Hilfer derivatives and the
//! integration-by-parts defects built on them.
//!
//! All operators work in the variable u = ψ(ξ) on the grid's `psi_nodes`, so
//! the weight ψ′(s) ds becomes du and never has to be evaluated pointwise.

mod derivative;
mod ibp;
mod kinetic;
mod weights;

pub use derivative::{
    caputo_hilfer_right, caputo_hilfer_right_with, hilfer_deriv_left, hilfer_deriv_left_with,
    hilfer_deriv_right, hilfer_deriv_right_with, psi_derivative, DerivativeOutput,
    DerivativeScheme, MIN_DERIVATIVE_NODES,
};
pub use ibp::{ibp_hilfer_defect, ibp_hilfer_terms, ibp_integral_defect, IbpTerms};
pub use kinetic::KineticOperator;
pub use weights::{
    frac_integral_left, frac_integral_right, integral_weights, IntegralWeights, Side,
};

use crate::error::{param, Result};

/// Order α ∈ (0, 1] and type β ∈ [0, 1] of a ψ-Hilfer derivative.
///
/// α = 1 selects the classical derivative d/dψ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalOrder {
    alpha: f64,
    beta: f64,
    gamma1: f64,
    gamma2: f64,
}

impl FractionalOrder {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(param("problem.alpha", format!("must lie in (0, 1], got {alpha}")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(param("problem.beta", format!("must lie in [0, 1], got {beta}")));
        }
        Ok(Self {
            alpha,
            beta,
            gamma1: (1.0 - beta) * (1.0 - alpha),
            gamma2: beta * (1.0 - alpha),
        })
    }

    pub fn classical() -> Self {
        Self::new(1.0, 1.0).unwrap()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Inner integral order (1 − β)(1 − α).
    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    /// Outer integral order β(1 − α).
    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn is_classical(&self) -> bool {
        self.alpha == 1.0
    }
}
