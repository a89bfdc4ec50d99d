//! Weighted Lebesgue norms and the fractional space norm on boundary-zero functions.

use crate::error::{param, Error, Result};
use crate::fractional_operators::{FractionalOrder, KineticOperator};
use crate::grid_function::GridFunction;

/// Relative tolerance for the boundary condition φ(0) = φ(T) = 0.
pub const BOUNDARY_TOL: f64 = 1e-8;

/// Exponent and derivative order of the space the problem lives in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceParams {
    pub p: f64,
    pub ord: FractionalOrder,
}

impl SpaceParams {
    pub fn new(p: f64, ord: FractionalOrder) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(param("problem.p", format!("must be finite and > 1, got {p}")));
        }
        Ok(Self { p, ord })
    }

    /// The boundary value problem needs 1/p < α.
    pub fn check_problem_order(&self) -> Result<()> {
        if self.ord.alpha() * self.p <= 1.0 {
            return Err(param(
                "problem.alpha",
                format!(
                    "order constraint 1/p < alpha violated: alpha = {}, 1/p = {}",
                    self.ord.alpha(),
                    1.0 / self.p
                ),
            ));
        }
        Ok(())
    }
}

/// (∫ ψ′|f|^p dξ)^{1/p} by the trapezoid rule in ψ.
pub fn lp_norm(f: &GridFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(param("p", format!("norm exponent must be ≥ 1, got {p}")));
    }
    let w = f.grid().trapezoid_weights();
    let s: f64 = w.iter().zip(f.values()).map(|(w, v)| w * v.abs().powf(p)).sum();
    Ok(s.powf(1.0 / p))
}

/// ‖ᴴD^{α,β;ψ}_{0+} φ‖ in L^p_ψ, with the derivative taken at ψ-cell midpoints.
pub fn derivative_seminorm(phi: &GridFunction, sp: &SpaceParams) -> Result<f64> {
    let k = KineticOperator::new(phi.grid(), &sp.ord)?;
    let d = k.apply(phi.values());
    let s: f64 = phi
        .grid()
        .psi_steps()
        .zip(&d)
        .map(|(h, v)| h * v.abs().powf(sp.p))
        .sum();
    Ok(s.powf(1.0 / sp.p))
}

pub fn check_boundary(phi: &GridFunction) -> Result<()> {
    let v = phi.values();
    let (left, right) = (v[0], v[v.len() - 1]);
    let tol = BOUNDARY_TOL * phi.max_abs();
    if left.abs() > tol || right.abs() > tol {
        return Err(Error::Boundary { left, right, tol });
    }
    Ok(())
}

/// ‖φ‖_{L^p_ψ} + ‖ᴴDφ‖_{L^p_ψ} for boundary-zero φ.
pub fn hspace_norm(phi: &GridFunction, sp: &SpaceParams) -> Result<f64> {
    check_boundary(phi)?;
    Ok(lp_norm(phi, sp.p)? + derivative_seminorm(phi, sp)?)
}

/// Copy of φ with both end values set to zero.
pub fn project_boundary(phi: &GridFunction) -> GridFunction {
    let mut v = phi.values().to_vec();
    let n = v.len();
    v[0] = 0.0;
    v[n - 1] = 0.0;
    phi.with_values(v)
}
