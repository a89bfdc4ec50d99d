use super::derivative::{caputo_hilfer_right, hilfer_deriv_left};
use super::weights::{integral, Side};
use super::FractionalOrder;
use crate::error::Result;
use crate::grid_function::GridFunction;

fn trapezoid_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

/// ∫ (I^α_0 φ₂) φ dψ − ∫ φ₂ (I^α_T φ) dψ, zero for the exact operators.
pub fn ibp_integral_defect(alpha: f64, phi: &GridFunction, phi2: &GridFunction) -> Result<f64> {
    phi.check_same_grid(phi2)?;
    let w = phi.grid().trapezoid_weights();
    let left = integral(alpha, phi2, Side::Left)?;
    let right = integral(alpha, phi, Side::Right)?;
    Ok(trapezoid_dot(w, left.values(), phi.values())
        - trapezoid_dot(w, phi2.values(), right.values()))
}

/// The pieces of the Hilfer integration-by-parts identity
/// ∫ (ᶜD_T φ) φ₂ = −H(T)G(T) + H(0)G(0) + ∫ φ (D_0 φ₂),
/// with H = I_0^{(1−β)(1−α)} φ₂ and G = I_T^{β(1−α)} φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbpTerms {
    pub lhs: f64,
    pub rhs_integral: f64,
    pub boundary_end: f64,
    pub boundary_start: f64,
}

impl IbpTerms {
    /// lhs minus the full right-hand side.
    pub fn defect(&self) -> f64 {
        self.lhs - (self.boundary_end + self.boundary_start + self.rhs_integral)
    }

    /// lhs minus the integral alone; equals the boundary terms when those do not vanish.
    pub fn raw_defect(&self) -> f64 {
        self.lhs - self.rhs_integral
    }
}

pub fn ibp_hilfer_terms(
    ord: &FractionalOrder,
    phi: &GridFunction,
    phi2: &GridFunction,
) -> Result<IbpTerms> {
    phi.check_same_grid(phi2)?;
    let grid = phi.grid();
    let w = grid.trapezoid_weights();
    let n = grid.len();
    let dc = caputo_hilfer_right(ord, phi)?;
    let dl = hilfer_deriv_left(ord, phi2)?;
    let lhs = trapezoid_dot(w, dc.values.values(), phi2.values());
    let rhs_integral = trapezoid_dot(w, phi.values(), dl.values.values());

    let (g1, g2) = if ord.is_classical() {
        (0.0, 0.0)
    } else {
        (ord.gamma1(), ord.gamma2())
    };
    let h = if g1 > 0.0 {
        integral(g1, phi2, Side::Left)?
    } else {
        phi2.clone()
    };
    let g = if g2 > 0.0 {
        integral(g2, phi, Side::Right)?
    } else {
        phi.clone()
    };
    Ok(IbpTerms {
        lhs,
        rhs_integral,
        boundary_end: -h.values()[n - 1] * g.values()[n - 1],
        boundary_start: h.values()[0] * g.values()[0],
    })
}

/// Defect of the Hilfer integration-by-parts identity, boundary terms included.
pub fn ibp_hilfer_defect(
    ord: &FractionalOrder,
    phi: &GridFunction,
    phi2: &GridFunction,
) -> Result<f64> {
    Ok(ibp_hilfer_terms(ord, phi, phi2)?.defect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinate_map::{Grid, PsiMap, SpacingRule};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::build(1.0, n, PsiMap::identity(), SpacingRule::UniformInXi).unwrap()
    }

    #[test]
    fn zero_gives_zero() {
        let g = grid(33);
        let z = GridFunction::zeros(g.clone());
        let f = GridFunction::from_fn(g, |x| x.sin()).unwrap();
        assert_eq!(ibp_integral_defect(0.5, &z, &f).unwrap(), 0.0);
        let o = FractionalOrder::new(0.6, 0.5).unwrap();
        assert_eq!(ibp_hilfer_defect(&o, &z, &f).unwrap(), 0.0);
    }

    #[test]
    fn constants_pair_is_symmetric() {
        // Both sides reduce to the same weighted sum for φ = φ₂ = 1.
        let one = GridFunction::from_fn(grid(129), |_| 1.0).unwrap();
        assert!(ibp_integral_defect(0.5, &one, &one).unwrap().abs() < 1e-13);
    }

    #[test]
    fn constant_and_linear_pair() {
        let mut prev = f64::INFINITY;
        for n in [65, 129, 257, 513] {
            let g = grid(n);
            let one = GridFunction::from_fn(g.clone(), |_| 1.0).unwrap();
            let x = GridFunction::from_fn(g, |x| x).unwrap();
            let d = ibp_integral_defect(0.5, &one, &x).unwrap().abs();
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn hilfer_identity_with_vanishing_boundary() {
        let o = FractionalOrder::new(0.6, 0.5).unwrap();
        let mut prev = f64::INFINITY;
        for n in [129, 257, 513] {
            let g = grid(n);
            let phi = GridFunction::from_fn(g.clone(), |x| (2.0 * x).cos() + x).unwrap();
            let phi2 = GridFunction::from_fn(g, |x| (PI * x).sin()).unwrap();
            let d = ibp_hilfer_defect(&o, &phi, &phi2).unwrap().abs();
            assert!(d < prev, "n = {n}: {d} ≥ {prev}");
            prev = d;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn classical_identity_is_ordinary_parts() {
        let g = grid(201);
        let phi = GridFunction::from_fn(g.clone(), |x| x.exp()).unwrap();
        let phi2 = GridFunction::from_fn(g, |x| 1.0 + x * x).unwrap();
        let t = ibp_hilfer_terms(&FractionalOrder::classical(), &phi, &phi2).unwrap();
        assert!((t.boundary_end + 2.0 * 1f64.exp()).abs() < 1e-12);
        assert!((t.boundary_start - 1.0).abs() < 1e-12);
        assert!(t.defect().abs() < 1e-4);
    }
}
