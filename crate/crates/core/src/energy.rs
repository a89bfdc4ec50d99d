//! The Euler functional E(φ) = (1/p)∫ψ′|ᴴDφ|^p − ∫ψ′F(ξ, φ), its gradient,
//! Hessian and weak residual on the discrete space of nodal values.
//!
//! The derivative term is evaluated at ψ-cell midpoints (midpoint rule) and
//! the potential term by the trapezoid rule in ψ.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fractional_operators::KineticOperator;
use crate::function_spaces::{check_boundary, SpaceParams};
use crate::grid_function::GridFunction;
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
}

/// The discrete functional with an optional ε-regularized flux
/// (x² + ε²)^{(p−2)/2} x.
#[derive(Debug, Clone)]
pub struct Energy {
    pub sp: SpaceParams,
    pub nl: Nonlinearity,
    pub eps: f64,
}

impl Energy {
    pub fn new(sp: SpaceParams, nl: Nonlinearity) -> Self {
        Self { sp, nl, eps: 0.0 }
    }

    pub fn with_regularization(mut self, eps: f64) -> Self {
        self.eps = eps.max(0.0);
        self
    }

    fn kinetic_density(&self, x: f64) -> f64 {
        let p = self.sp.p;
        if self.eps == 0.0 {
            x.abs().powf(p) / p
        } else {
            ((x * x + self.eps * self.eps).powf(0.5 * p) - self.eps.powf(p)) / p
        }
    }

    /// |x|^{p−2}x, with value 0 at x = 0.
    pub fn flux(&self, x: f64) -> f64 {
        let p = self.sp.p;
        if self.eps == 0.0 {
            if x == 0.0 {
                0.0
            } else {
                x.abs().powf(p - 2.0) * x
            }
        } else {
            (x * x + self.eps * self.eps).powf(0.5 * (p - 2.0)) * x
        }
    }

    fn flux_derivative(&self, x: f64) -> f64 {
        let p = self.sp.p;
        if self.eps == 0.0 {
            if x == 0.0 {
                if p == 2.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (p - 1.0) * x.abs().powf(p - 2.0)
            }
        } else {
            let e2 = self.eps * self.eps;
            (x * x + e2).powf(0.5 * (p - 4.0)) * ((p - 1.0) * x * x + e2)
        }
    }

    fn kinetic_op(&self, phi: &GridFunction) -> Result<Arc<KineticOperator>> {
        KineticOperator::new(phi.grid(), &self.sp.ord)
    }

    /// Derivative values ᴴDφ at the cell midpoints.
    pub fn derivative_cells(&self, phi: &GridFunction) -> Result<Vec<f64>> {
        Ok(self.kinetic_op(phi)?.apply(phi.values()))
    }

    pub fn energy(&self, phi: &GridFunction) -> Result<EnergyBreakdown> {
        check_boundary(phi)?;
        self.energy_unchecked(phi)
    }

    pub(crate) fn energy_unchecked(&self, phi: &GridFunction) -> Result<EnergyBreakdown> {
        let grid = phi.grid();
        let d = self.derivative_cells(phi)?;
        let kinetic: f64 = grid
            .psi_steps()
            .zip(&d)
            .map(|(h, x)| h * self.kinetic_density(*x))
            .sum();
        let mut potential = 0.0;
        for ((&w, &x), &v) in grid
            .trapezoid_weights()
            .iter()
            .zip(grid.nodes())
            .zip(phi.values())
        {
            let f = self.nl.primitive(x, v)?;
            if !f.is_finite() {
                return Err(Error::Numeric(format!("F({x}, {v}) is not finite")));
            }
            potential += w * f;
        }
        Ok(EnergyBreakdown {
            kinetic,
            potential,
            total: kinetic - potential,
        })
    }

    fn nodal_f(&self, phi: &GridFunction) -> Result<Vec<f64>> {
        let grid = phi.grid();
        grid.nodes()
            .iter()
            .zip(phi.values())
            .map(|(&x, &v)| {
                let f = self.nl.f(x, v);
                if f.is_finite() {
                    Ok(f)
                } else {
                    Err(Error::Numeric(format!("f({x}, {v}) is not finite")))
                }
            })
            .collect()
    }

    /// ∫ψ′|ᴴDφ|^{p−2}ᴴDφ ᴴDv − ∫ψ′ f(ξ, φ) v.
    pub fn weak_residual(&self, phi: &GridFunction, v: &GridFunction) -> Result<f64> {
        phi.check_same_grid(v)?;
        check_boundary(phi)?;
        check_boundary(v)?;
        let k = self.kinetic_op(phi)?;
        let dphi = k.apply(phi.values());
        let dv = k.apply(v.values());
        let grid = phi.grid();
        let a: f64 = grid
            .psi_steps()
            .zip(dphi.iter().zip(&dv))
            .map(|(h, (x, y))| h * self.flux(*x) * y)
            .sum();
        let f = self.nodal_f(phi)?;
        let b: f64 = grid
            .trapezoid_weights()
            .iter()
            .zip(f.iter().zip(v.values()))
            .map(|(w, (f, v))| w * f * v)
            .sum();
        Ok(a - b)
    }

    /// Nodal gradient g_i = weak_residual(φ, e_i) with boundary entries zero.
    pub fn gradient(&self, phi: &GridFunction) -> Result<GridFunction> {
        check_boundary(phi)?;
        Ok(phi.with_values(self.gradient_values(phi)?))
    }

    pub(crate) fn gradient_values(&self, phi: &GridFunction) -> Result<Vec<f64>> {
        let grid = phi.grid();
        let k = self.kinetic_op(phi)?;
        let d = k.apply(phi.values());
        let weighted: Vec<f64> = grid
            .psi_steps()
            .zip(&d)
            .map(|(h, x)| h * self.flux(*x))
            .collect();
        let mut g = k.apply_transpose(&weighted);
        let f = self.nodal_f(phi)?;
        for ((gi, w), fi) in g.iter_mut().zip(grid.trapezoid_weights()).zip(&f) {
            *gi -= w * fi;
        }
        let n = g.len();
        g[0] = 0.0;
        g[n - 1] = 0.0;
        Ok(g)
    }

    /// Hessian of the discrete energy; boundary rows and columns are replaced
    /// by the identity so the matrix acts on interior values only.
    pub fn hessian(&self, phi: &GridFunction) -> Result<DMatrix<f64>> {
        let grid = phi.grid();
        let k = self.kinetic_op(phi)?;
        let km = k.to_matrix();
        let d = k.apply(phi.values());
        let n = grid.len();
        let mut scaled = km.clone();
        for (c, h) in grid.psi_steps().enumerate() {
            let s = h * self.flux_derivative(d[c]);
            scaled.row_mut(c).scale_mut(s);
        }
        let mut hm = km.transpose() * scaled;
        for (i, ((&w, &x), &v)) in grid
            .trapezoid_weights()
            .iter()
            .zip(grid.nodes())
            .zip(phi.values())
            .enumerate()
        {
            hm[(i, i)] -= w * self.nl.df_dt(x, v);
        }
        for i in [0, n - 1] {
            hm.row_mut(i).fill(0.0);
            hm.column_mut(i).fill(0.0);
            hm[(i, i)] = 1.0;
        }
        Ok(hm)
    }

    /// Number of cells where ᴴDφ = 0 exactly while p < 2 (the singular set of the flux).
    pub fn singular_cells(&self, phi: &GridFunction) -> Result<usize> {
        if self.sp.p >= 2.0 || self.eps > 0.0 {
            return Ok(0);
        }
        Ok(self.derivative_cells(phi)?.iter().filter(|&&x| x == 0.0).count())
    }
}

pub fn energy(phi: &GridFunction, sp: &SpaceParams, nl: &Nonlinearity) -> Result<EnergyBreakdown> {
    Energy::new(*sp, nl.clone()).energy(phi)
}

pub fn weak_residual(
    phi: &GridFunction,
    v: &GridFunction,
    sp: &SpaceParams,
    nl: &Nonlinearity,
) -> Result<f64> {
    Energy::new(*sp, nl.clone()).weak_residual(phi, v)
}

pub fn energy_gradient(phi: &GridFunction, sp: &SpaceParams, nl: &Nonlinearity) -> Result<GridFunction> {
    Energy::new(*sp, nl.clone()).gradient(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinate_map::{Grid, PsiMap, SpacingRule};
    use crate::fractional_operators::FractionalOrder;
    use crate::function_spaces::derivative_seminorm;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::build(1.0, n, PsiMap::identity(), SpacingRule::UniformInPsi).unwrap()
    }

    fn classical(p: f64) -> SpaceParams {
        SpaceParams::new(p, FractionalOrder::classical()).unwrap()
    }

    fn hat(g: &Arc<Grid>, i: usize) -> GridFunction {
        let mut v = vec![0.0; g.len()];
        v[i] = 1.0;
        GridFunction::new(g.clone(), v).unwrap()
    }

    #[test]
    fn zero_state() {
        let g = grid(33);
        let z = GridFunction::zeros(g.clone());
        let sp = SpaceParams::new(2.0, FractionalOrder::new(0.7, 0.3).unwrap()).unwrap();
        let e = energy(&z, &sp, &Nonlinearity::linear(3.0)).unwrap();
        assert_eq!((e.kinetic, e.potential, e.total), (0.0, 0.0, 0.0));
        let g0 = energy_gradient(&z, &sp, &Nonlinearity::linear(3.0)).unwrap();
        assert!(g0.values().iter().all(|&v| v == 0.0));
        assert_eq!(weak_residual(&z, &hat(&g, 5), &sp, &Nonlinearity::zero()).unwrap(), 0.0);
    }

    #[test]
    fn classical_parabola_energy() {
        let g = grid(1025);
        let phi = GridFunction::from_fn(g, |x| 0.5 * x * (1.0 - x)).unwrap();
        let e = energy(&phi, &classical(2.0), &Nonlinearity::affine(1.0)).unwrap();
        assert!((e.kinetic - 1.0 / 24.0).abs() < 1e-7);
        assert!((e.potential - 1.0 / 12.0).abs() < 1e-6);
        assert!((e.total + 1.0 / 24.0).abs() < 1e-6);
        assert_eq!(e.total, e.kinetic - e.potential);
    }

    #[test]
    fn kinetic_is_p_homogeneous() {
        let g = grid(65);
        let phi = GridFunction::from_fn(g, |x| (3.0 * x).sin() * x * (1.0 - x)).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let sp = SpaceParams::new(p, FractionalOrder::new(0.8, 0.4).unwrap()).unwrap();
            let a = energy(&phi, &sp, &Nonlinearity::zero()).unwrap();
            let b = energy(&phi.scaled(2.0), &sp, &Nonlinearity::zero()).unwrap();
            assert!((b.kinetic - 2f64.powf(p) * a.kinetic).abs() < 1e-12 * b.kinetic);
        }
    }

    #[test]
    fn power_catalog_energy_is_homogeneous() {
        let g = grid(65);
        let phi = GridFunction::from_fn(g, |x| (3.0 * x).sin() * x * (1.0 - x)).unwrap();
        let p = 3.0;
        let sp = SpaceParams::new(p, FractionalOrder::new(0.8, 0.4).unwrap()).unwrap();
        let nl = Nonlinearity::power(1.7, p).unwrap();
        let a = energy(&phi, &sp, &nl).unwrap();
        let c: f64 = -1.3;
        let b = energy(&phi.scaled(c), &sp, &nl).unwrap();
        let s = c.abs().powf(p);
        assert!((b.kinetic - s * a.kinetic).abs() < 1e-12 * b.kinetic);
        assert!((b.potential - s * a.potential).abs() < 1e-12 * b.potential);
    }

    #[test]
    fn residual_against_itself() {
        let g = grid(129);
        let phi = GridFunction::from_fn(g, |x| x.sin() * (1.0 - x)).unwrap();
        let sp = SpaceParams::new(2.5, FractionalOrder::new(0.75, 0.6).unwrap()).unwrap();
        let nl = Nonlinearity::sine_perturbed(0.5, 0.3, 2.5).unwrap();
        let r = weak_residual(&phi, &phi, &sp, &nl).unwrap();
        let semi = derivative_seminorm(&phi, &sp).unwrap().powf(2.5);
        let w = phi.grid().trapezoid_weights();
        let fphi: f64 = (0..phi.len())
            .map(|i| w[i] * nl.f(phi.grid().nodes()[i], phi.values()[i]) * phi.values()[i])
            .sum();
        assert!((r - (semi - fphi)).abs() < 1e-12);
    }

    #[test]
    fn gradient_entries_are_residuals_on_hats() {
        let g = grid(33);
        let phi = GridFunction::from_fn(g.clone(), |x| x * (1.0 - x) * (1.0 + x)).unwrap();
        let sp = SpaceParams::new(3.0, FractionalOrder::new(0.75, 0.5).unwrap()).unwrap();
        let nl = Nonlinearity::linear(2.0);
        let grad = energy_gradient(&phi, &sp, &nl).unwrap();
        for i in 1..32 {
            let r = weak_residual(&phi, &hat(&g, i), &sp, &nl).unwrap();
            assert!((grad.values()[i] - r).abs() < 1e-13);
        }
        assert_eq!(grad.values()[0], 0.0);
        assert_eq!(grad.values()[32], 0.0);
    }

    #[test]
    fn discrete_poisson_solution_has_zero_gradient() {
        // Linear elements on a uniform grid reproduce the parabola at the nodes.
        let g = grid(257);
        let phi = GridFunction::from_fn(g, |x| 0.5 * x * (1.0 - x)).unwrap();
        let grad = energy_gradient(&phi, &classical(2.0), &Nonlinearity::affine(1.0)).unwrap();
        assert!(grad.max_abs() < 1e-8);
        let h = hat(phi.grid(), 100);
        let r = weak_residual(&phi, &h, &classical(2.0), &Nonlinearity::affine(1.0)).unwrap();
        assert!(r.abs() < 1e-3);
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let g = grid(25);
        let phi = GridFunction::from_fn(g.clone(), |x| (2.0 * x).sin() * (1.0 - x)).unwrap();
        let sp = SpaceParams::new(3.0, FractionalOrder::new(0.8, 0.3).unwrap()).unwrap();
        let e = Energy::new(sp, Nonlinearity::sine_perturbed(0.7, 0.2, 3.0).unwrap());
        let h = e.hessian(&phi).unwrap();
        let step = 1e-6;
        for j in [3, 12, 20] {
            let plus = phi.lin_comb(1.0, &hat(&g, j), step).unwrap();
            let minus = phi.lin_comb(1.0, &hat(&g, j), -step).unwrap();
            let gp = e.gradient(&plus).unwrap();
            let gm = e.gradient(&minus).unwrap();
            for i in 1..24 {
                let fd = (gp.values()[i] - gm.values()[i]) / (2.0 * step);
                assert!((h[(i, j)] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "({i},{j})");
            }
        }
    }

    #[test]
    fn regularized_flux_is_gradient_of_density() {
        let sp = SpaceParams::new(1.5, FractionalOrder::classical()).unwrap();
        let e = Energy::new(sp, Nonlinearity::zero()).with_regularization(1e-3);
        for &x in &[-0.7, 0.0, 1e-4, 2.0] {
            let h = 1e-7;
            let fd = (e.kinetic_density(x + h) - e.kinetic_density(x - h)) / (2.0 * h);
            assert!((e.flux(x) - fd).abs() < 1e-6);
        }
        let e0 = Energy::new(sp, Nonlinearity::zero());
        assert_eq!(e0.flux(0.0), 0.0);
    }
}
