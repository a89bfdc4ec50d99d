use super::weights::{integral, Side};
use super::FractionalOrder;
use crate::error::{Error, Result};
use crate::grid_function::GridFunction;
use crate::special::gamma;

/// Derivative stencils need at least this many nodes.
pub const MIN_DERIVATIVE_NODES: usize = 5;

/// How the integral–derivative–integral composition is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeScheme {
    /// Exact composition applied to the ψ-piecewise-linear interpolant of the data.
    #[default]
    Interpolant,
    /// Product-trapezoid integrals around a three-point d/dψ difference.
    Composed,
}

/// Nodal derivative values plus the indices of nodes whose value was
/// extrapolated because the operator is singular there.
#[derive(Debug, Clone)]
pub struct DerivativeOutput {
    pub values: GridFunction,
    pub extrapolated: Vec<usize>,
}

// Which integral sits inside d/dψ.
#[derive(Clone, Copy)]
enum Inner {
    Gamma1,
    Gamma2,
}

fn check_nodes(f: &GridFunction) -> Result<()> {
    if f.len() < MIN_DERIVATIVE_NODES {
        return Err(Error::GridTooCoarse {
            needed: MIN_DERIVATIVE_NODES,
            got: f.len(),
        });
    }
    Ok(())
}

/// Left ψ-Hilfer derivative I^{β(1−α)} d/dψ I^{(1−β)(1−α)} f.
pub fn hilfer_deriv_left(ord: &FractionalOrder, f: &GridFunction) -> Result<DerivativeOutput> {
    hilfer_deriv_left_with(ord, f, DerivativeScheme::Interpolant)
}

pub fn hilfer_deriv_left_with(
    ord: &FractionalOrder,
    f: &GridFunction,
    scheme: DerivativeScheme,
) -> Result<DerivativeOutput> {
    derivative(ord, f, Side::Left, Inner::Gamma1, scheme)
}

/// Right ψ-Hilfer derivative I_T^{β(1−α)} (−d/dψ) I_T^{(1−β)(1−α)} f.
pub fn hilfer_deriv_right(ord: &FractionalOrder, f: &GridFunction) -> Result<DerivativeOutput> {
    hilfer_deriv_right_with(ord, f, DerivativeScheme::Interpolant)
}

pub fn hilfer_deriv_right_with(
    ord: &FractionalOrder,
    f: &GridFunction,
    scheme: DerivativeScheme,
) -> Result<DerivativeOutput> {
    derivative(ord, f, Side::Right, Inner::Gamma1, scheme)
}

/// Right derivative with the two integrals commuted:
/// I_T^{(1−β)(1−α)} (−d/dψ) I_T^{β(1−α)} g.
pub fn caputo_hilfer_right(ord: &FractionalOrder, g: &GridFunction) -> Result<DerivativeOutput> {
    caputo_hilfer_right_with(ord, g, DerivativeScheme::Interpolant)
}

pub fn caputo_hilfer_right_with(
    ord: &FractionalOrder,
    g: &GridFunction,
    scheme: DerivativeScheme,
) -> Result<DerivativeOutput> {
    derivative(ord, g, Side::Right, Inner::Gamma2, scheme)
}

fn derivative(
    ord: &FractionalOrder,
    f: &GridFunction,
    side: Side,
    inner: Inner,
    scheme: DerivativeScheme,
) -> Result<DerivativeOutput> {
    check_nodes(f)?;
    let sign = match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };
    if ord.is_classical() {
        let d = psi_derivative(f.grid().psi_nodes(), f.values());
        let values = d.into_iter().map(|v| sign * v).collect();
        return Ok(DerivativeOutput {
            values: GridFunction::new(f.grid().clone(), values)?,
            extrapolated: Vec::new(),
        });
    }
    let (g_in, g_out) = match inner {
        Inner::Gamma1 => (ord.gamma1(), ord.gamma2()),
        Inner::Gamma2 => (ord.gamma2(), ord.gamma1()),
    };
    let n = f.len();
    let end = match side {
        Side::Left => 0,
        Side::Right => n - 1,
    };
    // The boundary value propagates through a singular (distance)^{−α} term
    // unless the inner integral is the identity.
    let singular = g_in > 0.0 && f.values()[end] != 0.0;
    let mut values = match scheme {
        DerivativeScheme::Interpolant => interpolant(ord.alpha(), f, side, g_in > 0.0)?,
        DerivativeScheme::Composed => composed(f, side, g_in, g_out)?,
    };
    let mut extrapolated = Vec::new();
    if singular {
        let u = f.grid().psi_nodes();
        let (a, b) = match side {
            Side::Left => (1, 2),
            Side::Right => (n - 2, n - 3),
        };
        let slope = (values[a] - values[b]) / (u[a] - u[b]);
        values[end] = values[a] + slope * (u[end] - u[a]);
        extrapolated.push(end);
    }
    Ok(DerivativeOutput {
        values: GridFunction::new(f.grid().clone(), values)?,
        extrapolated,
    })
}

// D f_h = [inner ≠ 0] f(end) d^{−α}/Γ(1−α) ± I^{1−α}[f_h′] with d the ψ-distance to `end`.
fn interpolant(alpha: f64, f: &GridFunction, side: Side, boundary_term: bool) -> Result<Vec<f64>> {
    let u = f.grid().psi_nodes();
    let v = f.values();
    let n = u.len();
    let slopes: Vec<f64> = (0..n - 1)
        .map(|j| (v[j + 1] - v[j]) / (u[j + 1] - u[j]))
        .collect();
    let e = 1.0 - alpha;
    let c_tail = 1.0 / gamma(1.0 - alpha);
    let c_int = 1.0 / gamma(2.0 - alpha);
    if !c_tail.is_finite() || !c_int.is_finite() {
        return Err(Error::Numeric(format!("Γ ratio not finite for α = {alpha}")));
    }
    let mut out = vec![0.0; n];
    match side {
        Side::Left => {
            for k in 1..n {
                let uk = u[k];
                let mut acc = 0.0;
                for j in 0..k {
                    acc += slopes[j] * ((uk - u[j]).powf(e) - (uk - u[j + 1]).powf(e));
                }
                out[k] = c_int * acc;
                if boundary_term {
                    out[k] += v[0] * (uk - u[0]).powf(-alpha) * c_tail;
                }
            }
        }
        Side::Right => {
            for k in 0..n - 1 {
                let uk = u[k];
                let mut acc = 0.0;
                for j in k..n - 1 {
                    acc += slopes[j] * ((u[j + 1] - uk).powf(e) - (u[j] - uk).powf(e));
                }
                out[k] = -c_int * acc;
                if boundary_term {
                    out[k] += v[n - 1] * (u[n - 1] - uk).powf(-alpha) * c_tail;
                }
            }
        }
    }
    Ok(out)
}

fn composed(f: &GridFunction, side: Side, g_in: f64, g_out: f64) -> Result<Vec<f64>> {
    let inner = if g_in > 0.0 {
        integral(g_in, f, side)?
    } else {
        f.clone()
    };
    let sign = match side {
        Side::Left => 1.0,
        Side::Right => -1.0,
    };
    let d: Vec<f64> = psi_derivative(f.grid().psi_nodes(), inner.values())
        .into_iter()
        .map(|x| sign * x)
        .collect();
    // The differenced intermediate may blow up at the singular end; clamp to
    // finite so the outer quadrature can proceed.
    let d: Vec<f64> = d.into_iter().map(|x| if x.is_finite() { x } else { 0.0 }).collect();
    if g_out > 0.0 {
        let dg = f.with_values(d);
        Ok(integral(g_out, &dg, side)?.into_values())
    } else {
        Ok(d)
    }
}

/// Second-order d/dψ on a non-uniform ψ grid: centred inside, one-sided at the ends.
pub fn psi_derivative(u: &[f64], v: &[f64]) -> Vec<f64> {
    let n = u.len();
    assert!(n >= 3 && v.len() == n);
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h1 = u[i] - u[i - 1];
        let h2 = u[i + 1] - u[i];
        d[i] = -h2 / (h1 * (h1 + h2)) * v[i - 1]
            + (h2 - h1) / (h1 * h2) * v[i]
            + h1 / (h2 * (h1 + h2)) * v[i + 1];
    }
    let (h1, h2) = (u[1] - u[0], u[2] - u[1]);
    d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * v[0] + (h1 + h2) / (h1 * h2) * v[1]
        - h1 / (h2 * (h1 + h2)) * v[2];
    let (h1, h2) = (u[n - 1] - u[n - 2], u[n - 2] - u[n - 3]);
    d[n - 1] = (2.0 * h1 + h2) / (h1 * (h1 + h2)) * v[n - 1] - (h1 + h2) / (h1 * h2) * v[n - 2]
        + h1 / (h2 * (h1 + h2)) * v[n - 3];
    d
}
