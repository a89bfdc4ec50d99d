use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::coordinate_map::Grid;
use crate::error::{param, Error, Result};
use crate::grid_function::GridFunction;
use crate::special::gamma;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

/// Dense product-trapezoid weights: `(I f)(u_k) = Σ_j w[k][j] f_j`.
#[derive(Debug, Clone)]
pub struct IntegralWeights {
    n: usize,
    data: Vec<f64>,
}

impl IntegralWeights {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.n);
        (0..self.n)
            .map(|k| self.row(k).iter().zip(f).map(|(w, v)| w * v).sum())
            .collect()
    }
}

type CacheKey = (u64, u64, Side);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<IntegralWeights>>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<IntegralWeights>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

const CACHE_LIMIT: usize = 256;

/// Weights of the order-`alpha` integral on `grid`, cached per (grid, α, side).
pub fn integral_weights(grid: &Grid, alpha: f64, side: Side) -> Result<Arc<IntegralWeights>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(param("alpha", format!("integral order must be positive, got {alpha}")));
    }
    let key = (grid.fingerprint(), alpha.to_bits(), side);
    if let Some(w) = cache().lock().unwrap().get(&key) {
        if w.n == grid.len() {
            return Ok(w.clone());
        }
    }
    let w = Arc::new(match side {
        Side::Left => left_weights(grid.psi_nodes(), alpha)?,
        Side::Right => right_weights(grid.psi_nodes(), alpha)?,
    });
    let mut map = cache().lock().unwrap();
    if map.len() >= CACHE_LIMIT {
        map.clear();
    }
    map.insert(key, w.clone());
    Ok(w)
}

fn left_weights(u: &[f64], alpha: f64) -> Result<IntegralWeights> {
    let n = u.len();
    let g = gamma(alpha);
    if !g.is_finite() || g == 0.0 {
        return Err(Error::Numeric(format!("Γ({alpha}) is not finite")));
    }
    let c = 1.0 / g;
    let mut data = vec![0.0; n * n];
    for k in 1..n {
        let row = &mut data[k * n..(k + 1) * n];
        let uk = u[k];
        for j in 0..k {
            // ∫ (U − s)^{α−1} × hat functions over [u_j, u_{j+1}], τ = U − s ∈ [B, A]
            let a = uk - u[j];
            let b = uk - u[j + 1];
            let h = u[j + 1] - u[j];
            let aa = a.powf(alpha);
            let ba = if b > 0.0 { b.powf(alpha) } else { 0.0 };
            let m1 = (a * aa - b * ba) / (alpha + 1.0);
            let m0 = (aa - ba) / alpha;
            row[j] += c * (m1 - b * m0) / h;
            row[j + 1] += c * (a * m0 - m1) / h;
        }
    }
    Ok(IntegralWeights { n, data })
}

// Right integral at u_k is the left integral of the reflected data on the
// reflected grid v_i = u_{n−1} − u_{n−1−i}.
fn right_weights(u: &[f64], alpha: f64) -> Result<IntegralWeights> {
    let n = u.len();
    let last = u[n - 1];
    let v: Vec<f64> = (0..n).map(|i| last - u[n - 1 - i]).collect();
    let lw = left_weights(&v, alpha)?;
    let mut data = vec![0.0; n * n];
    for k in 0..n {
        for j in 0..n {
            data[k * n + j] = lw.data[(n - 1 - k) * n + (n - 1 - j)];
        }
    }
    Ok(IntegralWeights { n, data })
}

pub(crate) fn integral(alpha: f64, f: &GridFunction, side: Side) -> Result<GridFunction> {
    let w = integral_weights(f.grid(), alpha, side)?;
    GridFunction::new(f.grid().clone(), w.apply(f.values()))
}

/// Left ψ-Riemann–Liouville integral of order `alpha` from ξ = 0.
///
/// Exact for data that is piecewise linear in ψ.
pub fn frac_integral_left(alpha: f64, f: &GridFunction) -> Result<GridFunction> {
    integral(alpha, f, Side::Left)
}

/// Right ψ-Riemann–Liouville integral of order `alpha` up to ξ = T.
pub fn frac_integral_right(alpha: f64, f: &GridFunction) -> Result<GridFunction> {
    integral(alpha, f, Side::Right)
}
