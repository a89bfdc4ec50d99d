use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use super::FractionalOrder;
use crate::coordinate_map::Grid;
use crate::error::{Error, Result};
use crate::special::gamma;

/// Linear map from nodal values to the left Hilfer derivative of their
/// ψ-interpolant at the ψ-midpoints of the n − 1 cells.
///
/// For α = 1 this is the slope in each cell, i.e. linear finite elements.
#[derive(Debug, Clone)]
pub enum KineticOperator {
    Slopes { inv_h: Vec<f64> },
    Dense { rows: usize, cols: usize, data: Vec<f64> },
}

type Key = (u64, u64, u64);

fn cache() -> &'static Mutex<HashMap<Key, Arc<KineticOperator>>> {
    static CACHE: OnceLock<Mutex<HashMap<Key, Arc<KineticOperator>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl KineticOperator {
    pub fn new(grid: &Grid, ord: &FractionalOrder) -> Result<Arc<Self>> {
        let key = (
            grid.fingerprint(),
            ord.alpha().to_bits(),
            ord.beta().to_bits(),
        );
        if let Some(k) = cache().lock().unwrap().get(&key) {
            if k.cols() == grid.len() {
                return Ok(k.clone());
            }
        }
        let k = Arc::new(Self::build(grid, ord)?);
        let mut map = cache().lock().unwrap();
        if map.len() >= 128 {
            map.clear();
        }
        map.insert(key, k.clone());
        Ok(k)
    }

    fn build(grid: &Grid, ord: &FractionalOrder) -> Result<Self> {
        let u = grid.psi_nodes();
        let n = u.len();
        let inv_h: Vec<f64> = u.windows(2).map(|w| 1.0 / (w[1] - w[0])).collect();
        if ord.is_classical() {
            return Ok(Self::Slopes { inv_h });
        }
        let alpha = ord.alpha();
        let e = 1.0 - alpha;
        let c_int = 1.0 / gamma(2.0 - alpha);
        let c_tail = 1.0 / gamma(1.0 - alpha);
        if !c_int.is_finite() || !c_tail.is_finite() {
            return Err(Error::Numeric(format!("Γ ratio not finite for α = {alpha}")));
        }
        let rows = n - 1;
        let mut data = vec![0.0; rows * n];
        for c in 0..rows {
            let m = 0.5 * (u[c] + u[c + 1]);
            let row = &mut data[c * n..(c + 1) * n];
            // slope s_j = (φ_{j+1} − φ_j)/h_j contributes coef_j
            for j in 0..=c {
                let coef = if j < c {
                    (m - u[j]).powf(e) - (m - u[j + 1]).powf(e)
                } else {
                    (m - u[c]).powf(e)
                } * c_int
                    * inv_h[j];
                row[j] -= coef;
                row[j + 1] += coef;
            }
            if ord.gamma1() > 0.0 {
                row[0] += (m - u[0]).powf(-alpha) * c_tail;
            }
        }
        Ok(Self::Dense {
            rows,
            cols: n,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        match self {
            Self::Slopes { inv_h } => inv_h.len(),
            Self::Dense { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        self.rows() + 1
    }

    /// Derivative values at cell midpoints.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        match self {
            Self::Slopes { inv_h } => inv_h
                .iter()
                .enumerate()
                .map(|(c, ih)| (phi[c + 1] - phi[c]) * ih)
                .collect(),
            Self::Dense { rows, cols, data } => (0..*rows)
                .map(|c| {
                    data[c * cols..(c + 1) * cols]
                        .iter()
                        .zip(phi)
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect(),
        }
    }

    /// Kᵀ y for a cell vector `y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Self::Slopes { inv_h } => {
                let mut out = vec![0.0; inv_h.len() + 1];
                for (c, ih) in inv_h.iter().enumerate() {
                    out[c] -= y[c] * ih;
                    out[c + 1] += y[c] * ih;
                }
                out
            }
            Self::Dense { rows, cols, data } => {
                let mut out = vec![0.0; *cols];
                for c in 0..*rows {
                    let yc = y[c];
                    if yc == 0.0 {
                        continue;
                    }
                    for (o, a) in out.iter_mut().zip(&data[c * cols..(c + 1) * cols]) {
                        *o += a * yc;
                    }
                }
                out
            }
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Self::Slopes { inv_h } => {
                let mut m = DMatrix::zeros(inv_h.len(), inv_h.len() + 1);
                for (c, ih) in inv_h.iter().enumerate() {
                    m[(c, c)] = -ih;
                    m[(c, c + 1)] = *ih;
                }
                m
            }
            Self::Dense { rows, cols, data } => DMatrix::from_row_slice(*rows, *cols, data),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinate_map::{PsiMap, SpacingRule};

    #[test]
    fn classical_is_slopes() {
        let g = Grid::build(1.0, 5, PsiMap::identity(), SpacingRule::UniformInXi).unwrap();
        let k = KineticOperator::new(&g, &FractionalOrder::classical()).unwrap();
        assert_eq!(k.apply(&[0.0, 1.0, 1.0, 3.0, 0.0]), vec![4.0, 0.0, 8.0, -12.0]);
    }

    #[test]
    fn dense_matches_closed_form_for_linear_data() {
        // φ = u gives D φ = u^{1−α}/Γ(2−α) exactly for every β.
        let g = Grid::build(1.0, 21, PsiMap::identity(), SpacingRule::UniformInXi).unwrap();
        let ord = FractionalOrder::new(0.65, 0.3).unwrap();
        let k = KineticOperator::new(&g, &ord).unwrap();
        let d = k.apply(g.psi_nodes());
        for (c, v) in d.iter().enumerate() {
            let m = (c as f64 + 0.5) / 20.0;
            assert!((v - m.powf(0.35) / gamma(1.35)).abs() < 1e-13);
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = Grid::build(1.0, 17, PsiMap::power(1.5).unwrap(), SpacingRule::UniformInXi)
            .unwrap();
        let k = KineticOperator::new(&g, &FractionalOrder::new(0.8, 0.6).unwrap()).unwrap();
        let x: Vec<f64> = (0..17).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3).cos()).collect();
        let lhs: f64 = k.apply(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = k.apply_transpose(&y).iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        let m = k.to_matrix();
        let mx = &m * nalgebra::DVector::from_vec(x.clone());
        for (a, b) in mx.iter().zip(k.apply(&x)) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
