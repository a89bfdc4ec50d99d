use std::sync::Arc;

use crate::coordinate_map::Grid;
use crate::error::{Error, Result};

/// Nodal values of a function on a [`Grid`].
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    /// Wrap nodal values; the length must match the grid and all values be finite.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite value {} at node {i}",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Sample `f` at the physical nodes ξᵢ.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    /// Sample `f` at the ψ-images uᵢ = ψ(ξᵢ).
    pub fn from_psi_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.psi_nodes().iter().map(|&u| f(u)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Same grid, new values (unchecked length is a logic error).
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &GridFunction, b: f64) -> Result<Self> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(self.with_values(values))
    }

    pub fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinate_map::{PsiMap, SpacingRule};

    fn grid(n: usize) -> Arc<Grid> {
        Grid::build(1.0, n, PsiMap::identity(), SpacingRule::UniformInXi).unwrap()
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(
            GridFunction::new(grid(5), vec![0.0; 4]),
            Err(Error::GridMismatch)
        ));
        assert!(GridFunction::new(grid(3), vec![0.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn mismatched_grids() {
        let a = GridFunction::zeros(grid(5));
        let b = GridFunction::zeros(grid(7));
        assert!(a.lin_comb(1.0, &b, 1.0).is_err());
        let c = GridFunction::zeros(grid(5));
        assert!(a.lin_comb(1.0, &c, 1.0).is_ok());
    }
}
