//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use psilap_core::{FractionalOrder, Grid, GridFunction, Nonlinearity, PsiMap, SpaceParams, SpacingRule};

pub fn grid(n: usize) -> Arc<Grid> {
    Grid::build(1.0, n, PsiMap::power(2.0).unwrap(), SpacingRule::UniformInPsi).unwrap()
}

/// A smooth function vanishing at both ends.
pub fn bump(g: &Arc<Grid>) -> GridFunction {
    GridFunction::from_fn(g.clone(), |x| (std::f64::consts::PI * x).sin() * (1.0 + x)).unwrap()
}

pub fn problem(p: f64) -> (SpaceParams, Nonlinearity) {
    let sp = SpaceParams::new(p, FractionalOrder::new(0.75, 0.5).unwrap()).unwrap();
    (sp, Nonlinearity::sine_perturbed(1.0, 1.0, p).unwrap())
}
