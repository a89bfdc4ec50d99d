pub mod check;
pub mod converge;
pub mod eigen;
pub mod ibp;
pub mod solve;

use std::path::Path;

use psilap_core::fractional_operators::{integral_weights, Side};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::{num, Csv};

/// Left integral weights of order `problem.alpha` on the configured grid, long format.
pub fn dump_weights(rc: &RunConfig, path: &Path) -> CliResult<()> {
    let grid = rc.grid()?;
    let w = integral_weights(&grid, rc.sp.ord.alpha(), Side::Left)?;
    let mut csv = Csv::new(&["row", "col", "weight"]);
    for k in 0..w.n() {
        for (j, &v) in w.row(k).iter().enumerate() {
            csv.row(&[k.to_string(), j.to_string(), num(v)]);
        }
    }
    csv.write(path)
}
