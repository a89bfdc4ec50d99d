use std::sync::Arc;

use log::info;
use psilap_core::eigen::{lambda_1, lambda_2_estimate};
use psilap_core::{EigenEstimate, FractionalOrder, Grid, SolveOptions, SpaceParams};
use rayon::prelude::*;

use crate::commands::solve::solution_csv;
use crate::config::RunConfig;
use crate::error::{config_err, CliResult};
use crate::output::{Csv, Outputs, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Beta,
    P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Sweep {
    /// `name=start:stop:step`, stop included when hit up to rounding.
    pub fn parse(s: &str) -> CliResult<Self> {
        let bad = || config_err(format!("--sweep expects name=start:stop:step, got `{s}`"));
        let (name, range) = s.split_once('=').ok_or_else(bad)?;
        let param = match name.trim() {
            "alpha" => SweepParam::Alpha,
            "beta" => SweepParam::Beta,
            "p" => SweepParam::P,
            other => return Err(config_err(format!("--sweep: unknown parameter `{other}`"))),
        };
        let parts: Vec<f64> = range
            .split(':')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<CliResult<_>>()?;
        let [a, b, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0 && b >= a && a.is_finite() && b.is_finite()) {
            return Err(bad());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        if count > 10_000 {
            return Err(config_err("--sweep: too many points"));
        }
        let values = (0..count).map(|i| a + i as f64 * step).collect();
        Ok(Self { param, values })
    }

    fn space(&self, base: &SpaceParams, v: f64) -> CliResult<SpaceParams> {
        let (mut a, mut b, mut p) = (base.ord.alpha(), base.ord.beta(), base.p);
        match self.param {
            SweepParam::Alpha => a = v,
            SweepParam::Beta => b = v,
            SweepParam::P => p = v,
        }
        let sp = SpaceParams::new(p, FractionalOrder::new(a, b)?)?;
        sp.check_problem_order()?;
        Ok(sp)
    }

    fn name(&self) -> &'static str {
        match self.param {
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::P => "p",
        }
    }
}

fn estimate(sp: &SpaceParams, grid: &Arc<Grid>, opts: &SolveOptions, level: usize) -> CliResult<Vec<EigenEstimate>> {
    let first = lambda_1(sp, grid, opts)?;
    if level == 1 {
        return Ok(vec![first]);
    }
    let second = lambda_2_estimate(sp, grid, opts, &first)?;
    Ok(vec![first, second])
}

pub fn cmd_eigen(rc: &RunConfig, out: &Outputs, level: usize, sweep: Option<&Sweep>) -> CliResult<i32> {
    if !(level == 1 || level == 2) {
        return Err(config_err(format!("--level {level} is not supported (use 1 or 2)")));
    }
    let grid = rc.grid()?;
    let opts = &rc.solver;
    let mut rep = Report::new();
    rep.put("command", "eigen");
    rep.put("label", &rc.label);
    rep.put("level", level);
    rep.put("n", grid.len());
    rep.num("T", rc.t_end);

    let Some(sweep) = sweep else {
        rc.sp.check_problem_order()?;
        rep.num("p", rc.sp.p);
        rep.num("alpha", rc.sp.ord.alpha());
        rep.num("beta", rc.sp.ord.beta());
        let est = estimate(&rc.sp, &grid, opts, level)?;
        let e = est.last().unwrap();
        info!("lambda_{level} = {} (residual {:e})", e.lambda, e.residual);
        solution_csv(&e.eigenfunction).write(&out.csv)?;
        if level == 2 {
            rep.num("lambda_1", est[0].lambda);
            rep.put("lambda_1.converged", est[0].converged);
        }
        rep.num("lambda", e.lambda);
        rep.num("residual", e.residual);
        rep.put("converged", e.converged);
        rep.put("upper_bound", e.upper_bound);
        rep.put("sign_changes", e.sign_changes);
        rep.put("iterations", e.iterations);
        rep.write(&out.report())?;
        return Ok(if est.iter().all(|e| e.converged) { 0 } else { 1 });
    };

    // Every tuple is validated before anything runs.
    let spaces: Vec<SpaceParams> = sweep
        .values
        .iter()
        .map(|&v| sweep.space(&rc.sp, v))
        .collect::<CliResult<_>>()?;
    let results: Vec<CliResult<EigenEstimate>> = spaces
        .par_iter()
        .map(|sp| Ok(estimate(sp, &grid, opts, level)?.pop().unwrap()))
        .collect();
    let mut csv = Csv::new(&["alpha", "beta", "p", "lambda", "residual", "converged"]);
    let mut lambdas = Vec::with_capacity(spaces.len());
    let mut all_converged = true;
    for (sp, r) in spaces.iter().zip(results) {
        let e = r?;
        all_converged &= e.converged;
        lambdas.push(e.lambda);
        csv.row(&[
            crate::output::num(sp.ord.alpha()),
            crate::output::num(sp.ord.beta()),
            crate::output::num(sp.p),
            crate::output::num(e.lambda),
            crate::output::num(e.residual),
            e.converged.to_string(),
        ]);
    }
    csv.write(&out.csv)?;
    let increasing = lambdas.windows(2).all(|w| w[1] >= w[0]);
    let decreasing = lambdas.windows(2).all(|w| w[1] <= w[0]);
    rep.put("sweep.param", sweep.name());
    rep.put("sweep.points", lambdas.len());
    rep.put("sweep.all_converged", all_converged);
    rep.put(
        "sweep.monotone",
        if increasing {
            "increasing"
        } else if decreasing {
            "decreasing"
        } else {
            "no"
        },
    );
    rep.write(&out.report())?;
    Ok(if all_converged { 0 } else { 1 })
}
