use std::f64::consts::PI;

use log::info;
use psilap_core::fractional_operators::frac_integral_left;
use psilap_core::solver::{default_init, find_critical_point};
use psilap_core::special::gamma;
use psilap_core::{Energy, FractionalOrder, GridFunction, Nonlinearity, SpaceParams};

use crate::config::RunConfig;
use crate::error::{config_err, CliResult};
use crate::output::{num, Csv, Outputs, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    /// Left integral of (ψ − ψ(0))^{δ−1} against its closed form.
    PowerRule,
    /// Classical p = 2 solve with manufactured solution sin(πs).
    ClassicalSolve,
    /// Configured problem against a fine-grid reference solve.
    SelfReference,
}

impl Case {
    fn parse(s: &str) -> CliResult<Self> {
        match s {
            "power_rule" => Ok(Self::PowerRule),
            "classical_solve" => Ok(Self::ClassicalSolve),
            "self_reference" => Ok(Self::SelfReference),
            _ => Err(config_err(format!(
                "`converge.case` must be power_rule | classical_solve | self_reference, got `{s}`"
            ))),
        }
    }

    fn id(&self) -> &'static str {
        match self {
            Self::PowerRule => "power_rule",
            Self::ClassicalSolve => "classical_solve",
            Self::SelfReference => "self_reference",
        }
    }

    fn default_target(&self) -> Option<f64> {
        match self {
            Self::PowerRule => Some(1.8),
            Self::ClassicalSolve => Some(1.5),
            Self::SelfReference => None,
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn power_rule_error(rc: &RunConfig, intervals: usize, delta: f64) -> CliResult<f64> {
    let grid = rc.grid_with(intervals + 1)?;
    let alpha = rc.sp.ord.alpha();
    let u0 = grid.psi_nodes()[0];
    let f = GridFunction::from_psi_fn(grid.clone(), |u| (u - u0).powf(delta - 1.0))?;
    let got = frac_integral_left(alpha, &f)?;
    let c = gamma(delta) / gamma(delta + alpha);
    let exact: Vec<f64> = grid
        .psi_nodes()
        .iter()
        .map(|&u| c * (u - u0).powf(delta + alpha - 1.0))
        .collect();
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(max_abs_diff(got.values(), &exact) / scale)
}

fn classical_solve_error(rc: &RunConfig, intervals: usize) -> CliResult<(f64, bool)> {
    let grid = rc.grid_with(intervals + 1)?;
    let u = grid.psi_nodes();
    let (u0, span) = (u[0], u[u.len() - 1] - u[0]);
    let map = grid.map().clone();
    let k = PI / span;
    let source = move |xi: f64| {
        let s = (map.eval(xi).unwrap_or(f64::NAN) - u0) / span;
        k * k * (PI * s).sin()
    };
    let src = source.clone();
    let nl = Nonlinearity::custom("manufactured", move |xi, _| source(xi))
        .with_primitive(move |xi, t| src(xi) * t)
        .with_df_dt(|_, _| 0.0);
    let sp = SpaceParams::new(2.0, FractionalOrder::classical())?;
    let r = find_critical_point(&Energy::new(sp, nl), &default_init(&grid), &rc.solver)?;
    let exact: Vec<f64> = u.iter().map(|&x| (PI * (x - u0) / span).sin()).collect();
    Ok((max_abs_diff(r.solution.values(), &exact), r.converged))
}

fn configured_solve(rc: &RunConfig, intervals: usize) -> CliResult<(GridFunction, bool)> {
    let grid = rc.grid_with(intervals + 1)?;
    let en = Energy::new(rc.sp, rc.nonlinearity()?);
    let r = find_critical_point(&en, &default_init(&grid), &rc.solver)?;
    Ok((r.solution, r.converged))
}

pub fn cmd_converge(rc: &RunConfig, out: &Outputs) -> CliResult<i32> {
    let raw = &rc.raw;
    let case = Case::parse(raw.str("converge.case").unwrap_or("power_rule"))?;
    let default_levels = match case {
        Case::SelfReference => vec![64, 128, 256],
        _ => vec![64, 128, 256, 512],
    };
    let levels = raw.usize_list("converge.levels")?.unwrap_or(default_levels);
    if levels.len() < 2 || levels.windows(2).any(|w| w[1] != 2 * w[0]) || levels[0] < 4 {
        return Err(config_err(
            "`converge.levels` needs at least two interval counts ≥ 4, each double the previous",
        ));
    }
    let target = raw.f64("converge.target_order")?.or(case.default_target());
    let delta = raw.f64_or("converge.delta", 2.5)?;
    if !(delta >= 1.0) {
        return Err(config_err("`converge.delta` must be ≥ 1"));
    }
    let reference = raw.usize_or("converge.reference", 512)?;
    if case == Case::SelfReference {
        let last = *levels.last().unwrap();
        if reference <= last || reference % last != 0 {
            return Err(config_err(
                "`converge.reference` must be a multiple of, and finer than, every level",
            ));
        }
        rc.sp.check_problem_order()?;
    }

    let mut errors = Vec::with_capacity(levels.len());
    let mut all_converged = true;
    match case {
        Case::PowerRule => {
            for &m in &levels {
                errors.push(power_rule_error(rc, m, delta)?);
            }
        }
        Case::ClassicalSolve => {
            for &m in &levels {
                let (e, ok) = classical_solve_error(rc, m)?;
                all_converged &= ok;
                errors.push(e);
            }
        }
        Case::SelfReference => {
            let (fine, ok) = configured_solve(rc, reference)?;
            all_converged &= ok;
            for &m in &levels {
                let (coarse, ok) = configured_solve(rc, m)?;
                all_converged &= ok;
                let stride = reference / m;
                let restricted: Vec<f64> = fine.values().iter().step_by(stride).copied().collect();
                errors.push(max_abs_diff(coarse.values(), &restricted));
            }
        }
    }

    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let final_order = *orders.last().unwrap();
    let order_ok = target.map_or(true, |t| final_order >= t);
    let pass = monotone && order_ok && all_converged;

    let mut csv = Csv::new(&["n", "h", "error", "p_obs"]);
    for (i, (&m, &e)) in levels.iter().zip(&errors).enumerate() {
        let p = if i == 0 { String::new() } else { num(orders[i - 1]) };
        csv.row(&[m.to_string(), num(rc.t_end / m as f64), num(e), p]);
    }
    csv.write(&out.csv)?;

    let mut rep = Report::new();
    rep.put("command", "converge");
    rep.put("label", &rc.label);
    rep.put("case", case.id());
    if case == Case::PowerRule {
        rep.num("delta", delta);
    }
    if case == Case::SelfReference {
        rep.put("reference_n", reference);
    }
    match target {
        Some(t) => rep.num("target_order", t),
        None => rep.put("target_order", "monotone"),
    }
    rep.num("p_obs", final_order);
    rep.num("p_obs_min", orders.iter().copied().fold(f64::INFINITY, f64::min));
    rep.num("final_error", *errors.last().unwrap());
    rep.put("monotone", monotone);
    rep.put("solves_converged", all_converged);
    rep.put("pass", pass);
    rep.write(&out.report())?;
    info!("converge {}: p_obs = {final_order}, pass = {pass}", case.id());
    Ok(if pass { 0 } else { 1 })
}
