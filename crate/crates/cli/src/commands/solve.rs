use log::info;
use psilap_core::solver::{self, default_init, find_critical_point, ps_diagnostics, random_init};
use psilap_core::{Energy, GridFunction, SolveReport};

use crate::config::{InitKind, RunConfig};
use crate::error::CliResult;
use crate::output::{Csv, Outputs, Report};

pub fn solution_csv(phi: &GridFunction) -> Csv {
    let grid = phi.grid();
    let mut csv = Csv::new(&["xi", "psi_xi", "phi"]);
    for ((&x, &u), &v) in grid.nodes().iter().zip(grid.psi_nodes()).zip(phi.values()) {
        csv.nums(&[x, u, v]);
    }
    csv
}

fn trace_csv(r: &SolveReport) -> Csv {
    let mut csv = Csv::new(&["iteration", "energy", "grad_norm", "rho", "theta_average", "pairing"]);
    for i in 0..r.energy_trace.len() {
        csv.nums(&[
            i as f64,
            r.energy_trace[i],
            r.grad_norm_trace[i],
            r.rho_trace[i],
            r.theta_trace[i],
            r.pairing_trace[i],
        ]);
    }
    csv
}

pub fn cmd_solve(rc: &RunConfig, out: &Outputs, multistart: Option<usize>) -> CliResult<i32> {
    rc.sp.check_problem_order()?;
    let grid = rc.grid()?;
    let en = Energy::new(rc.sp, rc.nonlinearity()?);
    let opts = &rc.solver;
    let mut rep = Report::new();
    rep.put("command", "solve");
    rep.put("label", &rc.label);
    rep.put("nonlinearity", rc.nonlinearity.id());
    rep.num("p", rc.sp.p);
    rep.num("alpha", rc.sp.ord.alpha());
    rep.num("beta", rc.sp.ord.beta());
    rep.put("n", grid.len());
    rep.put("seed", opts.seed);

    let best = match multistart {
        Some(k) if k > 0 => {
            info!("multistart with {k} random starts");
            let runs = solver::multistart(&en, &grid, opts, k)?;
            rep.put("multistart.k", k);
            for (i, r) in runs.iter().enumerate() {
                rep.put(&format!("multistart.{i}.converged"), r.converged);
                rep.num(&format!("multistart.{i}.critical_level_c"), r.critical_level_c);
                rep.num(&format!("multistart.{i}.final_grad_norm"), r.final_grad_norm());
            }
            // Converged runs first, then the smallest gradient; ties keep start order.
            let pick = (0..runs.len())
                .min_by(|&a, &b| {
                    let key = |r: &SolveReport| (!r.converged, r.final_grad_norm());
                    let (ka, kb) = (key(&runs[a]), key(&runs[b]));
                    ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
                })
                .unwrap_or(0);
            rep.put("multistart.selected", pick);
            runs.into_iter().nth(pick).unwrap()
        }
        _ => {
            let init = match rc.init {
                InitKind::Default => default_init(&grid).scaled(rc.init_amplitude),
                InitKind::Random => random_init(&grid, opts.seed, rc.init_amplitude),
            };
            find_critical_point(&en, &init, opts)?
        }
    };
    info!(
        "solve finished: {} iterations, |E'| = {:e}, converged = {}",
        best.iterations,
        best.final_grad_norm(),
        best.converged
    );

    solution_csv(&best.solution).write(&out.csv)?;
    trace_csv(&best).write(&out.sibling("trace"))?;

    let ps = ps_diagnostics(&best, rc.sp.p, opts.grad_tol);
    rep.put("iterations", best.iterations);
    rep.put("newton_steps", best.newton_steps);
    rep.put("converged", best.converged);
    rep.put("stalled", best.stalled);
    rep.num("critical_level_c", best.critical_level_c);
    rep.num("final_grad_norm", best.final_grad_norm());
    rep.num("max_abs_phi", best.solution.max_abs());
    rep.put("singular_cells", best.singular_cells);
    rep.put("ps.grad_below_tol", ps.grad_below_tol);
    rep.put("ps.energy_settled", ps.energy_settled);
    rep.put("ps.theta_trends_to_zero", ps.theta_trends_to_zero);
    if let (Some(a), Some(b)) = (ps.pairing_over_p.last(), ps.pairing_over_p2.last()) {
        rep.num("ps.final_pairing_over_p", *a);
        rep.num("ps.final_pairing_over_p2", *b);
    }
    rep.write(&out.report())?;
    Ok(if best.converged { 0 } else { 1 })
}
