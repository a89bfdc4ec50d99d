use log::info;
use psilap_core::eigen::{lambda_1, lambda_2_estimate};
use psilap_core::hypothesis::audit_theorem;
use psilap_core::Theorem;

use crate::config::{parse_hypothesis, RunConfig};
use crate::error::CliResult;
use crate::output::{num, Csv, Outputs, Report};

pub fn cmd_check(rc: &RunConfig, out: &Outputs, theorem: Option<Theorem>) -> CliResult<i32> {
    let hs = parse_hypothesis(rc)?;
    let theorem = theorem.or(hs.theorem).unwrap_or(Theorem::LowerBracket);
    let grid = rc.grid()?;
    let nl = rc.nonlinearity()?;
    hs.cfg.validate(&grid)?;

    let mut rep = Report::new();
    rep.put("command", "check");
    rep.put("label", &rc.label);
    rep.put("theorem", theorem.id());
    rep.put("nonlinearity", rc.nonlinearity.id());
    rep.put("l", hs.l);
    rep.num("epsilon", hs.cfg.epsilon);

    let lambdas = match hs.lambdas {
        Some(l) => {
            rep.put("lambdas.source", "config");
            l
        }
        None => {
            info!("computing the first two eigenvalues for the bracket");
            let first = lambda_1(&rc.sp, &grid, &rc.solver)?;
            let second = lambda_2_estimate(&rc.sp, &grid, &rc.solver, &first)?;
            rep.put("lambdas.source", "computed");
            (first.lambda, second.lambda)
        }
    };
    rep.num("lambda_l", lambdas.0);
    rep.num("lambda_next", lambdas.1);

    let audit = audit_theorem(&nl, &rc.sp, &grid, theorem, lambdas, &hs.cfg)?;
    let mut csv = Csv::new(&["xi", "asymptotic_estimate"]);
    for r in &audit.reports {
        let k = r.condition.id();
        rep.put(&format!("{k}.holds"), r.holds_on_samples);
        rep.num(&format!("{k}.worst_violation"), r.worst_violation);
        rep.num(&format!("{k}.relative_violation"), r.relative_violation);
        rep.num(&format!("{k}.witness_xi"), r.witness.0);
        rep.num(&format!("{k}.witness_t"), r.witness.1);
        for s in &r.sides {
            rep.put(&format!("{k}.{}.holds", s.name), s.holds);
            rep.num(&format!("{k}.{}.worst_violation", s.name), s.worst_violation);
        }
        if let Some(e) = r.asymptotic_estimate {
            rep.num(&format!("{k}.asymptotic_estimate"), e);
            for (&x, &v) in grid.nodes().iter().zip(&r.per_node_estimates) {
                csv.row(&[num(x), num(v)]);
            }
        }
        if !r.holds_on_samples {
            println!(
                "{k} fails: defect {} at witness xi = {}, t = {}",
                num(r.worst_violation),
                num(r.witness.0),
                num(r.witness.1)
            );
        }
    }
    rep.put("hypotheses_pass", audit.hypotheses_pass);
    rep.put("recommendation", &audit.recommendation);
    csv.write(&out.csv)?;
    rep.write(&out.report())?;
    println!("{}", audit.recommendation);
    Ok(if audit.hypotheses_pass { 0 } else { 1 })
}
