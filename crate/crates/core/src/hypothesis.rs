//! Sampled audits of the bracket and Θ-growth hypotheses on a nonlinearity.
//!
//! Every inequality is evaluated on (grid node × t sample) lattices. A pass
//! means "consistent on the samples"; a fail always carries a witness (ξ, t)
//! at which re-evaluating the defect reproduces it.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::coordinate_map::Grid;
use crate::error::{param, Error, Result};
use crate::function_spaces::SpaceParams;
use crate::nonlinearity::Nonlinearity;

/// Relative slack for "holds": defect ≤ SLACK · (size of the compared terms).
pub const SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// (λ_l + ε)|t|^p − V ≤ F ≤ λ_{l+1}|t|^p + V
    BracketLower,
    /// Θ ≤ C(|t| + 1) and limsup Θ/|t| < 0
    ThetaNegative,
    /// λ_l|t|^p − V ≤ F ≤ (λ_{l+1} − ε)|t|^p + V
    BracketUpper,
    /// Θ ≥ −C(|t| + 1) and liminf Θ/|t| > 0
    ThetaPositive,
}

impl Condition {
    pub fn id(&self) -> &'static str {
        match self {
            Self::BracketLower => "bracket_lower",
            Self::ThetaNegative => "theta_negative",
            Self::BracketUpper => "bracket_upper",
            Self::ThetaPositive => "theta_positive",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    /// Bracket with ε on the lower coefficient plus negative Θ.
    LowerBracket,
    /// Bracket with ε on the upper coefficient plus positive Θ.
    UpperBracket,
}

impl Theorem {
    pub fn id(&self) -> &'static str {
        match self {
            Self::LowerBracket => "1.2",
            Self::UpperBracket => "1.3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "1.2" | "lower" => Some(Self::LowerBracket),
            "1.3" | "upper" => Some(Self::UpperBracket),
            _ => None,
        }
    }
}

pub type PotentialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct HypothesisConfig {
    pub l: usize,
    pub epsilon: f64,
    /// The nonnegative function V(ξ).
    pub v: PotentialFn,
    pub growth_constant: f64,
    pub t_max: f64,
    pub t_samples: usize,
    /// Geometric window [t_lo, t_hi] for the asymptotic estimates.
    pub window: (f64, f64),
    pub per_decade: usize,
}

impl fmt::Debug for HypothesisConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HypothesisConfig")
            .field("l", &self.l)
            .field("epsilon", &self.epsilon)
            .field("growth_constant", &self.growth_constant)
            .field("t_max", &self.t_max)
            .field("t_samples", &self.t_samples)
            .field("window", &self.window)
            .field("per_decade", &self.per_decade)
            .finish()
    }
}

impl HypothesisConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            l: 1,
            epsilon,
            v: Arc::new(|_| 0.0),
            growth_constant: 1.0,
            t_max: 1e3,
            t_samples: 2001,
            window: (1e2, 1e6),
            per_decade: 25,
        }
    }

    pub fn with_v(mut self, v: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.v = Arc::new(v);
        self
    }

    pub fn with_constant_v(self, c: f64) -> Self {
        self.with_v(move |_| c)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(param("hypothesis.epsilon", "must be positive"));
        }
        if !(self.growth_constant > 0.0 && self.growth_constant.is_finite()) {
            return Err(param("hypothesis.C", "must be positive"));
        }
        let (lo, hi) = self.window;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(param("hypothesis.window", "need 0 < t_lo < t_hi"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(param("hypothesis.t_max", "must be positive"));
        }
        if self.t_samples < 2 || self.per_decade == 0 {
            return Err(param("hypothesis.t_samples", "need at least 2 samples"));
        }
        let mut integral = 0.0;
        for (&w, &x) in grid.trapezoid_weights().iter().zip(grid.nodes()) {
            let v = (self.v)(x);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(param("hypothesis.V", format!("V({x}) = {v} is not finite and nonnegative")));
            }
            integral += w * v;
        }
        if !integral.is_finite() {
            return Err(param("hypothesis.V", "∫ψ′V is not finite"));
        }
        Ok(())
    }

    /// Uniform samples of [−t_max, t_max].
    pub fn uniform_samples(&self) -> Vec<f64> {
        let k = self.t_samples;
        (0..k)
            .map(|i| -self.t_max + 2.0 * self.t_max * i as f64 / (k - 1) as f64)
            .collect()
    }

    /// Geometric samples of the window, both signs.
    pub fn window_samples(&self) -> Vec<f64> {
        let (lo, hi) = self.window;
        let decades = (hi / lo).log10();
        let k = ((decades * self.per_decade as f64).ceil() as usize).max(1);
        let mut out = Vec::with_capacity(2 * (k + 1));
        for i in 0..=k {
            let t = lo * (hi / lo).powf(i as f64 / k as f64);
            out.push(t);
            out.push(-t);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SideReport {
    pub name: &'static str,
    pub worst_violation: f64,
    pub witness: (f64, f64),
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub condition: Condition,
    pub holds_on_samples: bool,
    /// Largest signed defect over the samples (≤ 0 means satisfied).
    pub worst_violation: f64,
    /// The same defect divided by the size of the compared terms.
    pub relative_violation: f64,
    pub witness: (f64, f64),
    pub sides: Vec<SideReport>,
    /// Aggregated limsup (Θ negative) or liminf (Θ positive) of Θ/|t|.
    pub asymptotic_estimate: Option<f64>,
    pub per_node_estimates: Vec<f64>,
    pub asymptotic_witness: Option<(f64, f64)>,
}

#[derive(Clone, Copy)]
struct Worst {
    defect: f64,
    rel: f64,
    witness: (f64, f64),
    holds: bool,
}

impl Worst {
    fn empty() -> Self {
        Self {
            defect: f64::NEG_INFINITY,
            rel: f64::NEG_INFINITY,
            witness: (f64::NAN, f64::NAN),
            holds: true,
        }
    }

    fn merge(self, o: Worst) -> Worst {
        let mut w = if o.defect > self.defect { o } else { self };
        w.holds = self.holds && o.holds;
        w.rel = self.rel.max(o.rel);
        w
    }
}

// Sample `defect(ξ, t) -> (defect, scale)` over nodes × ts; ξ-parallel, merged in node order.
fn sweep<D>(grid: &Grid, ts: &[f64], defect: D) -> Result<Worst>
where
    D: Fn(f64, f64) -> Result<(f64, f64)> + Sync,
{
    let per_node: Vec<Result<Worst>> = grid
        .nodes()
        .par_iter()
        .map(|&x| {
            let mut w = Worst::empty();
            for &t in ts {
                let (d, scale) = defect(x, t)?;
                if !d.is_finite() {
                    return Err(Error::Numeric(format!("non-finite defect at ξ = {x}, t = {t}")));
                }
                let scale = scale.max(1.0);
                let cell = Worst {
                    defect: d,
                    rel: d / scale,
                    witness: (x, t),
                    holds: d <= SLACK * scale,
                };
                w = w.merge(cell);
            }
            Ok(w)
        })
        .collect();
    let mut w = Worst::empty();
    for r in per_node {
        w = w.merge(r?);
    }
    Ok(w)
}

fn primitive_checked(nl: &Nonlinearity, x: f64, t: f64) -> Result<f64> {
    let f = nl.primitive(x, t)?;
    if !f.is_finite() {
        return Err(Error::Numeric(format!("F({x}, {t}) is not finite")));
    }
    Ok(f)
}

fn bracket(
    nl: &Nonlinearity,
    grid: &Grid,
    p: f64,
    lo_coef: f64,
    hi_coef: f64,
    cfg: &HypothesisConfig,
    condition: Condition,
) -> Result<HypothesisReport> {
    cfg.validate(grid)?;
    let ts = cfg.uniform_samples();
    let v = &cfg.v;
    let lower = sweep(grid, &ts, |x, t| {
        let f = primitive_checked(nl, x, t)?;
        let a = lo_coef * t.abs().powf(p);
        let vx = v(x);
        Ok((a - vx - f, a.abs().max(vx).max(f.abs())))
    })?;
    let upper = sweep(grid, &ts, |x, t| {
        let f = primitive_checked(nl, x, t)?;
        let a = hi_coef * t.abs().powf(p);
        let vx = v(x);
        Ok((f - a - vx, a.abs().max(vx).max(f.abs())))
    })?;
    let sides = vec![
        SideReport {
            name: "lower",
            worst_violation: lower.defect,
            witness: lower.witness,
            holds: lower.holds,
        },
        SideReport {
            name: "upper",
            worst_violation: upper.defect,
            witness: upper.witness,
            holds: upper.holds,
        },
    ];
    let worst = lower.merge(upper);
    Ok(HypothesisReport {
        condition,
        holds_on_samples: worst.holds,
        worst_violation: worst.defect,
        relative_violation: worst.rel,
        witness: worst.witness,
        sides,
        asymptotic_estimate: None,
        per_node_estimates: Vec::new(),
        asymptotic_witness: None,
    })
}

fn check_lambdas(lambda_l: f64, lambda_next: f64, shift: f64) -> Result<()> {
    if !(lambda_l > 0.0 && lambda_next.is_finite()) {
        return Err(Error::Config(format!("eigenvalues must be positive, got λ_l = {lambda_l}")));
    }
    if !(lambda_l + shift < lambda_next) {
        return Err(Error::Config(format!(
            "bracket is empty: λ_l + ε = {} ≥ λ_(l+1) = {lambda_next}",
            lambda_l + shift
        )));
    }
    Ok(())
}

/// (λ_l + ε)|t|^p − V(ξ) ≤ F(ξ, t) ≤ λ_{l+1}|t|^p + V(ξ).
pub fn check_bracket_lower(
    nl: &Nonlinearity,
    sp: &SpaceParams,
    grid: &Grid,
    lambda_l: f64,
    lambda_next: f64,
    cfg: &HypothesisConfig,
) -> Result<HypothesisReport> {
    check_lambdas(lambda_l, lambda_next, cfg.epsilon)?;
    bracket(nl, grid, sp.p, lambda_l + cfg.epsilon, lambda_next, cfg, Condition::BracketLower)
}

/// λ_l|t|^p − V(ξ) ≤ F(ξ, t) ≤ (λ_{l+1} − ε)|t|^p + V(ξ).
pub fn check_bracket_upper(
    nl: &Nonlinearity,
    sp: &SpaceParams,
    grid: &Grid,
    lambda_l: f64,
    lambda_next: f64,
    cfg: &HypothesisConfig,
) -> Result<HypothesisReport> {
    check_lambdas(lambda_l, lambda_next, cfg.epsilon)?;
    bracket(nl, grid, sp.p, lambda_l, lambda_next - cfg.epsilon, cfg, Condition::BracketUpper)
}

fn theta_check(
    nl: &Nonlinearity,
    grid: &Grid,
    cfg: &HypothesisConfig,
    negative: bool,
) -> Result<HypothesisReport> {
    cfg.validate(grid)?;
    let c = cfg.growth_constant;
    let sign = if negative { 1.0 } else { -1.0 };
    let mut ts = cfg.uniform_samples();
    let window = cfg.window_samples();
    ts.extend_from_slice(&window);
    // defect of ±Θ ≤ C(|t| + 1)
    let growth = sweep(grid, &ts, |x, t| {
        let th = nl.theta(x, t)?;
        let bound = c * (t.abs() + 1.0);
        Ok((sign * th - bound, th.abs().max(bound)))
    })?;
    // per node: limsup of Θ/|t| (max) or liminf (min) over the window
    let per_node: Vec<Result<(f64, f64)>> = grid
        .nodes()
        .par_iter()
        .map(|&x| {
            let mut best = (f64::NEG_INFINITY, f64::NAN);
            for &t in &window {
                let r = sign * nl.theta(x, t)? / t.abs();
                if !r.is_finite() {
                    return Err(Error::Numeric(format!("Θ({x}, {t}) is not finite")));
                }
                if r > best.0 {
                    best = (r, t);
                }
            }
            Ok(best)
        })
        .collect();
    let mut estimates = Vec::with_capacity(per_node.len());
    let mut agg = (f64::NEG_INFINITY, (f64::NAN, f64::NAN));
    for (r, &x) in per_node.into_iter().zip(grid.nodes()) {
        let (val, t) = r?;
        estimates.push(sign * val);
        if val > agg.0 {
            agg = (val, (x, t));
        }
    }
    let estimate = sign * agg.0;
    let asymptotic_ok = agg.0 < 0.0;
    let witness = if !growth.holds || asymptotic_ok {
        growth.witness
    } else {
        agg.1
    };
    Ok(HypothesisReport {
        condition: if negative {
            Condition::ThetaNegative
        } else {
            Condition::ThetaPositive
        },
        holds_on_samples: growth.holds && asymptotic_ok,
        worst_violation: growth.defect,
        relative_violation: growth.rel,
        witness,
        sides: vec![SideReport {
            name: "growth",
            worst_violation: growth.defect,
            witness: growth.witness,
            holds: growth.holds,
        }],
        asymptotic_estimate: Some(estimate),
        per_node_estimates: estimates,
        asymptotic_witness: Some(agg.1),
    })
}

/// Θ ≤ C(|t| + 1) on the samples and limsup Θ/|t| < 0 at every node.
pub fn check_theta_negative(nl: &Nonlinearity, grid: &Grid, cfg: &HypothesisConfig) -> Result<HypothesisReport> {
    theta_check(nl, grid, cfg, true)
}

/// Θ ≥ −C(|t| + 1) on the samples and liminf Θ/|t| > 0 at every node.
pub fn check_theta_positive(nl: &Nonlinearity, grid: &Grid, cfg: &HypothesisConfig) -> Result<HypothesisReport> {
    theta_check(nl, grid, cfg, false)
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub theorem: Theorem,
    pub lambdas: (f64, f64),
    pub reports: Vec<HypothesisReport>,
    pub hypotheses_pass: bool,
    pub recommendation: String,
}

/// Run the pair of checks belonging to `theorem`.
pub fn audit_theorem(
    nl: &Nonlinearity,
    sp: &SpaceParams,
    grid: &Arc<Grid>,
    theorem: Theorem,
    lambdas: (f64, f64),
    cfg: &HypothesisConfig,
) -> Result<AuditReport> {
    let (l1, l2) = lambdas;
    check_lambdas(l1, l2, cfg.epsilon)?;
    let reports = match theorem {
        Theorem::LowerBracket => vec![
            check_bracket_lower(nl, sp, grid, l1, l2, cfg)?,
            check_theta_negative(nl, grid, cfg)?,
        ],
        Theorem::UpperBracket => vec![
            check_bracket_upper(nl, sp, grid, l1, l2, cfg)?,
            check_theta_positive(nl, grid, cfg)?,
        ],
    };
    let pass = reports.iter().all(|r| r.holds_on_samples);
    let recommendation = if pass {
        "hypotheses consistent on samples; expect a nonzero critical point: run solve with solver.method = newton"
            .to_string()
    } else {
        let failed: Vec<&str> = reports
            .iter()
            .filter(|r| !r.holds_on_samples)
            .map(|r| r.condition.id())
            .collect();
        format!("hypotheses fail ({}); existence is not implied", failed.join(", "))
    };
    Ok(AuditReport {
        theorem,
        lambdas,
        reports,
        hypotheses_pass: pass,
        recommendation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinate_map::{PsiMap, SpacingRule};
    use crate::fractional_operators::FractionalOrder;
    use crate::nonlinearity::midpoint_bracket_v;

    fn setup() -> (Arc<Grid>, SpaceParams) {
        let g = Grid::build(1.0, 17, PsiMap::identity(), SpacingRule::UniformInPsi).unwrap();
        (g, SpaceParams::new(2.0, FractionalOrder::classical()).unwrap())
    }

    fn homogeneous(c: f64, p: f64) -> Nonlinearity {
        Nonlinearity::custom("hom", move |_, t: f64| p * c * t.abs().powf(p - 1.0) * t.signum())
            .with_primitive(move |_, t: f64| c * t.abs().powf(p))
    }

    #[test]
    fn bracket_lower_examples() {
        let (g, sp) = setup();
        let cfg = HypothesisConfig::new(0.5);
        let r = check_bracket_lower(&homogeneous(2.5, 2.0), &sp, &g, 1.0, 4.0, &cfg).unwrap();
        assert!(r.holds_on_samples);
        assert!(r.worst_violation <= 0.0);
        let r = check_bracket_lower(&homogeneous(8.0, 2.0), &sp, &g, 1.0, 4.0, &cfg).unwrap();
        assert!(!r.holds_on_samples);
        assert!(!r.sides[1].holds);
        assert_eq!(r.witness.1.abs(), cfg.t_max);
        // t = 0 row of a V > 0 bracket holds
        let cfg = HypothesisConfig { t_max: 0.0001, t_samples: 3, ..HypothesisConfig::new(0.5) }
            .with_constant_v(0.3);
        let r = check_bracket_lower(&homogeneous(2.5, 2.0), &sp, &g, 1.0, 4.0, &cfg).unwrap();
        assert!(r.holds_on_samples);
    }

    #[test]
    fn bracket_upper_examples() {
        let (g, sp) = setup();
        let cfg = HypothesisConfig::new(0.5);
        let r = check_bracket_upper(&homogeneous(1.0, 2.0), &sp, &g, 1.0, 4.0, &cfg).unwrap();
        assert_eq!(r.sides[0].worst_violation, 0.0);
        assert!(r.sides[0].holds);
        let r = check_bracket_upper(&homogeneous(4.0, 2.0), &sp, &g, 1.0, 4.0, &cfg).unwrap();
        assert!(!r.sides[1].holds);
        let want = 0.5 * cfg.t_max * cfg.t_max;
        assert!((r.sides[1].worst_violation - want).abs() < 1e-9 * want);
        let r = check_bracket_upper(&homogeneous(2.5, 2.0), &sp, &g, 1.0, 4.0, &cfg).unwrap();
        assert!(r.holds_on_samples);
    }

    #[test]
    fn witness_reproduces_defect() {
        let (g, sp) = setup();
        let cfg = HypothesisConfig::new(0.5).with_constant_v(0.1);
        let nl = Nonlinearity::sine_perturbed(5.0, 2.0, 2.0).unwrap();
        let r = check_bracket_lower(&nl, &sp, &g, 1.0, 4.0, &cfg).unwrap();
        let (x, t) = r.witness;
        let again = nl.primitive(x, t).unwrap() - 4.0 * t * t - 0.1;
        assert!((again - r.worst_violation).abs() <= 1e-12 * again.abs());
    }

    #[test]
    fn theta_examples() {
        let (g, _) = setup();
        let cfg = HypothesisConfig::new(0.5);
        let lin = Nonlinearity::custom("t", |_, t| t).with_primitive(|_, t| 0.5 * t * t);
        let r = check_theta_negative(&lin, &g, &cfg).unwrap();
        assert!(r.holds_on_samples && r.asymptotic_estimate.unwrap() < -10.0);
        let r = check_theta_positive(&lin, &g, &cfg).unwrap();
        assert!(!r.holds_on_samples && r.worst_violation > 0.0);
        let (x, t) = r.witness;
        let again = -lin.theta(x, t).unwrap() - (t.abs() + 1.0);
        assert!((again - r.worst_violation).abs() <= 1e-12 * again.abs());

        let log = Nonlinearity::log_sublinear();
        let r = check_theta_positive(&log, &g, &cfg).unwrap();
        assert!(r.holds_on_samples);
        assert!((r.asymptotic_estimate.unwrap() - 1.0).abs() < 0.02);
        let r = check_theta_negative(&log, &g, &cfg).unwrap();
        assert!(!r.holds_on_samples);
        assert!(r.asymptotic_witness.is_some());

        let zero = Nonlinearity::zero();
        assert!(!check_theta_negative(&zero, &g, &cfg).unwrap().holds_on_samples);
        assert!(!check_theta_positive(&zero, &g, &cfg).unwrap().holds_on_samples);
    }

    #[test]
    fn limsup_is_monotone_in_window_start() {
        let (g, _) = setup();
        let lin = Nonlinearity::linear(1.0);
        let mut prev = f64::INFINITY;
        for lo in [1e1, 1e2, 1e3, 1e4] {
            let cfg = HypothesisConfig { window: (lo, 1e6), ..HypothesisConfig::new(0.5) };
            let e = check_theta_negative(&lin, &g, &cfg).unwrap().asymptotic_estimate.unwrap();
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn audit_midpoint_bracket() {
        let (g, sp) = setup();
        let (l1, l2, eps, h) = (1.0, 4.0, 0.5, 1.0);
        let nl = Nonlinearity::midpoint_bracket(l1, l2, eps, h, 2.0).unwrap();
        let cfg = HypothesisConfig::new(eps).with_constant_v(midpoint_bracket_v(l1, l2, eps, h, 2.0));
        let a = audit_theorem(&nl, &sp, &g, Theorem::LowerBracket, (l1, l2), &cfg).unwrap();
        assert!(a.hypotheses_pass, "{:?}", a.reports);
        let a = audit_theorem(&Nonlinearity::zero(), &sp, &g, Theorem::LowerBracket, (l1, l2), &cfg)
            .unwrap();
        assert!(!a.hypotheses_pass);
        assert!(matches!(
            audit_theorem(&nl, &sp, &g, Theorem::LowerBracket, (1.0, 1.2), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn more_samples_keep_failures() {
        let (g, sp) = setup();
        let nl = homogeneous(8.0, 2.0);
        for k in [11, 101, 1001] {
            let cfg = HypothesisConfig { t_samples: k, ..HypothesisConfig::new(0.5) };
            assert!(!check_bracket_lower(&nl, &sp, &g, 1.0, 4.0, &cfg).unwrap().holds_on_samples);
        }
    }
}
