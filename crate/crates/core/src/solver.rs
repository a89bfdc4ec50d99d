//! Critical points of the discrete Euler functional.
//!
//! Descent with Armijo backtracking (L-BFGS or steepest directions) finds
//! minimizers; a damped Newton iteration on E′ = 0 reaches saddle points and
//! polishes descent runs once the energy decrease drops below roundoff.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coordinate_map::Grid;
use crate::energy::Energy;
use crate::error::{param, Error, Result};
use crate::function_spaces::{check_boundary, hspace_norm};
use crate::grid_function::GridFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    #[default]
    ArmijoBacktracking,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Lbfgs,
    Steepest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    Descent,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    /// Stop when ‖g‖₂/√h̄ ≤ grad_tol, h̄ the mean ψ-spacing.
    pub grad_tol: f64,
    pub step_rule: StepRule,
    pub initial_step: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub seed: u64,
    pub method: Method,
    pub direction: Direction,
    pub lbfgs_memory: usize,
    /// Finish stalled descent runs with Newton steps.
    pub newton_polish: bool,
    pub regularization_eps: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            grad_tol: 1e-8,
            step_rule: StepRule::ArmijoBacktracking,
            initial_step: 1.0,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            seed: 0,
            method: Method::Descent,
            direction: Direction::Lbfgs,
            lbfgs_memory: 8,
            newton_polish: true,
            regularization_eps: 0.0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(param("solver.grad_tol", "must be positive"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(param("solver.armijo_c", "must lie in (0, 1)"));
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Err(param("solver.armijo_shrink", "must lie in (0, 1)"));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(param("solver.initial_step", "must be positive"));
        }
        if !(self.regularization_eps >= 0.0) {
            return Err(param("solver.regularization_eps", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub energy_trace: Vec<f64>,
    pub grad_norm_trace: Vec<f64>,
    /// ρ_j = ‖φ_j‖ in the fractional space norm.
    pub rho_trace: Vec<f64>,
    /// ∫ψ′Θ(ξ, φ_j) dξ / ρ_j (0 when ρ_j = 0).
    pub theta_trace: Vec<f64>,
    /// ⟨E′(φ_j), φ_j⟩.
    pub pairing_trace: Vec<f64>,
    pub critical_level_c: f64,
    pub converged: bool,
    /// Descent stopped making progress before reaching grad_tol.
    pub stalled: bool,
    pub iterations: usize,
    pub newton_steps: usize,
    pub singular_cells: usize,
}

impl SolveReport {
    pub fn final_grad_norm(&self) -> f64 {
        *self.grad_norm_trace.last().unwrap_or(&f64::NAN)
    }
}

struct State {
    phi: GridFunction,
    energy: f64,
    grad: Vec<f64>,
    gnorm: f64,
}

struct Run<'a> {
    en: &'a Energy,
    opts: &'a SolveOptions,
    scale: f64,
    report: SolveReport,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl<'a> Run<'a> {
    fn evaluate(&self, phi: GridFunction, iteration: usize) -> Result<State> {
        let e = self.en.energy_unchecked(&phi)?.total;
        if !e.is_finite() {
            return Err(Error::NonFiniteEnergy { iteration });
        }
        let grad = self.en.gradient_values(&phi)?;
        let gnorm = norm(&grad) / self.scale;
        Ok(State {
            phi,
            energy: e,
            grad,
            gnorm,
        })
    }

    fn record(&mut self, st: &State) -> Result<()> {
        let r = &mut self.report;
        r.energy_trace.push(st.energy);
        r.grad_norm_trace.push(st.gnorm);
        let rho = hspace_norm(&st.phi, &self.en.sp)?;
        r.rho_trace.push(rho);
        let grid = st.phi.grid();
        let mut theta = 0.0;
        for ((&w, &x), &v) in grid
            .trapezoid_weights()
            .iter()
            .zip(grid.nodes())
            .zip(st.phi.values())
        {
            theta += w * self.en.nl.theta(x, v)?;
        }
        r.theta_trace.push(if rho > 0.0 { theta / rho } else { 0.0 });
        r.pairing_trace.push(dot(&st.grad, st.phi.values()));
        Ok(())
    }

    fn step(&self, st: &State, d: &[f64], s: f64) -> GridFunction {
        let v: Vec<f64> = st
            .phi
            .values()
            .iter()
            .zip(d)
            .map(|(x, y)| x + s * y)
            .collect();
        st.phi.with_values(v)
    }

    /// Armijo backtracking along d; returns the accepted state and step.
    fn line_search(&self, st: &State, d: &[f64], s0: f64, it: usize) -> Result<Option<(State, f64)>> {
        let slope = dot(&st.grad, d);
        if !(slope < 0.0) {
            return Ok(None);
        }
        let mut s = s0;
        for _ in 0..80 {
            let trial = self.step(st, d, s);
            let e = self.en.energy_unchecked(&trial)?.total;
            if e.is_finite() && e <= st.energy + self.opts.armijo_c * s * slope {
                return Ok(Some((self.evaluate(trial, it)?, s)));
            }
            s *= self.opts.armijo_shrink;
        }
        Ok(None)
    }

    /// One damped Newton step on the interior gradient; accepts only if the
    /// gradient norm decreases.
    fn newton_step(&self, st: &State, it: usize) -> Result<Option<State>> {
        let h = self.en.hessian(&st.phi)?;
        let rhs = DVector::from_iterator(st.grad.len(), st.grad.iter().map(|g| -g));
        let delta = match solve_shifted(h, &rhs) {
            Some(d) => d,
            None => return Ok(None),
        };
        let d: Vec<f64> = delta.iter().copied().collect();
        let mut s = 1.0;
        for _ in 0..30 {
            let trial = self.step(st, &d, s);
            if let Ok(next) = self.evaluate(trial, it) {
                if next.gnorm < (1.0 - 1e-4 * s) * st.gnorm {
                    return Ok(Some(next));
                }
            }
            s *= 0.5;
        }
        Ok(None)
    }
}

// LU solve, retrying with a growing diagonal shift if the matrix is singular.
fn solve_shifted(h: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..12 {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        if let Some(x) = m.lu().solve(rhs) {
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
        shift = if shift == 0.0 { 1e-10 * scale } else { shift * 10.0 };
    }
    None
}

struct Lbfgs {
    mem: usize,
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

impl Lbfgs {
    fn new(mem: usize) -> Self {
        Self {
            mem: mem.max(1),
            s: Vec::new(),
            y: Vec::new(),
        }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * norm(&s) * norm(&y)) {
            return;
        }
        if self.s.len() == self.mem {
            self.s.remove(0);
            self.y.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
    }

    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            alpha[i] = rho * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let rho = 1.0 / dot(&self.y[i], &self.s[i]);
            let b = rho * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - b) * sj;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Search for a critical point of `en` starting from `init`.
pub fn find_critical_point(en: &Energy, init: &GridFunction, opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    en.sp.check_problem_order()?;
    check_boundary(init)?;
    let en = &en.clone().with_regularization(opts.regularization_eps.max(en.eps));
    let mut v = init.values().to_vec();
    let n = v.len();
    v[0] = 0.0;
    v[n - 1] = 0.0;
    let phi0 = init.with_values(v);
    let scale = phi0.grid().mean_step().sqrt();
    let mut run = Run {
        en,
        opts,
        scale,
        report: SolveReport {
            solution: phi0.clone(),
            energy_trace: Vec::new(),
            grad_norm_trace: Vec::new(),
            rho_trace: Vec::new(),
            theta_trace: Vec::new(),
            pairing_trace: Vec::new(),
            critical_level_c: f64::NAN,
            converged: false,
            stalled: false,
            iterations: 0,
            newton_steps: 0,
            singular_cells: 0,
        },
    };
    let mut st = run.evaluate(phi0, 0)?;
    run.record(&st)?;
    let mut lbfgs = Lbfgs::new(opts.lbfgs_memory);
    let mut prev_step = opts.initial_step;
    let mut it = 0;
    while st.gnorm > opts.grad_tol && it < opts.max_iter {
        it += 1;
        let next = match opts.method {
            Method::Newton => {
                let r = run.newton_step(&st, it)?;
                if r.is_some() {
                    run.report.newton_steps += 1;
                }
                r
            }
            Method::Descent => descent_step(&run, &st, &mut lbfgs, &mut prev_step, it)?,
        };
        match next {
            Some(next) => {
                if opts.method == Method::Descent && opts.direction == Direction::Steepest
                    && opts.step_rule == StepRule::ArmijoBacktracking
                {
                    let g2 = dot(&st.grad, &st.grad);
                    debug_assert!(
                        next.energy <= st.energy - opts.armijo_c * prev_step * g2 + 1e-14 * st.energy.abs()
                    );
                }
                st = next;
                run.record(&st)?;
            }
            None => {
                run.report.stalled = true;
                it -= 1;
                break;
            }
        }
    }
    if run.report.stalled && opts.method == Method::Descent && opts.newton_polish {
        while st.gnorm > opts.grad_tol && it < opts.max_iter {
            match run.newton_step(&st, it + 1)? {
                Some(next) => {
                    it += 1;
                    run.report.newton_steps += 1;
                    st = next;
                    run.record(&st)?;
                }
                None => break,
            }
        }
    }
    let mut report = run.report;
    report.converged = st.gnorm <= opts.grad_tol;
    if report.converged {
        report.stalled = false;
    }
    report.iterations = it;
    report.critical_level_c = st.energy;
    report.singular_cells = en.singular_cells(&st.phi)?;
    report.solution = st.phi;
    Ok(report)
}

fn descent_step(
    run: &Run,
    st: &State,
    lbfgs: &mut Lbfgs,
    prev_step: &mut f64,
    it: usize,
) -> Result<Option<State>> {
    let opts = run.opts;
    let steepest: Vec<f64> = st.grad.iter().map(|g| -g).collect();
    if opts.step_rule == StepRule::Fixed {
        let next = run.evaluate(run.step(st, &steepest, opts.initial_step), it)?;
        return Ok(Some(next));
    }
    let use_lbfgs = opts.direction == Direction::Lbfgs && !lbfgs.s.is_empty();
    let mut attempt = if use_lbfgs {
        let d = lbfgs.direction(&st.grad);
        run.line_search(st, &d, 1.0, it)?.map(|r| (r, d))
    } else {
        None
    };
    if attempt.is_none() {
        lbfgs.clear();
        let s0 = if opts.direction == Direction::Steepest {
            (2.0 * *prev_step).min(1e12)
        } else {
            opts.initial_step
        };
        attempt = run
            .line_search(st, &steepest, s0, it)?
            .map(|r| (r, steepest.clone()));
    }
    let Some(((next, s), d)) = attempt else {
        return Ok(None);
    };
    *prev_step = s;
    if next.energy >= st.energy && next.gnorm >= st.gnorm {
        return Ok(None);
    }
    if opts.direction == Direction::Lbfgs {
        let sv: Vec<f64> = d.iter().map(|x| s * x).collect();
        let yv: Vec<f64> = next.grad.iter().zip(&st.grad).map(|(a, b)| a - b).collect();
        lbfgs.push(sv, yv);
    }
    Ok(Some(next))
}

/// Boundary-zero parabola s(1 − s) in the normalized ψ coordinate.
pub fn default_init(grid: &Arc<Grid>) -> GridFunction {
    let u = grid.psi_nodes();
    let (a, b) = (u[0], u[u.len() - 1]);
    let v = u
        .iter()
        .map(|&x| {
            let s = (x - a) / (b - a);
            s * (1.0 - s)
        })
        .collect();
    GridFunction::new(grid.clone(), v).unwrap()
}

/// Smooth random start Σ a_k sin(kπs)/k, k = 1..5, drawn from `seed`.
pub fn random_init(grid: &Arc<Grid>, seed: u64, amplitude: f64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (1..=5).map(|k| rng.random_range(-1.0..1.0) / k as f64).collect();
    let u = grid.psi_nodes();
    let (a, b) = (u[0], u[u.len() - 1]);
    let n = u.len();
    let v = u
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if i == 0 || i == n - 1 {
                return 0.0;
            }
            let s = (x - a) / (b - a);
            amplitude
                * coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * ((k + 1) as f64 * PI * s).sin())
                    .sum::<f64>()
        })
        .collect();
    GridFunction::new(grid.clone(), v).unwrap()
}

/// Independent solves from `k` random starts seeded `opts.seed + i`, run in
/// parallel and returned in start order.
pub fn multistart(en: &Energy, grid: &Arc<Grid>, opts: &SolveOptions, k: usize) -> Result<Vec<SolveReport>> {
    (0..k)
        .into_par_iter()
        .map(|i| {
            let init = random_init(grid, opts.seed.wrapping_add(i as u64), 1.0);
            find_critical_point(en, &init, opts)
        })
        .collect()
}

/// Palais–Smale style summary of a run.
#[derive(Debug, Clone)]
pub struct PsDiagnostics {
    pub energy: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub rho: Vec<f64>,
    pub theta_average: Vec<f64>,
    /// ⟨E′(φ_j), φ_j⟩/p, the conventional normalization.
    pub pairing_over_p: Vec<f64>,
    /// ⟨E′(φ_j), φ_j⟩/p², the alternative normalization.
    pub pairing_over_p2: Vec<f64>,
    pub grad_below_tol: bool,
    pub energy_settled: bool,
    pub theta_trends_to_zero: bool,
}

pub fn ps_diagnostics(report: &SolveReport, p: f64, grad_tol: f64) -> PsDiagnostics {
    let last = |v: &[f64]| *v.last().unwrap_or(&0.0);
    let e = &report.energy_trace;
    let energy_settled = match e.len() {
        0 | 1 => true,
        k => (e[k - 1] - e[k - 2]).abs() <= 1e-10 * (1.0 + e[k - 1].abs()),
    };
    let th = &report.theta_trace;
    let theta_trends_to_zero = match th.len() {
        0 => true,
        _ => {
            let l = last(th).abs();
            l <= 1e-12 || l < 0.5 * th[0].abs()
        }
    };
    PsDiagnostics {
        energy: e.clone(),
        grad_norm: report.grad_norm_trace.clone(),
        rho: report.rho_trace.clone(),
        theta_average: th.clone(),
        pairing_over_p: report.pairing_trace.iter().map(|x| x / p).collect(),
        pairing_over_p2: report.pairing_trace.iter().map(|x| x / (p * p)).collect(),
        grad_below_tol: last(&report.grad_norm_trace) <= grad_tol,
        energy_settled,
        theta_trends_to_zero,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinate_map::{PsiMap, SpacingRule};
    use crate::fractional_operators::FractionalOrder;
    use crate::function_spaces::SpaceParams;
    use crate::nonlinearity::Nonlinearity;

    fn grid(n: usize) -> Arc<Grid> {
        Grid::build(1.0, n, PsiMap::identity(), SpacingRule::UniformInPsi).unwrap()
    }

    fn classical(p: f64, nl: Nonlinearity) -> Energy {
        Energy::new(SpaceParams::new(p, FractionalOrder::classical()).unwrap(), nl)
    }

    #[test]
    fn zero_is_critical() {
        let g = grid(65);
        let en = classical(2.0, Nonlinearity::zero());
        let r = find_critical_point(&en, &GridFunction::zeros(g), &SolveOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.critical_level_c, 0.0);
        let d = ps_diagnostics(&r, 2.0, 1e-8);
        assert!(d.theta_average.iter().all(|&v| v == 0.0));
        assert!(d.rho.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn classical_poisson() {
        let g = grid(257);
        let en = classical(2.0, Nonlinearity::affine(1.0));
        let r = find_critical_point(&en, &default_init(&g), &SolveOptions::default()).unwrap();
        assert!(r.converged, "grad {}", r.final_grad_norm());
        let err = g
            .nodes()
            .iter()
            .zip(r.solution.values())
            .fold(0.0f64, |m, (x, v)| m.max((v - 0.5 * x * (1.0 - x)).abs()));
        assert!(err < 1e-8);
        assert!((r.critical_level_c + 1.0 / 24.0).abs() < 1e-4);
        for w in r.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-14);
        }
        assert!(r.grad_norm_trace.last().unwrap() <= &1e-8);
        let d = ps_diagnostics(&r, 2.0, 1e-8);
        assert!(d.grad_below_tol && d.theta_average.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn steepest_descent_is_monotone() {
        let g = grid(33);
        let en = classical(2.0, Nonlinearity::affine(1.0));
        let opts = SolveOptions {
            direction: Direction::Steepest,
            max_iter: 20000,
            ..Default::default()
        };
        let r = find_critical_point(&en, &GridFunction::zeros(g), &opts).unwrap();
        assert!(r.converged);
        for w in r.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn newton_reaches_saddle() {
        // f = 5t + 1 on [0, π]: E unbounded below and above, unique critical point.
        let g = Grid::build(PI, 129, PsiMap::identity(), SpacingRule::UniformInPsi).unwrap();
        let en = classical(2.0, Nonlinearity::midpoint_bracket(1.0, 4.0, 0.0, 1.0, 2.0).unwrap());
        let opts = SolveOptions {
            method: Method::Newton,
            ..Default::default()
        };
        let r = find_critical_point(&en, &GridFunction::zeros(g), &opts).unwrap();
        assert!(r.converged);
        assert!(r.solution.max_abs() > 0.1);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let g = grid(129);
        let en = classical(3.0, Nonlinearity::affine(1.0));
        let opts = SolveOptions {
            max_iter: 1,
            newton_polish: false,
            ..Default::default()
        };
        let r = find_critical_point(&en, &default_init(&g), &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.energy_trace.len(), 2);
    }

    #[test]
    fn order_gate_and_boundary_gate() {
        let g = grid(33);
        let en = Energy::new(
            SpaceParams::new(2.0, FractionalOrder::new(0.4, 0.5).unwrap()).unwrap(),
            Nonlinearity::affine(1.0),
        );
        assert!(find_critical_point(&en, &default_init(&g), &SolveOptions::default()).is_err());
        let en = classical(2.0, Nonlinearity::affine(1.0));
        let one = GridFunction::from_fn(g, |_| 1.0).unwrap();
        assert!(matches!(
            find_critical_point(&en, &one, &SolveOptions::default()),
            Err(Error::Boundary { .. })
        ));
    }

    #[test]
    fn deterministic_traces() {
        let g = grid(65);
        let en = Energy::new(
            SpaceParams::new(2.0, FractionalOrder::new(0.7, 0.5).unwrap()).unwrap(),
            Nonlinearity::affine(1.0),
        );
        let opts = SolveOptions {
            seed: 7,
            ..Default::default()
        };
        let a = multistart(&en, &g, &opts, 3).unwrap();
        let b = multistart(&en, &g, &opts, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.energy_trace, y.energy_trace);
            assert_eq!(x.solution.values(), y.solution.values());
        }
        assert!(a.iter().all(|r| r.converged));
    }
}
