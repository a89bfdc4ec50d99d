//! Variational eigenvalues of ᶜD_T(|Dφ|^{p−2}Dφ) = λ|φ|^{p−2}φ.
//!
//! λ₁ minimizes the Rayleigh quotient R(φ) = ‖ᴴDφ‖_p^p / ‖φ‖_p^p. λ₂ is
//! estimated from above by minimizing, over pairs (w₁, w₂), the maximum of R
//! on the circle θ ↦ cos θ w₁ + sin θ w₂.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::coordinate_map::Grid;
use crate::energy::Energy;
use crate::error::{Error, Result};
use crate::fractional_operators::KineticOperator;
use crate::function_spaces::{check_boundary, lp_norm, SpaceParams};
use crate::grid_function::GridFunction;
use crate::nonlinearity::Nonlinearity;
use crate::solver::SolveOptions;

#[derive(Debug, Clone)]
pub struct EigenEstimate {
    pub lambda: f64,
    /// Boundary-zero, unit L^p_ψ norm, positive ψ-weighted mean.
    pub eigenfunction: GridFunction,
    pub level: usize,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `lambda` is a minimax value over a restricted family, hence an upper bound.
    pub upper_bound: bool,
    pub sign_changes: usize,
}

// Numerator N = Σ Δψ|Kφ|^p and denominator M = Σ w|φ|^p.
struct Quotient<'a> {
    p: f64,
    k: Arc<KineticOperator>,
    steps: Vec<f64>,
    w: &'a [f64],
}

impl<'a> Quotient<'a> {
    fn new(grid: &'a Arc<Grid>, sp: &SpaceParams) -> Result<Self> {
        Ok(Self {
            p: sp.p,
            k: KineticOperator::new(grid, &sp.ord)?,
            steps: grid.psi_steps().collect(),
            w: grid.trapezoid_weights(),
        })
    }

    fn numerator_cells(&self, d: &[f64]) -> f64 {
        self.steps.iter().zip(d).map(|(h, x)| h * x.abs().powf(self.p)).sum()
    }

    fn denominator(&self, v: &[f64]) -> f64 {
        self.w.iter().zip(v).map(|(w, x)| w * x.abs().powf(self.p)).sum()
    }

    fn value(&self, v: &[f64]) -> f64 {
        self.numerator_cells(&self.k.apply(v)) / self.denominator(v)
    }

    /// ∇R = p(A − R b)/M, boundary entries zero.
    fn gradient(&self, v: &[f64]) -> (f64, Vec<f64>) {
        let d = self.k.apply(v);
        let num = self.numerator_cells(&d);
        let m = self.denominator(v);
        let r = num / m;
        let flux: Vec<f64> = self
            .steps
            .iter()
            .zip(&d)
            .map(|(h, x)| h * signed_pow(*x, self.p - 1.0))
            .collect();
        let a = self.k.apply_transpose(&flux);
        let n = v.len();
        let mut g: Vec<f64> = (0..n)
            .map(|i| self.p * (a[i] - r * self.w[i] * signed_pow(v[i], self.p - 1.0)) / m)
            .collect();
        g[0] = 0.0;
        g[n - 1] = 0.0;
        (r, g)
    }
}

fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(e) * x.signum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// ‖ᴴDφ‖_p^p / ‖φ‖_p^p.
pub fn rayleigh_quotient(phi: &GridFunction, sp: &SpaceParams) -> Result<f64> {
    check_boundary(phi)?;
    let q = Quotient::new(phi.grid(), sp)?;
    let m = q.denominator(phi.values());
    if m == 0.0 {
        return Err(Error::Degenerate("Rayleigh quotient of the zero function".into()));
    }
    Ok(q.numerator_cells(&q.k.apply(phi.values())) / m)
}

/// max over interior hat functions v of |∫ψ′|Dφ|^{p−2}Dφ Dv − λ∫ψ′|φ|^{p−2}φ v|.
pub fn eigen_residual(phi: &GridFunction, lambda: f64, sp: &SpaceParams) -> Result<f64> {
    check_boundary(phi)?;
    let en = Energy::new(*sp, Nonlinearity::power(lambda, sp.p)?);
    let g = en.gradient(phi)?;
    Ok(g.max_abs())
}

fn normalize(phi: &GridFunction, p: f64) -> Result<GridFunction> {
    let m = lp_norm(phi, p)?;
    if m == 0.0 {
        return Err(Error::Degenerate("cannot normalize the zero function".into()));
    }
    let w = phi.grid().trapezoid_weights();
    let sign = if dot(w, phi.values()) < 0.0 { -1.0 } else { 1.0 };
    Ok(phi.scaled(sign / m))
}

fn count_sign_changes(v: &[f64]) -> usize {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut last = 0.0;
    let mut changes = 0;
    for &x in &v[1..v.len() - 1] {
        if x.abs() <= 1e-12 * scale {
            continue;
        }
        if last != 0.0 && x.signum() != last {
            changes += 1;
        }
        last = x.signum();
    }
    changes
}

/// Projected steepest descent on R with renormalization after each step.
fn descend(q: &Quotient, v0: Vec<f64>, steps: usize, opts: &SolveOptions) -> (Vec<f64>, usize) {
    let mut v = v0;
    let mut s = opts.initial_step;
    let mut it = 0;
    let renorm = |x: Vec<f64>| {
        let m = q.denominator(&x).powf(1.0 / q.p);
        x.into_iter().map(|y| y / m).collect::<Vec<_>>()
    };
    v = renorm(v);
    for _ in 0..steps {
        let (r, g) = q.gradient(&v);
        let g2 = dot(&g, &g);
        if g2.sqrt() <= opts.grad_tol {
            break;
        }
        let mut trial_s = 2.0 * s;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = v.iter().zip(&g).map(|(a, b)| a - trial_s * b).collect();
            let rt = q.value(&trial);
            if rt.is_finite() && rt <= r - opts.armijo_c * trial_s * g2 {
                accepted = Some(trial);
                break;
            }
            trial_s *= opts.armijo_shrink;
        }
        match accepted {
            Some(t) => {
                v = renorm(t);
                s = trial_s;
                it += 1;
            }
            None => break,
        }
    }
    (v, it)
}

/// Newton on [A(φ) − λb(φ); cᵀ(φ − φ₀)] = 0 with c = b(φ₀).
fn newton_polish(
    sp: &SpaceParams,
    phi0: &GridFunction,
    lambda0: f64,
    max_steps: usize,
) -> Result<(GridFunction, f64, usize)> {
    let p = sp.p;
    let grid = phi0.grid();
    let n = grid.len();
    let w = grid.trapezoid_weights();
    let bvec = |v: &[f64]| -> Vec<f64> {
        let mut b: Vec<f64> = (0..n).map(|i| w[i] * signed_pow(v[i], p - 1.0)).collect();
        b[0] = 0.0;
        b[n - 1] = 0.0;
        b
    };
    let c = bvec(phi0.values());
    let target = dot(&c, phi0.values());
    let system = |phi: &GridFunction, lambda: f64| -> Result<(Vec<f64>, f64)> {
        let en = Energy::new(*sp, Nonlinearity::power(lambda, p)?);
        let mut f = en.gradient(phi)?.into_values();
        f.push(dot(&c, phi.values()) - target);
        let nrm = dot(&f, &f).sqrt();
        Ok((f, nrm))
    };
    let mut phi = phi0.clone();
    let mut lambda = lambda0;
    let (mut f, mut fnorm) = system(&phi, lambda)?;
    let mut steps = 0;
    for _ in 0..max_steps {
        let en = Energy::new(*sp, Nonlinearity::power(lambda, p)?);
        let h = en.hessian(&phi)?;
        let b = bvec(phi.values());
        let mut j = DMatrix::zeros(n + 1, n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(&h);
        for i in 0..n {
            j[(i, n)] = -b[i];
            j[(n, i)] = c[i];
        }
        let rhs = DVector::from_iterator(n + 1, f.iter().map(|x| -x));
        let delta = match j.lu().solve(&rhs) {
            Some(d) if d.iter().all(|x| x.is_finite()) => d,
            _ => break,
        };
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let v: Vec<f64> = phi
                .values()
                .iter()
                .zip(delta.iter())
                .map(|(a, d)| a + s * d)
                .collect();
            let trial = phi.with_values(v);
            let tl = lambda + s * delta[n];
            if let Ok((tf, tn)) = system(&trial, tl) {
                if tn < fnorm {
                    phi = trial;
                    lambda = tl;
                    f = tf;
                    fnorm = tn;
                    accepted = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
        steps += 1;
    }
    Ok((phi, lambda, steps))
}

fn psi_bump(grid: &Arc<Grid>) -> Vec<f64> {
    let u = grid.psi_nodes();
    let (a, b) = (u[0], u[u.len() - 1]);
    let n = u.len();
    u.iter()
        .enumerate()
        .map(|(i, &x)| {
            if i == 0 || i == n - 1 {
                0.0
            } else {
                (PI * (x - a) / (b - a)).sin()
            }
        })
        .collect()
}

fn finish(
    sp: &SpaceParams,
    phi: GridFunction,
    lambda: Option<f64>,
    level: usize,
    iterations: usize,
    opts: &SolveOptions,
) -> Result<EigenEstimate> {
    let phi = normalize(&phi, sp.p)?;
    let r = rayleigh_quotient(&phi, sp)?;
    let residual = eigen_residual(&phi, r, sp)?;
    let lambda = lambda.unwrap_or(r);
    if !(lambda > 0.0) {
        return Err(Error::Numeric(format!("non-positive eigenvalue estimate {lambda}")));
    }
    Ok(EigenEstimate {
        lambda,
        sign_changes: count_sign_changes(phi.values()),
        eigenfunction: phi,
        level,
        residual,
        iterations,
        converged: residual <= opts.grad_tol,
        upper_bound: level > 1,
    })
}

const DESCENT_STEPS: usize = 200;
const NEWTON_STEPS: usize = 40;

/// First eigenvalue: descent on R from the positive ψ-bump, then Newton.
pub fn lambda_1(sp: &SpaceParams, grid: &Arc<Grid>, opts: &SolveOptions) -> Result<EigenEstimate> {
    opts.validate()?;
    sp.check_problem_order()?;
    let q = Quotient::new(grid, sp)?;
    let (v, it) = descend(&q, psi_bump(grid), DESCENT_STEPS.min(opts.max_iter), opts);
    let phi = GridFunction::new(grid.clone(), v)?;
    let r = q.value(phi.values());
    let (polished, _, nsteps) = newton_polish(sp, &phi, r, NEWTON_STEPS)?;
    let polished = normalize(&polished, sp.p)?;
    // Newton may wander off to another eigenpair; keep the descent result then.
    let chosen = if count_sign_changes(polished.values()) == 0
        && q.value(polished.values()) <= r * (1.0 + 1e-6)
    {
        polished
    } else {
        phi
    };
    finish(sp, chosen, None, 1, it + nsteps, opts)
}

// Maximum of R over the circle cos θ a + sin θ b, θ ∈ [0, π).
fn circle_max(q: &Quotient, a: &[f64], b: &[f64]) -> (f64, f64) {
    let ka = q.k.apply(a);
    let kb = q.k.apply(b);
    let eval = |t: f64| {
        let (c, s) = (t.cos(), t.sin());
        let d: Vec<f64> = ka.iter().zip(&kb).map(|(x, y)| c * x + s * y).collect();
        let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| c * x + s * y).collect();
        let m = q.denominator(&v);
        if m > 0.0 {
            q.numerator_cells(&d) / m
        } else {
            f64::NEG_INFINITY
        }
    };
    const SAMPLES: usize = 720;
    let dt = PI / SAMPLES as f64;
    let (mut best_t, mut best) = (0.0, f64::NEG_INFINITY);
    for k in 0..SAMPLES {
        let t = k as f64 * dt;
        let r = eval(t);
        if r > best {
            best = r;
            best_t = t;
        }
    }
    // golden-section refinement of the bracket around the best sample
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (best_t - dt, best_t + dt);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (eval(x1), eval(x2));
    for _ in 0..60 {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = eval(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = eval(x2);
        }
    }
    let t = 0.5 * (lo + hi);
    let r = eval(t);
    if r > best {
        (r, t)
    } else {
        (best, best_t)
    }
}

fn combine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    let (c, s) = (t.cos(), t.sin());
    a.iter().zip(b).map(|(x, y)| c * x + s * y).collect()
}

// φ₁ compressed onto [s0, s1] of the normalized ψ-coordinate, zero elsewhere.
fn compressed_hump(phi1: &GridFunction, s0: f64, s1: f64) -> Vec<f64> {
    let u = phi1.grid().psi_nodes();
    let (a, b) = (u[0], u[u.len() - 1]);
    let v = phi1.values();
    let sn: Vec<f64> = u.iter().map(|x| (x - a) / (b - a)).collect();
    sn.iter()
        .map(|&s| {
            if s <= s0 || s >= s1 {
                return 0.0;
            }
            let r = (s - s0) / (s1 - s0);
            let j = sn.partition_point(|&x| x <= r).clamp(1, sn.len() - 1);
            let t = (r - sn[j - 1]) / (sn[j] - sn[j - 1]);
            v[j - 1] + t * (v[j] - v[j - 1])
        })
        .collect()
}

/// Upper estimate of λ₂ by a two-dimensional minimax.
pub fn lambda_2_estimate(
    sp: &SpaceParams,
    grid: &Arc<Grid>,
    opts: &SolveOptions,
    first: &EigenEstimate,
) -> Result<EigenEstimate> {
    opts.validate()?;
    sp.check_problem_order()?;
    if !first.eigenfunction.grid().same_as(grid) {
        return Err(Error::GridMismatch);
    }
    let q = Quotient::new(grid, sp)?;
    let p = sp.p;
    let mut a = compressed_hump(&first.eigenfunction, 0.0, 0.5);
    let mut b = compressed_hump(&first.eigenfunction, 0.5, 1.0);
    let (mut best, mut t) = circle_max(&q, &a, &b);
    let mut iterations = 0;
    let mut s = opts.initial_step;
    for _ in 0..DESCENT_STEPS.min(opts.max_iter) {
        // rotate so that the maximizer is the first basis vector
        let q1 = combine(&a, &b, t);
        let q2 = combine(&a, &b, t + 0.5 * PI);
        let (_, g) = q.gradient(&q1);
        let g2 = dot(&g, &g);
        if g2.sqrt() <= opts.grad_tol {
            a = q1;
            b = q2;
            break;
        }
        let mut trial_s = 2.0 * s;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = q1.iter().zip(&g).map(|(x, y)| x - trial_s * y).collect();
            let (m, _) = circle_max(&q, &cand, &q2);
            if m <= best - opts.armijo_c * trial_s * g2 {
                accepted = Some(cand);
                break;
            }
            trial_s *= opts.armijo_shrink;
        }
        let Some(cand) = accepted else {
            a = q1;
            b = q2;
            break;
        };
        let sa = q.denominator(&cand).powf(1.0 / p);
        a = cand.iter().map(|x| x / sa).collect();
        let sb = q.denominator(&q2).powf(1.0 / p);
        b = q2.iter().map(|x| x / sb).collect();
        (best, t) = circle_max(&q, &a, &b);
        s = trial_s;
        iterations += 1;
    }
    let (m_final, t_final) = circle_max(&q, &a, &b);
    let start = GridFunction::new(grid.clone(), combine(&a, &b, t_final))?;
    let r0 = q.value(start.values());
    let (phi2, _, nsteps) = newton_polish(sp, &start, r0, NEWTON_STEPS)?;
    let phi2 = normalize(&phi2, p)?;
    let phi2_r = q.value(phi2.values());
    let polished_ok = phi2_r.is_finite() && count_sign_changes(phi2.values()) >= 1;
    let phi2 = if polished_ok { phi2 } else { normalize(&start, p)? };

    let mut lambda = best.min(m_final);
    let (m_pair, _) = circle_max(&q, first.eigenfunction.values(), phi2.values());
    lambda = lambda.min(m_pair);
    let plus: Vec<f64> = phi2.values().iter().map(|x| x.max(0.0)).collect();
    let minus: Vec<f64> = phi2.values().iter().map(|x| x.min(0.0)).collect();
    if q.denominator(&plus) > 0.0 && q.denominator(&minus) > 0.0 {
        let (m_split, _) = circle_max(&q, &plus, &minus);
        lambda = lambda.min(m_split);
    }
    let est = finish(sp, phi2, Some(lambda), 2, iterations + nsteps, opts)?;
    if !(est.lambda >= first.lambda * (1.0 + 1e-6)) {
        return Err(Error::Numeric(format!(
            "second eigenvalue estimate {} does not exceed λ₁ = {}",
            est.lambda, first.lambda
        )));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordinate_map::{PsiMap, SpacingRule};
    use crate::fractional_operators::FractionalOrder;

    fn pi_grid(n: usize) -> Arc<Grid> {
        Grid::build(PI, n, PsiMap::identity(), SpacingRule::UniformInPsi).unwrap()
    }

    fn classical(p: f64) -> SpaceParams {
        SpaceParams::new(p, FractionalOrder::classical()).unwrap()
    }

    fn pi_p(p: f64) -> f64 {
        2.0 * PI / (p * (PI / p).sin())
    }

    #[test]
    fn quotient_examples() {
        let g = pi_grid(257);
        let s1 = GridFunction::from_fn(g.clone(), |x| x.sin()).unwrap();
        let s2 = GridFunction::from_fn(g, |x| (2.0 * x).sin()).unwrap();
        let sp = classical(2.0);
        let r1 = rayleigh_quotient(&s1, &sp).unwrap();
        assert!((r1 - 1.0).abs() < 1e-3);
        assert!((rayleigh_quotient(&s2, &sp).unwrap() - 4.0).abs() < 1e-2);
        let r37 = rayleigh_quotient(&s1.scaled(3.7), &sp).unwrap();
        assert!((r37 - r1).abs() < 1e-14);
        let z = GridFunction::zeros(s1.grid().clone());
        assert!(matches!(rayleigh_quotient(&z, &sp), Err(Error::Degenerate(_))));
    }

    #[test]
    fn residual_of_classical_sine() {
        let g = pi_grid(257);
        let s1 = normalize(&GridFunction::from_fn(g, |x| x.sin()).unwrap(), 2.0).unwrap();
        assert!(eigen_residual(&s1, 1.0, &classical(2.0)).unwrap() < 1e-3);
        let rough = GridFunction::from_fn(s1.grid().clone(), |x| x * (PI - x) * (1.0 + x)).unwrap();
        let r = rayleigh_quotient(&rough, &classical(2.0)).unwrap();
        assert!(eigen_residual(&rough, r, &classical(2.0)).unwrap() > 0.0);
    }

    #[test]
    fn classical_spectrum_p2() {
        let g = pi_grid(257);
        let opts = SolveOptions::default();
        let e1 = lambda_1(&classical(2.0), &g, &opts).unwrap();
        assert!((e1.lambda - 1.0).abs() < 1e-3);
        assert!(e1.converged && e1.residual <= 10.0 * opts.grad_tol);
        assert_eq!(e1.sign_changes, 0);
        assert!((lp_norm(&e1.eigenfunction, 2.0).unwrap() - 1.0).abs() < 1e-10);
        let e2 = lambda_2_estimate(&classical(2.0), &g, &opts, &e1).unwrap();
        assert!((e2.lambda - 4.0).abs() < 0.05 * 4.0);
        assert!(e2.upper_bound);
        assert_eq!(e2.sign_changes, 1);
        assert!(e2.converged);
    }

    #[test]
    fn classical_p3_matches_closed_form() {
        let p = 3.0;
        let g = Grid::build(1.0, 257, PsiMap::identity(), SpacingRule::UniformInPsi).unwrap();
        let opts = SolveOptions::default();
        let e1 = lambda_1(&classical(p), &g, &opts).unwrap();
        let want = (p - 1.0) * pi_p(p).powf(p);
        assert!((e1.lambda / want - 1.0).abs() < 0.01, "{} vs {want}", e1.lambda);
        let e2 = lambda_2_estimate(&classical(p), &g, &opts, &e1).unwrap();
        let want2 = (p - 1.0) * (2.0 * pi_p(p)).powf(p);
        assert!((e2.lambda / want2 - 1.0).abs() < 0.1, "{} vs {want2}", e2.lambda);
        assert_eq!(e2.sign_changes, 1);
    }

    #[test]
    fn fractional_p2_matches_generalized_eigenproblem() {
        // For p = 2 both levels are eigenvalues of KᵀDK v = λ W v.
        let g = Grid::build(1.0, 97, PsiMap::identity(), SpacingRule::UniformInPsi).unwrap();
        let sp = SpaceParams::new(2.0, FractionalOrder::new(0.75, 0.5).unwrap()).unwrap();
        let k = KineticOperator::new(&g, &sp.ord).unwrap().to_matrix();
        let n = g.len();
        let m = n - 2;
        let steps: Vec<f64> = g.psi_steps().collect();
        let w = g.trapezoid_weights();
        let mut kd = k.columns(1, m).clone_owned();
        for (c, h) in steps.iter().enumerate() {
            kd.row_mut(c).scale_mut(h.sqrt());
        }
        let a = kd.transpose() * &kd;
        let s = DMatrix::from_fn(m, m, |i, j| a[(i, j)] / (w[i + 1] * w[j + 1]).sqrt());
        let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let opts = SolveOptions::default();
        let e1 = lambda_1(&sp, &g, &opts).unwrap();
        let e2 = lambda_2_estimate(&sp, &g, &opts, &e1).unwrap();
        assert!((e1.lambda / ev[0] - 1.0).abs() < 1e-9, "{} vs {}", e1.lambda, ev[0]);
        assert!((e2.lambda / ev[1] - 1.0).abs() < 1e-6, "{} vs {}", e2.lambda, ev[1]);
    }

    #[test]
    fn t_scaling() {
        let p = 2.5;
        let opts = SolveOptions::default();
        let l = |t: f64| {
            let g = Grid::build(t, 129, PsiMap::identity(), SpacingRule::UniformInPsi).unwrap();
            lambda_1(&classical(p), &g, &opts).unwrap().lambda
        };
        let (a, b) = (l(1.0), l(2.0));
        assert!((b / a - 2f64.powf(-p)).abs() < 1e-10);
    }
}
