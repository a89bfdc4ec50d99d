//! The nonlinearity f(ξ, t), its primitive F and the defect Θ = F − t f.

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{param, Error, Result};

pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Tolerance of the adaptive primitive quadrature (absolute, relative once |F| > 1).
pub const PRIMITIVE_TOL: f64 = 1e-10;
const MEMO_LIMIT: usize = 1 << 16;

#[derive(Clone)]
pub struct Nonlinearity {
    id: String,
    f: Fn2,
    primitive: Option<Fn2>,
    df_dt: Option<Fn2>,
    memo: Arc<Mutex<HashMap<(u64, u64), f64>>>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("id", &self.id)
            .field("has_primitive", &self.primitive.is_some())
            .finish()
    }
}

fn signed_pow(t: f64, e: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.abs().powf(e) * t.signum()
    }
}

impl Nonlinearity {
    /// A user nonlinearity; F is obtained by quadrature.
    pub fn custom<F>(id: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            f: Arc::new(f),
            primitive: None,
            df_dt: None,
            memo: Arc::new(Mutex::new(HashMap::new())),
        }
    }

    pub fn with_primitive<F>(mut self, primitive: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.primitive = Some(Arc::new(primitive));
        self
    }

    pub fn with_df_dt<F>(mut self, df: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.df_dt = Some(Arc::new(df));
        self
    }

    /// f ≡ 0.
    pub fn zero() -> Self {
        Self::custom("zero", |_, _| 0.0)
            .with_primitive(|_, _| 0.0)
            .with_df_dt(|_, _| 0.0)
    }

    /// f = λ|t|^{p−2}t, F = λ|t|^p/p.
    pub fn power(lambda: f64, p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(param("problem.p", format!("must be finite and > 1, got {p}")));
        }
        Ok(Self::custom("power", move |_, t| lambda * signed_pow(t, p - 1.0))
            .with_primitive(move |_, t| lambda * t.abs().powf(p) / p)
            .with_df_dt(move |_, t| {
                if t == 0.0 {
                    if p == 2.0 {
                        lambda
                    } else {
                        0.0
                    }
                } else {
                    lambda * (p - 1.0) * t.abs().powf(p - 2.0)
                }
            }))
    }

    /// f = λt.
    pub fn linear(lambda: f64) -> Self {
        Self::custom("linear", move |_, t| lambda * t)
            .with_primitive(move |_, t| 0.5 * lambda * t * t)
            .with_df_dt(move |_, _| lambda)
    }

    /// f = c.
    pub fn affine(c: f64) -> Self {
        Self::custom("affine", move |_, _| c)
            .with_primitive(move |_, t| c * t)
            .with_df_dt(|_, _| 0.0)
    }

    /// F = λ|t|^p + a(1 − cos t).
    pub fn sine_perturbed(lambda: f64, a: f64, p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(param("problem.p", format!("must be finite and > 1, got {p}")));
        }
        Ok(
            Self::custom("sine_perturbed", move |_, t| {
                p * lambda * signed_pow(t, p - 1.0) + a * t.sin()
            })
            .with_primitive(move |_, t| lambda * t.abs().powf(p) + a * (1.0 - t.cos()))
            .with_df_dt(move |_, t| {
                let k = if t == 0.0 {
                    if p == 2.0 {
                        2.0 * lambda
                    } else {
                        0.0
                    }
                } else {
                    p * (p - 1.0) * lambda * t.abs().powf(p - 2.0)
                };
                k + a * t.cos()
            }),
        )
    }

    /// F = −|t| ln(1 + |t|), for which Θ = t²/(1 + |t|) and Θ/|t| → 1.
    pub fn log_sublinear() -> Self {
        Self::custom("log_sublinear", |_, t| {
            let a = t.abs();
            -t.signum() * ((1.0 + a).ln() + a / (1.0 + a))
        })
        .with_primitive(|_, t| -t.abs() * (1.0 + t.abs()).ln())
        .with_df_dt(|_, t| {
            let a = t.abs();
            -(1.0 / (1.0 + a) + 1.0 / ((1.0 + a) * (1.0 + a)))
        })
    }

    /// F = λ_mid|t|^p + h·t with λ_mid the midpoint of [λ_lo + ε, λ_hi].
    ///
    /// Satisfies (λ_lo + ε)|t|^p − V ≤ F ≤ λ_hi|t|^p + V with the constant V of
    /// [`midpoint_bracket_v`], and Θ = (1 − p)λ_mid|t|^p.
    pub fn midpoint_bracket(lambda_lo: f64, lambda_hi: f64, eps: f64, h: f64, p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(param("problem.p", format!("must be finite and > 1, got {p}")));
        }
        if !(lambda_lo + eps < lambda_hi) {
            return Err(Error::Config(format!(
                "bracket is empty: λ_l + ε = {} ≥ λ_(l+1) = {lambda_hi}",
                lambda_lo + eps
            )));
        }
        let mid = 0.5 * (lambda_lo + eps + lambda_hi);
        Ok(Self::custom("midpoint_bracket", move |_, t| {
            p * mid * signed_pow(t, p - 1.0) + h
        })
        .with_primitive(move |_, t| mid * t.abs().powf(p) + h * t)
        .with_df_dt(move |_, t| {
            if t == 0.0 {
                if p == 2.0 {
                    2.0 * mid
                } else {
                    0.0
                }
            } else {
                p * (p - 1.0) * mid * t.abs().powf(p - 2.0)
            }
        }))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn has_primitive(&self) -> bool {
        self.primitive.is_some()
    }

    pub fn f(&self, xi: f64, t: f64) -> f64 {
        (self.f)(xi, t)
    }

    /// F(ξ, t) = ∫₀ᵗ f(ξ, s) ds, supplied or by adaptive Simpson.
    pub fn primitive(&self, xi: f64, t: f64) -> Result<f64> {
        if let Some(p) = &self.primitive {
            return Ok(p(xi, t));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let key = (xi.to_bits(), t.to_bits());
        if let Some(&v) = self.memo.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let g = |s: f64| (self.f)(xi, s);
        let v = adaptive_simpson(&g, 0.0, t, PRIMITIVE_TOL)?;
        let mut memo = self.memo.lock().unwrap();
        if memo.len() >= MEMO_LIMIT {
            memo.clear();
        }
        memo.insert(key, v);
        Ok(v)
    }

    /// Θ(ξ, t) = F(ξ, t) − t f(ξ, t).
    pub fn theta(&self, xi: f64, t: f64) -> Result<f64> {
        Ok(self.primitive(xi, t)? - t * self.f(xi, t))
    }

    /// ∂f/∂t, supplied or by a central difference.
    pub fn df_dt(&self, xi: f64, t: f64) -> f64 {
        if let Some(d) = &self.df_dt {
            return d(xi, t);
        }
        let h = 1e-6 * t.abs().max(1.0);
        (self.f(xi, t + h) - self.f(xi, t - h)) / (2.0 * h)
    }
}

/// The constant V certified for [`Nonlinearity::midpoint_bracket`].
pub fn midpoint_bracket_v(lambda_lo: f64, lambda_hi: f64, eps: f64, h: f64, p: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    let delta = 0.5 * (lambda_hi - lambda_lo - eps);
    (1.0 - 1.0 / p) * h.abs() * (h.abs() / (p * delta)).powf(1.0 / (p - 1.0))
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

const EVAL_BUDGET: usize = 1 << 22;

// Absolute tolerance `tol`, loosened to relative for primitives larger than one.
fn adaptive_simpson(g: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let (fa, fb) = (g(a), g(b));
    let m = 0.5 * (a + b);
    let fm = g(m);
    let whole = simpson(fa, fm, fb, a, b);
    let budget = Cell::new(EVAL_BUDGET);
    let tol = tol * whole.abs().max(1.0);
    let v = simpson_rec(g, a, b, fa, fm, fb, whole, tol, 50, &budget)?;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("primitive over [{a}, {b}] is not finite")));
    }
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    g: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &Cell<usize>,
) -> Result<f64> {
    if budget.get() < 2 || depth == 0 {
        return Err(Error::Numeric(format!(
            "adaptive quadrature did not converge on [{a}, {b}]"
        )));
    }
    budget.set(budget.get() - 2);
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (g(lm), g(rm));
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    Ok(simpson_rec(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, budget)?
        + simpson_rec(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, budget)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_examples() {
        let lin = Nonlinearity::custom("t", |_, t| t);
        assert!((lin.primitive(0.3, 2.0).unwrap() - 2.0).abs() < 1e-10);
        let cube = Nonlinearity::custom("p3", |_, t: f64| t.abs() * t);
        assert!((cube.primitive(0.0, 2.0).unwrap() - 8.0 / 3.0).abs() < 1e-10);
        assert!((Nonlinearity::power(1.0, 3.0).unwrap().primitive(0.0, 2.0).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        let wild = Nonlinearity::custom("w", |x, t: f64| (x * t).sin() + t.exp());
        assert_eq!(wild.primitive(0.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        let q = Nonlinearity::custom("q", |x, t: f64| x * t.cos() + 3.0 * t * t);
        for &(x, t) in &[(0.2, 1.5), (1.0, -2.0), (0.7, 10.0)] {
            let want = x * f64::sin(t) + t * t * t;
            assert!((q.primitive(x, t).unwrap() - want).abs() < 1e-9);
        }
        let log = Nonlinearity::log_sublinear();
        let numeric = Nonlinearity::custom("log", move |x, t| log.f(x, t));
        for &t in &[0.5, -3.0, 40.0] {
            let want = Nonlinearity::log_sublinear().primitive(0.0, t).unwrap();
            assert!((numeric.primitive(0.0, t).unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn theta_examples() {
        let lin = Nonlinearity::custom("t", |_, t| t);
        assert!((lin.theta(0.0, 2.0).unwrap() + 2.0).abs() < 1e-10);
        let pw = Nonlinearity::power(1.0, 2.0).unwrap();
        assert!((pw.theta(0.0, 3.0).unwrap() + 4.5).abs() < 1e-14);
        assert_eq!(pw.theta(0.0, 0.0).unwrap(), 0.0);
        for &p in &[1.5, 2.0, 3.0, 4.5] {
            let pw = Nonlinearity::power(1.0, p).unwrap();
            for &t in &[-2.0, 0.3, 7.0] {
                let lhs = pw.theta(0.0, t).unwrap() * p;
                let rhs = (1.0 - p) * f64::abs(t).powf(p);
                assert!((lhs - rhs).abs() < 1e-12 * rhs.abs());
            }
        }
    }

    #[test]
    fn catalog_primitives_are_consistent() {
        let cat = [
            Nonlinearity::power(2.5, 3.0).unwrap(),
            Nonlinearity::linear(-1.5),
            Nonlinearity::affine(0.7),
            Nonlinearity::sine_perturbed(1.2, 0.4, 2.0).unwrap(),
            Nonlinearity::log_sublinear(),
            Nonlinearity::midpoint_bracket(1.0, 4.0, 0.1, 0.5, 2.0).unwrap(),
            Nonlinearity::zero(),
        ];
        for nl in &cat {
            let f = nl.f.clone();
            let numeric = Nonlinearity::custom("q", move |x, t| f(x, t));
            for &t in &[-3.0, -0.4, 0.0, 1.1, 5.0] {
                let a = nl.primitive(0.5, t).unwrap();
                let b = numeric.primitive(0.5, t).unwrap();
                assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()), "{}: {a} vs {b}", nl.id());
                let h = 1e-5;
                let fd = (nl.f(0.5, t + h) - nl.f(0.5, t - h)) / (2.0 * h);
                if t != 0.0 {
                    assert!((nl.df_dt(0.5, t) - fd).abs() < 1e-5 * (1.0 + fd.abs()), "{}", nl.id());
                }
            }
            assert_eq!(nl.primitive(0.5, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn midpoint_bracket_bounds() {
        let (lo, hi, eps, h, p) = (1.0, 4.0, 0.2, 0.8, 2.0);
        let nl = Nonlinearity::midpoint_bracket(lo, hi, eps, h, p).unwrap();
        let v = midpoint_bracket_v(lo, hi, eps, h, p);
        for i in -400..=400 {
            let t = i as f64 * 0.01;
            let f = nl.primitive(0.0, t).unwrap();
            assert!((lo + eps) * t * t - v <= f + 1e-14);
            assert!(f <= hi * t * t + v + 1e-14);
        }
        assert!(Nonlinearity::midpoint_bracket(1.0, 1.1, 0.2, 0.0, 2.0).is_err());
    }
}
