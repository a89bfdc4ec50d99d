//! The coordinate function ψ and discretization grids of Ω = [0, T].
//!
//! Every fractional operator in this crate is a convolution in the variable
//! u = ψ(ξ), so grids carry both the physical nodes ξᵢ and their images ψ(ξᵢ).
//! Quadrature only ever uses differences ψ(ξᵢ₊₁) − ψ(ξᵢ); pointwise ψ′ is needed
//! only to validate the map at interior nodes.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::{param, Error, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user supplied ψ with its derivative and, optionally, its inverse.
#[derive(Clone)]
pub struct CustomMap {
    name: String,
    psi: RealFn,
    dpsi: RealFn,
    inverse: Option<RealFn>,
}

impl fmt::Debug for CustomMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMap")
            .field("name", &self.name)
            .field("has_inverse", &self.inverse.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum PsiKind {
    Identity,
    Power { rho: f64 },
    Custom(CustomMap),
}

/// Increasing coordinate map ψ on a closed interval [a, b].
#[derive(Debug, Clone)]
pub struct PsiMap {
    kind: PsiKind,
    a: f64,
    b: f64,
}

impl PsiMap {
    /// ψ(ξ) = ξ on [0, ∞).
    pub fn identity() -> Self {
        Self {
            kind: PsiKind::Identity,
            a: 0.0,
            b: f64::INFINITY,
        }
    }

    /// ψ(ξ) = ξ^ρ on [0, ∞), ρ > 0.
    pub fn power(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(param("psi.rho", format!("must be positive and finite, got {rho}")));
        }
        Ok(Self {
            kind: PsiKind::Power { rho },
            a: 0.0,
            b: f64::INFINITY,
        })
    }

    /// A user map. Without an inverse, ψ⁻¹ is computed by bisection.
    pub fn custom<P, D>(name: impl Into<String>, psi: P, dpsi: D) -> Self
    where
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: PsiKind::Custom(CustomMap {
                name: name.into(),
                psi: Arc::new(psi),
                dpsi: Arc::new(dpsi),
                inverse: None,
            }),
            a: 0.0,
            b: f64::INFINITY,
        }
    }

    /// Attach an analytic inverse to a custom map; no-op for built-in kinds.
    pub fn with_inverse<I>(mut self, inverse: I) -> Self
    where
        I: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if let PsiKind::Custom(c) = &mut self.kind {
            c.inverse = Some(Arc::new(inverse));
        }
        self
    }

    /// Restrict the domain to [a, b].
    pub fn with_domain(mut self, a: f64, b: f64) -> Result<Self> {
        if a.is_nan() || b.is_nan() || a >= b {
            return Err(Error::InvalidMap(format!("empty domain [{a}, {b}]")));
        }
        self.a = a;
        self.b = b;
        Ok(self)
    }

    pub fn kind(&self) -> &PsiKind {
        &self.kind
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, PsiKind::Identity)
            || matches!(self.kind, PsiKind::Power { rho } if rho == 1.0)
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            PsiKind::Identity => "identity".to_string(),
            PsiKind::Power { rho } => format!("power(rho={rho})"),
            PsiKind::Custom(c) => format!("custom({})", c.name),
        }
    }

    fn check_domain(&self, xi: f64) -> Result<()> {
        if xi.is_nan() || xi < self.a || xi > self.b {
            return Err(Error::Domain {
                xi,
                a: self.a,
                b: self.b,
            });
        }
        Ok(())
    }

    /// ψ(ξ).
    pub fn eval(&self, xi: f64) -> Result<f64> {
        self.check_domain(xi)?;
        Ok(match &self.kind {
            PsiKind::Identity => xi,
            PsiKind::Power { rho } => xi.powf(*rho),
            PsiKind::Custom(c) => (c.psi)(xi),
        })
    }

    /// ψ′(ξ); errors unless the value is finite and strictly positive.
    pub fn derivative(&self, xi: f64) -> Result<f64> {
        self.check_domain(xi)?;
        let d = match &self.kind {
            PsiKind::Identity => 1.0,
            PsiKind::Power { rho } if *rho == 1.0 => 1.0,
            PsiKind::Power { rho } => rho * xi.powf(rho - 1.0),
            PsiKind::Custom(c) => (c.dpsi)(xi),
        };
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidMap(format!(
                "ψ′({xi}) = {d} is not finite and positive for {}",
                self.label()
            )));
        }
        Ok(d)
    }

    /// ψ⁻¹(u), searched inside `[lo, hi]` when no closed form is available.
    pub fn inverse(&self, u: f64, lo: f64, hi: f64) -> Result<f64> {
        match &self.kind {
            PsiKind::Identity => Ok(u),
            PsiKind::Power { rho } => {
                if u < 0.0 {
                    return Err(Error::InvalidMap(format!("ξ^ρ has no preimage of {u}")));
                }
                Ok(u.powf(1.0 / rho))
            }
            PsiKind::Custom(c) => match &c.inverse {
                Some(inv) => Ok(inv(u)),
                None => bisect_inverse(&*c.psi, u, lo, hi),
            },
        }
    }
}

fn bisect_inverse(psi: &dyn Fn(f64) -> f64, u: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let (flo, fhi) = (psi(lo) - u, psi(hi) - u);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::InvalidMap(format!(
            "cannot bracket ψ⁻¹({u}) in [{lo}, {hi}]"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if psi(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// How nodes are spread over [0, T].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpacingRule {
    UniformInXi,
    #[default]
    UniformInPsi,
}

/// Discretization of Ω = [0, T] in ξ and ψ coordinates. Immutable.
#[derive(Debug, Clone)]
pub struct Grid {
    t_end: f64,
    map: PsiMap,
    rule: SpacingRule,
    nodes: Vec<f64>,
    psi_nodes: Vec<f64>,
    trapezoid: Vec<f64>,
    fingerprint: u64,
}

impl Grid {
    /// Build an `n`-node grid of [0, T]. Under [`SpacingRule::UniformInPsi`] the
    /// nodes are ψ⁻¹ of an equispaced partition of [ψ(0), ψ(T)].
    pub fn build(t_end: f64, n: usize, map: PsiMap, rule: SpacingRule) -> Result<Arc<Grid>> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(param("grid.T", format!("must be positive, got {t_end}")));
        }
        if n < 3 {
            return Err(param("grid.n", format!("need at least 3 nodes, got {n}")));
        }
        let (a, b) = map.domain();
        if a > 0.0 || b < t_end {
            return Err(Error::InvalidMap(format!(
                "domain [{a}, {b}] does not contain [0, {t_end}]"
            )));
        }
        let psi0 = map.eval(0.0)?;
        let psi_t = map.eval(t_end)?;
        if !psi0.is_finite() || !psi_t.is_finite() {
            return Err(Error::InvalidMap(format!(
                "ψ must be finite on [0, T]; got ψ(0) = {psi0}, ψ(T) = {psi_t} \
                 (log-type maps require weighted spaces)"
            )));
        }
        if psi_t <= psi0 {
            return Err(Error::InvalidMap("ψ(T) ≤ ψ(0), map is not increasing".into()));
        }
        let last = (n - 1) as f64;
        let (nodes, psi_nodes) = match rule {
            SpacingRule::UniformInXi => {
                let mut nodes: Vec<f64> = (0..n).map(|i| t_end * i as f64 / last).collect();
                nodes[n - 1] = t_end;
                let psi = nodes.iter().map(|&x| map.eval(x)).collect::<Result<Vec<_>>>()?;
                (nodes, psi)
            }
            SpacingRule::UniformInPsi => {
                let step = (psi_t - psi0) / last;
                let mut psi: Vec<f64> = (0..n).map(|i| psi0 + step * i as f64).collect();
                psi[n - 1] = psi_t;
                let mut nodes = Vec::with_capacity(n);
                nodes.push(0.0);
                for &u in &psi[1..n - 1] {
                    nodes.push(map.inverse(u, 0.0, t_end)?);
                }
                nodes.push(t_end);
                (nodes, psi)
            }
        };
        for i in 1..n {
            if !(nodes[i] > nodes[i - 1]) || !(psi_nodes[i] > psi_nodes[i - 1]) {
                return Err(Error::InvalidMap(format!(
                    "map is not strictly increasing near ξ = {}",
                    nodes[i]
                )));
            }
        }
        for &x in &nodes[1..n - 1] {
            map.derivative(x)?;
        }

        let mut trapezoid = vec![0.0; n];
        for i in 0..n - 1 {
            let h = psi_nodes[i + 1] - psi_nodes[i];
            trapezoid[i] += 0.5 * h;
            trapezoid[i + 1] += 0.5 * h;
        }
        let mut hasher = DefaultHasher::new();
        for &u in &psi_nodes {
            u.to_bits().hash(&mut hasher);
        }
        for &x in &nodes {
            x.to_bits().hash(&mut hasher);
        }
        Ok(Arc::new(Grid {
            t_end,
            map,
            rule,
            nodes,
            psi_nodes,
            trapezoid,
            fingerprint: hasher.finish(),
        }))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn map(&self) -> &PsiMap {
        &self.map
    }

    pub fn rule(&self) -> SpacingRule {
        self.rule
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn psi_nodes(&self) -> &[f64] {
        &self.psi_nodes
    }

    /// Trapezoid weights in ψ: ∫ ψ′ g dξ ≈ Σ wᵢ g(ξᵢ).
    pub fn trapezoid_weights(&self) -> &[f64] {
        &self.trapezoid
    }

    /// Cell widths Δuᵢ = ψ(ξᵢ₊₁) − ψ(ξᵢ).
    pub fn psi_steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.psi_nodes.windows(2).map(|w| w[1] - w[0])
    }

    /// Mean ψ-spacing (ψ(T) − ψ(0)) / (n − 1).
    pub fn mean_step(&self) -> f64 {
        (self.psi_nodes[self.len() - 1] - self.psi_nodes[0]) / (self.len() - 1) as f64
    }

    /// Hash of the node coordinates; equal grids share operator caches.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.fingerprint == other.fingerprint
                && self.psi_nodes == other.psi_nodes
                && self.nodes == other.nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_examples() {
        assert_eq!(PsiMap::identity().eval(0.5).unwrap(), 0.5);
        assert_eq!(PsiMap::power(2.0).unwrap().eval(3.0).unwrap(), 9.0);
        assert_eq!(PsiMap::power(0.5).unwrap().eval(4.0).unwrap(), 2.0);
        assert!(matches!(
            PsiMap::identity().eval(-1.0),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(PsiMap::identity().derivative(0.7).unwrap(), 1.0);
        assert_eq!(PsiMap::power(2.0).unwrap().derivative(3.0).unwrap(), 6.0);
        assert_eq!(PsiMap::power(1.0).unwrap().derivative(5.0).unwrap(), 1.0);
        // singular and degenerate endpoints
        assert!(PsiMap::power(0.5).unwrap().derivative(0.0).is_err());
        assert!(PsiMap::power(2.0).unwrap().derivative(0.0).is_err());
    }

    #[test]
    fn build_examples() {
        let g = Grid::build(1.0, 3, PsiMap::identity(), SpacingRule::UniformInXi).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.5, 1.0]);
        let g = Grid::build(2.0, 5, PsiMap::identity(), SpacingRule::UniformInXi).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.5, 1.0, 1.5, 2.0]);
        let g = Grid::build(1.0, 3, PsiMap::power(2.0).unwrap(), SpacingRule::UniformInPsi)
            .unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert!((g.nodes()[1] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(g.nodes()[2], 1.0);
    }

    #[test]
    fn identity_rules_agree() {
        let a = Grid::build(1.7, 33, PsiMap::identity(), SpacingRule::UniformInXi).unwrap();
        let b = Grid::build(1.7, 33, PsiMap::identity(), SpacingRule::UniformInPsi).unwrap();
        for (x, y) in a.nodes().iter().zip(b.nodes()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn psi_uniform_and_invertible() {
        for map in [
            PsiMap::power(2.0).unwrap(),
            PsiMap::power(0.5).unwrap(),
            PsiMap::custom("exp-1", |x: f64| x.exp() - 1.0, |x: f64| x.exp()),
        ] {
            let g = Grid::build(2.0, 65, map.clone(), SpacingRule::UniformInPsi).unwrap();
            let h = g.mean_step();
            for d in g.psi_steps() {
                assert!((d - h).abs() < 1e-13 * h.max(1.0));
            }
            for (&x, &u) in g.nodes().iter().zip(g.psi_nodes()) {
                let back = map.inverse(map.eval(x).unwrap(), 0.0, 2.0).unwrap();
                assert!((back - x).abs() <= 1e-12 * x.max(1e-300) + 1e-300 || x == 0.0);
                assert!((map.eval(x).unwrap() - u).abs() < 1e-12 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn log_map_is_rejected() {
        let ln = PsiMap::custom("ln", |x: f64| x.ln(), |x: f64| 1.0 / x);
        assert!(matches!(
            Grid::build(1.0, 9, ln, SpacingRule::UniformInXi),
            Err(Error::InvalidMap(_))
        ));
    }

    #[test]
    fn decreasing_map_is_rejected() {
        let bad = PsiMap::custom("neg", |x: f64| -x, |_| -1.0);
        assert!(Grid::build(1.0, 9, bad, SpacingRule::UniformInXi).is_err());
    }

    #[test]
    fn bad_parameters() {
        assert!(Grid::build(0.0, 5, PsiMap::identity(), SpacingRule::UniformInXi).is_err());
        assert!(Grid::build(1.0, 2, PsiMap::identity(), SpacingRule::UniformInXi).is_err());
        assert!(PsiMap::power(-1.0).is_err());
    }

    #[test]
    fn trapezoid_weights_sum_to_psi_range() {
        let g = Grid::build(1.3, 40, PsiMap::power(1.5).unwrap(), SpacingRule::UniformInXi)
            .unwrap();
        let s: f64 = g.trapezoid_weights().iter().sum();
        assert!((s - 1.3f64.powf(1.5)).abs() < 1e-13);
    }
}
