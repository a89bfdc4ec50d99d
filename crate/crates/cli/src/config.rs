//! Flat `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use psilap_core::hypothesis::{HypothesisConfig, Theorem};
use psilap_core::nonlinearity::midpoint_bracket_v;
use psilap_core::solver::{Direction, Method, StepRule};
use psilap_core::{FractionalOrder, Grid, Nonlinearity, PsiMap, SolveOptions, SpaceParams, SpacingRule};

use crate::error::{config_err, CliError, CliResult};
use crate::expr::Expr;

pub const KNOWN_KEYS: &[&str] = &[
    "run.label",
    "run.out_dir",
    "psi.kind",
    "psi.rho",
    "grid.T",
    "grid.n",
    "grid.rule",
    "problem.p",
    "problem.alpha",
    "problem.beta",
    "nonlinearity.id",
    "nonlinearity.lambda",
    "nonlinearity.c",
    "nonlinearity.a",
    "nonlinearity.h",
    "nonlinearity.lambda_lo",
    "nonlinearity.lambda_hi",
    "nonlinearity.eps",
    "nonlinearity.f",
    "nonlinearity.F",
    "solver.method",
    "solver.direction",
    "solver.step_rule",
    "solver.max_iter",
    "solver.grad_tol",
    "solver.initial_step",
    "solver.armijo_c",
    "solver.armijo_shrink",
    "solver.lbfgs_memory",
    "solver.newton_polish",
    "solver.regularization_eps",
    "solver.seed",
    "solver.init",
    "solver.init_amplitude",
    "hypothesis.theorem",
    "hypothesis.l",
    "hypothesis.epsilon",
    "hypothesis.lambda_l",
    "hypothesis.lambda_next",
    "hypothesis.V",
    "hypothesis.C",
    "hypothesis.t_max",
    "hypothesis.t_samples",
    "hypothesis.t_lo",
    "hypothesis.t_hi",
    "hypothesis.per_decade",
    "converge.case",
    "converge.levels",
    "converge.reference",
    "converge.delta",
    "converge.target_order",
    "ibp.levels",
    "ibp.tol",
    "ibp.tol_hilfer",
];

/// Key/value pairs as written, with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = match line.find('#') {
                Some(k) => &line[..k],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {lineno}: expected `section.key = value`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KNOWN_KEYS.contains(&k) {
                return Err(config_err(format!("line {lineno}: unknown key `{k}`")));
            }
            if v.is_empty() {
                return Err(config_err(format!("line {lineno}: empty value for `{k}`")));
            }
            if entries.insert(k.to_string(), (v.to_string(), lineno)).is_some() {
                return Err(config_err(format!("line {lineno}: duplicate key `{k}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(config_err(format!("unknown key `{key}`")));
        }
        self.entries.insert(key.to_string(), (value.into(), 0));
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> CliResult<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| config_err(format!("`{key}` (line {line}): expected {what}, got `{v}`"))),
        }
    }

    pub fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        let v: Option<f64> = self.parsed(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(config_err(format!("`{key}` must be finite"))),
            v => Ok(v),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> CliResult<f64> {
        self.f64(key)?
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> CliResult<usize> {
        Ok(self.parsed(key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> CliResult<u64> {
        Ok(self.parsed(key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> CliResult<bool> {
        Ok(self.parsed(key, "true or false")?.unwrap_or(default))
    }

    pub fn usize_list(&self, key: &str) -> CliResult<Option<Vec<usize>>> {
        let Some(v) = self.str(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| config_err(format!("`{key}`: expected a comma list of integers, got `{v}`")))
            })
            .collect::<CliResult<Vec<_>>>()
            .map(Some)
    }

    fn choice<'a>(&self, key: &str, default: &'a str, allowed: &[&'a str]) -> CliResult<&'a str> {
        match self.str(key) {
            None => Ok(default),
            Some(v) => allowed
                .iter()
                .find(|a| **a == v)
                .copied()
                .ok_or_else(|| config_err(format!("`{key}` must be one of {}, got `{v}`", allowed.join(" | ")))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Default,
    Random,
}

#[derive(Clone)]
pub enum NonlinearitySpec {
    Zero,
    Power { lambda: f64 },
    Linear { lambda: f64 },
    Affine { c: f64 },
    SinePerturbed { lambda: f64, a: f64 },
    LogSublinear,
    MidpointBracket { lo: f64, hi: f64, eps: f64, h: f64 },
    Custom { f: Arc<Expr>, primitive: Option<Arc<Expr>> },
}

impl NonlinearitySpec {
    pub fn build(&self, p: f64) -> psilap_core::Result<Nonlinearity> {
        Ok(match self {
            Self::Zero => Nonlinearity::zero(),
            Self::Power { lambda } => Nonlinearity::power(*lambda, p)?,
            Self::Linear { lambda } => Nonlinearity::linear(*lambda),
            Self::Affine { c } => Nonlinearity::affine(*c),
            Self::SinePerturbed { lambda, a } => Nonlinearity::sine_perturbed(*lambda, *a, p)?,
            Self::LogSublinear => Nonlinearity::log_sublinear(),
            Self::MidpointBracket { lo, hi, eps, h } => Nonlinearity::midpoint_bracket(*lo, *hi, *eps, *h, p)?,
            Self::Custom { f, primitive } => {
                let fe = f.clone();
                let nl = Nonlinearity::custom("custom", move |x, t| fe.eval2(x, t));
                match primitive {
                    Some(pe) => {
                        let pe = pe.clone();
                        nl.with_primitive(move |x, t| pe.eval2(x, t))
                    }
                    None => nl,
                }
            }
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Power { .. } => "power",
            Self::Linear { .. } => "linear",
            Self::Affine { .. } => "affine",
            Self::SinePerturbed { .. } => "sine_perturbed",
            Self::LogSublinear => "log_sublinear",
            Self::MidpointBracket { .. } => "midpoint_bracket",
            Self::Custom { .. } => "custom",
        }
    }
}

#[derive(Clone)]
pub enum PotentialSpec {
    Auto,
    Constant(f64),
    Expr(Arc<Expr>),
}

/// Everything the commands need, validated up front.
#[derive(Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub label: String,
    pub out_dir: PathBuf,
    pub t_end: f64,
    pub n: usize,
    pub map: PsiMap,
    pub rule: SpacingRule,
    pub sp: SpaceParams,
    pub nonlinearity: NonlinearitySpec,
    pub solver: SolveOptions,
    pub init: InitKind,
    pub init_amplitude: f64,
}

fn lift(key: &str, e: psilap_core::Error) -> CliError {
    config_err(format!("`{key}`: {e}"))
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> CliResult<Self> {
        let label = raw.str("run.label").unwrap_or("run").to_string();
        if label.contains(['/', '\\']) {
            return Err(config_err("`run.label` must not contain path separators"));
        }
        let out_dir = PathBuf::from(raw.str("run.out_dir").unwrap_or("."));

        let map = match raw.choice("psi.kind", "identity", &["identity", "power"])? {
            "identity" => {
                if raw.contains("psi.rho") {
                    return Err(config_err("`psi.rho` is only used with psi.kind = power"));
                }
                PsiMap::identity()
            }
            _ => {
                let rho = raw.require_f64("psi.rho")?;
                PsiMap::power(rho).map_err(|e| lift("psi.rho", e))?
            }
        };
        let t_end = raw.f64_or("grid.T", 1.0)?;
        if !(t_end > 0.0) {
            return Err(config_err("`grid.T` must be positive"));
        }
        let n = raw.usize_or("grid.n", 257)?;
        if n < 5 {
            return Err(config_err(format!("`grid.n` must be at least 5, got {n}")));
        }
        let rule = match raw.choice("grid.rule", "psi", &["psi", "xi"])? {
            "xi" => SpacingRule::UniformInXi,
            _ => SpacingRule::UniformInPsi,
        };

        let alpha = raw.f64_or("problem.alpha", 1.0)?;
        let beta = raw.f64_or("problem.beta", 0.0)?;
        let ord = FractionalOrder::new(alpha, beta).map_err(|e| lift("problem.alpha/beta", e))?;
        let sp = SpaceParams::new(raw.f64_or("problem.p", 2.0)?, ord).map_err(|e| lift("problem.p", e))?;

        let nonlinearity = parse_nonlinearity(&raw)?;
        // Surface catalog precondition failures (e.g. an empty bracket) now.
        let nl = nonlinearity
            .build(sp.p)
            .map_err(|e| lift("nonlinearity", e))?;
        let probe = nl.f(0.5 * t_end, 1.0);
        if !probe.is_finite() {
            return Err(config_err(format!("`nonlinearity`: f(T/2, 1) = {probe} is not finite")));
        }

        let solver = parse_solver(&raw)?;
        let init = match raw.choice("solver.init", "default", &["default", "random"])? {
            "random" => InitKind::Random,
            _ => InitKind::Default,
        };
        let init_amplitude = raw.f64_or("solver.init_amplitude", 1.0)?;

        Ok(Self {
            raw,
            label,
            out_dir,
            t_end,
            n,
            map,
            rule,
            sp,
            nonlinearity,
            solver,
            init,
            init_amplitude,
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_raw(RawConfig::load(path)?)
    }

    pub fn grid(&self) -> CliResult<Arc<Grid>> {
        self.grid_with(self.n)
    }

    pub fn grid_with(&self, n: usize) -> CliResult<Arc<Grid>> {
        Grid::build(self.t_end, n, self.map.clone(), self.rule).map_err(|e| lift("grid", e))
    }

    pub fn nonlinearity(&self) -> CliResult<Nonlinearity> {
        self.nonlinearity
            .build(self.sp.p)
            .map_err(|e| lift("nonlinearity", e))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.solver.seed = seed;
        self
    }
}

fn parse_nonlinearity(raw: &RawConfig) -> CliResult<NonlinearitySpec> {
    let id = raw.choice(
        "nonlinearity.id",
        "zero",
        &[
            "zero",
            "power",
            "linear",
            "affine",
            "sine_perturbed",
            "log_sublinear",
            "midpoint_bracket",
            "custom",
        ],
    )?;
    let used: &[&str] = match id {
        "power" | "linear" => &["nonlinearity.lambda"],
        "affine" => &["nonlinearity.c"],
        "sine_perturbed" => &["nonlinearity.lambda", "nonlinearity.a"],
        "midpoint_bracket" => &[
            "nonlinearity.lambda_lo",
            "nonlinearity.lambda_hi",
            "nonlinearity.eps",
            "nonlinearity.h",
        ],
        "custom" => &["nonlinearity.f", "nonlinearity.F"],
        _ => &[],
    };
    for key in KNOWN_KEYS.iter().filter(|k| k.starts_with("nonlinearity.") && **k != "nonlinearity.id") {
        if raw.contains(key) && !used.contains(key) {
            return Err(config_err(format!("`{key}` is not used by nonlinearity.id = {id}")));
        }
    }
    Ok(match id {
        "zero" => NonlinearitySpec::Zero,
        "power" => NonlinearitySpec::Power {
            lambda: raw.f64_or("nonlinearity.lambda", 1.0)?,
        },
        "linear" => NonlinearitySpec::Linear {
            lambda: raw.f64_or("nonlinearity.lambda", 1.0)?,
        },
        "affine" => NonlinearitySpec::Affine {
            c: raw.f64_or("nonlinearity.c", 1.0)?,
        },
        "sine_perturbed" => NonlinearitySpec::SinePerturbed {
            lambda: raw.f64_or("nonlinearity.lambda", 1.0)?,
            a: raw.f64_or("nonlinearity.a", 1.0)?,
        },
        "log_sublinear" => NonlinearitySpec::LogSublinear,
        "midpoint_bracket" => NonlinearitySpec::MidpointBracket {
            lo: raw.require_f64("nonlinearity.lambda_lo")?,
            hi: raw.require_f64("nonlinearity.lambda_hi")?,
            eps: raw.require_f64("nonlinearity.eps")?,
            h: raw.f64_or("nonlinearity.h", 0.0)?,
        },
        _ => {
            let f = raw
                .str("nonlinearity.f")
                .ok_or_else(|| config_err("missing required key `nonlinearity.f`"))?;
            let f = Expr::parse("nonlinearity.f", f, &["xi", "t"])?;
            let primitive = match raw.str("nonlinearity.F") {
                Some(s) => Some(Arc::new(Expr::parse("nonlinearity.F", s, &["xi", "t"])?)),
                None => None,
            };
            NonlinearitySpec::Custom {
                f: Arc::new(f),
                primitive,
            }
        }
    })
}

fn parse_solver(raw: &RawConfig) -> CliResult<SolveOptions> {
    let d = SolveOptions::default();
    let opts = SolveOptions {
        max_iter: raw.usize_or("solver.max_iter", d.max_iter)?,
        grad_tol: raw.f64_or("solver.grad_tol", d.grad_tol)?,
        step_rule: match raw.choice("solver.step_rule", "armijo", &["armijo", "fixed"])? {
            "fixed" => StepRule::Fixed,
            _ => StepRule::ArmijoBacktracking,
        },
        initial_step: raw.f64_or("solver.initial_step", d.initial_step)?,
        armijo_c: raw.f64_or("solver.armijo_c", d.armijo_c)?,
        armijo_shrink: raw.f64_or("solver.armijo_shrink", d.armijo_shrink)?,
        seed: raw.u64_or("solver.seed", d.seed)?,
        method: match raw.choice("solver.method", "descent", &["descent", "newton"])? {
            "newton" => Method::Newton,
            _ => Method::Descent,
        },
        direction: match raw.choice("solver.direction", "lbfgs", &["lbfgs", "steepest"])? {
            "steepest" => Direction::Steepest,
            _ => Direction::Lbfgs,
        },
        lbfgs_memory: raw.usize_or("solver.lbfgs_memory", d.lbfgs_memory)?,
        newton_polish: raw.bool_or("solver.newton_polish", d.newton_polish)?,
        regularization_eps: raw.f64_or("solver.regularization_eps", d.regularization_eps)?,
    };
    opts.validate().map_err(|e| lift("solver", e))?;
    Ok(opts)
}

/// Hypothesis section, read only by `check`.
pub struct HypothesisSpec {
    pub theorem: Option<Theorem>,
    pub l: usize,
    pub lambdas: Option<(f64, f64)>,
    pub cfg: HypothesisConfig,
}

pub fn parse_hypothesis(rc: &RunConfig) -> CliResult<HypothesisSpec> {
    let raw = &rc.raw;
    let theorem = match raw.str("hypothesis.theorem") {
        None => None,
        Some(s) => Some(
            Theorem::parse(s)
                .ok_or_else(|| config_err(format!("`hypothesis.theorem` must be 1.2 or 1.3, got `{s}`")))?,
        ),
    };
    let l = raw.usize_or("hypothesis.l", 1)?;
    if l == 0 {
        return Err(config_err("`hypothesis.l` must be at least 1"));
    }
    let epsilon = raw.require_f64("hypothesis.epsilon")?;
    let lambdas = match (raw.f64("hypothesis.lambda_l")?, raw.f64("hypothesis.lambda_next")?) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => match rc.nonlinearity {
            NonlinearitySpec::MidpointBracket { lo, hi, .. } => Some((lo, hi)),
            _ => None,
        },
        _ => {
            return Err(config_err(
                "`hypothesis.lambda_l` and `hypothesis.lambda_next` must be given together",
            ))
        }
    };
    if lambdas.is_none() && l != 1 {
        return Err(config_err(
            "`hypothesis.l` > 1 needs explicit hypothesis.lambda_l and hypothesis.lambda_next",
        ));
    }
    let v = match raw.str("hypothesis.V") {
        None | Some("auto") => PotentialSpec::Auto,
        Some(s) => match s.parse::<f64>() {
            Ok(c) => PotentialSpec::Constant(c),
            Err(_) => PotentialSpec::Expr(Arc::new(Expr::parse("hypothesis.V", s, &["xi"])?)),
        },
    };
    let d = HypothesisConfig::new(epsilon);
    let mut cfg = HypothesisConfig {
        l,
        growth_constant: raw.f64_or("hypothesis.C", d.growth_constant)?,
        t_max: raw.f64_or("hypothesis.t_max", d.t_max)?,
        t_samples: raw.usize_or("hypothesis.t_samples", d.t_samples)?,
        window: (
            raw.f64_or("hypothesis.t_lo", d.window.0)?,
            raw.f64_or("hypothesis.t_hi", d.window.1)?,
        ),
        per_decade: raw.usize_or("hypothesis.per_decade", d.per_decade)?,
        ..d
    };
    cfg = match v {
        PotentialSpec::Constant(c) => cfg.with_constant_v(c),
        PotentialSpec::Expr(e) => cfg.with_v(move |x| e.eval1(x)),
        PotentialSpec::Auto => match rc.nonlinearity {
            NonlinearitySpec::MidpointBracket { lo, hi, eps, h } => {
                cfg.with_constant_v(midpoint_bracket_v(lo, hi, eps, h, rc.sp.p))
            }
            _ => cfg,
        },
    };
    Ok(HypothesisSpec {
        theorem,
        l,
        lambdas,
        cfg,
    })
}
