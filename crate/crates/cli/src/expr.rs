//! Arithmetic expressions in config values, e.g. `nonlinearity.f = 2 * t + math::sin(xi)`.

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value,
};

use crate::error::{config_err, CliResult};

pub struct Expr {
    source: String,
    node: Node<DefaultNumericTypes>,
    vars: Vec<&'static str>,
}

impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(key: &str, source: &str, vars: &[&'static str]) -> CliResult<Self> {
        if source.contains("random") {
            return Err(config_err(format!("`{key}`: random() is not allowed")));
        }
        let node = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| config_err(format!("`{key}`: {e}")))?;
        let expr = Self {
            source: source.to_string(),
            node,
            vars: vars.to_vec(),
        };
        let probe = vec![0.5; vars.len()];
        expr.try_eval(&probe)
            .map_err(|e| config_err(format!("`{key}`: {e}")))?;
        Ok(expr)
    }

    fn try_eval(&self, args: &[f64]) -> Result<f64, String> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (name, &v) in self.vars.iter().zip(args) {
            ctx.set_value((*name).to_string(), Value::Float(v))
                .map_err(|e| e.to_string())?;
        }
        self.node
            .eval_number_with_context(&ctx)
            .map_err(|e| e.to_string())
    }

    /// NaN on evaluation failure, which the numerics report as non-finite.
    pub fn eval1(&self, x: f64) -> f64 {
        self.try_eval(&[x]).unwrap_or(f64::NAN)
    }

    pub fn eval2(&self, x: f64, t: f64) -> f64 {
        self.try_eval(&[x, t]).unwrap_or(f64::NAN)
    }
}
