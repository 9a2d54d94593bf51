//! Parsing of distribution and criterion arguments.

use std::path::Path;

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use tiebreaker::dist::read_values;
use tiebreaker::{make_distribution, CriterionSpec, CustomCriterion, Distribution, DistributionSpec, Error, Result};

pub const CRITERION_SYMBOLS: [&str; 4] = ["z", "xz", "x2z", "ex2"];

/// `uniform`, `weibull[:shape[,scale]]` or `gaussian[:sd]`.
pub fn dist_spec(text: &str) -> Result<DistributionSpec> {
    let (name, params) = match text.split_once(':') {
        Some((n, p)) => (n.trim(), Some(p)),
        None => (text.trim(), None),
    };
    let numbers = |p: Option<&str>| -> Result<Vec<f64>> {
        p.map_or(Ok(vec![]), |p| {
            p.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad distribution parameter {v:?} in {text:?}")))
                })
                .collect()
        })
    };
    let vals = numbers(params)?;
    match (name.to_ascii_lowercase().as_str(), vals.as_slice()) {
        ("uniform", []) => Ok(DistributionSpec::Uniform),
        ("weibull", []) => Ok(DistributionSpec::Weibull { shape: 0.5, scale: 1.0 }),
        ("weibull", [shape]) => Ok(DistributionSpec::Weibull { shape: *shape, scale: 1.0 }),
        ("weibull", [shape, scale]) => Ok(DistributionSpec::Weibull {
            shape: *shape,
            scale: *scale,
        }),
        ("gaussian" | "normal", []) => Ok(DistributionSpec::Gaussian { sd: 1.0 }),
        ("gaussian" | "normal", [sd]) => Ok(DistributionSpec::Gaussian { sd: *sd }),
        _ => Err(Error::Invalid(format!(
            "unknown distribution {text:?}; expected uniform, weibull[:shape[,scale]] or gaussian[:sd]"
        ))),
    }
}

/// The running-variable law and, for `--data`, the raw sample.
pub fn distribution(dist: Option<&str>, data: Option<&Path>) -> Result<(Distribution, Option<Vec<f64>>)> {
    match (dist, data) {
        (_, Some(path)) => {
            let sample = read_values(path)?;
            let d = make_distribution(&DistributionSpec::Sample(sample.clone()))?;
            Ok((d, Some(sample)))
        }
        (Some(text), None) => Ok((make_distribution(&dist_spec(text)?)?, None)),
        (None, None) => Ok((Distribution::uniform(), None)),
    }
}

fn eval_node(node: &Node<DefaultNumericTypes>, z: f64, xz: f64, x2z: f64, ex2: f64) -> std::result::Result<f64, String> {
    let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
    for (name, v) in CRITERION_SYMBOLS.iter().zip([z, xz, x2z, ex2]) {
        ctx.set_value((*name).into(), Value::Float(v)).map_err(|e| e.to_string())?;
    }
    match node.eval_with_context(&ctx).map_err(|e| e.to_string())? {
        Value::Float(f) => Ok(f),
        Value::Int(i) => Ok(i as f64),
        other => Err(format!("expression evaluated to {other}, not a number")),
    }
}

/// `eff`, `d` or `custom:<expr>` over the symbols `z`, `xz`, `x2z`, `ex2`.
pub fn criterion(text: &str) -> Result<CriterionSpec> {
    match text {
        "eff" => return Ok(CriterionSpec::Eff),
        "d" => return Ok(CriterionSpec::D),
        _ => {}
    }
    let Some(expr) = text.strip_prefix("custom:") else {
        return Err(Error::Invalid(format!(
            "unknown criterion {text:?}; expected eff, d or custom:<expr>"
        )));
    };
    let node = build_operator_tree::<DefaultNumericTypes>(expr)
        .map_err(|e| Error::Invalid(format!("cannot parse criterion expression {expr:?}: {e}")))?;
    if let Some(bad) = node.iter_variable_identifiers().find(|v| !CRITERION_SYMBOLS.contains(v)) {
        return Err(Error::Invalid(format!(
            "unknown symbol {bad:?} in criterion expression; allowed: z, xz, x2z, ex2"
        )));
    }
    eval_node(&node, 0.0, 0.1, 0.0, 1.0 / 3.0)
        .map_err(|e| Error::Invalid(format!("criterion expression {expr:?} fails to evaluate: {e}")))?;
    Ok(CriterionSpec::Custom(CustomCriterion::new(text, move |z, xz, x2z, ex2| {
        eval_node(&node, z, xz, x2z, ex2).unwrap_or(f64::NEG_INFINITY)
    })))
}
