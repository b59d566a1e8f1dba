//! Flat key-value model configuration: one `name = value` per line,
//! `#` starts a comment.
//!
//! ```text
//! # baseline model
//! lambda = 4.0
//! eta1   = 0.1
//! eta2   = 0.11
//! q      = 0.15
//! k      = 1.14
//! a      = 0.85
//! period = 1.0
//! claim  = uniform min=0.0 max=2.0
//! ```
//!
//! The claim law is spelled `claim = exponential mu=<rate>` or
//! `claim = uniform min=<lo> max=<hi>`. Unknown keys are rejected with
//! the offending name; `period` defaults to 1.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{ClaimLaw, ModelError, ModelParams};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key `{key}`")]
    MissingKey { key: &'static str },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

const KEYS: [&str; 8] = ["lambda", "eta1", "eta2", "q", "k", "a", "period", "claim"];

/// Parse a configuration string into validated model parameters.
pub fn parse_str<R: Real>(text: &str) -> Result<ModelParams<R>, ConfigError> {
    let mut seen: HashMap<String, (usize, String)> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line: line_no,
            message: format!("expected `name = value`, got `{line}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey { line: line_no, key });
        }
        if seen.insert(key.clone(), (line_no, value)).is_some() {
            return Err(ConfigError::DuplicateKey { line: line_no, key });
        }
    }

    let number = |key: &'static str| -> Result<R, ConfigError> {
        let (line, value) = seen
            .get(key)
            .ok_or(ConfigError::MissingKey { key })?
            .clone();
        parse_number(line, key, &value)
    };

    let lambda = number("lambda")?;
    let eta1 = number("eta1")?;
    let eta2 = number("eta2")?;
    let q = number("q")?;
    let k = number("k")?;
    let a = number("a")?;
    let period = match seen.get("period") {
        Some((line, value)) => parse_number(*line, "period", value)?,
        None => R::one(),
    };
    let (claim_line, claim_value) = seen
        .get("claim")
        .ok_or(ConfigError::MissingKey { key: "claim" })?
        .clone();
    let claim_law = parse_claim_law(claim_line, &claim_value)?;

    Ok(ModelParams::new(
        lambda, claim_law, eta1, eta2, q, k, a, period,
    )?)
}

/// Render parameters back to the config syntax (used by `--out` metadata
/// and the built-in default configuration).
pub fn render<R: Real>(params: &ModelParams<R>) -> String {
    let claim = match params.claim_law {
        ClaimLaw::Exponential { mu } => format!("exponential mu={mu}"),
        ClaimLaw::Uniform { min, max } => format!("uniform min={min} max={max}"),
    };
    format!(
        "lambda = {}\neta1 = {}\neta2 = {}\nq = {}\nk = {}\na = {}\nperiod = {}\nclaim = {}\n",
        params.lambda, params.eta1, params.eta2, params.q, params.k, params.a, params.period, claim
    )
}

fn parse_number<R: Real>(line: usize, key: &str, value: &str) -> Result<R, ConfigError> {
    let v: f64 = value.parse().map_err(|_| ConfigError::Malformed {
        line,
        message: format!("key `{key}`: `{value}` is not a number"),
    })?;
    Ok(R::of(v))
}

fn parse_claim_law<R: Real>(line: usize, value: &str) -> Result<ClaimLaw<R>, ConfigError> {
    let mut tokens = value.split_whitespace();
    let kind = tokens.next().unwrap_or("");
    let mut fields: HashMap<&str, f64> = HashMap::new();
    for tok in tokens {
        let (name, num) = tok.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line,
            message: format!("claim field `{tok}` is not `name=value`"),
        })?;
        let v: f64 = num.parse().map_err(|_| ConfigError::Malformed {
            line,
            message: format!("claim field `{name}`: `{num}` is not a number"),
        })?;
        if fields.insert(name, v).is_some() {
            return Err(ConfigError::Malformed {
                line,
                message: format!("claim field `{name}` given twice"),
            });
        }
    }
    let mut take = |name: &str| {
        fields.remove(name).ok_or(ConfigError::Malformed {
            line,
            message: format!("claim `{kind}` needs field `{name}`"),
        })
    };
    let law = match kind {
        "exponential" => ClaimLaw::exponential(R::of(take("mu")?))?,
        "uniform" => {
            let min = take("min")?;
            let max = take("max")?;
            ClaimLaw::uniform(R::of(min), R::of(max))?
        }
        other => {
            return Err(ConfigError::Malformed {
                line,
                message: format!("unknown claim law `{other}` (expected exponential or uniform)"),
            })
        }
    };
    if let Some(extra) = fields.keys().next() {
        return Err(ConfigError::Malformed {
            line,
            message: format!("claim `{kind}` does not take field `{extra}`"),
        });
    }
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
# baseline
lambda = 4.0
eta1 = 0.1
eta2 = 0.11
q = 0.15
k = 1.14
a = 0.85
claim = uniform min=0.0 max=2.0
";

    #[test]
    fn parses_baseline() {
        let p: ModelParams<f64> = parse_str(BASE).unwrap();
        assert_eq!(p, ModelParams::baseline_uniform());
        assert_eq!(p.period, 1.0); // default
    }

    #[test]
    fn parses_exponential_claim_and_period() {
        let text = BASE.replace(
            "claim = uniform min=0.0 max=2.0",
            "claim = exponential mu=1.0\nperiod = 3.0",
        );
        let p: ModelParams<f64> = parse_str(&text).unwrap();
        assert_eq!(p.claim_law, ClaimLaw::Exponential { mu: 1.0 });
        assert_eq!(p.period, 3.0);
    }

    #[test]
    fn unknown_key_is_rejected_with_name() {
        let text = format!("{BASE}shape = 2.0\n");
        let err = parse_str::<f64>(&text).unwrap_err();
        match err {
            ConfigError::UnknownKey { key, .. } => assert_eq!(key, "shape"),
            other => panic!("expected UnknownKey, got {other}"),
        }
    }

    #[test]
    fn duplicate_and_missing_keys_are_rejected() {
        let dup = format!("{BASE}lambda = 5.0\n");
        assert!(matches!(
            parse_str::<f64>(&dup),
            Err(ConfigError::DuplicateKey { .. })
        ));
        let missing = BASE.replace("q = 0.15\n", "");
        assert!(matches!(
            parse_str::<f64>(&missing),
            Err(ConfigError::MissingKey { key: "q" })
        ));
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(parse_str::<f64>("lambda 4.0\n").is_err());
        assert!(parse_str::<f64>(&BASE.replace("0.15", "fast")).is_err());
        assert!(parse_str::<f64>(&BASE.replace("uniform min=0.0 max=2.0", "gamma k=2")).is_err());
        assert!(parse_str::<f64>(&BASE.replace("min=0.0 ", "")).is_err());
        assert!(
            parse_str::<f64>(&BASE.replace("min=0.0 ", "min=0.0 mode=1.0 ")).is_err(),
            "extra claim fields must be rejected"
        );
    }

    #[test]
    fn render_round_trips() {
        let p: ModelParams<f64> = ModelParams::baseline_exponential();
        let text = render(&p);
        let q: ModelParams<f64> = parse_str(&text).unwrap();
        assert_eq!(p, q);
    }
}
