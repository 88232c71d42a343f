//! Sweep configuration files.
//!
//! Two syntaxes are accepted. The flat form has one `key = value` per line,
//! `#` comments, and `[a, b, c]` lists:
//!
//! ```text
//! schemes = [DIS, OIS, IN]
//! gamma_bar_db = [0, 5, 10]
//! xi = 1
//! drops_per_point = 2000
//! ```
//!
//! A JSON object with the same keys is accepted as well. Scalars are allowed
//! wherever a list is expected.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::{DisFallback, SweepSpec};
use crate::schemes::{Fallback, Scheme};
use crate::steering::BudgetSplit;

const KEYS: [&str; 15] = [
    "gamma_bar_db",
    "xi",
    "rho",
    "n_t0",
    "n_t1",
    "n_r0",
    "m_streams",
    "n_interferences",
    "schemes",
    "drops_per_point",
    "master_seed",
    "fallback",
    "budget_split",
    "dis_fallback",
    "output_path",
];

/// Key → one or more textual values.
type RawMap = BTreeMap<String, Vec<String>>;

fn parse_flat(text: &str) -> Result<RawMap> {
    let mut map = RawMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}", lineno + 1), "expected `key = value`")
        })?;
        let key = key.trim().to_string();
        let value = value.trim();
        let values = if let Some(inner) = value.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| Error::config(&key, "unterminated list"))?;
            inner
                .split(',')
                .map(|s| unquote(s.trim()).to_string())
                .filter(|s| !s.is_empty())
                .collect()
        } else {
            vec![unquote(value).to_string()]
        };
        if map.insert(key.clone(), values).is_some() {
            return Err(Error::config(key, "given more than once"));
        }
    }
    Ok(map)
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(s)
}

fn json_scalar(key: &str, v: &serde_json::Value) -> Result<String> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Bool(b) => Ok(b.to_string()),
        _ => Err(Error::config(key, "expected a number, string or list of them")),
    }
}

fn parse_json(text: &str) -> Result<RawMap> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::config("json", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::config("json", "top level must be an object"))?;
    let mut map = RawMap::new();
    for (k, v) in obj {
        let values = match v {
            serde_json::Value::Array(items) => items
                .iter()
                .map(|i| json_scalar(k, i))
                .collect::<Result<_>>()?,
            other => vec![json_scalar(k, other)?],
        };
        map.insert(k.clone(), values);
    }
    Ok(map)
}

fn parse_list<T: FromStr>(key: &str, values: &[String]) -> Result<Vec<T>> {
    values
        .iter()
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
        })
        .collect()
}

fn single<'a>(key: &str, values: &'a [String]) -> Result<&'a str> {
    match values {
        [v] => Ok(v),
        _ => Err(Error::config(key, "expected a single value")),
    }
}

fn build(map: RawMap) -> Result<SweepSpec> {
    let mut spec = SweepSpec::default();
    let mut fallback_given = false;
    for (key, values) in &map {
        let k = key.as_str();
        match k {
            "gamma_bar_db" => spec.axes.gamma_bar_db = parse_list(k, values)?,
            "xi" => spec.axes.xi = parse_list(k, values)?,
            "rho" => spec.axes.rho = parse_list(k, values)?,
            "n_t0" => spec.axes.n_t0 = parse_list(k, values)?,
            "n_t1" => spec.axes.n_t1 = parse_list(k, values)?,
            "n_r0" => spec.axes.n_r0 = parse_list(k, values)?,
            "m_streams" => spec.axes.m_streams = parse_list(k, values)?,
            "n_interferences" => spec.axes.n_interferences = parse_list(k, values)?,
            "schemes" => {
                spec.schemes = values
                    .iter()
                    .map(|v| {
                        Scheme::parse(v)
                            .ok_or_else(|| Error::config(k, format!("unknown scheme `{v}`")))
                    })
                    .collect::<Result<_>>()?
            }
            "drops_per_point" => spec.drops_per_point = parse_list(k, values)?.pop().unwrap_or(0),
            "master_seed" => {
                spec.master_seed = single(k, values)?
                    .parse()
                    .map_err(|_| Error::config(k, "expected an unsigned 64-bit integer"))?
            }
            "fallback" => {
                let v = single(k, values)?;
                spec.fallback = Fallback::parse(v)
                    .ok_or_else(|| Error::config(k, format!("`{v}` is not mf or zf")))?;
                fallback_given = true;
            }
            "budget_split" => {
                let v = single(k, values)?;
                spec.budget_split = BudgetSplit::parse(v).ok_or_else(|| {
                    Error::config(k, format!("`{v}` is not equal or proportional"))
                })?
            }
            "dis_fallback" => {
                let v = single(k, values)?;
                spec.dis_fallback = DisFallback::parse(v).ok_or_else(|| {
                    Error::config(k, format!("`{v}` is not never or power_limited"))
                })?
            }
            "output_path" => spec.output_path = Some(single(k, values)?.to_string()),
            _ => {
                return Err(Error::config(
                    k,
                    format!("unknown key; expected one of {}", KEYS.join(", ")),
                ))
            }
        }
    }
    if map.get("drops_per_point").is_some_and(|v| v.len() != 1) {
        return Err(Error::config("drops_per_point", "expected a single value"));
    }
    if !fallback_given {
        // ρ sweeps fall back to matched filtering, scheme comparisons to ZF
        spec.fallback = if spec.axes.rho.len() > 1 {
            Fallback::Mf
        } else {
            Fallback::Zf
        };
    }
    spec.validate()?;
    Ok(spec)
}

/// Parses either configuration syntax into a validated spec.
pub fn parse_spec(text: &str) -> Result<SweepSpec> {
    let map = if text.trim_start().starts_with('{') {
        parse_json(text)?
    } else {
        parse_flat(text)?
    };
    build(map)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<SweepSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spec(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_and_json_agree() {
        let flat = "
            # comparison at three SNRs
            schemes = [DIS, OIS, IN]
            gamma_bar_db = [0, 5, 10]
            xi = 1
            drops_per_point = 200
            master_seed = 42
            budget_split = proportional
        ";
        let json = r#"{"schemes": ["DIS", "OIS", "IN"], "gamma_bar_db": [0, 5, 10],
            "xi": 1, "drops_per_point": 200, "master_seed": 42,
            "budget_split": "proportional"}"#;
        let a = parse_spec(flat).unwrap();
        let b = parse_spec(json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.axes.gamma_bar_db, vec![0.0, 5.0, 10.0]);
        assert_eq!(a.schemes, vec![Scheme::Dis, Scheme::Ois, Scheme::In]);
        assert_eq!(a.master_seed, 42);
        assert_eq!(a.budget_split, BudgetSplit::Proportional);
    }

    #[test]
    fn fallback_default_depends_on_rho_axis() {
        let a = parse_spec("schemes = [IS_FIXED]\nrho = [0.2, 0.4]").unwrap();
        assert_eq!(a.fallback, Fallback::Mf);
        let b = parse_spec("schemes = [DIS, ZF]").unwrap();
        assert_eq!(b.fallback, Fallback::Zf);
        let c = parse_spec("rho = [0.2, 0.4]\nfallback = zf").unwrap();
        assert_eq!(c.fallback, Fallback::Zf);
    }

    #[test]
    fn errors_name_the_field() {
        let field = |text: &str| match parse_spec(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(field("schemes = [DIS, XYZ]"), "schemes");
        assert_eq!(field("xi = [1, abc]"), "xi");
        assert_eq!(field("colour = red"), "colour");
        assert_eq!(field("drops_per_point = 0"), "drops_per_point");
        assert_eq!(field("fallback = maybe"), "fallback");
        assert_eq!(field("gamma_bar_db = []"), "gamma_bar_db");
        assert_eq!(field("xi = 1\nxi = 2"), "xi");
        assert_eq!(field("just words"), "line 1");
        assert_eq!(field("{\"xi\": {\"a\": 1}}"), "xi");
    }
}
