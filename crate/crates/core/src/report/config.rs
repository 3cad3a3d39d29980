//! Experiment configuration: a JSON object or `key = value` lines.
//!
//! ```text
//! # p, rho, alpha and snr accept lists; the plan is their cross product
//! p = 75, 350, 1000
//! alpha = [0.1, 0.33, 0.5]
//! selectors = cv, aic, bic, gcv, ssr
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::selection::GicScaling;
use crate::simulate::{SimOptions, TMaxRule};
use crate::solvers::SolverConfig;
use crate::types::{NoiseKind, Selector, SimCondition};

/// Keys a configuration may set.
pub const KEYS: [&str; 13] = [
    "n",
    "p",
    "rho",
    "alpha",
    "snr",
    "noise",
    "replications",
    "selectors",
    "k",
    "grid_size",
    "seed",
    "a_n",
    "q",
];

const LIST_KEYS: [&str; 4] = ["p", "rho", "alpha", "snr"];

fn defaults() -> BTreeMap<String, Value> {
    let pairs = [
        ("n", json!(100)),
        ("p", json!([350])),
        ("rho", json!([0.2])),
        ("alpha", json!([0.1])),
        ("snr", json!([5.0])),
        ("noise", json!("gaussian")),
        ("replications", json!(100)),
        ("selectors", json!(["cv", "aic", "bic", "gcv", "ssr"])),
        ("k", json!(10)),
        ("grid_size", json!(100)),
        ("seed", json!(1)),
        ("a_n", json!("n")),
        ("q", json!(2.0)),
    ];
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// A fully resolved simulation plan.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub conditions: Vec<SimCondition>,
    pub selectors: Vec<Selector>,
    pub options: SimOptions,
    pub seed: u64,
    /// Every key with its value after defaults were filled in.
    pub resolved: BTreeMap<String, Value>,
}

impl ExperimentPlan {
    /// SHA-256 of the canonical JSON form of the resolved configuration.
    /// Key order in the source file does not matter.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(&self.resolved).expect("json values serialize");
        hex(&Sha256::digest(canonical.as_bytes()))
    }

    /// Resolved configuration as `key = value` lines in key order.
    pub fn describe(&self) -> String {
        self.resolved
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads and resolves a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentPlan> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Parses configuration text, JSON when it starts with `{`.
pub fn parse_config(text: &str) -> Result<ExperimentPlan> {
    let raw = if text.trim_start().starts_with('{') {
        parse_json(text)?
    } else {
        parse_lines(text)?
    };
    resolve(raw)
}

fn parse_json(text: &str) -> Result<BTreeMap<String, Value>> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| Error::config("<file>", format!("invalid JSON: {e}")))?;
    match value {
        Value::Object(map) => Ok(map.into_iter().collect()),
        _ => Err(Error::config("<file>", "expected a JSON object")),
    }
}

fn parse_lines(text: &str) -> Result<BTreeMap<String, Value>> {
    let mut out = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config("<file>", format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().trim_start_matches('[').trim_end_matches(']');
        let items: Vec<Value> = value
            .split(',')
            .map(|s| scalar(s.trim().trim_matches('"')))
            .collect();
        let value = if items.len() == 1 {
            items.into_iter().next().unwrap()
        } else {
            Value::Array(items)
        };
        if out.insert(key.clone(), value).is_some() {
            return Err(Error::config(key, "given more than once"));
        }
    }
    Ok(out)
}

fn scalar(s: &str) -> Value {
    if let Ok(i) = s.parse::<u64>() {
        return json!(i);
    }
    if let Ok(f) = s.parse::<f64>() {
        return json!(f);
    }
    Value::String(s.to_string())
}

fn as_list(v: &Value) -> Vec<Value> {
    match v {
        Value::Array(items) => items.clone(),
        other => vec![other.clone()],
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::config(key, format!("expected a number, got {v}")))
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::config(key, format!("expected a nonnegative integer, got {v}")))
}

fn positive(key: &str, v: &Value) -> Result<usize> {
    let x = as_usize(key, v)?;
    if x == 0 {
        return Err(Error::config(key, "must be positive"));
    }
    Ok(x)
}

fn resolve(raw: BTreeMap<String, Value>) -> Result<ExperimentPlan> {
    if let Some(bad) = raw.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(Error::config(
            bad.clone(),
            format!("unknown key (allowed: {})", KEYS.join(", ")),
        ));
    }
    for (k, v) in &raw {
        if v.is_array() && !LIST_KEYS.contains(&k.as_str()) && k != "selectors" {
            return Err(Error::config(k.clone(), "does not accept a list"));
        }
    }
    let mut resolved = defaults();
    for (k, v) in raw {
        let v = if LIST_KEYS.contains(&k.as_str()) || k == "selectors" {
            Value::Array(as_list(&v))
        } else {
            v
        };
        resolved.insert(k, v);
    }

    let n = positive("n", &resolved["n"])?;
    let replications = positive("replications", &resolved["replications"])?;
    let k = as_usize("k", &resolved["k"])?;
    if k < 2 || k > n {
        return Err(Error::config("k", format!("must lie in 2..={n}")));
    }
    let grid_size = as_usize("grid_size", &resolved["grid_size"])?;
    if grid_size < 2 {
        return Err(Error::config("grid_size", "must be at least 2"));
    }
    let seed = as_usize("seed", &resolved["seed"])? as u64;
    let noise: NoiseKind = resolved["noise"]
        .as_str()
        .ok_or_else(|| Error::config("noise", "expected a string"))?
        .parse()
        .map_err(|e: Error| Error::config("noise", e.to_string()))?;
    let q = match &resolved["q"] {
        Value::String(s) if s == "inf" => f64::INFINITY,
        v => as_f64("q", v)?,
    };
    if q < 1.0 {
        return Err(Error::config("q", "must be >= 1 (or \"inf\")"));
    }
    let t_max: TMaxRule = match &resolved["a_n"] {
        Value::String(s) => s.parse(),
        v => as_f64("a_n", v)?.to_string().parse(),
    }
    .map_err(|e: Error| Error::config("a_n", e.to_string()))?;

    let mut selectors = Vec::new();
    for v in as_list(&resolved["selectors"]) {
        let s: Selector = v
            .as_str()
            .ok_or_else(|| Error::config("selectors", format!("expected names, got {v}")))?
            .parse()
            .map_err(|e: Error| Error::config("selectors", e.to_string()))?;
        if !selectors.contains(&s) {
            selectors.push(s);
        }
    }
    if selectors.is_empty() {
        return Err(Error::config("selectors", "at least one selector is required"));
    }

    let list = |key: &str| -> Result<Vec<f64>> {
        let items = as_list(&resolved[key]);
        if items.is_empty() {
            return Err(Error::config(key, "empty list"));
        }
        items.iter().map(|v| as_f64(key, v)).collect()
    };
    let ps: Vec<usize> = as_list(&resolved["p"])
        .iter()
        .map(|v| positive("p", v))
        .collect::<Result<_>>()?;
    let (rhos, alphas, snrs) = (list("rho")?, list("alpha")?, list("snr")?);
    if let Some(r) = rhos.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(Error::config("rho", format!("{r} is outside [0, 1)")));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(Error::config("alpha", format!("{a} is outside (0, 1]")));
    }
    if let Some(s) = snrs.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::config("snr", format!("{s} must be positive")));
    }

    let mut conditions = Vec::new();
    for &p in &ps {
        for &rho in &rhos {
            for &alpha in &alphas {
                for &snr in &snrs {
                    let cond = SimCondition {
                        n,
                        p,
                        rho,
                        alpha,
                        snr,
                        noise_kind: noise,
                        replications,
                        seed,
                    };
                    cond.validate().map_err(|e| Error::config("p", e.to_string()))?;
                    conditions.push(cond);
                }
            }
        }
    }
    let options = SimOptions {
        k,
        grid_size,
        t_max,
        q,
        gic_scaling: GicScaling::Normalized,
        solver: SolverConfig::default(),
    };
    Ok(ExperimentPlan {
        conditions,
        selectors,
        options,
        seed,
        resolved,
    })
}

/// Resolved plan as a JSON object, for echoing back to the user.
pub fn to_json(plan: &ExperimentPlan) -> Value {
    Value::Object(plan.resolved.clone().into_iter().collect::<Map<_, _>>())
}
