use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use crate::error::{DremError, Result};

pub const SCENARIO_NAMES: [&str; 5] =
    ["robot2dof-drem", "robot2dof-overparam", "solar", "appc-indirect", "appc-direct"];

/// One-line description used by `list`.
pub fn scenario_description(name: &str) -> Option<&'static str> {
    Some(match name {
        "robot2dof-drem" => "two-link arm, Slotine-Li control with DREM estimate of (l1, l2, m1, m2)",
        "robot2dof-overparam" => "two-link arm, Slotine-Li control with gradient estimate of S(theta)",
        "solar" => "solar-heated house identification, DT DREM vs normalized gradient",
        "appc-indirect" => "indirect deadbeat pole placement, plant parameter switching 0.5 -> -0.5",
        "appc-direct" => "direct deadbeat pole placement on controller parameters",
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Vec(Vec<f64>),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Vec(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", parts.join(", "))
            }
            Value::Str(s) => f.write_str(s),
        }
    }
}

/// `1.5` → number, `[1, 2]` → vector, anything else → bare word.
pub fn parse_value(raw: &str) -> Result<Value> {
    let raw = raw.trim();
    if let Some(inner) = raw.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| DremError::Config(format!("unterminated vector: {raw}")))?;
        if inner.trim().is_empty() {
            return Ok(Value::Vec(Vec::new()));
        }
        let v = inner
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| DremError::Config(format!("bad vector element '{}' in {raw}", p.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        return Ok(Value::Vec(v));
    }
    if let Ok(x) = raw.parse::<f64>() {
        return Ok(Value::Num(x));
    }
    if raw.is_empty() || !raw.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(DremError::Config(format!("cannot parse value '{raw}'")));
    }
    Ok(Value::Str(raw.to_string()))
}

/// Scenario name plus every tunable key with its current value.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    name: String,
    params: BTreeMap<String, Value>,
}

fn n(x: f64) -> Value {
    Value::Num(x)
}

fn v(x: &[f64]) -> Value {
    Value::Vec(x.to_vec())
}

fn defaults(name: &str) -> Option<Vec<(&'static str, Value)>> {
    let robot_common = || {
        vec![
            ("horizon", n(20.0)),
            ("h", n(1e-3)),
            ("seed", n(0.0)),
            ("record_every", n(10.0)),
            ("g", n(9.81)),
            ("theta", v(&[0.7, 0.8, 1.5, 0.5])),
            ("q0", v(&[0.2 * PI, 0.3 * PI])),
            ("qd0", v(&[0.0, 0.0])),
            ("K1_diag", v(&[3.0, 3.0])),
            ("K2_diag", v(&[1.0, 1.0])),
        ]
    };
    Some(match name {
        "robot2dof-drem" => {
            let mut d = robot_common();
            d.extend([
                ("lambda", n(2.0)),
                ("lambda_regressor", n(1.0)),
                ("Gamma_diag", v(&[1.0; 4])),
                ("P_diag", v(&[1.0; 4])),
                ("theta_hat0", v(&[0.01; 4])),
                ("adapt", n(1.0)),
                ("controller", Value::Str("slotine-li".into())),
            ]);
            d
        }
        "robot2dof-overparam" => {
            let mut d = robot_common();
            d.extend([("Gamma_diag", v(&[5.0; 5])), ("S_hat0", v(&[0.01; 5]))]);
            d
        }
        "solar" => vec![
            ("horizon", n(96.0)),
            ("seed", n(0.0)),
            ("alpha", n(0.9)),
            ("gamma", n(1.0)),
            ("kappa", n(3.0)),
            ("P_diag", v(&[1.0; 4])),
            ("theta", v(&[0.5; 4])),
            ("eta_offset", n(0.5)),
            ("solar_peak", n(25.0)),
            ("solar_decay", n(0.01)),
            ("baseline_gamma", n(1.0)),
        ],
        "appc-indirect" => vec![
            ("horizon", n(150.0)),
            ("seed", n(0.0)),
            ("estimator", Value::Str("drem".into())),
            ("alpha", n(0.3)),
            ("gamma", n(1.0)),
            ("kappa", n(2.0)),
            ("P_diag", v(&[1.0])),
            ("theta_before", n(0.5)),
            ("theta_after", n(-0.5)),
            ("switch_at", n(50.0)),
            ("theta_hat0", n(0.5)),
            ("S_hat0", v(&[0.5, 0.125])),
            ("baseline_gamma", n(1.0)),
            ("ref_amplitude", n(5.0)),
            ("ref_frequency", n(1.5)),
        ],
        "appc-direct" => vec![
            ("horizon", n(150.0)),
            ("seed", n(0.0)),
            ("alpha", n(0.9)),
            ("gamma", n(1.0)),
            ("kappa", n(3.0)),
            ("P_diag", v(&[1.0; 4])),
            ("plant", v(&[-0.5, 1.0, 0.5])),
            ("eta_offset", n(0.1)),
            ("ref_amplitude", n(1.0)),
            ("ref_frequency", n(0.3)),
        ],
        _ => return None,
    })
}

impl Scenario {
    pub fn new(name: &str) -> Result<Self> {
        let d = defaults(name).ok_or_else(|| {
            DremError::Unknown(format!("{name} (available: {})", SCENARIO_NAMES.join(", ")))
        })?;
        Ok(Self {
            name: name.to_string(),
            params: d.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn keys(&self) -> Vec<&str> {
        self.params.keys().map(String::as_str).collect()
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Replaces a key, keeping the kind (and vector length) of the default.
    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        let current = self.params.get(key).ok_or_else(|| {
            DremError::Config(format!(
                "unknown key '{key}' for {}; valid keys: {}",
                self.name,
                self.keys().join(", ")
            ))
        })?;
        let value = match (current, value) {
            (Value::Num(_), Value::Num(x)) => Value::Num(x),
            (Value::Vec(old), Value::Vec(new)) if old.len() == new.len() => Value::Vec(new),
            (Value::Vec(old), Value::Vec(new)) => {
                return Err(DremError::Config(format!(
                    "key '{key}' needs {} entries, got {}",
                    old.len(),
                    new.len()
                )))
            }
            // A scalar broadcasts over a diagonal.
            (Value::Vec(old), Value::Num(x)) if key.ends_with("_diag") => Value::Vec(vec![x; old.len()]),
            (Value::Str(_), Value::Str(s)) => Value::Str(s),
            (old, new) => {
                return Err(DremError::Config(format!("key '{key}' expects a value like {old}, got {new}")))
            }
        };
        self.params.insert(key.to_string(), value);
        Ok(())
    }

    pub fn set_raw(&mut self, key: &str, raw: &str) -> Result<()> {
        let v = parse_value(raw)?;
        self.set(key, v)
    }

    pub fn num(&self, key: &str) -> f64 {
        match self.params.get(key) {
            Some(Value::Num(x)) => *x,
            other => panic!("scenario {} has no numeric key {key}: {other:?}", self.name),
        }
    }

    pub fn vec(&self, key: &str) -> &[f64] {
        match self.params.get(key) {
            Some(Value::Vec(x)) => x,
            other => panic!("scenario {} has no vector key {key}: {other:?}", self.name),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        match self.params.get(key) {
            Some(Value::Str(x)) => x,
            other => panic!("scenario {} has no text key {key}: {other:?}", self.name),
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.params.contains_key(key)
    }

    /// Whole number of samples, or a config error.
    pub fn samples(&self, key: &str) -> Result<usize> {
        let x = self.num(key);
        if x < 0.0 || x.fract() != 0.0 || !x.is_finite() {
            return Err(DremError::Config(format!("{key} must be a non-negative integer, got {x}")));
        }
        Ok(x as usize)
    }

    pub fn positive(&self, key: &str) -> Result<f64> {
        let x = self.num(key);
        if !(x > 0.0 && x.is_finite()) {
            return Err(DremError::Config(format!("{key} must be positive, got {x}")));
        }
        Ok(x)
    }
}
