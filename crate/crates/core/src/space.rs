//! Mixed-type configuration spaces and their unit-cube encoding.
//!
//! Every surrogate and the DE engine work on `[0, 1]^d`. A [`ConfigSpace`]
//! owns the bijection (up to rounding of integer and categorical values)
//! between native [`Configuration`]s and [`UnitVector`]s:
//!
//! * continuous: affine in the value, or in `ln v` when log-scaled;
//! * integer: affine on the half-integer widened range `[lo - 0.5, hi + 0.5]`
//!   so each integer owns a slab of equal width (in log space when log-scaled);
//! * categorical with `k` choices: bucket centers `(index + 0.5) / k`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SpaceError {
    #[error("malformed space document: {0}")]
    Malformed(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("parameter `{name}`: unknown kind `{kind}`")]
    UnknownKind { name: String, kind: String },
    #[error("configuration is missing parameter `{0}`")]
    MissingValue(String),
    #[error("configuration has unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{name}`: value {value} is invalid ({reason})")]
    InvalidValue {
        name: String,
        value: String,
        reason: String,
    },
    #[error("unit vector has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unit vector coordinate {index} = {value} is outside [0, 1]")]
    OutOfCube { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Continuous { lower: f64, upper: f64, log_scale: bool },
    Integer { lower: i64, upper: i64, log_scale: bool },
    Categorical { choices: Vec<String> },
}

impl ParamKind {
    pub fn name(&self) -> &'static str {
        match self {
            ParamKind::Continuous { .. } => "continuous",
            ParamKind::Integer { .. } => "integer",
            ParamKind::Categorical { .. } => "categorical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn continuous(name: &str, lower: f64, upper: f64) -> Result<Self, SpaceError> {
        Self::from_raw(RawParam::numeric(name, "continuous", lower, upper, false))
    }

    pub fn log_continuous(name: &str, lower: f64, upper: f64) -> Result<Self, SpaceError> {
        Self::from_raw(RawParam::numeric(name, "continuous", lower, upper, true))
    }

    pub fn integer(name: &str, lower: i64, upper: i64) -> Result<Self, SpaceError> {
        Self::from_raw(RawParam::numeric(
            name,
            "integer",
            lower as f64,
            upper as f64,
            false,
        ))
    }

    pub fn log_integer(name: &str, lower: i64, upper: i64) -> Result<Self, SpaceError> {
        Self::from_raw(RawParam::numeric(
            name,
            "integer",
            lower as f64,
            upper as f64,
            true,
        ))
    }

    pub fn categorical<S: AsRef<str>>(name: &str, choices: &[S]) -> Result<Self, SpaceError> {
        Self::from_raw(RawParam {
            name: name.to_string(),
            kind: "categorical".to_string(),
            lower: None,
            upper: None,
            log_scale: None,
            choices: Some(choices.iter().map(|c| c.as_ref().to_string()).collect()),
        })
    }

    fn from_raw(raw: RawParam) -> Result<Self, SpaceError> {
        let name = raw.name.clone();
        let bad = |reason: &str| SpaceError::InvalidParam {
            name: name.clone(),
            reason: reason.to_string(),
        };
        if name.is_empty() {
            return Err(bad("empty name"));
        }
        let kind = match raw.kind.as_str() {
            "continuous" | "integer" => {
                if raw.choices.is_some() {
                    return Err(bad("`choices` is only valid for categorical parameters"));
                }
                let (lower, upper) = match (raw.lower, raw.upper) {
                    (Some(l), Some(u)) => (l, u),
                    _ => return Err(bad("numeric parameters need `lower` and `upper`")),
                };
                if !lower.is_finite() || !upper.is_finite() {
                    return Err(bad("bounds must be finite"));
                }
                let log_scale = raw.log_scale.unwrap_or(false);
                if log_scale && lower <= 0.0 {
                    return Err(bad("log_scale requires lower > 0"));
                }
                if raw.kind == "continuous" {
                    if lower >= upper {
                        return Err(bad("degenerate bounds: lower must be < upper"));
                    }
                    ParamKind::Continuous {
                        lower,
                        upper,
                        log_scale,
                    }
                } else {
                    if lower.fract() != 0.0 || upper.fract() != 0.0 {
                        return Err(bad("integer bounds must be integral"));
                    }
                    if lower > upper {
                        return Err(bad("invalid bounds: lower must be <= upper"));
                    }
                    ParamKind::Integer {
                        lower: lower as i64,
                        upper: upper as i64,
                        log_scale,
                    }
                }
            }
            "categorical" => {
                if raw.lower.is_some() || raw.upper.is_some() || raw.log_scale == Some(true) {
                    return Err(bad("categorical parameters take only `choices`"));
                }
                let choices = raw.choices.unwrap_or_default();
                if choices.is_empty() {
                    return Err(bad("categorical choices must be non-empty"));
                }
                for (i, c) in choices.iter().enumerate() {
                    if choices[..i].contains(c) {
                        return Err(bad(&format!("duplicate choice `{c}`")));
                    }
                }
                ParamKind::Categorical { choices }
            }
            other => {
                return Err(SpaceError::UnknownKind {
                    name,
                    kind: other.to_string(),
                })
            }
        };
        Ok(ParamSpec { name, kind })
    }

    fn to_raw(&self) -> RawParam {
        match &self.kind {
            ParamKind::Continuous {
                lower,
                upper,
                log_scale,
            } => RawParam::numeric(&self.name, "continuous", *lower, *upper, *log_scale),
            ParamKind::Integer {
                lower,
                upper,
                log_scale,
            } => RawParam::numeric(
                &self.name,
                "integer",
                *lower as f64,
                *upper as f64,
                *log_scale,
            ),
            ParamKind::Categorical { choices } => RawParam {
                name: self.name.clone(),
                kind: "categorical".to_string(),
                lower: None,
                upper: None,
                log_scale: None,
                choices: Some(choices.clone()),
            },
        }
    }

    fn encode_value(&self, value: &ParamValue) -> Result<f64, SpaceError> {
        let reject = |reason: &str| SpaceError::InvalidValue {
            name: self.name.clone(),
            value: value.to_string(),
            reason: reason.to_string(),
        };
        match &self.kind {
            ParamKind::Continuous {
                lower,
                upper,
                log_scale,
            } => {
                let v = value.as_f64().ok_or_else(|| reject("expected a number"))?;
                if !v.is_finite() || v < *lower || v > *upper {
                    return Err(reject("out of bounds"));
                }
                let u = if *log_scale {
                    (v.ln() - lower.ln()) / (upper.ln() - lower.ln())
                } else {
                    (v - lower) / (upper - lower)
                };
                Ok(u.clamp(0.0, 1.0))
            }
            ParamKind::Integer {
                lower,
                upper,
                log_scale,
            } => {
                let v = value
                    .as_integer()
                    .ok_or_else(|| reject("expected an integer"))?;
                if v < *lower || v > *upper {
                    return Err(reject("out of bounds"));
                }
                let (lo, hi) = (*lower as f64 - 0.5, *upper as f64 + 0.5);
                let u = if *log_scale {
                    ((v as f64).ln() - lo.ln()) / (hi.ln() - lo.ln())
                } else {
                    (v as f64 - lo) / (hi - lo)
                };
                Ok(u.clamp(0.0, 1.0))
            }
            ParamKind::Categorical { choices } => {
                let s = match value {
                    ParamValue::Choice(s) => s,
                    _ => return Err(reject("expected a choice string")),
                };
                let index = choices
                    .iter()
                    .position(|c| c == s)
                    .ok_or_else(|| reject("not among the declared choices"))?;
                Ok((index as f64 + 0.5) / choices.len() as f64)
            }
        }
    }

    fn decode_coord(&self, u: f64) -> ParamValue {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            ParamKind::Continuous {
                lower,
                upper,
                log_scale,
            } => {
                let v = if *log_scale {
                    (lower.ln() + u * (upper.ln() - lower.ln())).exp()
                } else {
                    lower + u * (upper - lower)
                };
                ParamValue::Float(v.clamp(*lower, *upper))
            }
            ParamKind::Integer {
                lower,
                upper,
                log_scale,
            } => {
                let (lo, hi) = (*lower as f64 - 0.5, *upper as f64 + 0.5);
                let v = if *log_scale {
                    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + u * (hi - lo)
                };
                ParamValue::Int((v.round() as i64).clamp(*lower, *upper))
            }
            ParamKind::Categorical { choices } => {
                let k = choices.len();
                let index = ((u * k as f64).floor() as usize).min(k - 1);
                ParamValue::Choice(choices[index].clone())
            }
        }
    }

    pub fn check_value(&self, value: &ParamValue) -> Result<(), SpaceError> {
        self.encode_value(value).map(|_| ())
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        Self::from_raw(self.to_raw()).map(|_| ())
    }
}

/// On-disk form of a parameter (one object of the space-spec array).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_scale: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
}

impl RawParam {
    fn numeric(name: &str, kind: &str, lower: f64, upper: f64, log_scale: bool) -> Self {
        RawParam {
            name: name.to_string(),
            kind: kind.to_string(),
            lower: Some(lower),
            upper: Some(upper),
            log_scale: Some(log_scale),
            choices: None,
        }
    }
}

/// A native parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            ParamValue::Choice(_) => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            ParamValue::Int(i) => Some(*i),
            ParamValue::Float(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Some(*f as i64),
            _ => None,
        }
    }

    pub fn as_choice(&self) -> Option<&str> {
        match self {
            ParamValue::Choice(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Choice(s) => write!(f, "{s}"),
        }
    }
}

/// A configuration: one native value per parameter name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub BTreeMap<String, ParamValue>);

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn f64(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(ParamValue::as_f64)
    }

    pub fn choice(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(ParamValue::as_choice)
    }
}

/// A point of `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    pub fn new(coords: Vec<f64>) -> Result<Self, SpaceError> {
        if let Some((index, &value)) = coords
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(SpaceError::OutOfCube { index, value });
        }
        Ok(UnitVector(coords))
    }

    /// Clamps every coordinate into `[0, 1]`; NaN maps to 0.5.
    pub fn clamped(mut coords: Vec<f64>) -> Self {
        for c in coords.iter_mut() {
            *c = if c.is_nan() { 0.5 } else { c.clamp(0.0, 1.0) };
        }
        UnitVector(coords)
    }

    pub fn random<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        UnitVector((0..d).map(|_| rng.random::<f64>()).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// L-infinity distance.
    pub fn linf(&self, other: &[f64]) -> f64 {
        linf(&self.0, other)
    }
}

impl Deref for UnitVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Canonical, order-independent identity of a space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpaceFingerprint(String);

impl SpaceFingerprint {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpace {
    params: Vec<ParamSpec>,
}

impl ConfigSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self, SpaceError> {
        for (i, p) in params.iter().enumerate() {
            p.validate()?;
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        Ok(ConfigSpace { params })
    }

    /// Parses a JSON space-spec document (an array of parameter objects).
    pub fn parse(document: &str) -> Result<Self, SpaceError> {
        let value: serde_json::Value =
            serde_json::from_str(document).map_err(|e| SpaceError::Malformed(e.to_string()))?;
        Self::from_json(value)
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, SpaceError> {
        let items = match value {
            serde_json::Value::Array(items) => items,
            _ => {
                return Err(SpaceError::Malformed(
                    "top level must be an array of parameters".into(),
                ))
            }
        };
        let mut params = Vec::with_capacity(items.len());
        for (i, item) in items.into_iter().enumerate() {
            let label = item
                .get("name")
                .and_then(|n| n.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| format!("#{i}"));
            let raw: RawParam = serde_json::from_value(item).map_err(|e| {
                SpaceError::Malformed(format!("parameter `{label}`: {e}"))
            })?;
            params.push(ParamSpec::from_raw(raw)?);
        }
        Self::new(params)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let raw: Vec<RawParam> = self.params.iter().map(ParamSpec::to_raw).collect();
        serde_json::to_value(raw).expect("raw params serialize")
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn validate(&self, config: &Configuration) -> Result<(), SpaceError> {
        self.encode(config).map(|_| ())
    }

    /// Validates `config` and coerces numeric values to their kind
    /// (`Float` for continuous, `Int` for integer parameters).
    pub fn normalize(&self, config: &Configuration) -> Result<Configuration, SpaceError> {
        self.validate(config)?;
        let mut out = Configuration::new();
        for p in &self.params {
            let v = &config.0[&p.name];
            let v = match p.kind {
                ParamKind::Continuous { .. } => ParamValue::Float(v.as_f64().expect("validated")),
                ParamKind::Integer { .. } => ParamValue::Int(v.as_integer().expect("validated")),
                ParamKind::Categorical { .. } => v.clone(),
            };
            out.0.insert(p.name.clone(), v);
        }
        Ok(out)
    }

    pub fn encode(&self, config: &Configuration) -> Result<UnitVector, SpaceError> {
        if let Some(extra) = config
            .0
            .keys()
            .find(|k| !self.params.iter().any(|p| &p.name == *k))
        {
            return Err(SpaceError::UnknownParam(extra.clone()));
        }
        let coords = self
            .params
            .iter()
            .map(|p| {
                let value = config
                    .get(&p.name)
                    .ok_or_else(|| SpaceError::MissingValue(p.name.clone()))?;
                p.encode_value(value)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(UnitVector(coords))
    }

    pub fn decode(&self, u: &UnitVector) -> Result<Configuration, SpaceError> {
        if u.len() != self.dim() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(self.decode_coords(u))
    }

    /// Decodes without a dimension check; coordinates are clamped to `[0, 1]`.
    pub(crate) fn decode_coords(&self, u: &[f64]) -> Configuration {
        Configuration(
            self.params
                .iter()
                .zip(u)
                .map(|(p, &c)| (p.name.clone(), p.decode_coord(c)))
                .collect(),
        )
    }

    /// `encode(decode(u))`: the canonical representative of `u`'s cell.
    pub fn project(&self, u: &[f64]) -> UnitVector {
        self.encode(&self.decode_coords(u))
            .expect("decoded configurations are always valid")
    }

    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> UnitVector {
        UnitVector::random(self.dim(), rng)
    }

    pub fn sample_random<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let u = self.sample_unit(rng);
        self.decode_coords(&u)
    }

    pub fn fingerprint(&self) -> SpaceFingerprint {
        let mut raw: Vec<RawParam> = self.params.iter().map(ParamSpec::to_raw).collect();
        raw.sort_by(|a, b| a.name.cmp(&b.name));
        let body = serde_json::to_string(&raw).expect("raw params serialize");
        SpaceFingerprint(format!("{}:{}", self.dim(), body))
    }
}
