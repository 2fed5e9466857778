//! Shared domain types: measurement points, ordered series and series keys.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid commit id {0:?}: expected 7-40 lowercase hex characters")]
    InvalidCommit(String),

    #[error("invalid value {value} for unit {unit:?}")]
    InvalidValue { value: f64, unit: String },

    #[error("duplicate point at ({timestamp}, {commit})")]
    DuplicatePoint { timestamp: String, commit: String },

    #[error("unit mismatch: series uses {expected:?}, point uses {found:?}")]
    UnitMismatch { expected: String, found: String },
}

/// A git commit id: 7 to 40 lowercase hex characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CommitId(String);

impl CommitId {
    pub fn new(s: impl Into<String>) -> Result<Self, ModelError> {
        let s = s.into();
        let ok = (7..=40).contains(&s.len())
            && s.bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if ok {
            Ok(Self(s))
        } else {
            Err(ModelError::InvalidCommit(s))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// First seven characters, as shown in plots and reports.
    pub fn short(&self) -> &str {
        &self.0[..7]
    }
}

impl fmt::Display for CommitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CommitId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for CommitId {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<CommitId> for String {
    fn from(c: CommitId) -> String {
        c.0
    }
}

/// What started the CI run that produced a measurement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    #[default]
    Push,
    Schedule,
    Manual,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::Push => "push",
            Trigger::Schedule => "schedule",
            Trigger::Manual => "manual",
        }
    }
}

impl FromStr for Trigger {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "push" => Ok(Trigger::Push),
            "schedule" => Ok(Trigger::Schedule),
            "manual" => Ok(Trigger::Manual),
            other => Err(ModelError::InvalidArgument(format!(
                "unknown trigger {other:?} (expected push, schedule or manual)"
            ))),
        }
    }
}

const TIME_UNITS: [&str; 4] = ["ns", "us", "ms", "s"];

/// One benchmark result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub commit: CommitId,
    pub timestamp: DateTime<Utc>,
    pub value: f64,
    pub unit: String,
    pub env: BTreeMap<String, String>,
    pub trigger: Trigger,
}

impl MeasurementPoint {
    pub fn new(
        commit: CommitId,
        timestamp: DateTime<Utc>,
        value: f64,
        unit: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let point = Self {
            commit,
            timestamp,
            value,
            unit: unit.into(),
            env: BTreeMap::new(),
            trigger: Trigger::Push,
        };
        point.validate()?;
        Ok(point)
    }

    pub fn with_env(mut self, env: BTreeMap<String, String>) -> Self {
        self.env = env;
        self
    }

    pub fn with_trigger(mut self, trigger: Trigger) -> Self {
        self.trigger = trigger;
        self
    }

    /// Checks the value and unit invariants. Non-negativity is only enforced
    /// for time units.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.unit.is_empty() {
            return Err(ModelError::InvalidArgument("unit must be non-empty".into()));
        }
        let negative_time = self.value < 0.0 && TIME_UNITS.contains(&self.unit.as_str());
        if !self.value.is_finite() || negative_time {
            return Err(ModelError::InvalidValue {
                value: self.value,
                unit: self.unit.clone(),
            });
        }
        Ok(())
    }

    fn order_key(&self) -> (DateTime<Utc>, &CommitId) {
        (self.timestamp, &self.commit)
    }
}

/// Canonical, filesystem-safe identifier of one (benchmark, metric, env) series.
///
/// Components are lowercased and restricted to `[a-z0-9._-]`; any other byte
/// is percent-encoded with lowercase hex. `/`, `=` and `,` are structural.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SeriesKey(String);

impl SeriesKey {
    /// Validates an already-canonical key string (as stored or passed on the
    /// command line).
    pub fn parse(s: &str) -> Result<Self, ModelError> {
        let bad = || ModelError::InvalidArgument(format!("malformed series key {s:?}"));
        let mut parts = s.split('/');
        let head: Vec<&str> = parts.by_ref().take(2).collect();
        if head.len() != 2 || !head.iter().all(|c| is_canonical_component(c)) {
            return Err(bad());
        }
        if let Some(tags) = parts.next() {
            if parts.next().is_some() {
                return Err(bad());
            }
            for tag in tags.split(',') {
                let (name, value) = tag.split_once('=').ok_or_else(bad)?;
                let value_ok = value.is_empty() || is_canonical_component(value);
                if !is_canonical_component(name) || !value_ok {
                    return Err(bad());
                }
            }
        }
        Ok(Self(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for SeriesKey {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for SeriesKey {
    type Error = ModelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<SeriesKey> for String {
    fn from(k: SeriesKey) -> String {
        k.0
    }
}

fn is_safe_byte(b: u8) -> bool {
    b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'.' | b'_' | b'-')
}

fn is_canonical_component(c: &str) -> bool {
    if c.is_empty() || c.bytes().all(|b| b == b'.') {
        return false;
    }
    let bytes = c.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes.get(i + 1..i + 3);
            let ok = hex.is_some_and(|h| {
                h.iter()
                    .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(b))
            });
            if !ok {
                return false;
            }
            i += 3;
        } else if is_safe_byte(bytes[i]) {
            i += 1;
        } else {
            return false;
        }
    }
    true
}

fn encode_component(raw: &str) -> String {
    let lower = raw.to_lowercase();
    // all-dot components would escape the store directory
    let all_dots = lower.bytes().all(|b| b == b'.');
    let mut out = String::with_capacity(lower.len());
    for b in lower.bytes() {
        if is_safe_byte(b) && !(all_dots && b == b'.') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02x}"));
        }
    }
    out
}

/// Builds the canonical key for a (benchmark, metric, env) triple. Tags are
/// emitted in lexicographic order of their names.
pub fn make_series_key(
    benchmark: &str,
    metric: &str,
    env: &BTreeMap<String, String>,
) -> Result<SeriesKey, ModelError> {
    if benchmark.is_empty() || metric.is_empty() {
        return Err(ModelError::InvalidArgument(
            "benchmark and metric must be non-empty".into(),
        ));
    }
    let mut key = format!(
        "{}/{}",
        encode_component(benchmark),
        encode_component(metric)
    );
    if !env.is_empty() {
        // re-sort after encoding: lowercasing can reorder names
        let mut tags = Vec::with_capacity(env.len());
        for (name, value) in env {
            if name.is_empty() {
                return Err(ModelError::InvalidArgument("empty env tag name".into()));
            }
            tags.push((encode_component(name), encode_component(value)));
        }
        tags.sort();
        if tags.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(ModelError::InvalidArgument(
                "env tag names collide after lowercasing".into(),
            ));
        }
        let tags: Vec<String> = tags.into_iter().map(|(n, v)| format!("{n}={v}")).collect();
        key.push('/');
        key.push_str(&tags.join(","));
    }
    Ok(SeriesKey(key))
}

/// Points for one series, kept sorted by `(timestamp, commit)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    key: Option<SeriesKey>,
    points: Vec<MeasurementPoint>,
}

impl Series {
    pub fn new(key: SeriesKey) -> Self {
        Self {
            key: Some(key),
            points: Vec::new(),
        }
    }

    /// A series without a key, used for ad-hoc data such as simulator output.
    pub fn unkeyed() -> Self {
        Self::default()
    }

    /// Builds a series from points in any order.
    pub fn from_points(
        key: Option<SeriesKey>,
        points: impl IntoIterator<Item = MeasurementPoint>,
    ) -> Result<Self, ModelError> {
        let mut series = Self {
            key,
            points: Vec::new(),
        };
        for p in points {
            series = append_point(series, p)?;
        }
        Ok(series)
    }

    pub fn key(&self) -> Option<&SeriesKey> {
        self.key.as_ref()
    }

    pub fn points(&self) -> &[MeasurementPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn unit(&self) -> Option<&str> {
        self.points.first().map(|p| p.unit.as_str())
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// Inserts a point in order. See [`append_point`].
    pub fn insert(&mut self, point: MeasurementPoint) -> Result<(), ModelError> {
        point.validate()?;
        if let Some(unit) = self.unit() {
            if unit != point.unit {
                return Err(ModelError::UnitMismatch {
                    expected: unit.to_string(),
                    found: point.unit,
                });
            }
        }
        match self
            .points
            .binary_search_by(|p| p.order_key().cmp(&point.order_key()))
        {
            Ok(_) => Err(ModelError::DuplicatePoint {
                timestamp: point.timestamp.to_rfc3339(),
                commit: point.commit.to_string(),
            }),
            Err(pos) => {
                self.points.insert(pos, point);
                Ok(())
            }
        }
    }
}

/// Returns `series` with `point` inserted at its `(timestamp, commit)` position.
pub fn append_point(mut series: Series, point: MeasurementPoint) -> Result<Series, ModelError> {
    series.insert(point)?;
    Ok(series)
}
