//! Normality and difference tests used to validate a suspected performance
//! change: Shapiro-Wilk, paired t-test and Welch's t-test.

pub mod distributions;
mod shapiro;
mod ttest;

use serde::{Deserialize, Serialize};

pub use distributions::{normal_cdf, normal_quantile, normal_sf, student_t_sf};
pub use shapiro::shapiro_wilk;
pub use ttest::{paired_t_test, welch_t_test};

/// Significance level applied to t-test p-values.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("sample {label:?} has {n} values; supported range is {min}..={max}")]
    UnsupportedSize {
        label: String,
        n: usize,
        min: usize,
        max: usize,
    },

    #[error("sample {0:?} has zero variance")]
    DegenerateSample(String),

    #[error("sample {label:?} contains a non-finite value at index {index}")]
    NonFinite { label: String, index: usize },

    #[error("length mismatch: paired samples have {left} and {right} values")]
    UnpairedInput { left: usize, right: usize },

    #[error("all paired differences equal {0}; the t statistic is undefined")]
    DegenerateDifference(f64),
}

/// A labelled vector of finite observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVector {
    label: String,
    values: Vec<f64>,
}

impl SampleVector {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self, StatsError> {
        let label = label.into();
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { label, index });
        }
        Ok(Self { label, values })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn mean_var(&self) -> (f64, f64) {
        mean_var(&self.values)
    }
}

pub(crate) fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    ShapiroWilk,
    PairedT,
    WelchT,
}

impl TestKind {
    pub fn display_name(self) -> &'static str {
        match self {
            TestKind::ShapiroWilk => "Shapiro-Wilk",
            TestKind::PairedT => "paired t-test",
            TestKind::WelchT => "Welch t-test",
        }
    }
}

/// Outcome of one statistical test.
///
/// `significant` is only set for t-tests, where it equals
/// `p_value < SIGNIFICANCE_LEVEL`. `degenerate` marks results that come from a
/// limiting convention rather than the regular formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub n: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significant: Option<bool>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl StatTestResult {
    pub(crate) fn t_test(test: TestKind, t: f64, df: f64, p_value: f64, n: Vec<usize>) -> Self {
        Self {
            test,
            statistic: t,
            p_value,
            n,
            df: Some(df),
            significant: Some(p_value < SIGNIFICANCE_LEVEL),
            degenerate: false,
        }
    }
}
