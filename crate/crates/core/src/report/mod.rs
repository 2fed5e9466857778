//! Human-readable output: issue-style markdown reports and plots.

mod plot;
mod svg;

use std::fmt::Write as _;

use chrono::{DateTime, Utc};

use crate::edivisive::{ChangePoint, DetectionConfig};
use crate::store::format_timestamp;

pub use plot::{make_plot_spec, PlotPoint, PlotSpec};
pub use svg::emit_svg;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub const NO_CHANGES_SUMMARY: &str = "no significant change points detected";

/// Detection results for one series, ready to render.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeReport {
    pub series_key: String,
    pub generated_at: DateTime<Utc>,
    pub config: DetectionConfig,
    changes: Vec<ChangePoint>,
}

impl ChangeReport {
    pub fn new(
        series_key: impl Into<String>,
        generated_at: DateTime<Utc>,
        config: DetectionConfig,
        mut changes: Vec<ChangePoint>,
    ) -> Self {
        changes.sort_by_key(|c| c.index);
        Self {
            series_key: series_key.into(),
            generated_at,
            config,
            changes,
        }
    }

    pub fn changes(&self) -> &[ChangePoint] {
        &self.changes
    }

    pub fn summary(&self) -> String {
        match self.changes.len() {
            0 => NO_CHANGES_SUMMARY.to_string(),
            1 => "1 significant change point detected".to_string(),
            n => format!("{n} significant change points detected"),
        }
    }
}

/// `+30.0%` style, sign always shown.
pub fn format_magnitude(m: Option<f64>) -> String {
    match m {
        Some(m) => format!("{:+.1}%", m * 100.0),
        None => "n/a".to_string(),
    }
}

fn direction(m: Option<f64>) -> &'static str {
    match m {
        Some(m) if m > 0.0 => "↑",
        Some(m) if m < 0.0 => "↓",
        Some(_) => "→",
        None => "?",
    }
}

fn trim_fraction(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Three significant digits with trailing zeros removed, switching to
/// exponent notation for very small or large values (like C's `%.3g`).
pub fn format_sig3(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-4..3).contains(&exp) {
        let s = format!("{v:.2e}");
        let (mantissa, exponent) = s.split_once('e').expect("exponent format");
        return format!("{}e{exponent}", trim_fraction(mantissa.to_string()));
    }
    let decimals = (2 - exp).max(0) as usize;
    trim_fraction(format!("{v:.decimals$}"))
}

/// Renders the report as a CommonMark body suitable for an issue tracker.
/// Output depends only on the report contents.
pub fn render_markdown(report: &ChangeReport) -> String {
    let c = &report.config;
    let mut out = String::new();
    let _ = writeln!(out, "## Performance change report: `{}`", report.series_key);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "Data as of {}.",
        format_timestamp(&report.generated_at)
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "| Setting | Value |");
    let _ = writeln!(out, "| --- | --- |");
    let _ = writeln!(out, "| p-value threshold | {} |", c.p_threshold);
    let _ = writeln!(
        out,
        "| magnitude threshold | {} |",
        format_magnitude(Some(c.magnitude_threshold)).trim_start_matches('+')
    );
    let _ = writeln!(out, "| alpha | {} |", c.alpha);
    let _ = writeln!(out, "| permutations | {} |", c.permutations);
    let _ = writeln!(out, "| min segment | {} |", c.min_segment);
    let _ = writeln!(out, "| seed | {} |", c.seed);
    let _ = writeln!(out);
    if !report.changes.is_empty() {
        let _ = writeln!(
            out,
            "| # | Index | Before | After | Direction | Magnitude | p-value | Q̂ |"
        );
        let _ = writeln!(
            out,
            "| ---: | ---: | --- | --- | :---: | ---: | ---: | ---: |"
        );
        for (i, cp) in report.changes.iter().enumerate() {
            let _ = writeln!(
                out,
                "| {} | {} | `{}` | `{}` | {} | {} | {} | {:.3} |",
                i + 1,
                cp.index,
                cp.before_commit.short(),
                cp.after_commit.short(),
                direction(cp.magnitude),
                format_magnitude(cp.magnitude),
                format_sig3(cp.p_value),
                cp.qhat
            );
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "**Summary:** {}.", report.summary());
    out
}
