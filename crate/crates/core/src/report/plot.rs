use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::edivisive::ChangePoint;
use crate::model::Series;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    /// Run ordinal.
    pub x: usize,
    pub label: String,
    /// Displayed value, capped at the clip threshold.
    pub y: f64,
    pub clipped: bool,
    /// Stored value, unchanged by clipping.
    pub original: f64,
}

/// Display-ready series. Clipping lives only here; the stored series and the
/// detection input are never clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub title: String,
    pub unit: String,
    pub points: Vec<PlotPoint>,
    pub clip_threshold: Option<f64>,
    pub change_markers: Vec<usize>,
}

pub fn make_plot_spec(
    series: &Series,
    changes: &[ChangePoint],
    clip: Option<f64>,
) -> Result<PlotSpec, ReportError> {
    if let Some(c) = clip {
        if !c.is_finite() {
            return Err(ReportError::InvalidArgument(format!("clip threshold {c}")));
        }
    }
    for cp in changes {
        if cp.index == 0 || cp.index >= series.len() {
            return Err(ReportError::InvalidArgument(format!(
                "change index {} outside 1..{}",
                cp.index,
                series.len()
            )));
        }
    }
    let points = series
        .points()
        .iter()
        .enumerate()
        .map(|(x, p)| {
            let clipped = clip.is_some_and(|c| p.value > c);
            PlotPoint {
                x,
                label: format!(
                    "{} {}",
                    p.commit.short(),
                    p.timestamp.format("%Y-%m-%d %H:%M")
                ),
                y: if clipped { clip.unwrap() } else { p.value },
                clipped,
                original: p.value,
            }
        })
        .collect();
    Ok(PlotSpec {
        title: series.key().map_or_else(String::new, |k| k.to_string()),
        unit: series.unit().unwrap_or_default().to_string(),
        points,
        clip_threshold: clip,
        change_markers: changes.iter().map(|c| c.index).collect(),
    })
}
