//! Command-line and HTTP front ends for the perfdrift change detector.

pub mod cli;
pub mod service;

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use perfdrift_core::ingest::{aggregate_entries, Aggregator, ResultEntry};
use perfdrift_core::store::{store_load, LoadedSeries, StoreLayout};
use perfdrift_core::{
    detect, make_series_key, ChangePoint, CommitId, DetectionConfig, MeasurementPoint, Series,
    SeriesKey, Trigger,
};
use serde::{Deserialize, Serialize};

/// Body of `detect --output json` and of `GET /api/v1/changes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangesResponse {
    pub changes: Vec<ChangePoint>,
}

/// Loads a series and runs detection on it. Load warnings are returned
/// alongside so each front end can surface them its own way.
pub fn detect_stored(
    layout: &StoreLayout,
    key: &SeriesKey,
    config: &DetectionConfig,
) -> Result<(LoadedSeries, Vec<ChangePoint>), String> {
    let loaded = store_load(layout, key).map_err(|e| e.to_string())?;
    let changes = detect(&loaded.series, config).map_err(|e| e.to_string())?;
    Ok((loaded, changes))
}

/// Timestamp stamped on a report: the newest point, so reports depend only
/// on the stored data.
pub fn data_as_of(series: &Series) -> DateTime<Utc> {
    series
        .points()
        .last()
        .map_or(DateTime::<Utc>::UNIX_EPOCH, |p| p.timestamp)
}

/// Everything needed to turn parsed result entries into stored points.
pub struct Submission<'a> {
    pub prefix: &'a str,
    pub commit: CommitId,
    pub timestamp: DateTime<Utc>,
    pub trigger: Trigger,
    pub env: BTreeMap<String, String>,
    pub aggregator: Aggregator,
    pub entries: &'a [ResultEntry],
}

/// One point per distinct entry name, keyed `prefix/name[/env tags]`.
/// Nothing is written; every point is validated first so a bad entry
/// rejects the whole submission.
pub fn plan_points(sub: &Submission<'_>) -> Result<Vec<(SeriesKey, MeasurementPoint)>, String> {
    let groups = aggregate_entries(sub.entries, sub.aggregator).map_err(|e| e.to_string())?;
    groups
        .into_iter()
        .map(|(name, unit, value)| {
            let key = make_series_key(sub.prefix, &name, &sub.env).map_err(|e| e.to_string())?;
            let point = MeasurementPoint::new(sub.commit.clone(), sub.timestamp, value, unit)
                .map_err(|e| format!("{name}: {e}"))?
                .with_env(sub.env.clone())
                .with_trigger(sub.trigger);
            Ok((key, point))
        })
        .collect()
}
