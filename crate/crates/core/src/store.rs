//! Append-only on-disk series store.
//!
//! Each series key maps to `<root>/<key>.jsonl`, one JSON record per line:
//!
//! ```text
//! {"ts":"2025-01-09T20:04:00Z","commit":"59d51e3","value":2612.5,"unit":"ns","trigger":"push","env":{"os":"ubuntu-24.04"}}
//! ```
//!
//! A line only counts once its terminating newline is on disk, so a reader
//! never sees a half-written record. Invariant violations between complete
//! records (duplicates, unit changes) are dropped on load with a warning.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{CommitId, MeasurementPoint, ModelError, Series, SeriesKey, Trigger};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage error at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("load error in {path} line {line}: {message}")]
    Load {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn storage(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Storage {
        path: path.to_path_buf(),
        source,
    }
}

/// One stored line. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreRecord {
    pub ts: String,
    pub commit: String,
    pub value: f64,
    pub unit: String,
    pub trigger: Trigger,
    pub env: BTreeMap<String, String>,
}

impl StoreRecord {
    pub fn from_point(p: &MeasurementPoint) -> Self {
        Self {
            ts: format_timestamp(&p.timestamp),
            commit: p.commit.to_string(),
            value: p.value,
            unit: p.unit.clone(),
            trigger: p.trigger,
            env: p.env.clone(),
        }
    }

    pub fn to_point(&self) -> Result<MeasurementPoint, ModelError> {
        let timestamp = parse_timestamp(&self.ts)?;
        Ok(MeasurementPoint::new(
            CommitId::new(self.commit.clone())?,
            timestamp,
            self.value,
            self.unit.clone(),
        )?
        .with_env(self.env.clone())
        .with_trigger(self.trigger))
    }

    /// The record as a single JSON line without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization is infallible")
    }
}

/// ISO 8601 UTC with a `Z` suffix; sub-second digits only when present.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, ModelError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| ModelError::InvalidArgument(format!("invalid timestamp {s:?}: {e}")))
}

/// Location and durability settings of a store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreLayout {
    root: PathBuf,
    fsync: bool,
}

impl StoreLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            fsync: false,
        }
    }

    /// Sync file data to disk after every append.
    pub fn with_fsync(mut self, fsync: bool) -> Self {
        self.fsync = fsync;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &SeriesKey) -> PathBuf {
        self.root.join(format!("{}.jsonl", key.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadWarning {
    PartialRecord { bytes: usize },
    DuplicatePoint { line: usize },
    UnitMismatch { line: usize },
}

impl std::fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadWarning::PartialRecord { bytes } => {
                write!(f, "ignored {bytes} trailing bytes of an incomplete record")
            }
            LoadWarning::DuplicatePoint { line } => {
                write!(
                    f,
                    "line {line}: duplicate (timestamp, commit), record dropped"
                )
            }
            LoadWarning::UnitMismatch { line } => {
                write!(
                    f,
                    "line {line}: unit differs from the series unit, record dropped"
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSeries {
    pub series: Series,
    pub warnings: Vec<LoadWarning>,
}

/// Cuts an unterminated trailing line left behind by an interrupted write.
fn drop_partial_tail(file: &mut File, path: &Path) -> Result<(), StoreError> {
    let len = file.metadata().map_err(storage(path))?.len();
    if len == 0 {
        return Ok(());
    }
    let mut last = [0u8; 1];
    file.seek(SeekFrom::Start(len - 1)).map_err(storage(path))?;
    file.read_exact(&mut last).map_err(storage(path))?;
    if last[0] == b'\n' {
        return Ok(());
    }
    let mut contents = Vec::with_capacity(len as usize);
    file.seek(SeekFrom::Start(0)).map_err(storage(path))?;
    file.read_to_end(&mut contents).map_err(storage(path))?;
    let keep = contents
        .iter()
        .rposition(|&b| b == b'\n')
        .map_or(0, |i| i + 1);
    file.set_len(keep as u64).map_err(storage(path))
}

/// Appends one record for `point` to the series file of `key`.
///
/// Single writer per key: concurrent appends to the same key are not
/// coordinated here.
pub fn store_append(
    layout: &StoreLayout,
    key: &SeriesKey,
    point: &MeasurementPoint,
) -> Result<(), StoreError> {
    let path = layout.path_for(key);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(storage(dir))?;
    }
    let mut file = OpenOptions::new()
        .read(true)
        .append(true)
        .create(true)
        .open(&path)
        .map_err(storage(&path))?;
    drop_partial_tail(&mut file, &path)?;
    let mut line = StoreRecord::from_point(point).to_line();
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(storage(&path))?;
    if layout.fsync {
        file.sync_data().map_err(storage(&path))?;
    }
    Ok(())
}

/// Loads and validates the series of `key`. A missing file is an empty series.
pub fn store_load(layout: &StoreLayout, key: &SeriesKey) -> Result<LoadedSeries, StoreError> {
    let path = layout.path_for(key);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(storage(&path)(e)),
    };
    parse_records(&bytes, key.clone(), &path)
}

/// Parses store file contents; exposed for tooling that reads records from
/// somewhere other than a store directory.
pub fn parse_records(
    bytes: &[u8],
    key: SeriesKey,
    path: &Path,
) -> Result<LoadedSeries, StoreError> {
    let mut warnings = Vec::new();
    let complete = match bytes.iter().rposition(|&b| b == b'\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < bytes.len() {
        warnings.push(LoadWarning::PartialRecord {
            bytes: bytes.len() - complete,
        });
    }
    let mut series = Series::new(key);
    for (i, raw) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
        let line = i + 1;
        if raw.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let load_err = |message: String| StoreError::Load {
            path: path.to_path_buf(),
            line,
            message,
        };
        let record: StoreRecord =
            serde_json::from_slice(raw).map_err(|e| load_err(e.to_string()))?;
        let point = record.to_point().map_err(|e| load_err(e.to_string()))?;
        match series.insert(point) {
            Ok(()) => {}
            Err(ModelError::DuplicatePoint { .. }) => {
                warnings.push(LoadWarning::DuplicatePoint { line })
            }
            Err(ModelError::UnitMismatch { .. }) => {
                warnings.push(LoadWarning::UnitMismatch { line })
            }
            Err(e) => return Err(load_err(e.to_string())),
        }
    }
    Ok(LoadedSeries { series, warnings })
}
