//! Parsers for benchmark result files.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IngestError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("schema error{}: {message}", location(*.index, .field.as_deref()))]
    Schema {
        index: Option<usize>,
        field: Option<String>,
        message: String,
    },

    #[error("value error at row {row}: {message}")]
    Value { row: usize, message: String },
}

fn location(index: Option<usize>, field: Option<&str>) -> String {
    match (index, field) {
        (Some(i), Some(f)) => format!(" in element {i}, field {f:?}"),
        (Some(i), None) => format!(" in element {i}"),
        (None, Some(f)) => format!(" in field {f:?}"),
        (None, None) => String::new(),
    }
}

impl IngestError {
    fn schema(index: Option<usize>, field: Option<&str>, message: impl Into<String>) -> Self {
        IngestError::Schema {
            index,
            field: field.map(str::to_string),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultFormat {
    GhaJson,
    MoobenchCsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub name: String,
    pub unit: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<String>,
}

/// Parsed contents of one result file. `entries` is never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResultFile {
    pub format: ResultFormat,
    pub entries: Vec<ResultEntry>,
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start = bytes
        .iter()
        .enumerate()
        .filter(|(_, b)| **b == b'\n')
        .nth(line.saturating_sub(2))
        .map_or(0, |(i, _)| i + 1);
    let start = if line == 1 { 0 } else { line_start };
    (start + column.saturating_sub(1)).min(bytes.len())
}

/// Parses a github-action-benchmark style result array:
/// `[{"name": .., "unit": .., "value": .., "extra": ..?}, ..]`.
pub fn parse_gha_json(bytes: &[u8]) -> Result<BenchmarkResultFile, IngestError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| IngestError::Parse {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let entries = entries_from_value(&doc)?;
    Ok(BenchmarkResultFile {
        format: ResultFormat::GhaJson,
        entries,
    })
}

/// Validates an already-decoded result array. Shared with the HTTP service,
/// which embeds the array in a larger request body.
pub fn entries_from_value(doc: &Value) -> Result<Vec<ResultEntry>, IngestError> {
    let items = doc
        .as_array()
        .ok_or_else(|| IngestError::schema(None, None, "expected an array of results"))?;
    if items.is_empty() {
        return Err(IngestError::schema(None, None, "empty result set"));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let obj = item
                .as_object()
                .ok_or_else(|| IngestError::schema(Some(i), None, "expected an object"))?;
            let string_field = |field: &str| -> Result<String, IngestError> {
                match obj.get(field) {
                    Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
                    Some(Value::String(_)) => Err(IngestError::schema(
                        Some(i),
                        Some(field),
                        "must be non-empty",
                    )),
                    Some(_) => Err(IngestError::schema(
                        Some(i),
                        Some(field),
                        "expected a string",
                    )),
                    None => Err(IngestError::schema(Some(i), Some(field), "missing field")),
                }
            };
            let name = string_field("name")?;
            let unit = string_field("unit")?;
            let value = match obj.get("value") {
                Some(Value::Number(n)) => n.as_f64().ok_or_else(|| {
                    IngestError::schema(Some(i), Some("value"), "number out of range")
                })?,
                Some(_) => {
                    return Err(IngestError::schema(
                        Some(i),
                        Some("value"),
                        "expected a number",
                    ))
                }
                None => return Err(IngestError::schema(Some(i), Some("value"), "missing field")),
            };
            if !value.is_finite() {
                return Err(IngestError::Value {
                    row: i,
                    message: format!("non-finite value {value}"),
                });
            }
            let extra = match obj.get("extra") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s.clone()),
                Some(_) => {
                    return Err(IngestError::schema(
                        Some(i),
                        Some("extra"),
                        "expected a string",
                    ))
                }
            };
            Ok(ResultEntry {
                name,
                unit,
                value,
                extra,
            })
        })
        .collect()
}

/// Column selection for [`parse_moobench_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub column: String,
    pub benchmark: String,
    pub delimiter: u8,
}

impl CsvOptions {
    pub fn new(column: impl Into<String>, benchmark: impl Into<String>) -> Self {
        Self {
            column: column.into(),
            benchmark: benchmark.into(),
            delimiter: b',',
        }
    }
}

/// Parses a header-bearing CSV of per-iteration durations in nanoseconds.
/// The decimal separator is `.`; row numbers in errors are 1-based file lines.
pub fn parse_moobench_csv(
    bytes: &[u8],
    options: &CsvOptions,
) -> Result<BenchmarkResultFile, IngestError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(IngestError::Parse {
            offset: 0,
            message: "empty file".into(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .delimiter(options.delimiter)
        .from_reader(bytes);
    let headers = reader.headers().map_err(csv_parse_error)?.clone();
    let column = headers
        .iter()
        .position(|h| h.trim() == options.column)
        .ok_or_else(|| {
            IngestError::schema(None, Some(&options.column), "column not found in header")
        })?;
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_parse_error)?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(IngestError::Value {
                row,
                message: format!(
                    "expected {} fields, found {} (the decimal separator is '.')",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let raw = record[column].trim();
        let value: f64 = raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| IngestError::Value {
                row,
                message: format!("cannot parse {raw:?} as a number"),
            })?;
        entries.push(ResultEntry {
            name: options.benchmark.clone(),
            unit: "ns".into(),
            value,
            extra: None,
        });
    }
    if entries.is_empty() {
        return Err(IngestError::schema(None, None, "no data rows"));
    }
    Ok(BenchmarkResultFile {
        format: ResultFormat::MoobenchCsv,
        entries,
    })
}

fn csv_parse_error(e: csv::Error) -> IngestError {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    IngestError::Parse {
        offset,
        message: e.to_string(),
    }
}

/// How many per-iteration values are folded into one stored point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    #[default]
    Mean,
    Median,
    Min,
}

impl std::str::FromStr for Aggregator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "median" => Ok(Aggregator::Median),
            "min" => Ok(Aggregator::Min),
            other => Err(format!("unknown aggregator {other:?}")),
        }
    }
}

impl Aggregator {
    /// `None` for an empty slice.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        Some(match self {
            Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregator::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregator::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let mid = v.len() / 2;
                if v.len() % 2 == 1 {
                    v[mid]
                } else {
                    (v[mid - 1] + v[mid]) / 2.0
                }
            }
        })
    }
}

/// Folds entries sharing a name into one (name, unit, value) triple each, in
/// order of first appearance.
pub fn aggregate_entries(
    entries: &[ResultEntry],
    aggregator: Aggregator,
) -> Result<Vec<(String, String, f64)>, IngestError> {
    let mut groups: Vec<(String, String, Vec<f64>)> = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        match groups.iter_mut().find(|g| g.0 == e.name) {
            Some(g) if g.1 != e.unit => {
                return Err(IngestError::schema(
                    Some(i),
                    Some("unit"),
                    format!(
                        "unit {:?} differs from earlier {:?} for {:?}",
                        e.unit, g.1, e.name
                    ),
                ))
            }
            Some(g) => g.2.push(e.value),
            None => groups.push((e.name.clone(), e.unit.clone(), vec![e.value])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(name, unit, values)| {
            let v = aggregator.apply(&values).expect("groups are non-empty");
            (name, unit, v)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gha_single_entry() {
        let f =
            parse_gha_json(br#"[{"name":"Kieker-java-binary-file","unit":"ns","value":2500.1}]"#)
                .unwrap();
        assert_eq!(f.format, ResultFormat::GhaJson);
        assert_eq!(
            f.entries,
            vec![ResultEntry {
                name: "Kieker-java-binary-file".into(),
                unit: "ns".into(),
                value: 2500.1,
                extra: None
            }]
        );
    }

    #[test]
    fn gha_keeps_order_and_extra() {
        let f = parse_gha_json(
            br#"[{"name":"b","unit":"ns","value":2,"extra":"x"},{"name":"a","unit":"ns","value":1,"range":"+-1"}]"#,
        )
        .unwrap();
        assert_eq!(f.entries[0].name, "b");
        assert_eq!(f.entries[0].extra.as_deref(), Some("x"));
        assert_eq!(f.entries[1].value, 1.0);
    }

    #[test]
    fn gha_empty_array() {
        assert!(matches!(
            parse_gha_json(b"[]"),
            Err(IngestError::Schema { .. })
        ));
    }

    #[test]
    fn gha_wrong_value_type() {
        let err = parse_gha_json(br#"[{"name":"a","unit":"ns","value":"fast"}]"#).unwrap_err();
        assert_eq!(
            err,
            IngestError::Schema {
                index: Some(0),
                field: Some("value".into()),
                message: "expected a number".into()
            }
        );
    }

    #[test]
    fn gha_missing_field_names_it() {
        let err = parse_gha_json(br#"[{"name":"a","value":1},{}]"#).unwrap_err();
        assert!(err.to_string().contains("\"unit\""), "{err}");
        assert!(err.to_string().contains("element 0"), "{err}");
    }

    #[test]
    fn gha_malformed_reports_offset() {
        let input = b"[{\"name\":\"a\",\n \"unit\": ns}]";
        match parse_gha_json(input).unwrap_err() {
            IngestError::Parse { offset, .. } => assert_eq!(input[offset - 1], b'n'),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gha_not_an_array() {
        assert!(matches!(
            parse_gha_json(br#"{"name":"a"}"#),
            Err(IngestError::Schema { index: None, .. })
        ));
    }

    fn opts() -> CsvOptions {
        CsvOptions::new("duration_ns", "kieker")
    }

    #[test]
    fn csv_basic() {
        let f = parse_moobench_csv(b"duration_ns\n2450\n2460\n", &opts()).unwrap();
        let values: Vec<f64> = f.entries.iter().map(|e| e.value).collect();
        assert_eq!(values, vec![2450.0, 2460.0]);
        assert!(f
            .entries
            .iter()
            .all(|e| e.unit == "ns" && e.name == "kieker"));
    }

    #[test]
    fn csv_selects_column() {
        let f = parse_moobench_csv(b"i,duration_ns\n0,2450.5\n1,2460\n", &opts()).unwrap();
        assert_eq!(f.entries[0].value, 2450.5);
    }

    #[test]
    fn csv_empty_file() {
        assert!(matches!(
            parse_moobench_csv(b"", &opts()),
            Err(IngestError::Parse { .. })
        ));
    }

    #[test]
    fn csv_missing_column() {
        let err = parse_moobench_csv(b"time\n1\n", &opts()).unwrap_err();
        assert!(
            matches!(err, IngestError::Schema { field: Some(ref f), .. } if f == "duration_ns")
        );
    }

    #[test]
    fn csv_comma_decimal() {
        let err = parse_moobench_csv(b"duration_ns\n2450\n2,450\n", &opts()).unwrap_err();
        assert!(matches!(err, IngestError::Value { row: 3, .. }), "{err:?}");
        let err = parse_moobench_csv(b"duration_ns\n\"2,450\"\n", &opts()).unwrap_err();
        assert!(matches!(err, IngestError::Value { row: 2, .. }), "{err:?}");
    }

    #[test]
    fn csv_rejects_nan() {
        let err = parse_moobench_csv(b"duration_ns\nNaN\n", &opts()).unwrap_err();
        assert!(matches!(err, IngestError::Value { row: 2, .. }));
    }

    #[test]
    fn csv_header_only() {
        assert!(matches!(
            parse_moobench_csv(b"duration_ns\n", &opts()),
            Err(IngestError::Schema { .. })
        ));
    }

    #[test]
    fn aggregators() {
        let v = [3.0, 1.0, 2.0, 10.0];
        assert_eq!(Aggregator::Mean.apply(&v), Some(4.0));
        assert_eq!(Aggregator::Median.apply(&v), Some(2.5));
        assert_eq!(Aggregator::Min.apply(&v), Some(1.0));
        assert_eq!(Aggregator::Median.apply(&[]), None);
    }

    #[test]
    fn aggregate_groups_by_name() {
        let e = |n: &str, v: f64| ResultEntry {
            name: n.into(),
            unit: "ns".into(),
            value: v,
            extra: None,
        };
        let out =
            aggregate_entries(&[e("b", 1.0), e("a", 5.0), e("b", 3.0)], Aggregator::Mean).unwrap();
        assert_eq!(
            out,
            vec![
                ("b".into(), "ns".into(), 2.0),
                ("a".into(), "ns".into(), 5.0)
            ]
        );
    }

    proptest! {
        #[test]
        fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = parse_gha_json(&bytes);
            let _ = parse_moobench_csv(&bytes, &opts());
        }

        #[test]
        fn gha_parser_total_on_json_like(s in r#"[\[\]{}",:0-9a-z ]{0,60}"#) {
            let _ = parse_gha_json(s.as_bytes());
        }
    }
}
