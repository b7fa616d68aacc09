//! Canonical time-series representation, CSV ingestion, continuity
//! validation, and gap repair.
//!
//! Series live on a uniform half-hourly grid: timestamps are implicit,
//! `timestamp(i) = start + i * 30min`, so gap detection is pure index
//! arithmetic on the parsed timestamps. Ingestion never fills gaps
//! silently; it reports them for [`fill_gaps`] to repair explicitly.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

/// Grid step: half-hourly data.
pub const STEP_MINUTES: i64 = 30;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

/// Uniformly spaced half-hourly observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    start: NaiveDateTime,
    values: Vec<f64>,
    unit: String,
}

impl TimeSeries {
    pub fn new(start: NaiveDateTime, values: Vec<f64>, unit: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("TimeSeries requires >= 1 value".to_string()));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "values",
                format!("non-finite value at index {idx}"),
            ));
        }
        Ok(TimeSeries {
            start,
            values,
            unit: unit.into(),
        })
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn step(&self) -> Duration {
        Duration::minutes(STEP_MINUTES)
    }

    pub fn unit(&self) -> &str {
        &self.unit
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

    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::minutes(STEP_MINUTES * index as i64)
    }

    /// Same start and unit, new values of equal length.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        TimeSeries::new(self.start, values, self.unit.clone())
    }
}

/// Companion exogenous columns, aligned index-for-index with a series.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousFrame {
    pub demand: Vec<f64>,
    pub temperature: Vec<f64>,
    pub humidity: Vec<f64>,
    pub heat_index: Vec<f64>,
    pub is_holiday: Vec<f64>,
}

impl ExogenousFrame {
    pub fn validate(&self, expected_len: usize) -> Result<()> {
        for (name, col) in self.columns() {
            if col.len() != expected_len {
                return Err(Error::LengthMismatch {
                    left: col.len(),
                    right: expected_len,
                    context: format!("exogenous column {name}"),
                });
            }
        }
        if let Some(i) = self
            .is_holiday
            .iter()
            .position(|&v| v != 0.0 && v != 1.0)
        {
            return Err(Error::invalid(
                "is_holiday",
                format!("value at index {i} is not 0 or 1"),
            ));
        }
        Ok(())
    }

    pub fn columns(&self) -> [(&'static str, &Vec<f64>); 5] {
        [
            ("demand", &self.demand),
            ("temperature", &self.temperature),
            ("humidity", &self.humidity),
            ("heat_index", &self.heat_index),
            ("is_holiday", &self.is_holiday),
        ]
    }

    fn columns_mut(&mut self) -> [(&'static str, &mut Vec<f64>); 5] {
        [
            ("demand", &mut self.demand),
            ("temperature", &mut self.temperature),
            ("humidity", &mut self.humidity),
            ("heat_index", &mut self.heat_index),
            ("is_holiday", &mut self.is_holiday),
        ]
    }

    /// Repairs the same gaps reported for the companion series.
    /// is_holiday always carries the previous value to stay in {0,1}.
    pub fn fill_gaps(&self, report: &GapReport, policy: FillPolicy) -> Result<ExogenousFrame> {
        let mut out = self.clone();
        for (name, col) in out.columns_mut() {
            let p = if name == "is_holiday" {
                FillPolicy::Previous
            } else {
                policy
            };
            *col = fill_values(col, report, p, usize::MAX)?;
        }
        Ok(out)
    }
}

/// One run of missing grid slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    /// Grid index the first missing observation would occupy.
    pub start_index: usize,
    /// Number of consecutive missing steps.
    pub run: usize,
}

/// Continuity defects found during ingestion or validation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GapReport {
    /// Disjoint runs, sorted ascending by start index.
    pub gaps: Vec<Gap>,
    /// Grid indices where duplicate timestamps were collapsed.
    pub duplicate_timestamps: Vec<usize>,
}

impl GapReport {
    pub fn is_clean(&self) -> bool {
        self.gaps.is_empty() && self.duplicate_timestamps.is_empty()
    }

    pub fn total_missing(&self) -> usize {
        self.gaps.iter().map(|g| g.run).sum()
    }
}

/// How to repair a gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillPolicy {
    /// Straight line between the bounding observations.
    Linear,
    /// Carry the previous observation forward.
    Previous,
}

impl FillPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(FillPolicy::Linear),
            "previous" => Ok(FillPolicy::Previous),
            other => Err(Error::invalid("fill policy", format!("unknown policy {other:?}"))),
        }
    }
}

/// Longest gap run [`fill_gaps`] repairs by default (one day).
pub const DEFAULT_MAX_FILL_RUN: usize = 48;

/// Maps CSV column names to their roles. Defaults to the documented
/// header `timestamp,usep_price,demand,temperature,humidity,heat_index,is_holiday`.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub timestamp: String,
    pub price: String,
    pub demand: String,
    pub temperature: String,
    pub humidity: String,
    pub heat_index: String,
    pub is_holiday: String,
    pub unit: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp: "timestamp".to_string(),
            price: "usep_price".to_string(),
            demand: "demand".to_string(),
            temperature: "temperature".to_string(),
            humidity: "humidity".to_string(),
            heat_index: "heat_index".to_string(),
            is_holiday: "is_holiday".to_string(),
            unit: "S$/MWh".to_string(),
        }
    }
}

struct ParsedRow {
    timestamp: NaiveDateTime,
    price: f64,
    exo: [f64; 5],
}

/// Reads a half-hourly CSV into a compacted series plus a defect report.
///
/// Rows are sorted by timestamp; duplicate timestamps keep the first
/// occurrence and are recorded. Missing half-hours are reported as gaps,
/// not filled — the returned series holds the observed values only, and
/// the gap indices refer to the uniform grid anchored at the first
/// timestamp. Run [`fill_gaps`] to obtain the grid-complete series.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
) -> Result<(TimeSeries, ExogenousFrame, GapReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    ingest_csv_str(&text, schema)
}

/// [`ingest_csv`] over an in-memory CSV body.
pub fn ingest_csv_str(
    text: &str,
    schema: &CsvSchema,
) -> Result<(TimeSeries, ExogenousFrame, GapReport)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::EmptyInput("CSV has no header row".to_string()))?;
    let columns: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    let find = |name: &str| -> Result<usize> {
        columns.iter().position(|c| *c == name).ok_or_else(|| Error::Ingestion {
            row: 1,
            message: format!("header is missing column {name:?}"),
        })
    };
    let ts_col = find(&schema.timestamp)?;
    let price_col = find(&schema.price)?;
    let exo_cols = [
        find(&schema.demand)?,
        find(&schema.temperature)?,
        find(&schema.humidity)?,
        find(&schema.heat_index)?,
        find(&schema.is_holiday)?,
    ];

    let mut rows: Vec<ParsedRow> = Vec::new();
    for (line_idx, line) in lines {
        let row_number = line_idx + 1; // 1-based, header is row 1
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let field = |col: usize| -> Result<&str> {
            fields.get(col).copied().ok_or_else(|| Error::Ingestion {
                row: row_number,
                message: format!("row has {} fields, column {} required", fields.len(), col + 1),
            })
        };
        let ts_text = field(ts_col)?;
        let timestamp = NaiveDateTime::parse_from_str(ts_text, TIMESTAMP_FORMAT)
            .or_else(|_| NaiveDateTime::parse_from_str(ts_text, "%Y-%m-%dT%H:%M:%S"))
            .map_err(|e| Error::Ingestion {
                row: row_number,
                message: format!("unparseable timestamp {ts_text:?}: {e}"),
            })?;
        if timestamp.minute() % 30 != 0 || timestamp.second() != 0 {
            return Err(Error::Ingestion {
                row: row_number,
                message: format!("timestamp {ts_text:?} is not half-hour aligned"),
            });
        }
        let parse_num = |col: usize, name: &str| -> Result<f64> {
            let raw = field(col)?;
            let v: f64 = raw.parse().map_err(|_| Error::Ingestion {
                row: row_number,
                message: format!("non-numeric {name} {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row: row_number,
                    message: format!("non-finite {name} {raw:?}"),
                });
            }
            Ok(v)
        };
        let price = parse_num(price_col, "price")?;
        let mut exo = [0.0; 5];
        for (slot, &col) in exo.iter_mut().zip(exo_cols.iter()) {
            *slot = parse_num(col, columns.get(col).copied().unwrap_or("column"))?;
        }
        if exo[4] != 0.0 && exo[4] != 1.0 {
            return Err(Error::Ingestion {
                row: row_number,
                message: format!("is_holiday must be 0 or 1, got {}", exo[4]),
            });
        }
        rows.push(ParsedRow {
            timestamp,
            price,
            exo,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("CSV has a header but no data rows".to_string()));
    }

    rows.sort_by_key(|r| r.timestamp);
    let start = rows[0].timestamp;

    let mut values = Vec::with_capacity(rows.len());
    let mut exo_frame = ExogenousFrame {
        demand: Vec::with_capacity(rows.len()),
        temperature: Vec::with_capacity(rows.len()),
        humidity: Vec::with_capacity(rows.len()),
        heat_index: Vec::with_capacity(rows.len()),
        is_holiday: Vec::with_capacity(rows.len()),
    };
    let mut report = GapReport::default();
    let mut prev_grid_index: Option<i64> = None;
    for row in &rows {
        let offset = row.timestamp - start;
        let grid_index = offset.num_minutes() / STEP_MINUTES;
        if let Some(prev) = prev_grid_index {
            if grid_index == prev {
                // Duplicate timestamp: first occurrence already kept.
                if report.duplicate_timestamps.last() != Some(&(grid_index as usize)) {
                    report.duplicate_timestamps.push(grid_index as usize);
                }
                continue;
            }
            let jump = grid_index - prev;
            if jump > 1 {
                report.gaps.push(Gap {
                    start_index: (prev + 1) as usize,
                    run: (jump - 1) as usize,
                });
            }
        }
        prev_grid_index = Some(grid_index);
        values.push(row.price);
        exo_frame.demand.push(row.exo[0]);
        exo_frame.temperature.push(row.exo[1]);
        exo_frame.humidity.push(row.exo[2]);
        exo_frame.heat_index.push(row.exo[3]);
        exo_frame.is_holiday.push(row.exo[4]);
    }

    let series = TimeSeries::new(start, values, schema.unit.clone())?;
    exo_frame.validate(series.len())?;
    Ok((series, exo_frame, report))
}

/// Detects grid defects in a parsed timestamp sequence.
///
/// The grid is anchored at the first timestamp. Returns the same report
/// shape ingestion produces: gaps where consecutive timestamps skip
/// steps, duplicates where they repeat.
pub fn validate_continuity(timestamps: &[NaiveDateTime]) -> Result<GapReport> {
    if timestamps.is_empty() {
        return Err(Error::EmptyInput("validate_continuity".to_string()));
    }
    let start = timestamps[0];
    let mut report = GapReport::default();
    let mut prev: Option<i64> = None;
    for (i, ts) in timestamps.iter().enumerate() {
        let offset = *ts - start;
        if offset.num_minutes() % STEP_MINUTES != 0 {
            return Err(Error::invalid(
                "timestamps",
                format!("timestamp at position {i} is off the half-hour grid"),
            ));
        }
        let grid_index = offset.num_minutes() / STEP_MINUTES;
        if let Some(p) = prev {
            if grid_index < p {
                return Err(Error::invalid(
                    "timestamps",
                    format!("timestamp at position {i} is out of order"),
                ));
            }
            if grid_index == p {
                report.duplicate_timestamps.push(grid_index as usize);
                continue;
            }
            if grid_index - p > 1 {
                report.gaps.push(Gap {
                    start_index: (p + 1) as usize,
                    run: (grid_index - p - 1) as usize,
                });
            }
        }
        prev = Some(grid_index);
    }
    Ok(report)
}

fn fill_values(
    values: &[f64],
    report: &GapReport,
    policy: FillPolicy,
    max_run: usize,
) -> Result<Vec<f64>> {
    for gap in &report.gaps {
        if gap.run > max_run {
            return Err(Error::GapTooLong {
                start: gap.start_index,
                run: gap.run,
                max: max_run,
            });
        }
        if gap.start_index == 0 {
            return Err(Error::invalid(
                "gap",
                "gap precedes the first observation; grid must start at an observed value",
            ));
        }
    }
    let mut out = Vec::with_capacity(values.len() + report.total_missing());
    let mut gap_iter = report.gaps.iter().peekable();
    for (obs_index, &v) in values.iter().enumerate() {
        out.push(v);
        // A gap starts right after this observation iff its grid start
        // equals the grid position following the output so far.
        if let Some(gap) = gap_iter.peek() {
            if gap.start_index == out.len() {
                let before = v;
                let after = values.get(obs_index + 1).copied().ok_or_else(|| {
                    Error::invalid("gap", "gap extends past the last observation")
                })?;
                for j in 0..gap.run {
                    let filled = match policy {
                        FillPolicy::Linear => {
                            before + (after - before) * (j + 1) as f64 / (gap.run + 1) as f64
                        }
                        FillPolicy::Previous => before,
                    };
                    out.push(filled);
                }
                gap_iter.next();
            }
        }
    }
    Ok(out)
}

/// Repairs the reported gaps, producing the grid-complete series.
///
/// Gap runs longer than `max_run` (default [`DEFAULT_MAX_FILL_RUN`])
/// abort: interpolating across multi-day outages would fabricate
/// structure. Original values pass through untouched; an empty report
/// returns the series unchanged.
pub fn fill_gaps(
    series: &TimeSeries,
    report: &GapReport,
    policy: FillPolicy,
    max_run: Option<usize>,
) -> Result<TimeSeries> {
    let max_run = max_run.unwrap_or(DEFAULT_MAX_FILL_RUN);
    let filled = fill_values(series.values(), report, policy, max_run)?;
    TimeSeries::new(series.start(), filled, series.unit().to_string())
}

/// Writes a series (plus exogenous columns) in the canonical CSV layout.
pub fn write_series_csv(
    path: impl AsRef<Path>,
    series: &TimeSeries,
    exo: Option<&ExogenousFrame>,
) -> Result<()> {
    let path = path.as_ref();
    let body = render_series_csv(series, exo)?;
    std::fs::write(path, body).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn render_series_csv(series: &TimeSeries, exo: Option<&ExogenousFrame>) -> Result<String> {
    if let Some(frame) = exo {
        frame.validate(series.len())?;
    }
    let mut out = String::new();
    out.push_str("timestamp,usep_price,demand,temperature,humidity,heat_index,is_holiday\n");
    for (i, &v) in series.values().iter().enumerate() {
        let ts = series.timestamp(i).format(TIMESTAMP_FORMAT);
        match exo {
            Some(f) => {
                let _ = writeln!(
                    out,
                    "{ts},{v},{},{},{},{},{}",
                    f.demand[i], f.temperature[i], f.humidity[i], f.heat_index[i], f.is_holiday[i]
                );
            }
            None => {
                let _ = writeln!(out, "{ts},{v},0,0,0,0,0");
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M").unwrap()
    }

    fn csv_with_rows(rows: &[(&str, f64)]) -> String {
        let mut body =
            String::from("timestamp,usep_price,demand,temperature,humidity,heat_index,is_holiday\n");
        for (t, p) in rows {
            let _ = writeln!(body, "{t},{p},5000,28.5,80,31,0");
        }
        body
    }

    #[test]
    fn well_formed_three_rows() {
        let body = csv_with_rows(&[
            ("2021-01-01T00:00", 80.0),
            ("2021-01-01T00:30", 81.5),
            ("2021-01-01T01:00", 83.0),
        ]);
        let (series, exo, report) = ingest_csv_str(&body, &CsvSchema::default()).unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series.values(), &[80.0, 81.5, 83.0]);
        assert_eq!(series.start(), ts("2021-01-01T00:00"));
        assert!(report.is_clean());
        assert_eq!(exo.demand.len(), 3);
    }

    #[test]
    fn one_missing_half_hour_reported() {
        let body = csv_with_rows(&[
            ("2021-01-01T00:00", 80.0),
            ("2021-01-01T00:30", 81.0),
            ("2021-01-01T01:30", 82.0),
        ]);
        let (series, _, report) = ingest_csv_str(&body, &CsvSchema::default()).unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(report.gaps, vec![Gap { start_index: 2, run: 1 }]);
    }

    #[test]
    fn full_size_fixture_round_trips() {
        // 69,600 half-hour rows, the full dataset scale.
        let start = NaiveDate::from_ymd_opt(2021, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let n = 69_600usize;
        let mut body = String::with_capacity(n * 40);
        body.push_str("timestamp,usep_price,demand,temperature,humidity,heat_index,is_holiday\n");
        for i in 0..n {
            let t = start + Duration::minutes(30 * i as i64);
            let _ = writeln!(
                body,
                "{},{},6000,29,75,32,0",
                t.format("%Y-%m-%dT%H:%M"),
                100.0 + (i % 48) as f64
            );
        }
        let (series, _, report) = ingest_csv_str(&body, &CsvSchema::default()).unwrap();
        assert_eq!(series.len(), 69_600);
        assert!(report.is_clean());
    }

    #[test]
    fn duplicates_keep_first_occurrence() {
        let body = csv_with_rows(&[
            ("2021-01-01T00:00", 80.0),
            ("2021-01-01T00:30", 81.0),
            ("2021-01-01T00:30", 999.0),
            ("2021-01-01T01:00", 82.0),
        ]);
        let (series, _, report) = ingest_csv_str(&body, &CsvSchema::default()).unwrap();
        assert_eq!(series.values(), &[80.0, 81.0, 82.0]);
        assert_eq!(report.duplicate_timestamps, vec![1]);
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let body = csv_with_rows(&[
            ("2021-01-01T01:00", 82.0),
            ("2021-01-01T00:00", 80.0),
            ("2021-01-01T00:30", 81.0),
        ]);
        let (series, _, report) = ingest_csv_str(&body, &CsvSchema::default()).unwrap();
        assert_eq!(series.values(), &[80.0, 81.0, 82.0]);
        assert!(report.is_clean());
    }

    #[test]
    fn bad_timestamp_names_row() {
        let body = csv_with_rows(&[("2021-01-01T00:00", 80.0), ("not-a-time", 81.0)]);
        let err = ingest_csv_str(&body, &CsvSchema::default()).unwrap_err();
        match err {
            Error::Ingestion { row, .. } => assert_eq!(row, 3),
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn non_numeric_price_rejected() {
        let body = csv_with_rows(&[("2021-01-01T00:00", 80.0)])
            + "2021-01-01T00:30,abc,5000,28.5,80,31,0\n";
        assert!(matches!(
            ingest_csv_str(&body, &CsvSchema::default()),
            Err(Error::Ingestion { row: 3, .. })
        ));
    }

    #[test]
    fn empty_file_rejected() {
        assert!(ingest_csv_str("", &CsvSchema::default()).is_err());
        let header_only =
            "timestamp,usep_price,demand,temperature,humidity,heat_index,is_holiday\n";
        assert!(matches!(
            ingest_csv_str(header_only, &CsvSchema::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn crlf_accepted() {
        let body = csv_with_rows(&[("2021-01-01T00:00", 80.0), ("2021-01-01T00:30", 81.0)])
            .replace('\n', "\r\n");
        let (series, _, _) = ingest_csv_str(&body, &CsvSchema::default()).unwrap();
        assert_eq!(series.len(), 2);
    }

    fn series_of(values: &[f64]) -> TimeSeries {
        TimeSeries::new(ts("2021-01-01T00:00"), values.to_vec(), "S$/MWh").unwrap()
    }

    #[test]
    fn fill_linear_midpoint() {
        let series = series_of(&[10.0, 20.0]);
        let report = GapReport {
            gaps: vec![Gap { start_index: 1, run: 1 }],
            duplicate_timestamps: vec![],
        };
        let filled = fill_gaps(&series, &report, FillPolicy::Linear, None).unwrap();
        assert_eq!(filled.values(), &[10.0, 15.0, 20.0]);
    }

    #[test]
    fn fill_previous_carries_forward() {
        let series = series_of(&[10.0, 20.0]);
        let report = GapReport {
            gaps: vec![Gap { start_index: 1, run: 1 }],
            duplicate_timestamps: vec![],
        };
        let filled = fill_gaps(&series, &report, FillPolicy::Previous, None).unwrap();
        assert_eq!(filled.values(), &[10.0, 10.0, 20.0]);
    }

    #[test]
    fn fill_three_step_gap_linearly() {
        let series = series_of(&[10.0, 50.0]);
        let report = GapReport {
            gaps: vec![Gap { start_index: 1, run: 3 }],
            duplicate_timestamps: vec![],
        };
        let filled = fill_gaps(&series, &report, FillPolicy::Linear, None).unwrap();
        assert_eq!(filled.values(), &[10.0, 20.0, 30.0, 40.0, 50.0]);
    }

    #[test]
    fn fill_is_identity_on_clean_series() {
        let series = series_of(&[1.0, 2.0, 3.0]);
        let filled = fill_gaps(&series, &GapReport::default(), FillPolicy::Linear, None).unwrap();
        assert_eq!(filled, series);
    }

    #[test]
    fn oversized_gap_aborts_with_location() {
        let series = series_of(&[10.0, 20.0]);
        let report = GapReport {
            gaps: vec![Gap { start_index: 1, run: 49 }],
            duplicate_timestamps: vec![],
        };
        match fill_gaps(&series, &report, FillPolicy::Linear, None) {
            Err(Error::GapTooLong { start, run, max }) => {
                assert_eq!((start, run, max), (1, 49, 48));
            }
            other => panic!("expected GapTooLong, got {other:?}"),
        }
    }

    #[test]
    fn continuity_of_contiguous_series_is_clean() {
        let stamps: Vec<_> = (0..10).map(|i| ts("2021-01-01T00:00") + Duration::minutes(30 * i)).collect();
        assert!(validate_continuity(&stamps).unwrap().is_clean());
    }

    #[test]
    fn continuity_detects_one_skip() {
        let base = ts("2021-01-01T00:00");
        let stamps = vec![
            base,
            base + Duration::minutes(30),
            base + Duration::minutes(90),
        ];
        let report = validate_continuity(&stamps).unwrap();
        assert_eq!(report.gaps, vec![Gap { start_index: 2, run: 1 }]);
    }

    #[test]
    fn continuity_detects_two_sorted_skips() {
        let base = ts("2021-01-01T00:00");
        // Present at grid slots 0, 1, 3, 4, 7; missing 2 and 5-6.
        let stamps: Vec<_> = [0i64, 1, 3, 4, 7]
            .iter()
            .map(|&i| base + Duration::minutes(30 * i))
            .collect();
        let report = validate_continuity(&stamps).unwrap();
        assert_eq!(
            report.gaps,
            vec![
                Gap { start_index: 2, run: 1 },
                Gap { start_index: 5, run: 2 },
            ]
        );
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let start = ts("2021-03-05T12:00");
        let values = vec![
            80.123456789012,
            -3.5e-4,
            4501.25,
            99.999999999999,
            0.1 + 0.2, // deliberately non-representable decimal
        ];
        let exo = ExogenousFrame {
            demand: vec![5000.5, 5100.0, 5200.25, 5000.0, 4900.125],
            temperature: vec![28.0, 28.5, 29.0, 29.5, 30.0],
            humidity: vec![80.0, 81.0, 82.0, 83.0, 84.0],
            heat_index: vec![31.0, 31.5, 32.0, 32.5, 33.0],
            is_holiday: vec![0.0, 0.0, 1.0, 1.0, 0.0],
        };
        let series = TimeSeries::new(start, values.clone(), "S$/MWh").unwrap();
        let body = render_series_csv(&series, Some(&exo)).unwrap();
        let (back, exo_back, report) = ingest_csv_str(&body, &CsvSchema::default()).unwrap();
        assert!(report.is_clean());
        assert_eq!(back.start(), start);
        assert_eq!(back.values(), values.as_slice());
        assert_eq!(exo_back, exo);
    }

    #[test]
    fn non_finite_values_rejected_at_construction() {
        assert!(TimeSeries::new(ts("2021-01-01T00:00"), vec![1.0, f64::NAN], "u").is_err());
        assert!(TimeSeries::new(ts("2021-01-01T00:00"), vec![], "u").is_err());
    }
}
