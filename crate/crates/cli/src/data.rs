//! CSV ingestion of daily-count series and raw-timestamp aggregation.
//!
//! The interchange format is UTF-8 comma-separated text with a header row,
//! ISO-8601 dates (`YYYY-MM-DD`) and base-10 non-negative integer counts.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use chrono::{DateTime, Days, NaiveDate};
use chrono_tz::Tz;
use poisson_hmm::ObservationSeries;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("header row does not contain column '{column}'")]
    MissingColumn { column: String },

    #[error("line {line}: cannot parse date '{value}' (expected YYYY-MM-DD)")]
    BadDate { line: u64, value: String },

    #[error("line {line}: cannot parse count '{value}' (expected a non-negative integer)")]
    BadCount { line: u64, value: String },

    #[error("duplicate date {date}")]
    DuplicateDate { date: NaiveDate },

    #[error("missing days {from} to {to}; rerun with the fill-zero policy to zero-fill")]
    DateGap { from: NaiveDate, to: NaiveDate },

    #[error("timestamp {index}: cannot parse '{value}' (expected RFC 3339)")]
    BadTimestamp { index: usize, value: String },

    #[error("input contains no data rows")]
    Empty,

    #[error(transparent)]
    Domain(#[from] poisson_hmm::Error),
}

/// What to do when the ingested dates are not contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Reject the file, naming the missing span. A silent zero-fill would
    /// bias the model toward a spurious low-rate state, so this is the
    /// default.
    #[default]
    Error,
    /// Insert a zero count for each missing day.
    FillZero,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub missing_policy: MissingPolicy,
    pub date_column: String,
    pub count_column: String,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            missing_policy: MissingPolicy::Error,
            date_column: "date".to_string(),
            count_column: "count".to_string(),
        }
    }
}

/// Read a daily-count CSV into an [`ObservationSeries`].
///
/// Rows are sorted by date; duplicates are rejected; gaps follow the
/// configured [`MissingPolicy`].
pub fn ingest_counts(path: &Path, opts: &IngestOptions) -> Result<ObservationSeries, DataError> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let date_idx = column_index(&headers, &opts.date_column)?;
    let count_idx = column_index(&headers, &opts.count_column)?;

    let mut by_date: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let date_field = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d").map_err(|_| {
            DataError::BadDate {
                line,
                value: date_field.to_string(),
            }
        })?;
        let count_field = record.get(count_idx).unwrap_or("");
        let count: u64 = count_field.trim().parse().map_err(|_| DataError::BadCount {
            line,
            value: count_field.to_string(),
        })?;
        if by_date.insert(date, count).is_some() {
            return Err(DataError::DuplicateDate { date });
        }
    }
    if by_date.is_empty() {
        return Err(DataError::Empty);
    }

    let start = *by_date.keys().next().unwrap();
    let end = *by_date.keys().next_back().unwrap();
    let mut counts = Vec::new();
    let mut day = start;
    while day <= end {
        match by_date.get(&day) {
            Some(&c) => counts.push(c),
            None => match opts.missing_policy {
                MissingPolicy::FillZero => counts.push(0),
                MissingPolicy::Error => {
                    // name the full missing span starting at this day
                    let mut last = day;
                    while !by_date.contains_key(&(last + Days::new(1))) && last < end {
                        last = last + Days::new(1);
                    }
                    return Err(DataError::DateGap {
                        from: day,
                        to: last,
                    });
                }
            },
        }
        day = day + Days::new(1);
    }
    Ok(ObservationSeries::new(start, counts)?)
}

fn column_index(headers: &csv::StringRecord, column: &str) -> Result<usize, DataError> {
    headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| DataError::MissingColumn {
            column: column.to_string(),
        })
}

/// Write a series in the canonical interchange format.
pub fn write_counts_csv<W: io::Write>(series: &ObservationSeries, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "count"])?;
    for (i, &count) in series.counts().iter().enumerate() {
        w.write_record([
            series.date(i).format("%Y-%m-%d").to_string(),
            count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Bin raw RFC 3339 event timestamps into daily counts by the local
/// calendar date of the given time zone. Interior empty days get a zero.
pub fn aggregate_events(timestamps: &[&str], zone: Tz) -> Result<ObservationSeries, DataError> {
    if timestamps.is_empty() {
        return Err(DataError::Empty);
    }
    let mut by_date: BTreeMap<NaiveDate, u64> = BTreeMap::new();
    for (index, &raw) in timestamps.iter().enumerate() {
        let instant = DateTime::parse_from_rfc3339(raw).map_err(|_| DataError::BadTimestamp {
            index,
            value: raw.to_string(),
        })?;
        let local_date = instant.with_timezone(&zone).date_naive();
        *by_date.entry(local_date).or_insert(0) += 1;
    }
    let start = *by_date.keys().next().unwrap();
    let end = *by_date.keys().next_back().unwrap();
    let mut counts = Vec::new();
    let mut day = start;
    while day <= end {
        counts.push(by_date.get(&day).copied().unwrap_or(0));
        day = day + Days::new(1);
    }
    Ok(ObservationSeries::new(start, counts)?)
}
