//! Structured run reports and plot-ready CSV emission.
//!
//! Every number in a report is reproducible from the echoed config plus the
//! input file: given the same bytes and flags (including the seed), reports
//! are byte-identical. Files are written atomically (temp file + rename).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use poisson_hmm::{
    map_states, posterior_marginals, rate_path, ObservationSeries, PoissonHmm,
    ModelSelectionReport,
};
use serde::Serialize;

use crate::data::DataError;

/// Self-describing report schema; bump on breaking layout changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub input: InputDigest,
    pub config: ConfigEcho,
    /// Per-state-count selection table; present for `select` runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionSection>,
    /// The reported (fixed-K or selected) model.
    pub fit: FitSection,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub num_days: usize,
    pub start_date: String,
    pub end_date: String,
}

#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_states: Option<usize>,
    pub stay_prob: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restarts: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SelectionSection {
    pub candidates: Vec<CandidateRow>,
    pub selected_num_states: usize,
}

#[derive(Debug, Serialize)]
pub struct CandidateRow {
    pub num_states: usize,
    pub approx_log_marginal: f64,
}

#[derive(Debug, Serialize)]
pub struct FitSection {
    pub num_states: usize,
    pub rates: Vec<f64>,
    pub log_likelihood: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_restart: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

impl InputDigest {
    pub fn of(path: &Path, series: &ObservationSeries) -> Self {
        Self {
            path: path.display().to_string(),
            num_days: series.len(),
            start_date: series.start_date().format("%Y-%m-%d").to_string(),
            end_date: series.end_date().format("%Y-%m-%d").to_string(),
        }
    }
}

impl SelectionSection {
    pub fn of(report: &ModelSelectionReport) -> Self {
        Self {
            candidates: report
                .candidates
                .iter()
                .map(|c| CandidateRow {
                    num_states: c.num_states,
                    approx_log_marginal: c.approx_log_marginal,
                })
                .collect(),
            selected_num_states: report.selected_num_states,
        }
    }
}

/// Write `bytes` to `path` atomically: temp file in the same directory,
/// then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| DataError::Io(e.error))?;
    Ok(())
}

/// Serialize a report as pretty JSON with a trailing newline.
pub fn render_report(report: &RunReport) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(report).expect("report serialization is infallible");
    out.push(b'\n');
    out
}

/// The per-day decode table behind the posterior-probability and
/// decoded-path figures: `date,count,map_state,map_rate,gamma_1..gamma_K`.
pub fn render_per_day_csv(series: &ObservationSeries, model: &PoissonHmm) -> Vec<u8> {
    let marginals = posterior_marginals(series, model);
    let states = map_states(&marginals);
    let rates = rate_path(&states, model).expect("decoded states are within [1, K]");

    let mut out = Vec::new();
    let mut header = String::from("date,count,map_state,map_rate");
    for k in 1..=model.num_states() {
        header.push_str(&format!(",gamma_{k}"));
    }
    header.push('\n');
    out.extend_from_slice(header.as_bytes());

    for t in 0..series.len() {
        let mut line = format!(
            "{},{},{},{}",
            series.date(t).format("%Y-%m-%d"),
            series.counts()[t],
            states.states()[t],
            rates[t],
        );
        for &g in marginals.row(t) {
            line.push_str(&format!(",{g}"));
        }
        line.push('\n');
        out.extend_from_slice(line.as_bytes());
    }
    out
}

/// The per-K selection table behind the model-selection curve:
/// `num_states,approx_log_marginal,selected`.
pub fn render_models_csv(report: &ModelSelectionReport) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"num_states,approx_log_marginal,selected\n");
    for c in &report.candidates {
        let selected = if c.num_states == report.selected_num_states {
            1
        } else {
            0
        };
        out.extend_from_slice(
            format!("{},{},{}\n", c.num_states, c.approx_log_marginal, selected).as_bytes(),
        );
    }
    out
}

/// Output paths derived from one `--out` base.
pub struct OutPaths {
    pub report: PathBuf,
    pub per_day: PathBuf,
    pub models: PathBuf,
}

impl OutPaths {
    pub fn from_base(base: &Path) -> Self {
        let base_str = base.display().to_string();
        Self {
            report: PathBuf::from(format!("{base_str}.report.json")),
            per_day: PathBuf::from(format!("{base_str}.perday.csv")),
            models: PathBuf::from(format!("{base_str}.models.csv")),
        }
    }
}

/// Sidecar path for simulated true states: `sim.csv` -> `sim.states.csv`.
pub fn states_sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    out.with_file_name(format!("{stem}.states.csv"))
}

pub fn read_to_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    Ok(fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn per_day_csv_has_one_gamma_column_per_state() {
        let series = ObservationSeries::new(
            NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
            vec![1, 50, 2],
        )
        .unwrap();
        let model = PoissonHmm::new(vec![2.0, 40.0], 0.9).unwrap();
        let csv = String::from_utf8(render_per_day_csv(&series, &model)).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "date,count,map_state,map_rate,gamma_1,gamma_2"
        );
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn sidecar_path_replaces_extension() {
        assert_eq!(
            states_sidecar_path(Path::new("/tmp/sim.csv")),
            PathBuf::from("/tmp/sim.states.csv")
        );
    }

    #[test]
    fn out_paths_share_the_base() {
        let p = OutPaths::from_base(Path::new("run1"));
        assert_eq!(p.report, PathBuf::from("run1.report.json"));
        assert_eq!(p.per_day, PathBuf::from("run1.perday.csv"));
        assert_eq!(p.models, PathBuf::from("run1.models.csv"));
    }

    #[test]
    fn atomic_write_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.txt");
        write_atomic(&path, b"hello").unwrap();
        assert_eq!(read_to_bytes(&path).unwrap(), b"hello");
        write_atomic(&path, b"world").unwrap();
        assert_eq!(read_to_bytes(&path).unwrap(), b"world");
    }
}
