use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ScoreBundle, ViewScores};
use crate::aggregation::Algorithm;
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 11] = [
    "round",
    "algorithm",
    "global_f1",
    "pers_mean",
    "pers_std",
    "gen_mean",
    "gen_std",
    "params",
    "bytes_up",
    "bytes_down",
    "units_added",
];

/// Everything measured at one evaluation tick. Views that do not apply to
/// the algorithm (e.g. per-client views of a centralized run) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub algorithm: Algorithm,
    pub global: Option<ScoreBundle>,
    pub personalization: Option<ViewScores>,
    pub generalization: Option<ViewScores>,
    /// Server parameter count, or the mean client count for local-only runs.
    pub params: usize,
    pub shape: Vec<usize>,
    pub active_clients: Vec<usize>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub sub_rounds: usize,
    /// Units appended per layer this round.
    pub units_added: Vec<usize>,
    pub drift: Option<f64>,
}

/// One CSV line; also what `compare` reads back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub round: usize,
    pub algorithm: String,
    pub global_f1: Option<f64>,
    pub pers_mean: Option<f64>,
    pub pers_std: Option<f64>,
    pub gen_mean: Option<f64>,
    pub gen_std: Option<f64>,
    pub params: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub units_added: usize,
}

impl From<&RoundReport> for CsvRow {
    fn from(r: &RoundReport) -> Self {
        Self {
            round: r.round,
            algorithm: r.algorithm.name().to_string(),
            global_f1: r.global.map(|g| g.macro_f1),
            pers_mean: r.personalization.as_ref().map(|v| v.mean),
            pers_std: r.personalization.as_ref().map(|v| v.std),
            gen_mean: r.generalization.as_ref().map(|v| v.mean),
            gen_std: r.generalization.as_ref().map(|v| v.std),
            params: r.params,
            bytes_up: r.bytes_up,
            bytes_down: r.bytes_down,
            units_added: r.units_added.iter().sum(),
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Csv {
        line,
        message: format!("{}: {e}", path.display()),
    }
}

pub fn write_reports_csv(path: &Path, reports: &[RoundReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if reports.is_empty() {
        w.write_record(CSV_COLUMNS)
            .map_err(|e| csv_error(path, e))?;
    }
    for r in reports {
        w.serialize(CsvRow::from(r))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_reports_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(CSV_COLUMNS) {
        return Err(Error::Csv {
            line: 1,
            message: format!("{}: unexpected columns", path.display()),
        });
    }
    r.deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

/// One JSON object per report, with per-client details.
pub fn write_reports_jsonl(path: &Path, reports: &[RoundReport]) -> Result<()> {
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in reports {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
