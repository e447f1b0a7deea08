use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SensorSeries, CHANNELS};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = ["timestamp", "ax", "ay", "az", "gx", "gy", "gz", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    /// Rate the file was recorded at, in Hz.
    pub sample_rate: f64,
    /// Decimate to this rate; the ratio must be an integer.
    #[serde(default)]
    pub target_rate: Option<f64>,
}

impl CsvSchema {
    pub fn factor(&self) -> Result<usize> {
        if !(self.sample_rate > 0.0) {
            return Err(Error::config(
                "sample_rate",
                format!("{} must be positive", self.sample_rate),
            ));
        }
        let Some(target) = self.target_rate else {
            return Ok(1);
        };
        let ratio = self.sample_rate / target;
        let rounded = ratio.round();
        if !(target > 0.0) || rounded < 1.0 || (ratio - rounded).abs() > 1e-9 {
            return Err(Error::config(
                "target_rate",
                format!(
                    "{} Hz → {target} Hz is not an integer downsampling factor",
                    self.sample_rate
                ),
            ));
        }
        Ok(rounded as usize)
    }
}

/// Reads `timestamp,ax,ay,az,gx,gy,gz,label` rows. Line numbers in errors
/// count the header as line 1.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<SensorSeries> {
    let factor = schema.factor()?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| Error::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(Error::Csv {
            line: 1,
            message: format!("header must be `{}`", CSV_HEADER.join(",")),
        });
    }
    let mut channels = vec![Vec::new(); CHANNELS];
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map_or(row as u64 + 2, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(row as u64 + 2, |p| p.line());
        let bad = |message: String| Error::Csv { line, message };
        if record.len() != CSV_HEADER.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                CSV_HEADER.len(),
                record.len()
            )));
        }
        let mut values = [0.0f64; CHANNELS + 1];
        for (i, v) in values.iter_mut().enumerate() {
            let field = record[i].trim();
            *v = field
                .parse()
                .map_err(|_| bad(format!("`{}` is not a number: {field:?}", CSV_HEADER[i])))?;
            if !v.is_finite() {
                return Err(bad(format!("`{}` is not finite", CSV_HEADER[i])));
            }
        }
        let field = record[CHANNELS + 1].trim();
        let label: usize = field
            .parse()
            .map_err(|_| bad(format!("label {field:?} is not a class index")))?;
        if row % factor == 0 {
            for (ch, v) in channels.iter_mut().zip(&values[1..]) {
                ch.push(*v);
            }
            labels.push(label);
        }
    }
    SensorSeries::new(channels, schema.sample_rate / factor as f64, labels)
}

/// Writes a series in the ingestion format, timestamps in seconds.
pub fn write_csv(series: &SensorSeries, path: &Path) -> Result<()> {
    if series.channel_count() != CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "expected {CHANNELS} channels, got {}",
            series.channel_count()
        )));
    }
    let csv_err =
        |e: csv::Error| Error::InvalidArgument(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for t in 0..series.len() {
        let mut row = vec![(t as f64 / series.sample_rate).to_string()];
        row.extend(series.channels.iter().map(|c| c[t].to_string()));
        row.push(series.labels[t].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
