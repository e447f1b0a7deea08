//! File-level experiment runs: config parsing, data loading, output
//! artifacts, manifests and run comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic, ingest_csv, prepare_client, ClientData, CsvSchema};
use crate::error::{Error, Result};
use crate::fabric::{shape_dump, write_file};
use crate::metrics::{read_reports_csv, CsvRow, RoundReport, CSV_COLUMNS};
use crate::scalar::{Precision, Scalar};
use crate::scheduler::{run_experiment_with, ExperimentConfig};
use crate::{aggregation::SgdTrainer, seed};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ROUNDS_CSV: &str = "rounds.csv";
pub const ROUNDS_JSONL: &str = "rounds.jsonl";
pub const FINAL_MODEL: &str = "final_model.fdw";
pub const FINAL_SHAPE: &str = "final_shape.txt";

/// Reads a TOML config. Relative CSV paths are resolved against the
/// config file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(csv) = cfg.data.csv.as_mut() {
        let base = path.parent().unwrap_or(Path::new("."));
        for f in csv.files.iter_mut() {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
    }
    Ok(cfg)
}

/// Materializes every client's train and test windows.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Vec<ClientData>> {
    if let Some(spec) = &cfg.data.synthetic {
        return generate_synthetic(spec, seed::derive(cfg.seed, &[seed::STREAM_DATA]));
    }
    let csv = cfg
        .data
        .csv
        .as_ref()
        .ok_or_else(|| Error::config("data", "no data source"))?;
    let schema = CsvSchema {
        sample_rate: csv.sample_rate,
        target_rate: csv.target_rate,
    };
    csv.files
        .iter()
        .enumerate()
        .map(|(k, path)| {
            let series = ingest_csv(path, &schema)?;
            if let Some(&l) = series.labels.iter().find(|&&l| l >= csv.classes) {
                return Err(Error::config(
                    "data.csv.classes",
                    format!("{} has label {l}", path.display()),
                ));
            }
            prepare_client(
                k,
                &series,
                &csv.pipeline,
                seed::derive(cfg.seed, &[seed::STREAM_SPLIT, k as u64]),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSet {
    pub global: u64,
    /// Root seed of each client's training streams.
    pub clients: Vec<u64>,
}

/// Written before round 1 and updated at the end; enough to rerun.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub status: RunStatus,
    pub version: String,
    pub config: ExperimentConfig,
    pub seeds: SeedSet,
    pub outputs: Vec<String>,
    pub duration_secs: Option<f64>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub reports: Vec<RoundReport>,
    pub final_shape: Vec<usize>,
}

/// Streams reports to CSV and JSONL as they arrive so a failed run keeps
/// its completed rounds.
struct ReportSink {
    csv: csv::Writer<fs::File>,
    jsonl: std::io::BufWriter<fs::File>,
    csv_path: PathBuf,
    jsonl_path: PathBuf,
    reports: Vec<RoundReport>,
}

impl ReportSink {
    fn create(dir: &Path) -> Result<Self> {
        let csv_path = dir.join(ROUNDS_CSV);
        let jsonl_path = dir.join(ROUNDS_JSONL);
        let csv_err = |e: csv::Error| Error::Csv {
            line: 0,
            message: e.to_string(),
        };
        let mut csv = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&csv_path)
            .map_err(csv_err)?;
        csv.write_record(CSV_COLUMNS).map_err(csv_err)?;
        let jsonl = fs::File::create(&jsonl_path).map_err(|e| Error::io(&jsonl_path, e))?;
        Ok(Self {
            csv,
            jsonl: std::io::BufWriter::new(jsonl),
            csv_path,
            jsonl_path,
            reports: Vec::new(),
        })
    }

    fn push(&mut self, report: &RoundReport) -> Result<()> {
        use std::io::Write;
        self.csv
            .serialize(CsvRow::from(report))
            .map_err(|e| Error::Csv {
                line: 0,
                message: e.to_string(),
            })?;
        self.csv.flush().map_err(|e| Error::io(&self.csv_path, e))?;
        serde_json::to_writer(&mut self.jsonl, report)?;
        self.jsonl
            .write_all(b"\n")
            .map_err(|e| Error::io(&self.jsonl_path, e))?;
        self.jsonl
            .flush()
            .map_err(|e| Error::io(&self.jsonl_path, e))?;
        self.reports.push(report.clone());
        Ok(())
    }
}

fn execute<S: Scalar>(
    cfg: &ExperimentConfig,
    data: &[ClientData],
    dir: &Path,
    sink: &mut ReportSink,
) -> Result<Vec<usize>> {
    let exp = run_experiment_with::<S>(cfg, data, &SgdTrainer, &mut |r| sink.push(r))?;
    write_file(&exp.final_model, &dir.join(FINAL_MODEL))?;
    let shape_path = dir.join(FINAL_SHAPE);
    fs::write(&shape_path, shape_dump(&exp.final_model)).map_err(|e| Error::io(&shape_path, e))?;
    Ok(exp.final_model.shape_signature())
}

/// Runs `cfg` and writes the manifest, `rounds.csv`, `rounds.jsonl`, the
/// final model container and its shape dump into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let started = Instant::now();
    let mut manifest = RunManifest {
        status: RunStatus::Running,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seeds: SeedSet {
            global: cfg.seed,
            clients: (0..cfg.clients())
                .map(|k| seed::derive(cfg.seed, &[seed::STREAM_CLIENT, k as u64]))
                .collect(),
        },
        outputs: [ROUNDS_CSV, ROUNDS_JSONL, FINAL_MODEL, FINAL_SHAPE]
            .map(String::from)
            .to_vec(),
        duration_secs: None,
        error: None,
    };
    manifest.write(out_dir)?;

    let mut sink = None;
    let result = ReportSink::create(out_dir).and_then(|s| {
        let sink = sink.insert(s);
        let data = load_data(cfg)?;
        match cfg.precision {
            Precision::F32 => execute::<f32>(cfg, &data, out_dir, sink),
            Precision::F64 => execute::<f64>(cfg, &data, out_dir, sink),
        }
    });
    manifest.duration_secs = Some(started.elapsed().as_secs_f64());
    match result {
        Ok(final_shape) => {
            manifest.status = RunStatus::Completed;
            manifest.write(out_dir)?;
            Ok(RunSummary {
                reports: sink.map(|s| s.reports).unwrap_or_default(),
                final_shape,
            })
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            manifest.write(out_dir)?;
            Err(e)
        }
    }
}

/// Reruns the experiment recorded in `manifest_dir` into `out_dir`.
pub fn rerun(manifest_dir: &Path, out_dir: &Path) -> Result<RunSummary> {
    run(&RunManifest::read(manifest_dir)?.config, out_dir)
}

/// The shape a finished run ended with, from its shape dump.
pub fn read_final_shape(dir: &Path) -> Result<Vec<usize>> {
    let path = dir.join(FINAL_SHAPE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(crate::fabric::parse_shape_dump(&text)?
        .iter()
        .map(|l| l.outputs)
        .collect())
}

/// One run's headline numbers, recomputed from its CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub name: String,
    pub algorithm: String,
    pub best_global: Option<(f64, usize)>,
    pub best_personalization: Option<(f64, usize)>,
    /// Generalization mean and std of the last evaluated round.
    pub generalization: Option<(f64, f64)>,
    pub final_params: usize,
    pub total_bytes: u64,
}

fn best(rows: &[CsvRow], value: impl Fn(&CsvRow) -> Option<f64>) -> Option<(f64, usize)> {
    rows.iter()
        .filter_map(|r| value(r).map(|v| (v, r.round)))
        .fold(None, |acc, (v, round)| match acc {
            Some((b, _)) if v <= b => acc,
            _ => Some((v, round)),
        })
}

pub fn summarize_rows(name: &str, rows: &[CsvRow]) -> CompareRow {
    let last = rows.last();
    CompareRow {
        name: name.to_string(),
        algorithm: last.map(|r| r.algorithm.clone()).unwrap_or_default(),
        best_global: best(rows, |r| r.global_f1),
        best_personalization: best(rows, |r| r.pers_mean),
        generalization: last.and_then(|r| Some((r.gen_mean?, r.gen_std?))),
        final_params: last.map_or(0, |r| r.params),
        total_bytes: rows.iter().map(|r| r.bytes_up + r.bytes_down).sum(),
    }
}

/// Reads every run directory; each must hold a manifest and a CSV.
pub fn compare(dirs: &[PathBuf]) -> Result<Vec<CompareRow>> {
    if dirs.len() < 2 {
        return Err(Error::InvalidArgument(
            "compare needs at least two run directories".into(),
        ));
    }
    dirs.iter()
        .map(|d| {
            let manifest = RunManifest::read(d)?;
            if manifest.status != RunStatus::Completed {
                log::warn!("{} did not complete", d.display());
            }
            let rows = read_reports_csv(&d.join(ROUNDS_CSV))?;
            Ok(summarize_rows(&d.display().to_string(), &rows))
        })
        .collect()
}

pub fn render_table(rows: &[CompareRow]) -> String {
    let pct = |v: Option<(f64, usize)>| {
        v.map_or("-".to_string(), |(f, r)| format!("{:.2} @{r}", 100.0 * f))
    };
    let header = [
        "run",
        "algorithm",
        "global best",
        "pers best",
        "gen mean ± std",
        "params",
        "bytes",
    ];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                r.algorithm.clone(),
                pct(r.best_global),
                pct(r.best_personalization),
                r.generalization.map_or("-".into(), |(m, s)| {
                    format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * s)
                }),
                r.final_params.to_string(),
                r.total_bytes.to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            body.iter()
                .map(|r| r[i].chars().count())
                .chain([header[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(header.to_vec());
    for r in &body {
        line(r.iter().map(String::as_str).collect());
    }
    out
}
