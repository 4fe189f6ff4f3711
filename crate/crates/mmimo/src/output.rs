//! Result files: `results.csv`, `results.json`, `metadata.json` and
//! `plotdata/<algorithm>.dat`.
//!
//! Each file is written to a temporary sibling and renamed into place, so a
//! reader never sees a truncated file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mmimo_core::metrics::ResultTable;
use mmimo_core::sim::{NoiseCheck, Report};
use serde::Serialize;

use crate::config::{Format, RunConfig};

pub const CSV_HEADER: [&str; 6] = ["algorithm", "snr_db", "metric", "value", "trials", "stderr"];

/// Bumped whenever a column or the metadata layout changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Shortest decimal string that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn results_csv(table: &ResultTable) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in &table.rows {
        w.write_record([
            r.algorithm.clone(),
            fmt_f64(r.snr_db),
            r.metric.as_str().to_string(),
            fmt_f64(r.value),
            r.trials.to_string(),
            fmt_f64(r.stderr),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

#[derive(Serialize)]
struct JsonRow<'a> {
    algorithm: &'a str,
    snr_db: f64,
    metric: &'static str,
    value: f64,
    trials: u64,
    stderr: f64,
}

pub fn results_json(table: &ResultTable) -> Vec<u8> {
    let rows: Vec<JsonRow> = table
        .rows
        .iter()
        .map(|r| JsonRow {
            algorithm: &r.algorithm,
            snr_db: r.snr_db,
            metric: r.metric.as_str(),
            value: r.value,
            trials: r.trials,
            stderr: r.stderr,
        })
        .collect();
    let mut v = serde_json::to_vec_pretty(&rows).expect("serializable");
    v.push(b'\n');
    v
}

/// One `snr value` line per SNR point, preceded by `#` comment lines.
pub fn plot_series(table: &ResultTable, algorithm: &str) -> Vec<u8> {
    let mut out = Vec::new();
    let rows: Vec<_> = table.rows.iter().filter(|r| r.algorithm == algorithm).collect();
    let metric = rows.first().map_or("", |r| r.metric.as_str());
    writeln!(out, "# {algorithm}\n# snr_db {metric}").unwrap();
    for r in rows {
        writeln!(out, "{} {}", fmt_f64(r.snr_db), fmt_f64(r.value)).unwrap();
    }
    out
}

#[derive(Serialize)]
pub struct NoiseCheckRecord {
    pub snr_db: f64,
    pub configured_sigma_n2: f64,
    pub realized_sigma_n2: f64,
    pub relative_error: f64,
}

impl From<&NoiseCheck> for NoiseCheckRecord {
    fn from(n: &NoiseCheck) -> Self {
        Self {
            snr_db: n.snr_db,
            configured_sigma_n2: n.configured,
            realized_sigma_n2: n.realized,
            relative_error: (n.realized - n.configured).abs() / n.configured,
        }
    }
}

#[derive(Serialize)]
pub struct Metadata<'a> {
    pub schema_version: u32,
    pub csv_header: String,
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub experiment: &'static str,
    pub started_unix_s: u64,
    pub wall_time_s: f64,
    pub workers: usize,
    pub noise_checks: Vec<NoiseCheckRecord>,
    /// The resolved configuration; `mmimo run metadata.json` repeats the run.
    pub config: &'a RunConfig,
    pub config_toml: String,
}

impl<'a> Metadata<'a> {
    pub fn new(config: &'a RunConfig, report: &Report, started_unix_s: u64, wall_time_s: f64, workers: usize) -> Self {
        let experiment: mmimo_core::sim::ExperimentKind = config.experiment.into();
        Self {
            schema_version: SCHEMA_VERSION,
            csv_header: CSV_HEADER.join(","),
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed,
            experiment: experiment.as_str(),
            started_unix_s,
            wall_time_s,
            workers,
            noise_checks: report.noise_checks.iter().map(Into::into).collect(),
            config,
            config_toml: config.to_toml(),
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("serializable");
        v.push(b'\n');
        v
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res
}

/// Algorithm names are plain identifiers, but keep file names safe anyway.
fn plot_file_name(algorithm: &str) -> String {
    let clean: String =
        algorithm.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect();
    format!("{clean}.dat")
}

/// Writes every output of a finished run and returns the paths written.
pub fn write_outputs(
    dir: &Path,
    config: &RunConfig,
    report: &Report,
    metadata: &Metadata<'_>,
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, bytes: &[u8]| -> std::io::Result<()> {
        write_atomic(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    for f in &config.output.formats {
        match f {
            Format::Csv => put(dir.join("results.csv"), &results_csv(&report.table))?,
            Format::Json => put(dir.join("results.json"), &results_json(&report.table))?,
        }
    }
    if config.output.plot_data {
        let pd = dir.join("plotdata");
        fs::create_dir_all(&pd)?;
        for alg in report.table.algorithms() {
            put(pd.join(plot_file_name(alg)), &plot_series(&report.table, alg))?;
        }
    }
    put(dir.join("metadata.json"), &metadata.to_json())?;
    Ok(written)
}
