use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::engine::RoundMetrics;
use super::sweep::SweepRow;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid(format!("unknown format '{other}' (csv, json)"))),
        }
    }
}

/// Column order of the metrics CSV.
pub const METRICS_COLUMNS: [&str; 9] = [
    "round",
    "algorithm",
    "train_loss",
    "test_metric",
    "gbar_l1",
    "uplink_bits",
    "downlink_bits",
    "cumulative_bits",
    "wall_ms",
];

pub fn write_metrics_csv<W: Write>(metrics: &[RoundMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_COLUMNS)?;
    for r in metrics {
        w.write_record([
            r.round.to_string(),
            r.algorithm.to_string(),
            r.train_loss.to_string(),
            r.test_metric.to_string(),
            r.gbar_l1.to_string(),
            r.uplink_bits.to_string(),
            r.downlink_bits.to_string(),
            r.cumulative_bits.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_metrics_json<W: Write>(metrics: &[RoundMetrics], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, metrics)?;
    Ok(())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(std::io::BufWriter::new(f))
}

fn finish(mut w: std::io::BufWriter<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes per-round metrics. CSV uses [`METRICS_COLUMNS`]; JSON is an array
/// of full records (including union sizes and selection counts).
pub fn emit_results(metrics: &[RoundMetrics], path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    match format {
        OutputFormat::Csv => write_metrics_csv(metrics, &mut w)?,
        OutputFormat::Json => write_metrics_json(metrics, &mut w)?,
    }
    finish(w, path)
}

pub fn load_results_json(path: impl AsRef<Path>) -> Result<Vec<RoundMetrics>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

pub const SWEEP_COLUMNS: [&str; 12] = [
    "axis",
    "value",
    "repeat",
    "seed",
    "algorithm",
    "M",
    "K",
    "final_train_loss",
    "final_test_metric",
    "final_gbar_l1",
    "mean_gbar_l1",
    "cumulative_bits",
];

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn emit_sweep(rows: &[SweepRow], path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    match format {
        OutputFormat::Csv => write_sweep_csv(rows, &mut w)?,
        OutputFormat::Json => serde_json::to_writer_pretty(&mut w, rows)?,
    }
    finish(w, path)
}
