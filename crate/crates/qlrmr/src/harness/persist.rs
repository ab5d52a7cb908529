//! Result persistence: the results CSV, the JSON summary, the generated
//! gnuplot script and run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dither::NoiseMomentReport;
use crate::error::Result;
use crate::harness::{CellSummary, ExperimentResult, TrialRecord};

const RESULT_COLUMNS: [&str; 15] = [
    "model",
    "n",
    "d1",
    "d2",
    "r",
    "delta1",
    "delta2",
    "trial",
    "seed",
    "frob_error",
    "rel_error",
    "pred_error",
    "iterations",
    "runtime_ms",
    "converged",
];

/// Write `results.csv` (exact column order as in [`RESULT_COLUMNS`]) and
/// `summary.json` into `dir`. Returns the CSV path.
pub fn write_results(result: &ExperimentResult, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("results.csv");
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&csv_path)?;
    writer.write_record(RESULT_COLUMNS)?;
    for record in &result.records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    write_summary(&result.summary, &dir.join("summary.json"))?;
    Ok(csv_path)
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    cells: &'a [CellSummary],
}

fn write_summary(cells: &[CellSummary], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &SummaryFile { cells })?;
    writeln!(file)?;
    Ok(())
}

/// Read a results CSV back into records.
pub fn read_results(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for record in reader.deserialize() {
        out.push(record?);
    }
    Ok(out)
}

/// Emit a gnuplot script that renders log-log mean-error curves from the
/// results CSV, one curve per `(model, delta1, delta2)`.
pub fn emit_plot_script(result: &ExperimentResult, csv_name: &str, path: &Path) -> Result<()> {
    let mut curves: Vec<(String, f64, f64)> = Vec::new();
    for cell in &result.summary {
        let key = (cell.model.clone(), cell.delta1, cell.delta2);
        if !curves.contains(&key) {
            curves.push(key);
        }
    }
    let mut script = String::new();
    script.push_str("set datafile separator ','\n");
    script.push_str("set datafile missing 'NaN'\n");
    script.push_str("set logscale xy\n");
    script.push_str("set xlabel 'sample size n'\n");
    script.push_str("set ylabel 'mean Frobenius error'\n");
    script.push_str("set key outside\n");
    script.push_str("plot \\\n");
    let lines: Vec<String> = curves
        .iter()
        .map(|(model, d1, d2)| {
            format!(
                "  '{csv_name}' using (strcol(1) eq '{model}' && column(6) == {d1} && column(7) == {d2} ? column(2) : NaN):(column(10)) \
                 smooth unique with linespoints title '{model} d1={d1} d2={d2}'"
            )
        })
        .collect();
    script.push_str(&lines.join(", \\\n"));
    script.push('\n');
    std::fs::write(path, script)?;
    Ok(())
}

/// One row of the quantization-noise diagnostic CSV.
#[derive(Debug, Clone, Serialize)]
pub struct DitherDemoRow {
    pub kind: String,
    pub delta: f64,
    pub n: usize,
    pub mean_noise: f64,
    pub var_noise: f64,
    pub mean_error: f64,
    pub ks_stat: f64,
}

impl DitherDemoRow {
    pub fn new(kind: String, delta: f64, n: usize, report: &NoiseMomentReport) -> Self {
        Self {
            kind,
            delta,
            n,
            mean_noise: report.mean_noise,
            var_noise: report.var_noise,
            mean_error: report.mean_error,
            ks_stat: report.ks_stat_error_vs_uniform,
        }
    }
}

/// Write the dither diagnostics CSV (`kind,delta,n,mean_noise,var_noise,mean_error,ks_stat`).
pub fn write_dither_demo_csv(rows: &[DitherDemoRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Write a manifest echoing the fully resolved configuration so a run can be
/// repeated exactly.
pub fn write_manifest(manifest: &serde_json::Value, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, manifest)?;
    writeln!(file)?;
    Ok(())
}
