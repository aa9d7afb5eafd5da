//! Output files: coefficient tables, CV score tables, experiment tables, and
//! the run-metadata document. All numbers are written with Rust's shortest
//! round-trip formatting so re-reading a file reproduces the exact values.

use std::io::Write;
use std::path::Path;

use bisel::{CvTable, ExperimentReport, MetricsReport};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(file))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::data(format!("cannot write {}: {e}", path.display()))
}

/// Nonzero coefficients as `feature,group,value` rows.
pub fn write_coefficients(
    path: &Path,
    names: &[String],
    group_ids: &[usize],
    values: &[f64],
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "feature,group,value").map_err(io_err(path))?;
    for (m, &v) in values.iter().enumerate() {
        if v != 0.0 {
            writeln!(w, "{},{},{}", names[m], group_ids[m], v).map_err(io_err(path))?;
        }
    }
    Ok(())
}

/// Reads a coefficients file back as (feature, group, value) triples.
pub fn read_coefficients(path: &Path) -> Result<Vec<(String, usize, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::data(e.to_string()))?;
        let group: usize = record[1]
            .parse()
            .map_err(|_| CliError::data("bad group id in coefficients file"))?;
        let value: f64 = record[2]
            .parse()
            .map_err(|_| CliError::data("bad value in coefficients file"))?;
        out.push((record[0].to_string(), group, value));
    }
    Ok(out)
}

/// The full CV score table as `lambda,theta,score` rows.
pub fn write_cv_table(path: &Path, table: &CvTable) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "lambda,theta,score").map_err(io_err(path))?;
    for (l, &lam) in table.lam_values.iter().enumerate() {
        for (t, &theta) in table.theta_values.iter().enumerate() {
            writeln!(w, "{},{},{}", lam, theta, table.cell(l, t)).map_err(io_err(path))?;
        }
    }
    Ok(())
}

/// Experiment table in the benchmark layout (one row per method, metric
/// means as columns) plus a long companion with standard errors.
pub fn write_experiment_tables(dir: &Path, report: &ExperimentReport) -> Result<()> {
    let wide = dir.join("table.csv");
    let mut w = create(&wide)?;
    writeln!(w, "method,l2,l1,MS,GS,FPR,FNR,GFPR,GFNR").map_err(io_err(&wide))?;
    for m in &report.methods {
        let v = metric_values(&m.mean);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            m.name, v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]
        )
        .map_err(io_err(&wide))?;
    }
    drop(w);

    let long = dir.join("table_long.csv");
    let mut w = create(&long)?;
    writeln!(w, "method,metric,mean,stderr").map_err(io_err(&long))?;
    for m in &report.methods {
        let means = metric_values(&m.mean);
        let ses = metric_values(&m.stderr);
        for (k, name) in MetricsReport::NAMES.iter().enumerate() {
            writeln!(w, "{},{},{},{}", m.name, name, means[k], ses[k]).map_err(io_err(&long))?;
        }
    }
    Ok(())
}

fn metric_values(m: &MetricsReport) -> [f64; 8] {
    [
        m.l2_error, m.l1_error, m.model_size, m.group_size, m.fpr, m.fnr, m.gfpr, m.gfnr,
    ]
}

/// Per-split prediction errors of the repeated-holdout pipeline.
pub fn write_split_errors(path: &Path, errors: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "split,mse").map_err(io_err(path))?;
    for (s, &e) in errors.iter().enumerate() {
        writeln!(w, "{},{}", s, e).map_err(io_err(path))?;
    }
    Ok(())
}

/// Residuals of a full-data fit, for external QQ plotting.
pub fn write_residuals(path: &Path, residuals: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "row,residual").map_err(io_err(path))?;
    for (i, &r) in residuals.iter().enumerate() {
        writeln!(w, "{},{}", i, r).map_err(io_err(path))?;
    }
    Ok(())
}

/// Wall-clock timings, written only when requested: they would otherwise
/// break the byte-identical-output guarantee of seeded runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub config: serde_json::Value,
    pub timings: Option<Timings>,
}

pub fn write_run_meta(path: &Path, meta: &RunMeta) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, meta)
        .map_err(|e| CliError::data(format!("cannot serialize metadata: {e}")))?;
    writeln!(w).map_err(io_err(path))?;
    Ok(())
}
