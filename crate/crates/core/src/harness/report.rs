use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Estimator, McReport, Metrics};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Markdown,
    Json,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Markdown => "report.md",
            ReportFormat::Json => "report.json",
        }
    }
}

fn subscript(k: usize) -> String {
    k.to_string()
        .chars()
        .map(|c| char::from_u32(0x2080 + c.to_digit(10).unwrap()).unwrap())
        .collect()
}

type MetricValue = fn(&Metrics, usize) -> f64;

struct Row {
    label: String,
    key: String,
    decimals: usize,
    value: MetricValue,
    coord: usize,
}

fn rows(d: usize) -> Vec<Row> {
    let mut out = Vec::new();
    let per_coord: [(&str, &str, MetricValue); 4] = [
        ("MSE", "mse", |m, k| m.mse[k]),
        ("Bias", "bias", |m, k| m.bias[k]),
        ("SD", "sd", |m, k| m.sd[k]),
        ("L1 Error", "l1_error", |m, k| m.l1_error[k]),
    ];
    for (label, key, value) in per_coord {
        for k in 0..d {
            out.push(Row {
                label: format!("{label} of θ{}", subscript(k + 1)),
                key: format!("{key}_theta_{}", k + 1),
                decimals: 5,
                value,
                coord: k,
            });
        }
    }
    let summary: [(&str, &str, MetricValue); 3] = [
        ("L2 Norm of Bias", "l2_norm_bias", |m, _| m.l2_norm_bias),
        ("1-- Mean Angular Similarity", "one_minus_mean_ang", |m, _| m.one_minus_mean_ang),
        ("1-- Median Angular Similarity", "one_minus_median_ang", |m, _| m.one_minus_median_ang),
    ];
    for (label, key, value) in summary {
        out.push(Row {
            label: label.to_string(),
            key: key.to_string(),
            decimals: 6,
            value,
            coord: 0,
        });
    }
    out
}

fn caption(estimator: &Estimator) -> &'static str {
    match estimator {
        Estimator::TwoStageKernel { .. } => "Two-Stage RMS with Kernel First Stage",
        Estimator::TwoStageSeries { .. } => "Two-Stage RMS with Series First Stage",
        Estimator::TwoStageMlp { .. } => "Two-Stage RMS with Neural-Net First Stage",
        Estimator::TwoStageKernelRidge { .. } => "Two-Stage RMS with Kernel Ridge First Stage",
        Estimator::TwoStageOracle { .. } => "Two-Stage RMS with Oracle First Stage",
        Estimator::JointDnn { .. } => "All-in-One Neural Network RMS",
    }
}

/// `metric,n,value`, one row per metric and sample size.
pub fn write_csv<W: Write>(out: W, report: &McReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "n", "value"])?;
    let d = report.config.dgp.d;
    for row in rows(d) {
        for cell in &report.cells {
            let v = (row.value)(&cell.metrics, row.coord);
            w.write_record([row.key.clone(), cell.n.to_string(), v.to_string()])?;
        }
    }
    for cell in &report.cells {
        w.write_record(["failures".to_string(), cell.n.to_string(), cell.failures.len().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_markdown<W: Write>(mut out: W, report: &McReport) -> Result<()> {
    writeln!(out, "### {}", caption(&report.config.estimator))?;
    writeln!(out)?;
    write!(out, "| Metric |")?;
    for cell in &report.cells {
        write!(out, " N={} |", cell.n)?;
    }
    writeln!(out)?;
    write!(out, "|---|")?;
    for _ in &report.cells {
        write!(out, "---:|")?;
    }
    writeln!(out)?;
    for row in rows(report.config.dgp.d) {
        write!(out, "| {} |", row.label)?;
        for cell in &report.cells {
            let v = (row.value)(&cell.metrics, row.coord);
            write!(out, " {:.*} |", row.decimals, v)?;
        }
        writeln!(out)?;
    }
    writeln!(out)?;
    for cell in &report.cells {
        write!(
            out,
            "N={}: {} replications, {} failed",
            cell.n,
            report.config.replications,
            cell.failures.len()
        )?;
        if !cell.metrics.sd_defined {
            write!(out, " (SD undefined for a single estimate, shown as 0)")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_json<W: Write>(out: W, report: &McReport) -> Result<()> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}

/// Write `report` into `dir` in the given format; returns the file path.
pub fn emit_report(report: &McReport, format: ReportFormat, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format.file_name());
    let mut buf = Vec::new();
    match format {
        ReportFormat::Csv => write_csv(&mut buf, report)?,
        ReportFormat::Markdown => write_markdown(&mut buf, report)?,
        ReportFormat::Json => write_json(&mut buf, report)?,
    }
    fs::write(&path, buf)?;
    Ok(path)
}
