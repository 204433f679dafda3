//! Sweep reports and their CSV / JSON encodings.
//!
//! CSV header (fixed order):
//!
//! ```text
//! arm,axis,value,seed,params,train_loss,test_loss,accuracy,wall_ms
//! ```
//!
//! Floats are written as `{:.16e}` (17 significant digits), so they parse
//! back to the identical `f64`. Missing values (accuracy on regression
//! tasks, losses of failed runs) are empty fields. JSON carries the same
//! row objects under `rows` plus per `(arm, value)` aggregates.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "arm",
    "axis",
    "value",
    "seed",
    "params",
    "train_loss",
    "test_loss",
    "accuracy",
    "wall_ms",
];

/// One of the three compared setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Full fine-tuning of `W`.
    Finetune,
    /// Spatial LoRA.
    Lora,
    /// Frequency-domain LoRA.
    FreqLora,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Finetune, Arm::Lora, Arm::FreqLora];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Finetune => "finetune",
            Arm::Lora => "lora",
            Arm::FreqLora => "freq_lora",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Arm::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Noise,
    Rank,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Noise => "noise",
            Axis::Rank => "rank",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "noise" => Some(Axis::Noise),
            "rank" => Some(Axis::Rank),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(ReportFormat::Csv),
            "json" => Some(ReportFormat::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub arm: Arm,
    pub axis: Axis,
    pub value: f64,
    pub seed: u64,
    pub params: usize,
    /// `None` when the run failed.
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub wall_ms: f64,
}

impl RunRow {
    pub fn failed(&self) -> bool {
        self.test_loss.is_none()
    }
}

/// Mean and sample standard deviation (`n − 1`) over successful runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub arm: Arm,
    pub axis: Axis,
    pub value: f64,
    pub runs: usize,
    pub failed: usize,
    pub train_loss_mean: Option<f64>,
    pub train_loss_std: Option<f64>,
    pub test_loss_mean: Option<f64>,
    pub test_loss_std: Option<f64>,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<Aggregate>,
}

pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

impl RunReport {
    /// Builds the report and its aggregates, grouped by `(arm, value)` in
    /// order of first appearance.
    pub fn from_rows(rows: Vec<RunRow>) -> Self {
        let mut keys: Vec<(Arm, Axis, u64)> = Vec::new();
        for r in &rows {
            let key = (r.arm, r.axis, r.value.to_bits());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let aggregates = keys
            .into_iter()
            .map(|(arm, axis, bits)| {
                let group: Vec<&RunRow> = rows
                    .iter()
                    .filter(|r| r.arm == arm && r.axis == axis && r.value.to_bits() == bits)
                    .collect();
                let collect = |f: fn(&RunRow) -> Option<f64>| {
                    group.iter().filter_map(|r| f(r)).collect::<Vec<_>>()
                };
                let (train_loss_mean, train_loss_std) = mean_std(&collect(|r| r.train_loss));
                let (test_loss_mean, test_loss_std) = mean_std(&collect(|r| r.test_loss));
                let (accuracy_mean, accuracy_std) = mean_std(&collect(|r| r.accuracy));
                Aggregate {
                    arm,
                    axis,
                    value: f64::from_bits(bits),
                    runs: group.len(),
                    failed: group.iter().filter(|r| r.failed()).count(),
                    train_loss_mean,
                    train_loss_std,
                    test_loss_mean,
                    test_loss_std,
                    accuracy_mean,
                    accuracy_std,
                }
            })
            .collect();
        RunReport { rows, aggregates }
    }

    pub fn aggregate(&self, arm: Arm, value: f64) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.arm == arm && a.value == value)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Format {
            what: "csv report",
            message: e.to_string(),
        };
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.arm.name().to_owned(),
                r.axis.name().to_owned(),
                fmt_f64(r.value),
                r.seed.to_string(),
                r.params.to_string(),
                fmt_opt(r.train_loss),
                fmt_opt(r.test_loss),
                fmt_opt(r.accuracy),
                fmt_f64(r.wall_ms),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format {
            what: "csv report",
            message: e.to_string(),
        })
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let bad = |message: String| Error::Format {
            what: "csv report",
            message,
        };
        let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(bad(format!(
                "unexpected header {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let ctx = |col: &str, v: &str| bad(format!("row {}: bad {col} {v:?}", line + 1));
            let float = |i: usize| {
                field(i)
                    .parse::<f64>()
                    .map_err(|_| ctx(CSV_HEADER[i], field(i)))
            };
            let opt = |i: usize| -> Result<Option<f64>> {
                if field(i).is_empty() {
                    Ok(None)
                } else {
                    float(i).map(Some)
                }
            };
            rows.push(RunRow {
                arm: Arm::parse(field(0)).ok_or_else(|| ctx("arm", field(0)))?,
                axis: Axis::parse(field(1)).ok_or_else(|| ctx("axis", field(1)))?,
                value: float(2)?,
                seed: field(3).parse().map_err(|_| ctx("seed", field(3)))?,
                params: field(4).parse().map_err(|_| ctx("params", field(4)))?,
                train_loss: opt(5)?,
                test_loss: opt(6)?,
                accuracy: opt(7)?,
                wall_ms: float(8)?,
            });
        }
        Ok(RunReport::from_rows(rows))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format {
            what: "json report",
            message: e.to_string(),
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format {
            what: "json report",
            message: e.to_string(),
        })
    }

    /// CSV text with the wall-time column blanked, for determinism checks.
    pub fn csv_without_timing(&self) -> Result<String> {
        let mut stripped = self.clone();
        stripped.rows.iter_mut().for_each(|r| r.wall_ms = 0.0);
        let mut buf = Vec::new();
        stripped.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn emit_report(report: &RunReport, path: &Path, format: ReportFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        ReportFormat::Csv => report.write_csv(&mut out)?,
        ReportFormat::Json => {
            out.write_all(report.to_json()?.as_bytes())
                .map_err(|e| Error::io(path, e))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<RunReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        ReportFormat::Csv => RunReport::read_csv(BufReader::new(file)),
        ReportFormat::Json => {
            let mut s = String::new();
            BufReader::new(file)
                .read_to_string(&mut s)
                .map_err(|e| Error::io(path, e))?;
            RunReport::from_json(&s)
        }
    }
}
