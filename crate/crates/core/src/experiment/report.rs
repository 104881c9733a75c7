use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{CellRun, ExperimentConfig, Variant};
use crate::error::{Error, Result};
use crate::metrics::{confidence_interval, RunMetrics};

/// Mean and 95% half-width over runs; a single run has half-width 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    fn of(values: &[f64]) -> Result<Self> {
        let (mean, half_width) = match values {
            [] => return Err(Error::invalid("no runs to aggregate")),
            [v] => (*v, 0.0),
            _ => confidence_interval(values)?,
        };
        Ok(Self { mean, half_width })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub variant: Variant,
    pub pki: bool,
    pub accuracy: Interval,
    pub precision: Interval,
    pub recall: Interval,
    pub f1: Interval,
    /// One entry per seed, in seed-list order.
    pub runs: Vec<RunMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
    pub difficulty: f64,
    /// Distinct test-set hashes seen; one unless the data is re-split per run.
    pub test_set_hashes: Vec<String>,
    pub cells: Vec<CellReport>,
}

impl MetricsReport {
    pub(super) fn aggregate(
        config: &ExperimentConfig,
        cells: &[(Variant, bool)],
        runs: &[CellRun],
        test_set_hashes: Vec<String>,
    ) -> Result<Self> {
        let cells = cells
            .iter()
            .map(|&(variant, pki)| {
                let runs: Vec<RunMetrics> = config
                    .seeds
                    .iter()
                    .filter_map(|&s| {
                        runs.iter()
                            .find(|r| r.variant == variant && r.pki == pki && r.seed == s)
                            .map(|r| r.metrics)
                    })
                    .collect();
                let pick = |f: fn(&RunMetrics) -> f64| Interval::of(&runs.iter().map(f).collect::<Vec<_>>());
                Ok(CellReport {
                    variant,
                    pki,
                    accuracy: pick(|m| m.accuracy)?,
                    precision: pick(|m| m.precision)?,
                    recall: pick(|m| m.recall)?,
                    f1: pick(|m| m.f1)?,
                    runs,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config_hash: config.hash(),
            seeds: config.seeds.clone(),
            data_seed: config.data_seed,
            difficulty: config.difficulty,
            test_set_hashes,
            cells,
        })
    }

    pub fn cell(&self, variant: Variant, pki: bool) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.variant == variant && c.pki == pki)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Md,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "md" | "markdown" => Ok(Self::Md),
            _ => Err(Error::invalid(format!("unknown report format `{s}`"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
            Self::Md => "md",
        }
    }
}

const CSV_HEADER: &str =
    "pki,model,runs,accuracy_mean,accuracy_hw,precision_mean,precision_hw,recall_mean,recall_hw,f1_mean,f1_hw";

fn on_off(pki: bool) -> &'static str {
    if pki {
        "on"
    } else {
        "off"
    }
}

pub fn render_report(report: &MetricsReport, format: ReportFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        ReportFormat::Json => {
            out = serde_json::to_string_pretty(report).map_err(|e| Error::invalid(format!("cannot encode report: {e}")))?;
            out.push('\n');
        }
        ReportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for c in &report.cells {
                write!(out, "{},{},{}", on_off(c.pki), c.variant, c.runs.len()).unwrap();
                for i in [c.accuracy, c.precision, c.recall, c.f1] {
                    write!(out, ",{:.6},{:.6}", i.mean, i.half_width).unwrap();
                }
                out.push('\n');
            }
        }
        ReportFormat::Md => {
            writeln!(
                out,
                "Config `{}`, data seed {}, seeds {:?}, difficulty {}, test set {}\n",
                report.config_hash,
                report.data_seed,
                report.seeds,
                report.difficulty,
                report.test_set_hashes.iter().map(|h| format!("`{}`", h.get(..12).unwrap_or(h))).collect::<Vec<_>>().join(", ")
            )
            .unwrap();
            out.push_str("| PKI | Model | Accuracy | Precision | Recall | F1-score |\n");
            out.push_str("|---|---|---|---|---|---|\n");
            for c in &report.cells {
                write!(out, "| {} | {} |", on_off(c.pki).to_uppercase(), c.variant.display_name()).unwrap();
                for i in [c.accuracy, c.precision, c.recall, c.f1] {
                    write!(out, " {:.3}±{:.3} |", i.mean, i.half_width).unwrap();
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

pub fn emit_report(report: &MetricsReport, format: ReportFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render_report(report, format)?).map_err(|e| Error::io(path, e))
}

/// One parsed CSV line: means and half-widths for accuracy, precision, recall, F1.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub pki: bool,
    pub variant: Variant,
    pub runs: usize,
    pub values: [f64; 8],
}

pub fn parse_csv_report(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, message: String| Error::Parse {
        path: "<csv report>".into(),
        line: line + 1,
        message,
    };
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(bad(0, "missing header".into())),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(bad(n, format!("expected 11 fields, got {}", fields.len())));
            }
            let pki = match fields[0] {
                "on" => true,
                "off" => false,
                other => return Err(bad(n, format!("bad PKI flag `{other}`"))),
            };
            let variant = fields[1].parse().map_err(|e: Error| bad(n, e.to_string()))?;
            let runs = fields[2].parse().map_err(|e| bad(n, format!("{e}")))?;
            let mut values = [0.0; 8];
            for (v, f) in values.iter_mut().zip(&fields[3..]) {
                *v = f.parse().map_err(|e| bad(n, format!("{e}")))?;
            }
            Ok(CsvRow {
                pki,
                variant,
                runs,
                values,
            })
        })
        .collect()
}
