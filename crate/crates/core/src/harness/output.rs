use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::chart::{render_chart, SweptVariable};
use super::grid::{CellFailure, CellOutput};
use crate::metrics::OutcomeRecord;

/// Summary columns, in file order.
pub const SUMMARY_COLUMNS: [&str; 21] = [
    "design",
    "model",
    "samples",
    "accuracy",
    "em",
    "paranoia",
    "leakage",
    "secrecy",
    "tp",
    "fp",
    "tn",
    "fn",
    "mean_runtime_ms",
    "cell",
    "embedder",
    "num_secrets",
    "context_ratio",
    "secret_question_ratio",
    "threshold",
    "redact_threshold",
    "seed",
];

/// One summary line; the CSV and JSON outputs share these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub design: String,
    pub model: String,
    pub samples: u64,
    pub accuracy: f64,
    pub em: f64,
    pub paranoia: f64,
    pub leakage: f64,
    pub secrecy: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub mean_runtime_ms: Option<f64>,
    pub cell: usize,
    pub embedder: String,
    pub num_secrets: usize,
    pub context_ratio: f64,
    pub secret_question_ratio: f64,
    pub threshold: f64,
    pub redact_threshold: f64,
    pub seed: u64,
}

impl SummaryRow {
    pub fn new(cell: &CellOutput, include_timing: bool) -> Self {
        let o = &cell.output;
        let m = &o.report;
        SummaryRow {
            design: o.config.design.to_string(),
            model: o.model.clone(),
            samples: m.n,
            accuracy: m.accuracy,
            em: m.em,
            paranoia: m.paranoia,
            leakage: m.leakage,
            secrecy: m.secrecy,
            tp: m.counts.tp,
            fp: m.counts.fp,
            tn: m.counts.tn,
            fn_: m.counts.fn_,
            mean_runtime_ms: if include_timing { m.mean_runtime_ms } else { None },
            cell: cell.cell,
            embedder: o.config.embedder.to_string(),
            num_secrets: o.config.num_secrets,
            context_ratio: o.config.context_ratio,
            secret_question_ratio: o.config.secret_question_ratio,
            threshold: o.config.threshold,
            redact_threshold: o.config.redact_threshold,
            seed: o.config.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    /// `summary.csv`
    Csv,
    /// `summary.json`
    Json,
    /// `records.jsonl`
    Jsonl,
    /// `chart_<variable>.svg`
    Svg,
}

#[derive(Debug, Clone)]
pub struct WriteOptions {
    pub formats: Vec<Format>,
    pub include_timing: bool,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            formats: vec![Format::Csv, Format::Json, Format::Jsonl, Format::Svg],
            include_timing: true,
        }
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> io::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS).map_err(io::Error::other)?;
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

#[derive(Serialize)]
struct CellRecord<'a> {
    cell: usize,
    #[serde(flatten)]
    record: &'a OutcomeRecord,
}

/// Writes the selected outputs into `out_dir` (created if missing) and
/// returns the files written. Failed cells go to `failures.json`.
pub fn write_results(
    cells: &[CellOutput],
    failures: &[CellFailure],
    out_dir: &Path,
    options: &WriteOptions,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let rows: Vec<SummaryRow> = cells.iter().map(|c| SummaryRow::new(c, options.include_timing)).collect();
    let mut written = Vec::new();

    for format in &options.formats {
        match format {
            Format::Csv => {
                let path = out_dir.join("summary.csv");
                fs::write(&path, summary_csv(&rows)?)?;
                written.push(path);
            }
            Format::Json => {
                let path = out_dir.join("summary.json");
                fs::write(&path, serde_json::to_vec_pretty(&rows)?)?;
                written.push(path);
            }
            Format::Jsonl => {
                let path = out_dir.join("records.jsonl");
                let mut w = BufWriter::new(File::create(&path)?);
                for c in cells {
                    for r in &c.output.records {
                        let stripped;
                        let record = if options.include_timing {
                            r
                        } else {
                            stripped = OutcomeRecord { runtime_us: None, ..r.clone() };
                            &stripped
                        };
                        serde_json::to_writer(&mut w, &CellRecord { cell: c.cell, record })?;
                        w.write_all(b"\n")?;
                    }
                }
                w.flush()?;
                written.push(path);
            }
            Format::Svg => {
                for var in SweptVariable::ALL {
                    if let Some(svg) = render_chart(&rows, var) {
                        let path = out_dir.join(format!("chart_{}.svg", var.key()));
                        fs::write(&path, svg)?;
                        written.push(path);
                    }
                }
            }
        }
    }
    if !failures.is_empty() {
        let path = out_dir.join("failures.json");
        fs::write(&path, serde_json::to_vec_pretty(failures)?)?;
        written.push(path);
    }
    Ok(written)
}

/// Plain-text table: Design, Model, Samples, Accuracy, Paranoia, Leakage.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let header = ["Design", "Model", "Samples", "Accuracy", "Paranoia", "Leakage"];
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.design.clone(),
                r.model.clone(),
                r.samples.to_string(),
                format!("{:.2}", r.accuracy),
                format!("{:.2}", r.paranoia),
                format!("{:.2}", r.leakage),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[&str]| -> String {
        cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-|-"));
    for row in &body {
        out.push('\n');
        out.push_str(&line(&row.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    out.push('\n');
    out
}
