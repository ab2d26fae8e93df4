//! Turning aggregates into plot-ready long-format series.
//!
//! Every output is `x,series,y` so any plotting tool can group on the
//! `series` column directly. One aggregate gives series named after the
//! algorithms; multiple labeled aggregates (`LABEL=file.csv`) prefix the
//! label, e.g. `6q/cs`, so differently-configured runs can share a chart.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::HarnessError;

/// A parsed aggregate row; only the columns the plots consume.
#[derive(Clone, Debug)]
struct Row {
    algorithm: String,
    flow_count: u64,
    scheduled_count: f64,
    p50_per_flow_us: f64,
}

/// One `LABEL=path` argument (label optional).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AggregateRef {
    pub label: Option<String>,
    pub path: PathBuf,
}

impl AggregateRef {
    /// Accepts `path.csv` or `label=path.csv`. A Windows-style drive
    /// letter is not a concern here; the first `=` splits.
    pub fn parse(arg: &str) -> AggregateRef {
        match arg.split_once('=') {
            Some((label, path)) if !label.is_empty() => {
                AggregateRef { label: Some(label.to_owned()), path: PathBuf::from(path) }
            }
            _ => AggregateRef { label: None, path: PathBuf::from(arg) },
        }
    }
}

pub const PLOT_FILES: [&str; 4] =
    ["scheduled_bars.csv", "exec_time_cdf.csv", "queue_comparison.csv", "alloc_comparison.csv"];

/// Read the labeled aggregates and write the four series files into
/// `out_dir`. Fails with [`HarnessError::MalformedAggregate`] if no input
/// contributes a single data row.
pub fn emit_plot_data(aggregates: &[AggregateRef], out_dir: &Path) -> Result<(), HarnessError> {
    let mut rows: Vec<(Option<String>, Row)> = Vec::new();
    for agg in aggregates {
        for row in read_aggregate(&agg.path)? {
            rows.push((agg.label.clone(), row));
        }
    }
    if rows.is_empty() {
        return Err(HarnessError::MalformedAggregate);
    }

    fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Io { path: out_dir.to_owned(), detail: e.to_string() })?;

    // Mean scheduled count per (flow level, series) — the bar charts.
    write_rows(&out_dir.join("scheduled_bars.csv"), &mean_by_level(&rows, None))?;
    // The same reduction restricted to the algorithm each comparison
    // varies: queue-count runs compare the fixed-shift algorithm, buffer
    // splits compare the full search. Labels carry the variant.
    write_rows(&out_dir.join("queue_comparison.csv"), &mean_by_level(&rows, Some("cs")))?;
    write_rows(&out_dir.join("alloc_comparison.csv"), &mean_by_level(&rows, Some("focs")))?;

    // Per-flow median execution time, one sample per run, as a CDF.
    let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (label, row) in &rows {
        samples.entry(series_name(label, &row.algorithm)).or_default().push(row.p50_per_flow_us);
    }
    let mut cdf: Vec<(String, String, String)> = Vec::new();
    for (series, mut values) in samples {
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        for (i, v) in values.iter().enumerate() {
            cdf.push((format!("{v:.1}"), series.clone(), format!("{:.6}", (i + 1) as f64 / n)));
        }
    }
    write_rows(&out_dir.join("exec_time_cdf.csv"), &cdf)
}

fn series_name(label: &Option<String>, algorithm: &str) -> String {
    match label {
        Some(l) => format!("{l}/{algorithm}"),
        None => algorithm.to_owned(),
    }
}

fn mean_by_level(
    rows: &[(Option<String>, Row)],
    only_algorithm: Option<&str>,
) -> Vec<(String, String, String)> {
    let mut acc: BTreeMap<(u64, String), (f64, u64)> = BTreeMap::new();
    for (label, row) in rows {
        if only_algorithm.is_some_and(|a| a != row.algorithm) {
            continue;
        }
        let key = (row.flow_count, series_name(label, &row.algorithm));
        let slot = acc.entry(key).or_insert((0.0, 0));
        slot.0 += row.scheduled_count;
        slot.1 += 1;
    }
    acc.into_iter()
        .map(|((x, series), (sum, n))| {
            (x.to_string(), series, format!("{:.2}", sum / n as f64))
        })
        .collect()
}

fn write_rows(path: &Path, rows: &[(String, String, String)]) -> Result<(), HarnessError> {
    let io_err = |e: csv::Error| HarnessError::Io { path: path.to_owned(), detail: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(["x", "series", "y"]).map_err(io_err)?;
    for (x, series, y) in rows {
        w.write_record([x, series, y]).map_err(io_err)?;
    }
    w.flush().map_err(|e| HarnessError::Io { path: path.to_owned(), detail: e.to_string() })
}

fn read_aggregate(path: &Path) -> Result<Vec<Row>, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::Io { path: path.to_owned(), detail: e.to_string() })?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|_| HarnessError::MalformedAggregate)?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(algorithm), Some(flow_count), Some(scheduled), Some(p50)) = (
        col("algorithm"),
        col("flow_count"),
        col("scheduled_count"),
        col("p50_per_flow_us"),
    ) else {
        return Err(HarnessError::MalformedAggregate);
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|_| HarnessError::MalformedAggregate)?;
        let field = |i: usize| record.get(i).ok_or(HarnessError::MalformedAggregate);
        rows.push(Row {
            algorithm: field(algorithm)?.to_owned(),
            flow_count: field(flow_count)?.parse().map_err(|_| HarnessError::MalformedAggregate)?,
            scheduled_count: field(scheduled)?
                .parse()
                .map_err(|_| HarnessError::MalformedAggregate)?,
            p50_per_flow_us: field(p50)?.parse().map_err(|_| HarnessError::MalformedAggregate)?,
        });
    }
    Ok(rows)
}
