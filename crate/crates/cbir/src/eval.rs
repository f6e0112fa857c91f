//! CRR/FRR evaluation over a labeled query set.
//!
//! For one query, CRR is the percentage of retrieved images whose ground-truth
//! label equals the query's label (0 when nothing is retrieved), and FRR is
//! `100 - CRR`. Rows average over the queries of one category; the overall
//! row averages the category rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use cbir_core::imagecore::RasterImage;
use cbir_core::retrieval::{query, QueryOptions, RetrievalError};
use cbir_core::store::{ImageId, QueryParams, Store};
use cbir_core::Category;
use serde::Serialize;

use crate::labels::LabelEntry;

/// Metadata key holding the enrolled file's name.
pub const SOURCE_KEY: &str = "source";
/// Metadata key holding the label supplied at enrollment.
pub const LABEL_KEY: &str = "label";

pub struct EvalQuery {
    pub source: String,
    pub label: Category,
    pub image: RasterImage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryScore {
    pub source: String,
    pub label: Category,
    pub predicted: Category,
    pub retrieved: usize,
    pub relevant: usize,
    pub crr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub category: Category,
    pub trials: usize,
    pub avg_crr: f64,
    pub avg_frr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub avg_crr: f64,
    pub avg_frr: f64,
    pub queries: Vec<QueryScore>,
}

pub fn crr(relevant: usize, retrieved: usize) -> f64 {
    if retrieved == 0 {
        0.0
    } else {
        100.0 * relevant as f64 / retrieved as f64
    }
}

/// Ground truth for enrolled records: the labels entry with the record's
/// source file name, else the label given at enrollment.
pub fn ground_truth(store: &Store, labels: &[LabelEntry]) -> BTreeMap<ImageId, Category> {
    let by_name: BTreeMap<String, Category> = labels.iter().map(|e| (e.file_name(), e.category)).collect();
    let state = store.read();
    state
        .records()
        .filter_map(|r| {
            let from_file = r.metadata.get(SOURCE_KEY).and_then(|s| by_name.get(s)).copied();
            let from_enroll = r.metadata.get(LABEL_KEY).and_then(|s| Category::from_name(s));
            from_file.or(from_enroll).map(|c| (r.image_id, c))
        })
        .collect()
}

/// Runs every query; records enrolled from the query's own file are
/// excluded so a query never retrieves itself. Queries are not persisted.
pub fn run_eval(
    store: &Store,
    queries: &[EvalQuery],
    truth: &BTreeMap<ImageId, Category>,
    params: QueryParams,
    gated: bool,
) -> Result<EvalReport, RetrievalError> {
    let sources: BTreeMap<ImageId, String> = {
        let state = store.read();
        state.records().filter_map(|r| r.metadata.get(SOURCE_KEY).map(|s| (r.image_id, s.clone()))).collect()
    };
    let mut scores = Vec::with_capacity(queries.len());
    for q in queries {
        let exclude = sources.iter().filter(|(_, s)| **s == q.source).map(|(id, _)| *id).collect();
        let opts = QueryOptions { params, gated, exclude, persist: false };
        let out = query(store, &q.image, &opts)?;
        let relevant = out.results.iter().filter(|r| truth.get(&r.image_id) == Some(&q.label)).count();
        scores.push(QueryScore {
            source: q.source.clone(),
            label: q.label,
            predicted: out.predicted,
            retrieved: out.results.len(),
            relevant,
            crr: crr(relevant, out.results.len()),
        });
    }
    Ok(summarize(scores))
}

pub fn summarize(queries: Vec<QueryScore>) -> EvalReport {
    let mut rows = Vec::new();
    for c in Category::ALL {
        let crrs: Vec<f64> = queries.iter().filter(|q| q.label == c).map(|q| q.crr).collect();
        if crrs.is_empty() {
            continue;
        }
        let avg_crr = crrs.iter().sum::<f64>() / crrs.len() as f64;
        rows.push(EvalRow { category: c, trials: crrs.len(), avg_crr, avg_frr: 100.0 - avg_crr });
    }
    let avg_crr = if rows.is_empty() { 0.0 } else { rows.iter().map(|r| r.avg_crr).sum::<f64>() / rows.len() as f64 };
    EvalReport { rows, avg_crr, avg_frr: 100.0 - avg_crr, queries }
}

const HEADERS: [&str; 5] = ["Exp. ID", "Query Image Category", "No of trials", "Average CRR", "Average FRR"];

/// Aligned text table, one row per category plus the overall average.
pub fn render_table(report: &EvalReport) -> String {
    let mut lines: Vec<[String; 5]> = vec![HEADERS.map(String::from)];
    for (i, r) in report.rows.iter().enumerate() {
        lines.push([
            (i + 1).to_string(),
            r.category.name().to_string(),
            r.trials.to_string(),
            format!("{:.2}", r.avg_crr),
            format!("{:.2}", r.avg_frr),
        ]);
    }
    lines.push([
        String::new(),
        "Average Performance".to_string(),
        report.rows.iter().map(|r| r.trials).sum::<usize>().to_string(),
        format!("{:.2}", report.avg_crr),
        format!("{:.2}", report.avg_frr),
    ]);
    let widths: Vec<usize> = (0..5).map(|k| lines.iter().map(|l| l[k].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (n, l) in lines.iter().enumerate() {
        let cells: Vec<String> = (0..5)
            .map(|k| if k < 2 { format!("{:<w$}", l[k], w = widths[k]) } else { format!("{:>w$}", l[k], w = widths[k]) })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if n == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 8));
        }
    }
    out
}

/// `category,trials,avg_crr,avg_frr` rows, the overall row labeled `average`.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("category,trials,avg_crr,avg_frr\n");
    for r in &report.rows {
        let _ = writeln!(out, "{},{},{:.6},{:.6}", r.category.name(), r.trials, r.avg_crr, r.avg_frr);
    }
    let trials: usize = report.rows.iter().map(|r| r.trials).sum();
    let _ = writeln!(out, "average,{},{:.6},{:.6}", trials, report.avg_crr, report.avg_frr);
    out
}
