use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::classifiers::ClassifierKind;
use crate::error::{Error, Result};
use crate::feature_extraction::Method;
use crate::feature_selection::SelectionMode;
use crate::hierarchy::Pipeline;

use super::run::ResultRecord;

pub const CSV_COLUMNS: [&str; 12] = [
    "dataset",
    "pipeline",
    "fs_mode",
    "fe_method",
    "classifier",
    "seed",
    "final_dim",
    "val_acc",
    "test_acc",
    "fit_seconds",
    "predict_seconds",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            _ => Err(format!("unknown format {s:?} (allowed: csv, markdown)")),
        }
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn acc(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn records_to_csv(records: &[ResultRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.dataset.clone(),
            r.pipeline.to_string(),
            r.fs_mode.map_or("-".into(), |m| m.to_string()),
            r.fe_method.map_or("-".into(), |m| m.to_string()),
            r.classifier.to_string(),
            r.seed.to_string(),
            opt(r.final_dim),
            acc(r.val_acc),
            acc(r.test_acc),
            format!("{:.6}", r.fit_seconds),
            format!("{:.6}", r.predict_seconds),
            r.status.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Mean test accuracy of one (method, pipeline, classifier) combination over
/// every successful record.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub fe_method: Option<Method>,
    pub pipeline: Pipeline,
    pub classifier: ClassifierKind,
    pub mean_test_acc: Option<f64>,
    pub count: usize,
}

pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let keys: BTreeSet<(Option<Method>, Pipeline, ClassifierKind)> =
        records.iter().map(|r| (r.fe_method, r.pipeline, r.classifier)).collect();
    keys.into_iter()
        .map(|(fe_method, pipeline, classifier)| {
            let hits: Vec<f64> = records
                .iter()
                .filter(|r| r.fe_method == fe_method && r.pipeline == pipeline && r.classifier == classifier)
                .filter_map(|r| r.test_acc)
                .collect();
            SummaryRow {
                fe_method,
                pipeline,
                classifier,
                mean_test_acc: mean(hits.iter().copied()),
                count: hits.len(),
            }
        })
        .collect()
}

/// Test-accuracy pivot (datasets × pipelines × methods against selection
/// modes × classifiers) followed by the per-method summary.
pub fn records_to_markdown(records: &[ResultRecord]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    for r in records {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let fs: Vec<SelectionMode> = records
        .iter()
        .filter_map(|r| r.fs_mode)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    // raw-only grids still get one column group
    let groups: Vec<Option<SelectionMode>> = if fs.is_empty() { vec![None] } else { fs.into_iter().map(Some).collect() };
    let classifiers: Vec<ClassifierKind> = records
        .iter()
        .map(|r| r.classifier)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let seeds = records.iter().map(|r| r.seed).collect::<BTreeSet<_>>().len();

    let mut out = String::new();
    let _ = writeln!(out, "## Test accuracy (%), mean over {seeds} seed(s)\n");
    out.push_str("| dataset | pipeline | method |");
    for g in &groups {
        for c in &classifiers {
            let _ = write!(out, " {}/{} |", g.map_or("-", |m| m.name()), c);
        }
    }
    out.push_str("\n|---|---|---|");
    for _ in 0..groups.len() * classifiers.len() {
        out.push_str("---:|");
    }
    out.push('\n');

    for ds in &datasets {
        let rows: BTreeSet<(Pipeline, Option<Method>)> = records
            .iter()
            .filter(|r| r.dataset == *ds)
            .map(|r| (r.pipeline, r.fe_method))
            .collect();
        for (pipeline, method) in rows {
            let _ = write!(out, "| {ds} | {pipeline} | {} |", method.map_or("-", |m| m.name()));
            for g in &groups {
                for c in &classifiers {
                    let m = mean(
                        records
                            .iter()
                            .filter(|r| {
                                r.dataset == *ds
                                    && r.pipeline == pipeline
                                    && r.fe_method == method
                                    && r.classifier == *c
                                    // raw rows repeat under every selection group
                                    && (pipeline == Pipeline::Raw || r.fs_mode == *g)
                            })
                            .filter_map(|r| r.test_acc),
                    );
                    let _ = write!(out, " {} |", pct(m));
                }
            }
            out.push('\n');
        }
    }

    out.push_str("\n## Summary: mean test accuracy (%) per method and pipeline\n\n| method | pipeline |");
    for c in &classifiers {
        let _ = write!(out, " {c} |");
    }
    out.push_str(" mean |\n|---|---|");
    for _ in 0..=classifiers.len() {
        out.push_str("---:|");
    }
    out.push('\n');
    let summary = summarize(records);
    let rows: BTreeSet<(Option<Method>, Pipeline)> = summary.iter().map(|s| (s.fe_method, s.pipeline)).collect();
    for (method, pipeline) in rows {
        let _ = write!(out, "| {} | {pipeline} |", method.map_or("-", |m| m.name()));
        for c in &classifiers {
            let v = summary
                .iter()
                .find(|s| s.fe_method == method && s.pipeline == pipeline && s.classifier == *c)
                .and_then(|s| s.mean_test_acc);
            let _ = write!(out, " {} |", pct(v));
        }
        let all = mean(
            records
                .iter()
                .filter(|r| r.fe_method == method && r.pipeline == pipeline)
                .filter_map(|r| r.test_acc),
        );
        let _ = writeln!(out, " {} |", pct(all));
    }

    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        let _ = writeln!(out, "\n{failed} of {} cells failed and are excluded from the means.", records.len());
    }
    out
}

pub fn render(records: &[ResultRecord], format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Csv => records_to_csv(records),
        TableFormat::Markdown => Ok(records_to_markdown(records)),
    }
}

/// Writes the table to `path`, or to stdout when `path` is `None`.
pub fn emit_table(records: &[ResultRecord], format: TableFormat, path: Option<&Path>) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Parameter("no records to write".into()));
    }
    let text = render(records, format)?;
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pipeline: Pipeline, fe: Option<Method>, c: ClassifierKind, seed: u64, acc: f64) -> ResultRecord {
        ResultRecord {
            dataset: "toy".into(),
            pipeline,
            fs_mode: fe.map(|_| SelectionMode::None),
            fe_method: fe,
            classifier: c,
            seed,
            final_dim: Some(2),
            val_acc: Some(acc),
            test_acc: Some(acc),
            fit_seconds: 0.5,
            predict_seconds: 0.1,
            status: "ok".into(),
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rs = vec![
            rec(Pipeline::Raw, None, ClassifierKind::Lda, 0, 0.8),
            rec(Pipeline::Original, Some(Method::Pca), ClassifierKind::Lda, 0, 0.9),
        ];
        let text = records_to_csv(&rs).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_COLUMNS.join(","));
        assert_eq!(lines[1], "toy,raw,-,-,LDA,0,2,0.800000,0.800000,0.500000,0.100000,ok");
    }

    #[test]
    fn summary_is_arithmetic_mean() {
        let rs = vec![
            rec(Pipeline::Original, Some(Method::Pca), ClassifierKind::Knn, 0, 0.8),
            rec(Pipeline::Original, Some(Method::Pca), ClassifierKind::Knn, 1, 0.9),
        ];
        let s = summarize(&rs);
        assert_eq!(s.len(), 1);
        assert!((s[0].mean_test_acc.unwrap() - 0.85).abs() < 1e-12);
        assert!(records_to_markdown(&rs).contains("| PCA | original | 85.00 | 85.00 |"));
    }

    #[test]
    fn failures_are_excluded() {
        let mut bad = rec(Pipeline::Original, Some(Method::Pca), ClassifierKind::Knn, 1, 0.0);
        bad.test_acc = None;
        bad.val_acc = None;
        bad.status = "failed: boom".into();
        let rs = vec![rec(Pipeline::Original, Some(Method::Pca), ClassifierKind::Knn, 0, 0.7), bad];
        assert_eq!(summarize(&rs)[0].count, 1);
        let md = records_to_markdown(&rs);
        assert!(md.contains("70.00") && md.contains("1 of 2 cells failed"));
        assert!(records_to_csv(&rs).unwrap().contains(",,,"));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("CSV".parse::<TableFormat>().unwrap(), TableFormat::Csv);
        assert!("xlsx".parse::<TableFormat>().unwrap_err().contains("csv, markdown"));
    }
}
