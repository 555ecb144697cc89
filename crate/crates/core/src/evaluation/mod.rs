//! Metrics and reports: confusion matrices, per-class / macro F1, the
//! monthly breakdown of forecasting results, and paired significance
//! statistics, plus deterministic CSV/markdown rendering.

mod stats;

pub use stats::{cohens_d, paired_t_test, regularized_incomplete_beta, t_two_tailed_p, TTest};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Counts of (true label, predicted label) pairs. Rows are true labels,
/// columns are predictions, both in the order of `labels`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Number of items whose true label is the `k`-th label.
    pub fn support(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    /// Add another matrix over the same label list (counts are additive
    /// across disjoint prediction subsets).
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::domain("cannot merge matrices over different labels"));
        }
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (cell, o) in row.iter_mut().zip(other_row) {
                *cell += o;
            }
        }
        Ok(())
    }
}

/// Count (truth, prediction) pairs into a K×K matrix.
pub fn confusion_matrix<S: AsRef<str>, T: AsRef<str>>(
    truth: &[S],
    pred: &[T],
    labels: &[String],
) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::domain(format!(
            "{} true labels vs {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::domain("label list is empty"));
    }
    let index_of = |s: &str| -> Result<usize> {
        labels
            .iter()
            .position(|l| l == s)
            .ok_or_else(|| Error::domain(format!("label `{s}` not in label list")))
    };
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (t, p) in truth.iter().zip(pred) {
        counts[index_of(t.as_ref())?][index_of(p.as_ref())?] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
    })
}

/// Per-class F1 = 2·TP / (support + predicted count), with 0/0 → 0.0.
pub fn per_class_f1(cm: &ConfusionMatrix) -> Vec<f64> {
    let k = cm.labels.len();
    (0..k)
        .map(|i| {
            let tp = cm.counts[i][i] as f64;
            let row: u64 = cm.counts[i].iter().sum();
            let col: u64 = cm.counts.iter().map(|r| r[i]).sum();
            let denom = (row + col) as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .collect()
}

/// Unweighted arithmetic mean of per-class F1 scores.
pub fn macro_f1(per_class: &[f64]) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::domain("cannot average an empty F1 vector"));
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// Macro F1 per publish month of `year`: a 12-entry series (index 0 =
/// January) with `None` for months that received no predictions.
pub fn monthly_macro_f1<S: AsRef<str> + Sync, T: AsRef<str> + Sync>(
    dates: &[NaiveDate],
    truth: &[S],
    pred: &[T],
    labels: &[String],
    year: i32,
) -> Result<Vec<Option<f64>>> {
    if dates.len() != truth.len() || truth.len() != pred.len() {
        return Err(Error::domain("dates, truth and predictions must align"));
    }
    for date in dates {
        if date.year() != year {
            return Err(Error::domain(format!(
                "prediction dated {date} falls outside {year}"
            )));
        }
    }
    let series = crate::parallel::map_range(12, |m| {
        let month = m as u32 + 1;
        let idx: Vec<usize> = (0..dates.len())
            .filter(|&i| dates[i].month() == month)
            .collect();
        if idx.is_empty() {
            return Ok(None);
        }
        let t: Vec<&str> = idx.iter().map(|&i| truth[i].as_ref()).collect();
        let p: Vec<&str> = idx.iter().map(|&i| pred[i].as_ref()).collect();
        let cm = confusion_matrix(&t, &p, labels)?;
        Ok(Some(macro_f1(&per_class_f1(&cm))?))
    });
    series.into_iter().collect()
}

/// Fold-level scores with their summary statistics (sd uses n−1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub scores: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl FoldScores {
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::domain("no fold scores to summarize"));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let sd = if scores.len() < 2 {
            0.0
        } else {
            (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(FoldScores { scores, mean, sd })
    }
}

/// Paired significance comparison between two runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceBlock {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub cohens_d: f64,
}

/// Everything one experiment reports. Per-class and macro F1 are stored
/// as percentages; per-class values are rounded to two decimals and the
/// macro is their exact mean, so the reported macro reproduces from the
/// reported per-class row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub labels: Vec<String>,
    pub per_class_f1_pct: Vec<f64>,
    pub macro_f1_pct: f64,
    pub confusion: ConfusionMatrix,
    pub monthly_pct: Option<Vec<Option<f64>>>,
    pub folds: Option<FoldScores>,
    pub significance: Option<SignificanceBlock>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl ExperimentReport {
    pub fn from_predictions<S: AsRef<str>, T: AsRef<str>>(
        truth: &[S],
        pred: &[T],
        labels: &[String],
    ) -> Result<Self> {
        let confusion = confusion_matrix(truth, pred, labels)?;
        let per_class: Vec<f64> = per_class_f1(&confusion)
            .iter()
            .map(|f| round2(f * 100.0))
            .collect();
        let macro_pct = macro_f1(&per_class)?;
        Ok(ExperimentReport {
            labels: labels.to_vec(),
            per_class_f1_pct: per_class,
            macro_f1_pct: macro_pct,
            confusion,
            monthly_pct: None,
            folds: None,
            significance: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Render the headline table: one row per class plus a macro row (CSV),
/// or a one-row table with class columns and a final F1-Macro column
/// (markdown). Optional fold and significance summaries follow the
/// markdown table as separate lines.
pub fn render_report(report: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("class,f1\n");
            for (label, f1) in report.labels.iter().zip(&report.per_class_f1_pct) {
                out.push_str(&format!("{label},{f1:.2}\n"));
            }
            out.push_str(&format!("macro,{:.2}\n", report.macro_f1_pct));
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::from("|");
            for label in &report.labels {
                out.push_str(&format!(" {label} |"));
            }
            out.push_str(" F1-Macro |\n|");
            for _ in 0..=report.labels.len() {
                out.push_str(" ---: |");
            }
            out.push_str("\n|");
            for f1 in &report.per_class_f1_pct {
                out.push_str(&format!(" {f1:.2} |"));
            }
            out.push_str(&format!(" {:.2} |\n", report.macro_f1_pct));
            if let Some(folds) = &report.folds {
                out.push_str(&format!(
                    "\nFolds ({}): mean {:.2}, sd {:.2}\n",
                    folds.scores.len(),
                    folds.mean,
                    folds.sd
                ));
            }
            if let Some(sig) = &report.significance {
                out.push_str(&format!(
                    "\nPaired t-test: t = {:.4}, df = {}, p = {:.4}, Cohen's d = {:.4}\n",
                    sig.t, sig.df, sig.p, sig.cohens_d
                ));
            }
            out
        }
    }
}

/// `month,macro_f1` CSV over all 12 months; missing months render as NA.
pub fn monthly_series_csv(series: &[Option<f64>]) -> String {
    let mut out = String::from("month,macro_f1\n");
    for (i, entry) in series.iter().enumerate() {
        match entry {
            Some(v) => out.push_str(&format!("{},{v:.2}\n", i + 1)),
            None => out.push_str(&format!("{},NA\n", i + 1)),
        }
    }
    out
}

/// Confusion matrix as CSV: header `true\pred` then one row per label.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut out = String::from("true\\pred");
    for label in &cm.labels {
        out.push_str(&format!(",{label}"));
    }
    out.push('\n');
    for (label, row) in cm.labels.iter().zip(&cm.counts) {
        out.push_str(label);
        for cell in row {
            out.push_str(&format!(",{cell}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn confusion_counts_pairs() {
        let l = labels(&["A", "B"]);
        let cm = confusion_matrix(&["A", "A", "B", "B"], &["A", "B", "B", "B"], &l).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(cm.total(), 4);
        assert_eq!(cm.support(0), 2);
        assert_eq!(cm.support(1), 2);
    }

    #[test]
    fn confusion_rejects_unknown_label_and_mismatch() {
        let l = labels(&["A", "B"]);
        assert!(matches!(
            confusion_matrix(&["A"], &["C"], &l),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            confusion_matrix(&["A", "B"], &["A"], &l),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn per_class_f1_worked_example() {
        let l = labels(&["A", "B"]);
        let cm = confusion_matrix(&["A", "A", "B", "B"], &["A", "B", "B", "B"], &l).unwrap();
        let f1 = per_class_f1(&cm);
        assert!((f1[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((f1[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn per_class_f1_perfect_and_empty_class() {
        let l = labels(&["A", "B", "C"]);
        // C never occurs in truth or predictions: 0/0 → 0.0.
        let cm = confusion_matrix(&["A", "B"], &["A", "B"], &l).unwrap();
        assert_eq!(per_class_f1(&cm), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn macro_f1_reproduces_published_rows() {
        // Two six-class rows whose published macro equals the mean of
        // the published per-class scores.
        let row_a = [77.79, 60.87, 83.15, 85.66, 75.39, 43.98];
        let row_b = [67.95, 64.29, 86.09, 74.11, 76.60, 42.21];
        assert!((macro_f1(&row_a).unwrap() - 71.14).abs() < 0.005);
        assert!((macro_f1(&row_b).unwrap() - 68.54).abs() < 0.005);
        assert_eq!(macro_f1(&[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(macro_f1(&[]), Err(Error::Domain(_))));
    }

    fn dates(specs: &[&str]) -> Vec<NaiveDate> {
        specs
            .iter()
            .map(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap())
            .collect()
    }

    #[test]
    fn monthly_series_marks_missing_months() {
        let l = labels(&["A", "B"]);
        let d = dates(&["2019-01-05", "2019-01-09", "2019-07-01"]);
        let series =
            monthly_macro_f1(&d, &["A", "B", "A"], &["A", "B", "A"], &l, 2019).unwrap();
        assert_eq!(series.len(), 12);
        assert_eq!(series[0], Some(1.0));
        assert_eq!(series[5], None, "June empty -> missing, not 0");
        // July has one A: per-class F1 = [1.0, 0.0] -> macro 0.5.
        assert_eq!(series[6], Some(0.5));
    }

    #[test]
    fn monthly_matrices_sum_to_global() {
        let l = labels(&["A", "B"]);
        let d = dates(&["2019-01-05", "2019-02-09", "2019-02-11", "2019-12-31"]);
        let truth = ["A", "B", "A", "B"];
        let pred = ["B", "B", "A", "A"];
        let global = confusion_matrix(&truth, &pred, &l).unwrap();
        let mut merged = ConfusionMatrix {
            labels: l.clone(),
            counts: vec![vec![0; 2]; 2],
        };
        for month in 1..=12u32 {
            let idx: Vec<usize> = (0..d.len()).filter(|&i| d[i].month() == month).collect();
            if idx.is_empty() {
                continue;
            }
            let t: Vec<&str> = idx.iter().map(|&i| truth[i]).collect();
            let p: Vec<&str> = idx.iter().map(|&i| pred[i]).collect();
            merged.merge(&confusion_matrix(&t, &p, &l).unwrap()).unwrap();
        }
        assert_eq!(merged, global);
    }

    #[test]
    fn monthly_rejects_out_of_year_dates() {
        let l = labels(&["A"]);
        let d = dates(&["2018-12-31"]);
        assert!(matches!(
            monthly_macro_f1(&d, &["A"], &["A"], &l, 2019),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn report_macro_is_mean_of_rounded_per_class() {
        let l = labels(&["A", "B"]);
        let report =
            ExperimentReport::from_predictions(&["A", "A", "B", "B"], &["A", "B", "B", "B"], &l).unwrap();
        assert_eq!(report.per_class_f1_pct, vec![66.67, 80.00]);
        assert!((report.macro_f1_pct - 73.335).abs() < 1e-9);
    }

    #[test]
    fn csv_report_has_class_rows_plus_macro() {
        let l = labels(&["A", "B"]);
        let report =
            ExperimentReport::from_predictions(&["A", "B"], &["A", "B"], &l).unwrap();
        let csv = render_report(&report, ReportFormat::Csv);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 4, "header + 2 classes + macro");
        assert_eq!(lines[0], "class,f1");
        assert_eq!(lines[3], "macro,100.00");
        // Deterministic output.
        assert_eq!(csv, render_report(&report, ReportFormat::Csv));
    }

    #[test]
    fn markdown_report_matches_grid_layout() {
        let l = labels(&["A", "B"]);
        let mut report =
            ExperimentReport::from_predictions(&["A", "B"], &["A", "B"], &l).unwrap();
        report.significance = Some(SignificanceBlock {
            t: -6.3246,
            df: 4,
            p: 0.0032,
            cohens_d: -2.8284,
        });
        let md = render_report(&report, ReportFormat::Markdown);
        let first = md.lines().next().unwrap();
        assert_eq!(first, "| A | B | F1-Macro |");
        assert!(md.contains("| 100.00 | 100.00 | 100.00 |"));
        assert!(md.contains("t = -6.3246, df = 4, p = 0.0032"));
    }

    #[test]
    fn monthly_csv_uses_na_for_missing() {
        let mut series = vec![None; 12];
        series[0] = Some(87.5);
        let csv = monthly_series_csv(&series);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(lines[1], "1,87.50");
        assert_eq!(lines[3], "3,NA");
    }

    #[test]
    fn confusion_csv_round_numbers() {
        let l = labels(&["A", "B"]);
        let cm = confusion_matrix(&["A", "A", "B", "B"], &["A", "B", "B", "B"], &l).unwrap();
        let csv = confusion_csv(&cm);
        assert_eq!(csv, "true\\pred,A,B\nA,1,1\nB,0,2\n");
    }

    #[test]
    fn fold_scores_summary() {
        let f = FoldScores::from_scores(vec![70.0, 72.0, 74.0]).unwrap();
        assert!((f.mean - 72.0).abs() < 1e-12);
        assert!((f.sd - 2.0).abs() < 1e-12);
    }
}
