//! Confusion matrices, precision/recall/F1 and the model × language report.
//!
//! Zero denominators contribute 0, and the macro average runs over the whole
//! label vocabulary, including classes absent from the evaluated data.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{golds} gold labels but {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("label `{0}` is not in the vocabulary")]
    UnknownLabel(String),
}

/// Rows are gold labels, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion<G, P, L>(
    golds: &[G],
    preds: &[P],
    labels: &[L],
) -> Result<ConfusionMatrix, MetricsError>
where
    G: AsRef<str>,
    P: AsRef<str>,
    L: AsRef<str>,
{
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    let labels: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
    let index = |l: &str| {
        labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| MetricsError::UnknownLabel(l.to_string()))
    };
    let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
    for (g, p) in golds.iter().zip(preds) {
        counts[index(g.as_ref())?][index(p.as_ref())?] += 1;
    }
    Ok(ConfusionMatrix { labels, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn class_scores(&self) -> Vec<ClassScores> {
        let n = self.labels.len();
        (0..n)
            .map(|c| {
                let tp = self.counts[c][c];
                let predicted: u64 = (0..n).map(|r| self.counts[r][c]).sum();
                let support: u64 = self.counts[c].iter().sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.labels.len()).map(|i| self.counts[i][i]).sum();
        ratio(diag, self.total())
    }
}

/// Unweighted mean of per-class F1 over the vocabulary.
pub fn macro_f1(matrix: &ConfusionMatrix) -> f64 {
    let scores = matrix.class_scores();
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Model family, e.g. the backend identity.
    pub model: String,
    pub mode: String,
    pub task: String,
    pub language: String,
    pub labels: Vec<String>,
    pub per_class: Vec<ClassScores>,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_matrix(
        matrix: ConfusionMatrix,
        model: impl Into<String>,
        mode: impl Into<String>,
        task: impl Into<String>,
        language: impl Into<String>,
    ) -> Self {
        EvalReport {
            model: model.into(),
            mode: mode.into(),
            task: task.into(),
            language: language.into(),
            labels: matrix.labels.clone(),
            per_class: matrix.class_scores(),
            macro_f1: macro_f1(&matrix),
            accuracy: matrix.accuracy(),
            confusion: matrix,
        }
    }
}

/// Grid of macro-F1 scores: one row per (model, mode), one column per
/// (language, task).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportGrid {
    pub rows: Vec<(String, String)>,
    pub columns: Vec<(String, String)>,
    pub cells: Vec<Vec<Option<f64>>>,
    /// Row index of the best score in each column.
    pub best: Vec<Option<usize>>,
    reports: Vec<EvalReport>,
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) -> usize {
    match v.iter().position(|y| *y == x) {
        Some(i) => i,
        None => {
            v.push(x);
            v.len() - 1
        }
    }
}

/// Lays reports out as a grid. Rows and columns appear in first-seen order;
/// ties for best keep the earlier row.
pub fn report(reports: &[EvalReport]) -> ReportGrid {
    let mut rows = Vec::new();
    let mut columns = Vec::new();
    let mut placed = Vec::new();
    for r in reports {
        let row = push_unique(&mut rows, (r.model.clone(), r.mode.clone()));
        let col = push_unique(&mut columns, (r.language.clone(), r.task.clone()));
        placed.push((row, col, r.macro_f1));
    }
    let mut cells = vec![vec![None; columns.len()]; rows.len()];
    for (row, col, f1) in placed {
        cells[row][col] = Some(f1);
    }
    let best = (0..columns.len())
        .map(|c| {
            let mut best: Option<(usize, f64)> = None;
            for (r, row) in cells.iter().enumerate() {
                if let Some(v) = row[c] {
                    if best.is_none_or(|(_, b)| v > b) {
                        best = Some((r, v));
                    }
                }
            }
            best.map(|(r, _)| r)
        })
        .collect();
    ReportGrid {
        rows,
        columns,
        cells,
        best,
        reports: reports.to_vec(),
    }
}

const LABEL_ORDER: [&str; 6] = ["NOT", "HOF", "NONE", "HATE", "OFFN", "PRFN"];

impl ReportGrid {
    /// Aligned text table; the best cell per column is marked with `*`.
    pub fn to_text(&self) -> String {
        let mut header = vec!["model".to_string(), "mode".to_string()];
        header.extend(self.columns.iter().map(|(l, t)| format!("{l}/{t}")));
        let mut lines = vec![header];
        for (r, (model, mode)) in self.rows.iter().enumerate() {
            let mut line = vec![model.clone(), mode.clone()];
            for (c, cell) in self.cells[r].iter().enumerate() {
                line.push(match cell {
                    Some(v) if self.best[c] == Some(r) => format!("{v:.4}*"),
                    Some(v) => format!("{v:.4}"),
                    None => "-".to_string(),
                });
            }
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| {
                lines
                    .iter()
                    .map(|l| l[i].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for line in &lines {
            let padded: Vec<String> = line
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// One CSV line per report: model, mode, language, task, macro_f1,
    /// accuracy, then precision/recall/F1 for every label seen in any report.
    pub fn to_csv(&self) -> String {
        let mut labels: Vec<String> = Vec::new();
        for r in &self.reports {
            for l in &r.labels {
                push_unique(&mut labels, l.clone());
            }
        }
        labels.sort_by_key(|l| {
            LABEL_ORDER
                .iter()
                .position(|x| x == l)
                .unwrap_or(usize::MAX)
        });

        let mut out = String::from("model,mode,language,task,macro_f1,accuracy");
        for l in &labels {
            let _ = write!(out, ",p_{l},r_{l},f1_{l}");
        }
        out.push('\n');
        let by_label: Vec<BTreeMap<&str, &ClassScores>> = self
            .reports
            .iter()
            .map(|r| {
                r.labels
                    .iter()
                    .map(String::as_str)
                    .zip(&r.per_class)
                    .collect()
            })
            .collect();
        for (r, scores) in self.reports.iter().zip(by_label) {
            let _ = write!(
                out,
                "{},{},{},{},{:.6},{:.6}",
                r.model, r.mode, r.language, r.task, r.macro_f1, r.accuracy
            );
            for l in &labels {
                match scores.get(l.as_str()) {
                    Some(s) => {
                        let _ = write!(out, ",{:.6},{:.6},{:.6}", s.precision, s.recall, s.f1);
                    }
                    None => out.push_str(",,,"),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_counts() {
        let m = confusion(&["HOF", "NOT"], &["HOF", "NOT"], &["NOT", "HOF"]).unwrap();
        assert_eq!(m.counts, vec![vec![1, 0], vec![0, 1]]);
        let m = confusion(&["HOF"], &["NOT"], &["NOT", "HOF"]).unwrap();
        assert_eq!(m.counts, vec![vec![0, 0], vec![1, 0]]);
        assert_eq!(
            confusion(&["HOF"], &["HOF", "NOT"], &["NOT", "HOF"]),
            Err(MetricsError::LengthMismatch { golds: 1, preds: 2 })
        );
        assert_eq!(
            confusion(&["X"], &["HOF"], &["NOT", "HOF"]),
            Err(MetricsError::UnknownLabel("X".into()))
        );
    }

    #[test]
    fn macro_f1_fixtures() {
        let perfect = confusion(&["a", "b", "c"], &["a", "b", "c"], &["a", "b", "c"]).unwrap();
        assert_eq!(macro_f1(&perfect), 1.0);

        // class 1: P=1, R=1/2, F1=2/3 ; class 0: P=2/3, R=1, F1=0.8
        let m = confusion(&["1", "1", "0", "0"], &["1", "0", "0", "0"], &["0", "1"]).unwrap();
        let s = m.class_scores();
        assert!((s[1].f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((s[0].f1 - 0.8).abs() < 1e-12);
        assert!((macro_f1(&m) - 0.733333).abs() < 1e-6);

        let swapped = confusion(&["1", "0"], &["0", "1"], &["0", "1"]).unwrap();
        assert_eq!(macro_f1(&swapped), 0.0);
    }

    #[test]
    fn absent_vocabulary_class_counts_as_zero() {
        let m = confusion(&["a", "a"], &["a", "a"], &["a", "b"]).unwrap();
        assert_eq!(macro_f1(&m), 0.5);
    }

    fn rep(model: &str, mode: &str, lang: &str, f1: f64) -> EvalReport {
        let m = confusion(&["HOF"], &["HOF"], &["NOT", "HOF"]).unwrap();
        let mut r = EvalReport::from_matrix(m, model, mode, "1a", lang);
        r.macro_f1 = f1;
        r
    }

    #[test]
    fn grid_layout_and_best_flags() {
        let g = report(&[rep("xlmr", "mono", "en", 0.7)]);
        assert_eq!((g.rows.len(), g.columns.len()), (1, 1));
        assert_eq!(g.best, vec![Some(0)]);

        let g = report(&[
            rep("xlmr", "mono", "en", 0.7786),
            rep("xlmr", "multi", "en", 0.7996),
            rep("xlmr", "mono", "hi", 0.7585),
            rep("xlmr", "multi", "hi", 0.7748),
            rep("mbert", "multi", "mr", 0.8461),
        ]);
        assert_eq!((g.rows.len(), g.columns.len()), (3, 3));
        assert_eq!(g.best, vec![Some(1), Some(1), Some(2)]);
        assert_eq!(g.cells[2][0], None);
        let text = g.to_text();
        assert!(text.contains("0.7996*"));
        assert!(text.lines().count() == 4);
        let csv = g.to_csv();
        assert!(
            csv.starts_with("model,mode,language,task,macro_f1,accuracy,p_NOT,r_NOT,f1_NOT,p_HOF")
        );
        assert_eq!(csv.lines().count(), 6);
    }
}
