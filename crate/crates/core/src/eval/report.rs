use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::Confusion;
use super::pipeline::FoldResult;
use super::{EvalError, FeatureCondition};
use crate::corpus::Valence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Baseline,
    CrossLingual,
    Multilingual,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Baseline => "baseline",
            ExperimentKind::CrossLingual => "cross_lingual",
            ExperimentKind::Multilingual => "multilingual",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDescriptor {
    pub kind: ExperimentKind,
    pub sources: Vec<String>,
    pub target: String,
    pub condition: FeatureCondition,
}

impl ExperimentDescriptor {
    pub fn source_label(&self) -> String {
        self.sources.join("+")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub descriptor: ExperimentDescriptor,
    pub folds: Vec<FoldResult>,
    /// Arithmetic mean of the per-fold UARs.
    pub mean_uar: f64,
    /// Confusion counts pooled over folds.
    pub confusion: Confusion,
    pub negative_recall: Option<f64>,
    pub positive_recall: Option<f64>,
}

impl EvalReport {
    pub fn new(
        descriptor: ExperimentDescriptor,
        folds: Vec<FoldResult>,
    ) -> Result<Self, EvalError> {
        if folds.is_empty() {
            return Err(EvalError::Protocol("report without folds".into()));
        }
        let mut confusion = Confusion::default();
        for f in &folds {
            confusion.add(&f.confusion);
        }
        let mean_uar = folds.iter().map(|f| f.uar).sum::<f64>() / folds.len() as f64;
        Ok(Self {
            descriptor,
            folds,
            mean_uar,
            confusion,
            negative_recall: confusion.recall(Valence::Negative),
            positive_recall: confusion.recall(Valence::Positive),
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// One row per report: `experiment,source,target,condition,uar,...`.
pub fn summary_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "experiment,source,target,condition,uar,negative_recall,positive_recall,folds\n",
    );
    for r in reports {
        let d = &r.descriptor;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            d.kind.as_str(),
            d.source_label(),
            d.target,
            d.condition,
            r.mean_uar,
            opt(r.negative_recall),
            opt(r.positive_recall),
            r.folds.len()
        );
    }
    out
}

/// One row per fold and condition.
pub fn folds_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "experiment,source,target,condition,fold,test_speakers,validation_speaker,c_reg,gamma,\
         test_utterances,uar,true_neg,false_pos,false_neg,true_pos\n",
    );
    for r in reports {
        let d = &r.descriptor;
        for f in &r.folds {
            let [[tn, fp], [fn_, tp]] = f.confusion.0;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                d.kind.as_str(),
                d.source_label(),
                d.target,
                d.condition,
                f.fold,
                f.test_speakers.join(" "),
                f.validation_speaker,
                f.c_reg,
                f.gamma,
                f.n_test_utterances,
                f.uar,
                tn,
                fp,
                fn_,
                tp
            );
        }
    }
    out
}

/// Fixed-width text table, UAR in percent.
pub fn summary_table(reports: &[EvalReport]) -> String {
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            let d = &r.descriptor;
            [
                d.kind.as_str().to_string(),
                d.source_label(),
                d.target.clone(),
                d.condition.to_string(),
                format!("{:.1}", 100.0 * r.mean_uar),
            ]
        })
        .collect();
    let head = ["experiment", "source", "target", "condition", "UAR %"];
    let mut widths = head.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: [&str; 5]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i + 1 == cells.len() {
                let _ = write!(s, "{cell:>w$}");
            } else {
                let _ = write!(s, "{cell:<w$}  ");
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(head);
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &rows {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3], &row[4]]));
    }
    out
}
