//! CSV projections of a trace. Reals are written with 17 significant digits
//! so every cell parses back to the exact trace value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::trace::RunTrace;

pub const TOKENS_VS_F1: &str = "tokens_vs_f1.csv";
pub const CATEGORY_COUNTS: &str = "category_counts.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveFiles {
    /// `None` when the trace has no evaluation snapshots.
    pub tokens_vs_f1: Option<PathBuf>,
    pub category_counts: PathBuf,
}

pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn tokens_vs_f1_csv(trace: &RunTrace) -> Option<String> {
    let rows: Vec<_> = trace
        .steps
        .iter()
        .filter_map(|r| r.eval.as_ref().map(|e| (r.cumulative_tokens, e.macro_f1)))
        .collect();
    if rows.is_empty() {
        return None;
    }
    let mut out = String::from("cumulative_tokens,macro_f1\n");
    for (tokens, f1) in rows {
        let _ = writeln!(out, "{tokens},{}", format_real(f1));
    }
    Some(out)
}

/// `step`, one cumulative generated count per label, then one held-out F1
/// per label (empty between snapshots).
pub fn category_counts_csv(trace: &RunTrace) -> String {
    let mut out = String::from("step");
    for label in &trace.labels {
        let _ = write!(out, ",count_{label}");
    }
    for label in &trace.labels {
        let _ = write!(out, ",test_f1_{label}");
    }
    out.push('\n');
    for record in &trace.steps {
        let _ = write!(out, "{}", record.step);
        for c in &record.generated_counts {
            let _ = write!(out, ",{c}");
        }
        match &record.eval {
            Some(eval) => {
                for f1 in &eval.per_label_f1 {
                    let _ = write!(out, ",{}", format_real(*f1));
                }
            }
            None => out.push_str(&",".repeat(trace.labels.len())),
        }
        out.push('\n');
    }
    out
}

pub fn export_curves(trace: &RunTrace, out: impl AsRef<Path>) -> Result<CurveFiles> {
    if trace.steps.is_empty() {
        return Err(Error::EmptyInput("trace has no loop steps".into()));
    }
    let out = out.as_ref();
    std::fs::create_dir_all(out)?;
    let tokens_vs_f1 = match tokens_vs_f1_csv(trace) {
        Some(csv) => {
            let path = out.join(TOKENS_VS_F1);
            std::fs::write(&path, csv)?;
            Some(path)
        }
        None => {
            tracing::warn!("trace has no evaluation snapshots, {TOKENS_VS_F1} not written");
            None
        }
    };
    let category_counts = out.join(CATEGORY_COUNTS);
    std::fs::write(&category_counts, category_counts_csv(trace))?;
    Ok(CurveFiles {
        tokens_vs_f1,
        category_counts,
    })
}
