//! The per-step run log every curve and report is derived from.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::student::Metrics;
use crate::teacher::CallKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Warm-up step on seed data plus rephrased variants.
    Init,
    /// Step over a chunk of the seed data before the loop.
    Seed,
    Review,
    Chat,
    Repeat,
    /// Step of a static baseline run.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub macro_f1: f64,
    pub accuracy: f64,
    /// In task label order.
    pub per_label_f1: Vec<f64>,
}

impl EvalSnapshot {
    pub fn from_metrics(metrics: &Metrics, labels: &[String]) -> Self {
        Self {
            macro_f1: metrics.macro_f1,
            accuracy: metrics.accuracy,
            per_label_f1: metrics.f1_in_order(labels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    pub kind: EventKind,
    /// Mean cross-entropy before the update.
    pub loss: f64,
    /// History position of the batch trained on.
    pub batch_index: Option<usize>,
    /// Model version after this step.
    pub model_version: u64,
    /// Version of the model that scored the new batch (chat steps only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identify_version: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrong: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<usize>,
    pub cumulative_tokens: u64,
    /// Cumulative teacher-generated samples per label, in task label order.
    pub generated_counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSnapshot>,
}

/// One teacher round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRecord {
    pub round: u64,
    pub step: u64,
    pub pattern: String,
    pub edited_by_human: bool,
    /// Analysis was skipped because the previous batch had no wrong samples.
    pub analysis_skipped: bool,
    pub n_easy: usize,
    pub n_hard: usize,
    pub dropped: usize,
    pub padded: usize,
    pub tokens: u64,
    pub calls: Vec<CallKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub method: String,
    pub seed: u64,
    pub labels: Vec<String>,
    /// Steps taken before the loop (`Init` then `Seed`), numbered from 1.
    pub warmup: Vec<StepRecord>,
    pub steps: Vec<StepRecord>,
    pub chats: Vec<ChatRecord>,
    /// Held-out metrics once warm-up is done, before the first loop step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_eval: Option<EvalSnapshot>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl RunTrace {
    pub fn new(method: impl Into<String>, seed: u64, labels: Vec<String>) -> Self {
        Self {
            method: method.into(),
            seed,
            labels,
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.warmup.is_empty() && self.steps.is_empty()
    }

    pub fn last_eval(&self) -> Option<&EvalSnapshot> {
        self.steps
            .iter()
            .rev()
            .find_map(|r| r.eval.as_ref())
            .or(self.initial_eval.as_ref())
    }

    pub fn total_tokens(&self) -> u64 {
        self.steps
            .last()
            .or(self.warmup.last())
            .map_or(0, |r| r.cumulative_tokens)
    }

    pub fn final_generated_counts(&self) -> Vec<u64> {
        self.steps
            .last()
            .map_or_else(|| vec![0; self.labels.len()], |r| r.generated_counts.clone())
    }

    pub fn note(&mut self, note: impl Into<String>) {
        let note = note.into();
        tracing::info!("{note}");
        self.notes.push(note);
    }

    /// Checks the ordering invariants: steps strictly increasing within each
    /// list, tokens and per-label counts non-decreasing.
    pub fn check(&self) -> Result<()> {
        for list in [&self.warmup, &self.steps] {
            for pair in list.windows(2) {
                if pair[1].step <= pair[0].step {
                    return Err(Error::InvalidTrace(format!("step {} follows {}", pair[1].step, pair[0].step)));
                }
            }
        }
        let all: Vec<&StepRecord> = self.warmup.iter().chain(&self.steps).collect();
        for pair in all.windows(2) {
            if pair[1].cumulative_tokens < pair[0].cumulative_tokens {
                return Err(Error::InvalidTrace(format!("tokens decrease at step {}", pair[1].step)));
            }
            if pair[1]
                .generated_counts
                .iter()
                .zip(&pair[0].generated_counts)
                .any(|(b, a)| b < a)
            {
                return Err(Error::InvalidTrace(format!("label counts decrease at step {}", pair[1].step)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
