use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSample;
use crate::teacher::WeaknessReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    Seed,
    /// Rephrased seed variants from the warm-up phase.
    Init,
    Chat,
}

/// One entry of the history cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillationBatch {
    /// Position in the history.
    pub index: usize,
    pub kind: BatchKind,
    /// Chat round that produced the batch.
    pub round: Option<u64>,
    /// Easy samples first, then hard.
    pub samples: Vec<LabeledSample>,
    /// Copies of older history samples added after a generation shortfall.
    pub padding: Vec<LabeledSample>,
    pub report: Option<WeaknessReport>,
    pub created_step: u64,
}

impl DistillationBatch {
    /// What the student trains on: own samples then padding.
    pub fn training_samples(&self) -> Vec<LabeledSample> {
        self.samples.iter().chain(&self.padding).cloned().collect()
    }

    pub fn training_len(&self) -> usize {
        self.samples.len() + self.padding.len()
    }
}

/// Append-only cache of every batch, starting with the seed data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    batches: Vec<DistillationBatch>,
}

impl History {
    pub fn new(seed: Vec<LabeledSample>) -> Self {
        Self {
            batches: vec![DistillationBatch {
                index: 0,
                kind: BatchKind::Seed,
                round: None,
                samples: seed,
                padding: Vec::new(),
                report: None,
                created_step: 0,
            }],
        }
    }

    /// Appends a batch, assigning its index. Returns that index.
    pub fn push(
        &mut self,
        kind: BatchKind,
        round: Option<u64>,
        samples: Vec<LabeledSample>,
        padding: Vec<LabeledSample>,
        report: Option<WeaknessReport>,
        created_step: u64,
    ) -> usize {
        let index = self.batches.len();
        self.batches.push(DistillationBatch {
            index,
            kind,
            round,
            samples,
            padding,
            report,
            created_step,
        });
        index
    }

    pub fn batches(&self) -> &[DistillationBatch] {
        &self.batches
    }

    pub fn get(&self, index: usize) -> Option<&DistillationBatch> {
        self.batches.get(index)
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// Every distinct sample, in insertion order. Padding copies are left out.
    pub fn samples(&self) -> impl Iterator<Item = &LabeledSample> {
        self.batches.iter().flat_map(|b| &b.samples)
    }

    pub fn sample_count(&self) -> usize {
        self.batches.iter().map(|b| b.samples.len()).sum()
    }

    /// Uniform over batches, not samples. Batches without samples are skipped.
    pub fn pick_batch(&self, rng: &mut impl Rng) -> &DistillationBatch {
        let candidates: Vec<&DistillationBatch> = self.batches.iter().filter(|b| b.training_len() > 0).collect();
        candidates[rng.random_range(0..candidates.len())]
    }

    /// `n` samples drawn uniformly (with replacement) from all history samples.
    pub fn draw_samples(&self, n: usize, rng: &mut impl Rng) -> Vec<LabeledSample> {
        let all: Vec<&LabeledSample> = self.samples().collect();
        if all.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| all[rng.random_range(0..all.len())].clone()).collect()
    }
}
