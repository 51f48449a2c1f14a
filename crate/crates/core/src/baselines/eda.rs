//! Character-level EDA: swap, delete or insert characters at random positions.

use rand::seq::{index, IndexedRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledSample, Origin};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdaOp {
    /// Swap a character with its right neighbour.
    SwapChar,
    DeleteChar,
    /// Insert a random lowercase letter before the position.
    InsertChar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaConfig {
    pub ops: Vec<EdaOp>,
    pub change_rate: f64,
    pub variants_per_sample: usize,
}

impl Default for EdaConfig {
    fn default() -> Self {
        Self {
            ops: vec![EdaOp::SwapChar, EdaOp::DeleteChar, EdaOp::InsertChar],
            change_rate: 0.3,
            variants_per_sample: 4,
        }
    }
}

impl EdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ops.is_empty() {
            return Err(Error::Config("EDA needs at least one operation".into()));
        }
        if !(self.change_rate > 0.0 && self.change_rate <= 1.0) {
            return Err(Error::Config(format!("change_rate {} outside (0, 1]", self.change_rate)));
        }
        if self.variants_per_sample == 0 {
            return Err(Error::Config("variants_per_sample must be positive".into()));
        }
        Ok(())
    }
}

/// `ceil(rate * len)`. The small slack keeps `0.3 * 10` at 3 despite rounding.
pub fn changed_positions(len: usize, rate: f64) -> usize {
    ((rate * len as f64) - 1e-9).ceil().max(0.0) as usize
}

/// A planned edit: the operation, its 0-based positions and any inserted letters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdaEdit {
    pub op: EdaOp,
    pub positions: Vec<usize>,
    pub inserted: Vec<char>,
}

pub fn plan_edit(len: usize, cfg: &EdaConfig, rng: &mut impl Rng) -> EdaEdit {
    let op = *cfg.ops.choose(rng).expect("validated non-empty");
    let m = changed_positions(len, cfg.change_rate);
    // Deletions keep one character; swaps need a right neighbour.
    let (slots, m) = match op {
        EdaOp::DeleteChar => (len, m.min(len - 1)),
        EdaOp::SwapChar => (len - 1, m.min(len - 1)),
        EdaOp::InsertChar => (len, m.min(len)),
    };
    let mut positions = index::sample(rng, slots, m).into_vec();
    positions.sort_unstable();
    let inserted = match op {
        EdaOp::InsertChar => (0..m).map(|_| rng.random_range(b'a'..=b'z') as char).collect(),
        _ => Vec::new(),
    };
    EdaEdit { op, positions, inserted }
}

/// Applies `edit` to `text`; positions are character indices in ascending order.
pub fn apply_op(text: &str, edit: &EdaEdit) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    match edit.op {
        EdaOp::DeleteChar => {
            for &p in edit.positions.iter().rev() {
                chars.remove(p);
            }
        }
        EdaOp::SwapChar => {
            for &p in &edit.positions {
                chars.swap(p, p + 1);
            }
        }
        EdaOp::InsertChar => {
            for (&p, &c) in edit.positions.iter().zip(&edit.inserted).rev() {
                chars.insert(p, c);
            }
        }
    }
    chars.into_iter().collect()
}

pub fn eda_augment(text: &str, cfg: &EdaConfig, rng: &mut impl Rng) -> String {
    let len = text.chars().count();
    if len < 2 {
        tracing::warn!(text, "text too short for EDA, returned unchanged");
        return text.to_string();
    }
    apply_op(text, &plan_edit(len, cfg, rng))
}

/// `variants_per_sample` EDA variants of every seed sample, with origin `Baseline`.
pub fn eda_dataset(seed: &Dataset, cfg: &EdaConfig, rng: &mut impl Rng) -> Result<Dataset> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(seed.len() * cfg.variants_per_sample);
    for sample in seed.samples() {
        for _ in 0..cfg.variants_per_sample {
            let text = eda_augment(&sample.text, cfg, rng);
            out.push(LabeledSample::new(text, sample.label.clone(), Origin::Baseline, 0)?);
        }
    }
    Dataset::new(seed.task().clone(), out)
}
