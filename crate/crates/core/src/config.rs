//! Run configuration. Every field is optional in the JSON file and falls back to the defaults below.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Generate only hard samples (`n_easy = 0`, `n_hard = b`).
    NoEasy,
    /// Hide correctly classified samples from weakness analysis.
    NoCorrect,
    /// Disable review steps; they fall through to chat/repeat.
    NoReview,
    /// Generate texts and labels in a single conversation.
    NoSeparating,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::NoEasy, Ablation::NoCorrect, Ablation::NoReview, Ablation::NoSeparating];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::NoEasy => "no_easy",
            Ablation::NoCorrect => "no_correct",
            Ablation::NoReview => "no_review",
            Ablation::NoSeparating => "no_separating",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub model: String,
    pub temperature: f64,
    /// Base URL; `EVOKD_ENDPOINT` overrides it.
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    /// Directory of prompt templates; built-in templates are used when unset.
    pub prompts: Option<String>,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            model: "gpt-3.5-turbo".into(),
            temperature: 1.0,
            endpoint: None,
            timeout_ms: 60_000,
            max_attempts: 3,
            backoff_ms: 500,
            prompts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRunConfig")]
pub struct RunConfig {
    pub num_steps: u64,
    pub steps_per_epoch: u64,
    pub chat: u64,
    pub review: u64,
    pub batch_size: usize,
    pub threshold: f64,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub l2: f64,
    pub init_epochs: u64,
    pub init_variants: usize,
    pub ablations: BTreeSet<Ablation>,
    pub seed: u64,
    pub feature_dim: usize,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    /// Most recent wrong (and correct) samples shown to the teacher per analysis.
    pub analysis_cap: usize,
    pub teacher: TeacherConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            num_steps: 12_500,
            steps_per_epoch: 1_250,
            chat: 40,
            review: 50,
            batch_size: 8,
            threshold: 0.95,
            learning_rate: 0.5,
            clip_norm: 2.0,
            l2: 0.0,
            init_epochs: 0,
            init_variants: 4,
            ablations: BTreeSet::new(),
            seed: 1,
            feature_dim: 1 << 18,
            eval_every: 50,
            checkpoint_every: 500,
            analysis_cap: 8,
            teacher: TeacherConfig::default(),
        }
    }
}

// Mirror used so that plain `serde_json::from_str::<RunConfig>` validates.
#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawRunConfig {
    num_steps: u64,
    steps_per_epoch: u64,
    chat: u64,
    review: u64,
    batch_size: usize,
    threshold: f64,
    learning_rate: f64,
    clip_norm: f64,
    l2: f64,
    init_epochs: u64,
    init_variants: usize,
    ablations: BTreeSet<Ablation>,
    seed: u64,
    feature_dim: usize,
    eval_every: u64,
    checkpoint_every: u64,
    analysis_cap: usize,
    teacher: TeacherConfig,
}

impl Default for RawRunConfig {
    fn default() -> Self {
        let d = RunConfig::default();
        Self {
            num_steps: d.num_steps,
            steps_per_epoch: d.steps_per_epoch,
            chat: d.chat,
            review: d.review,
            batch_size: d.batch_size,
            threshold: d.threshold,
            learning_rate: d.learning_rate,
            clip_norm: d.clip_norm,
            l2: d.l2,
            init_epochs: d.init_epochs,
            init_variants: d.init_variants,
            ablations: d.ablations,
            seed: d.seed,
            feature_dim: d.feature_dim,
            eval_every: d.eval_every,
            checkpoint_every: d.checkpoint_every,
            analysis_cap: d.analysis_cap,
            teacher: d.teacher,
        }
    }
}

impl TryFrom<RawRunConfig> for RunConfig {
    type Error = Error;

    fn try_from(r: RawRunConfig) -> Result<Self> {
        let config = RunConfig {
            num_steps: r.num_steps,
            steps_per_epoch: r.steps_per_epoch,
            chat: r.chat,
            review: r.review,
            batch_size: r.batch_size,
            threshold: r.threshold,
            learning_rate: r.learning_rate,
            clip_norm: r.clip_norm,
            l2: r.l2,
            init_epochs: r.init_epochs,
            init_variants: r.init_variants,
            ablations: r.ablations,
            seed: r.seed,
            feature_dim: r.feature_dim,
            eval_every: r.eval_every,
            checkpoint_every: r.checkpoint_every,
            analysis_cap: r.analysis_cap,
            teacher: r.teacher,
        };
        config.validate()?;
        Ok(config)
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_steps == 0 {
            return fail("num_steps must be positive".into());
        }
        if self.steps_per_epoch == 0 {
            return fail("steps_per_epoch must be positive".into());
        }
        if self.chat == 0 || self.review == 0 {
            return fail("chat and review intervals must be non-zero".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return fail(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return fail(format!("l2 must be non-negative, got {}", self.l2));
        }
        if self.feature_dim == 0 || self.feature_dim > u32::MAX as usize {
            return fail(format!("feature_dim {} out of range", self.feature_dim));
        }
        if self.eval_every == 0 || self.checkpoint_every == 0 {
            return fail("eval_every and checkpoint_every must be positive".into());
        }
        if self.init_epochs > 0 && self.init_variants == 0 {
            return fail("init_variants must be positive when init_epochs > 0".into());
        }
        if self.teacher.max_attempts == 0 {
            return fail("teacher.max_attempts must be at least 1".into());
        }
        Ok(())
    }

    pub fn has(&self, ablation: Ablation) -> bool {
        self.ablations.contains(&ablation)
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablations.insert(ablation);
        self
    }
}
