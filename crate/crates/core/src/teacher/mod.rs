//! The teacher protocol.
//!
//! A teacher performs three separate sub-steps per distillation round:
//! weakness analysis over the student's partition, generation of unlabeled
//! easy and hard texts, and labeling of those texts in a fresh conversation.
//! [`ChatTeacher`] drives any [`ChatBackend`] (the HTTP client or scripted
//! fixtures) through prompt templates; [`SyntheticTeacher`] answers from a
//! template world where every label is known by construction.

pub mod chat;
pub mod llm;
pub mod parse;
pub mod scripted;
pub mod synthetic;
pub mod template;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledSample, TaskSpec};
use crate::error::Result;

pub use chat::{ChatBackend, ChatReply, ChatTeacher, Conversation, Usage};
pub use llm::LlmClient;
pub use scripted::{FaultKind, FaultSpec, FixtureCall, FixtureManifest, Fixtures, ScriptedBackend};
pub use synthetic::{synthetic_generate, LabelProfile, SyntheticTeacher, SyntheticWorld, WorldSpec};
pub use template::{PromptTemplates, Template};

/// Pattern used when the analysis reply cannot be parsed twice in a row.
pub const FALLBACK_PATTERN: &str = "samples similar to the wrong ones";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// What a single chat call is for. Scripted fixtures are keyed by it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Weakness,
    Generate,
    GenerateMerged,
    Repair,
    Label,
    Relabel,
    Rephrase,
}

/// One conversation: its messages and accumulated token usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTranscript {
    pub kind: CallKind,
    pub messages: Vec<Message>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl ChatTranscript {
    pub fn new(kind: CallKind) -> Self {
        Self {
            kind,
            messages: Vec::new(),
            prompt_tokens: 0,
            completion_tokens: 0,
        }
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Roles alternate user/assistant after an optional leading system message.
    pub fn is_well_formed(&self) -> bool {
        let rest = match self.messages.first() {
            Some(m) if m.role == Role::System => &self.messages[1..],
            _ => &self.messages[..],
        };
        rest.iter().enumerate().all(|(i, m)| {
            m.role == if i % 2 == 0 { Role::User } else { Role::Assistant }
        })
    }
}

/// A sample scored by the student during identification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judged {
    /// Position in the identified dataset.
    pub index: usize,
    pub sample: LabeledSample,
    pub predicted: String,
    pub gold_probability: f64,
}

/// Samples the student got wrong (or was unsure about) and samples it got right.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub wrong: Vec<Judged>,
    pub correct: Vec<Judged>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.wrong.len() + self.correct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeaknessReport {
    pub pattern: String,
    pub edited_by_human: bool,
}

impl WeaknessReport {
    pub fn new(pattern: impl Into<String>) -> Self {
        Self {
            pattern: pattern.into(),
            edited_by_human: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedText {
    pub text: String,
    pub rationale: Option<String>,
}

impl GeneratedText {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            rationale: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedBatch {
    pub easy: Vec<GeneratedText>,
    pub hard: Vec<GeneratedText>,
}

impl GeneratedBatch {
    pub fn len(&self) -> usize {
        self.easy.len() + self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Easy texts first, then hard.
    pub fn texts(&self) -> Vec<String> {
        self.easy.iter().chain(&self.hard).map(|g| g.text.clone()).collect()
    }
}

/// Output of the merged generation+labeling conversation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledGeneration {
    pub easy: Vec<(GeneratedText, String)>,
    pub hard: Vec<(GeneratedText, String)>,
}

impl LabeledGeneration {
    pub fn len(&self) -> usize {
        self.easy.len() + self.hard.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationRequest {
    pub n_easy: usize,
    pub n_hard: usize,
    /// Set when the previous batch was classified perfectly and the old pattern is reused.
    pub harder: bool,
}

impl GenerationRequest {
    pub fn total(&self) -> usize {
        self.n_easy + self.n_hard
    }
}

pub trait Teacher {
    /// Describes the pattern behind the student's mistakes. With `hide_correct`
    /// the correctly classified samples are not shown to the teacher.
    fn analyze_weakness(
        &mut self,
        task: &TaskSpec,
        partition: &Partition,
        hide_correct: bool,
    ) -> Result<(WeaknessReport, ChatTranscript)>;

    /// Unlabeled texts grounded in the pattern. Returns exactly the requested
    /// counts or `Error::GenerationShortfall` carrying what was produced.
    fn generate_texts(
        &mut self,
        task: &TaskSpec,
        report: &WeaknessReport,
        request: GenerationRequest,
    ) -> Result<(GeneratedBatch, ChatTranscript)>;

    /// One label per text from a conversation without any generation
    /// context; `None` marks a text whose label stayed invalid.
    fn label_texts(&mut self, task: &TaskSpec, texts: &[String]) -> Result<(Vec<Option<String>>, ChatTranscript)>;

    /// Generation and labeling in one conversation. May return fewer samples than requested.
    fn generate_labeled(
        &mut self,
        task: &TaskSpec,
        report: &WeaknessReport,
        request: GenerationRequest,
    ) -> Result<(LabeledGeneration, ChatTranscript)>;

    /// Up to `n` label-preserving rewrites of `sample`.
    fn rephrase(&mut self, task: &TaskSpec, sample: &LabeledSample, n: usize) -> Result<(Vec<String>, ChatTranscript)>;
}

impl<T: Teacher + ?Sized> Teacher for Box<T> {
    fn analyze_weakness(
        &mut self,
        task: &TaskSpec,
        partition: &Partition,
        hide_correct: bool,
    ) -> Result<(WeaknessReport, ChatTranscript)> {
        (**self).analyze_weakness(task, partition, hide_correct)
    }

    fn generate_texts(
        &mut self,
        task: &TaskSpec,
        report: &WeaknessReport,
        request: GenerationRequest,
    ) -> Result<(GeneratedBatch, ChatTranscript)> {
        (**self).generate_texts(task, report, request)
    }

    fn label_texts(&mut self, task: &TaskSpec, texts: &[String]) -> Result<(Vec<Option<String>>, ChatTranscript)> {
        (**self).label_texts(task, texts)
    }

    fn generate_labeled(
        &mut self,
        task: &TaskSpec,
        report: &WeaknessReport,
        request: GenerationRequest,
    ) -> Result<(LabeledGeneration, ChatTranscript)> {
        (**self).generate_labeled(task, report, request)
    }

    fn rephrase(&mut self, task: &TaskSpec, sample: &LabeledSample, n: usize) -> Result<(Vec<String>, ChatTranscript)> {
        (**self).rephrase(task, sample, n)
    }
}
