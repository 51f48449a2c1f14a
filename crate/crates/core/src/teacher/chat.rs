use std::collections::{HashMap, HashSet};

use super::parse::{parse_label_list, parse_numbered_list, split_merged, split_rationale};
use super::template::PromptTemplates;
use super::{
    CallKind, ChatTranscript, GeneratedBatch, GeneratedText, GenerationRequest, Judged, LabeledGeneration, Message,
    Partition, Role, Teacher, WeaknessReport,
};
use crate::data::{LabeledSample, TaskSpec};
use crate::error::{Error, Result};
use crate::harness::tokens::token_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatReply {
    pub content: String,
    /// Server-reported usage; the estimator is used when absent.
    pub usage: Option<Usage>,
}

/// One synchronous chat round trip.
pub trait ChatBackend {
    fn complete(&mut self, kind: CallKind, messages: &[Message]) -> Result<ChatReply>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &mut B {
    fn complete(&mut self, kind: CallKind, messages: &[Message]) -> Result<ChatReply> {
        (**self).complete(kind, messages)
    }
}

/// A conversation that records every message and its token cost.
#[derive(Debug, Clone)]
pub struct Conversation {
    transcript: ChatTranscript,
}

impl Conversation {
    pub fn new(kind: CallKind) -> Self {
        Self {
            transcript: ChatTranscript::new(kind),
        }
    }

    pub fn with_system(kind: CallKind, system: &str) -> Self {
        let mut c = Self::new(kind);
        c.transcript.messages.push(Message::new(Role::System, system));
        c
    }

    pub fn ask(&mut self, backend: &mut dyn ChatBackend, kind: CallKind, content: String) -> Result<String> {
        self.transcript.messages.push(Message::new(Role::User, content));
        let reply = backend.complete(kind, &self.transcript.messages)?;
        let usage = reply.usage.unwrap_or_else(|| Usage {
            prompt_tokens: self.transcript.messages.iter().map(|m| token_count(&m.content)).sum(),
            completion_tokens: token_count(&reply.content),
        });
        self.transcript.prompt_tokens += usage.prompt_tokens;
        self.transcript.completion_tokens += usage.completion_tokens;
        self.transcript
            .messages
            .push(Message::new(Role::Assistant, reply.content.clone()));
        Ok(reply.content)
    }

    pub fn transcript(&self) -> &ChatTranscript {
        &self.transcript
    }

    pub fn into_transcript(self) -> ChatTranscript {
        self.transcript
    }
}

/// A teacher that talks to a chat backend through prompt templates.
pub struct ChatTeacher<B> {
    backend: B,
    prompts: PromptTemplates,
    analysis_cap: usize,
}

impl<B: ChatBackend> ChatTeacher<B> {
    pub fn new(backend: B, prompts: PromptTemplates) -> Self {
        Self {
            backend,
            prompts,
            analysis_cap: 8,
        }
    }

    /// At most `cap` most recent wrong and `cap` most recent correct samples are shown per analysis.
    pub fn with_analysis_cap(mut self, cap: usize) -> Self {
        self.analysis_cap = cap.max(1);
        self
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn backend_mut(&mut self) -> &mut B {
        &mut self.backend
    }

    fn base_vars(task: &TaskSpec) -> HashMap<&'static str, String> {
        HashMap::from([
            ("task_description", task.description().to_string()),
            ("labels", task.labels().join(", ")),
        ])
    }

    fn generation_vars(task: &TaskSpec, report: &WeaknessReport, request: GenerationRequest) -> HashMap<&'static str, String> {
        let mut vars = Self::base_vars(task);
        vars.insert("pattern", report.pattern.clone());
        vars.insert("n_easy", request.n_easy.to_string());
        vars.insert("n_hard", request.n_hard.to_string());
        vars.insert("n_total", request.total().to_string());
        vars.insert("no_easy", flag(request.n_easy == 0));
        vars.insert("harder", flag(request.harder));
        vars
    }

    fn repair_prompt(
        &self,
        request: GenerationRequest,
        received: usize,
        missing_easy: usize,
        missing_hard: usize,
        with_labels: bool,
    ) -> Result<String> {
        let vars = HashMap::from([
            ("received", received.to_string()),
            ("requested", request.total().to_string()),
            ("missing", (missing_easy + missing_hard).to_string()),
            ("missing_easy", missing_easy.to_string()),
            ("missing_hard", missing_hard.to_string()),
            ("with_labels", flag(with_labels)),
            ("without_labels", flag(!with_labels)),
        ]);
        self.prompts.repair.render(&vars)
    }
}

fn flag(on: bool) -> String {
    if on { "1".into() } else { String::new() }
}

fn format_judged(items: &[Judged], cap: usize) -> String {
    let start = items.len().saturating_sub(cap);
    items[start..]
        .iter()
        .map(|j| {
            format!(
                "- \"{}\" (true label: {}; student predicted: {}; probability of true label: {:.2})",
                j.sample.text, j.sample.label, j.predicted, j.gold_probability
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn numbered(texts: &[String]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {}", i + 1, t))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Fills easy slots first, then hard, skipping duplicates and empties.
struct Slots<T> {
    easy: Vec<T>,
    hard: Vec<T>,
    n_easy: usize,
    n_hard: usize,
    seen: HashSet<String>,
}

impl<T> Slots<T> {
    fn new(request: GenerationRequest) -> Self {
        Self {
            easy: Vec::new(),
            hard: Vec::new(),
            n_easy: request.n_easy,
            n_hard: request.n_hard,
            seen: HashSet::new(),
        }
    }

    fn offer(&mut self, key: &str, item: T) {
        if key.is_empty() || self.seen.contains(key) {
            return;
        }
        if self.easy.len() < self.n_easy {
            self.easy.push(item);
        } else if self.hard.len() < self.n_hard {
            self.hard.push(item);
        } else {
            return;
        }
        self.seen.insert(key.to_string());
    }

    fn missing(&self) -> (usize, usize) {
        (self.n_easy - self.easy.len(), self.n_hard - self.hard.len())
    }

    fn filled(&self) -> usize {
        self.easy.len() + self.hard.len()
    }
}

impl<B: ChatBackend> Teacher for ChatTeacher<B> {
    fn analyze_weakness(
        &mut self,
        task: &TaskSpec,
        partition: &Partition,
        hide_correct: bool,
    ) -> Result<(WeaknessReport, ChatTranscript)> {
        let mut vars = Self::base_vars(task);
        vars.insert("wrong_samples", format_judged(&partition.wrong, self.analysis_cap));
        let correct = if hide_correct {
            String::new()
        } else {
            format_judged(&partition.correct, self.analysis_cap)
        };
        vars.insert("correct_samples", correct);
        let prompt = self.prompts.weakness.render(&vars)?;
        let mut conversation = Conversation::new(CallKind::Weakness);
        let reply = conversation.ask(&mut self.backend, CallKind::Weakness, prompt)?;
        let pattern = reply.trim();
        if pattern.is_empty() {
            return Err(Error::TeacherParse("empty weakness analysis".into()));
        }
        Ok((WeaknessReport::new(pattern), conversation.into_transcript()))
    }

    fn generate_texts(
        &mut self,
        task: &TaskSpec,
        report: &WeaknessReport,
        request: GenerationRequest,
    ) -> Result<(GeneratedBatch, ChatTranscript)> {
        let prompt = self
            .prompts
            .generate
            .render(&Self::generation_vars(task, report, request))?;
        let mut conversation = Conversation::new(CallKind::Generate);
        let reply = conversation.ask(&mut self.backend, CallKind::Generate, prompt)?;
        let mut slots = Slots::new(request);
        for item in parse_numbered_list(&reply) {
            let (text, rationale) = split_rationale(&item);
            slots.offer(&text.clone(), GeneratedText { text, rationale });
        }
        let (missing_easy, missing_hard) = slots.missing();
        if missing_easy + missing_hard > 0 {
            tracing::warn!(received = slots.filled(), requested = request.total(), "generation short, asking for repair");
            let prompt = self.repair_prompt(request, slots.filled(), missing_easy, missing_hard, false)?;
            let reply = conversation.ask(&mut self.backend, CallKind::Repair, prompt)?;
            for item in parse_numbered_list(&reply) {
                let (text, rationale) = split_rationale(&item);
                slots.offer(&text.clone(), GeneratedText { text, rationale });
            }
        }
        let received = slots.filled();
        let batch = GeneratedBatch {
            easy: slots.easy,
            hard: slots.hard,
        };
        let transcript = conversation.into_transcript();
        if received < request.total() {
            return Err(Error::GenerationShortfall {
                requested: request.total(),
                received,
                partial: Box::new(batch),
                transcript: Box::new(transcript),
            });
        }
        Ok((batch, transcript))
    }

    fn label_texts(&mut self, task: &TaskSpec, texts: &[String]) -> Result<(Vec<Option<String>>, ChatTranscript)> {
        if texts.is_empty() {
            return Err(Error::EmptyInput("no texts to label".into()));
        }
        let mut vars = Self::base_vars(task);
        vars.insert("texts", numbered(texts));
        let prompt = self.prompts.label.render(&vars)?;
        let mut conversation = Conversation::new(CallKind::Label);
        let reply = conversation.ask(&mut self.backend, CallKind::Label, prompt)?;
        let mut labels: Vec<Option<String>> = parse_label_list(&reply, texts.len())
            .into_iter()
            .map(|raw| raw.and_then(|r| task.match_label(&r)).map(|i| task.label(i).to_string()))
            .collect();

        let invalid: Vec<usize> = (0..texts.len()).filter(|&i| labels[i].is_none()).collect();
        if !invalid.is_empty() {
            let retry: Vec<String> = invalid.iter().map(|&i| texts[i].clone()).collect();
            let mut vars = Self::base_vars(task);
            vars.insert("texts", numbered(&retry));
            let prompt = self.prompts.relabel.render(&vars)?;
            let reply = conversation.ask(&mut self.backend, CallKind::Relabel, prompt)?;
            let again = parse_label_list(&reply, retry.len());
            for (&i, raw) in invalid.iter().zip(again) {
                labels[i] = raw.and_then(|r| task.match_label(&r)).map(|k| task.label(k).to_string());
                if labels[i].is_none() {
                    tracing::warn!(text = %texts[i], "dropping text with invalid label after re-prompt");
                }
            }
        }
        Ok((labels, conversation.into_transcript()))
    }

    fn generate_labeled(
        &mut self,
        task: &TaskSpec,
        report: &WeaknessReport,
        request: GenerationRequest,
    ) -> Result<(LabeledGeneration, ChatTranscript)> {
        let prompt = self
            .prompts
            .generate_merged
            .render(&Self::generation_vars(task, report, request))?;
        let mut conversation = Conversation::new(CallKind::GenerateMerged);
        let reply = conversation.ask(&mut self.backend, CallKind::GenerateMerged, prompt)?;
        let mut slots = Slots::new(request);
        let take = |slots: &mut Slots<(GeneratedText, String)>, reply: &str| {
            for item in parse_numbered_list(reply) {
                let Some((raw_label, text)) = split_merged(&item) else {
                    tracing::warn!(%item, "merged item without [label] prefix dropped");
                    continue;
                };
                let Some(label) = task.match_label(&raw_label) else {
                    tracing::warn!(%item, "merged item with invalid label dropped");
                    continue;
                };
                let (_, rationale) = split_rationale(&item);
                slots.offer(
                    &text.clone(),
                    (GeneratedText { text, rationale }, task.label(label).to_string()),
                );
            }
        };
        take(&mut slots, &reply);
        let (missing_easy, missing_hard) = slots.missing();
        if missing_easy + missing_hard > 0 {
            let prompt = self.repair_prompt(request, slots.filled(), missing_easy, missing_hard, true)?;
            let reply = conversation.ask(&mut self.backend, CallKind::Repair, prompt)?;
            take(&mut slots, &reply);
        }
        Ok((
            LabeledGeneration {
                easy: slots.easy,
                hard: slots.hard,
            },
            conversation.into_transcript(),
        ))
    }

    fn rephrase(&mut self, task: &TaskSpec, sample: &LabeledSample, n: usize) -> Result<(Vec<String>, ChatTranscript)> {
        let mut vars = Self::base_vars(task);
        vars.insert("text", sample.text.clone());
        vars.insert("label", sample.label.clone());
        vars.insert("n", n.to_string());
        let prompt = self.prompts.rephrase.render(&vars)?;
        let mut conversation = Conversation::new(CallKind::Rephrase);
        let reply = conversation.ask(&mut self.backend, CallKind::Rephrase, prompt)?;
        let variants: Vec<String> = parse_numbered_list(&reply)
            .into_iter()
            .map(|item| split_rationale(&item).0)
            .filter(|t| !t.is_empty())
            .take(n)
            .collect();
        Ok((variants, conversation.into_transcript()))
    }
}
