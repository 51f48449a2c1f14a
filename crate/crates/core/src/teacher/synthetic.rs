//! A template world with known labels, and a teacher that answers from it.
//!
//! Every label owns a pool of *core* words (used by easy texts) and a pool of
//! *subtle* words (used by hard texts), so a student that only memorised core
//! words gets hard texts wrong. Hard texts can also carry core words of other
//! labels as distractors (`hard_distractors`, off in the standard world).
//! Labels with larger pools need more samples before the student masters them.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    CallKind, ChatTranscript, GeneratedBatch, GeneratedText, GenerationRequest, LabeledGeneration, Message, Partition,
    Role, Teacher, WeaknessReport,
};
use crate::data::{Dataset, LabeledSample, Origin, TaskSpec};
use crate::error::{Error, Result};
use crate::harness::tokens::token_count;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelProfile {
    pub name: String,
    pub core_words: usize,
    pub subtle_words: usize,
}

impl LabelProfile {
    pub fn new(name: &str, core_words: usize, subtle_words: usize) -> Self {
        Self {
            name: name.into(),
            core_words,
            subtle_words,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub description: String,
    pub labels: Vec<LabelProfile>,
    pub filler_words: usize,
    pub easy_core: usize,
    pub hard_subtle: usize,
    pub hard_distractors: usize,
    pub filler_per_text: usize,
    pub seed: u64,
}

impl WorldSpec {
    /// Four news-like categories of graded difficulty: `game` has the largest
    /// vocabulary, `car` the smallest.
    pub fn standard() -> Self {
        Self {
            description: "Classify a short news headline into its category.".into(),
            labels: vec![
                LabelProfile::new("game", 24, 120),
                LabelProfile::new("finance", 12, 40),
                LabelProfile::new("travel", 6, 10),
                LabelProfile::new("car", 2, 3),
            ],
            filler_words: 60,
            easy_core: 2,
            hard_subtle: 2,
            hard_distractors: 0,
            filler_per_text: 3,
            seed: 2024,
        }
    }

    /// Two labels with disjoint vocabularies and no distractors: linearly separable.
    pub fn separable() -> Self {
        Self {
            description: "Decide which of two topics a text belongs to.".into(),
            labels: vec![LabelProfile::new("alpha", 6, 10), LabelProfile::new("beta", 6, 10)],
            filler_words: 30,
            easy_core: 2,
            hard_subtle: 2,
            hard_distractors: 0,
            filler_per_text: 2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    spec: WorldSpec,
    task: Arc<TaskSpec>,
    core: Vec<Vec<String>>,
    subtle: Vec<Vec<String>>,
    filler: Vec<String>,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(*CONSONANTS.choose(rng).expect("non-empty") as char);
        w.push(*VOWELS.choose(rng).expect("non-empty") as char);
    }
    w
}

impl SyntheticWorld {
    pub fn new(spec: WorldSpec) -> Result<Self> {
        let task = Arc::new(TaskSpec::new(
            "synthetic",
            spec.description.clone(),
            spec.labels.iter().map(|l| l.name.clone()),
        )?);
        for profile in &spec.labels {
            if profile.core_words < spec.easy_core.max(1) {
                return Err(Error::InvalidTask(format!(
                    "label {} needs at least {} core words",
                    profile.name, spec.easy_core
                )));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut used = HashSet::new();
        let mut fresh = |n: usize, rng: &mut ChaCha8Rng| -> Vec<String> {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let w = pseudo_word(rng);
                if used.insert(w.clone()) {
                    out.push(w);
                }
            }
            out
        };
        let core = spec.labels.iter().map(|l| fresh(l.core_words, &mut rng)).collect();
        let subtle = spec.labels.iter().map(|l| fresh(l.subtle_words, &mut rng)).collect();
        let filler = fresh(spec.filler_words, &mut rng);
        Ok(Self {
            spec,
            task,
            core,
            subtle,
            filler,
        })
    }

    pub fn standard() -> Self {
        Self::new(WorldSpec::standard()).expect("standard world is valid")
    }

    pub fn separable() -> Self {
        Self::new(WorldSpec::separable()).expect("separable world is valid")
    }

    pub fn task(&self) -> &Arc<TaskSpec> {
        &self.task
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn core_words(&self, label: usize) -> &[String] {
        &self.core[label]
    }

    pub fn subtle_words(&self, label: usize) -> &[String] {
        &self.subtle[label]
    }

    fn fill(&self, mut words: Vec<String>, rng: &mut impl Rng) -> String {
        for _ in 0..self.spec.filler_per_text {
            if let Some(f) = self.filler.choose(rng) {
                words.push(f.clone());
            }
        }
        words.shuffle(rng);
        words.join(" ")
    }

    pub fn easy_text(&self, label: usize, rng: &mut impl Rng) -> String {
        let words = self.core[label]
            .choose_multiple(rng, self.spec.easy_core)
            .cloned()
            .collect();
        self.fill(words, rng)
    }

    pub fn hard_text(&self, label: usize, rng: &mut impl Rng) -> String {
        let pool = if self.subtle[label].is_empty() {
            &self.core[label]
        } else {
            &self.subtle[label]
        };
        let mut words: Vec<String> = pool.choose_multiple(rng, self.spec.hard_subtle).cloned().collect();
        let others: Vec<usize> = (0..self.task.num_labels()).filter(|&l| l != label).collect();
        for _ in 0..self.spec.hard_distractors {
            if let Some(&other) = others.choose(rng) {
                if let Some(w) = self.core[other].choose(rng) {
                    words.push(w.clone());
                }
            }
        }
        self.fill(words, rng)
    }

    /// `n_per_label` texts per label, half easy and half hard (easy gets the odd one).
    pub fn sample_set(&self, n_per_label: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::with_capacity(n_per_label * self.task.num_labels());
        for label in 0..self.task.num_labels() {
            for i in 0..n_per_label {
                let text = if i < n_per_label.div_ceil(2) {
                    self.easy_text(label, &mut rng)
                } else {
                    self.hard_text(label, &mut rng)
                };
                samples.push(LabeledSample {
                    text,
                    label: self.task.label(label).to_string(),
                    origin: Origin::Seed,
                    created_step: 0,
                });
            }
        }
        Dataset::new(self.task.clone(), samples).expect("world labels belong to the task")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSample {
    pub text: String,
    pub label: usize,
    pub hard: bool,
}

/// Draws `n_easy` easy texts and `n_hard` hard texts. Easy labels are dealt
/// from a shuffled deck of all labels, reshuffled when empty, so each is
/// uniform on its own and the counts stay balanced. Hard labels are drawn with
/// probability proportional to `1 - F1` (uniform when every label has F1 = 1).
/// Texts within the batch are distinct.
pub fn synthetic_generate(
    world: &SyntheticWorld,
    f1_table: &[f64],
    n_easy: usize,
    n_hard: usize,
    rng: &mut impl Rng,
) -> Vec<SyntheticSample> {
    let labels = world.task().num_labels();
    assert_eq!(f1_table.len(), labels, "difficulty table must cover every label");
    let weights: Vec<f64> = f1_table.iter().map(|f| (1.0 - f).clamp(0.0, 1.0)).collect();
    let hard_dist = WeightedIndex::new(&weights).ok();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n_easy + n_hard);
    let mut deck: Vec<usize> = Vec::new();
    for hard in std::iter::repeat_n(false, n_easy).chain(std::iter::repeat_n(true, n_hard)) {
        let label = match (&hard_dist, hard) {
            (Some(dist), true) => dist.sample(rng),
            (None, true) => rng.random_range(0..labels),
            (_, false) => {
                if deck.is_empty() {
                    deck = (0..labels).collect();
                    deck.shuffle(rng);
                }
                deck.pop().expect("refilled above")
            }
        };
        let mut text = String::new();
        for _ in 0..64 {
            text = if hard {
                world.hard_text(label, rng)
            } else {
                world.easy_text(label, rng)
            };
            if !seen.contains(&text) {
                break;
            }
        }
        if !seen.insert(text.clone()) {
            continue;
        }
        out.push(SyntheticSample { text, label, hard });
    }
    out
}

/// Per-label hit/miss counts, split by easy and hard origin.
#[derive(Debug, Clone, Default, PartialEq)]
struct Counts {
    tp: f64,
    fp: f64,
    fn_: f64,
}

impl Counts {
    fn f1(&self) -> Option<f64> {
        let den = 2.0 * self.tp + self.fp + self.fn_;
        (den > 0.0).then(|| 2.0 * self.tp / den)
    }

    fn decay(&mut self, keep: f64) {
        self.tp *= keep;
        self.fp *= keep;
        self.fn_ *= keep;
    }
}

/// Adds what the teacher can see of a partition to `counts[stratum][label]`.
/// Stratum 1 holds hard teacher samples, stratum 0 everything else.
fn tally(task: &TaskSpec, partition: &Partition, hide_correct: bool, counts: &mut [Vec<Counts>; 2]) {
    let stratum = |origin: Origin| usize::from(origin == Origin::TeacherHard);
    if !hide_correct {
        for j in &partition.correct {
            if let Some(g) = task.label_index(&j.sample.label) {
                counts[stratum(j.sample.origin)][g].tp += 1.0;
            }
        }
    }
    // A wrong-side sample whose predicted label matches gold was merely
    // unconfident; the teacher reads it as a hit.
    for j in &partition.wrong {
        let s = stratum(j.sample.origin);
        let gold = task.label_index(&j.sample.label);
        let pred = task.label_index(&j.predicted);
        match (gold, pred) {
            (Some(g), Some(p)) if g == p => counts[s][g].tp += 1.0,
            _ => {
                if let Some(g) = gold {
                    counts[s][g].fn_ += 1.0;
                }
                if let Some(p) = pred {
                    counts[s][p].fp += 1.0;
                }
            }
        }
    }
}

/// Oracle teacher for closed-loop experiments without an LLM.
#[derive(Debug, Clone)]
pub struct SyntheticTeacher {
    world: Arc<SyntheticWorld>,
    table: Vec<f64>,
    counts: [Vec<Counts>; 2],
    rng: ChaCha8Rng,
    gold: HashMap<String, usize>,
    forgetting: f64,
    merged_mislabel_rate: f64,
}

impl SyntheticTeacher {
    pub fn new(world: Arc<SyntheticWorld>, seed: u64) -> Self {
        let labels = world.task().num_labels();
        Self {
            world,
            table: vec![0.5; labels],
            counts: [vec![Counts::default(); labels], vec![Counts::default(); labels]],
            rng: ChaCha8Rng::seed_from_u64(seed),
            gold: HashMap::new(),
            forgetting: 0.0,
            merged_mislabel_rate: 0.25,
        }
    }

    /// Share of the accumulated counts forgotten at every analysis. The
    /// default 0 keeps every partition the teacher has seen.
    pub fn with_forgetting(mut self, rate: f64) -> Self {
        self.forgetting = rate.clamp(0.0, 1.0);
        self
    }

    /// Probability that a hard sample is deliberately mislabeled when
    /// generation and labeling share one conversation.
    pub fn with_merged_mislabel_rate(mut self, rate: f64) -> Self {
        self.merged_mislabel_rate = rate.clamp(0.0, 1.0);
        self
    }

    pub fn world(&self) -> &Arc<SyntheticWorld> {
        &self.world
    }

    /// Current per-label F1 estimates, in task label order. Each is the mean
    /// of the easy-sample and hard-sample F1 where both have been observed.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    fn transcript(kind: CallKind, prompt: String, reply: String) -> ChatTranscript {
        let mut t = ChatTranscript::new(kind);
        t.prompt_tokens = token_count(&prompt);
        t.completion_tokens = token_count(&reply);
        t.messages.push(Message::new(Role::User, prompt));
        t.messages.push(Message::new(Role::Assistant, reply));
        t
    }

    fn generate(&mut self, request: GenerationRequest) -> Vec<SyntheticSample> {
        let batch = synthetic_generate(&self.world, &self.table, request.n_easy, request.n_hard, &mut self.rng);
        for s in &batch {
            self.gold.insert(s.text.clone(), s.label);
        }
        batch
    }
}

fn numbered<'a>(items: impl Iterator<Item = &'a str>) -> String {
    items
        .enumerate()
        .map(|(i, t)| format!("{}. {t}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Teacher for SyntheticTeacher {
    fn analyze_weakness(
        &mut self,
        task: &TaskSpec,
        partition: &Partition,
        hide_correct: bool,
    ) -> Result<(WeaknessReport, ChatTranscript)> {
        for stratum in &mut self.counts {
            stratum.iter_mut().for_each(|c| c.decay(1.0 - self.forgetting));
        }
        tally(task, partition, hide_correct, &mut self.counts);
        for k in 0..task.num_labels() {
            let seen: Vec<f64> = self.counts.iter().filter_map(|s| s[k].f1()).collect();
            if !seen.is_empty() {
                self.table[k] = seen.iter().sum::<f64>() / seen.len() as f64;
            }
        }
        let mut order: Vec<usize> = (0..task.num_labels()).collect();
        order.sort_by(|&a, &b| self.table[a].total_cmp(&self.table[b]));
        let pattern = format!(
            "The student struggles most with: {}",
            order
                .iter()
                .map(|&k| format!("{} (F1 {:.2})", task.label(k), self.table[k]))
                .collect::<Vec<_>>()
                .join(", ")
        );
        let visible = partition
            .wrong
            .iter()
            .chain(if hide_correct { &[][..] } else { &partition.correct[..] });
        let prompt = visible
            .map(|j| format!("- \"{}\" (true label: {}; student predicted: {})", j.sample.text, j.sample.label, j.predicted))
            .collect::<Vec<_>>()
            .join("\n");
        Ok((
            WeaknessReport::new(pattern.clone()),
            Self::transcript(CallKind::Weakness, prompt, pattern),
        ))
    }

    fn generate_texts(
        &mut self,
        _task: &TaskSpec,
        report: &WeaknessReport,
        request: GenerationRequest,
    ) -> Result<(GeneratedBatch, ChatTranscript)> {
        let samples = self.generate(request);
        let mut batch = GeneratedBatch::default();
        for s in samples {
            let g = GeneratedText::new(s.text);
            if s.hard {
                batch.hard.push(g);
            } else {
                batch.easy.push(g);
            }
        }
        let prompt = format!(
            "Write {} easy and {} challenging texts for: {}",
            request.n_easy, request.n_hard, report.pattern
        );
        let reply = numbered(batch.easy.iter().chain(&batch.hard).map(|g| g.text.as_str()));
        let transcript = Self::transcript(CallKind::Generate, prompt, reply);
        if batch.len() < request.total() {
            return Err(Error::GenerationShortfall {
                requested: request.total(),
                received: batch.len(),
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
        let labels: Vec<Option<String>> = texts
            .iter()
            .map(|t| self.gold.get(t).map(|&k| task.label(k).to_string()))
            .collect();
        let prompt = format!(
            "Classify each text. Possible labels: {}\n{}",
            task.labels().join(", "),
            numbered(texts.iter().map(String::as_str))
        );
        let reply = numbered(labels.iter().map(|l| l.as_deref().unwrap_or("unknown")));
        Ok((labels, Self::transcript(CallKind::Label, prompt, reply)))
    }

    fn generate_labeled(
        &mut self,
        task: &TaskSpec,
        report: &WeaknessReport,
        request: GenerationRequest,
    ) -> Result<(LabeledGeneration, ChatTranscript)> {
        let samples = self.generate(request);
        let n = task.num_labels();
        let mut out = LabeledGeneration::default();
        for s in samples {
            let mut label = s.label;
            if s.hard && self.rng.random_bool(self.merged_mislabel_rate) {
                label = (label + self.rng.random_range(1..n)) % n;
            }
            let item = (GeneratedText::new(s.text), task.label(label).to_string());
            if s.hard {
                out.hard.push(item);
            } else {
                out.easy.push(item);
            }
        }
        let prompt = format!(
            "Write {} easy and {} challenging labeled samples for: {}",
            request.n_easy, request.n_hard, report.pattern
        );
        let reply = numbered(
            out.easy
                .iter()
                .chain(&out.hard)
                .map(|(g, l)| format!("[{l}] {}", g.text))
                .collect::<Vec<_>>()
                .iter()
                .map(String::as_str),
        );
        Ok((out, Self::transcript(CallKind::GenerateMerged, prompt, reply)))
    }

    fn rephrase(&mut self, task: &TaskSpec, sample: &LabeledSample, n: usize) -> Result<(Vec<String>, ChatTranscript)> {
        let label = task
            .label_index(&sample.label)
            .ok_or_else(|| Error::InvalidSample(format!("label {:?} not in task", sample.label)))?;
        let mut variants = Vec::with_capacity(n);
        let mut seen = HashSet::from([sample.text.clone()]);
        for _ in 0..n * 16 {
            if variants.len() == n {
                break;
            }
            let text = self.world.easy_text(label, &mut self.rng);
            if seen.insert(text.clone()) {
                variants.push(text);
            }
        }
        let prompt = format!("Rephrase into {n} texts keeping the label \"{}\": {}", sample.label, sample.text);
        let reply = numbered(variants.iter().map(String::as_str));
        Ok((variants, Self::transcript(CallKind::Rephrase, prompt, reply)))
    }
}
