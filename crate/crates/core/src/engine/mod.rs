//! The distillation loop.
//!
//! Setup trains a zero-initialised student on the seed data `D^0` (after an
//! optional warm-up on rephrased variants). Each loop step is then a Review
//! (one step on a batch drawn from the history), a Chat (the teacher writes
//! a new batch `D^i`, which is scored by the current model and then trained
//! on) or a Repeat (another step on the current batch).

pub mod history;
pub mod identify;
pub mod schedule;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::auggpt_augment;
use crate::config::{Ablation, RunConfig};
use crate::data::{write_samples, Dataset, LabeledSample, Origin, TaskSpec};
use crate::error::{Error, Result};
use crate::harness::trace::{ChatRecord, EvalSnapshot, EventKind, RunTrace, StepRecord};
use crate::student::{featurize, EncodedBatch, FeatureVector, Metrics, StudentModel, TrainParams};
use crate::teacher::{
    ChatTranscript, GenerationRequest, Partition, Teacher, WeaknessReport, FALLBACK_PATTERN,
};

pub use history::{BatchKind, DistillationBatch, History};
pub use identify::{identify, identify_samples};
pub use schedule::{batch_split, classify_step, Schedule, StepEvent};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRACE_FILE: &str = "trace.json";
pub const HISTORY_FILE: &str = "history.jsonl";

/// Lets an operator replace the weakness pattern before generation.
pub trait PatternEditor {
    /// `None` keeps the teacher's pattern.
    fn edit(&mut self, round: u64, report: &WeaknessReport) -> Option<String>;
}

/// A held-out set featurized once.
#[derive(Debug, Clone)]
pub struct Evaluator {
    labels: Vec<String>,
    rows: Vec<FeatureVector>,
    gold: Vec<usize>,
}

impl Evaluator {
    pub fn new(data: &Dataset, dim: usize) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyInput("evaluation dataset is empty".into()));
        }
        Ok(Self {
            labels: data.task().labels().to_vec(),
            rows: data.samples().iter().map(|s| featurize(&s.text, dim)).collect(),
            gold: data.label_indices(),
        })
    }

    pub fn metrics(&self, model: &StudentModel) -> Result<Metrics> {
        let predicted = self
            .rows
            .iter()
            .map(|x| Ok(model.predict_features(x)?.label_index))
            .collect::<Result<Vec<_>>>()?;
        Metrics::from_predictions(&self.labels, &self.gold, &predicted)
    }

    pub fn snapshot(&self, model: &StudentModel) -> Result<EvalSnapshot> {
        Ok(EvalSnapshot::from_metrics(&self.metrics(model)?, &self.labels))
    }
}

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Held-out set for periodic snapshots.
    pub eval: Option<&'a Dataset>,
    /// Checkpoint, trace and history are written here.
    pub run_dir: Option<PathBuf>,
    /// Checked before every step; when set the run persists and stops.
    pub stop: Option<Arc<AtomicBool>>,
    pub editor: Option<&'a mut dyn PatternEditor>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub model: StudentModel,
    pub trace: RunTrace,
    pub history: History,
}

pub fn method_name(config: &RunConfig) -> String {
    let mut name = String::from("evokd");
    for a in &config.ablations {
        name.push('+');
        name.push_str(a.as_str());
    }
    name
}

/// Up to `b` samples; larger sets are subsampled uniformly without replacement, order kept.
pub fn minibatch(samples: &[LabeledSample], b: usize, rng: &mut ChaCha8Rng) -> Vec<LabeledSample> {
    if samples.len() <= b {
        return samples.to_vec();
    }
    let mut picked = index::sample(rng, samples.len(), b).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| samples[i].clone()).collect()
}

/// Persists `model`, `trace` and the history samples into `dir`.
pub fn persist_run(
    dir: &std::path::Path,
    model: &StudentModel,
    trace: &RunTrace,
    samples: &[LabeledSample],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    model.save(dir.join(CHECKPOINT_FILE))?;
    trace.save(dir.join(TRACE_FILE))?;
    write_samples(dir.join(HISTORY_FILE), samples)
}

struct Run<'a, 't> {
    config: RunConfig,
    task: Arc<TaskSpec>,
    params: TrainParams,
    schedule: Schedule,
    teacher: &'t mut dyn Teacher,
    rng: ChaCha8Rng,
    model: StudentModel,
    history: History,
    trace: RunTrace,
    tokens: u64,
    counts: Vec<u64>,
    current: usize,
    current_encoded: Option<EncodedBatch>,
    partition: Partition,
    last_report: Option<WeaknessReport>,
    round: u64,
    evaluator: Option<Evaluator>,
    options: RunOptions<'a>,
}

/// Runs the full loop. On a teacher or numeric failure the last good model
/// and the trace so far are persisted (when a run directory is set) before
/// the error is returned.
pub fn run(
    config: &RunConfig,
    teacher: &mut dyn Teacher,
    seed_data: &Dataset,
    options: RunOptions<'_>,
) -> Result<RunOutcome> {
    config.validate()?;
    if seed_data.is_empty() {
        return Err(Error::EmptyInput("seed dataset is empty".into()));
    }
    let task = seed_data.task().clone();
    let evaluator = options.eval.map(|d| Evaluator::new(d, config.feature_dim)).transpose()?;
    let review = (!config.has(Ablation::NoReview)).then_some(config.review);
    let mut run = Run {
        config: config.clone(),
        task: task.clone(),
        params: TrainParams {
            learning_rate: config.learning_rate,
            clip_norm: config.clip_norm,
            l2: config.l2,
        },
        schedule: Schedule::new(config.chat, review),
        teacher,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        model: StudentModel::zeros(task.clone(), config.feature_dim),
        history: History::new(seed_data.samples().to_vec()),
        trace: RunTrace::new(method_name(config), config.seed, task.labels().to_vec()),
        tokens: 0,
        counts: vec![0; task.num_labels()],
        current: 0,
        current_encoded: None,
        partition: Partition::default(),
        last_report: None,
        round: 0,
        evaluator,
        options,
    };
    match run.execute() {
        Ok(()) => {
            run.persist()?;
            Ok(RunOutcome {
                model: run.model,
                trace: run.trace,
                history: run.history,
            })
        }
        Err(e) => {
            run.trace.aborted = Some(e.to_string());
            tracing::error!(error = %e, "run aborted");
            if let Err(persist_err) = run.persist() {
                tracing::error!(error = %persist_err, "could not persist aborted run");
            }
            Err(e)
        }
    }
}

impl Run<'_, '_> {
    fn execute(&mut self) -> Result<()> {
        if self.config.init_epochs > 0 {
            self.init_phase()?;
        }
        let seed = self.history.batches()[0].samples.clone();
        self.partition = identify_samples(&self.model, &seed, self.config.threshold)?;
        self.seed_training()?;
        self.trace.initial_eval = self.evaluate()?;

        let num_steps = self.config.num_steps;
        for step in 1..=num_steps {
            if self.stop_requested() {
                return Err(Error::Interrupted { step });
            }
            let event = self.schedule.classify(step);
            let record = match event.kind {
                EventKind::Review => self.review_step(step)?,
                EventKind::Chat => self.chat_step(step)?,
                _ => self.repeat_step(step)?,
            };
            self.trace.steps.push(record);
            if step % self.config.eval_every == 0 || step == num_steps {
                let snapshot = self.evaluate()?;
                if let Some(last) = self.trace.steps.last_mut() {
                    last.eval = snapshot;
                }
            }
            if step % self.config.checkpoint_every == 0 && step != num_steps {
                self.persist()?;
            }
        }
        Ok(())
    }

    fn stop_requested(&self) -> bool {
        self.options.stop.as_ref().is_some_and(|s| s.load(Ordering::SeqCst))
    }

    fn evaluate(&self) -> Result<Option<EvalSnapshot>> {
        self.evaluator.as_ref().map(|e| e.snapshot(&self.model)).transpose()
    }

    fn persist(&self) -> Result<()> {
        match &self.options.run_dir {
            Some(dir) => {
                let samples: Vec<LabeledSample> = self.history.samples().cloned().collect();
                persist_run(dir, &self.model, &self.trace, &samples)
            }
            None => Ok(()),
        }
    }

    fn train(&mut self, samples: &[LabeledSample]) -> Result<f64> {
        let batch = EncodedBatch::new(&self.task, samples, self.config.feature_dim)?;
        self.model.apply_step(&batch, &self.params)
    }

    fn record(&self, step: u64, kind: EventKind, loss: f64, batch_index: Option<usize>) -> StepRecord {
        StepRecord {
            step,
            epoch: step.saturating_sub(1) / self.config.steps_per_epoch,
            kind,
            loss,
            batch_index,
            model_version: self.model.version(),
            identify_version: None,
            wrong: None,
            correct: None,
            cumulative_tokens: self.tokens,
            generated_counts: self.counts.clone(),
            eval: None,
        }
    }

    /// Rephrases the seed data and warms the student up on seed plus variants.
    fn init_phase(&mut self) -> Result<()> {
        let seed = Dataset::new(self.task.clone(), self.history.batches()[0].samples.clone())?;
        let augmented = auggpt_augment(&seed, &mut *self.teacher, self.config.init_variants)?;
        for t in &augmented.transcripts {
            self.tokens += t.total_tokens();
        }
        for note in &augmented.notes {
            self.trace.note(note.clone());
        }
        let variants = augmented.data.into_samples();
        for chunk in variants.chunks(self.config.batch_size) {
            self.history.push(BatchKind::Init, None, chunk.to_vec(), Vec::new(), None, 0);
        }
        let pool: Vec<LabeledSample> = seed.samples().iter().chain(&variants).cloned().collect();
        let steps = self.config.init_epochs * self.config.steps_per_epoch;
        for n in 1..=steps {
            if self.stop_requested() {
                return Err(Error::Interrupted { step: 0 });
            }
            let batch = minibatch(&pool, self.config.batch_size, &mut self.rng);
            let loss = self.train(&batch)?;
            let record = self.record(n, EventKind::Init, loss, None);
            self.trace.warmup.push(record);
        }
        Ok(())
    }

    fn seed_training(&mut self) -> Result<()> {
        let seed = self.history.batches()[0].samples.clone();
        let offset = self.trace.warmup.last().map_or(0, |r| r.step);
        for (n, chunk) in seed.chunks(self.config.batch_size).enumerate() {
            let loss = self.train(chunk)?;
            let mut record = self.record(offset + n as u64 + 1, EventKind::Seed, loss, Some(0));
            if n == 0 {
                record.wrong = Some(self.partition.wrong.len());
                record.correct = Some(self.partition.correct.len());
            }
            self.trace.warmup.push(record);
        }
        Ok(())
    }

    fn review_step(&mut self, step: u64) -> Result<StepRecord> {
        let batch = self.history.pick_batch(&mut self.rng);
        let index = batch.index;
        let samples = batch.training_samples();
        let samples = minibatch(&samples, self.config.batch_size, &mut self.rng);
        let loss = self.train(&samples)?;
        Ok(self.record(step, EventKind::Review, loss, Some(index)))
    }

    fn repeat_step(&mut self, step: u64) -> Result<StepRecord> {
        let batch = &self.history.batches()[self.current];
        let loss = if batch.training_len() <= self.config.batch_size {
            if self.current_encoded.is_none() {
                self.current_encoded = Some(EncodedBatch::new(
                    &self.task,
                    &batch.training_samples(),
                    self.config.feature_dim,
                )?);
            }
            let encoded = self.current_encoded.as_ref().expect("just encoded");
            self.model.apply_step(encoded, &self.params)?
        } else {
            let samples = minibatch(&batch.training_samples(), self.config.batch_size, &mut self.rng);
            self.train(&samples)?
        };
        Ok(self.record(step, EventKind::Repeat, loss, Some(self.current)))
    }

    fn chat_step(&mut self, step: u64) -> Result<StepRecord> {
        self.round += 1;
        let round = self.round;
        let b = self.config.batch_size;
        let (n_easy, n_hard) = if self.config.has(Ablation::NoEasy) {
            (0, b)
        } else {
            batch_split(b)?
        };
        let mut transcripts: Vec<ChatTranscript> = Vec::new();

        // Weakness analysis.
        let analysis_skipped = self.partition.wrong.is_empty();
        let mut report = if analysis_skipped {
            let previous = self
                .last_report
                .clone()
                .unwrap_or_else(|| WeaknessReport::new(FALLBACK_PATTERN));
            self.trace.note(format!(
                "round {round}: no wrong samples in the last batch, reusing the previous pattern"
            ));
            WeaknessReport::new(previous.pattern)
        } else {
            self.analyze(round, &mut transcripts)?
        };
        if let Some(editor) = self.options.editor.as_deref_mut() {
            if let Some(pattern) = editor.edit(round, &report) {
                let pattern = pattern.trim().to_string();
                if !pattern.is_empty() && pattern != report.pattern {
                    report = WeaknessReport {
                        pattern,
                        edited_by_human: true,
                    };
                }
            }
        }
        let request = GenerationRequest {
            n_easy,
            n_hard,
            harder: analysis_skipped,
        };

        // Generation and labeling.
        let labeled = self.generate(&report, request, &mut transcripts)?;
        let produced = labeled.len();
        let mut samples = Vec::with_capacity(produced);
        for (text, label, hard) in labeled {
            let origin = if hard { Origin::TeacherHard } else { Origin::TeacherEasy };
            if let Some(k) = self.task.label_index(&label) {
                self.counts[k] += 1;
            }
            samples.push(LabeledSample::new(text, label, origin, step)?);
        }
        let padding = if samples.len() < b {
            let missing = b - samples.len();
            self.trace.note(format!(
                "round {round}: padded {missing} of {b} samples from history"
            ));
            self.history.draw_samples(missing, &mut self.rng)
        } else {
            Vec::new()
        };
        let padded = padding.len();

        let tokens: u64 = transcripts.iter().map(ChatTranscript::total_tokens).sum();
        self.tokens += tokens;
        self.trace.chats.push(ChatRecord {
            round,
            step,
            pattern: report.pattern.clone(),
            edited_by_human: report.edited_by_human,
            analysis_skipped,
            n_easy,
            n_hard,
            dropped: (n_easy + n_hard).saturating_sub(produced),
            padded,
            tokens,
            calls: transcripts.iter().map(|t| t.kind).collect(),
        });
        self.last_report = Some(report.clone());

        let index = self
            .history
            .push(BatchKind::Chat, Some(round), samples, padding, Some(report), step);
        self.current = index;
        let training = self.history.batches()[index].training_samples();
        let encoded = EncodedBatch::new(&self.task, &training, self.config.feature_dim)?;

        // Score the new batch with the model from before this update.
        let identify_version = self.model.version();
        self.partition = identify_samples(&self.model, &training, self.config.threshold)?;
        let loss = self.model.apply_step(&encoded, &self.params)?;
        self.current_encoded = Some(encoded);

        let mut record = self.record(step, EventKind::Chat, loss, Some(index));
        record.identify_version = Some(identify_version);
        record.wrong = Some(self.partition.wrong.len());
        record.correct = Some(self.partition.correct.len());
        Ok(record)
    }

    fn analyze(&mut self, round: u64, transcripts: &mut Vec<ChatTranscript>) -> Result<WeaknessReport> {
        let hide_correct = self.config.has(Ablation::NoCorrect);
        for attempt in 1..=2 {
            match self.teacher.analyze_weakness(&self.task, &self.partition, hide_correct) {
                Ok((report, transcript)) => {
                    transcripts.push(transcript);
                    return Ok(report);
                }
                Err(Error::TeacherParse(why)) => {
                    tracing::warn!(round, attempt, %why, "unusable weakness analysis");
                }
                Err(e) => return Err(e),
            }
        }
        self.trace.note(format!("round {round}: analysis unusable twice, using the fallback pattern"));
        Ok(WeaknessReport::new(FALLBACK_PATTERN))
    }

    /// `(text, label, hard)` triples, easy first.
    fn generate(
        &mut self,
        report: &WeaknessReport,
        request: GenerationRequest,
        transcripts: &mut Vec<ChatTranscript>,
    ) -> Result<Vec<(String, String, bool)>> {
        let round = self.round;
        if self.config.has(Ablation::NoSeparating) {
            let (generated, transcript) = self.teacher.generate_labeled(&self.task, report, request)?;
            transcripts.push(transcript);
            let mut out = Vec::with_capacity(generated.len());
            for (hard, items) in [(false, generated.easy), (true, generated.hard)] {
                for (text, label) in items {
                    out.push((text.text, label, hard));
                }
            }
            return Ok(out);
        }

        let batch = match self.teacher.generate_texts(&self.task, report, request) {
            Ok((batch, transcript)) => {
                transcripts.push(transcript);
                batch
            }
            Err(Error::GenerationShortfall {
                requested,
                received,
                partial,
                transcript,
            }) => {
                transcripts.push(*transcript);
                self.trace.note(format!(
                    "round {round}: teacher wrote {received} of {requested} texts after repair"
                ));
                *partial
            }
            Err(e) => return Err(e),
        };
        let texts = batch.texts();
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let (labels, transcript) = self.teacher.label_texts(&self.task, &texts)?;
        transcripts.push(transcript);
        let n_easy = batch.easy.len();
        let mut out = Vec::with_capacity(texts.len());
        for (i, (text, label)) in texts.into_iter().zip(labels).enumerate() {
            match label {
                Some(label) => out.push((text, label, i >= n_easy)),
                None => self.trace.note(format!("round {round}: dropped unlabeled text {text:?}")),
            }
        }
        Ok(out)
    }
}
