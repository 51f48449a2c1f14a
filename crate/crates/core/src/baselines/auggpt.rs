//! Static rephrasing: every seed sample is rewritten `n` times by the teacher.

use crate::data::{Dataset, LabeledSample, Origin};
use crate::error::{Error, Result};
use crate::teacher::{ChatTranscript, Teacher};

#[derive(Debug, Clone)]
pub struct Augmentation {
    /// Variants only, in seed order, with origin `Baseline`.
    pub data: Dataset,
    pub transcripts: Vec<ChatTranscript>,
    /// Warnings about short or unusable replies and duplicates.
    pub notes: Vec<String>,
}

impl Augmentation {
    pub fn total_tokens(&self) -> u64 {
        self.transcripts.iter().map(ChatTranscript::total_tokens).sum()
    }
}

pub fn auggpt_augment(seed: &Dataset, teacher: &mut dyn Teacher, n: usize) -> Result<Augmentation> {
    if seed.is_empty() {
        return Err(Error::EmptyInput("nothing to rephrase".into()));
    }
    if n == 0 {
        return Err(Error::Config("variants per sample must be positive".into()));
    }
    let task = seed.task();
    let mut samples = Vec::with_capacity(seed.len() * n);
    let mut transcripts = Vec::with_capacity(seed.len());
    let mut notes = Vec::new();
    for (i, sample) in seed.samples().iter().enumerate() {
        let variants = match teacher.rephrase(task, sample, n) {
            Ok((variants, transcript)) => {
                transcripts.push(transcript);
                variants
            }
            Err(Error::TeacherParse(why)) => {
                notes.push(format!("seed {i}: unusable rephrase reply ({why}), no variants"));
                continue;
            }
            Err(e) => return Err(e),
        };
        if variants.len() < n {
            notes.push(format!("seed {i}: {} of {n} variants", variants.len()));
        }
        for text in variants {
            if text == sample.text {
                notes.push(format!("seed {i}: variant repeats the seed text, kept"));
            }
            samples.push(LabeledSample::new(text, sample.label.clone(), Origin::Baseline, 0)?);
        }
    }
    for note in &notes {
        tracing::warn!("{note}");
    }
    Ok(Augmentation {
        data: Dataset::new(task.clone(), samples)?,
        transcripts,
        notes,
    })
}
