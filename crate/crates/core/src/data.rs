//! Tasks, labeled samples and line-delimited dataset files.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A classification task: its label vocabulary and the description shown to the teacher.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTask")]
pub struct TaskSpec {
    name: String,
    description: String,
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct RawTask {
    name: String,
    #[serde(default)]
    description: String,
    labels: Vec<String>,
}

impl TryFrom<RawTask> for TaskSpec {
    type Error = Error;

    fn try_from(raw: RawTask) -> Result<Self> {
        TaskSpec::new(raw.name, raw.description, raw.labels)
    }
}

impl TaskSpec {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        description: impl Into<String>,
        labels: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let labels: Vec<String> = labels
            .into_iter()
            .map(|l| l.into().trim().to_string())
            .collect();
        if labels.len() < 2 {
            return Err(Error::InvalidTask(format!(
                "a task needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(Error::InvalidTask("empty label".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidTask(format!("duplicate label {label:?}")));
            }
        }
        Ok(Self {
            name: name.into(),
            description: description.into(),
            labels,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Exact lookup after trimming surrounding whitespace.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        let label = label.trim();
        self.labels.iter().position(|l| l == label)
    }

    /// Case-insensitive lookup used for teacher replies.
    pub fn match_label(&self, raw: &str) -> Option<usize> {
        let raw = raw.trim();
        self.label_index(raw)
            .or_else(|| self.labels.iter().position(|l| l.eq_ignore_ascii_case(raw)))
            .or_else(|| {
                let lowered = raw.to_lowercase();
                self.labels.iter().position(|l| l.to_lowercase() == lowered)
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    Seed,
    TeacherHard,
    TeacherEasy,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub text: String,
    pub label: String,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default)]
    pub created_step: u64,
}

impl LabeledSample {
    pub fn new(
        text: impl Into<String>,
        label: impl Into<String>,
        origin: Origin,
        created_step: u64,
    ) -> Result<Self> {
        let sample = Self {
            text: text.into(),
            label: label.into().trim().to_string(),
            origin,
            created_step,
        };
        sample.check()?;
        Ok(sample)
    }

    pub fn seed(text: impl Into<String>, label: impl Into<String>) -> Result<Self> {
        Self::new(text, label, Origin::Seed, 0)
    }

    fn check(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::InvalidSample("empty text".into()));
        }
        if matches!(self.origin, Origin::TeacherHard | Origin::TeacherEasy) && self.created_step == 0 {
            return Err(Error::InvalidSample(format!(
                "teacher-generated sample {:?} must have created_step > 0",
                self.text
            )));
        }
        Ok(())
    }
}

/// An ordered list of samples whose labels all belong to one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    task: Arc<TaskSpec>,
    samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(task: Arc<TaskSpec>, samples: Vec<LabeledSample>) -> Result<Self> {
        for (i, sample) in samples.iter().enumerate() {
            if task.label_index(&sample.label).is_none() {
                return Err(Error::UnknownLabel {
                    line: i + 1,
                    label: sample.label.clone(),
                });
            }
            sample.check()?;
        }
        Ok(Self { task, samples })
    }

    pub fn empty(task: Arc<TaskSpec>) -> Self {
        Self {
            task,
            samples: Vec::new(),
        }
    }

    pub fn task(&self) -> &Arc<TaskSpec> {
        &self.task
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<LabeledSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Gold label indices in sample order.
    pub fn label_indices(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| self.task.label_index(&s.label).expect("validated on construction"))
            .collect()
    }

    /// A new dataset holding `self` followed by `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().cloned());
        Dataset::new(self.task.clone(), samples)
    }
}

/// Reads one JSON record per line. Blank lines are skipped; unknown fields are ignored.
pub fn load_dataset(path: impl AsRef<Path>, task: Arc<TaskSpec>) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut sample: LabeledSample =
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        sample.label = sample.label.trim().to_string();
        if task.label_index(&sample.label).is_none() {
            return Err(Error::UnknownLabel {
                line: line_no,
                label: sample.label,
            });
        }
        sample.check().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(Dataset { task, samples })
}

pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    write_samples(path, data.samples())
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[LabeledSample]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for sample in samples {
        serde_json::to_writer(&mut out, sample)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Draws exactly `k` samples per label, uniformly without replacement.
/// The selection keeps the original file order.
pub fn few_shot_sample(full: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    let task = full.task();
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); task.num_labels()];
    for (i, label) in full.label_indices().into_iter().enumerate() {
        by_label[label].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(k * task.num_labels());
    for (label, pool) in by_label.iter().enumerate() {
        if pool.len() < k {
            return Err(Error::InsufficientData {
                label: task.label(label).to_string(),
                available: pool.len(),
                requested: k,
            });
        }
        chosen.extend(index::sample(&mut rng, pool.len(), k).into_iter().map(|j| pool[j]));
    }
    chosen.sort_unstable();
    let samples = chosen.into_iter().map(|i| full.samples[i].clone()).collect();
    Ok(Dataset {
        task: task.clone(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentiment() -> Arc<TaskSpec> {
        Arc::new(TaskSpec::new("sentiment", "product review polarity", ["positive", "negative"]).unwrap())
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(file, "{line}").unwrap();
        }
        file
    }

    #[test]
    fn task_rejects_duplicates_and_short_vocab() {
        assert!(TaskSpec::new("t", "", ["a"]).is_err());
        assert!(TaskSpec::new("t", "", ["a", "a"]).is_err());
        assert!(TaskSpec::new("t", "", ["a", " "]).is_err());
        let task = TaskSpec::new("t", "", [" a ", "b"]).unwrap();
        assert_eq!(task.label_index("a"), Some(0));
        assert_eq!(task.label_index(" b\n"), Some(1));
        assert_eq!(task.label_index("A"), None);
        assert_eq!(task.match_label("A"), Some(0));
    }

    #[test]
    fn loads_in_file_order() {
        let file = write_lines(&[
            r#"{"text":"great phone","label":"positive"}"#,
            r#"{"text":"broke in a day","label":"negative","extra":1}"#,
        ]);
        let data = load_dataset(file.path(), sentiment()).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.samples()[0].text, "great phone");
        assert_eq!(data.samples()[1].label, "negative");
        assert_eq!(data.samples()[1].origin, Origin::Seed);
    }

    #[test]
    fn empty_file_gives_empty_dataset() {
        let file = write_lines(&[]);
        assert!(load_dataset(file.path(), sentiment()).unwrap().is_empty());
    }

    #[test]
    fn unknown_label_names_label_and_line() {
        let file = write_lines(&[
            r#"{"text":"fine","label":"positive"}"#,
            r#"{"text":"meh","label":"neutral"}"#,
        ]);
        match load_dataset(file.path(), sentiment()) {
            Err(Error::UnknownLabel { line, label }) => {
                assert_eq!(line, 2);
                assert_eq!(label, "neutral");
            }
            other => panic!("expected unknown label, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_carries_line_number() {
        let file = write_lines(&[r#"{"text":"fine","label":"positive"}"#, "{not json"]);
        match load_dataset(file.path(), sentiment()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn teacher_origin_requires_positive_step() {
        let file = write_lines(&[r#"{"text":"x","label":"positive","origin":"teacher_hard"}"#]);
        assert!(load_dataset(file.path(), sentiment()).is_err());
        assert!(LabeledSample::new("x", "positive", Origin::TeacherEasy, 3).is_ok());
    }

    fn hundred() -> Dataset {
        let task = sentiment();
        let samples = (0..100)
            .map(|i| {
                let label = if i % 3 == 0 { "negative" } else { "positive" };
                LabeledSample::seed(format!("text {i}"), label).unwrap()
            })
            .collect();
        Dataset::new(task, samples).unwrap()
    }

    #[test]
    fn few_shot_one_per_label() {
        let shot = few_shot_sample(&hundred(), 1, 1).unwrap();
        assert_eq!(shot.len(), 2);
        let mut labels = shot.label_indices();
        labels.sort();
        assert_eq!(labels, vec![0, 1]);
    }

    #[test]
    fn few_shot_is_deterministic() {
        let a = few_shot_sample(&hundred(), 3, 7).unwrap();
        let b = few_shot_sample(&hundred(), 3, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn few_shot_insufficient_data() {
        let task = sentiment();
        let samples = vec![
            LabeledSample::seed("a", "positive").unwrap(),
            LabeledSample::seed("b", "positive").unwrap(),
            LabeledSample::seed("c", "positive").unwrap(),
            LabeledSample::seed("d", "negative").unwrap(),
            LabeledSample::seed("e", "negative").unwrap(),
        ];
        let data = Dataset::new(task, samples).unwrap();
        match few_shot_sample(&data, 3, 1) {
            Err(Error::InsufficientData { label, available, .. }) => {
                assert_eq!(label, "negative");
                assert_eq!(available, 2);
            }
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn origin() -> impl Strategy<Value = Origin> {
            prop_oneof![
                Just(Origin::Seed),
                Just(Origin::TeacherHard),
                Just(Origin::TeacherEasy),
                Just(Origin::Baseline),
            ]
        }

        proptest! {
            #[test]
            fn save_load_round_trip(rows in prop::collection::vec((".*[^\\s].*", any::<bool>(), origin(), 1u64..1000), 0..20)) {
                let task = sentiment();
                let samples: Vec<_> = rows
                    .into_iter()
                    .map(|(text, pos, origin, step)| {
                        LabeledSample::new(text, if pos { "positive" } else { "negative" }, origin, step).unwrap()
                    })
                    .collect();
                let data = Dataset::new(task.clone(), samples).unwrap();
                let file = tempfile::NamedTempFile::new().unwrap();
                save_dataset(file.path(), &data).unwrap();
                let back = load_dataset(file.path(), task).unwrap();
                prop_assert_eq!(back, data);
            }

            #[test]
            fn few_shot_exact_counts(k in 1usize..5, seed in any::<u64>()) {
                let shot = few_shot_sample(&hundred(), k, seed).unwrap();
                prop_assert_eq!(shot.len(), 2 * k);
                let pos = shot.label_indices().iter().filter(|&&l| l == 0).count();
                prop_assert_eq!(pos, k);
            }
        }
    }
}
