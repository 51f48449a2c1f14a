//! Multi-seed experiments and their mean/std summary.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{auggpt_augment, eda_dataset, run_static_baseline, EdaConfig, StaticOptions};
use crate::config::RunConfig;
use crate::data::{few_shot_sample, Dataset};
use crate::engine::{self, RunOptions};
use crate::error::{Error, Result};
use crate::harness::trace::RunTrace;
use crate::student::{evaluate, StudentModel};
use crate::teacher::Teacher;

pub const AGGREGATE_FILE: &str = "aggregate.json";

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub macro_f1: Option<f64>,
    pub tokens: u64,
    /// Teacher-generated (or augmented) samples the student saw.
    pub generated: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub method: String,
    pub seeds: Vec<SeedOutcome>,
    /// Macro F1 of the completed seeds, in seed order.
    pub macro_f1: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl AggregateResult {
    /// Fails only when every seed aborted.
    pub fn from_outcomes(method: impl Into<String>, seeds: Vec<SeedOutcome>) -> Result<Self> {
        let macro_f1: Vec<f64> = seeds.iter().filter_map(|s| s.macro_f1).collect();
        if macro_f1.is_empty() {
            return Err(Error::EmptyInput("no seed completed".into()));
        }
        let (mean, std) = mean_std(&macro_f1);
        Ok(Self {
            method: method.into(),
            seeds,
            macro_f1,
            mean,
            std,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    EvoKd,
    /// Static run on the seed data alone.
    NoAugment,
    Eda(EdaConfig),
    AugGpt { variants: usize },
}

impl Method {
    pub fn needs_teacher(&self) -> bool {
        matches!(self, Method::EvoKd | Method::AugGpt { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub config: RunConfig,
    pub method: Method,
    /// Full training data the few-shot seeds are drawn from.
    pub pool: &'a Dataset,
    pub shots: usize,
    pub test: &'a Dataset,
    /// Per-seed run directories and the aggregate report go here.
    pub out: Option<PathBuf>,
}

impl Experiment<'_> {
    pub fn method_name(&self) -> String {
        match &self.method {
            Method::EvoKd => engine::method_name(&self.config),
            Method::NoAugment => "no_augment".into(),
            Method::Eda(_) => "eda".into(),
            Method::AugGpt { .. } => "auggpt".into(),
        }
    }

    fn seed_dir(&self, seed: u64) -> Option<PathBuf> {
        self.out.as_ref().map(|o| o.join(format!("seed_{seed}")))
    }
}

/// Builds the teacher for one seed.
pub type TeacherFactory<'a> = dyn FnMut(u64) -> Result<Box<dyn Teacher>> + 'a;

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub model: StudentModel,
    pub trace: RunTrace,
    pub macro_f1: f64,
}

/// One seed: draw the few-shot data, train with the chosen method, score on the test set.
pub fn run_seed(exp: &Experiment<'_>, seed: u64, teachers: &mut TeacherFactory<'_>) -> Result<SeedRun> {
    let config = RunConfig {
        seed,
        ..exp.config.clone()
    };
    let seed_data = few_shot_sample(exp.pool, exp.shots, seed)?;
    let (model, trace) = run_method(
        &config,
        &exp.method,
        &seed_data,
        MethodOptions {
            name: exp.method_name(),
            eval: Some(exp.test),
            run_dir: exp.seed_dir(seed),
        },
        teachers,
    )?;
    let macro_f1 = evaluate(&model, exp.test)?.macro_f1;
    Ok(SeedRun { model, trace, macro_f1 })
}

#[derive(Debug, Clone, Default)]
pub struct MethodOptions<'a> {
    /// Method name written to the trace.
    pub name: String,
    pub eval: Option<&'a Dataset>,
    pub run_dir: Option<PathBuf>,
}

/// Runs one method on fixed seed data with `config.seed`.
pub fn run_method(
    config: &RunConfig,
    method: &Method,
    seed_data: &Dataset,
    options: MethodOptions<'_>,
    teachers: &mut TeacherFactory<'_>,
) -> Result<(StudentModel, RunTrace)> {
    let seed = config.seed;
    let statically = |augmented: Dataset, tokens: u64| {
        run_static_baseline(
            config,
            &augmented,
            StaticOptions {
                method: options.name.clone(),
                eval: options.eval,
                tokens,
                run_dir: options.run_dir.clone(),
            },
        )
    };
    match method {
        Method::EvoKd => {
            let mut teacher = teachers(seed)?;
            let outcome = engine::run(
                config,
                &mut *teacher,
                seed_data,
                RunOptions {
                    eval: options.eval,
                    run_dir: options.run_dir.clone(),
                    ..RunOptions::default()
                },
            )?;
            Ok((outcome.model, outcome.trace))
        }
        Method::NoAugment => statically(seed_data.clone(), 0),
        Method::Eda(cfg) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let variants = eda_dataset(seed_data, cfg, &mut rng)?;
            statically(seed_data.concat(&variants)?, 0)
        }
        Method::AugGpt { variants } => {
            let mut teacher = teachers(seed)?;
            let augmented = auggpt_augment(seed_data, &mut *teacher, *variants)?;
            let tokens = augmented.total_tokens();
            let (model, mut trace) = statically(seed_data.concat(&augmented.data)?, tokens)?;
            for note in augmented.notes {
                trace.note(note);
            }
            Ok((model, trace))
        }
    }
}

/// Runs every seed in order; aborted seeds are recorded and left out of the mean.
pub fn multi_seed_run(
    exp: &Experiment<'_>,
    seeds: &[u64],
    teachers: &mut TeacherFactory<'_>,
) -> Result<AggregateResult> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput("no seeds given".into()));
    }
    let mut outcomes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let outcome = match run_seed(exp, seed, teachers) {
            Ok(run) => SeedOutcome {
                seed,
                macro_f1: Some(run.macro_f1),
                tokens: run.trace.total_tokens(),
                generated: run.trace.final_generated_counts().iter().sum(),
                aborted: None,
            },
            Err(e) => {
                tracing::error!(seed, error = %e, "seed aborted");
                SeedOutcome {
                    seed,
                    macro_f1: None,
                    tokens: 0,
                    generated: 0,
                    aborted: Some(e.to_string()),
                }
            }
        };
        outcomes.push(outcome);
    }
    let result = AggregateResult::from_outcomes(exp.method_name(), outcomes)?;
    if let Some(out) = &exp.out {
        std::fs::create_dir_all(out)?;
        result.save(out.join(AGGREGATE_FILE))?;
    }
    Ok(result)
}
