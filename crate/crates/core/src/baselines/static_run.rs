use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::data::{Dataset, Origin};
use crate::engine::{minibatch, persist_run, Evaluator};
use crate::error::{Error, Result};
use crate::harness::trace::{EventKind, RunTrace, StepRecord};
use crate::student::{EncodedBatch, StudentModel, TrainParams};

#[derive(Debug, Clone, Default)]
pub struct StaticOptions<'a> {
    pub method: String,
    pub eval: Option<&'a Dataset>,
    /// Tokens spent producing the augmented set; reported on every step.
    pub tokens: u64,
    pub run_dir: Option<PathBuf>,
}

/// Trains a fresh student for `config.num_steps` steps on minibatches drawn
/// uniformly from `augmented`. The trace uses the same schema as a
/// distillation run, with every step of kind `Static`.
pub fn run_static_baseline(
    config: &RunConfig,
    augmented: &Dataset,
    options: StaticOptions<'_>,
) -> Result<(StudentModel, RunTrace)> {
    config.validate()?;
    if augmented.is_empty() {
        return Err(Error::EmptyInput("augmented dataset is empty".into()));
    }
    let task = augmented.task().clone();
    let evaluator = options.eval.map(|d| Evaluator::new(d, config.feature_dim)).transpose()?;
    let params = TrainParams {
        learning_rate: config.learning_rate,
        clip_norm: config.clip_norm,
        l2: config.l2,
    };
    let mut counts = vec![0u64; task.num_labels()];
    for (sample, label) in augmented.samples().iter().zip(augmented.label_indices()) {
        if sample.origin != Origin::Seed {
            counts[label] += 1;
        }
    }
    let method = if options.method.is_empty() {
        "static".to_string()
    } else {
        options.method.clone()
    };
    let mut trace = RunTrace::new(method, config.seed, task.labels().to_vec());
    let mut model = StudentModel::zeros(task.clone(), config.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    trace.initial_eval = evaluator.as_ref().map(|e| e.snapshot(&model)).transpose()?;
    for step in 1..=config.num_steps {
        let batch = minibatch(augmented.samples(), config.batch_size, &mut rng);
        let encoded = EncodedBatch::new(&task, &batch, config.feature_dim)?;
        let loss = model.apply_step(&encoded, &params)?;
        let eval = if step % config.eval_every == 0 || step == config.num_steps {
            evaluator.as_ref().map(|e| e.snapshot(&model)).transpose()?
        } else {
            None
        };
        trace.steps.push(StepRecord {
            step,
            epoch: (step - 1) / config.steps_per_epoch,
            kind: EventKind::Static,
            loss,
            batch_index: None,
            model_version: model.version(),
            identify_version: None,
            wrong: None,
            correct: None,
            cumulative_tokens: options.tokens,
            generated_counts: counts.clone(),
            eval,
        });
    }
    if let Some(dir) = &options.run_dir {
        persist_run(dir, &model, &trace, augmented.samples())?;
    }
    Ok((model, trace))
}
