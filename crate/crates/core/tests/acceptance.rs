//! End-to-end acceptance checks. Runs as a plain binary and prints one line per criterion.

mod common;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use evokd::config::{Ablation, RunConfig, TeacherConfig};
use evokd::data::{few_shot_sample, Dataset, LabeledSample, Origin, TaskSpec};
use evokd::engine::{self, identify_samples, BatchKind, RunOptions, CHECKPOINT_FILE, HISTORY_FILE, TRACE_FILE};
use evokd::harness::{multi_seed_run, run_method, EventKind, Experiment, Method, MethodOptions, StubServer};
use evokd::student::{featurize, macro_f1, per_label_f1, EncodedBatch, StudentModel, TrainParams};
use evokd::teacher::{
    CallKind, ChatTeacher, FaultKind, FaultSpec, FixtureCall, FixtureManifest, Fixtures, GenerationRequest, Judged,
    LlmClient, Message, Partition, PromptTemplates, Role, ScriptedBackend, SyntheticTeacher, SyntheticWorld, Teacher,
};
use evokd::Error;
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

type Check = std::result::Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> std::result::Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Bench {
    world: Arc<SyntheticWorld>,
    pool: Dataset,
    test: Dataset,
}

impl Bench {
    fn new() -> Self {
        let world = Arc::new(SyntheticWorld::standard());
        let pool = world.sample_set(50, 555);
        let test = world.sample_set(100, 999);
        Self { world, pool, test }
    }

    fn teacher(&self, seed: u64) -> SyntheticTeacher {
        SyntheticTeacher::new(self.world.clone(), seed)
    }
}

/// The branch order of the main loop, written out directly.
fn brute_force_kind(step: u64, chat: u64, review: Option<u64>) -> EventKind {
    if review.is_some_and(|r| step.is_multiple_of(r)) {
        EventKind::Review
    } else if step.is_multiple_of(chat) {
        EventKind::Chat
    } else {
        EventKind::Repeat
    }
}

fn scheduler_oracle(bench: &Bench) -> Check {
    let start = Instant::now();
    let config = RunConfig {
        num_steps: 1250,
        seed: 1,
        ..RunConfig::default()
    };
    let seed_data = few_shot_sample(&bench.pool, 1, 1).map_err(|e| e.to_string())?;
    let out = engine::run(&config, &mut bench.teacher(1), &seed_data, RunOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(out.trace.steps.len() == 1250, || format!("{} steps recorded", out.trace.steps.len()))?;
    for (i, record) in out.trace.steps.iter().enumerate() {
        let step = i as u64 + 1;
        let expected = brute_force_kind(step, 40, Some(50));
        ensure(record.step == step && record.kind == expected, || {
            format!("step {step}: trace has {:?}, oracle {:?}", record.kind, expected)
        })?;
    }
    let reviews_at_200: Vec<u64> = (1..=6).map(|k| 200 * k).filter(|&s| s <= 1250).collect();
    for s in &reviews_at_200 {
        ensure(out.trace.steps[*s as usize - 1].kind == EventKind::Review, || format!("step {s} is not Review"))?;
    }
    let chats = out.trace.steps.iter().filter(|r| r.kind == EventKind::Chat).count();
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("1250 steps match, {chats} chats, Review at {reviews_at_200:?}, {elapsed:.2?}"))
}

fn batch_composition(bench: &Bench) -> Check {
    let seed_data = few_shot_sample(&bench.pool, 1, 1).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for no_easy in [false, true] {
        for b in 1..=16usize {
            let mut config = RunConfig {
                batch_size: b,
                num_steps: 120,
                feature_dim: 1 << 14,
                ..RunConfig::default()
            };
            if no_easy {
                config = config.with_ablation(Ablation::NoEasy);
            }
            let expected = if no_easy { (0, b) } else { (b / 2, b - b / 2) };
            let out = engine::run(&config, &mut bench.teacher(1), &seed_data, RunOptions::default())
                .map_err(|e| e.to_string())?;
            let batches: Vec<_> = out.history.batches().iter().filter(|x| x.kind == BatchKind::Chat).collect();
            ensure(batches.len() == 3, || format!("b={b}: {} chat batches", batches.len()))?;
            for batch in batches {
                let easy = batch.samples.iter().filter(|s| s.origin == Origin::TeacherEasy).count();
                let hard = batch.samples.iter().filter(|s| s.origin == Origin::TeacherHard).count();
                ensure((easy, hard) == expected && batch.samples.len() == b, || {
                    format!("b={b} no_easy={no_easy}: got {easy} easy + {hard} hard, want {expected:?}")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} generated batches, b = 1..16, with and without easy samples"))
}

const VOCAB: [&str; 12] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet", "kilo", "lima",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..6);
    (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
}

fn random_task(labels: usize) -> Arc<TaskSpec> {
    Arc::new(TaskSpec::new("random", "random task", (0..labels).map(|k| format!("l{k}"))).unwrap())
}

fn random_model(rng: &mut ChaCha8Rng, labels: usize, dim: usize, scale: f64) -> StudentModel {
    let weights = (0..labels * dim).map(|_| rng.random_range(-scale..scale)).collect();
    let bias = (0..labels).map(|_| rng.random_range(-scale..scale)).collect();
    StudentModel::from_parts(random_task(labels), dim, weights, bias, 0).unwrap()
}

/// Softmax probabilities computed from the raw weights.
fn naive_distribution(model: &StudentModel, text: &str) -> Vec<f64> {
    let dim = model.dim();
    let x = featurize(text, dim);
    let logits: Vec<f64> = (0..model.num_labels())
        .map(|k| model.bias()[k] + x.entries().iter().map(|&(i, v)| model.weights()[k * dim + i as usize] * v).sum::<f64>())
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn partition_law() -> Check {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let strategy = (2usize..6, any::<u64>(), 1usize..24, 0.1f64..12.0);
    let counts = std::cell::Cell::new((0usize, 0usize));
    runner
        .run(&strategy, |(labels, seed, n, scale)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, labels, 64, scale);
            let samples: Vec<LabeledSample> = (0..n)
                .map(|_| LabeledSample::seed(random_text(&mut rng), format!("l{}", rng.random_range(0..labels))).unwrap())
                .collect();
            let partition = identify_samples(&model, &samples, 0.95).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let mut seen: Vec<usize> = partition.wrong.iter().chain(&partition.correct).map(|j| j.index).collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            for side in [&partition.wrong, &partition.correct] {
                prop_assert!(side.windows(2).all(|w| w[0].index < w[1].index));
            }
            for judged in partition.wrong.iter().chain(&partition.correct) {
                prop_assert_eq!(&judged.sample, &samples[judged.index]);
            }
            for (i, sample) in samples.iter().enumerate() {
                let p = naive_distribution(&model, &sample.text);
                let gold: usize = sample.label[1..].parse().unwrap();
                let mut best = 0;
                for k in 1..labels {
                    if p[k] > p[best] {
                        best = k;
                    }
                }
                let expected = best == gold && p[gold] >= 0.95;
                let actual = partition.correct.iter().any(|j| j.index == i);
                prop_assert_eq!(actual, expected, "sample {} p={:?} gold={}", i, p, gold);
            }
            let (c, w) = counts.get();
            counts.set((c + partition.correct.len(), w + partition.wrong.len()));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let (correct_total, wrong_total) = counts.get();
    ensure(correct_total > 0 && wrong_total > 0, || "one side was always empty".into())?;
    Ok(format!("1000 cases, {correct_total} correct / {wrong_total} wrong samples"))
}

fn gradient_check() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut widest_gap = 0.0f64;
    let mut checked = 0usize;
    let mut clipped = 0usize;
    let eps = 1e-5;
    for instance in 0..50 {
        let labels = rng.random_range(2..6);
        let dim = 16;
        let l2 = [0.0, 0.05, 1.0][instance % 3];
        let model = random_model(&mut rng, labels, dim, 3.0);
        let task = model.task().clone();
        let batch: Vec<LabeledSample> = (0..rng.random_range(1..7))
            .map(|_| LabeledSample::seed(random_text(&mut rng), format!("l{}", rng.random_range(0..labels))).unwrap())
            .collect();
        let encoded = EncodedBatch::new(&task, &batch, dim).map_err(|e| e.to_string())?;
        let (grad, _) = model.gradient(&encoded, l2).map_err(|e| e.to_string())?;
        let objective = |weights: Vec<f64>, bias: Vec<f64>| {
            StudentModel::from_parts(task.clone(), dim, weights, bias, 0)
                .unwrap()
                .objective(&encoded, l2)
                .unwrap()
        };
        let mut compare = |analytic: f64, numeric: f64, what: String| {
            let gap = (analytic - numeric).abs();
            let scale = analytic.abs().max(numeric.abs());
            // Near-zero partials are compared absolutely; there the quotient is all round-off.
            let rel = if scale > 1e-6 { gap / scale } else if gap < 1e-8 { 0.0 } else { f64::INFINITY };
            worst = worst.max(rel);
            widest_gap = widest_gap.max(gap);
            checked += 1;
            ensure(rel <= 1e-4, || format!("instance {instance} {what}: analytic {analytic}, numeric {numeric}"))
        };
        for k in 0..labels {
            for i in 0..dim {
                let mut plus = model.weights().to_vec();
                let mut minus = plus.clone();
                plus[k * dim + i] += eps;
                minus[k * dim + i] -= eps;
                let numeric = (objective(plus, model.bias().to_vec()) - objective(minus, model.bias().to_vec())) / (2.0 * eps);
                compare(grad.weight_entry(&model, k, i as u32), numeric, format!("w[{k},{i}]"))?;
            }
            let mut plus = model.bias().to_vec();
            let mut minus = plus.clone();
            plus[k] += eps;
            minus[k] -= eps;
            let numeric = (objective(model.weights().to_vec(), plus) - objective(model.weights().to_vec(), minus)) / (2.0 * eps);
            compare(grad.bias[k], numeric, format!("b[{k}]"))?;
        }

        let norm = grad.norm(&model);
        let params = TrainParams {
            learning_rate: 1.0,
            clip_norm: 2.0,
            l2,
        };
        let (next, _) = model.clone().train_step_encoded(&encoded, &params).map_err(|e| e.to_string())?;
        let step_sq: f64 = next
            .weights()
            .iter()
            .zip(model.weights())
            .chain(next.bias().iter().zip(model.bias()))
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let applied = step_sq.sqrt();
        ensure(applied <= 2.0 + 1e-9, || format!("instance {instance}: post-clip norm {applied}"))?;
        if norm > 2.0 {
            clipped += 1;
            ensure((applied - 2.0).abs() < 1e-9, || format!("instance {instance}: clipped norm {applied}"))?;
        } else {
            ensure((applied - norm).abs() < 1e-9, || format!("instance {instance}: unclipped norm {applied} vs {norm}"))?;
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!(
        "50 instances, {checked} partials, worst relative error {worst:.1e}, largest gap {widest_gap:.1e}, {clipped} clipped to 2.0, {elapsed:.2?}"
    ))
}

fn adaptability(bench: &Bench) -> Check {
    let start = Instant::now();
    let mut hits = 0;
    let mut lines = Vec::new();
    for seed in SEEDS {
        // 20 chats happen by step 1000.
        let config = RunConfig {
            num_steps: 1000,
            seed,
            ..RunConfig::default()
        };
        let seed_data = few_shot_sample(&bench.pool, 1, seed).map_err(|e| e.to_string())?;
        let out = engine::run(
            &config,
            &mut bench.teacher(seed),
            &seed_data,
            RunOptions {
                eval: Some(&bench.test),
                ..RunOptions::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let initial = &out.trace.initial_eval.as_ref().ok_or("no initial evaluation")?.per_label_f1;
        let lowest = (0..initial.len()).min_by(|&a, &b| initial[a].total_cmp(&initial[b])).unwrap();
        let highest = (0..initial.len()).max_by(|&a, &b| initial[a].total_cmp(&initial[b]).then(b.cmp(&a))).unwrap();
        let twentieth = out
            .trace
            .steps
            .iter()
            .filter(|r| r.kind == EventKind::Chat)
            .nth(19)
            .ok_or("fewer than 20 chats")?;
        let counts = &twentieth.generated_counts;
        let labels = bench.world.task().labels();
        if counts[lowest] > counts[highest] {
            hits += 1;
        }
        lines.push(format!(
            "seed {seed}: {} {} vs {} {}",
            labels[lowest], counts[lowest], labels[highest], counts[highest]
        ));
    }
    let elapsed = start.elapsed();
    let summary = format!("{hits}/5 seeds ({}), {elapsed:.2?}", lines.join("; "));
    ensure(hits >= 4, || summary.clone())?;
    within(elapsed, Duration::from_secs(120))?;
    Ok(summary)
}

fn mean_f1(bench: &Bench, config: &RunConfig, method: Method) -> Result<(f64, Vec<f64>), String> {
    let exp = Experiment {
        config: config.clone(),
        method,
        pool: &bench.pool,
        shots: 1,
        test: &bench.test,
        out: None,
    };
    let result = multi_seed_run(&exp, &SEEDS, &mut |seed| -> evokd::Result<Box<dyn Teacher>> {
        Ok(Box::new(bench.teacher(seed)))
    })
    .map_err(|e| e.to_string())?;
    ensure(result.macro_f1.len() == SEEDS.len(), || "a seed aborted".into())?;
    Ok((result.mean, result.macro_f1))
}

fn ablation_direction(bench: &Bench) -> Check {
    let start = Instant::now();
    let base = RunConfig::default();
    let (full, _) = mean_f1(bench, &base, Method::EvoKd)?;
    let (no_correct, _) = mean_f1(bench, &base.clone().with_ablation(Ablation::NoCorrect), Method::EvoKd)?;
    let (no_easy, _) = mean_f1(bench, &base.clone().with_ablation(Ablation::NoEasy), Method::EvoKd)?;
    let (no_review, _) = mean_f1(bench, &base.clone().with_ablation(Ablation::NoReview), Method::EvoKd)?;
    let elapsed = start.elapsed();
    let summary = format!(
        "full {full:.4}, no_correct {no_correct:.4}, no_easy {no_easy:.4}, no_review {no_review:.4}, {elapsed:.2?}"
    );
    ensure(full > no_correct && no_correct > no_easy && full > no_review, || summary.clone())?;
    within(elapsed, Duration::from_secs(600))?;
    Ok(summary)
}

fn baseline_comparison(bench: &Bench) -> Check {
    let config = RunConfig::default();
    let mut evokd_f1 = Vec::new();
    let mut static_f1 = Vec::new();
    let mut budget = Vec::new();
    for seed in SEEDS {
        let config = RunConfig { seed, ..config.clone() };
        let seed_data = few_shot_sample(&bench.pool, 1, seed).map_err(|e| e.to_string())?;
        let mut factory = |s: u64| -> evokd::Result<Box<dyn Teacher>> { Ok(Box::new(bench.teacher(s))) };
        let options = || MethodOptions {
            eval: Some(&bench.test),
            ..MethodOptions::default()
        };
        let (_, trace) = run_method(&config, &Method::EvoKd, &seed_data, options(), &mut factory).map_err(|e| e.to_string())?;
        let tokens = trace.total_tokens();
        evokd_f1.push(trace.last_eval().ok_or("no evaluation")?.macro_f1);
        // Grow the rephrasing budget until it is at least what the loop spent.
        let mut variants = 1;
        let spent = loop {
            let aug = evokd::baselines::auggpt_augment(&seed_data, &mut bench.teacher(seed), variants)
                .map_err(|e| e.to_string())?;
            if aug.total_tokens() >= tokens {
                break aug.total_tokens();
            }
            variants += (variants / 4).max(1);
        };
        let (_, trace) = run_method(&config, &Method::AugGpt { variants }, &seed_data, options(), &mut factory)
            .map_err(|e| e.to_string())?;
        ensure(trace.total_tokens() == spent, || "baseline token count changed between runs".into())?;
        static_f1.push(trace.last_eval().ok_or("no evaluation")?.macro_f1);
        budget.push(format!("{tokens}/{spent}"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let summary = format!(
        "EvoKD {:.4} vs AugGPT {:.4} at 12500 steps each, tokens EvoKD/AugGPT per seed {}",
        mean(&evokd_f1),
        mean(&static_f1),
        budget.join(", ")
    );
    ensure(mean(&evokd_f1) > mean(&static_f1), || summary.clone())?;
    Ok(summary)
}

fn determinism() -> Check {
    let task = common::sentiment();
    let fixtures = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::write_run_fixtures(fixtures.path(), 25, 8);
    let config = RunConfig {
        num_steps: 1250,
        seed: 1,
        ..RunConfig::default()
    };
    let run = |dir: &std::path::Path| -> Result<StudentModel, String> {
        let backend = ScriptedBackend::from_dir(fixtures.path()).map_err(|e| e.to_string())?;
        let mut teacher = ChatTeacher::new(backend, PromptTemplates::builtin());
        let out = engine::run(
            &config,
            &mut teacher,
            &common::seed_data(&task),
            RunOptions {
                run_dir: Some(dir.to_path_buf()),
                ..RunOptions::default()
            },
        )
        .map_err(|e| e.to_string())?;
        Ok(out.model)
    };
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (ma, mb) = (run(a.path())?, run(b.path())?);
    let mut bytes = 0;
    for file in [TRACE_FILE, HISTORY_FILE, CHECKPOINT_FILE] {
        let fa = std::fs::read(a.path().join(file)).map_err(|e| e.to_string())?;
        let fb = std::fs::read(b.path().join(file)).map_err(|e| e.to_string())?;
        ensure(fa == fb, || format!("{file} differs"))?;
        bytes += fa.len();
    }
    let bits = |m: &StudentModel| m.weights().iter().chain(m.bias()).map(|w| w.to_bits()).collect::<Vec<_>>();
    ensure(bits(&ma) == bits(&mb), || "final weights differ".into())?;
    Ok(format!("{bytes} bytes of trace, history and checkpoint identical; weights bit-identical"))
}

fn stub(replies: &[&str], faults: Vec<FaultSpec>, api_key: Option<&str>) -> Result<StubServer, String> {
    let fixtures = Fixtures {
        manifest: FixtureManifest {
            calls: (0..replies.len())
                .map(|i| FixtureCall {
                    kind: CallKind::Generate,
                    file: format!("{i:03}.txt"),
                    prompt_tokens: Some(30),
                    completion_tokens: Some(12),
                })
                .collect(),
            faults,
            api_key: api_key.map(str::to_string),
        },
        replies: replies.iter().map(|r| r.to_string()).collect(),
    };
    StubServer::start(fixtures, 0).map_err(|e| e.to_string())
}

fn fault(fault: FaultKind, times: u32, delay_ms: Option<u64>) -> Vec<FaultSpec> {
    vec![FaultSpec {
        call: 1,
        fault,
        times,
        delay_ms,
    }]
}

fn client(server: &StubServer, key: Option<&str>, timeout_ms: u64) -> Result<LlmClient, String> {
    let config = TeacherConfig {
        timeout_ms,
        backoff_ms: 1,
        ..TeacherConfig::default()
    };
    LlmClient::new(&server.url(), key.map(str::to_string), &config).map_err(|e| e.to_string())
}

fn wire_protocol() -> Check {
    let hello = vec![Message::new(Role::User, "hello")];

    let server = stub(&["hi"], vec![], Some("k"))?;
    let reply = client(&server, Some("k"), 5_000)?.chat(&hello).map_err(|e| e.to_string())?;
    let usage = reply.usage.map(|u| u.prompt_tokens + u.completion_tokens);
    ensure(reply.content == "hi" && usage == Some(42), || format!("happy path reply {reply:?}"))?;

    let server = stub(&["ok"], fault(FaultKind::Http500, 2, None), None)?;
    let mut c = client(&server, None, 5_000)?;
    let reply = c.chat(&hello).map_err(|e| e.to_string())?;
    ensure(reply.content == "ok" && c.last_attempts() == 3, || "two retries then success".into())?;

    let server = stub(&["x"], vec![], Some("right"))?;
    let err = client(&server, Some("wrong"), 5_000)?.chat(&hello).unwrap_err();
    ensure(matches!(err, Error::Config(_)) && server.requests().len() == 1, || format!("auth failure gave {err}"))?;

    let server = stub(&["x"], fault(FaultKind::MalformedJson, 1, None), None)?;
    let err = client(&server, None, 5_000)?.chat(&hello).unwrap_err();
    ensure(matches!(err, Error::TeacherProtocol(_)), || format!("malformed JSON gave {err}"))?;

    let server = stub(&["late"], fault(FaultKind::Timeout, 3, Some(400)), None)?;
    let mut c = client(&server, None, 150)?;
    let err = c.chat(&hello).unwrap_err();
    ensure(matches!(err, Error::TeacherUnavailable(_)) && c.last_attempts() == 3, || format!("timeout gave {err}"))?;

    // Separation: labeling prompts carry neither the pattern nor the difficulty.
    let task = common::sentiment();
    let rounds = 5;
    let replies: Vec<(CallKind, String)> = (1..=rounds).flat_map(|r| common::round_replies(r, 8)).collect();
    let texts: Vec<&str> = replies.iter().map(|(_, r)| r.as_str()).collect();
    let server = stub(&texts, vec![], None)?;
    let mut teacher = ChatTeacher::new(client(&server, None, 5_000)?, PromptTemplates::builtin());
    let judged = |text: &str, label: &str, predicted: &str| Judged {
        index: 0,
        sample: LabeledSample::seed(text, label).unwrap(),
        predicted: predicted.into(),
        gold_probability: 0.3,
    };
    let partition = Partition {
        wrong: vec![judged("sturdy case, dead battery", "negative", "positive")],
        correct: vec![judged("lovely screen", "positive", "positive")],
    };
    let mut patterns = Vec::new();
    for _ in 0..rounds {
        let (report, _) = teacher.analyze_weakness(&task, &partition, false).map_err(|e| e.to_string())?;
        let request = GenerationRequest {
            n_easy: 4,
            n_hard: 4,
            harder: false,
        };
        let (batch, _) = teacher.generate_texts(&task, &report, request).map_err(|e| e.to_string())?;
        teacher.label_texts(&task, &batch.texts()).map_err(|e| e.to_string())?;
        patterns.push(report.pattern);
    }
    let difficulty = Regex::new(r"(?i)\b(hard|challenging)\b").unwrap();
    let log = server.requests();
    let labeling: Vec<_> = log.iter().skip(2).step_by(3).collect();
    for request in &labeling {
        let text = request.message_contents().join("\n");
        ensure(!patterns.iter().any(|p| text.contains(p.as_str())), || "labeling prompt leaks a pattern".into())?;
        ensure(!difficulty.is_match(&text), || "labeling prompt mentions difficulty".into())?;
    }
    Ok(format!(
        "happy path, 2-retry recovery, auth failure, malformed JSON, timeout; {} labeling transcripts clean",
        labeling.len()
    ))
}

fn metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let trials = 50;
    for trial in 0..trials {
        let labels = rng.random_range(2..8);
        let gold: Vec<usize> = (0..200).map(|_| rng.random_range(0..labels)).collect();
        let predicted: Vec<usize> = (0..200).map(|_| rng.random_range(0..labels)).collect();
        let mut f1s = Vec::new();
        for k in 0..labels {
            let mut tp = 0.0;
            let mut predicted_k = 0.0;
            let mut gold_k = 0.0;
            for i in 0..200 {
                if predicted[i] == k {
                    predicted_k += 1.0;
                }
                if gold[i] == k {
                    gold_k += 1.0;
                }
                if predicted[i] == k && gold[i] == k {
                    tp += 1.0;
                }
            }
            let precision: f64 = if predicted_k > 0.0 { tp / predicted_k } else { 0.0 };
            let recall: f64 = if gold_k > 0.0 { tp / gold_k } else { 0.0 };
            f1s.push(if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            });
        }
        let expected = f1s.iter().sum::<f64>() / labels as f64;
        ensure(per_label_f1(labels, &gold, &predicted) == f1s, || format!("trial {trial}: per-label F1 differs"))?;
        let actual = macro_f1(labels, &gold, &predicted);
        ensure(actual == expected, || format!("trial {trial}: {actual} vs {expected}"))?;
    }
    Ok(format!("{trials} trials of 200 pairs match exactly"))
}

fn main() -> ExitCode {
    // Cargo passes harness flags such as --nocapture; none apply here.
    let bench = Bench::new();
    let criteria: Vec<Criterion<'_>> = vec![
        ("scheduler oracle", Box::new(|| scheduler_oracle(&bench))),
        ("batch composition", Box::new(|| batch_composition(&bench))),
        ("partition law", Box::new(partition_law)),
        ("gradient check", Box::new(gradient_check)),
        ("closed-loop adaptability", Box::new(|| adaptability(&bench))),
        ("ablation direction", Box::new(|| ablation_direction(&bench))),
        ("baseline comparison", Box::new(|| baseline_comparison(&bench))),
        ("determinism", Box::new(determinism)),
        ("wire protocol", Box::new(wire_protocol)),
        ("metrics oracle", Box::new(metrics_oracle)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        match result {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{elapsed:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{elapsed:.2?}]", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
