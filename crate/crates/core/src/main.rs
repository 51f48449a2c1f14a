use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use evokd::baselines::EdaConfig;
use evokd::config::{Ablation, RunConfig};
use evokd::data::{few_shot_sample, load_dataset, save_dataset, Dataset, TaskSpec};
use evokd::engine::{self, PatternEditor, RunOptions};
use evokd::harness::{
    export_curves, multi_seed_run, run_method, Experiment, Method, MethodOptions, RunTrace, StubServer,
};
use evokd::student::{evaluate, StudentModel};
use evokd::teacher::{
    ChatTeacher, Fixtures, LlmClient, PromptTemplates, ScriptedBackend, SyntheticTeacher, SyntheticWorld, Teacher,
    WeaknessReport,
};
use evokd::{Error, Result};

#[derive(Parser)]
#[command(name = "evokd", version, about = "Teacher-in-the-loop distillation for small text classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the distillation loop.
    Distill(DistillArgs),
    /// Train on a fixed augmented set.
    Baseline(BaselineArgs),
    /// Score a checkpoint on a labeled file.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Draw k samples per label from a labeled file.
    Sample {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        shots: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write CSV curves from a trace file.
    Curves {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve fixture replies over the chat-completions protocol.
    StubServe {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value_t = 8089)]
        port: u16,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated seeds; writes one directory per seed plus aggregate.json.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// llm, scripted:DIR or synthetic.
    #[arg(long, default_value = "llm")]
    teacher: String,
    /// Task JSON. Defaults to the synthetic world's task with the synthetic teacher.
    #[arg(long)]
    task: Option<PathBuf>,
    /// Seed data D^0 as JSONL, used as is.
    #[arg(long, conflicts_with = "pool")]
    train: Option<PathBuf>,
    /// Labeled pool to draw `--shots` samples per label from.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    shots: usize,
    /// Held-out set for snapshots and the final score.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
}

#[derive(Args)]
struct DistillArgs {
    #[command(flatten)]
    common: Common,
    /// Ablations to switch on.
    #[arg(long, value_delimiter = ',')]
    ablate: Vec<Ablation>,
    /// Pause at every chat round to edit the weakness pattern.
    #[arg(long)]
    interactive_pattern: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    None,
    Eda,
    Auggpt,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(value_enum)]
    kind: BaselineKind,
    #[command(flatten)]
    common: Common,
    /// Variants per seed sample.
    #[arg(long, default_value_t = 4)]
    variants: usize,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Distill(args) => distill(args),
        Command::Baseline(args) => baseline(args),
        Command::Evaluate { checkpoint, data } => {
            let model = StudentModel::load(&checkpoint)?;
            let data = load_dataset(&data, model.task().clone())?;
            let metrics = evaluate(&model, &data)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(())
        }
        Command::Sample {
            task,
            data,
            shots,
            seed,
            out,
        } => {
            let task = Arc::new(TaskSpec::from_file(task)?);
            let picked = few_shot_sample(&load_dataset(data, task)?, shots, seed)?;
            save_dataset(&out, &picked)?;
            eprintln!("wrote {} samples to {}", picked.len(), out.display());
            Ok(())
        }
        Command::Curves { trace, out } => {
            let files = export_curves(&RunTrace::load(trace)?, &out)?;
            if let Some(path) = &files.tokens_vs_f1 {
                println!("{}", path.display());
            }
            println!("{}", files.category_counts.display());
            Ok(())
        }
        Command::StubServe { fixtures, port } => {
            let server = StubServer::start(Fixtures::load(fixtures)?, port)?;
            eprintln!("serving {} on {}", server.served(), server.url());
            server.wait();
            Ok(())
        }
    }
}

enum TeacherKind {
    Llm,
    Scripted(PathBuf),
    Synthetic,
}

impl TeacherKind {
    fn parse(raw: &str) -> Result<Self> {
        match raw {
            "llm" => Ok(Self::Llm),
            "synthetic" => Ok(Self::Synthetic),
            _ => match raw.strip_prefix("scripted:") {
                Some(dir) if !dir.is_empty() => Ok(Self::Scripted(dir.into())),
                _ => Err(Error::Config(format!(
                    "unknown teacher {raw:?}; expected llm, scripted:DIR or synthetic"
                ))),
            },
        }
    }
}

/// Everything a run needs besides the method.
struct Setup {
    config: RunConfig,
    teacher: TeacherKind,
    world: Option<Arc<SyntheticWorld>>,
    prompts: PromptTemplates,
    seed_data: Option<Dataset>,
    pool: Option<Dataset>,
    test: Option<Dataset>,
}

impl Setup {
    fn new(common: &Common) -> Result<Self> {
        let mut config = match &common.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        if let Some(steps) = common.steps {
            config.num_steps = steps;
        }
        config.validate()?;
        let teacher = TeacherKind::parse(&common.teacher)?;
        let prompts = match common.prompts.clone().or_else(|| config.teacher.prompts.clone().map(PathBuf::from)) {
            Some(dir) => PromptTemplates::load_dir(dir)?,
            None => PromptTemplates::builtin(),
        };
        let world = matches!(teacher, TeacherKind::Synthetic).then(|| Arc::new(SyntheticWorld::standard()));
        let task = match (&common.task, &world) {
            (Some(path), _) => Arc::new(TaskSpec::from_file(path)?),
            (None, Some(world)) => world.task().clone(),
            (None, None) => return Err(Error::Config("--task is required unless --teacher synthetic".into())),
        };
        let load = |path: &Option<PathBuf>| path.as_ref().map(|p| load_dataset(p, task.clone())).transpose();
        let mut seed_data = load(&common.train)?;
        let mut pool = load(&common.pool)?;
        let mut test = load(&common.eval)?;
        if let Some(world) = &world {
            if common.task.is_none() {
                if seed_data.is_none() && pool.is_none() {
                    pool = Some(world.sample_set(50, 555));
                }
                if test.is_none() {
                    test = Some(world.sample_set(100, 999));
                }
            }
        }
        if seed_data.is_none() && pool.is_none() {
            return Err(Error::Config("give either --train or --pool".into()));
        }
        if let Some(d) = &seed_data {
            if d.is_empty() {
                return Err(Error::Config("seed data is empty".into()));
            }
        }
        seed_data = seed_data.filter(|d| !d.is_empty());
        Ok(Self {
            config,
            teacher,
            world,
            prompts,
            seed_data,
            pool,
            test,
        })
    }

    fn seed_data(&self, seed: u64, shots: usize) -> Result<Dataset> {
        match (&self.seed_data, &self.pool) {
            (Some(d), _) => Ok(d.clone()),
            (None, Some(pool)) => few_shot_sample(pool, shots, seed),
            (None, None) => unreachable!("checked in Setup::new"),
        }
    }

    fn teacher(&self, seed: u64) -> Result<Box<dyn Teacher>> {
        let cap = self.config.analysis_cap;
        Ok(match &self.teacher {
            TeacherKind::Llm => Box::new(
                ChatTeacher::new(LlmClient::from_env(&self.config.teacher)?, self.prompts.clone()).with_analysis_cap(cap),
            ),
            TeacherKind::Scripted(dir) => Box::new(
                ChatTeacher::new(ScriptedBackend::from_dir(dir)?, self.prompts.clone()).with_analysis_cap(cap),
            ),
            TeacherKind::Synthetic => Box::new(SyntheticTeacher::new(
                self.world.clone().expect("synthetic teacher has a world"),
                seed,
            )),
        })
    }

    fn multi(&self, common: &Common, method: Method) -> Result<()> {
        let pool = self
            .pool
            .as_ref()
            .ok_or_else(|| Error::Config("--seeds needs --pool to draw per-seed data from".into()))?;
        let test = self
            .test
            .as_ref()
            .ok_or_else(|| Error::Config("--seeds needs --eval".into()))?;
        let exp = Experiment {
            config: self.config.clone(),
            method,
            pool,
            shots: common.shots,
            test,
            out: common.out.clone(),
        };
        let result = multi_seed_run(&exp, &common.seeds, &mut |seed| self.teacher(seed))?;
        println!("{}", serde_json::to_string_pretty(&result)?);
        Ok(())
    }
}

struct StdinEditor;

impl PatternEditor for StdinEditor {
    fn edit(&mut self, round: u64, report: &WeaknessReport) -> Option<String> {
        if !std::io::stdin().is_terminal() {
            return None;
        }
        let mut err = std::io::stderr();
        let _ = writeln!(err, "round {round} weakness pattern:\n  {}", report.pattern);
        let _ = write!(err, "new pattern (empty keeps it): ");
        let _ = err.flush();
        let mut line = String::new();
        std::io::stdin().lock().read_line(&mut line).ok()?;
        let line = line.trim();
        (!line.is_empty()).then(|| line.to_string())
    }
}

fn stop_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let handler = flag.clone();
    if let Err(e) = ctrlc::set_handler(move || handler.store(true, Ordering::SeqCst)) {
        tracing::warn!(error = %e, "could not install the interrupt handler");
    }
    flag
}

fn print_summary(trace: &RunTrace, out: Option<&Path>) -> Result<()> {
    let summary = json!({
        "method": trace.method,
        "seed": trace.seed,
        "steps": trace.steps.len(),
        "tokens": trace.total_tokens(),
        "generated": trace.final_generated_counts(),
        "macro_f1": trace.last_eval().map(|e| e.macro_f1),
        "out": out.map(|p| p.display().to_string()),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn distill(args: DistillArgs) -> Result<()> {
    let mut setup = Setup::new(&args.common)?;
    for a in &args.ablate {
        setup.config = setup.config.clone().with_ablation(*a);
    }
    if !args.common.seeds.is_empty() {
        return setup.multi(&args.common, Method::EvoKd);
    }
    let seed = setup.config.seed;
    let seed_data = setup.seed_data(seed, args.common.shots)?;
    let mut teacher = setup.teacher(seed)?;
    let mut editor = StdinEditor;
    let options = RunOptions {
        eval: setup.test.as_ref(),
        run_dir: args.common.out.clone(),
        stop: Some(stop_flag()),
        editor: args.interactive_pattern.then_some(&mut editor as &mut dyn PatternEditor),
    };
    let outcome = engine::run(&setup.config, &mut *teacher, &seed_data, options)?;
    print_summary(&outcome.trace, args.common.out.as_deref())
}

fn baseline(args: BaselineArgs) -> Result<()> {
    let setup = Setup::new(&args.common)?;
    let method = match args.kind {
        BaselineKind::None => Method::NoAugment,
        BaselineKind::Eda => Method::Eda(EdaConfig {
            variants_per_sample: args.variants,
            ..EdaConfig::default()
        }),
        BaselineKind::Auggpt => Method::AugGpt {
            variants: args.variants,
        },
    };
    if !args.common.seeds.is_empty() {
        return setup.multi(&args.common, method);
    }
    let seed = setup.config.seed;
    let seed_data = setup.seed_data(seed, args.common.shots)?;
    let name = match args.kind {
        BaselineKind::None => "no_augment",
        BaselineKind::Eda => "eda",
        BaselineKind::Auggpt => "auggpt",
    };
    let (_, trace) = run_method(
        &setup.config,
        &method,
        &seed_data,
        MethodOptions {
            name: name.into(),
            eval: setup.test.as_ref(),
            run_dir: args.common.out.clone(),
        },
        &mut |s| setup.teacher(s),
    )?;
    print_summary(&trace, args.common.out.as_deref())
}
