//! C ABI over the evokd student model and distillation loop.
//!
//! Every fallible function returns a status code. On failure the message is
//! available from [`evokd_last_error_message`] on the same thread. Strings are
//! NUL-terminated UTF-8. Handles come from `evokd_model_new`, `evokd_model_load`
//! or `evokd_distill` and must be released with [`evokd_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::sync::Arc;

use evokd::config::RunConfig;
use evokd::data::{few_shot_sample, load_dataset, Dataset, LabeledSample, TaskSpec};
use evokd::engine::{self, batch_split, RunOptions, Schedule};
use evokd::harness::{token_count, EventKind};
use evokd::student::{EncodedBatch, StudentModel, TrainParams};
use evokd::teacher::{ChatTeacher, LlmClient, PromptTemplates, ScriptedBackend, SyntheticTeacher, SyntheticWorld, Teacher};
use evokd::Error;

pub const EVOKD_OK: i32 = 0;
/// Any error without a more specific code (I/O, parse, protocol).
pub const EVOKD_ERR_FAILURE: i32 = 1;
pub const EVOKD_ERR_CONFIG: i32 = 2;
pub const EVOKD_ERR_TEACHER_UNAVAILABLE: i32 = 3;
pub const EVOKD_ERR_NUMERIC: i32 = 4;
/// A required pointer was null or a string was not UTF-8.
pub const EVOKD_ERR_INVALID_ARGUMENT: i32 = 5;
/// A Rust panic was caught at the boundary.
pub const EVOKD_ERR_PANIC: i32 = 6;

pub const EVOKD_EVENT_REPEAT: i32 = 0;
pub const EVOKD_EVENT_CHAT: i32 = 1;
pub const EVOKD_EVENT_REVIEW: i32 = 2;

/// Opaque student model handle.
pub struct EvokdModel {
    model: StudentModel,
    labels: Vec<CString>,
}

impl EvokdModel {
    fn wrap(model: StudentModel) -> Box<Self> {
        let labels = model
            .task()
            .labels()
            .iter()
            .map(|l| CString::new(l.as_str()).unwrap_or_default())
            .collect();
        Box::new(Self { model, labels })
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: EVOKD_ERR_INVALID_ARGUMENT,
        message: message.into(),
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EVOKD_OK
        }
        Ok(Err(failure)) => {
            set_last_error(failure.message);
            failure.code
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {message}"));
            EVOKD_ERR_PANIC
        }
    }
}

unsafe fn required_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn optional_str<'a>(ptr: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if ptr.is_null() {
        Ok(None)
    } else {
        required_str(ptr, what).map(Some)
    }
}

unsafe fn model_ref<'a>(model: *const EvokdModel) -> Result<&'a EvokdModel, Failure> {
    model.as_ref().ok_or_else(|| invalid("model handle is null"))
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn evokd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn evokd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an all-zero model. `task_json` has the same shape as a task file:
/// `{"name": ..., "description": ..., "labels": [...]}`. A `dim` of 0 selects the default.
///
/// # Safety
/// `task_json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evokd_model_new(task_json: *const c_char, dim: usize, out: *mut *mut EvokdModel) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let task: TaskSpec = serde_json::from_str(required_str(task_json, "task_json")?).map_err(Error::from)?;
        let dim = if dim == 0 { evokd::student::DEFAULT_DIM } else { dim };
        *out = Box::into_raw(EvokdModel::wrap(StudentModel::zeros(Arc::new(task), dim)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evokd_model_load(path: *const c_char, out: *mut *mut EvokdModel) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let model = StudentModel::load(required_str(path, "path")?)?;
        *out = Box::into_raw(EvokdModel::wrap(model));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn evokd_model_save(model: *const EvokdModel, path: *const c_char) -> i32 {
    guard(|| {
        let model = model_ref(model)?;
        model.model.save(required_str(path, "path")?)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evokd_model_free(model: *mut EvokdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of labels, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evokd_model_num_labels(model: *const EvokdModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.num_labels())
}

/// Name of label `index`, owned by the handle. Null when out of range.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evokd_model_label(model: *const EvokdModel, index: usize) -> *const c_char {
    model
        .as_ref()
        .and_then(|m| m.labels.get(index))
        .map_or(ptr::null(), |l| l.as_ptr())
}

/// Number of training steps applied so far.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evokd_model_version(model: *const EvokdModel) -> u64 {
    model.as_ref().map_or(0, |m| m.model.version())
}

/// Predicts one text. `probs` may be null; otherwise it receives
/// `min(probs_len, num_labels)` probabilities in label order.
///
/// # Safety
/// `model` must be a live handle, `text` a valid C string, `out_label` a valid
/// pointer and `probs` null or valid for `probs_len` writes.
#[no_mangle]
pub unsafe extern "C" fn evokd_model_predict(
    model: *const EvokdModel,
    text: *const c_char,
    out_label: *mut usize,
    probs: *mut f64,
    probs_len: usize,
) -> i32 {
    guard(|| {
        let model = model_ref(model)?;
        if out_label.is_null() {
            return Err(invalid("out_label is null"));
        }
        let prediction = model.model.predict(required_str(text, "text")?)?;
        *out_label = prediction.label_index;
        if !probs.is_null() {
            let n = probs_len.min(prediction.distribution.len());
            ptr::copy_nonoverlapping(prediction.distribution.as_ptr(), probs, n);
        }
        Ok(())
    })
}

/// One clipped SGD step on `n` labeled texts, in place. On failure the model is unchanged.
///
/// # Safety
/// `model` must be a live handle, `texts` and `labels` valid arrays of `n`
/// C strings, and `out_loss` null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evokd_model_train_step(
    model: *mut EvokdModel,
    texts: *const *const c_char,
    labels: *const *const c_char,
    n: usize,
    learning_rate: f64,
    clip_norm: f64,
    out_loss: *mut f64,
) -> i32 {
    guard(|| {
        let handle = model.as_mut().ok_or_else(|| invalid("model handle is null"))?;
        if n == 0 {
            return Err(Error::EmptyInput("training batch is empty".into()).into());
        }
        if texts.is_null() || labels.is_null() {
            return Err(invalid("texts or labels is null"));
        }
        let mut batch = Vec::with_capacity(n);
        for i in 0..n {
            let text = required_str(*texts.add(i), "text")?;
            let label = required_str(*labels.add(i), "label")?;
            batch.push(LabeledSample::seed(text, label)?);
        }
        let encoded = EncodedBatch::new(handle.model.task(), &batch, handle.model.dim())?;
        let loss = handle
            .model
            .apply_step(&encoded, &TrainParams::new(learning_rate, clip_norm))?;
        if !out_loss.is_null() {
            *out_loss = loss;
        }
        Ok(())
    })
}

/// Macro F1 of the model on a JSONL file of `{"text", "label"}` lines.
///
/// # Safety
/// `model` must be a live handle, `path` a valid C string and `out_macro_f1` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evokd_model_evaluate(
    model: *const EvokdModel,
    path: *const c_char,
    out_macro_f1: *mut f64,
) -> i32 {
    guard(|| {
        let model = model_ref(model)?;
        if out_macro_f1.is_null() {
            return Err(invalid("out_macro_f1 is null"));
        }
        let data = load_dataset(required_str(path, "path")?, model.model.task().clone())?;
        *out_macro_f1 = evokd::student::evaluate(&model.model, &data)?.macro_f1;
        Ok(())
    })
}

/// Event at a loop step: `EVOKD_EVENT_REPEAT`, `_CHAT` or `_REVIEW`.
/// A `review` of 0 disables review. Returns -1 when `chat` is 0.
#[no_mangle]
pub extern "C" fn evokd_classify_step(step: u64, chat: u64, review: u64) -> i32 {
    if chat == 0 {
        set_last_error("chat interval must be positive");
        return -1;
    }
    match Schedule::new(chat, (review > 0).then_some(review)).classify(step).kind {
        EventKind::Chat => EVOKD_EVENT_CHAT,
        EventKind::Review => EVOKD_EVENT_REVIEW,
        _ => EVOKD_EVENT_REPEAT,
    }
}

/// Easy and hard sample counts for a generated batch of size `b`.
///
/// # Safety
/// `out_easy` and `out_hard` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn evokd_batch_split(b: usize, out_easy: *mut usize, out_hard: *mut usize) -> i32 {
    guard(|| {
        if out_easy.is_null() || out_hard.is_null() {
            return Err(invalid("output pointer is null"));
        }
        let (easy, hard) = batch_split(b)?;
        *out_easy = easy;
        *out_hard = hard;
        Ok(())
    })
}

/// Token estimate used for teacher budgets. Returns 0 for null or non-UTF-8 input.
///
/// # Safety
/// `text` must be null or a valid C string.
#[no_mangle]
pub unsafe extern "C" fn evokd_token_count(text: *const c_char) -> u64 {
    match optional_str(text, "text") {
        Ok(Some(t)) => token_count(t),
        _ => 0,
    }
}

/// Runs the distillation loop.
///
/// `teacher` is `"synthetic"`, `"llm"` (endpoint and key from the environment)
/// or `"scripted:DIR"`. With the synthetic teacher, `task_path` and
/// `train_path` may be null: the built-in task is used and one sample per
/// label is drawn. Otherwise both are required. `config_json`, `eval_path`,
/// `out_dir` and `out_model` may be null. The run seed comes from the config.
///
/// # Safety
/// Every non-null string must be a valid C string and `out_model` null or a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evokd_distill(
    config_json: *const c_char,
    teacher: *const c_char,
    task_path: *const c_char,
    train_path: *const c_char,
    eval_path: *const c_char,
    out_dir: *const c_char,
    out_model: *mut *mut EvokdModel,
) -> i32 {
    guard(|| {
        let config: RunConfig = match optional_str(config_json, "config_json")? {
            Some(json) => serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))?,
            None => RunConfig::default(),
        };
        config.validate()?;
        let teacher_spec = required_str(teacher, "teacher")?;
        let task_path = optional_str(task_path, "task_path")?;
        let train_path = optional_str(train_path, "train_path")?;
        let world = (teacher_spec == "synthetic").then(|| Arc::new(SyntheticWorld::standard()));
        let task = match (task_path, &world) {
            (Some(path), _) => Arc::new(TaskSpec::from_file(path)?),
            (None, Some(world)) => world.task().clone(),
            (None, None) => return Err(Error::Config("task_path is required for this teacher".into()).into()),
        };
        let seed_data: Dataset = match (train_path, &world) {
            (Some(path), _) => load_dataset(path, task.clone())?,
            (None, Some(world)) => few_shot_sample(&world.sample_set(50, 555), 1, config.seed)?,
            (None, None) => return Err(Error::Config("train_path is required for this teacher".into()).into()),
        };
        let eval = optional_str(eval_path, "eval_path")?
            .map(|p| load_dataset(p, task.clone()))
            .transpose()?;
        let mut teacher: Box<dyn Teacher> = match (teacher_spec, world) {
            ("synthetic", Some(world)) => Box::new(SyntheticTeacher::new(world, config.seed)),
            ("llm", _) => Box::new(ChatTeacher::new(LlmClient::from_env(&config.teacher)?, PromptTemplates::builtin())),
            (spec, _) => match spec.strip_prefix("scripted:") {
                Some(dir) => Box::new(ChatTeacher::new(ScriptedBackend::from_dir(dir)?, PromptTemplates::builtin())),
                None => return Err(Error::Config(format!("unknown teacher {spec:?}")).into()),
            },
        };
        let outcome = engine::run(
            &config,
            &mut *teacher,
            &seed_data,
            RunOptions {
                eval: eval.as_ref(),
                run_dir: optional_str(out_dir, "out_dir")?.map(PathBuf::from),
                ..RunOptions::default()
            },
        )?;
        if !out_model.is_null() {
            *out_model = Box::into_raw(EvokdModel::wrap(outcome.model));
        }
        Ok(())
    })
}
