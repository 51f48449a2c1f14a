use std::path::PathBuf;

use thiserror::Error;

use crate::teacher::{ChatTranscript, GeneratedBatch};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes shared by every CLI subcommand.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const TEACHER_UNAVAILABLE: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("label {label:?} has {available} samples but {requested} were requested")]
    InsufficientData {
        label: String,
        available: usize,
        requested: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric state error: {0}")]
    Numeric(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("teacher unavailable: {0}")]
    TeacherUnavailable(String),

    #[error("teacher protocol error: {0}")]
    TeacherProtocol(String),

    #[error("could not parse teacher reply: {0}")]
    TeacherParse(String),

    #[error("generation shortfall: requested {requested} texts, received {received}")]
    GenerationShortfall {
        requested: usize,
        received: usize,
        partial: Box<GeneratedBatch>,
        transcript: Box<ChatTranscript>,
    },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("fixture error: {0}")]
    Fixture(String),

    #[error("run interrupted at step {step}")]
    Interrupted { step: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => exit_code::CONFIG,
            Error::TeacherUnavailable(_) => exit_code::TEACHER_UNAVAILABLE,
            Error::Numeric(_) => exit_code::NUMERIC,
            _ => exit_code::FAILURE,
        }
    }
}
