//! Run bookkeeping: traces, token estimates, curves, multi-seed aggregation
//! and the stub chat server used by the wire-protocol tests.

pub mod aggregate;
pub mod curves;
pub mod stub;
pub mod tokens;
pub mod trace;

pub use aggregate::{
    mean_std, multi_seed_run, run_method, run_seed, AggregateResult, Experiment, Method, MethodOptions, SeedOutcome,
    SeedRun,
};
pub use curves::{export_curves, CurveFiles};
pub use stub::{StubRequest, StubServer};
pub use tokens::token_count;
pub use trace::{ChatRecord, EvalSnapshot, EventKind, RunTrace, StepRecord};
