//! Static augmentation baselines: the student trains on a fixed augmented set.

pub mod auggpt;
pub mod eda;
pub mod static_run;

pub use auggpt::{auggpt_augment, Augmentation};
pub use eda::{apply_op, eda_augment, eda_dataset, plan_edit, EdaConfig, EdaEdit, EdaOp};
pub use static_run::{run_static_baseline, StaticOptions};
