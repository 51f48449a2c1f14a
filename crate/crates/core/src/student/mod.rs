//! The trainable student: hashed n-gram features feeding a multinomial
//! softmax regression trained with clipped SGD.

pub mod features;
pub mod metrics;
pub mod model;

pub use features::{featurize, FeatureVector, DEFAULT_DIM};
pub use metrics::{evaluate, macro_f1, per_label_f1, Metrics};
pub use model::{argmax, clip_scale, softmax, EncodedBatch, Gradient, Prediction, StudentModel, TrainParams};
