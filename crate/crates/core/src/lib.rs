//! Multi-task Chinese text analysis: a shared character encoder feeding
//! word segmentation, part-of-speech tagging, named entity recognition,
//! dependency parsing, semantic dependency parsing and semantic role
//! labeling heads, trained jointly with distillation from single-task
//! teachers.
//!
//! All models start from random initialization; nothing is pretrained.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod decode;
pub mod encoder;
pub mod error;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod params;
pub mod pipeline;
pub mod sentence;
pub mod task;
pub mod tensor;
pub mod toy;
pub mod train;
pub mod vocab;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use model::MultiTaskModel;
pub use sentence::AnnotatedSentence;
pub use task::Task;
