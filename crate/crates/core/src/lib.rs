//! Hierarchical multitask text classification.
//!
//! Offensive detection (OFFD), hate-speech detection (HSD) and fine-grained
//! hate-speech classification (HSC) are trained jointly as three heads over
//! one shared encoder. Predictions from several models are combined by
//! probability product, and HSC outputs that contradict the other two heads
//! are repaired by self-consistency correction.

pub mod consistency;
pub mod corpus;
pub mod encoder;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod labels;
pub mod model;
pub mod predictions;
pub mod synthetic;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use labels::{HsCategory, LabelTriple, Task, TaskMask};
