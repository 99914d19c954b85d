//! WL-subtree concept bottleneck models for interpretable graph
//! classification.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod concepts;
pub mod config;
pub mod embed;
pub mod error;
pub mod folds;
pub mod graph;
pub mod interpret;
pub mod intervene;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod scalar;
pub mod synthetic;
pub mod universe;
pub mod wl;

pub use error::{Error, Result};
pub use graph::{Graph, GraphDataset};
pub use net::{GcbmModel, TrainConfig};
pub use scalar::Scalar;
pub use universe::ConceptUniverse;

pub type Model = GcbmModel<f64>;
pub type ModelF32 = GcbmModel<f32>;
