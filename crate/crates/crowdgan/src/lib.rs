//! Crowd trajectory forecasting and unsupervised pedestrian group detection.
//!
//! The pipeline observes short trajectory segments for every pedestrian in a
//! scene, encodes each pedestrian together with its local neighbourhood into a
//! context vector (soft attention over the pedestrian's own history, fixed
//! inverse-distance attention over neighbour histories), and forecasts future
//! motion with a conditional adversarial recurrent generator. The generator's
//! hidden activations double as social-identity embeddings: reduced with t-SNE
//! and clustered with DBSCAN they yield pedestrian groups without any group
//! supervision.
//!
//! Modules:
//! - [`data`]: scene/trajectory types, annotation I/O, observation windows
//! - [`nn`]: tensors, reverse-mode gradients, LSTM cells, Adam
//! - [`neighborhood`]: attention-based context encoding
//! - [`gan`]: conditional adversarial forecaster and training loop
//! - [`grouping`]: embedding extraction, t-SNE, DBSCAN, PCA
//! - [`metrics`]: displacement errors and partition scores
//! - [`synth`]: synthetic crowd scenes with ground-truth groups
//! - [`cli`]: command implementations behind the `crowdgan` binary

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod gan;
pub mod grouping;
pub mod metrics;
pub mod neighborhood;
pub mod nn;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
