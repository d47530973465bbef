//! Depth recovery for orthographic wireframe sketches.
//!
//! A sketch is a connected straight-edge graph in the plane. Reconstruction
//! assigns a depth to every vertex: a small network scores each three-edge
//! corner of a candidate lift, and a genetic search followed by a hill
//! climber minimizes the summed corner scores. The network is trained on
//! corners of randomly oriented unit triangular prisms with displaced apex
//! depths.

pub mod benchmark;
pub mod datagen;
pub mod features;
pub mod geom;
pub mod mlp;
pub mod search;
pub mod shapes;
pub mod wireframe;

pub use features::{compute_features, FeatureVector, FEATURE_COUNT, FEATURE_ORDER_TAG};
pub use mlp::{load_model, save_model, Network, TrainConfig, TrainingSet};
pub use wireframe::{aligned_depth_error, parse_wireframe, Corner, DepthVector, Wireframe, WireframeError};
