//! Semantic labeling of 3D indoor point clouds.
//!
//! The pipeline: over-segment a colored point cloud into smooth surface
//! patches, connect nearby segments into a scene graph, score joint label
//! assignments with a log-linear node/edge model, and train the weights with
//! a max-margin cutting-plane method. A trained model can also score 3D
//! locations for objects that are missing from the current labeling
//! (contextual search).

pub mod error;
pub mod eval;
pub mod features;
pub mod geom;
pub mod inference;
pub mod learning;
pub mod model;
pub mod rng;
pub mod scene;
pub mod search;
pub mod segmentation;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
