//! Coarse-to-fine point-cloud affordance learning for articulated-object
//! manipulation under depth-sensor noise, end to end: procedural scenes, a
//! noisy virtual depth camera, an interaction oracle, hierarchical
//! point-set networks with cross-view feature integration, data
//! collection, two-stage training, and an evaluation harness.

pub mod actor;
pub mod affordance;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod datagen;
pub mod encoder;
pub mod error;
pub mod interaction;
pub mod io;
pub mod math;
pub mod mesh;
pub mod nn;
pub mod pipeline;
pub mod scene;
pub mod sensor;
pub mod tape;
pub mod trainer;

pub use error::{Error, Result};
