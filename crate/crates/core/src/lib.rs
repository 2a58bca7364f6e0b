pub mod convcnp;
pub mod data;
pub mod experiments;
pub mod error;
pub mod field_models;
pub mod finetune;
pub mod kv;
pub mod rng;
pub mod taskgen;
pub mod training;

pub use data::{GriddedField, PointSet};
pub use error::{Error, Result};
