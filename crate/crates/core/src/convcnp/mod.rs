//! The ConvCNP: SetConv encoder with a density channel, U-Net backbone with
//! optional FiLM sites, SetConv decoder and a diagonal Gaussian head.

pub mod checkpoint;
mod config;
mod grid;
mod layers;
mod model;
mod params;
mod setconv;
mod unet;

pub use config::ModelConfig;
pub use grid::GridSpec;
pub use layers::film;
pub use model::{nll_loss, ConvCnp, GaussianPrediction};
pub use params::{ParamGroup, ParameterSet, TensorSpec};
pub use setconv::{encode, GriddedEncoding, DENSITY_EPS, KERNEL_CUTOFF};
