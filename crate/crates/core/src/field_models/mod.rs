//! Synthetic "sim" and "real" data from squared-exponential Gaussian
//! processes, the exact GP posterior oracle, and the 2D station world.

mod gp;
pub mod io;
mod kernel;
mod station_world;

pub use gp::{gaussian_log_density, gp_posterior_oracle, gp_predict, sample_gp_field, GpOracleResult, SampledField};

pub use kernel::{gram, se_kernel, SeKernelParams};
pub use station_world::{
    generate_station_world, min_pairwise_distance, StationData, StationWorld, StationWorldConfig,
};
