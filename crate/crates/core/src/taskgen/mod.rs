//! Station/time splitting and context/target task sampling.

mod sample;
mod split;
mod stream;
mod task;

pub use sample::{
    context_size, make_gp_task, make_test_task, make_train_task, make_val_task, sample_gp_points, split_gp_points,
    GP_DOMAIN, GP_MAX_POINTS, GP_MIN_POINTS,
};
pub use split::{
    farthest_point_stations, split_stations, split_times, subsample_times, train_share, CycleLayout, PlanRequest,
    SplitPlan, TimeSplit,
};
pub use stream::{make_grid_task, GpDatasetStream, GpTaskStream, GridTaskStream, StationTaskStream, TaskStream};
pub use task::{Task, TaskKind};
