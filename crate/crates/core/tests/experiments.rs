use sim2real_core::experiments::{
    format_results_csv, read_results_csv, run_experiment, ExperimentSpec, RESULTS_FILE,
};
use sim2real_core::kv::KvFile;

const TINY_MODEL: &str = "
model.ppu = 32
model.encoder_lengthscale = 0.03125
model.decoder_lengthscale = 0.03125
model.unet_depth = 2
model.unet_channels = 4
model.kernel_size = 3
";

const TINY_TRAINING: &str = "
pretrain.max_epochs = 2
pretrain.batches_per_epoch = 2
pretrain.batch_size = 4
finetune.max_epochs = 2
finetune.batches_per_epoch = 2
finetune.batch_size = 4
real_only.max_epochs = 2
real_only.batches_per_epoch = 2
real_only.batch_size = 4
infinite_data.max_epochs = 1
infinite_data.batches_per_epoch = 2
infinite_data.batch_size = 4
";

fn tiny_gp_spec() -> ExperimentSpec {
    let text = format!(
        "preset = shrink_l\nreal.lengthscales = 0.1\nn_tasks = 5\nn_replicates = 2\nn_val_tasks = 4\nn_test_tasks = 8\n{TINY_MODEL}{TINY_TRAINING}"
    );
    ExperimentSpec::from_kv(&KvFile::parse(&text).unwrap()).unwrap()
}

fn tiny_station_spec() -> ExperimentSpec {
    let text = format!(
        "preset = station_world
n_stations = 10
n_times = 16
n_replicates = 1
n_sim_val_tasks = 4
world.n_stations = 40
world.n_times = 118
world.sim_grid_spacing = 0.1
world.station_min_separation = 0.02
model.ppu = 8
model.encoder_lengthscale = 0.125
model.decoder_lengthscale = 0.125
model.unet_depth = 2
model.unet_channels = 4
model.kernel_size = 3
{TINY_TRAINING}"
    );
    ExperimentSpec::from_kv(&KvFile::parse(&text).unwrap()).unwrap()
}

#[test]
fn gp_grid_emits_every_run_and_replays_identically() {
    let spec = tiny_gp_spec();
    let dir = tempfile::tempdir().unwrap();
    let records = run_experiment(&spec, Some(dir.path())).unwrap();
    // sim_only, oracle, infinite_data + 2 replicates x (global, film, real_only)
    assert_eq!(records.len(), 3 + 2 * 3);
    assert!(records.iter().all(|r| r.is_ok()), "{records:?}");
    assert!(records.iter().all(|r| r.oracle_nll.is_some()));
    let on_disk = read_results_csv(&dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(format_results_csv(&on_disk), format_results_csv(&records));

    let again = run_experiment(&spec, None).unwrap();
    assert_eq!(format_results_csv(&again), format_results_csv(&records));
}

#[test]
fn station_grid_runs_end_to_end() {
    let spec = tiny_station_spec();
    let records = run_experiment(&spec, None).unwrap();
    // sim_only + global, film, real_only
    assert_eq!(records.len(), 4);
    for r in &records {
        assert!(r.is_ok(), "{r:?}");
        assert_eq!(r.n_stations, Some(10));
        assert_eq!(r.n_times, Some(16));
        assert!(r.oracle_nll.is_none());
        assert!(r.test_nll.is_finite());
    }
}
