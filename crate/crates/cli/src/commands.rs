use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sim2real_core::convcnp::ModelConfig;
use sim2real_core::experiments::{
    gp_pretrain, gp_tasks, mean_artefact_score, run_experiment, write_results_csv, ExperimentSpec, ResultRecord,
    StationSetup, PRESET_NAMES, RESULTS_FILE,
};
use sim2real_core::field_models::io::{write_draws_csv, write_gridded_csv, write_station_csv};
use sim2real_core::finetune::{finetune, AdaptationKind, AdaptationStrategy};
use sim2real_core::kv::{fmt_f64, KvFile};
use sim2real_core::rng::{derive_seed, derived, label_key};
use sim2real_core::taskgen::{sample_gp_points, GpDatasetStream, Task, TaskKind, TaskStream};
use sim2real_core::training::{
    evaluate, write_training_log, GpOracle, Sim2RealModel, TrainConfig, TrainingOutcome,
};
use sim2real_core::{Error, Result};

use crate::manifest::{sibling, Manifest};
use crate::sources::{parse_kernel, seed_of, world_config, Source};

const DEFAULT_N_VAL_TASKS: usize = 256;

/// Refuses to write over any input.
fn check_outputs(out: &Path, inputs: &[&Path]) -> Result<()> {
    for input in inputs {
        if out == *input || sibling(out, ".bin") == *input || out == sibling(input, ".bin") {
            return Err(Error::Config(format!("output {} would overwrite an input", out.display())));
        }
    }
    Ok(())
}

fn model_config(kv: &KvFile) -> Result<ModelConfig> {
    ModelConfig::from_kv(&kv.section("model")).map_err(|e| match e {
        Error::MissingKey(k) => Error::MissingKey(format!("model.{k} (or model.preset)")),
        other => other,
    })
}

fn save_with_log(model: &Sim2RealModel, outcome: &TrainingOutcome, out: &Path, seed: u64) -> Result<()> {
    let mut meta = KvFile::new();
    meta.set("seed", seed);
    meta.set("best_epoch", outcome.best_epoch);
    meta.set("best_val_nll", fmt_f64(outcome.best_val_nll));
    meta.set("stop", format!("{:?}", outcome.stop));
    model.save(out, &meta)?;
    write_training_log(&sibling(out, ".log.csv"), &outcome.log)
}

pub fn pretrain(config: &Path, out: &Path, seed_over: Option<u64>) -> Result<()> {
    check_outputs(out, &[config])?;
    let kv = KvFile::load(config)?;
    let seed = seed_of(&kv, seed_over)?;
    let data: String = kv.get("data")?;
    let model_cfg = model_config(&kv)?;
    let train = TrainConfig::from_kv(&kv.section("train"), &TrainConfig::pretrain())?;
    let n_val = kv.get_or("n_val_tasks", DEFAULT_N_VAL_TASKS)?;
    let run_seed = derive_seed(seed, &[label_key("pretrain")]);
    let (model, outcome) = match data.as_str() {
        "gp" => {
            let sim = parse_kernel(&format!(
                "l={},noise={}",
                kv.get::<f64>("gp.lengthscale")?,
                kv.get::<f64>("gp.noise_std")?
            ))?;
            gp_pretrain(&model_cfg, &sim, &train, n_val, run_seed)?
        }
        "world" => StationSetup::generate(&world_config(&kv)?, seed)?.pretrain(&model_cfg, &train, n_val, run_seed)?,
        other => {
            return Err(Error::InvalidValue {
                key: "data".into(),
                value: other.into(),
            })
        }
    };
    save_with_log(&model, &outcome, out, seed)?;
    println!(
        "pre-trained to epoch {} (best validation NLL {:.4}); wrote {}",
        outcome.best_epoch,
        outcome.best_val_nll,
        out.display()
    );
    let mut manifest = Manifest::new("pretrain", seed);
    manifest.section("config", &kv);
    manifest.section("model", &model_cfg.to_kv());
    manifest.section("train", &train.to_kv());
    manifest.write_beside(out)?;
    Ok(())
}

pub fn finetune_cmd(
    ckpt: &Path,
    strategy: &str,
    config: &Path,
    out: &Path,
    split_plan: Option<&Path>,
    seed_over: Option<u64>,
) -> Result<()> {
    check_outputs(out, &[ckpt, config])?;
    let kind: AdaptationKind = strategy.parse()?;
    let kv = KvFile::load(config)?;
    let seed = seed_of(&kv, seed_over)?;
    let train = TrainConfig::from_kv(&kv.section("train"), &TrainConfig::finetune())?;
    let (pretrained, _) = Sim2RealModel::load(ckpt)?;
    let source = Source::from_config(&kv, seed, split_plan)?;
    let stream_seed = Source::stream_seed(seed);
    let (mut stream, val): (Box<dyn TaskStream>, Vec<Task>) = match &source {
        Source::Gp { .. } => {
            let data = source.gp_dataset(seed)?;
            (Box::new(GpDatasetStream::new(data.train, derived(stream_seed, &[]))?), data.val)
        }
        Source::Stations { setup, plan, .. } => (
            Box::new(setup.train_stream(plan, derived(stream_seed, &[]))?),
            setup.val_tasks(plan)?,
        ),
    };
    let strategy = AdaptationStrategy {
        kind,
        config: TrainConfig { seed, ..train },
    };
    let (model, outcome) = finetune(&pretrained, &strategy, stream.as_mut(), &val)?;
    save_with_log(&model, &outcome, out, seed)?;
    if let Source::Stations { plan, .. } = &source {
        plan.to_kv().save(&sibling(out, ".split_plan.txt"))?;
    }
    println!(
        "{kind} fine-tuning stopped at epoch {} (best validation NLL {:.4}); wrote {}",
        outcome.best_epoch,
        outcome.best_val_nll,
        out.display()
    );
    let mut manifest = Manifest::new("finetune", seed);
    manifest.set("ckpt", ckpt.display());
    manifest.set("strategy", kind);
    manifest.section("config", &kv);
    manifest.section("train", &strategy.config.to_kv());
    manifest.write_beside(out)?;
    Ok(())
}

fn base_record(kind: &str, source: &Source, strategy: &str, n_tasks: usize) -> ResultRecord {
    let (n_tasks, n_stations, n_times) = match source {
        Source::Gp { .. } => (Some(n_tasks), None, None),
        Source::Stations { plan, .. } => (None, Some(plan.n_stations), Some(plan.n_times)),
    };
    ResultRecord {
        kind: kind.into(),
        condition: source.label(),
        strategy: strategy.into(),
        n_tasks,
        n_stations,
        n_times,
        replicate: 0,
        test_nll: f64::NAN,
        test_mae: f64::NAN,
        oracle_nll: None,
        status: "ok".into(),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn evaluate_cmd(
    ckpt: &Path,
    config: &Path,
    out: &Path,
    split_plan: Option<&Path>,
    seed_over: Option<u64>,
) -> Result<()> {
    check_outputs(out, &[ckpt, config])?;
    let kv = KvFile::load(config)?;
    let seed = seed_of(&kv, seed_over)?;
    let (model, _) = Sim2RealModel::load(ckpt)?;
    let source = Source::from_config(&kv, seed, split_plan)?;
    let tasks = source.test_tasks(seed)?;
    let eval = evaluate(&model, &tasks)?;
    let mut rec = base_record("evaluate", &source, &stem(ckpt), tasks.len());
    rec.test_nll = eval.nll;
    rec.test_mae = eval.mae;
    if let Source::Gp { params, .. } = &source {
        rec.oracle_nll = Some(evaluate(&GpOracle { params: *params }, &tasks)?.nll);
    }
    write_results_csv(out, std::slice::from_ref(&rec))?;
    match rec.oracle_nll {
        Some(o) => println!("NLL {:.4} (oracle {o:.4}), MAE {:.4} over {} tasks", eval.nll, eval.mae, tasks.len()),
        None => println!("NLL {:.4}, MAE {:.4} over {} tasks", eval.nll, eval.mae, tasks.len()),
    }
    let mut manifest = Manifest::new("evaluate", seed);
    manifest.set("ckpt", ckpt.display());
    manifest.section("config", &kv);
    manifest.write_beside(out)?;
    Ok(())
}

pub fn oracle(kernel: &str, n_tasks: usize, out: &Path, seed_over: Option<u64>) -> Result<()> {
    let params = parse_kernel(kernel)?;
    let seed = seed_over.unwrap_or(0);
    let tasks = gp_tasks(&params, n_tasks, TaskKind::Test, &mut derived(seed, &[label_key("test")]))?;
    let eval = evaluate(&GpOracle { params }, &tasks)?;
    let source = Source::Gp {
        params,
        draws: None,
        n_tasks,
        n_test_tasks: n_tasks,
    };
    let mut rec = base_record("oracle", &source, "oracle", n_tasks);
    rec.test_nll = eval.nll;
    rec.test_mae = eval.mae;
    rec.oracle_nll = Some(eval.nll);
    write_results_csv(out, &[rec])?;
    println!("mean oracle NLL over {n_tasks} tasks: {:.6}", eval.nll);
    let mut manifest = Manifest::new("oracle", seed);
    manifest.set("kernel", kernel);
    manifest.set("tasks", n_tasks);
    manifest.write_beside(out)?;
    Ok(())
}

/// A spec file, a preset name, or `<preset>.preset` when no such file exists.
pub fn load_spec(spec: &str) -> Result<ExperimentSpec> {
    let path = Path::new(spec);
    if path.is_file() {
        return ExperimentSpec::from_kv(&KvFile::load(path)?);
    }
    let name = spec.strip_suffix(".preset").unwrap_or(spec);
    if PRESET_NAMES.contains(&name) {
        return ExperimentSpec::preset(name);
    }
    Err(Error::Config(format!(
        "{spec} is neither a spec file nor a preset ({})",
        PRESET_NAMES.join(", ")
    )))
}

pub fn experiment_run(spec_arg: &str, out: &Path, seed_over: Option<u64>) -> Result<()> {
    let mut spec = load_spec(spec_arg)?;
    if let Some(s) = seed_over {
        spec.master_seed = s;
    }
    let records = run_experiment(&spec, Some(out))?;
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    println!(
        "{} runs ({failed} failed); wrote {}",
        records.len(),
        out.join(RESULTS_FILE).display()
    );
    let mut manifest = Manifest::new("experiment run", spec.master_seed);
    manifest.section("spec", &spec.to_kv());
    manifest.write_beside(out)?;
    Ok(())
}

pub fn experiment_presets(out: Option<&Path>) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    for name in PRESET_NAMES {
        let kv = ExperimentSpec::preset(name)?.to_kv();
        println!("# {name}\n{kv}");
        if let Some(dir) = out {
            kv.save(&dir.join(format!("{name}.preset")))?;
        }
    }
    Ok(())
}

pub fn diagnose_artefacts(
    ckpts: &[PathBuf],
    config: &Path,
    n_tasks: usize,
    probe_spacing: f64,
    out: &Path,
    split_plan: Option<&Path>,
    seed_over: Option<u64>,
) -> Result<()> {
    let mut inputs: Vec<&Path> = ckpts.iter().map(PathBuf::as_path).collect();
    inputs.push(config);
    check_outputs(out, &inputs)?;
    let kv = KvFile::load(config)?;
    let seed = seed_of(&kv, seed_over)?;
    let source = Source::from_config(&kv, seed, split_plan)?;
    let mut tasks = source.test_tasks(seed)?;
    tasks.truncate(n_tasks);
    let mut csv = String::from("checkpoint,n_tasks,probe_spacing,artefact_score\n");
    for ckpt in ckpts {
        let (model, _) = Sim2RealModel::load(ckpt)?;
        let (lo, hi) = model.data_domain();
        let score = mean_artefact_score(&model, &tasks, probe_spacing, &lo, &hi)?;
        println!("{}: {score:.6}", ckpt.display());
        let _ = writeln!(csv, "{},{},{},{}", stem(ckpt), tasks.len(), fmt_f64(probe_spacing), fmt_f64(score));
    }
    std::fs::write(out, csv)?;
    let mut manifest = Manifest::new("diagnose-artefacts", seed);
    manifest.set("ckpt", ckpts.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","));
    manifest.set("probe_spacing", fmt_f64(probe_spacing));
    manifest.section("config", &kv);
    manifest.write_beside(out)?;
    Ok(())
}

pub fn gen_gp(kernel: &str, n_tasks: usize, out: &Path, seed_over: Option<u64>) -> Result<()> {
    let params = parse_kernel(kernel)?;
    let seed = seed_over.unwrap_or(0);
    let mut rng = derived(seed, &[label_key("draws")]);
    let draws = (0..n_tasks).map(|_| sample_gp_points(&params, &mut rng)).collect::<Result<Vec<_>>>()?;
    write_draws_csv(out, &draws)?;
    println!("wrote {n_tasks} draws to {}", out.display());
    let mut manifest = Manifest::new("gen-data gp", seed);
    manifest.set("kernel", kernel);
    manifest.set("tasks", n_tasks);
    manifest.write_beside(out)?;
    Ok(())
}

pub const WORLD_FILES: [&str; 4] = ["stations.csv", "sim.csv", "aux.csv", "world.txt"];

/// Writes station records, simulator snapshots, the aux channels (one
/// `time_id` per channel), the world config and, given `split.*` keys, a split plan.
pub fn gen_world(config: Option<&Path>, out: &Path, seed_over: Option<u64>) -> Result<()> {
    let kv = match config {
        Some(path) => KvFile::load(path)?,
        None => KvFile::new(),
    };
    let seed = seed_of(&kv, seed_over)?;
    let world = world_config(&kv)?;
    let setup = StationSetup::generate(&world, seed)?;
    std::fs::create_dir_all(out)?;
    write_station_csv(&out.join(WORLD_FILES[0]), &setup.data)?;
    let snaps: Vec<(u32, _)> = setup.time_ids.iter().map(|&t| (t, &setup.snapshots[t as usize])).collect();
    write_gridded_csv(&out.join(WORLD_FILES[1]), &snaps)?;
    let aux: Vec<(u32, _)> = setup.aux.iter().enumerate().map(|(c, g)| (c as u32, g)).collect();
    write_gridded_csv(&out.join(WORLD_FILES[2]), &aux)?;
    world.to_kv().save(&out.join(WORLD_FILES[3]))?;
    if kv.contains("split.n_stations") || kv.contains("split.n_times") {
        let plan = setup.plan(kv.get("split.n_stations")?, kv.get("split.n_times")?, seed, kv.get_or("split.replicate", 0)?)?;
        plan.to_kv().save(&out.join("split_plan.txt"))?;
    }
    println!(
        "wrote {} stations over {} times to {}",
        setup.data.n_stations(),
        setup.time_ids.len(),
        out.display()
    );
    let mut manifest = Manifest::new("gen-data world", seed);
    manifest.section("config", &kv);
    manifest.section("world", &world.to_kv());
    manifest.write_beside(out)?;
    Ok(())
}
