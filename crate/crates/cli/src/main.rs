mod args;
mod commands;
mod manifest;
mod sources;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser};
use sim2real_core::Error;

use args::{Cli, Command, Experiment, GenData};

/// Bad flags and bad config contents are usage errors; everything else is a runtime failure.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::MissingKey(_) | Error::InvalidValue { .. } => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> sim2real_core::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::GenData(GenData::Gp { kernel, tasks, out }) => commands::gen_gp(&kernel, tasks, &out, seed),
        Command::GenData(GenData::World { config, out }) => commands::gen_world(config.as_deref(), &out, seed),
        Command::Pretrain { config, out } => commands::pretrain(&config, &out, seed),
        Command::Finetune {
            ckpt,
            strategy,
            config,
            out,
            split,
        } => commands::finetune_cmd(&ckpt, &strategy, &config, &out, split.split_plan.as_deref(), seed),
        Command::Evaluate {
            ckpt,
            config,
            out,
            split,
        } => commands::evaluate_cmd(&ckpt, &config, &out, split.split_plan.as_deref(), seed),
        Command::Oracle { kernel, tasks, out } => commands::oracle(&kernel, tasks, &out, seed),
        Command::Experiment(Experiment::Run { spec, out }) => commands::experiment_run(&spec, &out, seed),
        Command::Experiment(Experiment::Presets { out }) => commands::experiment_presets(out.as_deref()),
        Command::DiagnoseArtefacts {
            ckpt,
            config,
            tasks,
            probe_spacing,
            out,
            split,
        } => commands::diagnose_artefacts(
            &ckpt,
            &config,
            tasks,
            probe_spacing,
            &out,
            split.split_plan.as_deref(),
            seed,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            eprintln!("{}", Cli::command().render_long_help());
            return ExitCode::from(1);
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
