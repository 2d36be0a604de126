mod commands;
mod config;
mod error;
mod output;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use commands::{Command, Invocation};
use config::{apply_override, RunConfig};
use error::{CliError, EXIT_ASSERTION, EXIT_OK, EXIT_VALIDATION};

/// Phase-field gradient flows with CSAV, SAV and RSAV time integrators.
///
/// Exit codes: 0 all assertions passed, 1 an assertion failed,
/// 2 numerical divergence, 3 invalid configuration, 4 I/O error.
#[derive(Parser)]
#[command(name = "csav", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate one configuration, writing the trace and snapshots.
    Run(Common),
    /// Self-convergence study over experiment.dt_list and alpha_list.
    Converge(Common),
    /// α sweep (alpha_list) and/or energy-stability sweep (dt_list).
    Sweep(Common),
    /// Compare schemes against an α = 0 fine-step baseline.
    Compare(Common),
    /// List the shipped presets.
    ListPresets,
}

#[derive(Args)]
struct Common {
    /// Name of a shipped preset.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Path to a JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a field, e.g. `--set scheme.dt=5e-3`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Directory under which run directories are created.
    #[arg(long, env = "CSAV_OUTPUT_ROOT", default_value = "csav-runs")]
    output_root: PathBuf,
    /// Worker threads for sweeps; 1 keeps runs bitwise reproducible.
    #[arg(long, env = "CSAV_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Print the resolved configuration and exit without running.
    #[arg(long)]
    print_config: bool,
}

fn load_config(common: &Common) -> Result<(RunConfig, String), CliError> {
    let (mut doc, label) = match (&common.preset, &common.config) {
        (Some(name), _) => (presets::load(name)?, name.clone()),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(CliError::io("reading config", path))?;
            let doc: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
            (doc, stem.unwrap_or_else(|| "config".into()))
        }
        (None, None) => unreachable!("clap requires one of --preset and --config"),
    };
    for o in &common.overrides {
        apply_override(&mut doc, o)?;
    }
    Ok((RunConfig::from_value(doc)?, label))
}

fn dispatch(command: Command, common: Common) -> Result<u8, CliError> {
    let (config, label) = load_config(&common)?;
    commands::precheck(command, &config)?;
    if common.print_config {
        println!("{}", serde_json::to_string_pretty(&config.to_value()).expect("config serializes"));
        return Ok(EXIT_OK);
    }
    if common.jobs == 0 {
        return Err(CliError::Validation("--jobs must be at least 1".into()));
    }
    let dir_name = match &config.output.directory {
        Some(dir) => dir.to_string_lossy().into_owned(),
        None => format!("{label}-{}-{}", command.name(), output::timestamp()),
    };
    let inv = Invocation {
        command,
        config,
        preset: common.preset,
        output_root: common.output_root,
        dir_name,
        jobs: common.jobs,
    };
    let outcome = commands::execute(&inv)?;
    for a in &outcome.assertions {
        println!("[{}] {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    println!("{}", outcome.dir.display());
    Ok(if outcome.passed() { EXIT_OK } else { EXIT_ASSERTION })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_VALIDATION),
            };
        }
    };
    let (command, common) = match cli.command {
        Sub::ListPresets => {
            for (name, _) in presets::PRESETS {
                println!("{name:<18} {}", presets::description(name));
            }
            return ExitCode::SUCCESS;
        }
        Sub::Run(c) => (Command::Run, c),
        Sub::Converge(c) => (Command::Converge, c),
        Sub::Sweep(c) => (Command::Sweep, c),
        Sub::Compare(c) => (Command::Compare, c),
    };
    match dispatch(command, common) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
