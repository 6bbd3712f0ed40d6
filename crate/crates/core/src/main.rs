use clap::{Args, Parser, Subcommand};
use emitter_sim::config::ExperimentConfig;
use emitter_sim::presets::{load_preset, PRESET_NAMES};
use emitter_sim::runner::run_experiment;
use emitter_sim::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulation and estimation toolkit for single-emitter nanopillar
/// experiments.
#[derive(Parser)]
#[command(name = "emitter-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in configuration name.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Override the configured random seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory for artifacts (default: current directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Dose-to-occupancy blueprint for a pillar array.
    Blueprint(RunArgs),
    /// Implantation depth profile and retained fraction.
    Implant(RunArgs),
    /// Two-level saturation curve and saturation flux.
    Saturation(RunArgs),
    /// Time-resolved biexponential decay with mean-lifetime fit.
    Trpl(RunArgs),
    /// Rabi oscillation versus pulse width.
    Rabi(RunArgs),
    /// Ramsey fringe-amplitude decay.
    Ramsey(RunArgs),
    /// Photon-echo amplitude decay.
    Echo(RunArgs),
    /// Monte-Carlo click stream and pulsed autocorrelation.
    G2(RunArgs),
    /// Pulsed upconversion ladder photon yields.
    Upconversion(RunArgs),
    /// Excitation spectrum through the laser lineshape.
    Ple(RunArgs),
    /// Synthetic camera image of point emitters.
    Image(RunArgs),
    /// Nonlinear least-squares fit of tabulated data.
    Fit(RunArgs),
    /// List the built-in configurations.
    Presets,
}

fn expected_experiment(cmd: &Command) -> &'static str {
    match cmd {
        Command::Blueprint(_) => "blueprint",
        Command::Implant(_) => "implant",
        Command::Saturation(_) => "saturation",
        Command::Trpl(_) => "trpl",
        Command::Rabi(_) => "rabi",
        Command::Ramsey(_) => "ramsey",
        Command::Echo(_) => "echo",
        Command::G2(_) => "g2",
        Command::Upconversion(_) => "upconversion",
        Command::Ple(_) => "ple",
        Command::Image(_) => "image",
        Command::Fit(_) => "fit",
        Command::Presets => unreachable!(),
    }
}

fn run(cmd: &Command, args: &RunArgs) -> Result<(), Error> {
    let mut cfg: ExperimentConfig = match (&args.config, &args.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)?;
            let cfg = ExperimentConfig::from_toml(&text)?;
            cfg.validate()?;
            cfg
        }
        (None, Some(name)) => load_preset(name)?,
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--config and --preset are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config(
                "either --config or --preset is required".into(),
            ))
        }
    };
    let expected = expected_experiment(cmd);
    if cfg.experiment != expected {
        return Err(Error::Config(format!(
            "configuration is for experiment '{}', but the '{expected}' subcommand was invoked",
            cfg.experiment
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    let out_dir = match (&args.out, &cfg.output_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => PathBuf::from(dir),
        (None, None) => PathBuf::from("."),
    };
    let report = run_experiment(&cfg, &out_dir)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report.summary).map_err(|e| Error::Format(e.to_string()))?
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Presets = cli.command {
        for name in PRESET_NAMES {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let args = match &cli.command {
        Command::Blueprint(a)
        | Command::Implant(a)
        | Command::Saturation(a)
        | Command::Trpl(a)
        | Command::Rabi(a)
        | Command::Ramsey(a)
        | Command::Echo(a)
        | Command::G2(a)
        | Command::Upconversion(a)
        | Command::Ple(a)
        | Command::Image(a)
        | Command::Fit(a) => a,
        Command::Presets => unreachable!(),
    };
    match run(&cli.command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Fit(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
