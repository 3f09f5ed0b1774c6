use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otacal::experiments::config::VariantList;
use otacal::experiments::{
    run_rmse_sweep, run_scenario, write_csv, write_csv_file, ScenarioOptions, SceneFile,
    SweepSettings,
};
use otacal::Error;

#[derive(Parser)]
#[command(
    name = "otacal",
    version,
    about = "Over-the-air phase calibration simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo RMSE of the inter-array phase estimate against SNR, as CSV.
    Sweep(SweepArgs),
    /// Run a named calibration scenario and report its checks.
    Scenario(ScenarioArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML file with sweep settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    snr_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    snr_max: Option<f64>,
    #[arg(long)]
    snr_step: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Carrier samples averaged per measurement.
    #[arg(long)]
    samples: Option<usize>,
    /// Primary carrier, Hz.
    #[arg(long)]
    freq: Option<f64>,
    /// Primary minus secondary carrier, Hz.
    #[arg(long)]
    freq_offset: Option<f64>,
    #[arg(long)]
    distance_wavelengths: Option<f64>,
    /// Largest link distance the ambiguity search covers.
    #[arg(long)]
    dmax_wavelengths: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated subset of three_meas,four_meas,genie.
    #[arg(long)]
    variants: Option<String>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct ScenarioArgs {
    name: String,
    /// Per-measurement SNR in dB; `inf` for noiseless.
    #[arg(long, default_value_t = f64::INFINITY, allow_negative_numbers = true)]
    snr: f64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Antennas per panel in the generated scene.
    #[arg(long, default_value_t = 4)]
    antennas: usize,
    /// Drift or aging step in radians.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    phi: f64,
    /// TOML scene file used instead of the generated scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let file = match &args.config {
        Some(path) => SweepSettings::load(path)?,
        None => SweepSettings::default(),
    };
    let flags = SweepSettings {
        snr_min: args.snr_min,
        snr_max: args.snr_max,
        snr_step: args.snr_step,
        trials: args.trials,
        samples: args.samples,
        freq: args.freq,
        freq_offset: args.freq_offset,
        distance_wavelengths: args.distance_wavelengths,
        dmax_wavelengths: args.dmax_wavelengths,
        seed: args.seed,
        variants: args.variants.map(VariantList::Csv),
        out: args.out,
        workers: args.workers,
    };
    let settings = file.overlay(flags);
    let cfg = settings.build()?;
    let rows = run_rmse_sweep(&cfg)?;
    match &settings.out {
        Some(path) => write_csv_file(&rows, &cfg.variants, path),
        None => write_csv(&rows, &cfg.variants, io::stdout().lock()),
    }
}

/// Returns whether every check passed.
fn scenario(args: ScenarioArgs) -> Result<bool, Error> {
    let scene = match &args.scene {
        Some(path) => Some(SceneFile::load(path)?.build(args.seed)?),
        None => None,
    };
    let opts = ScenarioOptions {
        snr_db: args.snr,
        n_samples: args.samples,
        seed: args.seed,
        antennas: args.antennas,
        phi: args.phi,
        scene,
    };
    let report = run_scenario(&args.name, &opts)?;
    let text = if args.json {
        serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?
    } else {
        report.to_string()
    };
    writeln!(io::stdout().lock(), "{text}")?;
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(args) => sweep(args).map(|()| true),
        Command::Scenario(args) => scenario(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Domain(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
