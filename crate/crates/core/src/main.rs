use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use isac_spu::budget::LinkBudget;
use isac_spu::cli::{self, ReportFormat, ScenarioConfig};
use isac_spu::{db_to_linear, Error, Result};

#[derive(Parser)]
#[command(name = "isac-spu", version, about = "OFDM radar sensing on 5G NR resource grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `run.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write reference and reflected grid files for `run.n_frames` frames.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Average clutter-only captures into a clutter reference channel.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Periodograms and detections for every frame pair in a directory.
    Process {
        #[command(flatten)]
        common: Common,
        /// Directory holding `frame_*_ref.grid` / `frame_*_refl.grid`.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        clutter_ref: Option<PathBuf>,
        /// Overrides `processing.threshold_db`.
        #[arg(long, allow_hyphen_values = true)]
        threshold_db: Option<f64>,
        /// Also write a CSV per periodogram.
        #[arg(long)]
        csv: bool,
    },
    /// Kalman tracking over a detections JSON-lines file.
    Track {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        detections: PathBuf,
    },
    /// Achievable sensing range and SNR-vs-range sweep.
    PredictRange(PredictArgs),
    /// Range and velocity resolution of a frame configuration.
    Resolutions {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("ref").required(true).args(["gamma_ref_db", "gamma_ref"])))]
#[command(group(clap::ArgGroup::new("min").required(true).args(["gamma_min_db", "gamma_min"])))]
struct PredictArgs {
    /// SNR at the reference range, dB.
    #[arg(long, allow_hyphen_values = true)]
    gamma_ref_db: Option<f64>,
    /// SNR at the reference range, linear.
    #[arg(long)]
    gamma_ref: Option<f64>,
    /// Reference range, m.
    #[arg(long)]
    r_ref: f64,
    /// Path-loss exponent.
    #[arg(long, default_value_t = 2.0)]
    eta: f64,
    /// Minimum usable SNR, dB.
    #[arg(long, allow_hyphen_values = true)]
    gamma_min_db: Option<f64>,
    /// Minimum usable SNR, linear.
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    r_min: f64,
    #[arg(long, default_value_t = 100.0)]
    r_max: f64,
    #[arg(long, default_value_t = 12)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

fn load(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => cli::load_config(p),
        None => Ok(ScenarioConfig::default()),
    }
}

impl Common {
    fn resolve(&self) -> Result<(ScenarioConfig, PathBuf)> {
        let mut cfg = load(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        let out = self.out.clone().unwrap_or_else(|| cfg.run.output_dir.clone());
        Ok((cfg, out))
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { common } => {
            let (cfg, out) = common.resolve()?;
            let files = cli::cmd_simulate(&cfg, &out)?;
            println!("wrote {} grid files to {}", files.len(), out.display());
        }
        Command::Calibrate { common } => {
            let (cfg, out) = common.resolve()?;
            let path = cli::cmd_calibrate(&cfg, &out)?;
            println!("wrote clutter reference {}", path.display());
        }
        Command::Process {
            common,
            frames,
            clutter_ref,
            threshold_db,
            csv,
        } => {
            let (mut cfg, out) = common.resolve()?;
            if let Some(t) = threshold_db {
                cfg.processing.threshold_db = t;
                cfg.processing_params()?;
            }
            let summary = cli::cmd_process(&cfg, &frames, clutter_ref.as_deref(), &out, csv)?;
            println!(
                "processed {} frames, {} detections -> {}",
                summary.frames.len(),
                summary.detections.len(),
                out.join(cli::DETECTIONS_FILE).display()
            );
        }
        Command::Track { common, detections } => {
            let (cfg, out) = common.resolve()?;
            let path = cli::cmd_track(&cfg, &detections, &out)?;
            println!("wrote {}", path.display());
        }
        Command::PredictRange(a) => {
            let gamma_ref = a.gamma_ref.or(a.gamma_ref_db.map(db_to_linear)).expect("clap group");
            let gamma_min = a.gamma_min.or(a.gamma_min_db.map(db_to_linear)).expect("clap group");
            let budget = LinkBudget::new(gamma_ref, a.r_ref, a.eta, gamma_min)?;
            let format = match a.format {
                Format::Text => ReportFormat::Text,
                Format::Csv => ReportFormat::Csv,
            };
            print!("{}", cli::predict_range_report(&budget, a.r_min, a.r_max, a.steps, format)?);
        }
        Command::Resolutions { config } => {
            let cfg = load(config.as_deref())?;
            print!("{}", cli::resolutions_report(&cfg.frame));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Error::exit_code(&e) as u8)
        }
    }
}
