use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bsosc_core::scenarios::{ScenarioConfig, ScenarioError, ScenarioKind, ScenarioSpec};
use bsosc_core::validation;

const EXIT_VALIDATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Bloch-Siegert oscillation data for a qubit under bichromatic driving.
#[derive(Debug, Parser)]
#[command(name = "bsosc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rabi frequencies and Bloch-Siegert shift against A/ω
    Fig1,
    /// Population traces, closed form and direct integration
    Fig2,
    /// Spectra against ΔA/ω
    Fig3,
    /// Spectra against the drive phase
    Fig4,
    /// Run the acceptance criteria and write a JSON report
    Validate,
}

#[derive(Debug, Args)]
struct Overrides {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, global = true, allow_negative_numbers = true)]
    delta_a_over_omega: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    psi_deg: Option<f64>,
    /// Spectral decay rate, 1/μs
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    n_max: Option<usize>,
    #[arg(long, global = true)]
    dt_ns: Option<f64>,
    #[arg(long, global = true)]
    window_us: Option<f64>,
}

impl Overrides {
    fn config(&self) -> Result<ScenarioConfig, ScenarioError> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(v) = self.delta_a_over_omega {
            cfg.delta_a_over_omega = Some(v);
        }
        if let Some(v) = self.psi_deg {
            cfg.psi_deg = Some(v);
        }
        if let Some(v) = self.gamma {
            cfg.gamma_inv_us = v;
        }
        if let Some(v) = self.n_max {
            cfg.n_max = v;
        }
        if let Some(v) = self.dt_ns {
            cfg.dt_ns = Some(v);
        }
        if let Some(v) = self.window_us {
            cfg.window_us = Some(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn error_code(e: &ScenarioError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_CONFIG)
}

fn validate(cfg: &ScenarioConfig, out_dir: &std::path::Path) -> Result<bool, ScenarioError> {
    let report = validation::run_all_with(cfg, |r| {
        println!("{}", r.summary_line());
        for m in r.failed_measurements() {
            println!("      {} = {:.6e}  (want {})", m.name, m.value, m.limit);
        }
    })?;
    std::fs::create_dir_all(out_dir).map_err(|source| ScenarioError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let path = out_dir.join("validate_report.json");
    std::fs::write(&path, report.to_json()).map_err(|source| ScenarioError::Io {
        path: path.clone(),
        source,
    })?;
    println!("report: {}", path.display());
    Ok(report.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match cli.opts.config() {
        Ok(cfg) => cfg,
        Err(e) => return error_code(&e),
    };
    let kind = match cli.command {
        Command::Fig1 => ScenarioKind::FreqSweep,
        Command::Fig2 => ScenarioKind::TimeTraces,
        Command::Fig3 => ScenarioKind::SpectraVsAmp,
        Command::Fig4 => ScenarioKind::SpectraVsPhase,
        Command::Validate => {
            return match validate(&cfg, &cli.opts.out_dir) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(EXIT_VALIDATION),
                Err(e) => error_code(&e),
            };
        }
    };
    let spec = ScenarioSpec {
        kind,
        config: cfg,
        out_dir: cli.opts.out_dir,
    };
    match spec.run() {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => error_code(&e),
    }
}
