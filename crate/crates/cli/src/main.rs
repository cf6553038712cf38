mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::LoadedConfig;
use error::CliError;
use output::{sha256_hex, FileDigest, Format, Manifest, OutputDir};

const DEFAULT_SEED: u64 = 1;

/// Simulate and analyse a polarization-entangled pair source in a fibre
/// Sagnac loop.
#[derive(Debug, Parser)]
#[command(name = "sagnac", version)]
struct Cli {
    /// Experiment configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table format.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Also write SVG line charts where applicable.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Coincidence histograms for the configured analysis settings.
    Simulate,
    /// Phase scans with fitted fringe visibilities.
    Fringes,
    /// Raw and noise-subtracted CHSH parameters.
    Chsh,
    /// Visibility-versus-delay ruler from the filter model.
    Ruler,
    /// Fit of the delay per metre and the dispersion coefficient.
    DispersionFit,
    /// Brightness, multi-pair and heralding figures.
    Performance,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fringes => "fringes",
            Command::Chsh => "chsh",
            Command::Ruler => "ruler",
            Command::DispersionFit => "dispersion-fit",
            Command::Performance => "performance",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let loaded = LoadedConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(loaded.config.seed).unwrap_or(DEFAULT_SEED);
    let out_dir = match (&cli.out, &loaded.config.output_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => loaded.resolve(p),
        (None, None) => PathBuf::from("out"),
    };
    let config_digest = FileDigest {
        path: loaded
            .path
            .as_ref()
            .map_or("<built-in defaults>".into(), |p| p.display().to_string()),
        sha256: sha256_hex(&loaded.bytes),
    };
    let out = OutputDir::open(&out_dir)?;
    let mut ctx = commands::Context {
        loaded,
        seed,
        format: cli.format,
        svg: cli.svg,
        out,
        inputs: Vec::new(),
    };
    match cli.command {
        Command::Simulate => commands::simulate(&mut ctx)?,
        Command::Fringes => commands::fringes(&mut ctx)?,
        Command::Chsh => commands::chsh(&mut ctx)?,
        Command::Ruler => commands::ruler(&mut ctx)?,
        Command::DispersionFit => commands::dispersion_fit(&mut ctx)?,
        Command::Performance => commands::performance(&mut ctx)?,
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        core_version: sagnac_core::VERSION,
        command: cli.command.name().to_owned(),
        seed,
        format: cli.format.extension(),
        config: config_digest,
        inputs: ctx.inputs,
        outputs: Vec::new(),
    };
    ctx.out.finish(manifest)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
