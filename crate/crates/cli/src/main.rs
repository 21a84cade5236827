mod commands;
mod config;
mod output;

use clap::{Parser, ValueEnum};
use commands::{Context, Failure};
use config::ExperimentConfig;
use output::RunOutput;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Subcommand {
    /// 1-bump and reduced solves with residuals.
    Orbit,
    /// G_μ (or G̃_μ) on a torus grid.
    Gmap,
    /// Melnikov profile and Fourier table.
    Melnikov,
    /// Splitting bound ratios of the reduced coefficients.
    Bound,
    /// Perturbed invariant tori and their residuals.
    Tori,
    /// Critical points and a splitting certificate.
    Certify,
    /// Transition chain, minimizer and diffusion time.
    Chain,
    /// Direct integration or windowed shadowing of a chain.
    Simulate,
    /// Diffusion time over a list of μ.
    Scaling,
    /// Three-scale coefficients and certificates.
    ThreeScale,
}

#[derive(Debug, Parser)]
#[command(name = "isodiff", version, about = "Arnold diffusion experiments for pendulum-rotor systems")]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "ISODIFF_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

fn error_record(failure: &Failure) -> (u8, serde_json::Value) {
    match failure {
        Failure::Config(e) => (2, json!({ "kind": "config", "field": e.field, "message": e.message })),
        Failure::Numerical(e) => (3, json!({ "kind": "numerical", "message": e.to_string(), "detail": format!("{e:?}") })),
        Failure::Io(e) => (3, json!({ "kind": "io", "message": e.to_string() })),
    }
}

fn run(cli: &Cli) -> Result<(), (Failure, Option<PathBuf>)> {
    let text = std::fs::read_to_string(&cli.config).map_err(|e| {
        (Failure::Config(config::ConfigError { field: "--config".into(), message: e.to_string() }), None)
    })?;
    let config = ExperimentConfig::parse(&text).map_err(|e| (Failure::Config(e), None))?;
    let dir = cli.out.clone().unwrap_or_else(|| config.output.dir.clone());
    let fail = |f: Failure| (f, Some(dir.clone()));
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| (Failure::Config(config::ConfigError { field: "--threads".into(), message: e.to_string() }), None))?;
    }
    let mut out = RunOutput::new(&dir).map_err(|e| fail(e.into()))?;
    let mut ctx = Context { config: &config, out: &mut out, verbose: cli.verbose };
    let result = match cli.subcommand {
        Subcommand::Orbit => commands::orbit(&mut ctx),
        Subcommand::Gmap => commands::gmap(&mut ctx),
        Subcommand::Melnikov => commands::melnikov(&mut ctx),
        Subcommand::Bound => commands::bound(&mut ctx),
        Subcommand::Tori => commands::tori(&mut ctx),
        Subcommand::Certify => commands::certify(&mut ctx),
        Subcommand::Chain => commands::chain(&mut ctx),
        Subcommand::Simulate => commands::simulate(&mut ctx),
        Subcommand::Scaling => commands::scaling(&mut ctx),
        Subcommand::ThreeScale => commands::three_scale(&mut ctx),
    };
    result.map_err(fail)?;
    let name = cli.subcommand.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    out.manifest(&name, &text, &config).map_err(|e| fail(e.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((failure, dir)) => {
            let (code, record) = error_record(&failure);
            let text = serde_json::to_string(&record).unwrap_or_default();
            eprintln!("{text}");
            if let Some(dir) = dir {
                let _ = std::fs::create_dir_all(&dir);
                let _ = std::fs::write(dir.join("error.json"), text + "\n");
            }
            ExitCode::from(code)
        }
    }
}
