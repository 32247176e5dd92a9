use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::*;

/// Exit status when a command finished but raised stability flags.
const EXIT_FLAGGED: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "brdfmap", version, about = "Remap material appearance between BRDF models")]
struct Cli {
    /// TOML file with option defaults; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a target model to the renders of one uniform material
    Remap(RemapArgs),
    /// Remap a grid of source materials; optionally emit a database for fit-transform
    Sweep(SweepArgs),
    /// Fit a parametric transform to a remap database
    FitTransform(FitArgs),
    /// Remap SVBRDF texture maps through one or more fitted transforms
    RemapSvbrdf(SvbrdfArgs),
    /// Render a material spec on the sphere
    Render(RenderArgs),
    /// Compare two PFM images (prints l2, mean_ssim, mean_dissimilarity)
    Compare(CompareArgs),
    /// Remap to an intermediate model and back
    Roundtrip(RoundtripArgs),
    /// Evaluate transforms against the source appearance under several light angles
    LightStudy(LightStudyArgs),
}

/// Outcome of a command that ran to completion.
pub enum Status {
    Ok,
    Flagged(Vec<&'static str>),
}

fn category(e: &anyhow::Error) -> &'static str {
    if let Some(e) = e.downcast_ref::<brdfmap::Error>() {
        return e.category();
    }
    if e.downcast_ref::<std::io::Error>().is_some() || e.downcast_ref::<csv::Error>().is_some() {
        return "io";
    }
    if e.downcast_ref::<clap::Error>().is_some() {
        return "usage";
    }
    "internal"
}

fn report(category: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "category": category, "message": message }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                // --help / --version
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report("usage", e.to_string().trim());
            return ExitCode::FAILURE;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let cfg = cli.config.as_deref();
    let result = match &cli.command {
        Command::Remap(a) => cmd_remap(a, cfg),
        Command::Sweep(a) => cmd_sweep(a, cfg),
        Command::FitTransform(a) => cmd_fit_transform(a, cfg),
        Command::RemapSvbrdf(a) => cmd_remap_svbrdf(a, cfg),
        Command::Render(a) => cmd_render(a, cfg),
        Command::Compare(a) => cmd_compare(a, cfg),
        Command::Roundtrip(a) => cmd_roundtrip(a, cfg),
        Command::LightStudy(a) => cmd_light_study(a, cfg),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Flagged(flags)) => {
            eprintln!("{}", serde_json::json!({ "category": "stability", "flags": flags }));
            ExitCode::from(EXIT_FLAGGED)
        }
        Err(e) => {
            report(category(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
