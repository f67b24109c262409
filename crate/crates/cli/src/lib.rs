//! Command-line front end for the lipalpha experiments.
//!
//! [`run`] takes the parsed arguments and the transform implementation, so
//! tests can drive every subcommand in-process.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};

use lipalpha_core::estimates::CauchyTransforms;

use commands::{Ctx, Failure, Report, EXIT_CONFIG, EXIT_PRECONDITION};
use config::ConfigError;
use output::{persist, sha256_hex, Bundle, Format, RunManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Design,
    Wiener,
    Diffquot,
    Lemmas,
    Seminorm,
    Fubini,
    Identity,
    That,
}

#[derive(Debug, Parser)]
#[command(name = "lipalpha", version, about = "Point-derivation experiments on Swiss-cheese domains")]
pub struct Cli {
    pub command: Command,
    /// JSON or TOML (by extension) configuration for the command.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "lipalpha-out")]
    pub out: PathBuf,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Csv, Format::Json, Format::Svg])]
    pub format: Vec<Format>,
}

#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub messages: Vec<String>,
    /// Files written, present for exit codes 0, 3 and 4.
    pub bundle: Option<Bundle>,
}

fn execute(cli: &Cli, text: &str, tr: &dyn CauchyTransforms) -> Result<(Report, u64, Vec<output::FileHash>), Failure> {
    let base = cli.config.parent().map(Path::to_path_buf).unwrap_or_default();
    macro_rules! dispatch {
        ($cfg:ty, $f:path) => {{
            let cfg: $cfg = config::parse(&cli.config, text)?;
            let seed = cli.seed.or(cfg.seed).unwrap_or(0);
            let mut ctx = Ctx {
                base,
                seed,
                tr,
                inputs: Vec::new(),
            };
            let report = $f(&cfg, &mut ctx)?;
            Ok((report, seed, ctx.inputs))
        }};
    }
    match cli.command {
        Command::Design => dispatch!(config::DesignConfig, commands::design),
        Command::Wiener => dispatch!(config::WienerConfig, commands::wiener),
        Command::Diffquot => dispatch!(config::DiffquotConfig, commands::diffquot),
        Command::Lemmas => dispatch!(config::LemmasConfig, commands::lemmas),
        Command::Seminorm => dispatch!(config::SeminormConfig, commands::seminorm),
        Command::Fubini => dispatch!(config::FubiniConfig, commands::fubini),
        Command::Identity => dispatch!(config::IdentityConfig, commands::identity),
        Command::That => dispatch!(config::ThatConfig, commands::that),
    }
}

/// Runs one subcommand. Nothing is written for exit codes 1 and 2.
pub fn run(cli: &Cli, tr: &dyn CauchyTransforms) -> Outcome {
    let start = Instant::now();
    let fail = |code, msg: String| Outcome {
        code,
        messages: vec![msg],
        bundle: None,
    };
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, ConfigError::Read(format!("{}: {e}", cli.config.display())).to_string()),
    };
    let (mut report, seed, inputs) = match execute(cli, &text, tr) {
        Ok(r) => r,
        Err(Failure::Config(e)) => return fail(EXIT_CONFIG, e.to_string()),
        Err(Failure::Precondition(m)) => return fail(EXIT_PRECONDITION, format!("precondition failed: {m}")),
    };
    report.bundle.retain_formats(&cli.format);
    report.bundle.seeds.entry("master".into()).or_insert(seed);
    let manifest = RunManifest {
        tool: "lipalpha".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: format!("{:?}", cli.command).to_lowercase(),
        exit_code: report.code,
        config_sha256: sha256_hex(text.as_bytes()),
        inputs,
        seeds: report.bundle.seeds.clone(),
        outputs: Vec::new(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    if let Err(e) = persist(&cli.out, &report.bundle, manifest) {
        return fail(EXIT_CONFIG, format!("cannot write outputs to {}: {e}", cli.out.display()));
    }
    Outcome {
        code: report.code,
        messages: report.messages,
        bundle: Some(report.bundle),
    }
}
