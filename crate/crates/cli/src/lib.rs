//! Command-line front end: argument parsing, config resolution and report
//! output around the `targetkit-core` pipelines.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use targetkit_core::{Error, Result};

use config::{Format, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_COMPUTATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "targetkit",
    version,
    about = "Analyze multi-arm experiments and learn capacity-constrained assignment policies"
)]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Experiment CSV.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Column-role JSON for the input CSV.
    #[arg(long, global = true)]
    pub schema: Option<PathBuf>,
    /// Run configuration JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report formats; repeat or comma-separate.
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    pub format: Vec<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average effects of each program against control.
    Ate,
    /// Covariate balance between each program and control.
    Balance,
    /// Cross-fitted conditional effects per row.
    Cate,
    /// Subgroup effects with Romano-Wolf adjusted p-values.
    Mht,
    /// Policy learning, assignment and evaluation.
    #[command(subcommand)]
    Policy(PolicyCommand),
    /// Generate a synthetic experiment with known effects.
    Simulate {
        /// Named preset; overrides the config's simulate section.
        #[arg(long)]
        preset: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum PolicyCommand {
    /// Search a shallow policy tree on doubly-robust rewards.
    Learn,
    /// Capacity-constrained assignment from effect predictions.
    Assign,
    /// Doubly-robust value of a stored policy.
    Evaluate,
    /// Targeted, random and status-quo policies compared end to end.
    Compare,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ate => "ate",
            Command::Balance => "balance",
            Command::Cate => "cate",
            Command::Mht => "mht",
            Command::Policy(PolicyCommand::Learn) => "policy-learn",
            Command::Policy(PolicyCommand::Assign) => "policy-assign",
            Command::Policy(PolicyCommand::Evaluate) => "policy-evaluate",
            Command::Policy(PolicyCommand::Compare) => "policy-compare",
            Command::Simulate { .. } => "simulate",
        }
    }
}

/// Merges the config file with command-line flags (flags win).
pub fn resolve_config(flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &flags.input {
        cfg.input = Some(p.clone());
    }
    if let Some(p) = &flags.schema {
        cfg.schema = Some(p.clone());
    }
    if let Some(p) = &flags.out {
        cfg.out = Some(p.clone());
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if !flags.format.is_empty() {
        let mut f = flags.format.clone();
        f.sort();
        f.dedup();
        cfg.formats = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("TARGETKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "TARGETKIT_THREADS must be a positive integer, got '{v}'"
        ))
    })?;
    // A second initialization in the same process is harmless.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_COMPUTATION
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("targetkit {}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    configure_threads()?;
    let cfg = resolve_config(&cli.flags)?;
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let outputs = commands::dispatch(&cli.command, &cfg)?;
    outputs.commit(&out_dir)
}
