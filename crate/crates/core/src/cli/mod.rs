//! Config-driven command line front end.
//!
//! Every run reads one JSON [`RunConfig`]; flags only override the scalar
//! entries `out`, `seed`, and `threads`. Exit codes: 0 success, 2 invalid
//! input or config, 3 numerical failure, 4 I/O failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    CalibrationConfig, DecomposeConfig, FitRunConfig, GridSpec, KineticsConfig, ModelSpec, RunConfig, SimulateConfig,
    SweepConfig, SynthConfig,
};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "nvpd", version, about = "Spin and charge photodynamics of NV centers")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Random seed (overrides `seed` in the config).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for parallel sweeps and fits.
    #[arg(long, global = true, value_name = "N", env = "NVPD_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Model PL traces and contrast at each power.
    Simulate,
    /// Synthetic photon-count histograms.
    Synth,
    /// Global fit of m_s = 0 and m_s = ±1 traces at every power.
    Fit {
        /// Fit without ionization and recombination.
        #[arg(long)]
        no_charge: bool,
    },
    /// Contrast, SNR, and NV⁰ population over a Γ_ion × Γ_rec grid.
    Sweep,
    /// Static and dynamic parts of the contrast loss.
    Decompose,
    /// Dark charge-conversion decays and their power dependence.
    Kinetics,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Synth => "synth",
            Command::Fit { .. } => "fit",
            Command::Sweep => "sweep",
            Command::Decompose => "decompose",
            Command::Kinetics => "kinetics",
        }
    }
}

/// Exit code for a failed run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Csv { source, .. } if source.is_io_error() => EXIT_IO,
        Error::Csv { .. }
        | Error::Json { .. }
        | Error::Config(_)
        | Error::InvalidParameter { .. }
        | Error::InvalidLifetime { .. }
        | Error::InvalidTimes(_) => EXIT_SCHEMA,
        _ => EXIT_NUMERIC,
    }
}

/// Run record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// SHA-256 of the effective command configuration.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub details: serde_json::Value,
}

/// Hex SHA-256 of a value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub(crate) struct Context {
    pub out: PathBuf,
    pub seed: Option<u64>,
}

impl Context {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn manifest<T: Serialize>(
        &self,
        command: Command,
        effective: &T,
        outputs: Vec<String>,
        details: serde_json::Value,
    ) -> Result<()> {
        let m = Manifest {
            tool: "nvpd",
            version: env!("CARGO_PKG_VERSION"),
            command: command.name(),
            config_hash: config_hash(effective),
            seed: self.seed,
            outputs,
            details,
        };
        crate::io::write_json(&self.path("manifest.json"), &m)
    }
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Context {
        out: cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| Path::new("nvpd-out").to_path_buf()),
        seed: cli.seed.or(cfg.seed),
    };
    let threads = cli.threads.or(cfg.threads);
    let go = || -> Result<()> {
        crate::io::create_dir(&ctx.out)?;
        match cli.command {
            Command::Simulate => commands::simulate(&ctx, &RunConfig::section(&cfg.simulate, "simulate")?),
            Command::Synth => commands::synth(&ctx, &RunConfig::section(&cfg.synth, "synth")?),
            Command::Fit { no_charge } => {
                let mut f = RunConfig::section(&cfg.fit, "fit")?;
                f.no_charge |= no_charge;
                commands::fit(&ctx, &f)
            }
            Command::Sweep => commands::sweep(&ctx, &RunConfig::section(&cfg.sweep, "sweep")?),
            Command::Decompose => commands::decompose(&ctx, &RunConfig::section(&cfg.decompose, "decompose")?),
            Command::Kinetics => commands::kinetics(&ctx, &RunConfig::section(&cfg.kinetics, "kinetics")?),
        }
    };
    match threads {
        Some(0) => Err(Error::Config("threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?
            .install(go),
        None => go(),
    }
}

/// Parses `args`, runs, reports errors on stderr, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_SCHEMA } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("nvpd {}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable() {
        let a = config_hash(&serde_json::json!({"x": 1.5}));
        assert_eq!(a, config_hash(&serde_json::json!({"x": 1.5})));
        assert_ne!(a, config_hash(&serde_json::json!({"x": 1.25})));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_SCHEMA);
        assert_eq!(exit_code(&Error::CannotNormalize), EXIT_NUMERIC);
        let io = Error::Io { path: "p".into(), source: std::io::Error::other("x") };
        assert_eq!(exit_code(&io), EXIT_IO);
    }

    #[test]
    fn flags_after_subcommand() {
        let c = Cli::try_parse_from(["nvpd", "fit", "--no-charge", "--seed", "3", "--out", "o"]).unwrap();
        assert_eq!(c.command, Command::Fit { no_charge: true });
        assert_eq!(c.seed, Some(3));
        assert!(Cli::try_parse_from(["nvpd", "bogus"]).is_err());
    }
}
