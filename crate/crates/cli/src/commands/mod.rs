use std::path::Path;

use kropina_core::ChartManifold;

use crate::config::{self, RunConfig};
use crate::error::CliError;
use crate::io::Output;

pub mod connect;
pub mod describe;
pub mod geodesic;
pub mod probe;
pub mod reach;
pub mod verify;

pub use connect::{ConnectDoc, SolutionEntry, TraceStep};
pub use describe::DescribeDoc;
pub use verify::{PropertyReport, VerifyDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Describe,
    Connect,
    Verify,
    Reach,
    Geodesic,
    Zermelo,
    Probe,
    Convexity,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub eps_schedule: Option<Vec<f64>>,
    pub k_max: Option<u32>,
    pub grid: Option<usize>,
}

/// Everything a command needs: parsed config, its source text, merged overrides
/// and the output sink.
#[derive(Debug)]
pub struct Context {
    pub cfg: RunConfig,
    pub src: String,
    pub overrides: Overrides,
    pub out: Output,
}

pub const DEFAULT_TOL: f64 = 1e-9;

impl Context {
    pub fn load(config: &Path, overrides: Overrides, out: Option<&Path>) -> Result<Self, CliError> {
        let (cfg, src) = RunConfig::load(config)?;
        Self::from_parts(cfg, src, overrides, out)
    }

    pub fn from_source(src: &str, overrides: Overrides, out: Option<&Path>) -> Result<Self, CliError> {
        let cfg = RunConfig::parse(src)?;
        Self::from_parts(cfg, src.to_string(), overrides, out)
    }

    fn from_parts(cfg: RunConfig, src: String, overrides: Overrides, out: Option<&Path>) -> Result<Self, CliError> {
        if let Some(t) = overrides.tol {
            config::positive("--tol", t)?;
        }
        if let Some(s) = &overrides.eps_schedule {
            config::check_schedule(s)?;
        }
        Ok(Context { cfg, src, overrides, out: Output::new(out)? })
    }

    pub fn seed(&self) -> u64 {
        self.overrides.seed.or(self.cfg.seed).unwrap_or(0)
    }

    pub fn tol(&self) -> Result<f64, CliError> {
        match self.overrides.tol {
            Some(t) => Ok(t),
            None => self.cfg.tol_or(DEFAULT_TOL),
        }
    }

    pub fn manifold(&self) -> Result<ChartManifold, CliError> {
        self.cfg.manifold(&self.src)
    }

    pub fn run(&self, cmd: Command) -> Result<(), CliError> {
        match cmd {
            Command::Describe => describe::run(self),
            Command::Connect => connect::run(self, false),
            Command::Zermelo => connect::run(self, true),
            Command::Verify => verify::run(self),
            Command::Reach => reach::run(self),
            Command::Geodesic => geodesic::run(self),
            Command::Probe => probe::run_probe(self),
            Command::Convexity => probe::run_convexity(self),
        }
    }
}

/// Check a configured point against the chart, as a config error.
pub(crate) fn point(m: &ChartManifold, what: &str, x: &[f64]) -> Result<(), CliError> {
    m.check_point(x).map_err(|e| CliError::config(format!("`{what}`: {e}")))
}
