use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Parser)]
#[command(name = "bilevel-flow", version, about = "Message-passing routing, tolling and flow-control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory. Falls back to $BILEVEL_FLOW_OUT, then `results`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Non-atomic equilibrium by message passing, traced against the convex oracle.
    Equilibrium(EquilibriumArgs),
    /// Bilevel toll optimization.
    Toll(TollArgs),
    /// Integer-flow games and their tolls.
    Atomic(AtomicArgs),
    /// Resistance tuning on undirected networks, message passing against global descent.
    FlowControl(FlowControlArgs),
    /// Centralized reference solutions.
    Oracle(OracleArgs),
    /// Write a generated network file.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Independent runs with seeds `seed, seed+1, ...`.
    #[arg(long, default_value_t = 1)]
    pub realizations: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NetworkArgs {
    /// Directed random regular graph: node count and degree.
    #[arg(long, num_args = 2, value_names = ["N", "D"])]
    pub rrg: Option<Vec<usize>>,
    /// Rewired square lattice: side and rewiring probability.
    #[arg(long, num_args = 2, value_names = ["SIDE", "P_RW"])]
    pub small_world: Option<Vec<f64>>,
    /// Network file, or `siouxfalls` for the bundled one.
    #[arg(long)]
    pub network: Option<String>,
    /// Number of destinations on generated networks.
    #[arg(long, default_value_t = 1)]
    pub destinations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Grounded,
    Constrained,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EquilibriumArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub net: NetworkArgs,
    #[arg(long, value_enum, default_value_t = Method::Grounded)]
    pub method: Method,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 5000)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Fail with exit code 4 if flows differ from the oracle by more than `check_tol`.
    #[arg(long)]
    pub check: bool,
    #[arg(long, default_value_t = 1e-6)]
    pub check_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Rank edges by full-cost reduction.
    Gain,
    Random,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TollArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub net: NetworkArgs,
    #[arg(long, default_value_t = 1.0)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 50)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Toll only this fraction of edges.
    #[arg(long)]
    pub tollable: Option<f64>,
    #[arg(long, value_enum, default_value_t = Selection::Gain)]
    pub selection: Selection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Case {
    #[value(name = "I")]
    I,
    #[value(name = "II")]
    II,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AtomicArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Sioux Falls preset: 3 sources with 4 (I) or 6 (II) users.
    #[arg(long, value_enum)]
    pub case: Option<Case>,
    #[arg(long, default_value_t = 3)]
    pub sources: usize,
    #[arg(long, default_value_t = 4)]
    pub users_per_source: i64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[arg(long, default_value_t = 30)]
    pub sweeps: usize,
    /// Tolls below this fraction of `tau_max` are dropped when that does not raise the cost.
    #[arg(long, default_value_t = 0.15)]
    pub threshold: f64,
    /// Fail with exit code 4 if the equilibrium potential misses the exact minimum.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct UndirectedArgs {
    /// Undirected random regular graph: node count and degree.
    #[arg(long, num_args = 2, value_names = ["N", "D"])]
    pub rrg: Option<Vec<usize>>,
    /// Open square lattice side.
    #[arg(long)]
    pub lattice: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub sources: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FlowControlArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub net: UndirectedArgs,
    #[arg(long, default_value_t = 5)]
    pub targets: usize,
    #[arg(long, default_value_t = 0.1)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.9)]
    pub r_min: f64,
    #[arg(long, default_value_t = 1.1)]
    pub r_max: f64,
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
    #[arg(long, value_enum, default_value_t = Method::Constrained)]
    pub method: Method,
    /// Message-passing sweep budget.
    #[arg(long, default_value_t = 10_000)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 300)]
    pub ggd_iters: usize,
    /// Cap on sweeps of the gradient-error trace at fixed r; it stops at convergence.
    #[arg(long, default_value_t = 5000)]
    pub trace_sweeps: usize,
    /// Fail with exit code 4 if converged gradients differ from the exact ones (MSE above 1e-10).
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    Equilibrium,
    Social,
    Laplacian,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub net: NetworkArgs,
    /// Undirected networks for `--mode laplacian`.
    #[command(flatten)]
    #[serde(rename = "undirected")]
    pub und: OracleUndirected,
    #[arg(long, value_enum, default_value_t = OracleMode::Equilibrium)]
    pub mode: OracleMode,
    /// Uniform toll on every edge.
    #[arg(long, default_value_t = 0.0)]
    pub toll: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleUndirected {
    /// Open square lattice side, for `--mode laplacian`; with `--rrg` the graph is undirected.
    #[arg(long)]
    pub lattice: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub sources: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub net: NetworkArgs,
}

impl Command {
    pub fn run_args(&self) -> &RunArgs {
        match self {
            Command::Equilibrium(a) => &a.run,
            Command::Toll(a) => &a.run,
            Command::Atomic(a) => &a.run,
            Command::FlowControl(a) => &a.run,
            Command::Oracle(a) => &a.run,
            Command::Generate(a) => &a.run,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Equilibrium(_) => "equilibrium",
            Command::Toll(_) => "toll",
            Command::Atomic(_) => "atomic",
            Command::FlowControl(_) => "flow-control",
            Command::Oracle(_) => "oracle",
            Command::Generate(_) => "generate",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the JSON config.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_json().as_bytes());
        hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let run = self.run_args();
        if run.realizations == 0 {
            return Err(CliError::Config("--realizations must be at least 1".into()));
        }
        match self {
            Command::Equilibrium(a) => {
                a.net.validate()?;
                positive("--learning-rate", a.learning_rate)?;
                positive("--tolerance", a.tolerance)
            }
            Command::Toll(a) => {
                a.net.validate()?;
                non_negative("--tau-max", a.tau_max)?;
                positive("--learning-rate", a.learning_rate)?;
                match a.tollable {
                    Some(f) if !(f > 0.0 && f <= 1.0) => Err(CliError::Config(format!("--tollable {f} outside (0, 1]"))),
                    _ => Ok(()),
                }
            }
            Command::Atomic(a) => {
                a.net.validate()?;
                non_negative("--tau-max", a.tau_max)?;
                non_negative("--threshold", a.threshold)?;
                if a.users_per_source < 0 {
                    return Err(CliError::Config("--users-per-source must be non-negative".into()));
                }
                Ok(())
            }
            Command::FlowControl(a) => {
                match (&a.net.rrg, a.net.lattice) {
                    (Some(v), None) if v.len() == 2 => {}
                    (None, Some(_)) => {}
                    _ => return Err(CliError::Config("give exactly one of --rrg N D or --lattice SIDE".into())),
                }
                positive("--step", a.step)?;
                if !(a.r_min > 0.0 && a.r_min <= 1.0 && a.r_max >= 1.0) {
                    return Err(CliError::Config("need 0 < r_min <= 1 <= r_max".into()));
                }
                Ok(())
            }
            Command::Oracle(a) => {
                if a.mode == OracleMode::Laplacian {
                    let ok = a.und.lattice.is_some() as usize + a.net.rrg.is_some() as usize == 1
                        && a.net.small_world.is_none()
                        && a.net.network.is_none();
                    if !ok {
                        return Err(CliError::Config("laplacian mode takes --rrg N D or --lattice SIDE".into()));
                    }
                    Ok(())
                } else {
                    non_negative("--toll", a.toll)?;
                    a.net.validate()
                }
            }
            Command::Generate(a) => {
                a.net.validate()?;
                if a.net.network.is_some() {
                    return Err(CliError::Config("generate needs --rrg or --small-world".into()));
                }
                Ok(())
            }
        }
    }
}

impl NetworkArgs {
    pub fn validate(&self) -> Result<(), CliError> {
        let given = self.rrg.is_some() as usize + self.small_world.is_some() as usize + self.network.is_some() as usize;
        if given != 1 {
            return Err(CliError::Config("give exactly one of --rrg, --small-world, --network".into()));
        }
        if let Some(sw) = &self.small_world {
            if sw[0] < 3.0 || sw[0].fract() != 0.0 || !(0.0..=1.0).contains(&sw[1]) {
                return Err(CliError::Config("--small-world needs an integer side >= 3 and p in [0, 1]".into()));
            }
        }
        if self.destinations == 0 {
            return Err(CliError::Config("--destinations must be at least 1".into()));
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be non-negative, got {v}")))
    }
}
