//! Experiment front end: config ingestion, experiment execution, and
//! plot-ready CSV emission.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use heccsim_core::scenario::ConfigError;
use heccsim_core::ScenarioConfig;

/// Environment variable consulted when --config is absent.
pub const CONFIG_ENV: &str = "HECCSIM_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "heccsim",
    about = "Two-timescale service placement and resource allocation simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// Scenario configuration file (TOML). Falls back to $HECCSIM_CONFIG,
    /// then to built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds, comma-separated or a range like 0..20.
    #[arg(long, default_value = "0..10", value_parser = parse_seeds)]
    seeds: Seeds,
    /// Output directory for CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for seed-level parallelism (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Long-term frames per run (defaults to the configured value).
    #[arg(long)]
    frames: Option<usize>,
    /// Short slots per frame (defaults to the configured value).
    #[arg(long)]
    slots: Option<usize>,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(text: &str) -> Result<Seeds, String> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|e| format!("bad seed range: {e}"))?;
        let hi: u64 = hi.trim().parse().map_err(|e| format!("bad seed range: {e}"))?;
        if hi <= lo {
            return Err(format!("empty seed range {lo}..{hi}"));
        }
        return Ok(Seeds((lo..hi).collect()));
    }
    let seeds = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|e| format!("bad seed '{s}': {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if seeds.is_empty() {
        return Err("at least one seed is required".into());
    }
    Ok(Seeds(seeds))
}

#[derive(Debug, Clone)]
pub struct AlphaList(pub Vec<f64>);

fn parse_alpha_list(text: &str) -> Result<AlphaList, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad alpha '{s}': {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(AlphaList)
}

/// Sweep parameter grid: name:lo:hi:steps.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    EsRate,
    EnergyCap,
    LatencyCap,
    CostCap,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::EsRate => "es_rate",
            SweepParam::EnergyCap => "energy_cap",
            SweepParam::LatencyCap => "latency_cap",
            SweepParam::CostCap => "cost_cap",
        }
    }

    pub fn apply(&self, cfg: &mut ScenarioConfig, value: f64) {
        match self {
            SweepParam::EsRate => cfg.es_rate = value,
            SweepParam::EnergyCap => cfg.energy_cap = value,
            SweepParam::LatencyCap => cfg.latency_cap = value,
            SweepParam::CostCap => cfg.cost_cap = value,
        }
    }
}

impl SweepSpec {
    pub fn grid(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.lo];
        }
        (0..self.steps)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

fn parse_sweep(text: &str) -> Result<SweepSpec, String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 4 {
        return Err("sweep must be param:lo:hi:steps".into());
    }
    let param = match parts[0] {
        "es_rate" | "f_k" => SweepParam::EsRate,
        "energy_cap" | "e_max" => SweepParam::EnergyCap,
        "latency_cap" | "t_max" => SweepParam::LatencyCap,
        "cost_cap" | "x_max" => SweepParam::CostCap,
        other => return Err(format!("unknown sweep parameter '{other}'")),
    };
    let lo: f64 = parts[1].parse().map_err(|e| format!("bad sweep lo: {e}"))?;
    let hi: f64 = parts[2].parse().map_err(|e| format!("bad sweep hi: {e}"))?;
    let steps: usize = parts[3].parse().map_err(|e| format!("bad sweep steps: {e}"))?;
    if steps == 0 {
        return Err("sweep needs at least one step".into());
    }
    Ok(SweepSpec { param, lo, hi, steps })
}

#[derive(Debug, Clone)]
pub struct SchemeList(pub Vec<heccsim_core::benchmarks::Scheme>);

fn parse_schemes(text: &str) -> Result<SchemeList, String> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(SchemeList(heccsim_core::benchmarks::Scheme::standard_set()));
    }
    text.split(',')
        .map(|s| {
            heccsim_core::benchmarks::Scheme::parse(s)
                .ok_or_else(|| format!("unknown scheme '{s}'"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(SchemeList)
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the two-timescale loop and emit the slot-level trace.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Schemes to run (comma separated codes, or "all").
        #[arg(long, default_value = "PROPOSED", value_parser = parse_schemes)]
        schemes: SchemeList,
        /// Penalty weight for the long-term loop.
        #[arg(long, default_value_t = 1e4)]
        alpha: f64,
    },
    /// Iteration traces of both iterative algorithms.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        /// Penalty weights for the long-term traces.
        #[arg(long, default_value = "10,500,1000,1e4,1e6", value_parser = parse_alpha_list)]
        alpha: AlphaList,
    },
    /// Benchmark comparison: metric table, time series and CDFs.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "all", value_parser = parse_schemes)]
        schemes: SchemeList,
        #[arg(long, default_value_t = 1e4)]
        alpha: f64,
    },
    /// Penalty-SCA versus exact search on a small instance.
    OracleGap {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1e4)]
        alpha: f64,
    },
    /// Parameter sweep re-running the comparison on a grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "all", value_parser = parse_schemes)]
        schemes: SchemeList,
        /// Grid as param:lo:hi:steps with param in es_rate, energy_cap,
        /// latency_cap, cost_cap.
        #[arg(long, value_parser = parse_sweep)]
        sweep: SweepSpec,
        #[arg(long, default_value_t = 1e4)]
        alpha: f64,
    },
}

fn load_config(common: &CommonArgs) -> Result<ScenarioConfig, ConfigError> {
    let path = common
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    match path {
        Some(p) => ScenarioConfig::load(&p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn setup_workers(workers: usize) {
    if workers > 0 {
        // Ignore failure: the global pool can only be built once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful terminations.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Run { common, schemes, alpha } => commands::cmd_run(&common, &schemes.0, alpha),
        Command::Convergence { common, alpha } => commands::cmd_convergence(&common, &alpha.0),
        Command::Compare { common, schemes, alpha } => {
            commands::cmd_compare(&common, &schemes.0, alpha)
        }
        Command::OracleGap { common, alpha } => commands::cmd_oracle_gap(&common, alpha),
        Command::Sweep { common, schemes, sweep, alpha } => {
            commands::cmd_sweep(&common, &schemes.0, &sweep, alpha)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
