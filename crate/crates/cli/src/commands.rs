//! Experiment commands behind the CLI subcommands.

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use heccsim_core::benchmarks::{self, Scheme};
use heccsim_core::bnb::{BnbOptions, SearchMode};
use heccsim_core::longterm::{self, LspInputs, LspPins};
use heccsim_core::model::ModelParams;
use heccsim_core::orchestrator::{self, RunOptions, RunTrace};
use heccsim_core::scenario::{Scenario, Stream};
use heccsim_core::shortterm;
use heccsim_core::ScenarioConfig;

use crate::output::{CsvWriter, Field};
use crate::{CommonArgs, SweepSpec};

pub const RUN_TRACE_HEADER: &str =
    "frame,slot,scheme,seed,objective,latency_total,cost_total,trigger,feasible";
pub const CONVERGENCE_HEADER: &str = "algorithm,alpha,M,K,iteration,objective,penalty";
pub const COMPARE_HEADER: &str = "scheme,seed,metric,value";
pub const ORACLE_HEADER: &str = "frame,alg2_obj,bnb_obj,gap_pct";
pub const CDF_HEADER: &str = "metric,threshold,scheme,fraction";
pub const SWEEP_HEADER: &str = "param,grid_value,scheme,seed,metric,value";

fn run_one(
    cfg: &ScenarioConfig,
    seed: u64,
    scheme: Scheme,
    alpha: f64,
    common: &CommonArgs,
    oracle: Option<BnbOptions>,
) -> Result<RunTrace> {
    let scenario = Scenario::build(ScenarioConfig { rng_seed: seed, ..cfg.clone() })
        .map_err(|e| anyhow!("scenario: {e}"))?;
    orchestrator::run(
        &scenario,
        &RunOptions {
            scheme,
            penalty: alpha,
            frames: common.frames,
            slots_per_frame: common.slots,
            oracle,
        },
    )
    .map_err(|e| anyhow!("{}: seed {seed}: {e}", scheme.code()))
}

fn write_run_traces(
    writer: &mut CsvWriter,
    traces: &[(Scheme, u64, RunTrace)],
) -> Result<()> {
    for (scheme, seed, trace) in traces {
        let code = scheme.code();
        for s in &trace.slots {
            writer.row(&[
                Field::Int(s.frame as i64),
                Field::Int(s.slot as i64),
                Field::Text(&code),
                Field::Int(*seed as i64),
                Field::Float(s.objective),
                Field::Float(s.latency_total),
                Field::Float(s.cost_total),
                Field::Flag(s.trigger),
                Field::Flag(s.feasible),
            ])?;
        }
    }
    Ok(())
}

/// Collect traces for a scheme-by-seed grid in parallel, deterministically
/// ordered by (seed, scheme position).
fn collect_traces(
    cfg: &ScenarioConfig,
    schemes: &[Scheme],
    seeds: &[u64],
    alpha: f64,
    common: &CommonArgs,
) -> Result<Vec<(Scheme, u64, RunTrace)>> {
    let mut jobs = Vec::new();
    for &seed in seeds {
        for (i, &scheme) in schemes.iter().enumerate() {
            jobs.push((seed, i, scheme));
        }
    }
    let mut out: Vec<(u64, usize, Scheme, RunTrace)> = jobs
        .par_iter()
        .map(|&(seed, i, scheme)| {
            run_one(cfg, seed, scheme, alpha, common, None).map(|t| (seed, i, scheme, t))
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|(seed, i, _, _)| (*seed, *i));
    Ok(out.into_iter().map(|(seed, _, scheme, t)| (scheme, seed, t)).collect())
}

pub fn cmd_run(common: &CommonArgs, schemes: &[Scheme], alpha: f64) -> Result<()> {
    crate::setup_workers(common.workers);
    let cfg = crate::load_config(common)?;
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    let traces = collect_traces(&cfg, schemes, &common.seeds.0, alpha, common)?;
    let mut writer = CsvWriter::create(&common.out, "run_trace.csv", RUN_TRACE_HEADER)?;
    write_run_traces(&mut writer, &traces)?;
    let path = writer.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_convergence(common: &CommonArgs, alphas: &[f64]) -> Result<()> {
    crate::setup_workers(common.workers);
    let cfg = crate::load_config(common)?;
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    let seed = *common.seeds.0.first().context("at least one seed")?;
    let mut writer = CsvWriter::create(&common.out, "convergence.csv", CONVERGENCE_HEADER)?;

    // Long-term traces across the penalty grid on the base size.
    for &alpha in alphas {
        let trace = longterm_trace(&cfg, seed, alpha)?;
        for row in &trace {
            writer.row(&[
                Field::Text("alg2"),
                Field::Float(alpha),
                Field::Int(cfg.num_ues as i64),
                Field::Int(cfg.num_ess as i64),
                Field::Int(row.iteration as i64),
                Field::Float(row.penalized_objective),
                Field::Float(row.penalty_value),
            ])?;
        }
    }

    // Size sensitivity for both loops at the default penalty weight.
    for &(m, k) in &[(8usize, 2usize), (10, 2), (10, 4)] {
        let sized = ScenarioConfig { num_ues: m, num_ess: k, ..cfg.clone() };
        let trace = longterm_trace(&sized, seed, longterm::DEFAULT_PENALTY)?;
        for row in &trace {
            writer.row(&[
                Field::Text("alg2"),
                Field::Float(longterm::DEFAULT_PENALTY),
                Field::Int(m as i64),
                Field::Int(k as i64),
                Field::Int(row.iteration as i64),
                Field::Float(row.penalized_objective),
                Field::Float(row.penalty_value),
            ])?;
        }
        let ssp = shortterm_trace(&sized, seed)?;
        for row in &ssp {
            // The penalty column carries the residual for the short-term
            // loop, which has no integrality penalty.
            writer.row(&[
                Field::Text("alg3"),
                Field::Float(0.0),
                Field::Int(m as i64),
                Field::Int(k as i64),
                Field::Int(row.iteration as i64),
                Field::Float(row.objective),
                Field::Float(row.max_constraint_residual),
            ])?;
        }
    }
    let path = writer.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}

/// One standalone long-term solve on a fresh scenario.
pub fn longterm_trace(
    cfg: &ScenarioConfig,
    seed: u64,
    alpha: f64,
) -> Result<Vec<longterm::LspTraceRow>> {
    let scenario = Scenario::build(ScenarioConfig { rng_seed: seed, ..cfg.clone() })
        .map_err(|e| anyhow!("scenario: {e}"))?;
    let params = ModelParams::from_scenario(&scenario);
    let channel = scenario.draw_slot_channel(&mut scenario.substream(Stream::Channels));
    let requests = scenario.initial_requests(&mut scenario.substream(Stream::Requests)).service;
    let tasks = scenario.draw_slot_tasks(
        &mut scenario.substream(Stream::Tasks),
        &heccsim_core::scenario::RequestState { service: requests.clone(), regenerations: 0 },
    );
    let alloc = shortterm::default_allocation(&params, &channel, &tasks);
    let prev = vec![false; cfg.num_services * cfg.num_ess];
    let inputs = LspInputs {
        params: &params,
        channel: &channel,
        tasks: &tasks,
        requests: &requests,
        alloc: &alloc,
        prev_placement: &prev,
    };
    let mut rng = scenario.substream(Stream::Anchors);
    let out = longterm::solve_lsp(
        &inputs,
        alpha,
        &LspPins::none(),
        &mut rng,
        longterm::LSP_TOL,
        longterm::LSP_MAX_ITER,
    )
    .map_err(|e| anyhow!("long-term solve: {e}"))?;
    Ok(out.trace)
}

/// One standalone short-term solve following a long-term pass.
pub fn shortterm_trace(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<shortterm::SspTraceRow>> {
    let scenario = Scenario::build(ScenarioConfig { rng_seed: seed, ..cfg.clone() })
        .map_err(|e| anyhow!("scenario: {e}"))?;
    let params = ModelParams::from_scenario(&scenario);
    let channel = scenario.draw_slot_channel(&mut scenario.substream(Stream::Channels));
    let requests = scenario.initial_requests(&mut scenario.substream(Stream::Requests)).service;
    let tasks = scenario.draw_slot_tasks(
        &mut scenario.substream(Stream::Tasks),
        &heccsim_core::scenario::RequestState { service: requests.clone(), regenerations: 0 },
    );
    let alloc = shortterm::default_allocation(&params, &channel, &tasks);
    let prev = vec![false; cfg.num_services * cfg.num_ess];
    let inputs = LspInputs {
        params: &params,
        channel: &channel,
        tasks: &tasks,
        requests: &requests,
        alloc: &alloc,
        prev_placement: &prev,
    };
    let mut rng = scenario.substream(Stream::Anchors);
    let lsp = longterm::solve_lsp(
        &inputs,
        longterm::DEFAULT_PENALTY,
        &LspPins::none(),
        &mut rng,
        longterm::LSP_TOL,
        longterm::LSP_MAX_ITER,
    )
    .map_err(|e| anyhow!("long-term solve: {e}"))?;
    let out = shortterm::solve_ssp(
        &params,
        &lsp.decision,
        &channel,
        &tasks,
        &Default::default(),
        0.0,
        shortterm::SSP_TOL,
        shortterm::SSP_MAX_ITER,
    )
    .map_err(|e| anyhow!("short-term solve: {e}"))?;
    Ok(out.trace)
}

pub fn cmd_compare(common: &CommonArgs, schemes: &[Scheme], alpha: f64) -> Result<()> {
    crate::setup_workers(common.workers);
    if schemes.len() < 2 {
        bail!("compare needs at least two schemes");
    }
    let cfg = crate::load_config(common)?;
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    let traces = collect_traces(&cfg, schemes, &common.seeds.0, alpha, common)?;

    // Slot-level time series.
    let mut trace_writer = CsvWriter::create(&common.out, "run_trace.csv", RUN_TRACE_HEADER)?;
    write_run_traces(&mut trace_writer, &traces)?;
    let trace_path = trace_writer.finish()?;

    // Metric table.
    let mut compare_writer = CsvWriter::create(&common.out, "compare.csv", COMPARE_HEADER)?;
    for (scheme, seed, trace) in &traces {
        let m = benchmarks::summarize(*scheme, *seed, trace);
        let code = scheme.code();
        for (name, value) in [
            ("mean_latency_total", m.mean_latency_total),
            ("mean_cost", m.mean_cost),
            ("mean_objective", m.mean_objective),
            ("mean_offload", m.mean_offload),
            ("feasible_rate", m.feasible_rate),
            ("triggers", m.trigger_count as f64),
            ("worst_latency", m.worst_latency),
        ] {
            compare_writer.row(&[
                Field::Text(&code),
                Field::Int(*seed as i64),
                Field::Text(name),
                Field::Float(value),
            ])?;
        }
    }
    let compare_path = compare_writer.finish()?;

    // Feasibility CDFs against deadline and budget thresholds.
    let mut cdf_writer = CsvWriter::create(&common.out, "cdf.csv", CDF_HEADER)?;
    let latency_grid: Vec<f64> =
        (0..=10).map(|i| cfg.latency_cap * (0.25 + 0.15 * i as f64)).collect();
    let max_cost = traces
        .iter()
        .flat_map(|(_, _, t)| t.frames.iter().map(|f| f.cost))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let cost_grid: Vec<f64> = (0..=10).map(|i| max_cost * 0.12 * i as f64).collect();
    for &scheme in schemes {
        let code = scheme.code();
        let worst: Vec<f64> = traces
            .iter()
            .filter(|(s, _, _)| *s == scheme)
            .flat_map(|(_, _, t)| t.slots.iter().map(|s| s.worst_latency))
            .collect();
        for &threshold in &latency_grid {
            let fraction = if worst.is_empty() {
                0.0
            } else {
                worst.iter().filter(|&&w| w <= threshold).count() as f64 / worst.len() as f64
            };
            cdf_writer.row(&[
                Field::Text("worst_latency"),
                Field::Float(threshold),
                Field::Text(&code),
                Field::Float(fraction),
            ])?;
        }
        let costs: Vec<f64> = traces
            .iter()
            .filter(|(s, _, _)| *s == scheme)
            .flat_map(|(_, _, t)| t.frames.iter().map(|f| f.cost))
            .collect();
        for &threshold in &cost_grid {
            let fraction = if costs.is_empty() {
                0.0
            } else {
                costs.iter().filter(|&&c| c <= threshold).count() as f64 / costs.len() as f64
            };
            cdf_writer.row(&[
                Field::Text("frame_cost"),
                Field::Float(threshold),
                Field::Text(&code),
                Field::Float(fraction),
            ])?;
        }
    }
    let cdf_path = cdf_writer.finish()?;

    println!("wrote {}", trace_path.display());
    println!("wrote {}", compare_path.display());
    println!("wrote {}", cdf_path.display());
    Ok(())
}

/// Default small instance for the exact-search comparison.
fn oracle_config() -> ScenarioConfig {
    ScenarioConfig {
        num_ues: 4,
        num_ess: 2,
        num_services: 3,
        max_services_per_es: 3,
        ..Default::default()
    }
}

pub fn cmd_oracle_gap(common: &CommonArgs, alpha: f64) -> Result<()> {
    crate::setup_workers(common.workers);
    let cfg = match crate::load_config(common) {
        Ok(c) if common.config.is_some() || std::env::var_os(crate::CONFIG_ENV).is_some() => c,
        Ok(_) => oracle_config(),
        Err(e) => return Err(anyhow!("{e}")),
    };
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    let layout = longterm::LspLayout::new(cfg.num_ues, cfg.num_ess, cfg.num_services);
    if layout.core_count() > 32 {
        bail!(
            "instance has {} binary variables; the exact-search cap is 32",
            layout.core_count()
        );
    }
    let seed = *common.seeds.0.first().context("at least one seed")?;
    let trace = run_one(
        &cfg,
        seed,
        Scheme::Proposed,
        alpha,
        common,
        Some(BnbOptions { mode: SearchMode::BranchAndBound, ..Default::default() }),
    )?;
    let mut writer = CsvWriter::create(&common.out, "oracle.csv", ORACLE_HEADER)?;
    let frames = common.frames.unwrap_or(cfg.frames);
    let mut last: Option<&heccsim_core::orchestrator::OracleRecord> = None;
    let mut iter = trace.oracle.iter().peekable();
    for frame in 0..frames {
        while iter.peek().map_or(false, |r| r.frame <= frame) {
            last = iter.next();
        }
        if let Some(r) = last {
            let gap = if r.exact_objective.abs() > 1e-300 {
                100.0 * (r.alg_objective - r.exact_objective) / r.exact_objective
            } else {
                0.0
            };
            writer.row(&[
                Field::Int(frame as i64),
                Field::Float(r.alg_objective),
                Field::Float(r.exact_objective),
                Field::Float(gap),
            ])?;
        }
    }
    let path = writer.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_sweep(
    common: &CommonArgs,
    schemes: &[Scheme],
    sweep: &SweepSpec,
    alpha: f64,
) -> Result<()> {
    crate::setup_workers(common.workers);
    let cfg = crate::load_config(common)?;
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    let grid = sweep.grid();
    if grid.is_empty() {
        bail!("empty sweep grid");
    }
    let mut writer = CsvWriter::create(&common.out, "sweep.csv", SWEEP_HEADER)?;
    for &value in &grid {
        let mut point = cfg.clone();
        sweep.param.apply(&mut point, value);
        point.validate().map_err(|e| anyhow!("{e}"))?;
        let metrics = benchmarks::run_comparison(
            &point,
            schemes,
            &common.seeds.0,
            common.frames,
            common.slots,
        )
        .map_err(|e| anyhow!("{e}"))?;
        let _ = alpha;
        for m in &metrics {
            let code = m.scheme.code();
            for (name, v) in [
                ("mean_latency_total", m.mean_latency_total),
                ("mean_cost", m.mean_cost),
                ("mean_objective", m.mean_objective),
                ("mean_offload", m.mean_offload),
                ("feasible_rate", m.feasible_rate),
            ] {
                writer.row(&[
                    Field::Text(sweep.param.name()),
                    Field::Float(value),
                    Field::Text(&code),
                    Field::Int(m.seed as i64),
                    Field::Text(name),
                    Field::Float(v),
                ])?;
            }
        }
    }
    let path = writer.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}
