//! Driving an experiment grid: per-cell scheduling, independent replay
//! of every schedule, and deterministic artifact layout.
//!
//! Output directory shape:
//! ```text
//! out/
//!   experiment.json          the spec as resolved
//!   topology.json            the topology actually used
//!   config.json              the switch configuration
//!   flows/n{level}-s{seed}.json
//!   runs/{algo}-n{level}-s{seed}.json   schedule export
//!   aggregate.csv            one row per (algorithm, level, seed)
//! ```
//! Rows are written in (level, algorithm, seed) order regardless of how
//! the parallel runs finish, so reruns are byte-identical outside the
//! timing columns.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use csqf_core::{
    cycle_tags, flows_to_entries, link_delay_cycles, load_flows, replay, run_batch, tabu_focs,
    validate_config, validate_topology, FlowFileEntry, FlowId, FlowSolution, FlowSpec,
    ScheduleConfig, Topology, ValidatedConfig, ValidatedTopology,
};

use crate::spec::{derive_seed, read_json, AlgoChoice, ExperimentSpec, SALT_TABU};
use crate::HarnessError;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Corrupt the first scheduled flow of every run before replay — the
    /// negative control proving the verifier is on the critical path.
    pub inject_fault: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> RunOptions {
        RunOptions { out_dir: out_dir.into(), inject_fault: false }
    }
}

/// One (algorithm, level, seed) cell, post-replay. The count/percent
/// fields are replay-confirmed, not the scheduler's own claim.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub algorithm: AlgoChoice,
    pub seed: u64,
    pub flow_count: usize,
    pub scheduled_count: usize,
    pub scheduled_pct: f64,
    pub total_runtime_ms: f64,
    pub p50_per_flow_us: f64,
    pub p90_per_flow_us: f64,
    pub max_per_flow_us: f64,
    pub verifier_violations: usize,
    /// Largest replayed delivery-window spread over the run's flows (ns).
    pub max_jitter_ns: u64,
    pub deadline_misses: usize,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub aggregate_path: PathBuf,
    pub records: Vec<RunRecord>,
    pub total_violations: usize,
}

/// Schedule export entry — the installable result for one flow: its entry
/// offset, per-hop shifts, and per-hop cycle tags (reduced mod β).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub id: String,
    pub offset: u64,
    pub deltas: Vec<u32>,
    pub sid_tags: Vec<u32>,
    pub scheduled: bool,
}

pub const AGGREGATE_COLUMNS: [&str; 10] = [
    "algorithm",
    "seed",
    "flow_count",
    "scheduled_count",
    "scheduled_pct",
    "total_runtime_ms",
    "p50_per_flow_us",
    "p90_per_flow_us",
    "max_per_flow_us",
    "verifier_violations",
];

/// Columns whose values depend on wall-clock measurement; everything else
/// must be byte-identical across reruns of the same spec.
pub const TIMING_COLUMNS: [&str; 4] =
    ["total_runtime_ms", "p50_per_flow_us", "p90_per_flow_us", "max_per_flow_us"];

pub fn run_experiment(
    spec: &ExperimentSpec,
    opts: &RunOptions,
) -> Result<RunSummary, HarnessError> {
    spec.validate()?;
    let topo = spec.topology.resolve(spec.master_seed())?;
    let seeds = spec.run_seeds();
    let levels = spec.flow_levels();

    // Materialize every (level, seed) instance up front, sequentially:
    // generation is cheap and this keeps file writes in a fixed order.
    let mut instances: Vec<((usize, u64), Vec<FlowSpec>)> = Vec::new();
    for &level in &levels {
        for &seed in &seeds {
            let flows = spec.flows_for(&topo, level, seed)?;
            let label = level.unwrap_or(flows.len());
            instances.push(((label, seed), flows));
        }
    }

    let out = &opts.out_dir;
    write_text(&out.join("experiment.json"), &to_pretty(spec)?)?;
    write_text(&out.join("topology.json"), &topo.to_raw().to_json_string())?;
    write_text(&out.join("config.json"), &spec.config.to_json_string())?;
    for ((label, seed), flows) in &instances {
        write_text(
            &out.join("flows").join(format!("n{label}-s{seed}.json")),
            &to_pretty(&flows_to_entries(flows, &topo))?,
        )?;
    }

    let lookup: BTreeMap<(usize, u64), &Vec<FlowSpec>> =
        instances.iter().map(|((l, s), f)| ((*l, *s), f)).collect();

    // The full grid in output order; parallel execution preserves it.
    let mut jobs: Vec<(usize, u64, AlgoChoice)> = Vec::new();
    for ((label, _), _) in instances.iter().step_by(seeds.len()) {
        for &algo in &spec.algorithms {
            for &seed in &seeds {
                jobs.push((*label, seed, algo));
            }
        }
    }

    let cell_results: Vec<Result<(RunRecord, Vec<ScheduleEntry>), HarnessError>> = jobs
        .par_iter()
        .map(|&(label, seed, algo)| {
            let flows = lookup[&(label, seed)];
            run_cell(spec, &topo, flows, algo, seed, opts.inject_fault)
        })
        .collect();

    let mut records = Vec::with_capacity(jobs.len());
    for ((label, seed, algo), cell) in jobs.iter().zip(cell_results) {
        let (record, entries) = cell?;
        write_text(
            &out.join("runs").join(format!("{algo}-n{label}-s{seed}.json")),
            &to_pretty(&entries)?,
        )?;
        records.push(record);
    }

    let aggregate_path = out.join("aggregate.csv");
    write_aggregate(&aggregate_path, &records)?;
    let total_violations = records.iter().map(|r| r.verifier_violations).sum();
    Ok(RunSummary { aggregate_path, records, total_violations })
}

fn run_cell(
    spec: &ExperimentSpec,
    topo: &ValidatedTopology,
    flows: &[FlowSpec],
    algo: AlgoChoice,
    seed: u64,
    inject_fault: bool,
) -> Result<(RunRecord, Vec<ScheduleEntry>), HarnessError> {
    let cfg = validate_config(flows, &spec.config)
        .map_err(|e| HarnessError::Spec(format!("config: {e}")))?;

    let result = match algo.as_batch() {
        Some(a) => {
            let mut grid = csqf_core::ResourceGrid::for_config(topo, &cfg);
            run_batch(flows, topo, &cfg, &mut grid, a)
        }
        None => {
            let tabu_seed = derive_seed(seed, SALT_TABU);
            tabu_focs(flows, topo, &cfg, spec.tabu.to_params(), tabu_seed, None).result
        }
    };
    let mut solutions = result.solutions;
    if inject_fault {
        if let Some(s) = solutions.iter_mut().find(|s| s.scheduled) {
            s.deltas[0] += cfg.max_delta() + 1;
        }
    }

    let report = replay(flows, &solutions, topo, &cfg)
        .map_err(|e| HarnessError::Spec(format!("replay: {e}")))?;
    let violated: HashSet<FlowId> = report.violations.iter().filter_map(|v| v.flow).collect();
    let confirmed = solutions
        .iter()
        .filter(|s| s.scheduled && !violated.contains(&s.flow))
        .count();

    let mut per_flow_us: Vec<f64> =
        result.per_flow_runtime.iter().map(|d| d.as_secs_f64() * 1e6).collect();
    per_flow_us.sort_by(f64::total_cmp);

    let record = RunRecord {
        algorithm: algo,
        seed,
        flow_count: flows.len(),
        scheduled_count: confirmed,
        scheduled_pct: 100.0 * confirmed as f64 / flows.len().max(1) as f64,
        total_runtime_ms: result.total_runtime.as_secs_f64() * 1e3,
        p50_per_flow_us: nearest_rank(&per_flow_us, 0.5),
        p90_per_flow_us: nearest_rank(&per_flow_us, 0.9),
        max_per_flow_us: per_flow_us.last().copied().unwrap_or(0.0),
        verifier_violations: report.violations.len(),
        max_jitter_ns: report.per_flow.values().map(|v| v.jitter.as_ns()).max().unwrap_or(0),
        deadline_misses: report.per_flow.values().filter(|v| !v.deadline_met).count(),
    };
    Ok((record, export_entries(flows, &solutions, &cfg)))
}

/// Schedule export in input-flow order (tabu returns admission order).
fn export_entries(
    flows: &[FlowSpec],
    solutions: &[FlowSolution],
    cfg: &ValidatedConfig,
) -> Vec<ScheduleEntry> {
    let by_id: BTreeMap<FlowId, &FlowSolution> =
        solutions.iter().map(|s| (s.flow, s)).collect();
    flows
        .iter()
        .map(|f| {
            let sol = by_id[&f.id];
            ScheduleEntry {
                id: f.name.clone(),
                offset: sol.offset,
                deltas: sol.deltas.clone(),
                sid_tags: cycle_tags(sol, cfg.beta()).unwrap_or_default(),
                scheduled: sol.scheduled,
            }
        })
        .collect()
}

/// Nearest-rank quantile over an ascending sample.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn write_aggregate(path: &Path, records: &[RunRecord]) -> Result<(), HarnessError> {
    let io_err = |e: csv::Error| HarnessError::Io { path: path.to_owned(), detail: e.to_string() };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| HarnessError::Io { path: parent.to_owned(), detail: e.to_string() })?;
    }
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(AGGREGATE_COLUMNS).map_err(io_err)?;
    for r in records {
        w.write_record([
            r.algorithm.name().to_string(),
            r.seed.to_string(),
            r.flow_count.to_string(),
            r.scheduled_count.to_string(),
            format!("{:.2}", r.scheduled_pct),
            format!("{:.3}", r.total_runtime_ms),
            format!("{:.1}", r.p50_per_flow_us),
            format!("{:.1}", r.p90_per_flow_us),
            format!("{:.1}", r.max_per_flow_us),
            r.verifier_violations.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(|e| HarnessError::Io { path: path.to_owned(), detail: e.to_string() })
}

/// Re-check an exported schedule against its inputs from files alone.
#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub flows_checked: usize,
    pub scheduled: usize,
    /// Human-readable lines, one per broken invariant; empty means clean.
    pub violations: Vec<String>,
}

pub fn verify_files(
    schedule_path: &Path,
    topo_path: &Path,
    config_path: &Path,
    flows_path: &Path,
) -> Result<VerifyOutcome, HarnessError> {
    let raw_topo: Topology = read_json(topo_path)?;
    let topo = validate_topology(&raw_topo)
        .map_err(|e| HarnessError::Spec(format!("{}: {e}", topo_path.display())))?;
    let config: ScheduleConfig = read_json(config_path)?;
    let entries: Vec<FlowFileEntry> = read_json(flows_path)?;
    let flows = load_flows(&entries, &topo)
        .map_err(|e| HarnessError::Spec(format!("{}: {e}", flows_path.display())))?;
    let cfg = validate_config(&flows, &config)
        .map_err(|e| HarnessError::Spec(format!("{}: {e}", config_path.display())))?;
    let schedule: Vec<ScheduleEntry> = read_json(schedule_path)?;

    let by_name: BTreeMap<&str, &FlowSpec> =
        flows.iter().map(|f| (f.name.as_str(), f)).collect();
    let mut violations = Vec::new();
    let mut solutions = Vec::with_capacity(schedule.len());
    for entry in &schedule {
        let Some(flow) = by_name.get(entry.id.as_str()).copied() else {
            return Err(HarnessError::Spec(format!(
                "{}: schedule references unknown flow {:?}",
                schedule_path.display(),
                entry.id
            )));
        };
        if !entry.scheduled {
            solutions.push(FlowSolution::unscheduled(flow.id));
            continue;
        }
        let hops = flow.path.hops();
        if entry.deltas.len() != hops || entry.sid_tags.len() != hops {
            return Err(HarnessError::Spec(format!(
                "{}: flow {:?} has {} hops but {} shifts / {} tags",
                schedule_path.display(),
                entry.id,
                hops,
                entry.deltas.len(),
                entry.sid_tags.len()
            )));
        }
        // Rebuild the absolute transmit trail the tags abbreviate, then
        // cross-check the tags themselves.
        let t = cfg.t_cycle();
        let mut transmit_cycles = Vec::with_capacity(hops);
        let mut cycle = entry.offset;
        for (h, &e) in flow.path.edges().iter().enumerate() {
            cycle += entry.deltas[h] as u64;
            transmit_cycles.push(cycle);
            cycle += link_delay_cycles(topo.edge(e).delay, t);
        }
        let sol = FlowSolution {
            flow: flow.id,
            offset: entry.offset,
            deltas: entry.deltas.clone(),
            transmit_cycles,
            scheduled: true,
        };
        let derived = cycle_tags(&sol, cfg.beta()).expect("scheduled solution");
        if derived != entry.sid_tags {
            violations.push(format!(
                "flow {:?}: stored cycle tags {:?} disagree with offset/shift derivation {:?}",
                entry.id, entry.sid_tags, derived
            ));
        }
        solutions.push(sol);
    }

    let report = replay(&flows, &solutions, &topo, &cfg)
        .map_err(|e| HarnessError::Spec(format!("{}: {e}", schedule_path.display())))?;
    violations.extend(report.violations.iter().map(|v| v.describe(&topo, &flows)));
    Ok(VerifyOutcome {
        flows_checked: schedule.len(),
        scheduled: solutions.iter().filter(|s| s.scheduled).count(),
        violations,
    })
}

fn to_pretty<T: Serialize>(value: &T) -> Result<String, HarnessError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| HarnessError::Spec(format!("serialization: {e}")))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| HarnessError::Io { path: parent.to_owned(), detail: e.to_string() })?;
    }
    let mut body = text.to_owned();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    fs::write(path, body)
        .map_err(|e| HarnessError::Io { path: path.to_owned(), detail: e.to_string() })
}
