//! Flow admission: map each flow to a sending offset and per-hop queue
//! shifts so that every claimed (edge, cycle) block stays within the queue
//! length and the deadline budget holds.
//!
//! All four one-shot algorithms are the same hop walk with different search
//! spaces:
//!
//! * `naive` — talker's own entry cycle, no shifts;
//! * `cs`    — talker's own entry cycle, per-hop shifts 0..=N-2, smallest
//!   shift first;
//! * `fo`    — searched entry offset, no shifts;
//! * `focs`  — searched entry offset and per-hop shifts.
//!
//! The walk claims blocks hop by hop and rolls the whole flow back on the
//! first hop that cannot be placed, so a failed admission leaves the grid
//! untouched.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{FlowId, FlowSpec, ValidatedConfig};
use crate::grid::{flow_occupied_cycles, ResourceGrid};
use crate::net::{link_delay_cycles, ValidatedTopology};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Naive,
    Cs,
    Fo,
    Focs,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Naive, Algorithm::Cs, Algorithm::Fo, Algorithm::Focs];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Naive => "naive",
            Algorithm::Cs => "cs",
            Algorithm::Fo => "fo",
            Algorithm::Focs => "focs",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Algorithm, String> {
        match s {
            "naive" => Ok(Algorithm::Naive),
            "cs" => Ok(Algorithm::Cs),
            "fo" => Ok(Algorithm::Fo),
            "focs" => Ok(Algorithm::Focs),
            other => Err(format!("unknown algorithm {other:?}")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchedError {
    #[error("flow {flow:?} has no schedule")]
    NotScheduled { flow: FlowId },
}

/// One flow's placement. For an unscheduled flow the vectors are empty and
/// `offset` is zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowSolution {
    pub flow: FlowId,
    /// Entry cycle within the flow's period, in [0, period_cycles).
    pub offset: u64,
    /// Per-hop queue shifts, one per path edge.
    pub deltas: Vec<u32>,
    /// Per-hop transmit cycles, unreduced from the hyper-cycle origin.
    pub transmit_cycles: Vec<u64>,
    pub scheduled: bool,
}

impl FlowSolution {
    pub fn unscheduled(flow: FlowId) -> FlowSolution {
        FlowSolution {
            flow,
            offset: 0,
            deltas: Vec::new(),
            transmit_cycles: Vec::new(),
            scheduled: false,
        }
    }

    pub fn total_shift(&self) -> u64 {
        self.deltas.iter().map(|&d| d as u64).sum()
    }
}

/// Per-hop SID tags: the reduced cycle in which each hop forwards the flow.
pub fn cycle_tags(sol: &FlowSolution, beta: u32) -> Result<Vec<u32>, SchedError> {
    if !sol.scheduled {
        return Err(SchedError::NotScheduled { flow: sol.flow });
    }
    Ok(sol.transmit_cycles.iter().map(|&x| (x % beta as u64) as u32).collect())
}

/// Whole-path latency budget: the first-hop dwell plus every link's delay
/// cycles plus every shift must fit in the deadline's cycle budget. The
/// offset does not appear — the deadline is measured from network entry.
pub fn check_deadline(
    flow: &FlowSpec,
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    deltas: &[u32],
) -> bool {
    let t = cfg.t_cycle();
    let fixed: u64 = 1 + flow
        .path
        .edges()
        .iter()
        .map(|&e| link_delay_cycles(topo.edge(e).delay, t))
        .sum::<u64>();
    let shifts: u64 = deltas.iter().map(|&d| d as u64).sum();
    fixed + shifts <= cfg.deadline_budget(flow)
}

/// Claim a path for `flow` starting at `offset`, allowing per-hop shifts up
/// to `max_delta`. Smallest shift (direct forwarding) is preferred at every
/// hop. Returns `None` with the grid unchanged if any hop cannot be placed
/// or the deadline budget is exhausted.
fn try_admit(
    flow: &FlowSpec,
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    grid: &mut ResourceGrid,
    offset: u64,
    max_delta: u32,
) -> Option<FlowSolution> {
    let t = cfg.t_cycle();
    let hops = flow.path.hops();
    let ld_cycles: Vec<u64> = flow
        .path
        .edges()
        .iter()
        .map(|&e| link_delay_cycles(topo.edge(e).delay, t))
        .collect();
    let budget = cfg.deadline_budget(flow);
    let fixed: u64 = 1 + ld_cycles.iter().sum::<u64>();
    if fixed > budget {
        return None;
    }

    let mut deltas = Vec::with_capacity(hops);
    let mut transmits = Vec::with_capacity(hops);
    let mut shift_sum: u64 = 0;
    let mut arrival = offset;
    for (h, &edge) in flow.path.edges().iter().enumerate() {
        let mut placed = false;
        for delta in 0..=max_delta {
            if fixed + shift_sum + delta as u64 > budget {
                break; // larger shifts only push further past the deadline
            }
            let transmit = arrival + delta as u64;
            let cycles = flow_occupied_cycles(flow, cfg, transmit);
            if grid.try_claim(flow.id, edge, &cycles, flow.packets) {
                deltas.push(delta);
                transmits.push(transmit);
                shift_sum += delta as u64;
                arrival = transmit + ld_cycles[h];
                placed = true;
                break;
            }
        }
        if !placed {
            grid.release(flow.id);
            return None;
        }
    }
    debug_assert!(check_deadline(flow, topo, cfg, &deltas));
    Some(FlowSolution { flow: flow.id, offset, deltas, transmit_cycles: transmits, scheduled: true })
}

pub fn schedule_naive(
    flow: &FlowSpec,
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    grid: &mut ResourceGrid,
) -> FlowSolution {
    try_admit(flow, topo, cfg, grid, cfg.start_cycle(flow), 0)
        .unwrap_or_else(|| FlowSolution::unscheduled(flow.id))
}

pub fn schedule_cs(
    flow: &FlowSpec,
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    grid: &mut ResourceGrid,
) -> FlowSolution {
    try_admit(flow, topo, cfg, grid, cfg.start_cycle(flow), cfg.max_delta())
        .unwrap_or_else(|| FlowSolution::unscheduled(flow.id))
}

pub fn schedule_fo(
    flow: &FlowSpec,
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    grid: &mut ResourceGrid,
) -> FlowSolution {
    search_offsets(flow, topo, cfg, grid, 0)
}

pub fn schedule_focs(
    flow: &FlowSpec,
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    grid: &mut ResourceGrid,
) -> FlowSolution {
    search_offsets(flow, topo, cfg, grid, cfg.max_delta())
}

fn search_offsets(
    flow: &FlowSpec,
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    grid: &mut ResourceGrid,
    max_delta: u32,
) -> FlowSolution {
    // Offsets beyond one period repeat the same grid footprint, so the
    // period is the whole search space. Candidates are probed cyclically
    // from the talker's own start cycle — k is the number of cycles the
    // source buffers before first transmit, so smaller k means less added
    // latency, and flows with scattered starts spread over the period
    // instead of piling onto low offsets. Shifts restart at zero for each
    // candidate offset.
    let period = cfg.period_cycles(flow);
    let start = cfg.start_cycle(flow);
    for k in 0..period {
        let offset = (start + k) % period;
        if let Some(sol) = try_admit(flow, topo, cfg, grid, offset, max_delta) {
            return sol;
        }
    }
    FlowSolution::unscheduled(flow.id)
}

pub fn schedule_one(
    algo: Algorithm,
    flow: &FlowSpec,
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    grid: &mut ResourceGrid,
) -> FlowSolution {
    match algo {
        Algorithm::Naive => schedule_naive(flow, topo, cfg, grid),
        Algorithm::Cs => schedule_cs(flow, topo, cfg, grid),
        Algorithm::Fo => schedule_fo(flow, topo, cfg, grid),
        Algorithm::Focs => schedule_focs(flow, topo, cfg, grid),
    }
}

/// Batch admission result. `solutions` and `per_flow_runtime` are aligned
/// with the processing order that produced them.
#[derive(Clone, Debug)]
pub struct BatchResult {
    pub solutions: Vec<FlowSolution>,
    pub per_flow_runtime: Vec<Duration>,
    pub total_runtime: Duration,
}

impl BatchResult {
    pub fn scheduled_count(&self) -> usize {
        self.solutions.iter().filter(|s| s.scheduled).count()
    }

    pub fn scheduled(&self) -> impl Iterator<Item = &FlowSolution> {
        self.solutions.iter().filter(|s| s.scheduled)
    }

    pub fn failed_ids(&self) -> Vec<FlowId> {
        self.solutions.iter().filter(|s| !s.scheduled).map(|s| s.flow).collect()
    }
}

/// Admit `flows` one by one in slice order into `grid`.
pub fn run_batch(
    flows: &[FlowSpec],
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    grid: &mut ResourceGrid,
    algo: Algorithm,
) -> BatchResult {
    let batch_start = Instant::now();
    let mut solutions = Vec::with_capacity(flows.len());
    let mut per_flow = Vec::with_capacity(flows.len());
    for flow in flows {
        let t0 = Instant::now();
        solutions.push(schedule_one(algo, flow, topo, cfg, grid));
        per_flow.push(t0.elapsed());
    }
    BatchResult { solutions, per_flow_runtime: per_flow, total_runtime: batch_start.elapsed() }
}
