//! Independent schedule checking.
//!
//! [`replay`] re-derives every scheduled flow's cycle trail from its offset
//! and shifts alone, rebuilds the whole occupancy grid from scratch, and
//! reports typed violations — it shares no state with the scheduler, so a
//! scheduler bug cannot vouch for itself. [`brute_force_max`] is the exact
//! optimum for tiny instances: it enumerates every placement of every flow
//! and maximizes the admitted subset by exhaustive search. [`e2e_bounds`]
//! gives the closed-form worst/best-case delay band for a routed path.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::flow::{FlowId, FlowSpec, ValidatedConfig};
use crate::grid::flow_occupied_cycles;
use crate::net::{link_delay_cycles, EdgeId, Path, ValidatedTopology};
use crate::sched::FlowSolution;
use crate::time::Nanos;

/// Closed-form delay band for a path under cycle forwarding: propagation
/// and processing plus `hops ± 1` cycles of queueing spread.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct E2eBounds {
    pub d_max: Nanos,
    pub d_min: Nanos,
    pub jitter: Nanos,
}

pub fn e2e_bounds(path: &Path, topo: &ValidatedTopology, cfg: &ValidatedConfig) -> E2eBounds {
    let t = cfg.t_cycle();
    let hops = path.hops() as u64;
    let mut base = Nanos::ZERO;
    for &e in path.edges() {
        let edge = topo.edge(e);
        base += edge.delay;
        base += cfg.proc_delay_at(topo, edge.dst);
    }
    let d_max = base + t.checked_mul(hops + 1).expect("bound overflow");
    let d_min = base + t.checked_mul(hops - 1).expect("bound overflow");
    E2eBounds { d_max, d_min, jitter: d_max - d_min }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A block holds more packets than the queue length.
    OccupancyOverflow,
    /// The shift budget implied by the deadline is exceeded.
    DeadlineMiss,
    /// Offset outside [0, period cycles).
    OffsetOutOfRange,
    /// A per-hop shift exceeds queue_num - 2.
    DeltaOutOfRange,
    /// A hop transmits before the packet can have arrived there.
    CausalityViolation,
    /// A stored transmit cycle differs from the offset/shift derivation.
    TagMismatch,
}

/// One broken invariant. `observed`/`bound` are in the unit the kind
/// implies: packets for occupancy, cycles for everything else.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub flow: Option<FlowId>,
    pub edge: Option<EdgeId>,
    pub cycle: Option<u64>,
    pub observed: u64,
    pub bound: u64,
}

impl Violation {
    pub fn describe(&self, topo: &ValidatedTopology, flows: &[FlowSpec]) -> String {
        let flow = self
            .flow
            .and_then(|id| flows.iter().find(|f| f.id == id))
            .map(|f| f.name.as_str())
            .unwrap_or("-");
        let edge = self.edge.map(|e| topo.edge_label(e)).unwrap_or_else(|| "-".into());
        let cycle = self.cycle.map(|c| c.to_string()).unwrap_or_else(|| "-".into());
        format!(
            "{:?} flow={} edge={} cycle={} observed={} bound={}",
            self.kind, flow, edge, cycle, self.observed, self.bound
        )
    }
}

/// Replay verdict for one scheduled flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowVerdict {
    pub e2e_min: Nanos,
    pub e2e_max: Nanos,
    pub jitter: Nanos,
    pub deadline_met: bool,
}

#[derive(Clone, Debug, Default)]
pub struct VerificationReport {
    pub per_flow: BTreeMap<FlowId, FlowVerdict>,
    /// Rebuilt packet count per non-empty (edge, cycle) block.
    pub occupancy: BTreeMap<(EdgeId, u32), u32>,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_occupancy(&self) -> u32 {
        self.occupancy.values().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("malformed solution: {detail}")]
    MalformedSolution { detail: String },
    #[error("instance exceeds oracle limits: {detail}")]
    InstanceTooLarge { detail: String },
}

fn malformed(detail: impl Into<String>) -> VerifyError {
    VerifyError::MalformedSolution { detail: detail.into() }
}

/// Re-check a batch of solutions against the flow set from first
/// principles. Structural impossibilities (unknown flows, wrong-length
/// vectors) are errors; semantic breaches become [`Violation`]s.
pub fn replay(
    flows: &[FlowSpec],
    solutions: &[FlowSolution],
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
) -> Result<VerificationReport, VerifyError> {
    let by_id: HashMap<FlowId, &FlowSpec> = flows.iter().map(|f| (f.id, f)).collect();
    let mut seen: HashSet<FlowId> = HashSet::new();
    let mut report = VerificationReport::default();
    let t = cfg.t_cycle();

    for sol in solutions {
        if !seen.insert(sol.flow) {
            return Err(malformed(format!("two solutions for flow {}", sol.flow.0)));
        }
        let Some(flow) = by_id.get(&sol.flow).copied() else {
            return Err(malformed(format!("solution for unknown flow {}", sol.flow.0)));
        };
        if !sol.scheduled {
            if !sol.deltas.is_empty() || !sol.transmit_cycles.is_empty() {
                return Err(malformed(format!(
                    "unscheduled flow {} carries placement data",
                    flow.name
                )));
            }
            continue;
        }
        let hops = flow.path.hops();
        if sol.deltas.len() != hops || sol.transmit_cycles.len() != hops {
            return Err(malformed(format!(
                "flow {}: {} hops but {} shifts / {} transmit cycles",
                flow.name,
                hops,
                sol.deltas.len(),
                sol.transmit_cycles.len()
            )));
        }

        let period_cycles = cfg.period_cycles(flow);
        if sol.offset >= period_cycles {
            report.violations.push(Violation {
                kind: ViolationKind::OffsetOutOfRange,
                flow: Some(flow.id),
                edge: None,
                cycle: None,
                observed: sol.offset,
                bound: period_cycles,
            });
        }

        let ld: Vec<u64> = flow
            .path
            .edges()
            .iter()
            .map(|&e| link_delay_cycles(topo.edge(e).delay, t))
            .collect();

        // Shift range, stored-trail causality, and tag re-derivation.
        let max_delta = cfg.max_delta() as u64;
        let mut expected = sol.offset;
        for (h, &edge) in flow.path.edges().iter().enumerate() {
            if sol.deltas[h] as u64 > max_delta {
                report.violations.push(Violation {
                    kind: ViolationKind::DeltaOutOfRange,
                    flow: Some(flow.id),
                    edge: Some(edge),
                    cycle: None,
                    observed: sol.deltas[h] as u64,
                    bound: max_delta,
                });
            }
            expected += sol.deltas[h] as u64;
            if sol.transmit_cycles[h] != expected {
                report.violations.push(Violation {
                    kind: ViolationKind::TagMismatch,
                    flow: Some(flow.id),
                    edge: Some(edge),
                    cycle: Some(sol.transmit_cycles[h]),
                    observed: sol.transmit_cycles[h],
                    bound: expected,
                });
            }
            let earliest = if h == 0 {
                sol.offset
            } else {
                sol.transmit_cycles[h - 1] + ld[h - 1]
            };
            if sol.transmit_cycles[h] < earliest {
                report.violations.push(Violation {
                    kind: ViolationKind::CausalityViolation,
                    flow: Some(flow.id),
                    edge: Some(edge),
                    cycle: Some(sol.transmit_cycles[h]),
                    observed: sol.transmit_cycles[h],
                    bound: earliest,
                });
            }
            expected += ld[h];
        }

        // Deadline budget on the stored shifts.
        let budget = cfg.deadline_budget(flow);
        let used: u64 = 1 + ld.iter().sum::<u64>() + sol.total_shift();
        let deadline_met = used <= budget;
        if !deadline_met {
            report.violations.push(Violation {
                kind: ViolationKind::DeadlineMiss,
                flow: Some(flow.id),
                edge: None,
                cycle: None,
                observed: used,
                bound: budget,
            });
        }

        // Occupancy contribution from the stored trail.
        for (h, &edge) in flow.path.edges().iter().enumerate() {
            for c in flow_occupied_cycles(flow, cfg, sol.transmit_cycles[h]) {
                *report.occupancy.entry((edge, c)).or_insert(0) += flow.packets;
            }
        }

        // Realized delay band: entry anywhere in the offset cycle, delivery
        // anywhere in the final transmit cycle plus the last propagation.
        let last = hops - 1;
        let mut fixed_path = Nanos::ZERO;
        for &e in flow.path.edges() {
            fixed_path += topo.edge(e).delay;
            fixed_path += cfg.proc_delay_at(topo, topo.edge(e).dst);
        }
        let tail = topo.edge(flow.path.edges()[last]).delay
            + flow
                .path
                .edges()
                .iter()
                .map(|&e| cfg.proc_delay_at(topo, topo.edge(e).dst))
                .sum::<Nanos>();
        let span = sol.transmit_cycles[last].saturating_sub(sol.offset); // cycles of headway
        let floor = t.checked_mul(span.saturating_sub(1)).expect("delay overflow") + tail;
        let e2e_min = fixed_path.max(floor);
        // Max is below min only for tampered trails; clamp so the verdict
        // stays well-formed alongside the violations already recorded.
        let e2e_max = (t.checked_mul(span + 1).expect("delay overflow") + tail).max(e2e_min);
        report.per_flow.insert(
            flow.id,
            FlowVerdict { e2e_min, e2e_max, jitter: e2e_max - e2e_min, deadline_met },
        );
    }

    // Queue-length check over the rebuilt grid.
    let limit = cfg.queue_len();
    for (&(edge, cycle), &count) in &report.occupancy {
        if count > limit {
            report.violations.push(Violation {
                kind: ViolationKind::OccupancyOverflow,
                flow: None,
                edge: Some(edge),
                cycle: Some(cycle as u64),
                observed: count as u64,
                bound: limit as u64,
            });
        }
    }
    Ok(report)
}

/// Size guards for the exhaustive oracle.
#[derive(Clone, Copy, Debug)]
pub struct OracleLimits {
    pub max_flows: usize,
    pub max_hops: usize,
    pub max_beta: u32,
    pub max_queue_num: u32,
}

impl Default for OracleLimits {
    fn default() -> OracleLimits {
        OracleLimits { max_flows: 5, max_hops: 4, max_beta: 64, max_queue_num: 4 }
    }
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub best_count: usize,
    /// One placement per admitted flow of a maximum subset — the first
    /// such subset in enumeration order, so identical inputs yield an
    /// identical witness.
    pub witness: Vec<FlowSolution>,
}

#[derive(Clone)]
struct Candidate {
    offset: u64,
    deltas: Vec<u32>,
    transmits: Vec<u64>,
    /// (edge, reduced cycle) blocks the placement occupies.
    blocks: Vec<(EdgeId, u32)>,
}

fn enumerate_candidates(
    flow: &FlowSpec,
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
) -> Vec<Candidate> {
    let t = cfg.t_cycle();
    let ld: Vec<u64> = flow
        .path
        .edges()
        .iter()
        .map(|&e| link_delay_cycles(topo.edge(e).delay, t))
        .collect();
    let budget = cfg.deadline_budget(flow);
    let fixed: u64 = 1 + ld.iter().sum::<u64>();
    let mut out = Vec::new();
    if fixed > budget {
        return out;
    }
    let hops = flow.path.hops();
    let max_delta = cfg.max_delta();
    let mut seen_blocks: HashSet<Vec<(EdgeId, u32)>> = HashSet::new();

    // Depth-first over per-hop shifts, offsets outermost, shifts ascending:
    // candidates come out in lexicographic (offset, shifts) order.
    let mut deltas = vec![0u32; hops];
    let mut transmits = vec![0u64; hops];
    for offset in 0..cfg.period_cycles(flow) {
        #[allow(clippy::too_many_arguments)]
        fn walk(
            flow: &FlowSpec,
            cfg: &ValidatedConfig,
            ld: &[u64],
            budget: u64,
            fixed: u64,
            max_delta: u32,
            hop: usize,
            arrival: u64,
            shift_sum: u64,
            offset: u64,
            deltas: &mut Vec<u32>,
            transmits: &mut Vec<u64>,
            seen: &mut HashSet<Vec<(EdgeId, u32)>>,
            out: &mut Vec<Candidate>,
        ) {
            if hop == deltas.len() {
                let mut blocks = Vec::new();
                for (h, &edge) in flow.path.edges().iter().enumerate() {
                    for c in flow_occupied_cycles(flow, cfg, transmits[h]) {
                        blocks.push((edge, c));
                    }
                }
                blocks.sort_unstable();
                if seen.insert(blocks.clone()) {
                    out.push(Candidate {
                        offset,
                        deltas: deltas.clone(),
                        transmits: transmits.clone(),
                        blocks,
                    });
                }
                return;
            }
            for delta in 0..=max_delta {
                if fixed + shift_sum + delta as u64 > budget {
                    break;
                }
                deltas[hop] = delta;
                transmits[hop] = arrival + delta as u64;
                walk(
                    flow,
                    cfg,
                    ld,
                    budget,
                    fixed,
                    max_delta,
                    hop + 1,
                    transmits[hop] + ld[hop],
                    shift_sum + delta as u64,
                    offset,
                    deltas,
                    transmits,
                    seen,
                    out,
                );
            }
        }
        walk(
            flow, cfg, &ld, budget, fixed, max_delta, 0, offset, 0, offset, &mut deltas,
            &mut transmits, &mut seen_blocks, &mut out,
        );
    }
    out
}

/// Exact maximum admissible subset by exhaustive search, for instances
/// within `limits`. Placements and occupancy use the same semantics as the
/// scheduler, so any greedy schedule is one of the subsets considered.
pub fn brute_force_max(
    flows: &[FlowSpec],
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    limits: OracleLimits,
) -> Result<OracleResult, VerifyError> {
    if flows.len() > limits.max_flows {
        return Err(VerifyError::InstanceTooLarge {
            detail: format!("{} flows > {}", flows.len(), limits.max_flows),
        });
    }
    if cfg.beta() > limits.max_beta {
        return Err(VerifyError::InstanceTooLarge {
            detail: format!("beta {} > {}", cfg.beta(), limits.max_beta),
        });
    }
    if cfg.queue_num() > limits.max_queue_num {
        return Err(VerifyError::InstanceTooLarge {
            detail: format!("{} queues > {}", cfg.queue_num(), limits.max_queue_num),
        });
    }
    for f in flows {
        if f.path.hops() > limits.max_hops {
            return Err(VerifyError::InstanceTooLarge {
                detail: format!("flow {} has {} hops > {}", f.name, f.path.hops(), limits.max_hops),
            });
        }
    }

    let candidates: Vec<Vec<Candidate>> =
        flows.iter().map(|f| enumerate_candidates(f, topo, cfg)).collect();

    // Subsets by descending size; inside a subset, backtracking assignment
    // with an occupancy accumulator.
    fn assign(
        subset: &[usize],
        flows: &[FlowSpec],
        candidates: &[Vec<Candidate>],
        queue_len: u32,
        occ: &mut HashMap<(EdgeId, u32), u32>,
        chosen: &mut Vec<usize>,
    ) -> bool {
        let Some((&fi, rest)) = subset.split_first() else { return true };
        'cand: for (ci, cand) in candidates[fi].iter().enumerate() {
            for &(e, c) in &cand.blocks {
                if occ.get(&(e, c)).copied().unwrap_or(0) + flows[fi].packets > queue_len {
                    continue 'cand;
                }
            }
            for &(e, c) in &cand.blocks {
                *occ.entry((e, c)).or_insert(0) += flows[fi].packets;
            }
            chosen.push(ci);
            if assign(rest, flows, candidates, queue_len, occ, chosen) {
                return true;
            }
            chosen.pop();
            for &(e, c) in &cand.blocks {
                *occ.get_mut(&(e, c)).unwrap() -= flows[fi].packets;
            }
        }
        false
    }

    fn combos(n: usize, k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(k);
        fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                rec(i + 1, n, k, cur, out);
                cur.pop();
            }
        }
        rec(0, n, k, &mut cur, &mut out);
        out
    }

    let n = flows.len();
    for size in (0..=n).rev() {
        for subset in combos(n, size) {
            let mut occ = HashMap::new();
            let mut chosen = Vec::new();
            if assign(&subset, flows, &candidates, cfg.queue_len(), &mut occ, &mut chosen) {
                let witness = subset
                    .iter()
                    .zip(&chosen)
                    .map(|(&fi, &ci)| {
                        let c = &candidates[fi][ci];
                        FlowSolution {
                            flow: flows[fi].id,
                            offset: c.offset,
                            deltas: c.deltas.clone(),
                            transmit_cycles: c.transmits.clone(),
                            scheduled: true,
                        }
                    })
                    .collect();
                return Ok(OracleResult { best_count: size, witness });
            }
        }
    }
    unreachable!("the empty subset is always feasible");
}
