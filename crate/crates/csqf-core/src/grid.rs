//! The admission state: packet counts per (edge, cycle) block over one
//! hyper-cycle, plus a per-flow claim ledger so tentative placements can be
//! rolled back exactly.
//!
//! Cycle indices come in two flavors. *Unreduced* cycles count from the
//! hyper-cycle origin and only ever grow (offset + accumulated link-delay
//! cycles + accumulated shifts); they are what deadline checks reason
//! about. *Reduced* cycles are unreduced values mod `beta` and index the
//! grid. A flow sending every `period` claims its block at every period
//! image inside the hyper-cycle, so one admission touches
//! `hyper / period` blocks per edge.

use std::collections::HashMap;

use thiserror::Error;

use crate::flow::{FlowId, FlowSpec, ValidatedConfig};
use crate::net::{link_delay_cycles, EdgeId, ValidatedTopology};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("block ({edge}, {cycle}) outside grid of {edges} edges x {beta} cycles")]
    IndexOutOfRange { edge: u32, cycle: u64, edges: usize, beta: u32 },
    #[error("hop {hop} outside 1..={hops}")]
    HopOutOfRange { hop: usize, hops: usize },
}

/// One reserved block: `packets` packets parked at (`edge`, reduced
/// `cycle`) — and, by periodicity, at every repetition of that block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Claim {
    pub edge: EdgeId,
    pub cycle: u32,
    pub packets: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResourceGrid {
    edge_count: usize,
    beta: u32,
    queue_len: u32,
    /// Edge-major occupancy: `occ[edge * beta + cycle]`.
    occ: Vec<u32>,
    claims: HashMap<FlowId, Vec<Claim>>,
}

impl ResourceGrid {
    pub fn new(edge_count: usize, beta: u32, queue_len: u32) -> ResourceGrid {
        assert!(beta >= 1, "grid needs at least one cycle");
        assert!(queue_len >= 1, "grid needs positive queue length");
        ResourceGrid {
            edge_count,
            beta,
            queue_len,
            occ: vec![0; edge_count * beta as usize],
            claims: HashMap::new(),
        }
    }

    pub fn for_config(topo: &ValidatedTopology, cfg: &ValidatedConfig) -> ResourceGrid {
        ResourceGrid::new(topo.edge_count(), cfg.beta(), cfg.queue_len())
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn queue_len(&self) -> u32 {
        self.queue_len
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    fn slot(&self, edge: EdgeId, cycle: u32) -> usize {
        edge.index() * self.beta as usize + cycle as usize
    }

    pub fn occupancy(&self, edge: EdgeId, cycle: u64) -> Result<u32, GridError> {
        if edge.index() >= self.edge_count || cycle >= self.beta as u64 {
            return Err(GridError::IndexOutOfRange {
                edge: edge.0,
                cycle,
                edges: self.edge_count,
                beta: self.beta,
            });
        }
        Ok(self.occ[self.slot(edge, cycle as u32)])
    }

    /// Reserve `packets` at every listed block for `flow`, or change
    /// nothing: the claim succeeds only if no block would exceed the queue
    /// length. `cycles` must be reduced, strictly ascending.
    pub fn try_claim(
        &mut self,
        flow: FlowId,
        edge: EdgeId,
        cycles: &[u32],
        packets: u32,
    ) -> bool {
        debug_assert!(cycles.windows(2).all(|w| w[0] < w[1]), "cycles sorted+distinct");
        debug_assert!(edge.index() < self.edge_count);
        for &c in cycles {
            assert!(c < self.beta, "cycle {c} outside grid of {} cycles", self.beta);
            if self.occ[self.slot(edge, c)] + packets > self.queue_len {
                return false;
            }
        }
        for &c in cycles {
            let s = self.slot(edge, c);
            self.occ[s] += packets;
        }
        let entry = self.claims.entry(flow).or_default();
        entry.extend(cycles.iter().map(|&cycle| Claim { edge, cycle, packets }));
        true
    }

    /// Drop every claim held by `flow`. Unknown flows are a no-op, so
    /// rollback paths can call this unconditionally.
    pub fn release(&mut self, flow: FlowId) {
        let Some(claims) = self.claims.remove(&flow) else { return };
        for c in claims {
            let s = self.slot(c.edge, c.cycle);
            debug_assert!(self.occ[s] >= c.packets);
            self.occ[s] -= c.packets;
        }
    }

    pub fn claims_of(&self, flow: FlowId) -> Option<&[Claim]> {
        self.claims.get(&flow).map(|v| v.as_slice())
    }

    pub fn claiming_flows(&self) -> impl Iterator<Item = FlowId> + '_ {
        self.claims.keys().copied()
    }

    pub fn total_packets(&self) -> u64 {
        self.occ.iter().map(|&v| v as u64).sum()
    }

    pub fn peak_occupancy(&self) -> u32 {
        self.occ.iter().copied().max().unwrap_or(0)
    }

    /// Re-derive occupancy from the claim ledger and compare. Cheap enough
    /// for tests and debug assertions; the two can only diverge on a bug.
    pub fn ledger_consistent(&self) -> bool {
        let mut fresh = vec![0u32; self.occ.len()];
        for claims in self.claims.values() {
            for c in claims {
                fresh[self.slot(c.edge, c.cycle)] += c.packets;
            }
        }
        fresh == self.occ
    }
}

/// Unreduced cycle in which `flow`'s packets reach hop `hop` (1-based):
/// the offset plus, for every earlier hop, its link-delay cycles and its
/// queue shift. The first hop sees the offset itself.
pub fn arrival_cycle(
    flow: &FlowSpec,
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    offset: u64,
    deltas: &[u32],
    hop: usize,
) -> Result<u64, GridError> {
    let hops = flow.path.hops();
    if hop == 0 || hop > hops || deltas.len() != hops {
        return Err(GridError::HopOutOfRange { hop, hops });
    }
    let t = cfg.t_cycle();
    let mut cycle = offset;
    for (&edge, &delta) in flow.path.edges()[..hop - 1].iter().zip(deltas) {
        cycle += link_delay_cycles(topo.edge(edge).delay, t) + delta as u64;
    }
    Ok(cycle)
}

/// Every grid block a transmission in unreduced cycle `transmit` occupies:
/// one per sending instance in the hyper-cycle, `stride` cycles apart,
/// reduced mod `beta`. Returned sorted ascending.
pub fn occupied_cycles(transmit: u64, stride: u64, instances: u64, beta: u32) -> Vec<u32> {
    debug_assert!(stride >= 1 && instances >= 1);
    debug_assert_eq!(stride * instances, beta as u64, "stride x instances spans the grid");
    let mut out: Vec<u32> = (0..instances)
        .map(|lambda| ((transmit + lambda * stride) % beta as u64) as u32)
        .collect();
    out.sort_unstable();
    out
}

/// `occupied_cycles` with the flow's own stride/instance counts.
pub fn flow_occupied_cycles(
    flow: &FlowSpec,
    cfg: &ValidatedConfig,
    transmit: u64,
) -> Vec<u32> {
    occupied_cycles(transmit, cfg.period_cycles(flow), cfg.instances(flow), cfg.beta())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{validate_config, ScheduleConfig};
    use crate::net::{validate_topology, EdgeSpec, NodeId, Topology};
    use crate::time::Nanos;
    use crate::net::shortest_path;

    fn line(names: &[&str], delays_us: &[u64]) -> ValidatedTopology {
        let edges = names
            .windows(2)
            .zip(delays_us)
            .map(|(w, &d)| EdgeSpec { src: w[0].into(), dst: w[1].into(), delay_us: d })
            .collect();
        validate_topology(&Topology {
            nodes: names.iter().map(|s| s.to_string()).collect(),
            edges,
            proc_delay_us: Default::default(),
        })
        .unwrap()
    }

    fn cfg_with(flows: &[FlowSpec], t_cycle_us: u64) -> ValidatedConfig {
        validate_config(
            flows,
            &ScheduleConfig {
                t_cycle_us,
                queue_len: 10,
                queue_num: 3,
                bandwidth_bps: 1_000_000_000,
                mtu_bytes: 1500,
                proc_delay_us: 0,
            },
        )
        .unwrap()
    }

    fn path_flow(topo: &ValidatedTopology, period_ms: u64) -> FlowSpec {
        let path = shortest_path(
            topo,
            NodeId(0),
            NodeId((topo.node_count() - 1) as u32),
        )
        .unwrap();
        FlowSpec::on_path(
            FlowId(0),
            "f1",
            path,
            topo,
            Nanos::from_ms(period_ms),
            1,
            Nanos::from_ms(30),
            Nanos::ZERO,
        )
        .unwrap()
    }

    #[test]
    fn arrival_accumulates_delay_cycles_and_shifts() {
        // Two 250 µs links at T=125 µs: 2 cycles each. Shifts ⟨0,1,0⟩.
        let topo = line(&["a", "b", "c", "d"], &[250, 250, 250]);
        let f = path_flow(&topo, 4);
        let cfg = cfg_with(std::slice::from_ref(&f), 125);
        let deltas = [0, 1, 0];
        assert_eq!(arrival_cycle(&f, &topo, &cfg, 0, &deltas, 1).unwrap(), 0);
        assert_eq!(arrival_cycle(&f, &topo, &cfg, 0, &deltas, 2).unwrap(), 2);
        assert_eq!(arrival_cycle(&f, &topo, &cfg, 0, &deltas, 3).unwrap(), 5);
        // Offsets translate every hop uniformly.
        assert_eq!(arrival_cycle(&f, &topo, &cfg, 7, &deltas, 3).unwrap(), 12);
    }

    #[test]
    fn arrival_rejects_bad_hop_or_shift_vector() {
        let topo = line(&["a", "b", "c"], &[250, 250]);
        let f = path_flow(&topo, 4);
        let cfg = cfg_with(std::slice::from_ref(&f), 125);
        assert_eq!(
            arrival_cycle(&f, &topo, &cfg, 0, &[0, 0], 0).unwrap_err(),
            GridError::HopOutOfRange { hop: 0, hops: 2 }
        );
        assert_eq!(
            arrival_cycle(&f, &topo, &cfg, 0, &[0, 0], 3).unwrap_err(),
            GridError::HopOutOfRange { hop: 3, hops: 2 }
        );
        assert_eq!(
            arrival_cycle(&f, &topo, &cfg, 0, &[0], 1).unwrap_err(),
            GridError::HopOutOfRange { hop: 1, hops: 2 }
        );
    }

    #[test]
    fn occupied_cycles_stride_and_wrap() {
        // 16 ms period at T=125 µs inside a 32 ms hyper-cycle: two images.
        assert_eq!(occupied_cycles(255, 128, 2, 256), vec![127, 255]);
        assert_eq!(occupied_cycles(0, 128, 2, 256), vec![0, 128]);
        // Full-hyper period: single image, reduced.
        assert_eq!(occupied_cycles(300, 256, 1, 256), vec![44]);
        // 4 ms period in 32 ms: eight images.
        assert_eq!(
            occupied_cycles(33, 32, 8, 256),
            vec![1, 33, 65, 97, 129, 161, 193, 225]
        );
    }

    #[test]
    fn claim_is_all_or_nothing() {
        let mut g = ResourceGrid::new(2, 8, 2);
        let e = EdgeId(0);
        assert!(g.try_claim(FlowId(0), e, &[0, 4], 2));
        assert_eq!(g.occupancy(e, 0).unwrap(), 2);
        assert_eq!(g.occupancy(e, 4).unwrap(), 2);
        // Would fit at cycle 1 but not at 4 — nothing changes.
        assert!(!g.try_claim(FlowId(1), e, &[1, 4], 1));
        assert_eq!(g.occupancy(e, 1).unwrap(), 0);
        assert_eq!(g.occupancy(e, 4).unwrap(), 2);
        // Other edges are unaffected by fullness on this one.
        assert!(g.try_claim(FlowId(1), EdgeId(1), &[4], 2));
        assert!(g.ledger_consistent());
    }

    #[test]
    fn claim_fills_to_exactly_queue_len() {
        let mut g = ResourceGrid::new(1, 4, 3);
        let e = EdgeId(0);
        assert!(g.try_claim(FlowId(0), e, &[2], 2));
        assert!(g.try_claim(FlowId(1), e, &[2], 1));
        assert_eq!(g.occupancy(e, 2).unwrap(), 3);
        assert!(!g.try_claim(FlowId(2), e, &[2], 1));
    }

    #[test]
    fn release_restores_and_is_idempotent() {
        let mut g = ResourceGrid::new(1, 8, 2);
        let e = EdgeId(0);
        assert!(g.try_claim(FlowId(3), e, &[1, 5], 1));
        assert!(g.try_claim(FlowId(4), e, &[1], 1));
        g.release(FlowId(3));
        assert_eq!(g.occupancy(e, 1).unwrap(), 1);
        assert_eq!(g.occupancy(e, 5).unwrap(), 0);
        assert_eq!(g.claims_of(FlowId(3)), None);
        g.release(FlowId(3));
        g.release(FlowId(99));
        assert_eq!(g.occupancy(e, 1).unwrap(), 1);
        assert!(g.ledger_consistent());
    }

    #[test]
    fn multi_edge_claims_tracked_per_flow() {
        let mut g = ResourceGrid::new(3, 4, 5);
        let f = FlowId(7);
        assert!(g.try_claim(f, EdgeId(0), &[0], 2));
        assert!(g.try_claim(f, EdgeId(2), &[1, 3], 2));
        assert_eq!(g.claims_of(f).unwrap().len(), 3);
        assert_eq!(g.total_packets(), 6);
        g.release(f);
        assert_eq!(g.total_packets(), 0);
    }

    #[test]
    fn occupancy_bounds_checked() {
        let g = ResourceGrid::new(2, 8, 2);
        assert_eq!(
            g.occupancy(EdgeId(0), 8).unwrap_err(),
            GridError::IndexOutOfRange { edge: 0, cycle: 8, edges: 2, beta: 8 }
        );
        assert_eq!(
            g.occupancy(EdgeId(2), 0).unwrap_err(),
            GridError::IndexOutOfRange { edge: 2, cycle: 0, edges: 2, beta: 8 }
        );
    }
}
