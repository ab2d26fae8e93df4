//! Order-exploring metaheuristic over the one-shot admission: greedy
//! admission quality depends heavily on the order flows are attempted, so
//! the search perturbs that order instead of the placements themselves.
//!
//! The state is the live grid plus the current scheduled/failed partition.
//! One move releases a small random subset of the scheduled flows, then
//! re-attempts the failed flows (shuffled, first crack at the freed
//! capacity) followed by the released ones. A FIFO tabu list of removal-set
//! signatures keeps the walk from cycling through the same exchanges.
//! Working incrementally on the live grid makes a move proportional to the
//! flows it touches, not to the whole instance.

use std::collections::{HashMap, VecDeque};
use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flow::{FlowId, FlowSpec, ValidatedConfig};
use crate::grid::ResourceGrid;
use crate::sched::{schedule_focs, BatchResult, FlowSolution};
use crate::net::ValidatedTopology;

#[derive(Clone, Copy, Debug)]
pub struct TabuParams {
    /// Hard iteration cap (K).
    pub max_iterations: u32,
    /// Stop after this many consecutive non-improving iterations (P).
    pub max_no_improve: u32,
    /// Fraction of the scheduled set released per move (minimum one flow).
    pub removal_fraction: f64,
    /// FIFO capacity of the removal-signature tabu list.
    pub tabu_capacity: usize,
}

impl TabuParams {
    /// Full-scale search: K=1000, P=100.
    pub fn full() -> TabuParams {
        TabuParams {
            max_iterations: 1000,
            max_no_improve: 100,
            removal_fraction: 0.1,
            tabu_capacity: 50,
        }
    }

    /// Desk-scale search for fast runs and tests: K=100, P=20.
    pub fn desk() -> TabuParams {
        TabuParams { max_iterations: 100, max_no_improve: 20, ..TabuParams::full() }
    }
}

impl Default for TabuParams {
    fn default() -> TabuParams {
        TabuParams::full()
    }
}

/// What one move did — exposed for tests and progress logs.
#[derive(Clone, Copy, Debug)]
pub struct StepReport {
    pub iteration: u32,
    /// Scheduled flows released by this move.
    pub removed: usize,
    /// Move was skipped because every redraw hit the tabu list.
    pub tabu_blocked: bool,
    pub scheduled_after: usize,
    pub best: usize,
}

pub struct TabuSearch<'a> {
    flows: &'a [FlowSpec],
    topo: &'a ValidatedTopology,
    cfg: &'a ValidatedConfig,
    params: TabuParams,
    rng: ChaCha8Rng,
    grid: ResourceGrid,
    pos_of: HashMap<FlowId, usize>,
    initial_order: Vec<FlowId>,
    /// Current schedule in admission order.
    scheduled: Vec<FlowSolution>,
    failed: Vec<FlowId>,
    tabu: VecDeque<Vec<FlowId>>,
    best_count: usize,
    best_solutions: Vec<FlowSolution>,
    best_order: Vec<FlowId>,
    /// Admission time accumulated per flow across all attempts, by input
    /// position.
    per_flow_time: Vec<Duration>,
    iterations: u32,
    no_improve: u32,
    started: Instant,
}

impl<'a> TabuSearch<'a> {
    /// Seed the search with a uniformly shuffled admission order and run
    /// the initial greedy pass.
    pub fn new(
        flows: &'a [FlowSpec],
        topo: &'a ValidatedTopology,
        cfg: &'a ValidatedConfig,
        params: TabuParams,
        seed: u64,
    ) -> TabuSearch<'a> {
        assert!(params.removal_fraction > 0.0 && params.removal_fraction <= 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<FlowId> = flows.iter().map(|f| f.id).collect();
        order.shuffle(&mut rng);
        let pos_of: HashMap<FlowId, usize> =
            flows.iter().enumerate().map(|(i, f)| (f.id, i)).collect();

        let mut search = TabuSearch {
            flows,
            topo,
            cfg,
            params,
            rng,
            grid: ResourceGrid::for_config(topo, cfg),
            pos_of,
            initial_order: order.clone(),
            scheduled: Vec::new(),
            failed: Vec::new(),
            tabu: VecDeque::new(),
            best_count: 0,
            best_solutions: Vec::new(),
            best_order: Vec::new(),
            per_flow_time: vec![Duration::ZERO; flows.len()],
            iterations: 0,
            no_improve: 0,
            started: Instant::now(),
        };
        for id in order {
            search.attempt(id);
        }
        search.take_snapshot_if_better();
        search
    }

    fn flow(&self, id: FlowId) -> &'a FlowSpec {
        &self.flows[self.pos_of[&id]]
    }

    fn attempt(&mut self, id: FlowId) {
        let t0 = Instant::now();
        let sol = schedule_focs(self.flow(id), self.topo, self.cfg, &mut self.grid);
        self.per_flow_time[self.pos_of[&id]] += t0.elapsed();
        if sol.scheduled {
            self.scheduled.push(sol);
        } else {
            self.failed.push(id);
        }
    }

    fn take_snapshot_if_better(&mut self) -> bool {
        if self.scheduled.len() > self.best_count {
            self.best_count = self.scheduled.len();
            self.best_solutions = self.scheduled.clone();
            self.best_order = self.scheduled.iter().map(|s| s.flow).collect();
            true
        } else {
            false
        }
    }

    pub fn finished(&self) -> bool {
        self.iterations >= self.params.max_iterations
            || self.no_improve >= self.params.max_no_improve
            || self.best_count == self.flows.len()
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn scheduled_count(&self) -> usize {
        self.scheduled.len()
    }

    pub fn failed_count(&self) -> usize {
        self.failed.len()
    }

    pub fn best_count(&self) -> usize {
        self.best_count
    }

    pub fn initial_order(&self) -> &[FlowId] {
        &self.initial_order
    }

    pub fn tabu_len(&self) -> usize {
        self.tabu.len()
    }

    /// One neighborhood move: release, re-admit, evaluate.
    pub fn step(&mut self) -> StepReport {
        self.iterations += 1;
        let n_scheduled = self.scheduled.len();
        let removal = if n_scheduled == 0 {
            0
        } else {
            let r = (self.params.removal_fraction * n_scheduled as f64).round() as usize;
            r.clamp(1, n_scheduled)
        };

        let mut removed_ids: Vec<FlowId> = Vec::new();
        let mut tabu_blocked = false;
        if removal > 0 {
            let mut signature = Vec::new();
            let mut accepted = false;
            for _ in 0..16 {
                let picks = rand::seq::index::sample(&mut self.rng, n_scheduled, removal);
                removed_ids = picks.iter().map(|i| self.scheduled[i].flow).collect();
                signature = removed_ids.clone();
                signature.sort_unstable();
                if !self.tabu.contains(&signature) {
                    accepted = true;
                    break;
                }
            }
            if accepted {
                self.tabu.push_back(signature);
                while self.tabu.len() > self.params.tabu_capacity {
                    self.tabu.pop_front();
                }
            } else {
                // Every redraw was tabu: pass, a non-improving iteration.
                tabu_blocked = true;
                removed_ids.clear();
            }
        }

        if !tabu_blocked {
            for &id in &removed_ids {
                self.grid.release(id);
            }
            let removed_set: std::collections::HashSet<FlowId> =
                removed_ids.iter().copied().collect();
            self.scheduled.retain(|s| !removed_set.contains(&s.flow));

            // Previously failed flows get the freed capacity first.
            let mut candidates = std::mem::take(&mut self.failed);
            candidates.shuffle(&mut self.rng);
            let mut returning = removed_ids.clone();
            returning.shuffle(&mut self.rng);
            candidates.extend(returning);
            for id in candidates {
                self.attempt(id);
            }
        }

        let improved = self.take_snapshot_if_better();
        if improved {
            self.no_improve = 0;
        } else {
            self.no_improve += 1;
        }
        StepReport {
            iteration: self.iterations,
            removed: if tabu_blocked { 0 } else { removed_ids.len() },
            tabu_blocked,
            scheduled_after: self.scheduled.len(),
            best: self.best_count,
        }
    }

    /// Consistency check: scheduled ∪ failed partitions the flow set.
    pub fn partition_consistent(&self) -> bool {
        let mut seen: Vec<bool> = vec![false; self.flows.len()];
        for s in &self.scheduled {
            let p = self.pos_of[&s.flow];
            if seen[p] {
                return false;
            }
            seen[p] = true;
        }
        for id in &self.failed {
            let p = self.pos_of[id];
            if seen[p] {
                return false;
            }
            seen[p] = true;
        }
        seen.iter().all(|&b| b)
    }

    /// Assemble the best-known schedule: best admission order first, then
    /// the remaining flows as unscheduled in input order.
    pub fn into_outcome(self) -> TabuOutcome {
        let in_best: std::collections::HashSet<FlowId> =
            self.best_order.iter().copied().collect();
        let mut solutions = self.best_solutions.clone();
        for f in self.flows {
            if !in_best.contains(&f.id) {
                solutions.push(FlowSolution::unscheduled(f.id));
            }
        }
        let per_flow_runtime: Vec<Duration> = solutions
            .iter()
            .map(|s| self.per_flow_time[self.pos_of[&s.flow]])
            .collect();
        TabuOutcome {
            result: BatchResult {
                solutions,
                per_flow_runtime,
                total_runtime: self.started.elapsed(),
            },
            best_order: self.best_order,
            iterations: self.iterations,
            initial_order: self.initial_order,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TabuOutcome {
    pub result: BatchResult,
    /// Admission order that produced the best schedule.
    pub best_order: Vec<FlowId>,
    pub iterations: u32,
    pub initial_order: Vec<FlowId>,
}

/// Run the full search. `log` receives one progress line per iteration.
pub fn tabu_focs(
    flows: &[FlowSpec],
    topo: &ValidatedTopology,
    cfg: &ValidatedConfig,
    params: TabuParams,
    seed: u64,
    mut log: Option<&mut dyn Write>,
) -> TabuOutcome {
    let mut search = TabuSearch::new(flows, topo, cfg, params, seed);
    if let Some(w) = log.as_deref_mut() {
        let _ = writeln!(
            w,
            "tabu seed={seed}: initial {}/{} scheduled",
            search.scheduled_count(),
            flows.len()
        );
    }
    while !search.finished() {
        let rep = search.step();
        if let Some(w) = log.as_deref_mut() {
            let _ = writeln!(
                w,
                "tabu iter {}: removed {}, scheduled {}/{}, best {}{}",
                rep.iteration,
                rep.removed,
                rep.scheduled_after,
                flows.len(),
                rep.best,
                if rep.tabu_blocked { " (tabu-blocked)" } else { "" }
            );
        }
        debug_assert!(search.partition_consistent());
        debug_assert!(search.grid.ledger_consistent());
    }
    search.into_outcome()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{validate_config, FlowSpec, ScheduleConfig};
    use crate::net::{shortest_path, validate_topology, EdgeSpec, Topology, ValidatedTopology};
    use crate::sched::{run_batch, Algorithm};
    use crate::time::Nanos;

    fn star_topology() -> ValidatedTopology {
        // Several sources feeding one sink through a shared middle link —
        // admission order genuinely matters here.
        let mut nodes: Vec<String> = vec!["hub".into(), "sink".into()];
        let mut edges = vec![EdgeSpec { src: "hub".into(), dst: "sink".into(), delay_us: 250 }];
        for i in 0..4 {
            let name = format!("src{i}");
            edges.push(EdgeSpec { src: name.clone(), dst: "hub".into(), delay_us: 125 });
            nodes.push(name);
        }
        validate_topology(&Topology { nodes, edges, proc_delay_us: Default::default() }).unwrap()
    }

    fn mixed_flows(topo: &ValidatedTopology, count: usize) -> Vec<FlowSpec> {
        let periods = [4, 8];
        (0..count)
            .map(|i| {
                let src = format!("src{}", i % 4);
                let path = shortest_path(
                    topo,
                    topo.node_id(&src).unwrap(),
                    topo.node_id("sink").unwrap(),
                )
                .unwrap();
                FlowSpec::on_path(
                    FlowId(i as u32),
                    format!("f{i}"),
                    path,
                    topo,
                    Nanos::from_ms(periods[i % periods.len()]),
                    3,
                    Nanos::from_ms(30),
                    Nanos::ZERO,
                )
                .unwrap()
            })
            .collect()
    }

    fn tight_config(flows: &[FlowSpec]) -> ValidatedConfig {
        validate_config(
            flows,
            &ScheduleConfig {
                t_cycle_us: 125,
                queue_len: 10,
                queue_num: 3,
                bandwidth_bps: 1_000_000_000,
                mtu_bytes: 1500,
                proc_delay_us: 0,
            },
        )
        .unwrap()
    }

    #[test]
    fn single_flow_needs_no_iterations()
    {
        let topo = star_topology();
        let flows = mixed_flows(&topo, 1);
        let cfg = tight_config(&flows);
        let out = tabu_focs(&flows, &topo, &cfg, TabuParams::desk(), 7, None);
        assert_eq!(out.result.scheduled_count(), 1);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn same_seed_same_outcome() {
        let topo = star_topology();
        let flows = mixed_flows(&topo, 40);
        let cfg = tight_config(&flows);
        let a = tabu_focs(&flows, &topo, &cfg, TabuParams::desk(), 42, None);
        let b = tabu_focs(&flows, &topo, &cfg, TabuParams::desk(), 42, None);
        assert_eq!(a.result.scheduled_count(), b.result.scheduled_count());
        assert_eq!(a.best_order, b.best_order);
        assert_eq!(a.iterations, b.iterations);
        let sols_a: Vec<_> = a.result.solutions.iter().map(|s| (s.flow, s.offset, s.deltas.clone())).collect();
        let sols_b: Vec<_> = b.result.solutions.iter().map(|s| (s.flow, s.offset, s.deltas.clone())).collect();
        assert_eq!(sols_a, sols_b);
    }

    #[test]
    fn never_below_plain_greedy_on_same_initial_order() {
        let topo = star_topology();
        let flows = mixed_flows(&topo, 40);
        let cfg = tight_config(&flows);
        for seed in [1, 2, 3] {
            let search = TabuSearch::new(&flows, &topo, &cfg, TabuParams::desk(), seed);
            let order: Vec<FlowSpec> = search
                .initial_order()
                .iter()
                .map(|id| flows[id.index()].clone())
                .collect();
            let mut grid = ResourceGrid::for_config(&topo, &cfg);
            let greedy = run_batch(&order, &topo, &cfg, &mut grid, Algorithm::Focs);
            let out = tabu_focs(&flows, &topo, &cfg, TabuParams::desk(), seed, None);
            assert!(
                out.result.scheduled_count() >= greedy.scheduled_count(),
                "seed {seed}: tabu {} < greedy {}",
                out.result.scheduled_count(),
                greedy.scheduled_count()
            );
        }
    }

    #[test]
    fn moves_keep_partition_and_grid_consistent() {
        let topo = star_topology();
        let flows = mixed_flows(&topo, 30);
        let cfg = tight_config(&flows);
        let mut search = TabuSearch::new(&flows, &topo, &cfg, TabuParams::desk(), 5);
        assert!(search.partition_consistent());
        let mut best_seen = search.best_count();
        for _ in 0..30 {
            let rep = search.step();
            assert!(search.partition_consistent());
            assert!(rep.best >= best_seen, "best decreased");
            best_seen = rep.best;
            assert!(search.tabu_len() <= TabuParams::desk().tabu_capacity);
        }
    }

    #[test]
    fn removal_count_is_fraction_with_floor_one() {
        let topo = star_topology();
        let flows = mixed_flows(&topo, 12);
        let cfg = tight_config(&flows);
        let mut search = TabuSearch::new(&flows, &topo, &cfg, TabuParams::desk(), 11);
        let before = search.scheduled_count();
        let rep = search.step();
        if !rep.tabu_blocked && before > 0 {
            let expect = ((0.1 * before as f64).round() as usize).clamp(1, before);
            assert_eq!(rep.removed, expect);
        }
    }

    #[test]
    fn all_flows_schedulable_terminates_immediately() {
        let topo = star_topology();
        let flows = mixed_flows(&topo, 4);
        let cfg = tight_config(&flows);
        let out = tabu_focs(&flows, &topo, &cfg, TabuParams::desk(), 9, None);
        assert_eq!(out.result.scheduled_count(), 4);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn log_lines_written_per_iteration() {
        let topo = star_topology();
        let flows = mixed_flows(&topo, 40);
        let cfg = tight_config(&flows);
        let mut buf: Vec<u8> = Vec::new();
        let out = tabu_focs(&flows, &topo, &cfg, TabuParams::desk(), 3, Some(&mut buf));
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("tabu seed=3: initial"));
        assert_eq!(lines.len() as u32, 1 + out.iterations);
    }

    #[test]
    fn empty_flow_set_is_a_clean_no_op() {
        let flows: Vec<FlowSpec> = Vec::new();
        let topo = star_topology();
        let cfg = tight_config(&flows);
        let out = tabu_focs(&flows, &topo, &cfg, TabuParams::desk(), 1, None);
        assert_eq!(out.result.solutions.len(), 0);
        assert_eq!(out.iterations, 0);
    }
}
