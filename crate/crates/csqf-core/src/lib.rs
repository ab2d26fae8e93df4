//! Cycle-grid scheduling for time-sensitive flows over rotating-queue
//! forwarding fabrics.
//!
//! The model: switches forward in fixed cycles of `t_cycle`; each output
//! port cycles through `queue_num` queues of `queue_len` packets, one
//! transmitting while the others receive. Admitting a flow means choosing
//! its entry offset and per-hop queue shifts so that every (edge, cycle)
//! block it touches — across all period repetitions within the hyper-cycle
//! — stays within the queue length, and the end-to-end deadline holds.
//!
//! Crate layout:
//! - [`net`]: topology, validation, deterministic shortest paths;
//! - [`flow`]: flow specs, period arithmetic, configuration validation;
//! - [`grid`]: the (edge × cycle) occupancy grid with rollback;
//! - [`sched`]: the four one-shot admission algorithms and batch driving;
//! - [`tabu`]: order-exploring metaheuristic on top of [`sched`];
//! - [`verify`]: independent replay checking, delay bounds, exact oracle;
//! - [`workload`]: topology/flow generators for experiments.

pub mod flow;
pub mod grid;
pub mod net;
pub mod sched;
pub mod tabu;
pub mod time;
pub mod verify;
pub mod workload;

pub use flow::{
    beta, distinct_periods, flows_to_entries, hyper_cycle, load_flows, max_cycle_time,
    min_cycle_time, validate_config, ConfigError, FlowError, FlowFileEntry, FlowId, FlowSpec,
    ScheduleConfig, ValidatedConfig,
};
pub use grid::{
    arrival_cycle, flow_occupied_cycles, occupied_cycles, Claim, GridError, ResourceGrid,
};
pub use net::{
    link_delay_cycles, shortest_path, validate_topology, Edge, EdgeId, EdgeSpec, NodeId, Path,
    PathError, Topology, TopologyError, ValidatedTopology,
};
pub use sched::{
    check_deadline, cycle_tags, run_batch, schedule_cs, schedule_focs, schedule_fo,
    schedule_naive, schedule_one, Algorithm, BatchResult, FlowSolution, SchedError,
};
pub use tabu::{tabu_focs, StepReport, TabuOutcome, TabuParams, TabuSearch};
pub use time::Nanos;
pub use verify::{
    brute_force_max, e2e_bounds, replay, E2eBounds, FlowVerdict, OracleLimits, OracleResult,
    VerificationReport, VerifyError, Violation, ViolationKind,
};
pub use workload::{
    gen_er_topology, gen_flows, internet2_topology, TrafficProfile, WorkloadError,
};
