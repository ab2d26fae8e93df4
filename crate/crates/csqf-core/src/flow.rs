//! Flow model and scheduling configuration.
//!
//! A flow is a periodic unicast stream pinned to one routed path: every
//! `period` it injects `packets` MTU-sized packets that must arrive within
//! `deadline`. `start` is the talker's own first-send instant inside its
//! period — relevant to the access-unaware algorithms, which cannot re-time
//! the source.
//!
//! The configuration couples the rotating-queue fabric (cycle time, queue
//! length, queue count) to the flow set: the cycle time must divide every
//! period, and must be long enough to drain a full queue at line rate.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{shortest_path, NodeId, Path, TopologyError, ValidatedTopology};
use crate::time::Nanos;

/// Dense index of a flow within one scheduling problem.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub u32);

impl FlowId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
pub struct FlowSpec {
    pub id: FlowId,
    /// Stable external name (the `id` field of the flow file).
    pub name: String,
    pub src: NodeId,
    pub dst: NodeId,
    pub period: Nanos,
    pub packets: u32,
    pub deadline: Nanos,
    /// Talker-chosen first transmission instant, in [0, period).
    pub start: Nanos,
    pub path: Path,
}

/// One flow as it appears in a flow-set file. Paths are never stored;
/// they are recomputed from the topology on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowFileEntry {
    pub id: String,
    pub src: String,
    pub dst: String,
    pub period_us: u64,
    pub packets: u32,
    pub deadline_us: u64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub start_us: u64,
}

fn is_zero(v: &u64) -> bool {
    *v == 0
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("period set is empty")]
    EmptyPeriodSet,
    #[error("hyper-cycle overflows 64-bit nanoseconds")]
    HyperCycleOverflow,
    #[error("hyper-cycle {hyper} is not a multiple of cycle time {t_cycle}")]
    NotDivisible { hyper: Nanos, t_cycle: Nanos },
    #[error("flow {flow:?}: period must be positive")]
    NonPositivePeriod { flow: String },
    #[error("flow {flow:?}: must send at least one packet per period")]
    ZeroPackets { flow: String },
    #[error("flow {flow:?}: deadline must be positive")]
    NonPositiveDeadline { flow: String },
    #[error("flow {flow:?}: start {start} not within period {period}")]
    StartBeyondPeriod { flow: String, start: Nanos, period: Nanos },
    #[error("duplicate flow name {flow:?}")]
    DuplicateFlowName { flow: String },
    #[error("flow {flow:?} references unknown node {name:?}")]
    UnknownNode { flow: String, name: String },
    #[error("flow {flow:?}: source and destination are both {node:?}")]
    SameEndpoints { flow: String, node: String },
    #[error("flow {flow:?}: {source}")]
    NoRoute {
        flow: String,
        #[source]
        source: TopologyError,
    },
}

impl FlowSpec {
    /// Build a flow on an already-routed path; `src`/`dst` are taken from
    /// the path's endpoints.
    #[allow(clippy::too_many_arguments)]
    pub fn on_path(
        id: FlowId,
        name: impl Into<String>,
        path: Path,
        topo: &ValidatedTopology,
        period: Nanos,
        packets: u32,
        deadline: Nanos,
        start: Nanos,
    ) -> Result<FlowSpec, FlowError> {
        let name = name.into();
        if period.is_zero() {
            return Err(FlowError::NonPositivePeriod { flow: name });
        }
        if packets == 0 {
            return Err(FlowError::ZeroPackets { flow: name });
        }
        if deadline.is_zero() {
            return Err(FlowError::NonPositiveDeadline { flow: name });
        }
        if start >= period {
            return Err(FlowError::StartBeyondPeriod { flow: name, start, period });
        }
        Ok(FlowSpec {
            id,
            name,
            src: path.src(topo),
            dst: path.dst(topo),
            period,
            packets,
            deadline,
            start,
            path,
        })
    }
}

/// Resolve names, route every flow along its shortest path, and validate
/// per-flow fields. Flow ids are assigned by position.
pub fn load_flows(
    entries: &[FlowFileEntry],
    topo: &ValidatedTopology,
) -> Result<Vec<FlowSpec>, FlowError> {
    let mut seen = BTreeSet::new();
    let mut flows = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        if !seen.insert(e.id.clone()) {
            return Err(FlowError::DuplicateFlowName { flow: e.id.clone() });
        }
        let resolve = |name: &str| {
            topo.node_id(name).ok_or_else(|| FlowError::UnknownNode {
                flow: e.id.clone(),
                name: name.to_owned(),
            })
        };
        let src = resolve(&e.src)?;
        let dst = resolve(&e.dst)?;
        if src == dst {
            return Err(FlowError::SameEndpoints { flow: e.id.clone(), node: e.src.clone() });
        }
        let path = shortest_path(topo, src, dst)
            .map_err(|err| FlowError::NoRoute { flow: e.id.clone(), source: err })?;
        flows.push(FlowSpec::on_path(
            FlowId(i as u32),
            e.id.clone(),
            path,
            topo,
            Nanos::from_us(e.period_us),
            e.packets,
            Nanos::from_us(e.deadline_us),
            Nanos::from_us(e.start_us),
        )?);
    }
    Ok(flows)
}

pub fn flows_to_entries(flows: &[FlowSpec], topo: &ValidatedTopology) -> Vec<FlowFileEntry> {
    flows
        .iter()
        .map(|f| FlowFileEntry {
            id: f.name.clone(),
            src: topo.node_name(f.src).to_owned(),
            dst: topo.node_name(f.dst).to_owned(),
            period_us: f.period.as_us(),
            packets: f.packets,
            deadline_us: f.deadline.as_us(),
            start_us: f.start.as_us(),
        })
        .collect()
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Least common multiple of all periods: the horizon after which the whole
/// arrival pattern repeats.
pub fn hyper_cycle(periods: &[Nanos]) -> Result<Nanos, FlowError> {
    let mut acc: u64 = match periods.first() {
        None => return Err(FlowError::EmptyPeriodSet),
        Some(p) => p.as_ns(),
    };
    for p in &periods[1..] {
        let p = p.as_ns();
        let g = gcd(acc, p);
        let wide = (acc / g) as u128 * p as u128;
        acc = u64::try_from(wide).map_err(|_| FlowError::HyperCycleOverflow)?;
    }
    Ok(Nanos::from_ns(acc))
}

/// Largest admissible cycle time: the GCD of all periods. Any longer cycle
/// cannot divide every period, so per-period offsets would drift across
/// hyper-cycle repetitions.
pub fn max_cycle_time(periods: &[Nanos]) -> Result<Nanos, FlowError> {
    let mut acc: u64 = match periods.first() {
        None => return Err(FlowError::EmptyPeriodSet),
        Some(p) => p.as_ns(),
    };
    for p in &periods[1..] {
        acc = gcd(acc, p.as_ns());
    }
    Ok(Nanos::from_ns(acc))
}

/// Smallest admissible cycle time, rounded up to a whole microsecond: the
/// receiver must be able to process and forward a full queue of `queue_len`
/// MTU-sized packets within one cycle.
pub fn min_cycle_time(
    queue_len: u32,
    mtu_bytes: u32,
    bandwidth_bps: u64,
    proc_delay: Nanos,
) -> Nanos {
    assert!(bandwidth_bps > 0, "bandwidth must be positive");
    let bits = queue_len as u128 * mtu_bytes as u128 * 8;
    let drain_ns = (bits * 1_000_000_000).div_ceil(bandwidth_bps as u128);
    let drain = Nanos::from_ns(u64::try_from(drain_ns).expect("drain time overflow"));
    (proc_delay + drain).ceil_to_us()
}

/// Cycles per hyper-cycle.
pub fn beta(hyper: Nanos, t_cycle: Nanos) -> Result<u64, FlowError> {
    if !hyper.is_multiple_of(t_cycle) {
        return Err(FlowError::NotDivisible { hyper, t_cycle });
    }
    Ok(hyper.div_exact(t_cycle))
}

/// Fabric parameters as they appear on disk (durations in µs).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub t_cycle_us: u64,
    pub queue_len: u32,
    pub queue_num: u32,
    pub bandwidth_bps: u64,
    pub mtu_bytes: u32,
    /// Default per-node processing delay; a topology's `proc_delay_us`
    /// entries override it node by node.
    #[serde(default)]
    pub proc_delay_us: u64,
}

impl ScheduleConfig {
    pub fn t_cycle(&self) -> Nanos {
        Nanos::from_us(self.t_cycle_us)
    }

    pub fn proc_delay(&self) -> Nanos {
        Nanos::from_us(self.proc_delay_us)
    }

    pub fn from_json_str(s: &str) -> Result<ScheduleConfig, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("cycle time must be positive")]
    CycleZero,
    #[error("queue length must be at least 1")]
    QueueLenZero,
    #[error("need at least 2 rotating queues, got {queue_num}")]
    QueueNumTooSmall { queue_num: u32 },
    #[error("bandwidth must be positive")]
    ZeroBandwidth,
    #[error("MTU must be positive")]
    ZeroMtu,
    #[error("cycle time {t_cycle} exceeds period gcd {period_gcd}")]
    CycleTooLarge { t_cycle: Nanos, period_gcd: Nanos },
    #[error("cycle time {t_cycle} below minimum {min_cycle} (queue drain + processing)")]
    CycleTooSmall { t_cycle: Nanos, min_cycle: Nanos },
    #[error("flow {flow:?}: period {period} not divisible by cycle time {t_cycle}")]
    PeriodNotDivisible { flow: String, period: Nanos, t_cycle: Nanos },
    #[error("hyper-cycle overflows 64-bit nanoseconds")]
    HyperCycleOverflow,
    #[error("hyper-cycle spans {beta} cycles, too many to grid")]
    BetaTooLarge { beta: u64 },
}

/// A configuration checked against a concrete flow set. Construction is the
/// proof that: cycle time is within [drain minimum, period gcd], every
/// period is a whole number of cycles, and the hyper-cycle grid fits.
#[derive(Clone, Debug)]
pub struct ValidatedConfig {
    cfg: ScheduleConfig,
    hyper: Nanos,
    beta: u32,
}

pub fn validate_config(
    flows: &[FlowSpec],
    cfg: &ScheduleConfig,
) -> Result<ValidatedConfig, ConfigError> {
    if cfg.t_cycle_us == 0 {
        return Err(ConfigError::CycleZero);
    }
    if cfg.queue_len == 0 {
        return Err(ConfigError::QueueLenZero);
    }
    if cfg.queue_num < 2 {
        return Err(ConfigError::QueueNumTooSmall { queue_num: cfg.queue_num });
    }
    if cfg.bandwidth_bps == 0 {
        return Err(ConfigError::ZeroBandwidth);
    }
    if cfg.mtu_bytes == 0 {
        return Err(ConfigError::ZeroMtu);
    }
    let t = cfg.t_cycle();
    let min = min_cycle_time(cfg.queue_len, cfg.mtu_bytes, cfg.bandwidth_bps, cfg.proc_delay());
    if t < min {
        return Err(ConfigError::CycleTooSmall { t_cycle: t, min_cycle: min });
    }

    let hyper = if flows.is_empty() {
        // Degenerate but legal: a one-cycle grid.
        t
    } else {
        let periods: Vec<Nanos> = flows.iter().map(|f| f.period).collect();
        let g = max_cycle_time(&periods).expect("nonempty");
        if t > g {
            return Err(ConfigError::CycleTooLarge { t_cycle: t, period_gcd: g });
        }
        for f in flows {
            if !f.period.is_multiple_of(t) {
                return Err(ConfigError::PeriodNotDivisible {
                    flow: f.name.clone(),
                    period: f.period,
                    t_cycle: t,
                });
            }
        }
        match hyper_cycle(&periods) {
            Ok(h) => h,
            Err(FlowError::HyperCycleOverflow) => return Err(ConfigError::HyperCycleOverflow),
            Err(e) => unreachable!("{e}"),
        }
    };
    let beta_wide = hyper.div_exact(t);
    let beta = u32::try_from(beta_wide).map_err(|_| ConfigError::BetaTooLarge { beta: beta_wide })?;
    Ok(ValidatedConfig { cfg: cfg.clone(), hyper, beta })
}

impl ValidatedConfig {
    pub fn t_cycle(&self) -> Nanos {
        self.cfg.t_cycle()
    }

    pub fn queue_len(&self) -> u32 {
        self.cfg.queue_len
    }

    pub fn queue_num(&self) -> u32 {
        self.cfg.queue_num
    }

    pub fn bandwidth_bps(&self) -> u64 {
        self.cfg.bandwidth_bps
    }

    pub fn mtu_bytes(&self) -> u32 {
        self.cfg.mtu_bytes
    }

    pub fn default_proc_delay(&self) -> Nanos {
        self.cfg.proc_delay()
    }

    pub fn raw(&self) -> &ScheduleConfig {
        &self.cfg
    }

    pub fn hyper(&self) -> Nanos {
        self.hyper
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    /// Cycles per sending period — also the size of the offset search
    /// space: offsets beyond it repeat the same grid footprint.
    pub fn period_cycles(&self, f: &FlowSpec) -> u64 {
        f.period.div_exact(self.t_cycle())
    }

    /// How many sending instances the hyper-cycle contains.
    pub fn instances(&self, f: &FlowSpec) -> u64 {
        self.hyper.div_exact(f.period)
    }

    /// Whole cycles the deadline affords (truncating).
    pub fn deadline_budget(&self, f: &FlowSpec) -> u64 {
        f.deadline.div_floor(self.t_cycle())
    }

    /// Largest per-hop queue shift: one queue receives, so a packet can be
    /// deferred across at most `queue_num - 1` consecutive cycles.
    pub fn max_delta(&self) -> u32 {
        self.cfg.queue_num - 2
    }

    /// The talker's own entry cycle within its period.
    pub fn start_cycle(&self, f: &FlowSpec) -> u64 {
        f.start.div_floor(self.t_cycle())
    }

    /// Effective processing delay at `node`: topology override or default.
    pub fn proc_delay_at(&self, topo: &ValidatedTopology, node: NodeId) -> Nanos {
        let topo_value = topo.proc_delay(node);
        if topo_value.is_zero() {
            self.cfg.proc_delay()
        } else {
            topo_value
        }
    }
}

/// Periods keyed by flow, deduplicated — convenience for the bound helpers.
pub fn distinct_periods(flows: &[FlowSpec]) -> Vec<Nanos> {
    let mut set: Vec<Nanos> = Vec::new();
    let mut seen: HashMap<u64, ()> = HashMap::new();
    for f in flows {
        if seen.insert(f.period.as_ns(), ()).is_none() {
            set.push(f.period);
        }
    }
    set.sort();
    set
}
