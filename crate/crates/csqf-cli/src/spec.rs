//! Experiment descriptions: inputs, algorithm list, seeds, and presets.
//!
//! A spec file is a single JSON object; every input can either be inlined
//! (generator parameters) or point at a file in the formats the core crate
//! reads. Seeds are either listed explicitly or derived from `master_seed`,
//! so a spec file alone reproduces an experiment bit-for-bit.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use csqf_core::{
    gen_er_topology, internet2_topology, load_flows, validate_topology, Algorithm, FlowFileEntry,
    FlowSpec, Nanos, ScheduleConfig, TabuParams, Topology, TrafficProfile, ValidatedTopology,
};

use crate::HarnessError;

/// The five runnable algorithms: the four one-shot admissions plus the
/// tabu search layered on the last of them.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoChoice {
    Naive,
    Cs,
    Fo,
    Focs,
    Tabu,
}

impl AlgoChoice {
    pub const ALL: [AlgoChoice; 5] = [
        AlgoChoice::Naive,
        AlgoChoice::Cs,
        AlgoChoice::Fo,
        AlgoChoice::Focs,
        AlgoChoice::Tabu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlgoChoice::Naive => "naive",
            AlgoChoice::Cs => "cs",
            AlgoChoice::Fo => "fo",
            AlgoChoice::Focs => "focs",
            AlgoChoice::Tabu => "tabu",
        }
    }

    /// The one-shot algorithm this maps to, or `None` for the tabu search.
    pub fn as_batch(self) -> Option<Algorithm> {
        match self {
            AlgoChoice::Naive => Some(Algorithm::Naive),
            AlgoChoice::Cs => Some(Algorithm::Cs),
            AlgoChoice::Fo => Some(Algorithm::Fo),
            AlgoChoice::Focs => Some(Algorithm::Focs),
            AlgoChoice::Tabu => None,
        }
    }
}

impl fmt::Display for AlgoChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgoChoice {
    type Err = String;
    fn from_str(s: &str) -> Result<AlgoChoice, String> {
        match s {
            "naive" => Ok(AlgoChoice::Naive),
            "cs" => Ok(AlgoChoice::Cs),
            "fo" => Ok(AlgoChoice::Fo),
            "focs" => Ok(AlgoChoice::Focs),
            "tabu" => Ok(AlgoChoice::Tabu),
            other => Err(format!("unknown algorithm {other:?} (naive|cs|fo|focs|tabu)")),
        }
    }
}

/// Where the topology comes from: the embedded backbone by name, a seeded
/// random graph, or a topology file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySource {
    Named(String),
    Er { er: ErParams },
    File { file: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErParams {
    pub nodes: usize,
    pub links: usize,
    #[serde(default = "ErParams::default_delay_min")]
    pub delay_min_us: u64,
    #[serde(default = "ErParams::default_delay_max")]
    pub delay_max_us: u64,
    /// Generator seed; defaults to a value derived from the master seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ErParams {
    fn default_delay_min() -> u64 {
        100
    }
    fn default_delay_max() -> u64 {
        2000
    }
}

impl TopologySource {
    pub fn resolve(&self, master_seed: u64) -> Result<ValidatedTopology, HarnessError> {
        match self {
            TopologySource::Named(name) if name == "internet2" => Ok(internet2_topology()),
            TopologySource::Named(name) => Err(HarnessError::Spec(format!(
                "unknown topology name {name:?} (only \"internet2\" is embedded)"
            ))),
            TopologySource::Er { er } => {
                let seed = er.seed.unwrap_or_else(|| derive_seed(master_seed, SALT_TOPO));
                gen_er_topology(er.nodes, er.links, (er.delay_min_us, er.delay_max_us), seed)
                    .map_err(|e| HarnessError::Spec(format!("er topology: {e}")))
            }
            TopologySource::File { file } => {
                let raw: Topology = read_json(file)?;
                validate_topology(&raw)
                    .map_err(|e| HarnessError::Spec(format!("{}: {e}", file.display())))
            }
        }
    }
}

/// Traffic as a seeded generator profile or a fixed flow file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrafficSource {
    Profile { profile: ProfileParams },
    File { file: PathBuf },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileParams {
    pub flow_count: usize,
    #[serde(default = "ProfileParams::default_periods_ms")]
    pub periods_ms: Vec<u64>,
    /// Packets per period, inclusive range.
    #[serde(default = "ProfileParams::default_packets")]
    pub packets: (u32, u32),
    /// Deadline in whole milliseconds, inclusive range.
    #[serde(default = "ProfileParams::default_deadline_ms")]
    pub deadline_ms: (u64, u64),
}

impl ProfileParams {
    fn default_periods_ms() -> Vec<u64> {
        vec![4, 8, 16, 32]
    }
    fn default_packets() -> (u32, u32) {
        (1, 3)
    }
    fn default_deadline_ms() -> (u64, u64) {
        (30, 50)
    }

    pub fn to_profile(&self, flow_count: usize) -> TrafficProfile {
        TrafficProfile {
            flow_count,
            periods: self.periods_ms.iter().map(|&ms| Nanos::from_ms(ms)).collect(),
            packets: self.packets,
            deadline_ms: self.deadline_ms,
        }
    }
}

/// Tabu budgets exposed in the spec file; removal fraction and list size
/// stay at the library defaults.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabuKnobs {
    pub max_iterations: u32,
    pub max_no_improve: u32,
}

impl TabuKnobs {
    pub fn to_params(self) -> TabuParams {
        TabuParams {
            max_iterations: self.max_iterations,
            max_no_improve: self.max_no_improve,
            ..TabuParams::full()
        }
    }
}

impl Default for TabuKnobs {
    fn default() -> TabuKnobs {
        let p = TabuParams::full();
        TabuKnobs { max_iterations: p.max_iterations, max_no_improve: p.max_no_improve }
    }
}

/// One experiment: a topology, a traffic source, a switch configuration,
/// and the (algorithm × flow level × seed) grid to run over it.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub topology: TopologySource,
    pub traffic: TrafficSource,
    pub config: ScheduleConfig,
    pub algorithms: Vec<AlgoChoice>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    /// Explicit run seeds; when empty, `repetitions` seeds are derived
    /// from `master_seed`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: Option<u64>,
    /// Flow-count levels to sweep; empty means the profile's own count
    /// (or the flow file's length).
    #[serde(default)]
    pub levels: Vec<usize>,
    #[serde(default)]
    pub tabu: TabuKnobs,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_repetitions() -> u32 {
    1
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<ExperimentSpec, HarnessError> {
        let spec: ExperimentSpec = read_json(path)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.algorithms.is_empty() {
            return Err(HarnessError::Spec("no algorithms selected".into()));
        }
        if self.repetitions == 0 {
            return Err(HarnessError::Spec("repetitions must be at least 1".into()));
        }
        if !self.seeds.is_empty() && self.seeds.len() < self.repetitions as usize {
            return Err(HarnessError::Spec(format!(
                "{} seeds listed but {} repetitions requested",
                self.seeds.len(),
                self.repetitions
            )));
        }
        if self.levels.contains(&0) {
            return Err(HarnessError::Spec("flow level 0 makes no runs".into()));
        }
        let mut distinct = self.levels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != self.levels.len() {
            return Err(HarnessError::Spec("duplicate flow levels".into()));
        }
        if matches!(self.traffic, TrafficSource::File { .. }) && !self.levels.is_empty() {
            return Err(HarnessError::Spec(
                "levels require a traffic profile; a flow file fixes the count".into(),
            ));
        }
        Ok(())
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed.or_else(|| self.seeds.first().copied()).unwrap_or(0)
    }

    /// The run seeds, one per repetition.
    pub fn run_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            let master = self.master_seed();
            (0..self.repetitions as u64).map(|i| derive_seed(master, SALT_RUN ^ i)).collect()
        } else {
            self.seeds[..self.repetitions as usize].to_vec()
        }
    }

    /// The flow-count levels to sweep (`None` = "whatever the file has").
    pub fn flow_levels(&self) -> Vec<Option<usize>> {
        match &self.traffic {
            TrafficSource::File { .. } => vec![None],
            TrafficSource::Profile { profile } => {
                if self.levels.is_empty() {
                    vec![Some(profile.flow_count)]
                } else {
                    self.levels.iter().copied().map(Some).collect()
                }
            }
        }
    }

    /// Flows for one (level, seed) cell. File-backed traffic ignores the
    /// seed: the instance is fixed and only algorithm randomness varies.
    pub fn flows_for(
        &self,
        topo: &ValidatedTopology,
        level: Option<usize>,
        seed: u64,
    ) -> Result<Vec<FlowSpec>, HarnessError> {
        match &self.traffic {
            TrafficSource::Profile { profile } => {
                let count = level.unwrap_or(profile.flow_count);
                csqf_core::gen_flows(&profile.to_profile(count), topo, seed)
                    .map_err(|e| HarnessError::Spec(format!("traffic profile: {e}")))
            }
            TrafficSource::File { file } => {
                let entries: Vec<FlowFileEntry> = read_json(file)?;
                load_flows(&entries, topo)
                    .map_err(|e| HarnessError::Spec(format!("{}: {e}", file.display())))
            }
        }
    }

    /// CI-sized default: the embedded backbone, a light flow load, all
    /// five algorithms, three repetitions.
    pub fn desk_preset() -> ExperimentSpec {
        ExperimentSpec {
            topology: TopologySource::Named("internet2".into()),
            traffic: TrafficSource::Profile {
                profile: ProfileParams {
                    flow_count: 200,
                    periods_ms: ProfileParams::default_periods_ms(),
                    packets: ProfileParams::default_packets(),
                    deadline_ms: ProfileParams::default_deadline_ms(),
                },
            },
            config: default_switch_config(),
            algorithms: AlgoChoice::ALL.to_vec(),
            repetitions: 3,
            seeds: Vec::new(),
            master_seed: Some(1),
            levels: Vec::new(),
            tabu: {
                let p = TabuParams::desk();
                TabuKnobs { max_iterations: p.max_iterations, max_no_improve: p.max_no_improve }
            },
            output_dir: None,
        }
    }

    /// Full-scale sweep: four flow levels, the four one-shot algorithms,
    /// five repetitions per cell. Selecting `tabu` on top (via `--algo`)
    /// runs the full-budget search — hours, not CI.
    pub fn full_preset() -> ExperimentSpec {
        ExperimentSpec {
            topology: TopologySource::Named("internet2".into()),
            traffic: TrafficSource::Profile {
                profile: ProfileParams {
                    flow_count: 4000,
                    periods_ms: ProfileParams::default_periods_ms(),
                    packets: ProfileParams::default_packets(),
                    deadline_ms: ProfileParams::default_deadline_ms(),
                },
            },
            config: default_switch_config(),
            algorithms: vec![AlgoChoice::Naive, AlgoChoice::Cs, AlgoChoice::Fo, AlgoChoice::Focs],
            repetitions: 5,
            seeds: Vec::new(),
            master_seed: Some(1),
            levels: vec![1000, 2000, 3000, 4000],
            tabu: TabuKnobs::default(),
            output_dir: None,
        }
    }
}

/// The switch configuration used throughout the evaluation: 125 µs cycles,
/// 10-packet queues, 3 queues per port, gigabit links, standard frames.
pub fn default_switch_config() -> ScheduleConfig {
    ScheduleConfig {
        t_cycle_us: 125,
        queue_len: 10,
        queue_num: 3,
        bandwidth_bps: 1_000_000_000,
        mtu_bytes: 1522,
        proc_delay_us: 0,
    }
}

pub(crate) const SALT_TOPO: u64 = 0x746f_706f; // "topo"
pub(crate) const SALT_RUN: u64 = 0x7275_6e73 << 16; // "runs"
pub(crate) const SALT_TABU: u64 = 0x7461_6275; // "tabu"

/// SplitMix64 step — the standard 64-bit mixer; used to decorrelate the
/// per-purpose seed streams spawned from one master seed.
pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn derive_seed(master: u64, salt: u64) -> u64 {
    splitmix64(master ^ salt)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path)
        .map_err(|e| HarnessError::Io { path: path.to_owned(), detail: e.to_string() })?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Spec(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algo_choice_round_trips_names() {
        for a in AlgoChoice::ALL {
            assert_eq!(a.name().parse::<AlgoChoice>().unwrap(), a);
        }
        assert!("fastest".parse::<AlgoChoice>().is_err());
    }

    #[test]
    fn topology_source_json_shapes() {
        let named: TopologySource = serde_json::from_str(r#""internet2""#).unwrap();
        assert_eq!(named.resolve(0).unwrap().node_count(), 8);

        let er: TopologySource =
            serde_json::from_str(r#"{"er":{"nodes":10,"links":14,"seed":7}}"#).unwrap();
        assert_eq!(er.resolve(0).unwrap().node_count(), 10);

        let bad: TopologySource = serde_json::from_str(r#""geant""#).unwrap();
        assert!(matches!(bad.resolve(0), Err(HarnessError::Spec(_))));
    }

    #[test]
    fn er_seed_falls_back_to_master_derivation() {
        let src: TopologySource = serde_json::from_str(r#"{"er":{"nodes":6,"links":8}}"#).unwrap();
        let a = src.resolve(42).unwrap();
        let b = src.resolve(42).unwrap();
        let c = src.resolve(43).unwrap();
        let delays =
            |t: &ValidatedTopology| t.edge_ids().map(|e| t.edge(e).delay).collect::<Vec<_>>();
        assert_eq!(delays(&a), delays(&b));
        assert_ne!(delays(&a), delays(&c));
    }

    #[test]
    fn seed_list_and_derivation() {
        let mut spec = ExperimentSpec::desk_preset();
        assert_eq!(spec.run_seeds().len(), 3);
        assert_eq!(spec.run_seeds(), spec.run_seeds());

        spec.seeds = vec![9, 8, 7, 6];
        spec.repetitions = 2;
        assert_eq!(spec.run_seeds(), vec![9, 8]);

        spec.repetitions = 5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn levels_default_to_profile_count() {
        let spec = ExperimentSpec::desk_preset();
        assert_eq!(spec.flow_levels(), vec![Some(200)]);

        let full = ExperimentSpec::full_preset();
        assert_eq!(full.flow_levels().len(), 4);
    }

    #[test]
    fn flow_file_traffic_rejects_levels() {
        let mut spec = ExperimentSpec::desk_preset();
        spec.traffic = TrafficSource::File { file: "flows.json".into() };
        spec.levels = vec![100];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ExperimentSpec::full_preset();
        let text = serde_json::to_string_pretty(&spec).unwrap();
        let back: ExperimentSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back.algorithms, spec.algorithms);
        assert_eq!(back.levels, spec.levels);
        assert_eq!(back.repetitions, spec.repetitions);
    }
}
