//! Experiment inputs: seeded random backbones and periodic traffic mixes.
//!
//! Everything here is deterministic in the seed (ChaCha8), so an experiment
//! is reproducible from its spec file alone. Link delays are whole
//! microseconds; generated deadlines are whole milliseconds.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::flow::{FlowId, FlowSpec};
use crate::net::{shortest_path, validate_topology, EdgeSpec, Topology, ValidatedTopology};
use crate::time::Nanos;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("{links} links cannot connect {nodes} nodes (need {min}..={max})")]
    InfeasibleEdgeCount { nodes: usize, links: usize, min: usize, max: usize },
    #[error("no route between sampled endpoints {src:?} and {dst:?}")]
    PathUnreachable { src: String, dst: String },
    #[error("invalid traffic profile: {detail}")]
    InvalidProfile { detail: String },
    #[error("bad link delay range [{lo}, {hi}] µs")]
    BadDelayRange { lo: u64, hi: u64 },
}

/// How a batch of flows is drawn.
#[derive(Clone, Debug)]
pub struct TrafficProfile {
    pub flow_count: usize,
    pub periods: Vec<Nanos>,
    /// Packets per period, inclusive range.
    pub packets: (u32, u32),
    /// Deadline in whole milliseconds, inclusive range.
    pub deadline_ms: (u64, u64),
}

impl TrafficProfile {
    /// The industrial mix used throughout the experiments: periods 4/8/16/32
    /// ms, 1–3 packets per period, deadlines 30–50 ms.
    pub fn industrial(flow_count: usize) -> TrafficProfile {
        TrafficProfile {
            flow_count,
            periods: vec![
                Nanos::from_ms(4),
                Nanos::from_ms(8),
                Nanos::from_ms(16),
                Nanos::from_ms(32),
            ],
            packets: (1, 3),
            deadline_ms: (30, 50),
        }
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        let invalid = |detail: &str| WorkloadError::InvalidProfile { detail: detail.into() };
        if self.periods.is_empty() {
            return Err(invalid("no periods to draw from"));
        }
        if self.periods.iter().any(|p| p.is_zero()) {
            return Err(invalid("zero period"));
        }
        if self.packets.0 == 0 || self.packets.0 > self.packets.1 {
            return Err(invalid("packet range empty or zero"));
        }
        if self.deadline_ms.0 == 0 || self.deadline_ms.0 > self.deadline_ms.1 {
            return Err(invalid("deadline range empty or zero"));
        }
        Ok(())
    }
}

/// Random connected backbone: a random spanning tree over `nodes` plus
/// uniformly drawn extra links, `links` undirected links in total, each
/// stored as a directed edge pair with one uniformly drawn delay.
pub fn gen_er_topology(
    nodes: usize,
    links: usize,
    delay_range_us: (u64, u64),
    seed: u64,
) -> Result<ValidatedTopology, WorkloadError> {
    let (lo, hi) = delay_range_us;
    if lo == 0 || lo > hi {
        return Err(WorkloadError::BadDelayRange { lo, hi });
    }
    let min = nodes.saturating_sub(1);
    let max = nodes * nodes.saturating_sub(1) / 2;
    if nodes < 2 || links < min || links > max {
        return Err(WorkloadError::InfeasibleEdgeCount { nodes, links, min, max });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (nodes - 1).to_string().len();
    let names: Vec<String> = (0..nodes).map(|i| format!("n{i:0width$}")).collect();

    // Random attachment tree over shuffled labels guarantees connectivity.
    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(&mut rng);
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(links);
    for i in 1..nodes {
        let j = rng.random_range(0..i);
        let (a, b) = (order[i].min(order[j]), order[i].max(order[j]));
        pairs.push((a, b));
    }
    let mut spare: Vec<(usize, usize)> = (0..nodes)
        .flat_map(|a| ((a + 1)..nodes).map(move |b| (a, b)))
        .filter(|p| !pairs.contains(p))
        .collect();
    spare.shuffle(&mut rng);
    pairs.extend(spare.into_iter().take(links - (nodes - 1)));

    let mut edges = Vec::with_capacity(links * 2);
    for (a, b) in pairs {
        let delay_us = rng.random_range(lo..=hi);
        edges.push(EdgeSpec { src: names[a].clone(), dst: names[b].clone(), delay_us });
        edges.push(EdgeSpec { src: names[b].clone(), dst: names[a].clone(), delay_us });
    }
    let topo = Topology { nodes: names, edges, proc_delay_us: Default::default() };
    Ok(validate_topology(&topo).expect("generated topology is well-formed"))
}

/// Continental research backbone: an 8-city subset of the Internet2
/// layer-3 network. Link delays are great-circle distance at ~2/3 c
/// (5 µs per km), rounded to whole microseconds.
const INTERNET2_CITIES: [(&str, f64, f64); 8] = [
    ("ashburn", 39.0438, -77.4874),
    ("atlanta", 33.7490, -84.3880),
    ("chicago", 41.8781, -87.6298),
    ("cleveland", 41.4993, -81.6944),
    ("indianapolis", 39.7684, -86.1581),
    ("newyork", 40.7128, -74.0060),
    ("pittsburgh", 40.4406, -79.9959),
    ("washington", 38.9072, -77.0369),
];

const INTERNET2_LINKS: [(&str, &str); 9] = [
    ("chicago", "cleveland"),
    ("chicago", "indianapolis"),
    ("indianapolis", "atlanta"),
    ("cleveland", "pittsburgh"),
    ("cleveland", "newyork"),
    ("pittsburgh", "ashburn"),
    ("ashburn", "washington"),
    ("washington", "newyork"),
    ("washington", "atlanta"),
];

fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let to_rad = std::f64::consts::PI / 180.0;
    let (lat1, lon1) = (a.0 * to_rad, a.1 * to_rad);
    let (lat2, lon2) = (b.0 * to_rad, b.1 * to_rad);
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * 6371.0 * h.sqrt().asin()
}

pub fn internet2_topology() -> ValidatedTopology {
    let coord = |name: &str| {
        INTERNET2_CITIES
            .iter()
            .find(|(n, _, _)| *n == name)
            .map(|&(_, lat, lon)| (lat, lon))
            .expect("known city")
    };
    let mut edges = Vec::with_capacity(INTERNET2_LINKS.len() * 2);
    for (a, b) in INTERNET2_LINKS {
        let km = haversine_km(coord(a), coord(b));
        let delay_us = (km * 5.0).round() as u64;
        edges.push(EdgeSpec { src: a.into(), dst: b.into(), delay_us });
        edges.push(EdgeSpec { src: b.into(), dst: a.into(), delay_us });
    }
    let topo = Topology {
        nodes: INTERNET2_CITIES.iter().map(|&(n, _, _)| n.to_string()).collect(),
        edges,
        proc_delay_us: Default::default(),
    };
    validate_topology(&topo).expect("backbone table is well-formed")
}

/// Draw `profile.flow_count` flows with uniform endpoints, periods,
/// packet counts, whole-ms deadlines, and a talker start uniform over the
/// period at µs grain. Endpoint pairs without a route are redrawn; a pair
/// failing 100 straight draws aborts with the offending pair.
pub fn gen_flows(
    profile: &TrafficProfile,
    topo: &ValidatedTopology,
    seed: u64,
) -> Result<Vec<FlowSpec>, WorkloadError> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = topo.node_count() as u32;
    assert!(n >= 2, "need at least two nodes to draw flows");
    let mut flows = Vec::with_capacity(profile.flow_count);
    for i in 0..profile.flow_count {
        let mut routed = None;
        let mut last_pair = (String::new(), String::new());
        for _ in 0..100 {
            let src = crate::net::NodeId(rng.random_range(0..n));
            let dst = crate::net::NodeId(rng.random_range(0..n));
            if src == dst {
                continue;
            }
            last_pair =
                (topo.node_name(src).to_owned(), topo.node_name(dst).to_owned());
            if let Ok(path) = shortest_path(topo, src, dst) {
                routed = Some(path);
                break;
            }
        }
        let Some(path) = routed else {
            return Err(WorkloadError::PathUnreachable { src: last_pair.0, dst: last_pair.1 });
        };
        let period = profile.periods[rng.random_range(0..profile.periods.len())];
        let packets = rng.random_range(profile.packets.0..=profile.packets.1);
        let deadline = Nanos::from_ms(rng.random_range(profile.deadline_ms.0..=profile.deadline_ms.1));
        let start = Nanos::from_us(rng.random_range(0..period.as_us()));
        let flow = FlowSpec::on_path(
            FlowId(i as u32),
            format!("f{i}"),
            path,
            topo,
            period,
            packets,
            deadline,
            start,
        )
        .expect("sampled flow fields are valid");
        flows.push(flow);
    }
    Ok(flows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_topology_shape_and_connectivity() {
        let topo = gen_er_topology(10, 14, (100, 2000), 7).unwrap();
        assert_eq!(topo.node_count(), 10);
        assert_eq!(topo.edge_count(), 28); // 14 links, both directions
        for e in topo.edge_ids() {
            let d = topo.edge(e).delay.as_us();
            assert!((100..=2000).contains(&d), "delay {d}");
        }
        for a in 0..10u32 {
            for b in 0..10u32 {
                if a != b {
                    assert!(shortest_path(
                        &topo,
                        crate::net::NodeId(a),
                        crate::net::NodeId(b)
                    )
                    .is_ok());
                }
            }
        }
    }

    #[test]
    fn er_topology_deterministic_per_seed() {
        let a = gen_er_topology(15, 18, (100, 2000), 42).unwrap();
        let b = gen_er_topology(15, 18, (100, 2000), 42).unwrap();
        let dump = |t: &ValidatedTopology| {
            t.edge_ids()
                .map(|e| (t.edge_label(e), t.edge(e).delay.as_us()))
                .collect::<Vec<_>>()
        };
        assert_eq!(dump(&a), dump(&b));
        let c = gen_er_topology(15, 18, (100, 2000), 43).unwrap();
        assert_ne!(dump(&a), dump(&c));
    }

    #[test]
    fn er_topology_rejects_bad_counts() {
        assert_eq!(
            gen_er_topology(10, 8, (100, 2000), 1).unwrap_err(),
            WorkloadError::InfeasibleEdgeCount { nodes: 10, links: 8, min: 9, max: 45 }
        );
        assert_eq!(
            gen_er_topology(4, 7, (100, 2000), 1).unwrap_err(),
            WorkloadError::InfeasibleEdgeCount { nodes: 4, links: 7, min: 3, max: 6 }
        );
        assert_eq!(
            gen_er_topology(4, 5, (0, 10), 1).unwrap_err(),
            WorkloadError::BadDelayRange { lo: 0, hi: 10 }
        );
    }

    #[test]
    fn er_topology_link_is_symmetric_pair() {
        let topo = gen_er_topology(8, 10, (100, 500), 3).unwrap();
        for e in topo.edge_ids() {
            let edge = topo.edge(e);
            let back = topo.edge_between(edge.dst, edge.src).expect("reverse edge");
            assert_eq!(topo.edge(back).delay, edge.delay);
        }
    }

    #[test]
    fn backbone_matches_survey_distances() {
        let topo = internet2_topology();
        assert_eq!(topo.node_count(), 8);
        assert_eq!(topo.edge_count(), 18);
        let d = |a: &str, b: &str| {
            let e = topo
                .edge_between(topo.node_id(a).unwrap(), topo.node_id(b).unwrap())
                .unwrap();
            topo.edge(e).delay.as_us()
        };
        // ~490 km great-circle, i.e. roughly 2.5 ms at 5 µs/km.
        assert!((2300..=2600).contains(&d("chicago", "cleveland")));
        assert_eq!(d("chicago", "cleveland"), d("cleveland", "chicago"));
        // Shortest link (Ashburn–Washington) still has a positive delay.
        assert!(d("ashburn", "washington") >= 100);
        for a in 0..8u32 {
            for b in 0..8u32 {
                if a != b {
                    assert!(shortest_path(
                        &topo,
                        crate::net::NodeId(a),
                        crate::net::NodeId(b)
                    )
                    .is_ok());
                }
            }
        }
    }

    #[test]
    fn flows_respect_profile_ranges() {
        let topo = internet2_topology();
        let profile = TrafficProfile::industrial(500);
        let flows = gen_flows(&profile, &topo, 11).unwrap();
        assert_eq!(flows.len(), 500);
        for f in &flows {
            assert!(profile.periods.contains(&f.period));
            assert!((1..=3).contains(&f.packets));
            let dl_ms = f.deadline.as_us() / 1000;
            assert!((30..=50).contains(&dl_ms));
            assert_eq!(f.deadline.as_us() % 1000, 0, "whole-ms deadline");
            assert!(f.start < f.period);
            assert_ne!(f.src, f.dst);
        }
        // Names are stable and positional.
        assert_eq!(flows[0].name, "f0");
        assert_eq!(flows[499].name, "f499");
    }

    #[test]
    fn flow_draws_are_deterministic_per_seed() {
        let topo = internet2_topology();
        let profile = TrafficProfile::industrial(100);
        let a = gen_flows(&profile, &topo, 5).unwrap();
        let b = gen_flows(&profile, &topo, 5).unwrap();
        let key = |fs: &[FlowSpec]| {
            fs.iter()
                .map(|f| (f.src, f.dst, f.period, f.packets, f.deadline, f.start))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&a), key(&b));
        let c = gen_flows(&profile, &topo, 6).unwrap();
        assert_ne!(key(&a), key(&c));
    }

    #[test]
    fn period_draw_is_unbiased() {
        let topo = internet2_topology();
        let profile = TrafficProfile::industrial(4000);
        let flows = gen_flows(&profile, &topo, 99).unwrap();
        let mut counts = [0f64; 4];
        for f in &flows {
            let idx = profile.periods.iter().position(|&p| p == f.period).unwrap();
            counts[idx] += 1.0;
        }
        let expect = 1000.0;
        let chi2: f64 = counts.iter().map(|c| (c - expect).powi(2) / expect).sum();
        // 99.9th percentile of chi-squared with 3 degrees of freedom.
        assert!(chi2 < 16.27, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn unreachable_pairs_abort_after_retries() {
        let raw = Topology {
            nodes: vec!["a".into(), "b".into()],
            edges: vec![],
            proc_delay_us: Default::default(),
        };
        let topo = validate_topology(&raw).unwrap();
        let profile = TrafficProfile::industrial(1);
        assert!(matches!(
            gen_flows(&profile, &topo, 1),
            Err(WorkloadError::PathUnreachable { .. })
        ));
    }

    #[test]
    fn profile_validation() {
        let topo = internet2_topology();
        let mut p = TrafficProfile::industrial(1);
        p.periods.clear();
        assert!(matches!(
            gen_flows(&p, &topo, 1),
            Err(WorkloadError::InvalidProfile { .. })
        ));
        let mut p = TrafficProfile::industrial(1);
        p.packets = (3, 1);
        assert!(matches!(
            gen_flows(&p, &topo, 1),
            Err(WorkloadError::InvalidProfile { .. })
        ));
        let mut p = TrafficProfile::industrial(1);
        p.deadline_ms = (0, 10);
        assert!(matches!(
            gen_flows(&p, &topo, 1),
            Err(WorkloadError::InvalidProfile { .. })
        ));
    }
}
