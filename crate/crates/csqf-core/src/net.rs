//! Network model: directed topology with per-link propagation delays,
//! per-node processing delays, and deterministic shortest-path routing.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Nanos;

/// Index into a validated topology's node table.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

/// Index into a validated topology's edge table.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EdgeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Raw topology as it appears on disk. Node names are free-form strings;
/// edges are directed and carry a propagation delay in whole microseconds.
/// `proc_delay_us` optionally overrides the per-node processing delay
/// (missing nodes default to zero).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub proc_delay_us: BTreeMap<String, u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub src: String,
    pub dst: String,
    pub delay_us: u64,
}

impl Topology {
    pub fn from_json_str(s: &str) -> Result<Topology, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serialization")
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("duplicate node name {name:?}")]
    DuplicateNode { name: String },
    #[error("duplicate edge {src:?} -> {dst:?}")]
    DuplicateEdge { src: String, dst: String },
    #[error("self-loop on node {node:?}")]
    SelfLoop { node: String },
    #[error("non-positive delay on edge {src:?} -> {dst:?}")]
    NonPositiveDelay { src: String, dst: String },
    #[error("reference to undeclared node {name:?}")]
    DanglingNodeRef { name: String },
    #[error("no route from {src:?} to {dst:?}")]
    Unreachable { src: String, dst: String },
    #[error("route endpoints are the same node {node:?}")]
    SameEndpoints { node: String },
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub delay: Nanos,
}

/// A topology that passed structural validation: names resolved to dense
/// ids, adjacency built, every delay positive, no duplicate or self edges.
#[derive(Clone, Debug)]
pub struct ValidatedTopology {
    names: Vec<String>,
    name_to_id: HashMap<String, NodeId>,
    edges: Vec<Edge>,
    /// Outgoing edge ids per node, sorted by destination ordinal so every
    /// traversal order is deterministic.
    out: Vec<Vec<EdgeId>>,
    edge_by_pair: HashMap<(NodeId, NodeId), EdgeId>,
    proc_delay: Vec<Nanos>,
}

pub fn validate_topology(raw: &Topology) -> Result<ValidatedTopology, TopologyError> {
    let mut name_to_id = HashMap::with_capacity(raw.nodes.len());
    for (i, name) in raw.nodes.iter().enumerate() {
        if name_to_id.insert(name.clone(), NodeId(i as u32)).is_some() {
            return Err(TopologyError::DuplicateNode { name: name.clone() });
        }
    }
    let resolve = |name: &str| {
        name_to_id
            .get(name)
            .copied()
            .ok_or_else(|| TopologyError::DanglingNodeRef { name: name.to_owned() })
    };

    let mut edges = Vec::with_capacity(raw.edges.len());
    let mut edge_by_pair = HashMap::with_capacity(raw.edges.len());
    let mut out = vec![Vec::new(); raw.nodes.len()];
    for spec in &raw.edges {
        let src = resolve(&spec.src)?;
        let dst = resolve(&spec.dst)?;
        if src == dst {
            return Err(TopologyError::SelfLoop { node: spec.src.clone() });
        }
        if spec.delay_us == 0 {
            return Err(TopologyError::NonPositiveDelay {
                src: spec.src.clone(),
                dst: spec.dst.clone(),
            });
        }
        let id = EdgeId(edges.len() as u32);
        if edge_by_pair.insert((src, dst), id).is_some() {
            return Err(TopologyError::DuplicateEdge {
                src: spec.src.clone(),
                dst: spec.dst.clone(),
            });
        }
        out[src.index()].push(id);
        edges.push(Edge { src, dst, delay: Nanos::from_us(spec.delay_us) });
    }
    for list in &mut out {
        list.sort_by_key(|e| edges[e.index()].dst);
    }

    let mut proc_delay = vec![Nanos::ZERO; raw.nodes.len()];
    for (name, us) in &raw.proc_delay_us {
        let id = resolve(name)?;
        proc_delay[id.index()] = Nanos::from_us(*us);
    }

    Ok(ValidatedTopology {
        names: raw.nodes.clone(),
        name_to_id,
        edges,
        out,
        edge_by_pair,
        proc_delay,
    })
}

impl ValidatedTopology {
    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.name_to_id.get(name).copied()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.names[id.index()]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.index()]
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        (0..self.edges.len()).map(|i| EdgeId(i as u32))
    }

    pub fn edge_between(&self, src: NodeId, dst: NodeId) -> Option<EdgeId> {
        self.edge_by_pair.get(&(src, dst)).copied()
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out[node.index()]
    }

    pub fn proc_delay(&self, node: NodeId) -> Nanos {
        self.proc_delay[node.index()]
    }

    /// Human-readable edge label, e.g. `"chicago->cleveland"`.
    pub fn edge_label(&self, id: EdgeId) -> String {
        let e = self.edge(id);
        format!("{}->{}", self.node_name(e.src), self.node_name(e.dst))
    }

    /// The serializable form this topology validates back from.
    pub fn to_raw(&self) -> Topology {
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeSpec {
                src: self.node_name(e.src).to_owned(),
                dst: self.node_name(e.dst).to_owned(),
                delay_us: e.delay.as_us(),
            })
            .collect();
        let proc_delay_us = self
            .names
            .iter()
            .zip(&self.proc_delay)
            .filter(|(_, d)| !d.is_zero())
            .map(|(n, d)| (n.clone(), d.as_us()))
            .collect();
        Topology { nodes: self.names.clone(), edges, proc_delay_us }
    }
}

/// A simple (loop-free) directed path, stored as its edge sequence.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Path {
    edges: Vec<EdgeId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("a path needs at least one edge")]
    Empty,
    #[error("edges {prev:?} and {next:?} do not share a node")]
    Disconnected { prev: EdgeId, next: EdgeId },
    #[error("path revisits node {node:?}")]
    RevisitsNode { node: NodeId },
}

impl Path {
    pub fn new(topo: &ValidatedTopology, edges: Vec<EdgeId>) -> Result<Path, PathError> {
        if edges.is_empty() {
            return Err(PathError::Empty);
        }
        let mut seen = vec![false; topo.node_count()];
        seen[topo.edge(edges[0]).src.index()] = true;
        for (i, &id) in edges.iter().enumerate() {
            let e = topo.edge(id);
            if i > 0 {
                let prev = topo.edge(edges[i - 1]);
                if prev.dst != e.src {
                    return Err(PathError::Disconnected { prev: edges[i - 1], next: id });
                }
            }
            if seen[e.dst.index()] {
                return Err(PathError::RevisitsNode { node: e.dst });
            }
            seen[e.dst.index()] = true;
        }
        Ok(Path { edges })
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn hops(&self) -> usize {
        self.edges.len()
    }

    pub fn src(&self, topo: &ValidatedTopology) -> NodeId {
        topo.edge(self.edges[0]).src
    }

    pub fn dst(&self, topo: &ValidatedTopology) -> NodeId {
        topo.edge(*self.edges.last().unwrap()).dst
    }

    /// Node sequence src..dst (hops + 1 entries).
    pub fn nodes(&self, topo: &ValidatedTopology) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.edges.len() + 1);
        out.push(self.src(topo));
        for &e in &self.edges {
            out.push(topo.edge(e).dst);
        }
        out
    }

    pub fn total_link_delay(&self, topo: &ValidatedTopology) -> Nanos {
        self.edges.iter().map(|&e| topo.edge(e).delay).sum()
    }

    /// Processing delay summed over intermediate nodes and the destination
    /// (the source injects and does not process).
    pub fn total_proc_delay(&self, topo: &ValidatedTopology) -> Nanos {
        self.edges.iter().map(|&e| topo.proc_delay(topo.edge(e).dst)).sum()
    }
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.edges.iter().map(|e| e.0)).finish()
    }
}

/// Minimum-delay route by Dijkstra. Ties are broken deterministically: among
/// equal-length routes the predecessor with the smaller node ordinal wins,
/// so repeated runs (and runs on re-serialized topologies) pick identical
/// paths.
pub fn shortest_path(
    topo: &ValidatedTopology,
    src: NodeId,
    dst: NodeId,
) -> Result<Path, TopologyError> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    if src == dst {
        return Err(TopologyError::SameEndpoints { node: topo.node_name(src).to_owned() });
    }

    let n = topo.node_count();
    let mut dist: Vec<Option<u64>> = vec![None; n];
    let mut prev: Vec<Option<EdgeId>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src.index()] = Some(0);
    heap.push(Reverse((0u64, src.0)));

    while let Some(Reverse((d, u))) = heap.pop() {
        let u = NodeId(u);
        if settled[u.index()] {
            continue;
        }
        settled[u.index()] = true;
        if u == dst {
            break;
        }
        for &eid in topo.out_edges(u) {
            let e = topo.edge(eid);
            let v = e.dst;
            if settled[v.index()] {
                continue;
            }
            let nd = d + e.delay.as_ns();
            match dist[v.index()] {
                None => {
                    dist[v.index()] = Some(nd);
                    prev[v.index()] = Some(eid);
                    heap.push(Reverse((nd, v.0)));
                }
                Some(cur) if nd < cur => {
                    dist[v.index()] = Some(nd);
                    prev[v.index()] = Some(eid);
                    heap.push(Reverse((nd, v.0)));
                }
                Some(cur) if nd == cur => {
                    // Equal length: keep the smaller predecessor ordinal.
                    let old_pred = topo.edge(prev[v.index()].unwrap()).src;
                    if u < old_pred {
                        prev[v.index()] = Some(eid);
                    }
                }
                Some(_) => {}
            }
        }
    }

    if !settled[dst.index()] {
        return Err(TopologyError::Unreachable {
            src: topo.node_name(src).to_owned(),
            dst: topo.node_name(dst).to_owned(),
        });
    }
    let mut edges = Vec::new();
    let mut cur = dst;
    while cur != src {
        let eid = prev[cur.index()].expect("settled node has predecessor");
        edges.push(eid);
        cur = topo.edge(eid).src;
    }
    edges.reverse();
    Ok(Path { edges })
}

/// How many scheduling cycles a link delay spans: ⌈delay / t_cycle⌉.
/// A packet sent in cycle X is guaranteed present at the next hop once
/// this many cycles have elapsed.
pub fn link_delay_cycles(delay: Nanos, t_cycle: Nanos) -> u64 {
    assert!(!t_cycle.is_zero(), "cycle time must be positive");
    delay.div_ceil(t_cycle)
}
