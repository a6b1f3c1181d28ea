//! Port-labeled graph representation and problem instances.
//!
//! Nodes carry integer indices that are invisible to agents; agents navigate
//! purely by local port numbers `1..=degree`. Every graph is validated on
//! construction: per-node port bijection, edge symmetry, simplicity and
//! connectivity.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub type NodeId = usize;

/// Local port number. `0` is reserved for "did not move" in round inputs;
/// real ports are `1..=degree`.
pub type Port = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph needs at least 2 nodes, got {0}")]
    TooSmall(usize),
    #[error("node index {0} out of range (n = {1})")]
    NodeOutOfRange(NodeId, usize),
    #[error("black hole must not be the home node")]
    BbhAtHome,
    #[error("agent count must be at least 1")]
    NoAgents,
    #[error("node {node} port {port} is not a bijection onto 1..=degree")]
    BadPorts { node: NodeId, port: Port },
    #[error("edge ({0},{1}) is not symmetric")]
    Asymmetric(NodeId, NodeId),
    #[error("self loop at node {0}")]
    SelfLoop(NodeId),
    #[error("parallel edge between {0} and {1}")]
    ParallelEdge(NodeId, NodeId),
    #[error("graph is not connected")]
    Disconnected,
    #[error("degree bound {bound} violated at node {node} (degree {degree})")]
    DegreeBound { node: NodeId, degree: usize, bound: usize },
    #[error("invalid edge list: {0}")]
    BadEdgeList(String),
}

/// One incident edge as seen from a node: the port leads to `neighbor`, and
/// the same edge carries `reverse_port` at the other end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arc {
    pub neighbor: NodeId,
    pub reverse_port: Port,
}

/// Simple, undirected, connected port-labeled graph. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PortLabeledGraph {
    /// `adjacency[v][p-1]` is the arc behind port `p` of node `v`.
    adjacency: Vec<Vec<Arc>>,
}

impl PortLabeledGraph {
    /// Builds a graph from undirected edges `(v, port_at_v, u, port_at_u)`
    /// and validates every invariant.
    pub fn from_edges(node_count: usize, edges: &[(NodeId, Port, NodeId, Port)]) -> Result<Self, GraphError> {
        if node_count < 2 {
            return Err(GraphError::TooSmall(node_count));
        }
        // First pass: degrees.
        let mut degree = vec![0usize; node_count];
        for &(v, _, u, _) in edges {
            for x in [v, u] {
                if x >= node_count {
                    return Err(GraphError::NodeOutOfRange(x, node_count));
                }
            }
            if v == u {
                return Err(GraphError::SelfLoop(v));
            }
            degree[v] += 1;
            degree[u] += 1;
        }
        let mut adjacency: Vec<Vec<Option<Arc>>> =
            degree.iter().map(|&d| vec![None; d]).collect();
        let mut seen_pairs = BTreeSet::new();
        for &(v, pv, u, pu) in edges {
            if !seen_pairs.insert((v.min(u), v.max(u))) {
                return Err(GraphError::ParallelEdge(v, u));
            }
            for (a, pa, b, pb) in [(v, pv, u, pu), (u, pu, v, pv)] {
                if pa == 0 || pa > degree[a] {
                    return Err(GraphError::BadPorts { node: a, port: pa });
                }
                let slot = &mut adjacency[a][pa - 1];
                if slot.is_some() {
                    return Err(GraphError::BadPorts { node: a, port: pa });
                }
                *slot = Some(Arc { neighbor: b, reverse_port: pb });
            }
        }
        let adjacency: Vec<Vec<Arc>> = adjacency
            .into_iter()
            .enumerate()
            .map(|(v, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(i, a)| a.ok_or(GraphError::BadPorts { node: v, port: i + 1 }))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let g = PortLabeledGraph { adjacency };
        g.check_symmetry()?;
        g.check_connected()?;
        Ok(g)
    }

    fn check_symmetry(&self) -> Result<(), GraphError> {
        for (v, row) in self.adjacency.iter().enumerate() {
            for (i, arc) in row.iter().enumerate() {
                let back = self.adjacency[arc.neighbor]
                    .get(arc.reverse_port - 1)
                    .ok_or(GraphError::Asymmetric(v, arc.neighbor))?;
                if back.neighbor != v || back.reverse_port != i + 1 {
                    return Err(GraphError::Asymmetric(v, arc.neighbor));
                }
            }
        }
        Ok(())
    }

    fn check_connected(&self) -> Result<(), GraphError> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for arc in &self.adjacency[v] {
                if !seen[arc.neighbor] {
                    seen[arc.neighbor] = true;
                    count += 1;
                    stack.push(arc.neighbor);
                }
            }
        }
        if count != n {
            return Err(GraphError::Disconnected);
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.node_count()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    /// Node reached from `v` through port `p` (1-based).
    pub fn step(&self, v: NodeId, p: Port) -> Option<NodeId> {
        self.adjacency[v].get(p.checked_sub(1)?).map(|a| a.neighbor)
    }

    /// Arc behind port `p` of `v`.
    pub fn arc(&self, v: NodeId, p: Port) -> Option<Arc> {
        self.adjacency[v].get(p.checked_sub(1)?).copied()
    }

    /// Port of `v` that leads to `u`, if the edge exists.
    pub fn port_towards(&self, v: NodeId, u: NodeId) -> Option<Port> {
        self.adjacency[v]
            .iter()
            .position(|a| a.neighbor == u)
            .map(|i| i + 1)
    }

    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency[v].iter().map(|a| a.neighbor)
    }

    /// Canonical undirected edge list `(v, p_v, u, p_u)` with `v < u`,
    /// sorted; used by the interchange format.
    pub fn edge_list(&self) -> Vec<(NodeId, Port, NodeId, Port)> {
        let mut edges = Vec::new();
        for (v, row) in self.adjacency.iter().enumerate() {
            for (i, arc) in row.iter().enumerate() {
                if v < arc.neighbor {
                    edges.push((v, i + 1, arc.neighbor, arc.reverse_port));
                }
            }
        }
        edges.sort_unstable();
        edges
    }

    pub fn is_ring(&self) -> bool {
        (0..self.node_count()).all(|v| self.degree(v) == 2)
    }

    pub fn is_tree(&self) -> bool {
        self.edge_list().len() == self.node_count() - 1
    }
}

/// A problem instance `⟨G, k, h, 𝔟⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    pub graph: PortLabeledGraph,
    pub k: usize,
    pub home: NodeId,
    pub bbh: Option<NodeId>,
}

impl Instance {
    pub fn new(
        graph: PortLabeledGraph,
        k: usize,
        home: NodeId,
        bbh: Option<NodeId>,
    ) -> Result<Self, GraphError> {
        let n = graph.node_count();
        if home >= n {
            return Err(GraphError::NodeOutOfRange(home, n));
        }
        if let Some(b) = bbh {
            if b >= n {
                return Err(GraphError::NodeOutOfRange(b, n));
            }
            if b == home {
                return Err(GraphError::BbhAtHome);
            }
        }
        if k == 0 {
            return Err(GraphError::NoAgents);
        }
        Ok(Instance { graph, k, home, bbh })
    }
}

/// Connected components of `G − 𝔟`, with the home component listed first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentDecomposition {
    pub components: Vec<Vec<NodeId>>,
}

impl ComponentDecomposition {
    /// Index of the component containing `v`, if `v` is not the black hole.
    pub fn component_of(&self, v: NodeId) -> Option<usize> {
        self.components.iter().position(|c| c.contains(&v))
    }

    pub fn home_component(&self) -> &[NodeId] {
        &self.components[0]
    }
}

/// Components of `G − 𝔟` (whole graph when `bbh` is absent), home first.
pub fn decompose(instance: &Instance) -> ComponentDecomposition {
    let g = &instance.graph;
    let n = g.node_count();
    let mut comp = vec![usize::MAX; n];
    let mut components: Vec<Vec<NodeId>> = Vec::new();
    let excluded = instance.bbh;
    let mut order: Vec<NodeId> = vec![instance.home];
    order.extend((0..n).filter(|&v| v != instance.home));
    for start in order {
        if Some(start) == excluded || comp[start] != usize::MAX {
            continue;
        }
        let idx = components.len();
        let mut members = vec![start];
        comp[start] = idx;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for u in g.neighbors(v) {
                if Some(u) != excluded && comp[u] == usize::MAX {
                    comp[u] = idx;
                    members.push(u);
                    stack.push(u);
                }
            }
        }
        members.sort_unstable();
        components.push(members);
    }
    ComponentDecomposition { components }
}

/// Graph interchange file: `{nodes, edges: [[v, p_v, u, p_u]…], home, bbh}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GraphFile {
    pub nodes: usize,
    pub edges: Vec<(NodeId, Port, NodeId, Port)>,
    pub home: NodeId,
    pub bbh: Option<NodeId>,
    /// Agent count hint; programs may override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl GraphFile {
    pub fn from_instance(instance: &Instance) -> Self {
        GraphFile {
            nodes: instance.graph.node_count(),
            edges: instance.graph.edge_list(),
            home: instance.home,
            bbh: instance.bbh,
            k: Some(instance.k),
        }
    }

    pub fn to_instance(&self, k_override: Option<usize>) -> Result<Instance, GraphError> {
        let g = PortLabeledGraph::from_edges(self.nodes, &self.edges)?;
        let k = k_override.or(self.k).unwrap_or(1);
        Instance::new(g, k, self.home, self.bbh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> PortLabeledGraph {
        PortLabeledGraph::from_edges(3, &[(0, 1, 1, 2), (1, 1, 2, 1)]).unwrap()
    }

    #[test]
    fn edge_symmetry_enforced() {
        // port 1 of node 1 claims to reach 2 via reverse port 1, but node 2
        // says its port 1 goes to 0.
        let err = PortLabeledGraph::from_edges(3, &[(0, 1, 1, 1), (1, 1, 2, 1)]);
        assert!(err.is_err());
    }

    #[test]
    fn ports_must_be_bijection() {
        // node 1 would get ports {2,2}: slot clash
        let err = PortLabeledGraph::from_edges(3, &[(0, 1, 1, 2), (1, 2, 2, 1)]);
        assert!(matches!(err, Err(GraphError::BadPorts { node: 1, .. })));
    }

    #[test]
    fn disconnected_rejected() {
        let err = PortLabeledGraph::from_edges(4, &[(0, 1, 1, 1), (2, 1, 3, 1)]);
        assert!(matches!(err, Err(GraphError::Disconnected)));
    }

    #[test]
    fn step_and_reverse() {
        let g = path3();
        assert_eq!(g.step(0, 1), Some(1));
        assert_eq!(g.step(1, 2), Some(0));
        assert_eq!(g.port_towards(2, 1), Some(1));
    }

    #[test]
    fn bbh_at_home_rejected() {
        let g = path3();
        assert!(matches!(Instance::new(g, 4, 1, Some(1)), Err(GraphError::BbhAtHome)));
    }

    #[test]
    fn decompose_path_split() {
        let g = PortLabeledGraph::from_edges(
            5,
            &[(0, 1, 1, 2), (1, 1, 2, 2), (2, 1, 3, 2), (3, 1, 4, 1)],
        )
        .unwrap();
        let inst = Instance::new(g, 4, 0, Some(2)).unwrap();
        let d = decompose(&inst);
        assert_eq!(d.components, vec![vec![0, 1], vec![3, 4]]);
        assert_eq!(d.component_of(4), Some(1));
        assert_eq!(d.component_of(2), None);
    }

    #[test]
    fn decompose_no_bbh_is_whole_graph() {
        let g = path3();
        let inst = Instance::new(g, 1, 1, None).unwrap();
        let d = decompose(&inst);
        assert_eq!(d.components.len(), 1);
        assert_eq!(d.components[0], vec![0, 1, 2]);
    }

    #[test]
    fn graph_file_round_trip_bytes() {
        let g = path3();
        let inst = Instance::new(g, 6, 0, Some(2)).unwrap();
        let file = GraphFile::from_instance(&inst);
        let bytes = serde_json::to_string(&file).unwrap();
        let parsed: GraphFile = serde_json::from_str(&bytes).unwrap();
        let again = serde_json::to_string(&parsed).unwrap();
        assert_eq!(bytes, again);
        let inst2 = parsed.to_instance(None).unwrap();
        assert_eq!(inst, inst2);
    }
}
