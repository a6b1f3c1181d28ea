//! Deterministic instance generators.
//!
//! Port labelings are canonical (port 1 points to the next node in
//! construction order) so repeated builds and traces are reproducible. The
//! lower-bound family additionally accepts explicit port permutations, since
//! its adversary picks labelings adaptively.

use crate::graph::{GraphError, Instance, NodeId, Port, PortLabeledGraph};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Labels edges with per-node ports in edge-list order.
fn ports_in_order(n: usize, edges: &[(NodeId, NodeId)]) -> Result<PortLabeledGraph, GraphError> {
    let mut next_port: Vec<Port> = vec![1; n];
    let mut labeled = Vec::with_capacity(edges.len());
    for &(v, u) in edges {
        if v >= n || u >= n {
            return Err(GraphError::NodeOutOfRange(v.max(u), n));
        }
        let pv = next_port[v];
        next_port[v] += 1;
        let pu = next_port[u];
        next_port[u] += 1;
        labeled.push((v, pv, u, pu));
    }
    PortLabeledGraph::from_edges(n, &labeled)
}

/// Path on `n` nodes `0..n`. Interior node `i` has port 1 toward `i+1` and
/// port 2 toward `i-1`; each endpoint has the single port 1.
pub fn build_path(
    n: usize,
    home: NodeId,
    bbh: Option<NodeId>,
    k: usize,
) -> Result<Instance, GraphError> {
    if n < 2 {
        return Err(GraphError::TooSmall(n));
    }
    let mut edges = Vec::new();
    for i in 0..n - 1 {
        let pv = 1; // toward higher index
        let pu = if i + 1 == n - 1 { 1 } else { 2 };
        edges.push((i, pv, i + 1, pu));
    }
    let g = PortLabeledGraph::from_edges(n, &edges)?;
    Instance::new(g, k, home, bbh)
}

/// Ring on `n` nodes; every node has port 1 forward (`i+1 mod n`) and
/// port 2 backward.
pub fn build_ring(
    n: usize,
    home: NodeId,
    bbh: Option<NodeId>,
    k: usize,
) -> Result<Instance, GraphError> {
    if n < 3 {
        return Err(GraphError::TooSmall(n));
    }
    let edges: Vec<_> = (0..n).map(|i| (i, 1, (i + 1) % n, 2)).collect();
    let g = PortLabeledGraph::from_edges(n, &edges)?;
    Instance::new(g, k, home, bbh)
}

/// Tree from an explicit undirected edge list; ports assigned per node in
/// edge-list order.
pub fn build_tree(
    n: usize,
    edges: &[(NodeId, NodeId)],
    home: NodeId,
    bbh: Option<NodeId>,
    k: usize,
) -> Result<Instance, GraphError> {
    if edges.len() != n.saturating_sub(1) {
        return Err(GraphError::BadEdgeList(format!(
            "a tree on {n} nodes needs {} edges, got {}",
            n.saturating_sub(1),
            edges.len()
        )));
    }
    let g = ports_in_order(n, edges)?;
    Instance::new(g, k, home, bbh)
}

/// Tree from a Prüfer sequence over nodes `0..n` (sequence length `n-2`).
pub fn tree_edges_from_pruefer(n: usize, seq: &[NodeId]) -> Result<Vec<(NodeId, NodeId)>, GraphError> {
    if n < 2 || seq.len() != n - 2 {
        return Err(GraphError::BadEdgeList(format!(
            "prüfer sequence for n={n} must have length {}",
            n.saturating_sub(2)
        )));
    }
    let mut degree = vec![1usize; n];
    for &s in seq {
        if s >= n {
            return Err(GraphError::NodeOutOfRange(s, n));
        }
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    let mut seq = seq.to_vec();
    for _ in 0..n - 2 {
        let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
        let s = seq.remove(0);
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<_> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    Ok(edges)
}

/// Seed-reproducible random connected graph with maximum degree `max_degree`.
pub fn build_random_bounded(
    n: usize,
    max_degree: usize,
    seed: u64,
    home: NodeId,
    bbh: Option<NodeId>,
    k: usize,
) -> Result<Instance, GraphError> {
    if n < 2 {
        return Err(GraphError::TooSmall(n));
    }
    if max_degree < 2 {
        return Err(GraphError::DegreeBound { node: 0, degree: 2, bound: max_degree });
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut degree = vec![0usize; n];
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    // Random spanning tree respecting the bound.
    for v in 1..n {
        let candidates: Vec<NodeId> = (0..v).filter(|&u| degree[u] < max_degree).collect();
        let u = candidates[rng.random_range(0..candidates.len())];
        edges.push((u, v));
        degree[u] += 1;
        degree[v] += 1;
    }
    // Sprinkle extra edges while respecting simplicity and the bound.
    let extra_attempts = n;
    for _ in 0..extra_attempts {
        let v = rng.random_range(0..n);
        let u = rng.random_range(0..n);
        if v == u || degree[v] >= max_degree || degree[u] >= max_degree {
            continue;
        }
        let (a, b) = (v.min(u), v.max(u));
        if edges.iter().any(|&(x, y)| (x, y) == (a, b)) {
            continue;
        }
        edges.push((a, b));
        degree[a] += 1;
        degree[b] += 1;
    }
    let g = ports_in_order(n, &edges)?;
    if g.max_degree() > max_degree {
        return Err(GraphError::DegreeBound {
            node: 0,
            degree: g.max_degree(),
            bound: max_degree,
        });
    }
    Instance::new(g, k, home, bbh)
}

/// Which extension connects a spine node `v_i` to the black hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtKind {
    /// Direct edge `v_i — 𝔟`.
    Direct,
    /// Via an intermediate node `w_i` of degree Δ.
    ViaW,
}

/// Node roles of the lower-bound family output, keyed by node id, for tests
/// and diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FamilyRole {
    Spine(usize),
    Between { segment: usize, index: usize },
    BlackHole,
    W(usize),
    Z,
    Leaf,
    TreeInner,
}

pub struct LowerBoundFamily {
    pub instance: Instance,
    pub roles: Vec<FamilyRole>,
    /// Ids of the spine nodes `v_1..v_Δ` in order.
    pub spine: Vec<NodeId>,
}

/// Lower-bound family 𝒢: spine path with Δ special nodes, black-hole
/// attachments (direct or via `w_i`), and height-2 trees padding every spine
/// node to degree Δ.
///
/// `membership[i]` describes `v_{i+1}` for `i < Δ−1`; `v_Δ` joins the second
/// class only when every other node does (the degenerate case).
pub fn build_lowerbound_family(
    delta: usize,
    segment_lengths: &[usize],
    membership: &[ExtKind],
    k: usize,
) -> Result<LowerBoundFamily, GraphError> {
    if delta < 4 {
        return Err(GraphError::BadEdgeList(format!("delta must be >= 4, got {delta}")));
    }
    if segment_lengths.len() != delta - 1 || segment_lengths.iter().any(|&l| l == 0) {
        return Err(GraphError::BadEdgeList(
            "need delta-1 positive segment lengths".into(),
        ));
    }
    if membership.len() != delta - 1 {
        return Err(GraphError::BadEdgeList("need delta-1 membership entries".into()));
    }
    let mut nodes: Vec<FamilyRole> = Vec::new();
    let fresh = |role: FamilyRole, nodes: &mut Vec<FamilyRole>| -> NodeId {
        nodes.push(role);
        nodes.len() - 1
    };
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();

    // Block 1: spine.
    let mut spine = Vec::new();
    let mut between: Vec<Vec<NodeId>> = Vec::new();
    for i in 0..delta {
        spine.push(fresh(FamilyRole::Spine(i + 1), &mut nodes));
    }
    for (s, &len) in segment_lengths.iter().enumerate() {
        let mut seg = Vec::new();
        for j in 0..len {
            seg.push(fresh(FamilyRole::Between { segment: s + 1, index: j + 1 }, &mut nodes));
        }
        between.push(seg);
    }
    for (s, seg) in between.iter().enumerate() {
        let mut prev = spine[s];
        for &u in seg {
            edges.push((prev, u));
            prev = u;
        }
        edges.push((prev, spine[s + 1]));
    }

    // Block 2: black hole attachments.
    let bh = fresh(FamilyRole::BlackHole, &mut nodes);
    let mut w_nodes: Vec<Option<NodeId>> = vec![None; delta - 1];
    let mut direct_count = 0usize;
    for (i, kind) in membership.iter().enumerate() {
        match kind {
            ExtKind::Direct => {
                edges.push((spine[i], bh));
                direct_count += 1;
            }
            ExtKind::ViaW => {
                let w = fresh(FamilyRole::W(i + 1), &mut nodes);
                edges.push((spine[i], w));
                edges.push((w, bh));
                for _ in 0..delta - 2 {
                    let leaf = fresh(FamilyRole::Leaf, &mut nodes);
                    edges.push((w, leaf));
                }
                w_nodes[i] = Some(w);
            }
        }
    }
    let _ = direct_count;
    // z pads 𝔟 itself to degree Δ with Δ−1 extra leaves of its own.
    let z = fresh(FamilyRole::Z, &mut nodes);
    edges.push((bh, z));
    for _ in 0..delta - 1 {
        let leaf = fresh(FamilyRole::Leaf, &mut nodes);
        edges.push((z, leaf));
    }

    // Block 3: height-2 trees T_v (child with Δ−1 leaves) pad all spine and
    // between nodes up to degree Δ.
    let mut degree_of = vec![0usize; nodes.len()];
    for &(a, b) in &edges {
        degree_of[a] += 1;
        degree_of[b] += 1;
    }
    let pad_targets: Vec<NodeId> = (0..nodes.len())
        .filter(|&v| {
            matches!(
                nodes[v],
                FamilyRole::Spine(_) | FamilyRole::Between { .. }
            )
        })
        .collect();
    for v in pad_targets {
        while degree_of[v] < delta {
            let inner = fresh(FamilyRole::TreeInner, &mut nodes);
            edges.push((v, inner));
            degree_of[v] += 1;
            degree_of.push(1);
            for _ in 0..delta - 1 {
                let leaf = fresh(FamilyRole::Leaf, &mut nodes);
                edges.push((inner, leaf));
                degree_of.push(1);
                degree_of[inner] += 1;
            }
        }
    }

    let g = ports_in_order(nodes.len(), &edges)?;
    let instance = Instance::new(g, k, spine[0], Some(bh))?;
    Ok(LowerBoundFamily { instance, roles: nodes, spine })
}

/// `G_Δ`: a center of degree Δ (the black hole), Δ ring nodes of degree 4,
/// and Δ pendant nodes. Home is the first ring node.
pub fn build_bh_lowerbound_graph(delta: usize, k: usize) -> Result<Instance, GraphError> {
    if delta < 4 {
        return Err(GraphError::BadEdgeList(format!("delta must be >= 4, got {delta}")));
    }
    let center = 0;
    let u = |i: usize| 1 + (i % delta);
    let w = |i: usize| 1 + delta + (i % delta);
    let mut edges = Vec::new();
    for i in 0..delta {
        edges.push((u(i), u(i + 1)));
    }
    for i in 0..delta {
        edges.push((center, u(i)));
        edges.push((u(i), w(i)));
    }
    let g = ports_in_order(1 + 2 * delta, &edges)?;
    Instance::new(g, k, u(0), Some(center))
}

/// AHU canonical form of a rooted tree, used to deduplicate trees up to
/// isomorphism.
fn ahu(adj: &[Vec<NodeId>], v: NodeId, parent: Option<NodeId>) -> String {
    let mut subs: Vec<String> = adj[v]
        .iter()
        .filter(|&&u| Some(u) != parent)
        .map(|&u| ahu(adj, u, Some(v)))
        .collect();
    subs.sort();
    format!("({})", subs.join(""))
}

fn tree_canonical(n: usize, edges: &[(NodeId, NodeId)]) -> String {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    // Canonical form rooted at the tree center(s).
    let centers = tree_centers(&adj);
    let mut forms: Vec<String> = centers.iter().map(|&c| ahu(&adj, c, None)).collect();
    forms.sort();
    forms.remove(0)
}

fn tree_centers(adj: &[Vec<NodeId>]) -> Vec<NodeId> {
    let n = adj.len();
    if n == 1 {
        return vec![0];
    }
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut leaves: Vec<NodeId> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut removed = leaves.len();
    let mut frontier = leaves.clone();
    while removed < n {
        let mut next = Vec::new();
        for &v in &frontier {
            for &u in &adj[v] {
                if degree[u] > 1 {
                    degree[u] -= 1;
                    if degree[u] == 1 {
                        next.push(u);
                        removed += 1;
                    }
                }
            }
            degree[v] = 0;
        }
        if next.is_empty() {
            break;
        }
        leaves = next.clone();
        frontier = next;
    }
    leaves.sort_unstable();
    leaves.dedup();
    leaves
}

/// All trees on `n` nodes up to isomorphism, as edge lists (Prüfer
/// enumeration deduplicated by AHU canonical form).
pub fn all_trees_up_to_iso(n: usize) -> Vec<Vec<(NodeId, NodeId)>> {
    assert!(n >= 2, "trees need at least 2 nodes");
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let mut seen = std::collections::BTreeMap::new();
    let mut seq = vec![0usize; n - 2];
    loop {
        let edges = tree_edges_from_pruefer(n, &seq).unwrap();
        let key = tree_canonical(n, &edges);
        seen.entry(key).or_insert(edges);
        // Increment the sequence as a base-n counter.
        let mut i = 0;
        loop {
            if i == seq.len() {
                let out: Vec<_> = seen.into_values().collect();
                return out;
            }
            seq[i] += 1;
            if seq[i] < n {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::decompose;

    #[test]
    fn path_degrees() {
        let inst = build_path(5, 0, None, 6).unwrap();
        let degs: Vec<_> = (0..5).map(|v| inst.graph.degree(v)).collect();
        assert_eq!(degs, vec![1, 2, 2, 2, 1]);
        // port 1 points toward higher index except at the right endpoint
        assert_eq!(inst.graph.step(1, 1), Some(2));
        assert_eq!(inst.graph.step(1, 2), Some(0));
        assert_eq!(inst.graph.step(4, 1), Some(3));
    }

    #[test]
    fn path_interior_home() {
        let inst = build_path(3, 1, None, 4).unwrap();
        assert_eq!(inst.graph.degree(0), 1);
        assert_eq!(inst.graph.degree(2), 1);
        assert_eq!(inst.home, 1);
    }

    #[test]
    fn theorem4_demo_instance() {
        let inst = build_path(9, 0, Some(4), 3).unwrap();
        assert_eq!(inst.graph.node_count(), 9);
        assert_eq!(inst.k, 3);
    }

    #[test]
    fn ring_is_ring() {
        let inst = build_ring(6, 0, Some(3), 4).unwrap();
        assert!(inst.graph.is_ring());
        let d = decompose(&inst);
        assert_eq!(d.components.len(), 1);
        assert_eq!(d.components[0].len(), 5);
    }

    #[test]
    fn star_tree() {
        let edges = vec![(0, 1), (0, 2), (0, 3), (0, 4)];
        let inst = build_tree(5, &edges, 0, Some(1), 6).unwrap();
        assert_eq!(inst.graph.max_degree(), 4);
        assert!(inst.graph.is_tree());
        let star_bbh_center = build_tree(5, &edges, 1, Some(0), 6).unwrap();
        let d = decompose(&star_bbh_center);
        assert_eq!(d.components.len(), 4);
        assert_eq!(d.home_component(), &[1]);
    }

    #[test]
    fn random_bounded_is_reproducible() {
        let a = build_random_bounded(10, 3, 7, 0, Some(5), 12).unwrap();
        let b = build_random_bounded(10, 3, 7, 0, Some(5), 12).unwrap();
        assert_eq!(a, b);
        assert!(a.graph.max_degree() <= 3);
        let c = build_random_bounded(10, 3, 8, 0, Some(5), 12).unwrap();
        assert!(a != c, "different seeds should give different graphs");
    }

    #[test]
    fn bh_lowerbound_counts() {
        // Counting oracle: 1 center + Δ ring + Δ pendant.
        for delta in [4usize, 5] {
            let inst = build_bh_lowerbound_graph(delta, delta + 2).unwrap();
            assert_eq!(inst.graph.node_count(), 1 + 2 * delta);
            assert_eq!(inst.graph.degree(0), delta);
            for i in 0..delta {
                assert_eq!(inst.graph.degree(1 + i), 4, "every u_i has degree 4");
                assert_eq!(inst.graph.degree(1 + delta + i), 1);
            }
            assert_eq!(inst.bbh, Some(0));
            assert_eq!(inst.home, 1);
        }
    }

    #[test]
    fn lowerbound_family_proof_sketch_figure() {
        // Δ=4, l = (2,2,1), v2 direct, v1 and v3 via w.
        let fam = build_lowerbound_family(
            4,
            &[2, 2, 1],
            &[ExtKind::ViaW, ExtKind::Direct, ExtKind::ViaW],
            6,
        )
        .unwrap();
        let g = &fam.instance.graph;
        assert_eq!(g.max_degree(), 4);
        let bh = fam.instance.bbh.unwrap();
        assert_eq!(g.degree(bh), 4);
        // Every spine node and every between-node has degree exactly Δ.
        for (v, role) in fam.roles.iter().enumerate() {
            if matches!(role, FamilyRole::Spine(_) | FamilyRole::Between { .. }) {
                assert_eq!(g.degree(v), 4, "node {v} ({role:?})");
            }
        }
        // dist(v_i, v_{i+1}) along the spine is l_i + 1.
        let dist = |a: NodeId, b: NodeId| -> usize {
            let mut q = std::collections::VecDeque::from([(a, 0)]);
            let mut seen = vec![false; g.node_count()];
            seen[a] = true;
            while let Some((v, d)) = q.pop_front() {
                if v == b {
                    return d;
                }
                for u in g.neighbors(v) {
                    if !seen[u] && u != bh {
                        seen[u] = true;
                        q.push_back((u, d + 1));
                    }
                }
            }
            unreachable!()
        };
        assert_eq!(dist(fam.spine[0], fam.spine[1]), 3);
        assert_eq!(dist(fam.spine[1], fam.spine[2]), 3);
        assert_eq!(dist(fam.spine[2], fam.spine[3]), 2);
        assert_eq!(fam.instance.home, fam.spine[0]);
    }

    #[test]
    fn lowerbound_family_all_direct_subclass() {
        let fam = build_lowerbound_family(
            4,
            &[1, 1, 1],
            &[ExtKind::Direct, ExtKind::Direct, ExtKind::Direct],
            6,
        )
        .unwrap();
        assert_eq!(fam.instance.graph.max_degree(), 4);
        let bh = fam.instance.bbh.unwrap();
        // 𝔟 degree: 3 direct spine links + z.
        assert_eq!(fam.instance.graph.degree(bh), 4);
    }

    #[test]
    fn tree_enumeration_counts() {
        // Known counts of unlabeled trees: n=2:1, 3:1, 4:2, 5:3, 6:6, 7:11.
        let expect = [(2, 1), (3, 1), (4, 2), (5, 3), (6, 6), (7, 11)];
        for (n, count) in expect {
            assert_eq!(all_trees_up_to_iso(n).len(), count, "n={n}");
        }
    }
}
