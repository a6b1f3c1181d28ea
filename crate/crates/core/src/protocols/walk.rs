//! Deterministic walk generators shared by the agent protocols.
//!
//! Agents navigate anonymously: a walk consumes only locally observable data
//! (degree, arrival port, whether the marker agent is present) and produces
//! the next port. Node identity inside a walk is a `Key` the walk assigns;
//! keys are consistent across agents because all agents feed the same
//! observation stream in the same order.
//!
//! Three generators:
//! * [`LineWalk`] — the right-hand rule walk used on paths and trees. From
//!   arrival port `q` at a node of degree `d`, continue through port
//!   `(q mod d) + 1`. On a tree this traces the Euler tour with ports in
//!   increasing order and the parent port last, bouncing at leaves and
//!   through the root, with period `2(n-1)`.
//! * [`RingWalk`] — keep moving in one direction around a ring of known size.
//! * [`MapWalk`] — breadth-first map construction in presence of a marked
//!   node, keeping for every discovered node the edge-labeled path back to
//!   the root, and distinguishing new nodes from revisits by replaying the
//!   stored paths with full port verification.

use crate::graph::Port;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Walk-local node identity. `Known` ids are map/tree node ids; `Limbo` ids
/// name nodes seen mid-excursion that are not yet identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Key {
    Known(u32),
    Limbo(u32),
}

pub const HOME_KEY: Key = Key::Known(0);

/// One locally observable arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Obs {
    pub degree: usize,
    pub arrival_port: Port,
    pub marked: bool,
}

/// Right-hand walk over a tree (or path), with structure reconstruction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LineWalk {
    /// Known incident edges: `(key, port) -> (key, port)`.
    edges: BTreeMap<(Key, Port), (Key, Port)>,
    degrees: BTreeMap<Key, usize>,
    /// Parent link of every non-root key (toward home), for side queries.
    parent: BTreeMap<Key, Key>,
    next_key: u32,
    /// Current tip of the walk and its arrival port.
    pos: Key,
    pos_in: Port,
    steps: u64,
}

impl LineWalk {
    pub fn new(home_degree: usize) -> Self {
        let mut degrees = BTreeMap::new();
        degrees.insert(HOME_KEY, home_degree);
        LineWalk {
            edges: BTreeMap::new(),
            degrees,
            parent: BTreeMap::new(),
            next_key: 1,
            pos: HOME_KEY,
            pos_in: 0,
            steps: 0,
        }
    }

    /// Port the walk takes next from its tip.
    pub fn planned(&self) -> Port {
        right_hand(self.pos_in, self.degrees[&self.pos])
    }

    /// Advance the tip through `planned()`, arriving with `obs`.
    /// Returns the key of the node arrived at.
    pub fn advance(&mut self, obs: Obs) -> Key {
        let port = self.planned();
        let key = self.note_edge(self.pos, port, obs);
        self.pos = key;
        self.pos_in = obs.arrival_port;
        self.steps += 1;
        key
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// Record a traversal `from --port--> (new node with obs)`, reusing the
    /// known endpoint when the directed edge was walked before. Used both by
    /// the walk itself and by post-detection sweepers exploring fresh ground.
    pub fn note_edge(&mut self, from: Key, port: Port, obs: Obs) -> Key {
        if let Some(&(k, p)) = self.edges.get(&(from, port)) {
            debug_assert_eq!(p, obs.arrival_port);
            return k;
        }
        let key = Key::Known(self.next_key);
        self.next_key += 1;
        self.degrees.insert(key, obs.degree);
        self.parent.insert(key, from);
        self.edges.insert((from, port), (key, obs.arrival_port));
        self.edges.insert((key, obs.arrival_port), (from, port));
        key
    }

    pub fn edge(&self, from: Key, port: Port) -> Option<(Key, Port)> {
        self.edges.get(&(from, port)).copied()
    }

    pub fn degree(&self, key: Key) -> Option<usize> {
        self.degrees.get(&key).copied()
    }

    /// True if `key`'s path to home passes through `via` (i.e. `key` is
    /// separated from home by `via`).
    pub fn separated_by(&self, key: Key, via: Key) -> bool {
        if key == via {
            return false;
        }
        let mut cur = key;
        while let Some(&p) = self.parent.get(&cur) {
            if p == via {
                return true;
            }
            cur = p;
        }
        false
    }

    fn absorb(&mut self, other: &Self) {
        if other.steps > self.steps {
            *self = other.clone();
        }
    }
}

/// `(q mod d) + 1`, the right-hand rule.
pub fn right_hand(arrival: Port, degree: usize) -> Port {
    (arrival % degree) + 1
}

/// Directed walk around a ring of known size `n`; keys are positions mod n.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RingWalk {
    n: usize,
    pos: usize,
    pos_in: Port,
    steps: u64,
    /// Forward port (toward position+1) of each visited position.
    forward: BTreeMap<usize, Port>,
}

impl RingWalk {
    pub fn new(n: usize, home_degree: usize) -> Result<Self, String> {
        if home_degree != 2 {
            return Err("ring walk requires degree 2 everywhere".into());
        }
        let mut forward = BTreeMap::new();
        forward.insert(0, 1);
        Ok(RingWalk { n, pos: 0, pos_in: 0, steps: 0, forward })
    }

    pub fn planned(&self) -> Port {
        if self.steps == 0 {
            1
        } else {
            right_hand(self.pos_in, 2)
        }
    }

    pub fn advance(&mut self, obs: Obs) -> Key {
        if obs.degree != 2 {
            // not a ring; runner validates, so this is unreachable in practice
            debug_assert!(false, "ring walk on non-ring node");
        }
        self.pos = (self.pos + 1) % self.n;
        self.pos_in = obs.arrival_port;
        self.steps += 1;
        self.forward.insert(self.pos, right_hand(obs.arrival_port, 2));
        Key::Known(self.pos as u32)
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn absorb(&mut self, other: &Self) {
        if other.steps > self.steps {
            *self = other.clone();
        }
    }
}

/// Map node port classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortKind {
    Unknown,
    Tree(u32),
    Cross(u32),
    ToParent,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MapNode {
    pub degree: usize,
    /// `(parent id, port at parent, port here toward parent)`.
    pub parent: Option<(u32, Port, Port)>,
    pub ports: Vec<PortKind>,
}

/// The Root_Paths data structure: a BFS tree over discovered nodes, with the
/// edge-labeled path from home stored implicitly in the parent links.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RootPaths {
    pub nodes: Vec<MapNode>,
}

impl RootPaths {
    pub fn new(home_degree: usize) -> Self {
        RootPaths {
            nodes: vec![MapNode {
                degree: home_degree,
                parent: None,
                ports: vec![PortKind::Unknown; home_degree],
            }],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: u32) -> &MapNode {
        &self.nodes[id as usize]
    }

    /// Root path of node `x` as `(out_port, in_port)` pairs from home.
    pub fn root_path(&self, x: u32) -> Vec<(Port, Port)> {
        let mut rev = Vec::new();
        let mut cur = x;
        while let Some((p, out, inp)) = self.nodes[cur as usize].parent {
            rev.push((out, inp));
            cur = p;
        }
        rev.reverse();
        rev
    }

    /// Tree node at depth `depth` on the root path of `x` (depth 0 = home).
    pub fn path_node(&self, x: u32, depth: usize) -> u32 {
        let mut chain = vec![x];
        let mut cur = x;
        while let Some((p, _, _)) = self.nodes[cur as usize].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain[depth]
    }

    /// First unexplored `(node, port)` in discovery order, if any.
    pub fn find_probe(&self) -> Option<(u32, Port)> {
        for (id, n) in self.nodes.iter().enumerate() {
            for (i, kind) in n.ports.iter().enumerate() {
                if matches!(kind, PortKind::Unknown) {
                    return Some((id as u32, i + 1));
                }
            }
        }
        None
    }

    pub fn is_complete(&self) -> bool {
        self.find_probe().is_none()
    }

    /// Tree route between two known nodes, as a port list (via the lowest
    /// common ancestor).
    pub fn route(&self, from: u32, to: u32) -> Vec<Port> {
        if from == to {
            return Vec::new();
        }
        let chain = |mut v: u32| {
            let mut c = vec![v];
            while let Some((p, _, _)) = self.nodes[v as usize].parent {
                c.push(p);
                v = p;
            }
            c
        };
        let ca = chain(from);
        let cb = chain(to);
        let mut i = ca.len();
        let mut j = cb.len();
        while i > 0 && j > 0 && ca[i - 1] == cb[j - 1] {
            i -= 1;
            j -= 1;
        }
        let mut hops = Vec::new();
        for v in &ca[..i] {
            let (_, _, up) = self.nodes[*v as usize].parent.unwrap();
            hops.push(up);
        }
        for v in cb[..j].iter().rev() {
            let (_, down, _) = self.nodes[*v as usize].parent.unwrap();
            hops.push(down);
        }
        hops
    }

    pub fn block(&mut self, node: u32, port: Port) {
        let slot = &mut self.nodes[node as usize].ports[port - 1];
        if matches!(slot, PortKind::Unknown | PortKind::Blocked) {
            *slot = PortKind::Blocked;
        }
    }

    pub fn blocked_ports(&self) -> Vec<(u32, Port)> {
        let mut out = Vec::new();
        for (id, n) in self.nodes.iter().enumerate() {
            for (i, kind) in n.ports.iter().enumerate() {
                if matches!(kind, PortKind::Blocked) {
                    out.push((id as u32, i + 1));
                }
            }
        }
        out
    }

    /// Adds a freshly discovered node under `(u, port)`, entered via
    /// `arrival_port`, and returns its id.
    pub fn add_node(&mut self, u: u32, port: Port, degree: usize, arrival_port: Port) -> u32 {
        let id = self.nodes.len() as u32;
        let mut ports = vec![PortKind::Unknown; degree];
        ports[arrival_port - 1] = PortKind::ToParent;
        self.nodes.push(MapNode { degree, parent: Some((u, port, arrival_port)), ports });
        self.nodes[u as usize].ports[port - 1] = PortKind::Tree(id);
        id
    }

    /// Records the cross edge `(u, port) -- (x, arrival_port)`.
    pub fn add_cross(&mut self, u: u32, port: Port, x: u32, arrival_port: Port) {
        self.nodes[u as usize].ports[port - 1] = PortKind::Cross(x);
        if matches!(self.nodes[x as usize].ports[arrival_port - 1], PortKind::Unknown) {
            self.nodes[x as usize].ports[arrival_port - 1] = PortKind::Cross(u);
        }
    }
}

/// What the map walker is currently doing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Job {
    /// Walking a known tree route; then probe `(u, port)` or sweep.
    Route { hops: Vec<Port>, hop: usize, probe: Option<(u32, Port)> },
    /// Traversing the unknown port `(u, port)` right now.
    Probe { u: u32, port: Port },
    /// At / around an unidentified candidate reached via `(u, port)`.
    Candidate(CandidateJob),
    /// Map finished; perpetually cycling the discovered nodes.
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CandidateJob {
    u: u32,
    port: Port,
    limbo: u32,
    degree: usize,
    arrival_port: Port,
    /// Next tree node id to test by replay.
    tried: u32,
    sub: CandSub,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum CandSub {
    /// Walking the reversed root path of candidate `x`; `pos` = index of the
    /// path element whose inbound port we exit through next (m..=1);
    /// `trail` = arrival ports observed on the way out (for backtracking);
    /// `visited` = keys assigned to the nodes stepped on, resolved to the
    /// path nodes only if the whole replay verifies.
    Replay { x: u32, pos: usize, trail: Vec<Port>, visited: Vec<Key> },
    /// Replay failed; walking back to the candidate along `trail`.
    Back { trail: Vec<Port> },
}

/// Breadth-first map construction with root paths and port-verified replays.
///
/// Drive it with `planned()` / `advance(obs)` exactly like the other walks.
/// The caller is responsible for feeding truthful observations; `marked`
/// must be set iff the marker agent is present at the arrival node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MapWalk {
    map: RootPaths,
    job: Job,
    /// Where the walker is: `Known` node or limbo (mid-candidate).
    at: Key,
    at_in: Port,
    planned: Port,
    next_limbo: u32,
    resolved: BTreeMap<u32, u32>,
    /// Every directed traversal seen: `(key, port) -> (key, port)`.
    edges: BTreeMap<(Key, Port), (Key, Port)>,
    limbo_degrees: BTreeMap<u32, usize>,
    sweep_next: u32,
    steps: u64,
}

impl MapWalk {
    pub fn new(home_degree: usize) -> Self {
        Self::from_map(RootPaths::new(home_degree), 0)
    }

    /// Resumes map construction from an existing map, standing at `at`.
    /// The directed-edge table is rebuilt from the map's classified ports.
    pub fn from_map(map: RootPaths, at: u32) -> Self {
        let mut edges = BTreeMap::new();
        for (id, n) in map.nodes.iter().enumerate() {
            let from = Key::Known(id as u32);
            for (i, kind) in n.ports.iter().enumerate() {
                let p = i + 1;
                match kind {
                    PortKind::Tree(c) => {
                        let (_, _, child_in) = map.nodes[*c as usize].parent.unwrap();
                        edges.insert((from, p), (Key::Known(*c), child_in));
                    }
                    PortKind::ToParent => {
                        let (pid, pport, _) = n.parent.unwrap();
                        edges.insert((from, p), (Key::Known(pid), pport));
                    }
                    PortKind::Cross(x) => {
                        if let Some(q) = map.nodes[*x as usize]
                            .ports
                            .iter()
                            .position(|k| matches!(k, PortKind::Cross(y) if *y as usize == id))
                        {
                            edges.insert((from, p), (Key::Known(*x), q + 1));
                        }
                    }
                    _ => {}
                }
            }
        }
        let mut w = MapWalk {
            map,
            job: Job::Sweep, // replaced by plan_next
            at: Key::Known(at),
            at_in: 0,
            planned: 0,
            next_limbo: 0,
            resolved: BTreeMap::new(),
            edges,
            limbo_degrees: BTreeMap::new(),
            sweep_next: 0,
            steps: 0,
        };
        w.plan_next();
        w
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn node_count(&self) -> usize {
        self.map.node_count()
    }

    pub fn node(&self, id: u32) -> &MapNode {
        self.map.node(id)
    }

    pub fn map(&self) -> &RootPaths {
        &self.map
    }

    pub fn is_complete(&self) -> bool {
        self.map.is_complete()
    }

    pub fn position(&self) -> Key {
        self.at
    }

    pub fn canon(&self, key: Key) -> Key {
        match key {
            Key::Limbo(l) => match self.resolved.get(&l) {
                Some(&k) => Key::Known(k),
                None => key,
            },
            k => k,
        }
    }

    pub fn degree(&self, key: Key) -> Option<usize> {
        match self.canon(key) {
            Key::Known(k) => self.map.nodes.get(k as usize).map(|n| n.degree),
            Key::Limbo(l) => self.limbo_degrees.get(&l).copied(),
        }
    }

    pub fn edge(&self, from: Key, port: Port) -> Option<(Key, Port)> {
        self.edges
            .get(&(self.canon(from), port))
            .map(|&(k, p)| (self.canon(k), p))
    }

    /// Marks `(node, port)` as leading to the black hole. The walk never
    /// takes a blocked port again.
    pub fn block(&mut self, node: Key, port: Port) {
        if let Key::Known(id) = self.canon(node) {
            self.map.block(id, port);
            // Re-plan if the current job was heading through that port.
            if self.job_targets(node, port) {
                self.job = Job::Sweep;
                self.plan_next();
            }
        }
    }

    fn job_targets(&self, node: Key, port: Port) -> bool {
        match &self.job {
            Job::Route { probe: Some((u, p)), .. } | Job::Probe { u, port: p } => {
                Key::Known(*u) == self.canon(node) && *p == port
            }
            _ => false,
        }
    }

    pub fn blocked_ports(&self) -> Vec<(u32, Port)> {
        self.map.blocked_ports()
    }

    pub fn planned(&self) -> Port {
        self.planned
    }

    /// Root path of node `x` as `(out_port, in_port)` pairs from home.
    pub fn root_path(&self, x: u32) -> Vec<(Port, Port)> {
        self.map.root_path(x)
    }

    fn find_probe(&self) -> Option<(u32, Port)> {
        self.map.find_probe()
    }

    pub fn route(&self, from: u32, to: u32) -> Vec<Port> {
        self.map.route(from, to)
    }

    fn plan_next(&mut self) {
        loop {
            match self.job.clone() {
                Job::Route { hops, hop, probe } => {
                    if hop < hops.len() {
                        self.planned = hops[hop];
                        return;
                    }
                    match probe {
                        Some((u, port)) => {
                            debug_assert_eq!(self.at, Key::Known(u));
                            self.job = Job::Probe { u, port };
                        }
                        None => self.job = Job::Sweep,
                    }
                }
                Job::Probe { port, .. } => {
                    self.planned = port;
                    return;
                }
                Job::Candidate(mut c) => match c.sub.clone() {
                    CandSub::Replay { pos, trail, x, .. } => {
                        let path = self.root_path(x);
                        debug_assert!(pos >= 1);
                        let exit = path[pos - 1].1;
                        let here_degree = self.degree(self.at).unwrap();
                        if exit > here_degree {
                            // cannot even exit: mismatch without moving
                            c.sub = CandSub::Back { trail };
                            self.job = Job::Candidate(c);
                            continue;
                        }
                        self.planned = exit;
                        self.job = Job::Candidate(c);
                        return;
                    }
                    CandSub::Back { trail } => {
                        if let Some(&back) = trail.last() {
                            self.planned = back;
                            self.job = Job::Candidate(c);
                            return;
                        }
                        // Back at the candidate: try the next tree node.
                        c.tried += 1;
                        if let Some(next) = self.next_replay_target(&c) {
                            c.tried = next;
                            c.sub = CandSub::Replay {
                                x: next,
                                pos: self.root_path(next).len(),
                                trail: Vec::new(),
                                visited: Vec::new(),
                            };
                            self.job = Job::Candidate(c);
                            continue;
                        }
                        // No tree node matches: genuinely new.
                        self.adopt_new_node(&c);
                        self.job = Job::Sweep;
                    }
                },
                Job::Sweep => {
                    let at = match self.at {
                        Key::Known(k) => k,
                        Key::Limbo(_) => unreachable!("sweep from limbo"),
                    };
                    if let Some((u, port)) = self.find_probe() {
                        let hops = self.route(at, u);
                        self.job = Job::Route { hops, hop: 0, probe: Some((u, port)) };
                        continue;
                    }
                    // Complete: cycle the known nodes.
                    let n = self.map.nodes.len() as u32;
                    let mut target = self.sweep_next % n;
                    if target == at {
                        target = (target + 1) % n;
                    }
                    self.sweep_next = (target + 1) % n;
                    if target == at {
                        // single-node map: bounce through port 1
                        self.planned = 1;
                        self.job = Job::Route { hops: vec![], hop: 0, probe: None };
                        return;
                    }
                    let hops = self.route(at, target);
                    self.job = Job::Route { hops, hop: 0, probe: None };
                }
            }
        }
    }

    fn next_replay_target(&self, c: &CandidateJob) -> Option<u32> {
        let mut x = c.tried;
        while (x as usize) < self.map.nodes.len() {
            // Home (x = 0) is tested directly by the marked flag on arrival.
            if x >= 1 && self.map.nodes[x as usize].degree == c.degree {
                return Some(x);
            }
            x += 1;
        }
        None
    }

    fn adopt_new_node(&mut self, c: &CandidateJob) {
        let id = self.map.add_node(c.u, c.port, c.degree, c.arrival_port);
        self.resolve_limbo(c.limbo, id);
        self.at = Key::Known(id);
    }

    fn resolve_limbo(&mut self, limbo: u32, id: u32) {
        self.resolved.insert(limbo, id);
        self.limbo_degrees.remove(&limbo);
        let edges = std::mem::take(&mut self.edges);
        self.edges = edges
            .into_iter()
            .map(|((k, p), (k2, p2))| ((self.canon(k), p), (self.canon(k2), p2)))
            .collect();
    }

    fn fresh_limbo(&mut self, degree: usize) -> u32 {
        let l = self.next_limbo;
        self.next_limbo += 1;
        self.limbo_degrees.insert(l, degree);
        l
    }

    /// Advance through `planned()`, arriving with `obs`.
    pub fn advance(&mut self, obs: Obs) -> Key {
        let from = self.at;
        let port = self.planned;
        self.steps += 1;
        let known_dest = self.edges.get(&(self.canon(from), port)).copied();
        match self.job.clone() {
            Job::Route { hops, hop, probe } => {
                let (k, _) = known_dest.expect("route over known edges");
                self.at = k;
                self.at_in = obs.arrival_port;
                self.job = Job::Route { hops, hop: hop + 1, probe };
            }
            Job::Probe { u, port } => {
                if obs.marked {
                    // The marked node is home: cross edge (u,port)--(0,arrival).
                    debug_assert_eq!(obs.degree, self.map.nodes[0].degree);
                    self.map.add_cross(u, port, 0, obs.arrival_port);
                    self.at = HOME_KEY;
                    self.at_in = obs.arrival_port;
                    self.job = Job::Sweep;
                } else {
                    let limbo = match known_dest {
                        Some((Key::Limbo(l), _)) => l,
                        _ => self.fresh_limbo(obs.degree),
                    };
                    self.at = Key::Limbo(limbo);
                    self.at_in = obs.arrival_port;
                    let mut c = CandidateJob {
                        u,
                        port,
                        limbo,
                        degree: obs.degree,
                        arrival_port: obs.arrival_port,
                        tried: 0,
                        sub: CandSub::Back { trail: Vec::new() },
                    };
                    match self.next_replay_target(&c) {
                        Some(first) => {
                            c.tried = first;
                            c.sub = CandSub::Replay {
                                x: first,
                                pos: self.root_path(first).len(),
                                trail: Vec::new(),
                                visited: Vec::new(),
                            };
                            self.job = Job::Candidate(c);
                        }
                        None => {
                            self.adopt_new_node(&c);
                            self.job = Job::Sweep;
                        }
                    }
                }
            }
            Job::Candidate(mut c) => match c.sub.clone() {
                CandSub::Replay { x, mut pos, mut trail, mut visited } => {
                    let path = self.root_path(x);
                    let expect_out = path[pos - 1].0;
                    // The tree node this arrival claims to be; identity is
                    // only established once the whole chain verifies.
                    let claimed: u32 = if pos == 1 { 0 } else { self.map.path_node(x, pos - 1) };
                    let claimed_degree = self.map.nodes[claimed as usize].degree;
                    let expect_marked = claimed == 0;
                    let matches = obs.arrival_port == expect_out
                        && obs.degree == claimed_degree
                        && obs.marked == expect_marked;
                    let here = match known_dest {
                        Some((k, _)) => k,
                        None => Key::Limbo(self.fresh_limbo(obs.degree)),
                    };
                    if matches && pos == 1 {
                        // Success: by port bijectivity the whole chain is the
                        // root path of x, so the candidate is x.
                        self.map.add_cross(c.u, c.port, x, c.arrival_port);
                        self.resolve_limbo(c.limbo, x);
                        for (i, k) in visited.iter().enumerate() {
                            if let Key::Limbo(l) = self.canon(*k) {
                                let depth = path.len() - 1 - i;
                                let id = self.map.path_node(x, depth);
                                self.resolve_limbo(l, id);
                            }
                        }
                        self.at = HOME_KEY;
                        self.at_in = obs.arrival_port;
                        self.job = Job::Sweep;
                    } else if matches {
                        trail.push(obs.arrival_port);
                        visited.push(here);
                        pos -= 1;
                        self.at = here;
                        self.at_in = obs.arrival_port;
                        c.sub = CandSub::Replay { x, pos, trail, visited };
                        self.job = Job::Candidate(c);
                    } else {
                        // Mismatch: remember the way back and turn around.
                        trail.push(obs.arrival_port);
                        self.at = here;
                        self.at_in = obs.arrival_port;
                        c.sub = CandSub::Back { trail };
                        self.job = Job::Candidate(c);
                    }
                }
                CandSub::Back { mut trail } => {
                    trail.pop();
                    self.at = if trail.is_empty() {
                        Key::Limbo(c.limbo)
                    } else {
                        match known_dest {
                            Some((k, _)) => k,
                            None => Key::Limbo(self.fresh_limbo(obs.degree)),
                        }
                    };
                    self.at_in = obs.arrival_port;
                    c.sub = CandSub::Back { trail };
                    self.job = Job::Candidate(c);
                }
            },
            Job::Sweep => unreachable!("sweep is always replaced during planning"),
        }
        self.record_edge(from, port, self.at, obs.arrival_port);
        self.plan_next();
        self.at
    }

    fn record_edge(&mut self, from: Key, port: Port, to: Key, to_port: Port) {
        let from = self.canon(from);
        let to = self.canon(to);
        self.edges.insert((from, port), (to, to_port));
        self.edges.insert((to, to_port), (from, port));
    }

    fn absorb(&mut self, other: &Self) {
        if other.steps > self.steps {
            *self = other.clone();
        }
    }
}

/// Dispatching wrapper so protocol code is generic over the walk family.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum WalkMachine {
    Line(LineWalk),
    Ring(RingWalk),
    Map(MapWalk),
}

impl WalkMachine {
    pub fn planned(&self) -> Port {
        match self {
            WalkMachine::Line(w) => w.planned(),
            WalkMachine::Ring(w) => w.planned(),
            WalkMachine::Map(w) => w.planned(),
        }
    }

    pub fn advance(&mut self, obs: Obs) -> Key {
        match self {
            WalkMachine::Line(w) => w.advance(obs),
            WalkMachine::Ring(w) => w.advance(obs),
            WalkMachine::Map(w) => w.advance(obs),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        match self {
            WalkMachine::Line(w) => w.steps_taken(),
            WalkMachine::Ring(w) => w.steps_taken(),
            WalkMachine::Map(w) => w.steps_taken(),
        }
    }

    pub fn canon(&self, key: Key) -> Key {
        match self {
            WalkMachine::Map(w) => w.canon(key),
            _ => key,
        }
    }

    pub fn absorb(&mut self, other: &Self) {
        match (self, other) {
            (WalkMachine::Line(a), WalkMachine::Line(b)) => a.absorb(b),
            (WalkMachine::Ring(a), WalkMachine::Ring(b)) => a.absorb(b),
            (WalkMachine::Map(a), WalkMachine::Map(b)) => a.absorb(b),
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Instance, NodeId};

    /// Drives a walk over a real graph, producing the visited node sequence.
    pub fn drive<F>(instance: &Instance, mut planned: F, steps: usize) -> Vec<NodeId>
    where
        F: FnMut(&mut Vec<NodeId>, NodeId) -> Port,
    {
        let mut seq = vec![instance.home];
        let mut cur = instance.home;
        for _ in 0..steps {
            let p = planned(&mut seq, cur);
            cur = instance.graph.step(cur, p).unwrap();
            seq.push(cur);
        }
        seq
    }

    #[test]
    fn line_walk_covers_path_and_bounces() {
        let inst = crate::generators::build_path(4, 0, None, 1).unwrap();
        let mut w = LineWalk::new(inst.graph.degree(0));
        let mut cur = 0;
        let mut seen = vec![0];
        for _ in 0..6 {
            let p = w.planned();
            let arc = inst.graph.arc(cur, p).unwrap();
            cur = arc.neighbor;
            w.advance(Obs { degree: inst.graph.degree(cur), arrival_port: arc.reverse_port, marked: false });
            seen.push(cur);
        }
        assert_eq!(seen, vec![0, 1, 2, 3, 2, 1, 0], "period 2(n-1) bounce walk");
    }

    #[test]
    fn line_walk_euler_tour_on_star() {
        let inst = crate::generators::build_tree(4, &[(0, 1), (0, 2), (0, 3)], 0, None, 1).unwrap();
        let mut w = LineWalk::new(3);
        let mut cur = 0;
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..6 {
            let p = w.planned();
            let arc = inst.graph.arc(cur, p).unwrap();
            cur = arc.neighbor;
            w.advance(Obs { degree: inst.graph.degree(cur), arrival_port: arc.reverse_port, marked: false });
            seen.insert(cur);
        }
        assert_eq!(cur, 0, "tour returns home after 2(n-1) steps");
        assert_eq!(seen.len(), 4, "all nodes visited");
    }

    #[test]
    fn line_walk_interior_home_sweeps_port1_side_first() {
        let inst = crate::generators::build_path(5, 2, None, 1).unwrap();
        let mut w = LineWalk::new(2);
        let mut cur = 2;
        let mut seen = vec![2];
        for _ in 0..8 {
            let p = w.planned();
            let arc = inst.graph.arc(cur, p).unwrap();
            cur = arc.neighbor;
            w.advance(Obs { degree: inst.graph.degree(cur), arrival_port: arc.reverse_port, marked: false });
            seen.push(cur);
        }
        // port 1 of node 2 points toward node 3 (higher side) first
        assert_eq!(seen, vec![2, 3, 4, 3, 2, 1, 0, 1, 2]);
    }

    #[test]
    fn ring_walk_goes_one_direction() {
        let inst = crate::generators::build_ring(5, 0, None, 1).unwrap();
        let mut w = RingWalk::new(5, 2).unwrap();
        let mut cur = 0;
        let mut seen = vec![0];
        for _ in 0..7 {
            let p = w.planned();
            let arc = inst.graph.arc(cur, p).unwrap();
            cur = arc.neighbor;
            let k = w.advance(Obs { degree: 2, arrival_port: arc.reverse_port, marked: false });
            assert_eq!(k, Key::Known((cur % 5) as u32) , "keys are positions mod n");
            seen.push(cur);
        }
        assert_eq!(seen, vec![0, 1, 2, 3, 4, 0, 1, 2]);
    }

    fn run_map_walk(inst: &Instance, max_steps: usize) -> (MapWalk, Vec<NodeId>) {
        let mut w = MapWalk::new(inst.graph.degree(inst.home));
        let mut cur = inst.home;
        let mut visited = vec![cur];
        for _ in 0..max_steps {
            if w.is_complete() {
                break;
            }
            let p = w.planned();
            let arc = inst.graph.arc(cur, p).unwrap();
            cur = arc.neighbor;
            w.advance(Obs {
                degree: inst.graph.degree(cur),
                arrival_port: arc.reverse_port,
                marked: cur == inst.home,
            });
            visited.push(cur);
        }
        (w, visited)
    }

    #[test]
    fn map_walk_triangle_finds_cross_edge() {
        // Triangle: third vertex recognized as discovered via replay to the
        // marked node; exactly one cross edge.
        let g = crate::graph::PortLabeledGraph::from_edges(
            3,
            &[(0, 1, 1, 1), (0, 2, 2, 1), (1, 2, 2, 2)],
        )
        .unwrap();
        let inst = Instance::new(g, 1, 0, None).unwrap();
        let (w, _) = run_map_walk(&inst, 500);
        assert!(w.is_complete());
        assert_eq!(w.node_count(), 3);
        let crosses: usize = (0..w.node_count() as u32)
            .map(|id| {
                w.node(id)
                    .ports
                    .iter()
                    .filter(|k| matches!(k, PortKind::Cross(_)))
                    .count()
            })
            .sum();
        assert_eq!(crosses, 2, "one undirected cross edge, seen from both ends");
    }

    #[test]
    fn map_walk_path_has_zero_cross_edges() {
        let inst = crate::generators::build_path(6, 0, None, 1).unwrap();
        let (w, _) = run_map_walk(&inst, 2000);
        assert!(w.is_complete());
        assert_eq!(w.node_count(), 6);
        for id in 0..w.node_count() as u32 {
            assert!(w.node(id).ports.iter().all(|k| !matches!(k, PortKind::Cross(_))));
        }
    }

    #[test]
    fn map_walk_is_correct_and_fast_on_random_bounded_graphs() {
        for seed in 0..20u64 {
            let n = 4 + (seed as usize % 7);
            let inst = crate::generators::build_random_bounded(n, 3, seed, 0, None, 1).unwrap();
            let (w, _) = run_map_walk(&inst, 200_000);
            assert!(w.is_complete(), "seed {seed}");
            // Map correctness: same node count and degree multiset, and every
            // mapped edge exists in the true graph.
            assert_eq!(w.node_count(), n, "seed {seed}");
            let bound = 5 * n.pow(3) * 3;
            assert!(
                (w.steps_taken() as usize) <= bound,
                "seed {seed}: {} steps > {bound}",
                w.steps_taken()
            );
            // Verify isomorphism by replaying tree paths on the real graph.
            for id in 1..w.node_count() as u32 {
                let mut cur = inst.home;
                for (out, _) in w.root_path(id) {
                    cur = inst.graph.step(cur, out).unwrap();
                }
                let deg = inst.graph.degree(cur);
                assert_eq!(deg, w.node(id).degree, "seed {seed} node {id}");
            }
        }
    }

    #[test]
    fn map_walk_sweep_revisits_every_node() {
        let inst = crate::generators::build_random_bounded(7, 3, 3, 0, None, 1).unwrap();
        let (mut w, _) = run_map_walk(&inst, 100_000);
        assert!(w.is_complete());
        // Drive 200 more steps; every node must be revisited.
        let mut cur = {
            // find where the walker currently is by replaying its position
            // (walker finished at some known node; reconstruct via root path)
            match w.position() {
                Key::Known(id) => {
                    let mut c = inst.home;
                    for (out, _) in w.root_path(id) {
                        c = inst.graph.step(c, out).unwrap();
                    }
                    c
                }
                Key::Limbo(_) => unreachable!(),
            }
        };
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..200 {
            let p = w.planned();
            let arc = inst.graph.arc(cur, p).unwrap();
            cur = arc.neighbor;
            w.advance(Obs {
                degree: inst.graph.degree(cur),
                arrival_port: arc.reverse_port,
                marked: cur == inst.home,
            });
            seen.insert(cur);
        }
        assert_eq!(seen.len(), 7, "sweep cycles the whole graph");
    }
}
