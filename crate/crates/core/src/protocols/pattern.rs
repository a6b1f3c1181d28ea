//! The four-agent pattern protocols for paths, trees, rings and the small
//! group of the general-graph algorithm.
//!
//! Four agents hold the roles F, I2, I1, L and translate a two-node
//! formation one edge per five rounds along a deterministic walk, doubling
//! the explored prefix each phase. All movement is round arithmetic, so each
//! agent can reconstruct the entire benign schedule. When an expected
//! meeting fails, the observer intersects the possible destruction points of
//! every missing agent with everything it knows to be alive; with the full
//! agent complement this pins the black hole exactly, and in deliberately
//! under-provisioned runs it degrades to a conservative sweep.
//!
//! Phase `i`: 2 rounds of Make_Pattern, `2^i - 1` outbound translations, a
//! role flip, `2^i - 1` inbound translations, and one collapse round that
//! brings the rear pair home — `10·2^i - 7` rounds, each half within the
//! `5·2^i + 2` budget.

use crate::engine::{AgentId, Round, RoundInput};
use crate::graph::Port;
use crate::protocols::walk::{right_hand, Key, LineWalk, MapWalk, Obs, RingWalk, WalkMachine};
use crate::protocols::{AgentMemory, BbhClaim, ClaimRecord};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// 6-agent PerpExploration-BBH-Home: four pattern agents plus F1/F2.
    Home,
    /// 4-agent PerpExploration-BBH: survivors sweep their own component.
    Any,
    /// Ring adaptation: translate in one direction forever, size known.
    Ring,
    /// Small group of the general-graph algorithm: pattern over the
    /// map-construction walk; knowers settle as anchors.
    GraphSg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    F,
    I2,
    I1,
    L,
    F1,
    F2,
    Sitter,
}

/// Node reference in plans and inference: a key the walk has materialized,
/// or a not-yet-visited walk position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PNode {
    Seen(Key),
    Ahead(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternCfg {
    pub variant: Variant,
    /// Agents following the pattern schedule (pattern agents, waiters,
    /// sitters), sorted by id. For `GraphSg`, exactly the four SG ids.
    pub members: Vec<AgentId>,
    /// Number of pattern agents: 4, or 3 in the downgraded variant.
    pub sg: usize,
    pub ring_n: Option<usize>,
    pub marker_id: Option<AgentId>,
}

impl PatternCfg {
    fn rank_of(&self, id: AgentId) -> Option<usize> {
        self.members.iter().position(|&x| x == id)
    }

    pub fn base_role(&self, rank: usize) -> Role {
        let waiter0 = self.sg;
        match rank {
            0 => Role::F,
            1 => Role::I2,
            2 => {
                if self.sg == 3 {
                    Role::L
                } else {
                    Role::I1
                }
            }
            3 if self.sg == 4 => Role::L,
            r if r == waiter0 => Role::F1,
            r if r == waiter0 + 1 => Role::F2,
            _ => Role::Sitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StepRec {
    pub key: Key,
    pub in_port: Port,
    pub out_port: Port,
    pub degree: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Stage {
    Make { r: u8 },
    Sub { a: u64, b: u64, c: u64, r: u8, flipped: bool },
    Collapse,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Knowledge {
    pub node: PNode,
    /// Known edges into the black hole: `(from key, port at from)`.
    pub edges: Vec<(Key, Port)>,
    /// Round at which the waiters start their cautious walk (the first
    /// phase boundary the broken pattern misses). Fixed at detection.
    pub launch: Round,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CwState {
    /// Current window exponent (starts at the failed phase's index).
    exp: u32,
    /// 1-based position within the window; maps to walk index `pos`
    /// outbound and `2^(exp+1) - pos` on the retrace.
    pos: u64,
    /// 0 = F1 probes, 1 = F1 returns, 2 = both advance.
    cyc: u8,
    /// Walk index the pair currently rests at.
    at_idx: u64,
}

impl CwState {
    fn target_idx(&self) -> u64 {
        let half = 1u64 << self.exp;
        if self.pos <= half {
            self.pos
        } else {
            2 * half - self.pos
        }
    }

    fn step_done(&mut self) {
        self.at_idx = self.target_idx();
        self.pos += 1;
        if self.pos > 2 * (1u64 << self.exp) {
            self.exp += 1;
            self.pos = 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Mode {
    Pattern,
    /// Knows the black hole but keeps executing the benign schedule to the
    /// end of the current sub-phase so co-located partners hear about it
    /// (moves into the black hole are cancelled; `deviated` marks that).
    Informed { at_idx: u64, deviated: bool },
    /// Detected the black hole while standing on it; stepping back to the
    /// walk node we came from.
    Retreat { to_idx: u64 },
    /// Far-side knower walking back along the walk to the node adjacent to
    /// the black hole.
    FarGo { at_idx: u64, target_idx: u64 },
    /// Right-hand sweep of the current component, never taking an avoided
    /// port. `last_move` is the port taken last round (for key tracking).
    Sweep { avoid: BTreeSet<(Key, Port)>, at: Key, last_move: Option<Port> },
    /// Ring sweep by position arithmetic over the n-1 safe nodes.
    /// `pos` is the position we currently stand on (updated when a move is
    /// issued), `dir` the heading of the issued move, `fwd_port` the port of
    /// the current node that leads forward (filled in from the arrival
    /// observation when `None`).
    RingSweep { pos: u64, dir: i64, bbh: u64, fwd_port: Option<Port> },
    /// Far-side knower waiting to intercept F1 on the black hole.
    FarWait { rv: Round, jump: Port, c1_port: Port, c1_key: Key, far_key: Key },
    /// On the inactive black hole at round rv+1; decide by F1's presence.
    Jumped { c1_port: Port, c1_key: Key, far_key: Key },
    /// Stationary forever.
    Parked,
    /// F1/F2 cautious walk.
    Cautious(CwState),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatternMemory {
    pub cfg: PatternCfg,
    pub me: AgentId,
    /// Round currently being decided; incremented at the top of `decide`.
    pub round: Round,
    machine: Option<WalkMachine>,
    steps: Vec<StepRec>,
    evidence: BTreeMap<AgentId, Round>,
    known_dead: BTreeSet<AgentId>,
    pub knowledge: Option<Knowledge>,
    pub claim: Option<ClaimRecord>,
    pub anchored: Option<Port>,
    mode: Mode,
}

/// Phase arithmetic: phase `i >= 1` has budget `2^i` and occupies
/// `10·2^i - 7` rounds.
fn phase_of(t: Round) -> (u32, Round, u64) {
    let mut s: Round = 1;
    let mut i: u32 = 1;
    loop {
        let b = 1u64 << i;
        let len = 10 * b - 7;
        if t < s + len {
            return (i, s, b);
        }
        s += len;
        i += 1;
    }
}

/// First round of phase `i`.
pub fn phase_start(i: u32) -> Round {
    let mut s: Round = 1;
    for j in 1..i {
        s += 10 * (1u64 << j) - 7;
    }
    s
}

/// The `5·2^i + 2` bound on each half of phase `i`.
pub fn phase_half_budget(i: u32) -> u64 {
    5 * (1u64 << i) + 2
}

fn flip_role(r: Role) -> Role {
    match r {
        Role::F => Role::L,
        Role::L => Role::F,
        Role::I1 => Role::I2,
        Role::I2 => Role::I1,
        other => other,
    }
}

fn stage(cfg: &PatternCfg, t: Round) -> Stage {
    match cfg.variant {
        Variant::Ring => {
            if t <= 2 {
                Stage::Make { r: t as u8 }
            } else {
                let d = t - 3;
                let j = d / 5;
                let r = (d % 5) as u8 + 1;
                Stage::Sub { a: j, b: j + 1, c: j + 2, r, flipped: false }
            }
        }
        _ => {
            let (_, s, bdg) = phase_of(t);
            let d = t - s;
            if d < 2 {
                return Stage::Make { r: d as u8 + 1 };
            }
            let d2 = d - 2;
            let j = d2 / 5;
            let r = (d2 % 5) as u8 + 1;
            if j < bdg - 1 {
                Stage::Sub { a: j, b: j + 1, c: j + 2, r, flipped: false }
            } else if j < 2 * (bdg - 1) {
                let ii = j - (bdg - 1);
                Stage::Sub { a: bdg - ii, b: bdg - ii - 1, c: bdg - ii - 2, r, flipped: true }
            } else {
                Stage::Collapse
            }
        }
    }
}

/// Physical schedule (start index, end index) of the agent currently
/// holding `role` in the given stage.
fn role_schedule(st: Stage, role: Role) -> (u64, u64) {
    match st {
        Stage::Make { r } => match (r, role) {
            (1, Role::L) | (1, Role::I1) | (1, Role::I2) => (0, 1),
            (2, Role::I2) => (1, 0),
            (2, Role::L) | (2, Role::I1) => (1, 1),
            _ => (0, 0),
        },
        Stage::Sub { a, b, c, r, .. } => match (r, role) {
            (1, Role::F) | (1, Role::I2) => (a, a),
            (1, Role::I1) => (b, b),
            (1, Role::L) => (b, c),
            (2, Role::F) => (a, a),
            (2, Role::I2) => (a, b),
            (2, Role::I1) => (b, b),
            (2, Role::L) => (c, b),
            (3, Role::F) => (a, a),
            (3, Role::I2) => (b, a),
            (3, Role::I1) => (b, b),
            (3, Role::L) => (b, c),
            (4, Role::F) | (4, Role::I2) => (a, b),
            (4, Role::I1) => (b, b),
            (4, Role::L) => (c, c),
            (5, Role::F) | (5, Role::I2) => (b, b),
            (5, Role::I1) => (b, c),
            (5, Role::L) => (c, c),
            _ => (0, 0),
        },
        Stage::Collapse => match role {
            // Roles are flipped by the time of collapse: the current F and
            // I2 walk the last edge home, L and I1 are already there.
            Role::F | Role::I2 => (1, 0),
            Role::L | Role::I1 => (0, 0),
            _ => (0, 0),
        },
    }
}

/// Role held by rank `rank` at round `t` (flips applied).
fn role_at(cfg: &PatternCfg, rank: usize, t: Round) -> Role {
    let base = cfg.base_role(rank);
    match stage(cfg, t) {
        Stage::Sub { flipped: true, .. } | Stage::Collapse => flip_role(base),
        _ => base,
    }
}

/// Benign plan row of rank `rank` at round `t`: (start, end) walk indices.
fn plan_rank(cfg: &PatternCfg, rank: usize, t: Round) -> (u64, u64) {
    let role = role_at(cfg, rank, t);
    if matches!(role, Role::F1 | Role::F2 | Role::Sitter) {
        return (0, 0);
    }
    role_schedule(stage(cfg, t), role)
}

impl PatternMemory {
    pub fn new(cfg: PatternCfg, me: AgentId) -> Self {
        PatternMemory {
            cfg,
            me,
            round: 0,
            machine: None,
            steps: Vec::new(),
            evidence: BTreeMap::new(),
            known_dead: BTreeSet::new(),
            knowledge: None,
            claim: None,
            anchored: None,
            mode: Mode::Pattern,
        }
    }

    pub fn role_tag(&self) -> String {
        if self.anchored.is_some() {
            return "A".into();
        }
        match &self.mode {
            Mode::Sweep { .. } | Mode::RingSweep { .. } | Mode::Retreat { .. }
            | Mode::Informed { .. } => "K".into(),
            Mode::FarWait { .. } | Mode::Jumped { .. } | Mode::FarGo { .. } => "W".into(),
            Mode::Parked => "P".into(),
            Mode::Cautious(_) | Mode::Pattern => {
                let rank = match self.cfg.rank_of(self.me) {
                    Some(r) => r,
                    None => return "?".into(),
                };
                let role = if self.round == 0 {
                    self.cfg.base_role(rank)
                } else {
                    role_at(&self.cfg, rank, self.round)
                };
                match role {
                    Role::F => "F".into(),
                    Role::I2 => "I2".into(),
                    Role::I1 => "I1".into(),
                    Role::L => "L".into(),
                    Role::F1 => "F1".into(),
                    Role::F2 => "F2".into(),
                    Role::Sitter => "·".into(),
                }
            }
        }
    }

    pub fn knows_bbh(&self) -> bool {
        self.knowledge.is_some()
    }

    pub fn is_cautious(&self) -> bool {
        matches!(self.mode, Mode::Cautious(_))
    }

    fn my_rank(&self) -> usize {
        self.cfg.rank_of(self.me).expect("agent is a member")
    }

    fn key_of_idx(&self, idx: u64) -> PNode {
        let machine = self.machine.as_ref().expect("walk started");
        let len = self.steps.len() as u64;
        if idx < len {
            return PNode::Seen(machine.canon(self.steps[idx as usize].key));
        }
        if idx == len && len > 0 {
            let tip = &self.steps[(len - 1) as usize];
            // Predictable next key: already-walked directed edge or ring math.
            match machine {
                WalkMachine::Line(w) => {
                    if let Some((k, _)) = w.edge(machine.canon(tip.key), tip.out_port) {
                        return PNode::Seen(k);
                    }
                }
                WalkMachine::Ring(w) => {
                    return PNode::Seen(Key::Known((idx % w.n() as u64) as u32));
                }
                WalkMachine::Map(w) => {
                    if let Some((k, _)) = w.edge(machine.canon(tip.key), tip.out_port) {
                        return PNode::Seen(k);
                    }
                }
            }
        }
        PNode::Ahead(idx)
    }

    fn home_node(&self) -> PNode {
        PNode::Seen(Key::Known(0))
    }

    /// Port from my current node toward `node`, if derivable from the walk.
    fn port_towards(&self, my_key: Key, node: PNode) -> Option<Port> {
        let machine = self.machine.as_ref()?;
        match node {
            PNode::Seen(k) => {
                for (idx, s) in self.steps.iter().enumerate() {
                    if machine.canon(s.key) == my_key {
                        if idx + 1 < self.steps.len()
                            && machine.canon(self.steps[idx + 1].key) == k
                        {
                            return Some(s.out_port);
                        }
                        if idx >= 1 && machine.canon(self.steps[idx - 1].key) == k {
                            return Some(s.in_port);
                        }
                        if idx + 1 == self.steps.len() && self.key_of_idx(idx as u64 + 1) == PNode::Seen(k) {
                            return Some(s.out_port);
                        }
                    }
                }
                None
            }
            PNode::Ahead(idx) => {
                let prev = idx.checked_sub(1)?;
                if prev < self.steps.len() as u64 {
                    let s = &self.steps[prev as usize];
                    if machine.canon(s.key) == my_key {
                        return Some(s.out_port);
                    }
                }
                None
            }
        }
    }

    /// All known edges into `node`, from the walk step log.
    fn edges_into(&self, node: PNode) -> Vec<(Key, Port)> {
        let machine = self.machine.as_ref().expect("walk started");
        let mut out = BTreeSet::new();
        match node {
            PNode::Seen(k) => {
                for (idx, s) in self.steps.iter().enumerate() {
                    if machine.canon(s.key) == k {
                        if idx >= 1 {
                            let p = &self.steps[idx - 1];
                            out.insert((machine.canon(p.key), p.out_port));
                        }
                        if idx + 1 < self.steps.len() {
                            let n = &self.steps[idx + 1];
                            out.insert((machine.canon(n.key), n.in_port));
                        }
                    }
                }
                // The tip's predicted next node may also be it.
                let len = self.steps.len() as u64;
                if len > 0 && self.key_of_idx(len) == PNode::Seen(k) {
                    let tip = &self.steps[(len - 1) as usize];
                    out.insert((machine.canon(tip.key), tip.out_port));
                }
            }
            PNode::Ahead(idx) => {
                if idx >= 1 && idx - 1 < self.steps.len() as u64 {
                    let p = &self.steps[(idx - 1) as usize];
                    out.insert((machine.canon(p.key), p.out_port));
                }
            }
        }
        out.into_iter().collect()
    }

    /// Earliest walk index whose node is `node`.
    fn first_idx_of(&self, node: PNode) -> Option<u64> {
        let machine = self.machine.as_ref()?;
        match node {
            PNode::Seen(k) => (0..self.steps.len())
                .find(|&i| machine.canon(self.steps[i].key) == k)
                .map(|i| i as u64),
            PNode::Ahead(idx) => Some(idx),
        }
    }

    fn absorb(&mut self, other: &PatternMemory) -> Result<(), String> {
        if other.cfg != self.cfg {
            return Ok(()); // different protocol family; ignore
        }
        for (&id, &r) in &other.evidence {
            let e = self.evidence.entry(id).or_insert(0);
            *e = (*e).max(r);
        }
        self.known_dead.extend(other.known_dead.iter().copied());
        if other.steps.len() > self.steps.len() {
            self.steps = other.steps.clone();
            self.machine = other.machine.clone();
        }
        match (&self.knowledge, &other.knowledge) {
            (None, Some(k)) => self.knowledge = Some(k.clone()),
            (Some(a), Some(b)) if a.node != b.node => {
                return Err(format!("inconsistent black hole beliefs: {:?} vs {:?}", a.node, b.node));
            }
            (Some(a), Some(b)) => {
                let mut edges: BTreeSet<(Key, Port)> = a.edges.iter().copied().collect();
                edges.extend(b.edges.iter().copied());
                self.knowledge = Some(Knowledge {
                    node: a.node,
                    edges: edges.into_iter().collect(),
                    launch: a.launch.min(b.launch),
                });
            }
            _ => {}
        }
        Ok(())
    }

    /// Collects candidates for the black hole explaining every missing
    /// agent, given the benign plan and everything known to be alive.
    fn infer(&self, t: Round, missing: &BTreeSet<AgentId>) -> BTreeSet<PNode> {
        let mut all: Option<BTreeSet<PNode>> = None;
        for &x in missing {
            let rank_x = self.cfg.rank_of(x).expect("member");
            let since = self.evidence.get(&x).copied().unwrap_or(1);
            let mut cands: BTreeSet<PNode> = BTreeSet::new();
            for r in since..t {
                let (s, e) = plan_rank(&self.cfg, rank_x, r);
                for idx in [s, e] {
                    let n = self.key_of_idx(idx);
                    if n == self.home_node() {
                        continue;
                    }
                    if self.activation_refuted(t, r, n, x) {
                        continue;
                    }
                    cands.insert(n);
                }
            }
            all = Some(match all {
                None => cands,
                Some(acc) => acc.intersection(&cands).copied().collect(),
            });
        }
        all.unwrap_or_default()
    }

    /// True if an activation of node `n` in round `r` is contradicted by an
    /// agent known to be alive after `r` that the activation would have
    /// destroyed.
    fn activation_refuted(&self, _t: Round, r: Round, n: PNode, missing: AgentId) -> bool {
        for (rank, &id) in self.cfg.members.iter().enumerate() {
            if id == missing || self.known_dead.contains(&id) {
                continue;
            }
            let ev = self.evidence.get(&id).copied().unwrap_or(0);
            if ev <= r {
                continue;
            }
            let (s, e) = plan_rank(&self.cfg, rank, r);
            if self.key_of_idx(s) == n || self.key_of_idx(e) == n {
                return true;
            }
        }
        false
    }

    /// Records the agent's belief for the verifier, relative to its
    /// position at the start of round `t`.
    fn record_claim(&mut self, t: Round, my_key: Key) {
        if self.claim.is_some() {
            return;
        }
        let node = self.knowledge.as_ref().expect("informed").node;
        let claim = if PNode::Seen(my_key) == node {
            Some(BbhClaim::Here)
        } else {
            self.port_towards(my_key, node).map(BbhClaim::Behind)
        };
        if let Some(c) = claim {
            self.claim = Some(ClaimRecord { round: t, claim: c });
        }
    }

    /// The round the waiters launch their cautious walk, as computed by a
    /// detector at round `t`: the first phase boundary the pattern misses.
    fn launch_round_for_detection(&self, t: Round) -> Round {
        match self.cfg.variant {
            Variant::Ring => 0,
            _ => {
                let (i, s, _) = phase_of(t);
                if t == s {
                    t
                } else {
                    phase_start(i + 1)
                }
            }
        }
    }

    /// Entry point at the moment knowledge is first present in pattern mode:
    /// record the claim and either retreat (on the hole) or keep the benign
    /// schedule running to the end of the sub-phase.
    fn on_informed(&mut self, t: Round, input: &RoundInput<'_>, my_idx: u64, my_key: Key) -> Port {
        self.record_claim(t, my_key);
        let node = self.knowledge.as_ref().unwrap().node;
        let edges = self.edges_into(node);
        if let Some(k) = self.knowledge.as_mut() {
            let mut set: BTreeSet<(Key, Port)> = k.edges.iter().copied().collect();
            set.extend(edges);
            k.edges = set.into_iter().collect();
        }
        if PNode::Seen(my_key) == node {
            // Standing on the black hole: retreat to where we came from.
            let prev_idx = plan_rank(&self.cfg, self.my_rank(), t.saturating_sub(1)).0;
            self.mode = Mode::Retreat { to_idx: prev_idx };
            return input.arrival_port;
        }
        self.mode = Mode::Informed { at_idx: my_idx, deviated: false };
        self.decide_informed_move(t, input)
    }

    /// Plan-following while informed: cancel moves into the black hole and
    /// transition at the next schedule boundary.
    fn decide_informed_move(&mut self, t: Round, input: &RoundInput<'_>) -> Port {
        let Mode::Informed { at_idx, deviated } = self.mode.clone() else {
            unreachable!()
        };
        let node = self.knowledge.as_ref().unwrap().node;
        let boundary = matches!(
            stage(&self.cfg, t),
            Stage::Make { r: 1 } | Stage::Sub { r: 1, .. } | Stage::Collapse
        );
        if deviated || boundary {
            return self.informed_from(t, input, at_idx);
        }
        let (s, e) = plan_rank(&self.cfg, self.my_rank(), t);
        if s != at_idx {
            // The schedule diverged from where we stand; transition here.
            return self.informed_from(t, input, at_idx);
        }
        if s == e {
            return 0;
        }
        if self.key_of_idx(e) == node {
            self.mode = Mode::Informed { at_idx, deviated: true };
            return 0;
        }
        self.mode = Mode::Informed { at_idx: e, deviated: false };
        self.benign_move(s, e)
    }

    /// Mode transition for an informed agent standing on safe ground at
    /// walk index `my_idx`.
    fn informed_from(&mut self, t: Round, input: &RoundInput<'_>, my_idx: u64) -> Port {
        let my_key = match self.key_of_idx(my_idx) {
            PNode::Seen(k) => k,
            PNode::Ahead(_) => Key::Known(0),
        };
        let node = self.knowledge.as_ref().expect("informed").node;
        match self.cfg.variant {
            Variant::GraphSg => self.settle_anchor(t, input, my_key),
            Variant::Ring => {
                let n = self.cfg.ring_n.expect("ring size") as u64;
                let bbh_pos = match node {
                    PNode::Seen(Key::Known(p)) => p as u64 % n,
                    PNode::Ahead(idx) => idx % n,
                    PNode::Seen(Key::Limbo(_)) => unreachable!("ring keys are known"),
                };
                let my_pos = self.ring_pos_of(my_key).unwrap_or(0);
                let fwd_port = self.ring_forward_port(my_pos);
                self.mode = Mode::RingSweep { pos: my_pos, dir: 1, bbh: bbh_pos, fwd_port: Some(fwd_port) };
                self.ring_sweep_move(input)
            }
            Variant::Home | Variant::Any => {
                let home_side = self.on_home_side(my_key, node, false);
                if home_side || matches!(self.cfg.variant, Variant::Any) {
                    self.start_sweep(my_key);
                    self.sweep_move(input, my_key)
                } else {
                    self.start_far_wait(t, input, my_idx, my_key)
                }
            }
        }
    }

    fn ring_pos_of(&self, key: Key) -> Option<u64> {
        match key {
            Key::Known(k) => Some(k as u64),
            _ => None,
        }
    }

    fn on_home_side(&self, my_key: Key, node: PNode, on_bbh: bool) -> bool {
        if on_bbh {
            return false;
        }
        match (&self.machine, node) {
            (Some(WalkMachine::Line(w)), PNode::Seen(k)) => !w.separated_by(my_key, k),
            // An Ahead node has nothing explored beyond it.
            (_, PNode::Ahead(_)) => true,
            _ => true,
        }
    }

    fn start_sweep(&mut self, my_key: Key) {
        let avoid: BTreeSet<(Key, Port)> = self
            .knowledge
            .as_ref()
            .map(|k| k.edges.iter().copied().collect())
            .unwrap_or_default();
        self.mode = Mode::Sweep { avoid, at: my_key, last_move: None };
    }

    fn start_conservative(&mut self, my_key: Key, candidates: &BTreeSet<PNode>) {
        let mut avoid = BTreeSet::new();
        for c in candidates {
            avoid.extend(self.edges_into(*c));
        }
        self.mode = Mode::Sweep { avoid, at: my_key, last_move: None };
    }

    /// Far-side knower: head for the walk node adjacent to the black hole
    /// (backwards along the walk), then wait for the interception round.
    fn start_far_wait(&mut self, t: Round, input: &RoundInput<'_>, my_idx: u64, my_key: Key) -> Port {
        let node = self.knowledge.as_ref().unwrap().node;
        // Last crossing of the black hole before our position: everything
        // after it is on our side.
        let mut crossing = None;
        for idx in (0..my_idx.min(self.steps.len() as u64)).rev() {
            if self.key_of_idx(idx) == node {
                crossing = Some(idx);
                break;
            }
        }
        let Some(s_cross) = crossing else {
            // No recorded crossing (should not happen for a far knower).
            self.mode = Mode::Parked;
            return 0;
        };
        let target_idx = s_cross + 1;
        if my_idx == target_idx {
            return self.enter_far_wait(t, input, my_idx, my_key);
        }
        self.mode = Mode::FarGo { at_idx: my_idx, target_idx };
        self.far_go_move(t, input)
    }

    fn far_go_move(&mut self, t: Round, input: &RoundInput<'_>) -> Port {
        let Mode::FarGo { at_idx, target_idx } = self.mode.clone() else {
            unreachable!()
        };
        if at_idx == target_idx {
            let my_key = match self.key_of_idx(at_idx) {
                PNode::Seen(k) => k,
                PNode::Ahead(_) => Key::Known(0),
            };
            return self.enter_far_wait(t, input, at_idx, my_key);
        }
        debug_assert!(at_idx > target_idx);
        let port = self.steps[at_idx as usize].in_port;
        self.mode = Mode::FarGo { at_idx: at_idx - 1, target_idx };
        port
    }

    fn enter_far_wait(&mut self, t: Round, input: &RoundInput<'_>, my_idx: u64, my_key: Key) -> Port {
        let node = self.knowledge.as_ref().unwrap().node;
        let jump = match self.port_towards(my_key, node) {
            Some(p) => p,
            None => {
                self.mode = Mode::Parked;
                return 0;
            }
        };
        let s_star = self.first_idx_of(node).expect("walk index of bbh");
        let launch = self.knowledge.as_ref().unwrap().launch;
        let rv = launch + 3 * (s_star - 1);
        let c1_port = self.steps[s_star as usize].in_port;
        let c1_key = self
            .machine
            .as_ref()
            .unwrap()
            .canon(self.steps[(s_star - 1) as usize].key);
        let _ = my_idx;
        if rv <= t {
            // Interception no longer possible; sweep the far side.
            self.start_sweep(my_key);
            return self.sweep_move(input, my_key);
        }
        self.mode = Mode::FarWait { rv, jump, c1_port, c1_key, far_key: my_key };
        0
    }

    fn settle_anchor(&mut self, _t: Round, input: &RoundInput<'_>, my_key: Key) -> Port {
        let node = self.knowledge.as_ref().unwrap().node;
        let port = match self.port_towards(my_key, node) {
            Some(p) => p,
            None => {
                self.mode = Mode::Parked;
                return 0;
            }
        };
        self.settle_anchor_port(input, port)
    }

    /// Settles as Anchor(port) at the current node unless the port is
    /// already anchored or a lower-id co-located knower is about to.
    fn settle_anchor_port(&mut self, input: &RoundInput<'_>, port: Port) -> Port {
        let node = self.knowledge.as_ref().unwrap().node;
        let taken = input.others().any(|(_, m)| m.anchor_claim() == Some(port));
        if taken {
            self.mode = Mode::Parked;
            return 0;
        }
        // Tie-break: a lower-id co-located agent that detected with us (or
        // is mid-retreat with the same belief) settles instead.
        let deferred = input.others().any(|(id, m)| {
            id < self.me
                && match m {
                    AgentMemory::Pattern(pm) => {
                        pm.anchored.is_none()
                            && matches!(
                                pm.mode,
                                Mode::Pattern | Mode::Retreat { .. } | Mode::Informed { .. }
                            )
                            && (pm.knowledge.as_ref().map(|k| k.node) == Some(node)
                                || pm.knowledge.is_none())
                    }
                    _ => false,
                }
        });
        if deferred {
            self.mode = Mode::Parked;
            return 0;
        }
        self.anchored = Some(port);
        self.mode = Mode::Parked;
        0
    }

    fn sweep_move(&mut self, input: &RoundInput<'_>, my_key: Key) -> Port {
        let Mode::Sweep { avoid, at, last_move } = &mut self.mode else {
            return 0;
        };
        *at = my_key;
        let degree = input.degree;
        let mut p = right_hand(input.arrival_port, degree);
        let mut tried = 0;
        while avoid.contains(&(my_key, p)) {
            p = right_hand(p, degree);
            tried += 1;
            if tried > degree {
                *last_move = None;
                return 0;
            }
        }
        *last_move = Some(p);
        p
    }

    /// Current walk-tracked key while sweeping: updated from arrivals.
    fn sweep_key_update(&mut self, input: &RoundInput<'_>, marked: bool) -> Key {
        let Mode::Sweep { at, last_move, .. } = &self.mode else {
            unreachable!()
        };
        let at = *at;
        match last_move {
            Some(p) => {
                let p = *p;
                let obs = Obs { degree: input.degree, arrival_port: input.arrival_port, marked };
                match self.machine.as_mut().unwrap() {
                    WalkMachine::Line(w) => w.note_edge(at, p, obs),
                    WalkMachine::Map(w) => w.edge(at, p).map(|(k, _)| k).unwrap_or(at),
                    WalkMachine::Ring(_) => at,
                }
            }
            None => at,
        }
    }

    pub fn decide(mut self, input: &RoundInput<'_>) -> Result<(Port, AgentMemory), String> {
        self.round += 1;
        let t = self.round;
        let marked = self
            .cfg
            .marker_id
            .map(|mid| input.colocated.iter().any(|(id, _)| *id == mid))
            .unwrap_or(false);

        // Start the walk on the very first round.
        if self.machine.is_none() {
            let m = match self.cfg.variant {
                Variant::Ring => WalkMachine::Ring(
                    RingWalk::new(self.cfg.ring_n.ok_or("ring size required")?, input.degree)
                        .map_err(|e| e)?,
                ),
                Variant::GraphSg => WalkMachine::Map(MapWalk::new(input.degree)),
                _ => WalkMachine::Line(LineWalk::new(input.degree)),
            };
            self.steps.push(StepRec {
                key: Key::Known(0),
                in_port: 0,
                out_port: m.planned(),
                degree: input.degree,
            });
            self.machine = Some(m);
        }

        // Merge all co-located pattern memories (full disclosure).
        for (_, mem) in input.others() {
            if let AgentMemory::Pattern(pm) = mem {
                self.absorb(pm)?;
            }
        }
        for (id, _) in input.colocated.iter() {
            if self.cfg.rank_of(*id).is_some() {
                let e = self.evidence.entry(*id).or_insert(0);
                *e = (*e).max(t);
            }
        }
        self.evidence.insert(self.me, t);

        match self.mode.clone() {
            Mode::Pattern => self.decide_pattern(t, input, marked),
            Mode::Informed { at_idx, .. } => {
                // Materialize the walk tip if the schedule put us on it.
                if at_idx == self.steps.len() as u64 {
                    let obs =
                        Obs { degree: input.degree, arrival_port: input.arrival_port, marked };
                    let machine = self.machine.as_mut().unwrap();
                    let key = machine.advance(obs);
                    let out = machine.planned();
                    self.steps.push(StepRec {
                        key,
                        in_port: input.arrival_port,
                        out_port: out,
                        degree: input.degree,
                    });
                }
                let port = self.decide_informed_move(t, input);
                Ok((port, self.seal()))
            }
            Mode::Retreat { to_idx } => {
                // Back on safe ground; run the informed transition from here.
                let port = self.informed_from(t, input, to_idx);
                Ok((port, self.seal()))
            }
            Mode::FarGo { .. } => {
                let port = self.far_go_move(t, input);
                Ok((port, self.seal()))
            }
            Mode::Sweep { .. } => {
                let my_key = self.sweep_key_update(input, marked);
                // Knowledge merged in while sweeping only grows the set of
                // edges to avoid.
                if let Some(k) = self.knowledge.clone() {
                    let extra = self.edges_into(k.node);
                    if let Mode::Sweep { avoid, .. } = &mut self.mode {
                        avoid.extend(extra);
                    }
                }
                let port = self.sweep_move(input, my_key);
                Ok((port, self.seal()))
            }
            Mode::RingSweep { .. } => {
                let port = self.ring_sweep_move(input);
                Ok((port, self.seal()))
            }
            Mode::FarWait { rv, jump, c1_port, c1_key, far_key } => {
                if t < rv {
                    Ok((0, self.seal()))
                } else {
                    self.mode = Mode::Jumped { c1_port, c1_key, far_key };
                    Ok((jump, self.seal()))
                }
            }
            Mode::Jumped { c1_port, c1_key, far_key } => {
                // Standing on the inactive black hole. If F1 made it here,
                // escort it back to C1; otherwise return to the far side.
                let f1_here = input.others().any(|(_, m)| match m {
                    AgentMemory::Pattern(pm) => pm.is_cautious(),
                    _ => false,
                });
                let avoid: BTreeSet<(Key, Port)> = self
                    .knowledge
                    .as_ref()
                    .map(|k| k.edges.iter().copied().collect())
                    .unwrap_or_default();
                if f1_here {
                    self.mode = Mode::Sweep { avoid, at: c1_key, last_move: None };
                    Ok((c1_port, self.seal()))
                } else {
                    self.mode = Mode::Sweep { avoid, at: far_key, last_move: None };
                    Ok((input.arrival_port, self.seal()))
                }
            }
            Mode::Parked => Ok((0, self.seal())),
            Mode::Cautious(cw) => self.decide_cautious(t, input, marked, cw),
        }
    }

    /// Forward port of a walk-visited ring position (the ring walk always
    /// moves forward, so it arrives through the backward port).
    fn ring_forward_port(&self, pos: u64) -> Port {
        if pos == 0 {
            return self.steps[0].out_port;
        }
        self.steps
            .iter()
            .find(|s| self.machine.as_ref().unwrap().canon(s.key) == Key::Known(pos as u32))
            .map(|s| right_hand(s.in_port, 2))
            .unwrap_or(1)
    }

    /// Ring sweeper: oscillate across the n-1 safe positions.
    fn ring_sweep_move(&mut self, input: &RoundInput<'_>) -> Port {
        let n = self.cfg.ring_n.unwrap() as i64;
        let Mode::RingSweep { pos, dir, bbh, fwd_port } = &mut self.mode else {
            unreachable!()
        };
        // The arrival observation orients the node we just stepped onto.
        let fwd = match fwd_port {
            Some(f) => *f,
            None => {
                debug_assert_ne!(input.arrival_port, 0);
                if *dir == 1 {
                    right_hand(input.arrival_port, 2)
                } else {
                    input.arrival_port
                }
            }
        };
        let add = |p: u64, d: i64| ((p as i64 + d).rem_euclid(n)) as u64;
        let mut d = *dir;
        let mut next = add(*pos, d);
        if next == *bbh {
            d = -d;
            next = add(*pos, d);
            if next == *bbh {
                *fwd_port = Some(fwd);
                return 0;
            }
        }
        let port = if d == 1 { fwd } else { right_hand(fwd, 2) };
        *pos = next;
        *dir = d;
        *fwd_port = None;
        port
    }

    fn decide_pattern(
        mut self,
        t: Round,
        input: &RoundInput<'_>,
        marked: bool,
    ) -> Result<(Port, AgentMemory), String> {
        let rank = self.my_rank();
        let (start_idx, end_idx) = plan_rank(&self.cfg, rank, t);

        // Materialize the walk tip if we are standing on it.
        if start_idx == self.steps.len() as u64 {
            let obs = Obs { degree: input.degree, arrival_port: input.arrival_port, marked };
            let machine = self.machine.as_mut().unwrap();
            let key = machine.advance(obs);
            let out = machine.planned();
            self.steps.push(StepRec { key, in_port: input.arrival_port, out_port: out, degree: input.degree });
        }
        let my_node = self.key_of_idx(start_idx);
        let my_key = match my_node {
            PNode::Seen(k) => k,
            PNode::Ahead(_) => return Err("standing on unmaterialized step".into()),
        };

        // Knowledge adopted from a merge?
        if self.knowledge.is_some() {
            let port = self.on_informed(t, input, start_idx, my_key);
            return Ok((port, self.seal()));
        }

        // Expectation check.
        let mut missing: BTreeSet<AgentId> = BTreeSet::new();
        for (r, &id) in self.cfg.members.iter().enumerate() {
            if id == self.me || self.known_dead.contains(&id) {
                continue;
            }
            let (s, _) = plan_rank(&self.cfg, r, t);
            if self.key_of_idx(s) == my_node
                && !input.colocated.iter().any(|(cid, _)| *cid == id)
            {
                missing.insert(id);
            }
        }

        if !missing.is_empty() {
            let role = role_at(&self.cfg, rank, t);
            let cands = self.infer(t, &missing);
            if cands.len() == 1 {
                let node = *cands.iter().next().unwrap();
                self.known_dead.extend(missing.iter().copied());
                let edges = self.edges_into(node);
                let launch = self.launch_round_for_detection(t);
                self.knowledge = Some(Knowledge { node, edges, launch });
                let port = self.on_informed(t, input, start_idx, my_key);
                return Ok((port, self.seal()));
            }
            // Ambiguous. Waiters hold out for the launch deadline; pattern
            // agents fall back to a conservative sweep of the safe region.
            match role {
                Role::F1 | Role::F2 => {
                    if matches!(stage(&self.cfg, t), Stage::Make { r: 1 }) {
                        let cw = CwState { exp: launch_exp(t), pos: 1, cyc: 0, at_idx: 0 };
                        self.mode = Mode::Cautious(cw.clone());
                        return self.decide_cautious(t, input, marked, cw);
                    }
                    return Ok((0, self.seal()));
                }
                Role::Sitter => return Ok((0, self.seal())),
                _ => {
                    self.known_dead.extend(missing.iter().copied());
                    self.start_conservative(my_key, &cands);
                    let port = self.sweep_move(input, my_key);
                    return Ok((port, self.seal()));
                }
            }
        }

        // Waiters check the return deadline at each phase boundary; the
        // missing-set logic above already covers it (a missing pattern agent
        // at make-round 1 triggers inference or the launch).
        let port = self.benign_move(start_idx, end_idx);
        Ok((port, self.seal()))
    }

    fn benign_move(&self, start_idx: u64, end_idx: u64) -> Port {
        if end_idx == start_idx {
            0
        } else if end_idx == start_idx + 1 {
            self.steps[start_idx as usize].out_port
        } else {
            self.steps[start_idx as usize].in_port
        }
    }

    fn decide_cautious(
        mut self,
        t: Round,
        input: &RoundInput<'_>,
        marked: bool,
        mut cw: CwState,
    ) -> Result<(Port, AgentMemory), String> {
        let rank = self.my_rank();
        let is_f1 = matches!(self.cfg.base_role(rank), Role::F1);
        let target = cw.target_idx();

        // F1 materializes new steps when probing the frontier.
        if is_f1 && cw.cyc == 1 && target == self.steps.len() as u64 {
            let obs = Obs { degree: input.degree, arrival_port: input.arrival_port, marked };
            let machine = self.machine.as_mut().unwrap();
            let key = machine.advance(obs);
            let out = machine.planned();
            self.steps.push(StepRec { key, in_port: input.arrival_port, out_port: out, degree: input.degree });
        }

        // Informed (merged knowledge, e.g. met a knower or stand on 𝔟 with
        // the far knower): stop the walk.
        if self.knowledge.is_some() {
            let node = self.knowledge.as_ref().unwrap().node;
            let is_probing = is_f1 && cw.cyc == 1;
            let my_idx = if is_probing { target } else { cw.at_idx };
            let my_node = self.key_of_idx(my_idx);
            if my_node == node {
                // On the black hole: retreat the way we came, then sweep C1.
                let back = input.arrival_port;
                let avoid: BTreeSet<(Key, Port)> = self
                    .knowledge
                    .as_ref()
                    .map(|k| k.edges.iter().copied().collect())
                    .unwrap_or_default();
                let at = match self.key_of_idx(cw.at_idx) {
                    PNode::Seen(k) => k,
                    PNode::Ahead(_) => Key::Known(0),
                };
                self.mode = Mode::Sweep { avoid, at, last_move: None };
                return Ok((back, self.seal()));
            }
            let my_key = match my_node {
                PNode::Seen(k) => k,
                PNode::Ahead(_) => Key::Known(0),
            };
            self.start_sweep(my_key);
            let port = self.sweep_move(input, my_key);
            return Ok((port, self.seal()));
        }

        let f1_id = self.cfg.members.get(self.cfg.sg).copied();
        let port;
        match cw.cyc {
            0 => {
                // F1 probes; F2 waits.
                port = if is_f1 { self.cw_port(cw.at_idx, target) } else { 0 };
                cw.cyc = 1;
            }
            1 => {
                // F1 returns; F2 waits.
                port = if is_f1 { input.arrival_port } else { 0 };
                cw.cyc = 2;
            }
            _ => {
                // Both advance — unless F1 failed to return.
                if !is_f1 {
                    let f1_present = f1_id
                        .map(|id| input.colocated.iter().any(|(cid, _)| *cid == id))
                        .unwrap_or(false);
                    let f1_dead_known = f1_id.map(|id| self.known_dead.contains(&id)).unwrap_or(true);
                    if !f1_present && !f1_dead_known {
                        // F1 was destroyed probing `target`: that node is 𝔟.
                        let node = self.key_of_idx(target);
                        if let Some(id) = f1_id {
                            self.known_dead.insert(id);
                        }
                        let edges = self.edges_into(node);
                        let launch = self.launch_round_for_detection(t);
                        self.knowledge = Some(Knowledge { node, edges, launch });
                        let my_node = self.key_of_idx(cw.at_idx);
                        let my_key = match my_node {
                            PNode::Seen(k) => k,
                            PNode::Ahead(_) => Key::Known(0),
                        };
                        if self.claim.is_none() {
                            if let Some(p) = self.port_towards(my_key, node) {
                                self.claim = Some(ClaimRecord { round: t, claim: BbhClaim::Behind(p) });
                            }
                        }
                        self.start_sweep(my_key);
                        let port = self.sweep_move(input, my_key);
                        return Ok((port, self.seal()));
                    }
                }
                port = self.cw_port(cw.at_idx, target);
                cw.step_done();
                cw.cyc = 0;
            }
        }
        self.mode = Mode::Cautious(cw);
        Ok((port, self.seal()))
    }

    fn cw_port(&self, from_idx: u64, to_idx: u64) -> Port {
        if to_idx == from_idx + 1 {
            self.steps[from_idx as usize].out_port
        } else {
            self.steps[from_idx as usize].in_port
        }
    }

    fn seal(self) -> AgentMemory {
        AgentMemory::Pattern(Box::new(self))
    }
}

/// Window exponent for a cautious walk launched at round `t` (the phase
/// whose deadline just expired).
fn launch_exp(t: Round) -> u32 {
    // t is the first round of phase i+1; the failed phase is i.
    let (i, s, _) = phase_of(t);
    debug_assert_eq!(s, t);
    i.saturating_sub(1).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg4() -> PatternCfg {
        PatternCfg {
            variant: Variant::Any,
            members: vec![0, 1, 2, 3],
            sg: 4,
            ring_n: None,
            marker_id: None,
        }
    }

    #[test]
    fn phase_arithmetic() {
        assert_eq!(phase_start(1), 1);
        assert_eq!(phase_start(2), 1 + 13); // 10*2-7 = 13
        assert_eq!(phase_start(3), 14 + 33); // 10*4-7 = 33
        assert_eq!(phase_half_budget(3), 42);
        let (i, s, b) = phase_of(14);
        assert_eq!((i, s, b), (2, 14, 4));
    }

    #[test]
    fn stage_sequence_phase1() {
        let cfg = cfg4();
        assert_eq!(stage(&cfg, 1), Stage::Make { r: 1 });
        assert_eq!(stage(&cfg, 2), Stage::Make { r: 2 });
        // phase 1: budget 2, one outbound subphase (rounds 3..7),
        // one inbound (8..12), collapse at 13.
        assert_eq!(stage(&cfg, 3), Stage::Sub { a: 0, b: 1, c: 2, r: 1, flipped: false });
        assert_eq!(stage(&cfg, 7), Stage::Sub { a: 0, b: 1, c: 2, r: 5, flipped: false });
        assert_eq!(stage(&cfg, 8), Stage::Sub { a: 2, b: 1, c: 0, r: 1, flipped: true });
        assert_eq!(stage(&cfg, 13), Stage::Collapse);
        assert_eq!(stage(&cfg, 14), Stage::Make { r: 1 });
    }

    #[test]
    fn subphase_positions_match_schedule() {
        // In the first outbound subphase: L walks 1->2->1->2, I2 shuttles.
        let cfg = cfg4();
        // rank 3 = L
        assert_eq!(plan_rank(&cfg, 3, 3), (1, 2));
        assert_eq!(plan_rank(&cfg, 3, 4), (2, 1));
        assert_eq!(plan_rank(&cfg, 3, 5), (1, 2));
        assert_eq!(plan_rank(&cfg, 3, 6), (2, 2));
        assert_eq!(plan_rank(&cfg, 3, 7), (2, 2));
        // rank 1 = I2
        assert_eq!(plan_rank(&cfg, 1, 3), (0, 0));
        assert_eq!(plan_rank(&cfg, 1, 4), (0, 1));
        assert_eq!(plan_rank(&cfg, 1, 5), (1, 0));
        assert_eq!(plan_rank(&cfg, 1, 6), (0, 1));
        assert_eq!(plan_rank(&cfg, 1, 7), (1, 1));
        // rank 0 = F moves only at round 4 of the subphase
        assert_eq!(plan_rank(&cfg, 0, 6), (0, 1));
    }

    #[test]
    fn flip_reverses_direction() {
        let cfg = cfg4();
        // Inbound subphase of phase 1 (rounds 8..12): frame a=2,b=1,c=0.
        // Rank 3 (base L) is flipped to F: moves at r4 from a=2 to b=1.
        assert_eq!(plan_rank(&cfg, 3, 11), (2, 1));
        // Rank 0 (base F) is now L: r1 move from b=1 to c=0.
        assert_eq!(plan_rank(&cfg, 0, 8), (1, 0));
    }
}
