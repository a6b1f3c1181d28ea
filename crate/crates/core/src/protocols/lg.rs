//! The large group of the general-graph algorithm.
//!
//! LG(0) waits at home until the small group misses a return deadline, then
//! walks its own breadth-first map construction. Every first entry into an
//! unexplored node v is gated by Explore(v): the two junior explorers enter
//! v, the most junior probes each neighbor of v in turn while the middle one
//! relays what it saw back to the group, and every way the black hole can
//! interfere ends with one explorer settled as an anchor blocking the port
//! that leads to it. Each anchor placement sheds at most the three explorer
//! slots and costs at most two lives, after which LG(i+1) continues.
//!
//! Node discovery uses the root-path structure with forward replays: the
//! group leaves a sentinel on the candidate, walks the stored paths from the
//! marked home node, and recognizes the candidate by meeting the sentinel.
//! The group therefore never stands on unproven ground outside a gated
//! entry.

use crate::engine::{AgentId, Round, RoundInput};
use crate::graph::Port;
use crate::protocols::pattern::phase_start;
use crate::protocols::walk::{MapWalk, Obs, RootPaths};
use crate::protocols::{AgentMemory, BbhClaim, ClaimRecord};
use std::collections::BTreeSet;

/// Rounds between the missed deadline and the group actually moving; covers
/// the small group's detection window plus its retreat onto the anchor spot.
pub const LG_LAUNCH_DELAY: Round = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum RPhase {
    ToHome,
    ToX(u32),
    BackFromX(u32),
    ToW,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ReplayState {
    u: u32,
    port: Port,
    wdeg: usize,
    warr: Port,
    phase: RPhase,
    route: Vec<Port>,
    idx: usize,
}

/// One Explore(v) episode; `t0` is the round the two explorers step out.
/// The explorer trio is frozen at episode start so that deaths discovered
/// mid-episode cannot shift the slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Episode {
    u: u32,
    v_port: Port,
    t0: Round,
    e1: AgentId,
    e2: AgentId,
    e3: AgentId,
    /// Degree of v and the port of v back to u, observed on entry.
    dv: Option<usize>,
    v_arr: Option<Port>,
    /// Probe ports at v, in increasing order, arrival and anchored ports
    /// excluded. Filled once `dv` is known.
    probes: Option<Vec<Port>>,
    /// The explorer sensed the black hole behind this probe port of v.
    lethal_at_v: Option<Port>,
    /// v itself is the black hole (anchor at a neighbor points back at it).
    v_is_hole: bool,
}

impl Episode {
    fn m(&self) -> Option<usize> {
        self.probes.as_ref().map(|p| p.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum LgJob {
    Idle,
    /// Group walk over mapped edges, then optionally probe `(u, port)`.
    Route { hops: Vec<Port>, idx: usize, probe: Option<(u32, Port)> },
    Explore(Episode),
    /// Clean episode: the whole group steps into v this round.
    GroupMove { u: u32, port: Port },
    /// Forward replays with a sentinel waiting on the candidate.
    Replays(ReplayState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum LgMode {
    Waiting,
    Active,
    Anchored,
    Lone,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LgMemory {
    members0: Vec<AgentId>,
    sg_ids: Vec<AgentId>,
    marker: AgentId,
    me: AgentId,
    round: Round,
    mode: LgMode,
    launch_at: Option<Round>,
    members: Vec<AgentId>,
    gen: u32,
    map: RootPaths,
    at: u32,
    job: LgJob,
    sweep_next: u32,
    /// Probe ports at unmapped candidates known to lead to the hole, keyed
    /// by the gated entry `(u, v_port)`.
    lethal_probes: BTreeSet<(u32, Port, Port)>,
    known_dead: BTreeSet<AgentId>,
    pub claim: Option<ClaimRecord>,
    pub anchored: Option<Port>,
    /// Explorer scratch: observation of v on entry, stamped with the
    /// episode it belongs to: (t0, degree, arrival port).
    scratch: Option<(Round, usize, Port)>,
    /// Explorer scratch: anchored ports seen at v, stamped with t0.
    scratch_anchors: Option<(Round, BTreeSet<Port>)>,
    lone: Option<Box<MapWalk>>,
    started: bool,
}

impl LgMemory {
    pub fn new(members: Vec<AgentId>, marker: AgentId, me: AgentId) -> Self {
        LgMemory {
            members0: members.clone(),
            sg_ids: Vec::new(),
            marker,
            me,
            round: 0,
            mode: LgMode::Waiting,
            launch_at: None,
            members,
            gen: 0,
            map: RootPaths { nodes: Vec::new() },
            at: 0,
            job: LgJob::Idle,
            sweep_next: 0,
            lethal_probes: BTreeSet::new(),
            known_dead: BTreeSet::new(),
            claim: None,
            anchored: None,
            scratch: None,
            scratch_anchors: None,
            lone: None,
            started: false,
        }
    }

    pub fn with_sg(mut self, sg: Vec<AgentId>) -> Self {
        self.sg_ids = sg;
        self
    }

    pub fn role_tag(&self) -> String {
        if self.anchored.is_some() {
            return "A".into();
        }
        match self.mode {
            LgMode::Waiting => "G".into(),
            LgMode::Lone => "K".into(),
            LgMode::Anchored => "A".into(),
            LgMode::Active => {
                let ex = self.explorers();
                match ex.iter().position(|&id| id == self.me) {
                    Some(0) => "E1".into(),
                    Some(1) => "E2".into(),
                    Some(2) => "E3".into(),
                    _ => "G".into(),
                }
            }
        }
    }

    pub fn group_view(&self) -> Option<(u32, Vec<AgentId>)> {
        match self.mode {
            LgMode::Active | LgMode::Waiting => Some((self.gen, self.members.clone())),
            _ => None,
        }
    }

    pub fn debug_job(&self) -> String {
        match &self.job {
            LgJob::Idle => "Idle".into(),
            LgJob::Route { hops, idx, probe } => format!("Route{:?}@{}/{}", probe, idx, hops.len()),
            LgJob::Explore(ep) => format!(
                "Ex(u{} p{} t0={} dv={:?} probes={:?} lethal={:?} vhole={})",
                ep.u, ep.v_port, ep.t0, ep.dv, ep.probes, ep.lethal_at_v, ep.v_is_hole
            ),
            LgJob::GroupMove { u, port } => format!("Go({u},{port})"),
            LgJob::Replays(st) => format!("Rep({:?}@{}/{})", st.phase, st.idx, st.route.len()),
        }
    }

    pub fn map_ref(&self) -> &RootPaths {
        match &self.lone {
            Some(w) => w.map(),
            None => &self.map,
        }
    }

    fn alive_members(&self) -> Vec<AgentId> {
        self.members
            .iter()
            .copied()
            .filter(|id| !self.known_dead.contains(id))
            .collect()
    }

    /// E1, E2, E3: the three lowest ids of the current group.
    fn explorers(&self) -> Vec<AgentId> {
        self.alive_members().into_iter().take(3).collect()
    }

    fn sentinel(&self) -> Option<AgentId> {
        self.alive_members().last().copied()
    }

    /// Group state (map, job, members) ticks identically for co-located
    /// members from shared information; the explorers' private scratch
    /// fields are read directly from their memories when judging.
    fn absorb(&mut self, other: &LgMemory) {
        self.known_dead.extend(other.known_dead.iter().copied());
        self.lethal_probes.extend(other.lethal_probes.iter().copied());
    }

    /// Ports of the node we stand on blocked by co-located anchors become
    /// blocked in the map. Only called when `at` matches the group's
    /// physical node (Idle-time, before picking a probe).
    fn note_anchors_here(&mut self, input: &RoundInput<'_>) {
        let at = self.at;
        let anchored: Vec<Port> = input
            .others()
            .filter_map(|(_, m)| m.anchor_claim())
            .collect();
        for p in anchored {
            if p <= self.map.node(at).degree {
                self.map.block(at, p);
            }
        }
    }

    fn find_probe(&self) -> Option<(u32, Port)> {
        self.map.find_probe()
    }

    pub fn decide(mut self, input: &RoundInput<'_>) -> Result<(Port, AgentMemory), String> {
        self.round += 1;
        let t = self.round;
        if !self.started {
            self.started = true;
            self.map = RootPaths::new(input.degree);
        }
        for (_, mem) in input.others() {
            if let AgentMemory::Lg(lm) = mem {
                self.absorb(lm);
            }
        }

        if self.anchored.is_some() || self.mode == LgMode::Anchored {
            return Ok((0, self.seal()));
        }
        if let Some(walk) = self.lone.as_mut() {
            if input.arrival_port != 0 {
                walk.advance(Obs {
                    degree: input.degree,
                    arrival_port: input.arrival_port,
                    marked: input.colocated.iter().any(|(id, _)| *id == self.marker),
                });
            }
            // Anchors seen en route block ports.
            let anchored: Vec<Port> = input.others().filter_map(|(_, m)| m.anchor_claim()).collect();
            for p in anchored {
                let pos = walk.position();
                walk.block(pos, p);
            }
            let port = walk.planned();
            return Ok((port, self.seal()));
        }

        if self.mode == LgMode::Waiting {
            // Launch when the small group misses a phase boundary, plus a
            // delay that covers its detection and anchoring.
            if let Some(lr) = self.launch_at {
                if t >= lr {
                    self.mode = LgMode::Active;
                } else {
                    return Ok((0, self.seal()));
                }
            } else {
                let mut i = 2;
                loop {
                    let s = phase_start(i);
                    if s > t {
                        break;
                    }
                    if s == t {
                        let all_home = self
                            .sg_ids
                            .iter()
                            .all(|id| input.colocated.iter().any(|(cid, _)| cid == id));
                        if !all_home {
                            self.launch_at = Some(t + LG_LAUNCH_DELAY);
                        }
                    }
                    i += 1;
                }
                return Ok((0, self.seal()));
            }
        }

        if self.alive_members().len() == 1 && self.lone.is_none() {
            let at = self.at;
            self.mode = LgMode::Lone;
            self.lone = Some(Box::new(MapWalk::from_map(self.map.clone(), at)));
            let port = self.lone.as_ref().unwrap().planned();
            return Ok((port, self.seal()));
        }

        let port = self.step_job(t, input)?;
        Ok((port, self.seal()))
    }

    fn gated(&self) -> bool {
        self.alive_members().len() >= 3
    }

    fn step_job(&mut self, t: Round, input: &RoundInput<'_>) -> Result<Port, String> {
        let me = self.me;
        loop {
            match self.job.clone() {
                LgJob::Idle => {
                    // At rest: anchors standing here block their ports
                    // before the next probe is picked.
                    self.note_anchors_here(input);
                    match self.find_probe() {
                    Some((u, port)) => {
                        if self.at == u {
                            if self.gated() {
                                let ex = self.explorers();
                                self.job = LgJob::Explore(Episode {
                                    u,
                                    v_port: port,
                                    t0: t,
                                    e1: ex[0],
                                    e2: ex[1],
                                    e3: ex[2],
                                    dv: None,
                                    v_arr: None,
                                    probes: None,
                                    lethal_at_v: None,
                                    v_is_hole: false,
                                });
                            } else {
                                self.job = LgJob::GroupMove { u, port };
                            }
                            continue;
                        }
                        let hops = self.map.route(self.at, u);
                        self.job = LgJob::Route { hops, idx: 0, probe: Some((u, port)) };
                        continue;
                    }
                    None => {
                        let n = self.map.node_count() as u32;
                        let mut target = self.sweep_next % n;
                        if target == self.at {
                            target = (target + 1) % n;
                        }
                        self.sweep_next = (target + 1) % n;
                        if target == self.at {
                            return Ok(0);
                        }
                        let hops = self.map.route(self.at, target);
                        self.at = target;
                        self.job = LgJob::Route { hops, idx: 0, probe: None };
                        continue;
                    }
                }},
                LgJob::Route { hops, idx, probe } => {
                    if idx < hops.len() {
                        let p = hops[idx];
                        self.job = LgJob::Route { hops, idx: idx + 1, probe };
                        return Ok(p);
                    }
                    match probe {
                        Some((u, _port)) => {
                            self.at = u;
                            self.job = LgJob::Idle;
                            // Re-plan from u (anchors noted on the way may
                            // have blocked this very port).
                            continue;
                        }
                        None => {
                            self.job = LgJob::Idle;
                            return Ok(0);
                        }
                    }
                }
                LgJob::GroupMove { u, port } => {
                    // Everyone steps into v; arrival is processed next round
                    // as a candidate entry.
                    self.job = LgJob::Replays(ReplayState {
                        u,
                        port,
                        wdeg: 0,
                        warr: 0,
                        phase: RPhase::ToW,
                        route: vec![],
                        idx: 0,
                    });
                    return Ok(port);
                }
                LgJob::Replays(st) => {
                    return self.step_replays(t, input, st, me);
                }
                LgJob::Explore(ep) => {
                    return self.step_explore(t, input, ep);
                }
            }
        }
    }

    /// Candidate handling after the group (or its follower block) arrived on
    /// the candidate: start forward replays or adopt the node.
    fn candidate_arrived(&mut self, input: &RoundInput<'_>) {
        let wdeg = input.degree;
        let warr = input.arrival_port;
        let (u, port) = match &self.job {
            LgJob::Replays(st) => (st.u, st.port),
            _ => unreachable!(),
        };
        if input.colocated.iter().any(|(id, _)| *id == self.marker) {
            self.map.add_cross(u, port, 0, warr);
            self.at = 0;
            self.job = LgJob::Idle;
            return;
        }
        let cands: Vec<u32> = (1..self.map.node_count() as u32)
            .filter(|&x| self.map.node(x).degree == wdeg && x != u)
            .collect();
        if cands.is_empty() {
            let id = self.map.add_node(u, port, wdeg, warr);
            self.at = id;
            self.job = LgJob::Idle;
            return;
        }
        let mut st = ReplayState { u, port, wdeg, warr, phase: RPhase::ToHome, route: Vec::new(), idx: 0 };
        // Walk back to u then home along the tree.
        let mut route = vec![warr];
        route.extend(self.map.route(u, 0));
        st.route = route;
        self.job = LgJob::Replays(st);
    }

    fn step_replays(
        &mut self,
        _t: Round,
        input: &RoundInput<'_>,
        mut st: ReplayState,
        me: AgentId,
    ) -> Result<Port, String> {
        let sentinel = self.sentinel();
        let i_am_sentinel = sentinel == Some(me);
        // Fresh arrival on the candidate (ToW leg exhausted => we stand on w).
        if matches!(st.phase, RPhase::ToW) && st.idx >= st.route.len() {
            if st.wdeg == 0 {
                // First arrival: observe and classify.
                self.job = LgJob::Replays(st);
                self.candidate_arrived(input);
                // Movement for this round is produced by the new job.
                return self.step_job(_t, input);
            }
            // Returned to the candidate after a NEW verdict.
            self.job = LgJob::Idle;
            return self.step_job(_t, input);
        }
        if st.idx < st.route.len() {
            let p = st.route[st.idx];
            st.idx += 1;
            self.job = LgJob::Replays(st);
            // The sentinel stays on the candidate while the block replays.
            return Ok(if i_am_sentinel { 0 } else { p });
        }
        // Route exhausted.
        match st.phase.clone() {
            RPhase::ToHome => {
                self.start_replay_leg(&mut st, None);
                self.job = LgJob::Replays(st);
                self.step_job(_t, input)
            }
            RPhase::ToX(x) => {
                let together = if i_am_sentinel {
                    input
                        .others()
                        .any(|(id, _)| self.alive_members().contains(&id))
                } else {
                    sentinel
                        .map(|s| input.colocated.iter().any(|(id, _)| *id == s))
                        .unwrap_or(false)
                };
                if together {
                    self.map.add_cross(st.u, st.port, x, st.warr);
                    self.at = x;
                    self.job = LgJob::Idle;
                    return self.step_job(_t, input);
                }
                st.phase = RPhase::BackFromX(x);
                st.route = self.map.root_path(x).iter().rev().map(|&(_, inp)| inp).collect();
                st.idx = 0;
                self.job = LgJob::Replays(st);
                self.step_job(_t, input)
            }
            RPhase::BackFromX(x) => {
                self.start_replay_leg(&mut st, Some(x));
                self.job = LgJob::Replays(st);
                self.step_job(_t, input)
            }
            RPhase::ToW => unreachable!("handled above"),
        }
    }

    fn start_replay_leg(&mut self, st: &mut ReplayState, after: Option<u32>) {
        let cands: Vec<u32> = (1..self.map.node_count() as u32)
            .filter(|&x| self.map.node(x).degree == st.wdeg && x != st.u)
            .collect();
        let next = match after {
            None => cands.first().copied(),
            Some(x) => cands.into_iter().skip_while(|&c| c != x).nth(1),
        };
        match next {
            Some(x) => {
                st.phase = RPhase::ToX(x);
                st.route = self.map.root_path(x).iter().map(|&(out, _)| out).collect();
                st.idx = 0;
            }
            None => {
                // New node: block walks home -> u -> w to rejoin the sentinel.
                let id = self.map.add_node(st.u, st.port, st.wdeg, st.warr);
                self.at = id;
                let mut route = self.map.route(0, st.u);
                route.push(st.port);
                st.phase = RPhase::ToW;
                st.route = route;
                st.idx = 0;
            }
        }
    }

    /// The Explore(v) state machine. With `d = t - t0` and `m` probe
    /// ports, the exact schedule is:
    ///   d=0:       E2, E3 step u -> v.
    ///   d=4c+1:    E3: v -> w_c          (cycle c = 0..m-1)
    ///   d=4c+2:    E3: w_c -> v
    ///   d=4c+3:    E2: v -> u (relay); on the final cycle E3 comes along
    ///   d=4c+4:    E2: u -> v (non-final cycles only)
    ///   d=4m:      whole group steps u -> v (clean episode).
    /// m=0: both return at d=1, group moves at d=2.
    ///
    /// Destruction dichotomy under the engine's rule: any activation of v
    /// while the episode runs kills both explorers (they are never apart on
    /// v at a kill opportunity), so
    ///   E2 missing at a group slot  =>  v is the hole (E1 anchors at u);
    ///   E3 missing from a probe     =>  that neighbor is the hole (E2
    ///                                   relays, then anchors at v).
    fn step_explore(
        &mut self,
        t: Round,
        input: &RoundInput<'_>,
        mut ep: Episode,
    ) -> Result<Port, String> {
        let (e1, e2, e3) = (ep.e1, ep.e2, ep.e3);
        let me = self.me;
        let d = t - ep.t0;
        let here = |id: AgentId| input.colocated.iter().any(|(cid, _)| *cid == id);

        if d == 0 {
            let port = ep.v_port;
            self.job = LgJob::Explore(ep);
            return Ok(if me == e2 || me == e3 { port } else { 0 });
        }

        // Explorers observe v on arrival.
        if d == 1 && (me == e2 || me == e3) {
            let anchors: BTreeSet<Port> =
                input.others().filter_map(|(_, m)| m.anchor_claim()).collect();
            self.scratch = Some((ep.t0, input.degree, input.arrival_port));
            self.scratch_anchors = Some((ep.t0, anchors));
        }
        self.fold_episode_observations(input, &mut ep, e2, e3);

        // ---- explorer-side logic on v ----
        if me == e2 || me == e3 {
            let probes = ep.probes.clone().unwrap_or_default();
            let m = probes.len() as u64;
            if m == 0 && ep.probes.is_some() {
                // both walk straight back
                if d == 1 {
                    self.job = LgJob::Explore(ep);
                    return Ok(input.arrival_port);
                }
                if d == 2 {
                    return Ok(self.clean_group_move(ep));
                }
                self.job = LgJob::Explore(ep);
                return Ok(0);
            }
            if me == e3 {
                // Anchor recognition on the probed neighbor.
                if d >= 2 && (d - 2) % 4 == 0 && m >= 1 && d <= 4 * (m - 1) + 2 {
                    let seen = input
                        .others()
                        .any(|(_, mm)| mm.anchor_claim() == Some(input.arrival_port));
                    if seen {
                        ep.v_is_hole = true;
                    }
                }
                self.job = LgJob::Explore(ep.clone());
                let port = self.e3_move(&ep, d, &probes, input);
                return Ok(port);
            }
            // me == e2
            // E3 due back at v at the start of d = 4c+3.
            if d >= 3 && (d - 3) % 4 == 0 && m >= 1 && d <= 4 * (m - 1) + 3 && ep.lethal_at_v.is_none() {
                let c = ((d - 3) / 4) as usize;
                if !here(e3) && !ep.v_is_hole && !self.known_dead.contains(&e3) {
                    self.known_dead.insert(e3);
                    let p = probes[c];
                    ep.lethal_at_v = Some(p);
                    self.lethal_probes.insert((ep.u, ep.v_port, p));
                    if self.claim.is_none() {
                        self.claim = Some(ClaimRecord { round: t, claim: BbhClaim::Behind(p) });
                    }
                }
            }
            self.job = LgJob::Explore(ep.clone());
            let port = self.e2_move(&ep, d, m, input);
            return Ok(port);
        }

        // ---- group-side logic at u ----
        // m = 0 early return: both explorers present at the start of d = 2.
        if d == 2 && here(e2) && here(e3) {
            return Ok(self.clean_group_move(ep));
        }
        // First relay due at the start of d = 4.
        if d == 4 && ep.dv.is_none() && !here(e2) {
            return self.resolve_v_lethal(t, ep, e1, &[e2, e3]);
        }
        if let Some(m) = ep.m() {
            let m = m as u64;
            if m == 0 {
                // m = 0 and the explorers were not both here at d = 2.
                if d >= 2 && !here(e2) {
                    return self.resolve_v_lethal(t, ep, e1, &[e2, e3]);
                }
                if d >= 2 {
                    return Ok(self.clean_group_move(ep));
                }
                self.job = LgJob::Explore(ep);
                return Ok(0);
            }
            // E2 present at u at the start of every d = 4c+4.
            if d >= 4 && (d - 4) % 4 == 0 && d <= 4 * m {
                if !here(e2) {
                    return self.resolve_v_lethal(t, ep, e1, &[e2, e3]);
                }
                // E2 here: read its verdicts.
                if ep.v_is_hole {
                    return Ok(self.finish_v_is_hole_group(t, &ep, e3, here(e3)));
                }
                if let Some(p) = ep.lethal_at_v {
                    // E3 dead, E2 settles at v next round.
                    self.known_dead.insert(e3);
                    self.members.retain(|&id| id != e2 && id != e3);
                    self.gen += 1;
                    self.lethal_probes.insert((ep.u, ep.v_port, p));
                    self.job = LgJob::Idle;
                    return Ok(0);
                }
                if d == 4 * m {
                    return Ok(self.clean_group_move(ep));
                }
            }
        }
        self.job = LgJob::Explore(ep);
        Ok(0)
    }

    fn e3_move(&mut self, ep: &Episode, d: u64, probes: &[Port], input: &RoundInput<'_>) -> Port {
        let m = probes.len() as u64;
        if ep.v_is_hole {
            // Return w -> v -> u alongside E2, then settle at u.
            if d >= 2 && (d - 2) % 4 == 0 && d <= 4 * m.saturating_sub(1) + 2 {
                return input.arrival_port; // w -> v
            }
            if d >= 3 && (d - 3) % 4 == 0 {
                return ep.v_arr.unwrap_or(1); // v -> u with E2
            }
            // At u: settle as Anchor(u, v_port).
            if self.claim.is_none() {
                self.claim = Some(ClaimRecord {
                    round: self.round,
                    claim: BbhClaim::Behind(ep.v_port),
                });
            }
            self.members.retain(|&id| id != self.me);
            self.gen += 1;
            self.anchored = Some(ep.v_port);
            self.mode = LgMode::Anchored;
            return 0;
        }
        for c in 0..m {
            if d == 4 * c + 1 {
                return probes[c as usize];
            }
            if d == 4 * c + 2 {
                return input.arrival_port;
            }
        }
        if m >= 1 && d == 4 * (m - 1) + 3 {
            return ep.v_arr.unwrap_or(1); // joint return with E2
        }
        if d >= 4 * m {
            // back at u; group move or verdict handled by the group logic
            if d == 4 * m {
                return self.clean_group_move_follow(ep);
            }
        }
        0
    }

    fn e2_move(&mut self, ep: &Episode, d: u64, m: u64, _input: &RoundInput<'_>) -> Port {
        if let Some(p) = ep.lethal_at_v {
            // Relay slot (v -> u), then back to v and settle as Anchor(p).
            if d >= 3 && (d - 3) % 4 == 0 {
                return ep.v_arr.unwrap_or(1);
            }
            if d >= 4 && (d - 4) % 4 == 0 {
                return ep.v_port; // u -> v
            }
            // On v: settle.
            self.members.retain(|&id| id != self.me);
            self.gen += 1;
            self.anchored = Some(p);
            self.mode = LgMode::Anchored;
            return 0;
        }
        if ep.v_is_hole {
            if d >= 3 && (d - 3) % 4 == 0 {
                return ep.v_arr.unwrap_or(1); // travel to u with E3
            }
            // At u: shed E3 (it settles), rejoin the group.
            let e3 = self.explorers().get(2).copied();
            if let Some(e3) = e3 {
                self.members.retain(|&id| id != e3);
            }
            self.gen += 1;
            self.job = LgJob::Idle;
            return 0;
        }
        for c in 0..m {
            if d == 4 * c + 3 {
                return ep.v_arr.unwrap_or(1); // v -> u (relay / joint return)
            }
            if d == 4 * c + 4 && c + 1 < m {
                return ep.v_port; // u -> v
            }
        }
        if d == 4 * m {
            return self.clean_group_move_follow(ep);
        }
        0
    }

    /// Group steps into v and the candidate machinery takes over.
    fn clean_group_move(&mut self, ep: Episode) -> Port {
        let port = ep.v_port;
        self.group_move_from_episode(&ep);
        port
    }

    fn clean_group_move_follow(&mut self, ep: &Episode) -> Port {
        let port = ep.v_port;
        self.group_move_from_episode(ep);
        port
    }

    fn finish_v_is_hole_group(&mut self, t: Round, ep: &Episode, e3: AgentId, _e3_here: bool) -> Port {
        if self.claim.is_none() {
            self.claim = Some(ClaimRecord { round: t, claim: BbhClaim::Behind(ep.v_port) });
        }
        self.map.block(ep.u, ep.v_port);
        self.members.retain(|&id| id != e3);
        self.gen += 1;
        self.job = LgJob::Idle;
        0
    }

    /// v is the black hole and both explorers are gone: E1 anchors at u.
    fn resolve_v_lethal(
        &mut self,
        t: Round,
        ep: Episode,
        e1: AgentId,
        dead: &[AgentId],
    ) -> Result<Port, String> {
        for &x in dead {
            self.known_dead.insert(x);
        }
        if self.claim.is_none() {
            self.claim = Some(ClaimRecord { round: t, claim: BbhClaim::Behind(ep.v_port) });
        }
        self.map.block(ep.u, ep.v_port);
        let shed: BTreeSet<AgentId> = dead.iter().copied().chain([e1]).collect();
        self.members.retain(|id| !shed.contains(id));
        self.gen += 1;
        if self.me == e1 {
            self.anchored = Some(ep.v_port);
            self.mode = LgMode::Anchored;
            return Ok(0);
        }
        self.job = LgJob::Idle;
        Ok(0)
    }

    fn group_move_from_episode(&mut self, ep: &Episode) {
        self.job = LgJob::Replays(ReplayState {
            u: ep.u,
            port: ep.v_port,
            wdeg: 0,
            warr: 0,
            phase: RPhase::ToW,
            route: vec![],
            idx: 0,
        });
    }

    fn fold_episode_observations(
        &mut self,
        input: &RoundInput<'_>,
        ep: &mut Episode,
        e2: AgentId,
        e3: AgentId,
    ) {
        // The explorers computed the probe list on entry; everyone else
        // copies their episode fields verbatim (recomputing would let later
        // verdicts leak into the schedule).
        if (self.me == e2 || self.me == e3) && ep.dv.is_none() {
            if let Some((t0, deg, arr)) = self.scratch {
                if t0 == ep.t0 {
                    ep.dv = Some(deg);
                    ep.v_arr = Some(arr);
                    let blocked = self
                        .scratch_anchors
                        .clone()
                        .filter(|(at, _)| *at == ep.t0)
                        .map(|(_, a)| a)
                        .unwrap_or_default();
                    let probes: Vec<Port> = (1..=deg)
                        .filter(|&p| p != arr)
                        .filter(|&p| !blocked.contains(&p))
                        .filter(|&p| !self.lethal_probes.contains(&(ep.u, ep.v_port, p)))
                        .collect();
                    ep.probes = Some(probes);
                }
            }
        }
        for (id, mem) in input.others() {
            if id == e2 || id == e3 {
                if let AgentMemory::Lg(lm) = mem {
                    if let LgJob::Explore(other_ep) = &lm.job {
                        if other_ep.t0 == ep.t0 {
                            if ep.dv.is_none() && other_ep.dv.is_some() {
                                ep.dv = other_ep.dv;
                                ep.v_arr = other_ep.v_arr;
                                ep.probes = other_ep.probes.clone();
                            }
                            if other_ep.lethal_at_v.is_some() && ep.lethal_at_v.is_none() {
                                ep.lethal_at_v = other_ep.lethal_at_v;
                                if let Some(p) = other_ep.lethal_at_v {
                                    self.lethal_probes.insert((ep.u, ep.v_port, p));
                                }
                            }
                            ep.v_is_hole |= other_ep.v_is_hole;
                        }
                    }
                }
            }
        }
    }

    fn seal(self) -> AgentMemory {
        AgentMemory::Lg(Box::new(self))
    }
}

/// Blocked (node, port) pairs of a finished group member, for verification.
pub fn blocked_ports_of(mem: &LgMemory) -> Vec<(u32, Port)> {
    let mut out = mem.map_ref().blocked_ports();
    out.sort_unstable();
    out
}

