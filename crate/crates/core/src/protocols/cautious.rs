//! Perpetual exploration against a classical (always active) black hole
//! with Δ+2 agents: a marker stays home, an explorer leads every step into
//! unknown territory, and the remaining agents check node discovery by
//! replaying the stored root paths from the marked node while the explorer
//! waits on the candidate.
//!
//! An explorer lost to a probe marks that port as hole-incident and the
//! next-lowest id takes over; at most Δ explorers are lost, after which the
//! survivor's map blocks every port into the hole and a perpetual sweep of
//! the surviving component runs forever.

use crate::engine::{AgentId, Round, RoundInput};
use crate::graph::Port;
use crate::protocols::walk::{MapWalk, Obs, RootPaths};
use crate::protocols::{AgentMemory, BbhClaim, ClaimRecord};
use std::collections::BTreeSet;

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
    /// Whether the explorer has made its single move back onto the
    /// candidate (it parks there for the rest of the episode).
    explorer_out: bool,
    /// On a ToW leg: true when the whole group walks together (no replays
    /// were needed), false when the followers return to a parked explorer.
    explorer_rides: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum BhJob {
    Idle,
    /// Whole group walks known tree edges; then probe, or nothing (sweep leg).
    Route { hops: Vec<Port>, idx: usize, probe: Option<(u32, Port)> },
    /// Explorer is traversing the unknown port this round.
    ProbeOut { u: u32, port: Port },
    /// Explorer is on the candidate and returns this round.
    ProbeBack { u: u32, port: Port },
    /// Start of the round after: judge by the explorer's presence.
    ProbeJudge { u: u32, port: Port },
    /// Followers run the root-path replays; explorer waits on the candidate.
    Replays(ReplayState),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CautiousMemory {
    walkers: Vec<AgentId>,
    marker: AgentId,
    me: AgentId,
    round: Round,
    map: RootPaths,
    at: u32,
    job: BhJob,
    sweep_next: u32,
    known_dead: BTreeSet<AgentId>,
    pub claim: Option<ClaimRecord>,
    /// Explorer's private observation of the candidate: (degree, arrival
    /// port, marked), read by the followers when it returns.
    scratch: Option<(usize, Port, bool)>,
    lone: Option<Box<MapWalk>>,
    started: bool,
}

impl CautiousMemory {
    pub fn new(walkers: Vec<AgentId>, marker: AgentId, me: AgentId) -> Self {
        CautiousMemory {
            walkers,
            marker,
            me,
            round: 0,
            map: RootPaths { nodes: Vec::new() },
            at: 0,
            job: BhJob::Idle,
            sweep_next: 0,
            known_dead: BTreeSet::new(),
            claim: None,
            scratch: None,
            lone: None,
            started: false,
        }
    }

    pub fn role_tag(&self) -> String {
        if self.lone.is_some() {
            return "K".into();
        }
        if Some(self.me) == self.explorer() {
            "E".into()
        } else {
            "C".into()
        }
    }

    pub fn map(&self) -> &RootPaths {
        &self.map
    }

    pub fn blocked_ports(&self) -> Vec<(u32, Port)> {
        match &self.lone {
            Some(w) => w.blocked_ports(),
            None => self.map.blocked_ports(),
        }
    }

    fn explorer(&self) -> Option<AgentId> {
        self.walkers.iter().copied().find(|id| !self.known_dead.contains(id))
    }

    fn followers_alive(&self) -> usize {
        self.walkers.iter().filter(|id| !self.known_dead.contains(id)).count().saturating_sub(1)
    }

    /// Replay candidates for a degree, in discovery order (home excluded:
    /// the marked flag already identifies it).
    fn candidates(&self, wdeg: usize, from: u32) -> Vec<u32> {
        (1..self.map.node_count() as u32)
            .filter(|&x| self.map.node(x).degree == wdeg)
            .filter(|&x| x != from)
            .collect()
    }

    fn next_candidate(&self, st: &ReplayState, after: Option<u32>) -> Option<u32> {
        let cands = self.candidates(st.wdeg, st.u);
        match after {
            None => cands.first().copied(),
            Some(x) => cands.into_iter().skip_while(|&c| c != x).nth(1),
        }
    }

    fn enter_replays_or_adopt(&mut self, u: u32, port: Port, wdeg: usize, warr: Port) {
        let mut st = ReplayState {
            u,
            port,
            wdeg,
            warr,
            phase: RPhase::ToHome,
            route: Vec::new(),
            idx: 0,
            explorer_out: false,
            explorer_rides: false,
        };
        if self.next_candidate(&st, None).is_none() {
            // Nothing to test: genuinely new. Everyone walks to it together.
            let id = self.map.add_node(u, port, wdeg, warr);
            self.at = id;
            st.phase = RPhase::ToW;
            st.route = vec![port];
            st.explorer_out = true;
            st.explorer_rides = true;
            self.job = BhJob::Replays(st);
            return;
        }
        st.route = self.map.route(u, 0);
        if st.route.is_empty() {
            self.start_next_replay(&mut st, None);
        }
        self.job = BhJob::Replays(st);
    }

    fn start_next_replay(&mut self, st: &mut ReplayState, after: Option<u32>) {
        match self.next_candidate(st, after) {
            Some(x) => {
                st.phase = RPhase::ToX(x);
                st.route = self.map.root_path(x).iter().map(|&(out, _)| out).collect();
                st.idx = 0;
            }
            None => {
                // All replays failed: new node; walk home -> u -> w.
                let id = self.map.add_node(st.u, st.port, st.wdeg, st.warr);
                let mut route = self.map.route(0, st.u);
                route.push(st.port);
                st.phase = RPhase::ToW;
                st.route = route;
                st.idx = 0;
                self.at = id; // group's logical node once the walk completes
            }
        }
    }

    /// Followers' position is implicit in the route index; the move for this
    /// round is simply the next hop (or a verdict step).
    pub fn decide(mut self, input: &RoundInput<'_>) -> Result<(Port, AgentMemory), String> {
        self.round += 1;
        if !self.started {
            self.started = true;
            self.map = RootPaths::new(input.degree);
            if self.walkers.len() == 1 {
                self.lone = Some(Box::new(MapWalk::new(input.degree)));
            }
        }

        // Merge group state from co-located walkers.
        for (_, mem) in input.others() {
            if let AgentMemory::Cautious(cm) = mem {
                self.absorb(cm);
            }
        }

        if let Some(walk) = self.lone.as_mut() {
            // Solo fallback: reverse-replay map construction, then sweep.
            if input.arrival_port != 0 {
                walk.advance(Obs {
                    degree: input.degree,
                    arrival_port: input.arrival_port,
                    marked: input.colocated.iter().any(|(id, _)| *id == self.marker),
                });
            }
            let port = walk.planned();
            return Ok((port, self.seal()));
        }

        let is_explorer = Some(self.me) == self.explorer();
        let marked_here = input.colocated.iter().any(|(id, _)| *id == self.marker);

        // Explorer standing on a fresh candidate records its observation.
        if is_explorer && input.arrival_port != 0 {
            if let BhJob::ProbeBack { .. } = &self.job {
                self.scratch = Some((input.degree, input.arrival_port, marked_here));
            }
        }

        let port = self.step_job(input, is_explorer)?;
        Ok((port, self.seal()))
    }

    fn step_job(&mut self, input: &RoundInput<'_>, mut is_explorer: bool) -> Result<Port, String> {
        loop {
            match self.job.clone() {
                BhJob::Idle => {
                    match self.map.find_probe() {
                        Some((u, port)) => {
                            if self.at == u {
                                self.job = BhJob::ProbeOut { u, port };
                                continue;
                            }
                            let hops = self.map.route(self.at, u);
                            self.job = BhJob::Route { hops, idx: 0, probe: Some((u, port)) };
                            continue;
                        }
                        None => {
                            // Map complete: cycle the nodes perpetually.
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
                            self.job = BhJob::Route { hops, idx: 0, probe: None };
                            continue;
                        }
                    }
                }
                BhJob::Route { hops, idx, probe } => {
                    if idx < hops.len() {
                        let p = hops[idx];
                        self.job = BhJob::Route { hops, idx: idx + 1, probe };
                        return Ok(p);
                    }
                    match probe {
                        Some((u, port)) => {
                            self.at = u;
                            self.job = BhJob::ProbeOut { u, port };
                        }
                        None => self.job = BhJob::Idle,
                    }
                }
                BhJob::ProbeOut { u, port } => {
                    self.job = BhJob::ProbeBack { u, port };
                    return Ok(if is_explorer { port } else { 0 });
                }
                BhJob::ProbeBack { u, port } => {
                    self.job = BhJob::ProbeJudge { u, port };
                    // The explorer walks back the way it came in; if the
                    // target was the hole it is already gone and this is moot.
                    return Ok(if is_explorer { input.arrival_port } else { 0 });
                }
                BhJob::ProbeJudge { u, port } => {
                    let explorer = self.explorer().expect("at least one walker");
                    let here = input.colocated.iter().any(|(id, _)| *id == explorer);
                    if is_explorer || here {
                        // Survived: adopt its observation.
                        let (wdeg, warr, marked) = if is_explorer {
                            self.scratch.take().ok_or("missing probe observation")?
                        } else {
                            input
                                .others()
                                .find_map(|(id, m)| match m {
                                    AgentMemory::Cautious(cm) if id == explorer => cm.scratch,
                                    _ => None,
                                })
                                .ok_or("missing explorer observation")?
                        };
                        if marked {
                            self.map.add_cross(u, port, 0, warr);
                            self.job = BhJob::Idle;
                            continue;
                        }
                        self.enter_replays_or_adopt(u, port, wdeg, warr);
                        continue;
                    }
                    // Explorer destroyed: the probed port leads to the hole.
                    self.map.block(u, port);
                    self.known_dead.insert(explorer);
                    is_explorer = Some(self.me) == self.explorer();
                    if self.claim.is_none() {
                        self.claim =
                            Some(ClaimRecord { round: self.round, claim: BbhClaim::Behind(port) });
                    }
                    if self.followers_alive() == 0 {
                        // Lone survivor: continue solo with the current map.
                        self.lone = Some(Box::new(MapWalk::from_map(self.map.clone(), self.at)));
                        let w = self.lone.as_ref().unwrap();
                        return Ok(w.planned());
                    }
                    self.job = BhJob::Idle;
                }
                BhJob::Replays(mut st) => {
                    if st.idx < st.route.len() {
                        let first = !st.explorer_out;
                        st.explorer_out = true;
                        let p = st.route[st.idx];
                        st.idx += 1;
                        let rides = st.explorer_rides;
                        self.job = BhJob::Replays(st);
                        // The explorer makes one move back onto the candidate
                        // at episode start, then parks until the group comes
                        // to it; when the whole group travels (a ToW leg
                        // without replays) it walks like everyone else.
                        let port = if is_explorer && !rides {
                            if first {
                                self.probe_port_of_job()
                            } else {
                                0
                            }
                        } else {
                            p
                        };
                        return Ok(port);
                    }
                    // Route exhausted: phase transition.
                    match st.phase.clone() {
                        RPhase::ToHome => {
                            self.start_next_replay(&mut st, None);
                            self.job = BhJob::Replays(st);
                        }
                        RPhase::ToX(x) => {
                            // Replay landed: if the explorer and the follower
                            // block are together, the candidate is x.
                            let together = if is_explorer {
                                input
                                    .others()
                                    .any(|(id, _)| self.walkers.contains(&id) && !self.known_dead.contains(&id))
                            } else {
                                let explorer = self.explorer().expect("walker");
                                input.colocated.iter().any(|(id, _)| *id == explorer)
                            };
                            if together {
                                self.map.add_cross(st.u, st.port, x, st.warr);
                                self.at = x;
                                self.job = BhJob::Idle;
                                continue;
                            }
                            st.phase = RPhase::BackFromX(x);
                            st.route = self
                                .map
                                .root_path(x)
                                .iter()
                                .rev()
                                .map(|&(_, inp)| inp)
                                .collect();
                            st.idx = 0;
                            self.job = BhJob::Replays(st);
                        }
                        RPhase::BackFromX(x) => {
                            self.start_next_replay(&mut st, Some(x));
                            self.job = BhJob::Replays(st);
                        }
                        RPhase::ToW => {
                            self.job = BhJob::Idle;
                        }
                    }
                }
            }
        }
    }

    /// All walkers tick the same group state from the same information, so
    /// merging only needs the death record.
    fn absorb(&mut self, other: &CautiousMemory) {
        self.known_dead.extend(other.known_dead.iter().copied());
    }

    fn probe_port_of_job(&self) -> Port {
        match &self.job {
            BhJob::Replays(st) => st.port,
            _ => 0,
        }
    }

    fn seal(self) -> AgentMemory {
        AgentMemory::Cautious(Box::new(self))
    }
}
