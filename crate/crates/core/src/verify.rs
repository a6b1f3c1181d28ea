//! Verification oracles: coverage windows, survivor-knowledge checks,
//! destruction accounting, and a bounded exhaustive model checker over
//! black-hole activation schedules.

use crate::adversary::{scripted, Adversary, AdversaryView};
use crate::engine::{
    run, step, AgentId, AgentProgram, AnchorEvent, ExecutionTrace, Round, WorldState,
};
use crate::graph::{decompose, ComponentDecomposition, Instance, NodeId};
use crate::protocols::{BbhClaim, ClaimRecord};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Rounds after the first destruction within which some alive agent must
/// have held the black hole's exact position at a round boundary. Six is
/// the exact worst case under this engine's destruction rule (agents
/// leaving 𝔟 are destroyed too, so the adversary can erase each on-hole
/// knower at its departure move and defer the first off-hole detection by
/// one extra round). The property is cumulative: knowledge acquired within
/// the window counts even if its holder is later sacrificed, e.g. at the
/// waiter interception on the hole.
pub const KNOWLEDGE_WINDOW: Round = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageTarget {
    HomeComponent,
    AnyComponent,
    WholeGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageSpec {
    pub target: CoverageTarget,
    pub warmup: Round,
    pub window: Round,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { reason: String, schedule: Vec<Round> },
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// True iff every round-window of length `window` inside
/// `[warmup, horizon]` contains a visit.
fn node_window_covered(visits: &[Round], warmup: Round, horizon: Round, window: Round) -> bool {
    if horizon < warmup || window == 0 {
        return false;
    }
    let last_start = match (horizon + 1).checked_sub(window) {
        Some(s) if s >= warmup => s,
        _ => return true, // no full window fits: vacuous
    };
    let mut prev = warmup.saturating_sub(1);
    for &v in visits.iter().filter(|&&v| v >= warmup && v <= horizon) {
        if v > prev + window && prev + 1 <= last_start {
            return false;
        }
        prev = v;
    }
    // Tail: windows starting after the last visit.
    !(prev + 1 <= last_start && horizon > prev + window - 1)
}

/// PASS iff the spec's target is window-covered by the ledger.
pub fn check_coverage(
    ledger: &[Vec<Round>],
    horizon: Round,
    decomp: &ComponentDecomposition,
    bbh: Option<NodeId>,
    spec: &CoverageSpec,
) -> Verdict {
    if horizon < spec.warmup + 2 * spec.window {
        return Verdict::Inconclusive { reason: "horizon too short for coverage window".into() };
    }
    let target = if bbh.is_none() { CoverageTarget::WholeGraph } else { spec.target };
    let covered = |nodes: &[NodeId]| {
        nodes
            .iter()
            .all(|&v| node_window_covered(&ledger[v], spec.warmup, horizon, spec.window))
    };
    let ok = match target {
        CoverageTarget::HomeComponent => covered(decomp.home_component()),
        CoverageTarget::AnyComponent => decomp.components.iter().any(|c| covered(c)),
        CoverageTarget::WholeGraph => {
            let all: Vec<NodeId> = (0..ledger.len()).filter(|&v| Some(v) != bbh).collect();
            // With no black hole every node is required; with one present a
            // whole-graph check still only demands the safe nodes.
            covered(&all)
        }
    };
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail { reason: "coverage window violated".into(), schedule: vec![] }
    }
}

/// Resolves a claim recorded at `claim.round` to a concrete node, given the
/// positions in the trace (start-of-round position = end of previous round).
pub fn resolve_claim(
    trace: &ExecutionTrace,
    instance: &Instance,
    agent: AgentId,
    claim: &ClaimRecord,
) -> Option<NodeId> {
    let pos = if claim.round <= 1 {
        instance.home
    } else {
        let rec = trace.rounds.get((claim.round - 2) as usize)?;
        *rec.positions.get(&agent)?
    };
    match claim.claim {
        BbhClaim::Here => Some(pos),
        BbhClaim::Behind(p) => instance.graph.step(pos, p),
    }
}

/// Per-execution knowledge bookkeeping driven alongside a simulation.
#[derive(Debug, Default, Clone, PartialEq, Eq, Hash)]
struct KnowledgeTracker {
    resolved: BTreeMap<AgentId, NodeId>,
    /// First round at whose end an alive agent held a correct claim.
    first_live_knowledge: Option<Round>,
}

impl KnowledgeTracker {
    /// Called after a round executed; `pre_positions` are the start-of-round
    /// positions of the agents that were alive.
    fn observe(
        &mut self,
        instance: &Instance,
        world: &WorldState,
        round: Round,
        pre_positions: &BTreeMap<AgentId, NodeId>,
    ) -> Result<(), NodeId> {
        for a in world.agents.iter() {
            if let Some(ClaimRecord { round: r, claim }) = a.memory.bbh_claim() {
                if r == round {
                    let pos = pre_positions.get(&a.id).copied().unwrap_or(instance.home);
                    let node = match claim {
                        BbhClaim::Here => Some(pos),
                        BbhClaim::Behind(p) => instance.graph.step(pos, p),
                    };
                    if let Some(n) = node {
                        if Some(n) != instance.bbh {
                            return Err(n); // false claim
                        }
                        self.resolved.insert(a.id, n);
                    }
                }
            }
        }
        if self.first_live_knowledge.is_none() {
            if let Some(bbh) = instance.bbh {
                if self.alive_knower(world, bbh) {
                    self.first_live_knowledge = Some(round);
                }
            }
        }
        Ok(())
    }

    fn alive_knower(&self, world: &WorldState, bbh: NodeId) -> bool {
        world
            .alive()
            .any(|a| self.resolved.get(&a.id) == Some(&bbh))
    }

    fn knowledge_in_window(&self, td: Round) -> bool {
        self.first_live_knowledge
            .map(|r| r <= td + KNOWLEDGE_WINDOW)
            .unwrap_or(false)
    }
}

/// PASS iff within 5 rounds of the first destruction some alive agent's
/// claim names the true black hole, and no agent ever claims a wrong node.
/// Vacuously PASS on executions without destruction.
pub fn check_survivor_knowledge(
    instance: &Instance,
    program: &dyn AgentProgram,
    schedule: &BTreeSet<Round>,
    horizon: Round,
) -> Verdict {
    let mut adv = scripted(schedule.clone());
    let mut world = WorldState::initial(instance, program);
    let mut tracker = KnowledgeTracker::default();
    let sched: Vec<Round> = schedule.iter().copied().collect();
    while world.round <= horizon && world.alive_count() > 0 {
        let round = world.round;
        let pre: BTreeMap<AgentId, NodeId> =
            world.alive().map(|a| (a.id, a.position)).collect();
        if step(instance, program, &mut adv, &mut world).is_err() {
            return Verdict::Fail { reason: "protocol fault".into(), schedule: sched };
        }
        if let Err(n) = tracker.observe(instance, &world, round, &pre) {
            return Verdict::Fail {
                reason: format!("false black-hole claim at node {n}"),
                schedule: sched,
            };
        }
        if let Some(td) = world.destruction_time {
            if round == td + KNOWLEDGE_WINDOW && !tracker.knowledge_in_window(td) {
                return Verdict::Fail {
                    reason: "no live agent knew the black hole within the window".into(),
                    schedule: sched,
                };
            }
        }
    }
    if let Some(td) = world.destruction_time {
        if world.round <= td + KNOWLEDGE_WINDOW {
            if world.alive_count() == 0 {
                return Verdict::Fail { reason: "all agents destroyed".into(), schedule: sched };
            }
            return Verdict::Inconclusive { reason: "horizon ends inside the knowledge window".into() };
        }
    }
    Verdict::Pass
}

/// Exact destruction and anchor accounting for a finished run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CasualtyReport {
    pub destroyed: Vec<(AgentId, Round)>,
    pub anchors: Vec<AnchorEvent>,
    /// Destroyed agents attributed to each anchor event: everyone destroyed
    /// after the previous anchor placement, up to and including this one.
    pub per_anchor: Vec<(AnchorEvent, usize)>,
    pub free_survivors: usize,
}

pub fn casualty_report(trace: &ExecutionTrace, world: &WorldState) -> CasualtyReport {
    let mut destroyed = Vec::new();
    for rec in &trace.rounds {
        for &id in &rec.destroyed {
            destroyed.push((id, rec.round));
        }
    }
    let anchors = trace.anchor_events();
    let mut per_anchor = Vec::new();
    let mut prev = 0;
    for a in &anchors {
        let n = destroyed.iter().filter(|(_, r)| *r > prev && *r <= a.round).count();
        per_anchor.push((a.clone(), n));
        prev = a.round;
    }
    let free_survivors = world
        .alive()
        .filter(|a| a.memory.anchor_claim().is_none() && !matches!(a.memory, crate::protocols::AgentMemory::Marker(_)))
        .count();
    CasualtyReport { destroyed, anchors, per_anchor, free_survivors }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq, Eq)]
pub struct CheckStats {
    pub branches: u64,
    pub dedup_hits: u64,
    pub max_depth: u64,
    pub leaves: u64,
}

#[derive(Debug, Clone)]
pub struct ModelCheckCfg {
    /// Activation choices are explored for rounds `1..=branch_horizon`.
    pub branch_horizon: Round,
    /// Each branch is simulated to this round before evaluating verdicts.
    pub run_horizon: Round,
    /// Branch only on rounds where activating would destroy an agent.
    pub prune_irrelevant: bool,
    /// Abort with INCONCLUSIVE beyond this many explored branches.
    pub max_branches: u64,
    pub coverage: Option<CoverageSpec>,
    /// Require the survivor-knowledge property on every branch.
    pub require_knowledge: bool,
}

struct Searcher<'a> {
    instance: &'a Instance,
    program: &'a dyn AgentProgram,
    cfg: &'a ModelCheckCfg,
    decomp: ComponentDecomposition,
    seen: BTreeSet<u64>,
    stats: CheckStats,
}

struct NullAdversary(bool);

impl Adversary for NullAdversary {
    fn decide(&mut self, _view: &AdversaryView<'_>) -> bool {
        self.0
    }
}

enum Explored {
    AllPass,
    Failed(Verdict),
    Budget,
}

impl<'a> Searcher<'a> {
    /// Would an activation this round destroy anyone?
    fn relevant(&self, world: &WorldState) -> bool {
        let bbh = match self.instance.bbh {
            Some(b) => b,
            None => return false,
        };
        // Agents sitting on the black hole die regardless of their choice.
        if world.alive().any(|a| a.position == bbh) {
            return true;
        }
        // Otherwise we must look at intents: probe by stepping a clone.
        let mut w = world.clone();
        let mut adv = NullAdversary(true);
        match step(self.instance, self.program, &mut adv, &mut w) {
            Ok(rec) => !rec.destroyed.is_empty(),
            Err(_) => true,
        }
    }

    fn explore(
        &mut self,
        world: WorldState,
        tracker: KnowledgeTracker,
        schedule: Vec<Round>,
        depth: u64,
    ) -> Explored {
        self.stats.max_depth = self.stats.max_depth.max(depth);
        if self.stats.branches >= self.cfg.max_branches {
            return Explored::Budget;
        }
        let mut world = world;
        let mut tracker = tracker;
        let schedule = schedule;
        loop {
            if world.round > self.cfg.run_horizon || world.alive_count() == 0 {
                self.stats.leaves += 1;
                return match self.leaf_verdict(&world, &tracker, &schedule) {
                    Verdict::Pass => Explored::AllPass,
                    v => Explored::Failed(v),
                };
            }
            let round = world.round;
            let branching = round <= self.cfg.branch_horizon
                && self.instance.bbh.is_some()
                && (!self.cfg.prune_irrelevant || self.relevant(&world));
            if branching {
                self.stats.branches += 1;
                // Idle child first: failing schedules come out
                // lexicographically smallest.
                for activate in [false, true] {
                    let mut w = world.clone();
                    let mut tr = tracker.clone();
                    let mut sched = schedule.clone();
                    let pre: BTreeMap<AgentId, NodeId> =
                        w.alive().map(|a| (a.id, a.position)).collect();
                    let mut adv = NullAdversary(activate);
                    if activate {
                        sched.push(round);
                    }
                    if step(self.instance, self.program, &mut adv, &mut w).is_err() {
                        return Explored::Failed(Verdict::Fail {
                            reason: "protocol fault".into(),
                            schedule: sched,
                        });
                    }
                    if let Err(n) = tr.observe(self.instance, &w, round, &pre) {
                        return Explored::Failed(Verdict::Fail {
                            reason: format!("false black-hole claim at node {n}"),
                            schedule: sched,
                        });
                    }
                    if let Some(v) = self.mid_run_failure(&w, &tr, &sched) {
                        return Explored::Failed(v);
                    }
                    let key = dedup_key(&w, &tr);
                    if !self.seen.insert(key) {
                        self.stats.dedup_hits += 1;
                        continue;
                    }
                    match self.explore(w, tr, sched, depth + 1) {
                        Explored::AllPass => {}
                        other => return other,
                    }
                }
                return Explored::AllPass;
            }
            // Deterministic continuation (idle).
            let pre: BTreeMap<AgentId, NodeId> =
                world.alive().map(|a| (a.id, a.position)).collect();
            let mut adv = NullAdversary(false);
            if step(self.instance, self.program, &mut adv, &mut world).is_err() {
                return Explored::Failed(Verdict::Fail {
                    reason: "protocol fault".into(),
                    schedule,
                });
            }
            if let Err(n) = tracker.observe(self.instance, &world, round, &pre) {
                return Explored::Failed(Verdict::Fail {
                    reason: format!("false black-hole claim at node {n}"),
                    schedule,
                });
            }
            if let Some(v) = self.mid_run_failure(&world, &tracker, &schedule) {
                return Explored::Failed(v);
            }
        }
    }

    fn mid_run_failure(
        &self,
        world: &WorldState,
        tracker: &KnowledgeTracker,
        schedule: &[Round],
    ) -> Option<Verdict> {
        if world.alive_count() == 0 {
            return Some(Verdict::Fail {
                reason: "all agents destroyed".into(),
                schedule: schedule.to_vec(),
            });
        }
        if self.cfg.require_knowledge {
            if let Some(td) = world.destruction_time {
                if world.round == td + KNOWLEDGE_WINDOW + 1 && !tracker.knowledge_in_window(td) {
                    return Some(Verdict::Fail {
                        reason: "no live agent knew the black hole within the window".into(),
                        schedule: schedule.to_vec(),
                    });
                }
            }
        }
        None
    }

    fn leaf_verdict(
        &self,
        world: &WorldState,
        tracker: &KnowledgeTracker,
        schedule: &[Round],
    ) -> Verdict {
        if world.alive_count() == 0 {
            return Verdict::Fail {
                reason: "all agents destroyed".into(),
                schedule: schedule.to_vec(),
            };
        }
        if self.cfg.require_knowledge {
            if let Some(td) = world.destruction_time {
                if world.round > td + KNOWLEDGE_WINDOW && !tracker.knowledge_in_window(td) {
                    return Verdict::Fail {
                        reason: "no live agent knew the black hole within the window".into(),
                        schedule: schedule.to_vec(),
                    };
                }
            }
        }
        if let Some(spec) = &self.cfg.coverage {
            let horizon = world.round - 1;
            match check_coverage(&world.ledger, horizon, &self.decomp, self.instance.bbh, spec) {
                Verdict::Pass => {}
                Verdict::Fail { reason, .. } => {
                    return Verdict::Fail { reason, schedule: schedule.to_vec() }
                }
                v @ Verdict::Inconclusive { .. } => return v,
            }
        }
        Verdict::Pass
    }
}

fn dedup_key(world: &WorldState, tracker: &KnowledgeTracker) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    world.dedup_key().hash(&mut h);
    tracker.resolved.hash(&mut h);
    h.finish()
}

/// Exhaustively explores black-hole activation schedules.
pub fn model_check(
    instance: &Instance,
    program: &dyn AgentProgram,
    cfg: &ModelCheckCfg,
) -> (Verdict, CheckStats) {
    let decomp = decompose(instance);
    let mut searcher = Searcher {
        instance,
        program,
        cfg,
        decomp,
        seen: BTreeSet::new(),
        stats: CheckStats::default(),
    };
    let world = WorldState::initial(instance, program);
    let verdict = match searcher.explore(world, KnowledgeTracker::default(), Vec::new(), 0) {
        Explored::AllPass => Verdict::Pass,
        Explored::Failed(v) => v,
        Explored::Budget => Verdict::Inconclusive { reason: "branch budget exhausted".into() },
    };
    (verdict, searcher.stats)
}

/// Every anchored agent blocks a port that truly leads into the black hole,
/// and every home-component neighbor port of the black hole carries an
/// anchor at the end of the run.
pub fn check_anchor_coverage(instance: &Instance, world: &WorldState) -> Verdict {
    let bbh = match instance.bbh {
        Some(b) => b,
        None => return Verdict::Pass,
    };
    let decomp = decompose(instance);
    let mut anchored: BTreeSet<(NodeId, usize)> = BTreeSet::new();
    for a in world.alive() {
        if let Some(p) = a.memory.anchor_claim() {
            if instance.graph.step(a.position, p) != Some(bbh) {
                return Verdict::Fail {
                    reason: format!(
                        "anchor at node {} port {p} does not point at the black hole",
                        a.position
                    ),
                    schedule: vec![],
                };
            }
            anchored.insert((a.position, p));
        }
    }
    if world.destruction_time.is_none() {
        return Verdict::Pass;
    }
    for &u in decomp.home_component() {
        if let Some(p) = instance.graph.port_towards(u, bbh) {
            if !anchored.contains(&(u, p)) {
                return Verdict::Fail {
                    reason: format!("home-component port ({u},{p}) into the black hole unanchored"),
                    schedule: vec![],
                };
            }
        }
    }
    Verdict::Pass
}

/// No round may have the entire live membership of some LG generation
/// standing on the black hole.
pub fn check_lg_safety(
    instance: &Instance,
    program: &dyn AgentProgram,
    schedule: &BTreeSet<Round>,
    horizon: Round,
) -> Verdict {
    let bbh = match instance.bbh {
        Some(b) => b,
        None => return Verdict::Pass,
    };
    let mut adv = scripted(schedule.clone());
    let mut world = WorldState::initial(instance, program);
    let sched: Vec<Round> = schedule.iter().copied().collect();
    while world.round <= horizon && world.alive_count() > 0 {
        if step(instance, program, &mut adv, &mut world).is_err() {
            return Verdict::Fail { reason: "protocol fault".into(), schedule: sched };
        }
        let mut groups: BTreeMap<(u32, Vec<AgentId>), Vec<NodeId>> = BTreeMap::new();
        for a in world.alive() {
            if let Some(view) = a.memory.lg_view() {
                groups.entry(view).or_default().push(a.position);
            }
        }
        for ((gen, members), positions) in groups {
            let live_members = members
                .iter()
                .filter(|id| world.agents.iter().any(|a| a.id == **id && a.status.is_alive()))
                .count();
            if positions.len() == live_members && !positions.is_empty() && positions.iter().all(|&p| p == bbh)
            {
                return Verdict::Fail {
                    reason: format!("entire LG({gen}) stands on the black hole"),
                    schedule: sched,
                };
            }
        }
    }
    Verdict::Pass
}

/// Re-simulates a trace's activation schedule and confirms the records match.
pub fn replay_matches(
    instance: &Instance,
    program: &dyn AgentProgram,
    trace: &ExecutionTrace,
) -> bool {
    let schedule: BTreeSet<Round> = trace.activation_rounds().into_iter().collect();
    let horizon = trace.rounds.last().map(|r| r.round).unwrap_or(1);
    let mut adv = scripted(schedule);
    match run(instance, program, &mut adv, horizon) {
        Ok((t2, _)) => t2 == *trace,
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::build_path;
    use crate::protocols::idle_program::IdleProgram;

    #[test]
    fn window_coverage_logic() {
        // visits every 3 rounds, window 3: covered
        let visits: Vec<Round> = (1..=30).step_by(3).collect();
        assert!(node_window_covered(&visits, 1, 30, 4));
        assert!(!node_window_covered(&visits, 1, 30, 2));
        // no visits at all
        assert!(!node_window_covered(&[], 1, 30, 5));
        // tail gap: visits stop at 10, horizon 30
        let head: Vec<Round> = (1..=10).collect();
        assert!(!node_window_covered(&head, 1, 30, 5));
    }

    #[test]
    fn coverage_monotone_in_window() {
        let inst = build_path(4, 0, None, 2).unwrap();
        let program = IdleProgram;
        let mut adv = crate::adversary::benign();
        let (_, world) = run(&inst, &program, &mut adv, 40).unwrap();
        let decomp = decompose(&inst);
        // idle agents cover only home: whole-graph fails at any window
        let small = CoverageSpec { target: CoverageTarget::WholeGraph, warmup: 1, window: 5 };
        let big = CoverageSpec { target: CoverageTarget::WholeGraph, warmup: 1, window: 15 };
        assert!(!check_coverage(&world.ledger, 40, &decomp, None, &small).passed());
        assert!(!check_coverage(&world.ledger, 40, &decomp, None, &big).passed());
    }

    #[test]
    fn benign_model_check_single_branch() {
        let inst = build_path(4, 0, None, 2).unwrap();
        let program = IdleProgram;
        let cfg = ModelCheckCfg {
            branch_horizon: 10,
            run_horizon: 12,
            prune_irrelevant: true,
            max_branches: 1000,
            coverage: None,
            require_knowledge: false,
        };
        let (v, stats) = model_check(&inst, &program, &cfg);
        assert!(v.passed());
        assert_eq!(stats.branches, 0, "no black hole, no branching");
    }
}
