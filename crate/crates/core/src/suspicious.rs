//! Brute-force suspicious-set oracle.
//!
//! The suspicious set S_a(t) of an alive agent `a` holds every black-hole
//! position (plus the no-hole possibility) for which some activation
//! schedule produces exactly the observation history `a` has at the start
//! of round `t`. Computed by exhaustively re-running the program on every
//! candidate instance, branching on activation choices and pruning branches
//! the moment `a`'s inputs diverge from the target history.

use crate::engine::{step, AgentId, AgentProgram, Round, WorldState};
use crate::graph::{Instance, NodeId};
use crate::protocols::AgentMemory;
use std::collections::{BTreeMap, BTreeSet};

/// One observed round: arrival port and co-located (id, memory) list; the
/// degree is compared separately against the candidate graph.
type HistoryRow = (usize, Vec<(AgentId, AgentMemory)>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuspiciousSet {
    pub agent: AgentId,
    pub t: Round,
    pub nodes: BTreeSet<NodeId>,
    /// The instance without a black hole is also consistent.
    pub no_hole: bool,
    /// Consistent candidates whose benign continuation diverges from the
    /// real one within the comparison window (flagged, not excluded).
    pub suffix_divergent: BTreeSet<NodeId>,
}

struct NullAdv(bool);
impl crate::adversary::Adversary for NullAdv {
    fn decide(&mut self, _v: &crate::adversary::AdversaryView<'_>) -> bool {
        self.0
    }
}

fn history_row(world: &WorldState, agent: AgentId) -> Option<HistoryRow> {
    let me = world.agents.iter().find(|a| a.id == agent && a.status.is_alive())?;
    let colocated: Vec<(AgentId, AgentMemory)> = world
        .alive()
        .filter(|a| a.position == me.position)
        .map(|a| (a.id, a.memory.clone()))
        .collect();
    Some((me.arrival_port, colocated))
}

/// DFS over activation schedules on a candidate instance, checking whether
/// agent `agent` can see exactly `target` and be alive at round `t`.
fn consistent(
    cand: &Instance,
    program: &dyn AgentProgram,
    target: &[Vec<u8>],
    degrees: &[usize],
    t: Round,
    agent: AgentId,
) -> Option<Vec<Round>> {
    fn dfs(
        cand: &Instance,
        program: &dyn AgentProgram,
        target: &[Vec<u8>],
        degrees: &[usize],
        t: Round,
        agent: AgentId,
        world: WorldState,
        sched: &mut Vec<Round>,
    ) -> bool {
        let r = world.round;
        if r >= t {
            return world.agents.iter().any(|a| a.id == agent && a.status.is_alive());
        }
        // Compare this round's observation.
        match history_row(&world, agent) {
            Some(row) => {
                let me = world.agents.iter().find(|a| a.id == agent).unwrap();
                let deg = cand.graph.degree(me.position);
                if deg != degrees[(r - 1) as usize]
                    || encode_row(&row) != target[(r - 1) as usize]
                {
                    return false;
                }
            }
            None => return false,
        }
        for activate in [false, true] {
            if activate && cand.bbh.is_none() {
                break;
            }
            let mut w = world.clone();
            let mut adv = NullAdv(activate);
            if step(cand, program, &mut adv, &mut w).is_err() {
                continue;
            }
            if activate {
                sched.push(r);
            }
            if dfs(cand, program, target, degrees, t, agent, w, sched) {
                return true;
            }
            if activate {
                sched.pop();
            }
        }
        false
    }
    let world = WorldState::initial(cand, program);
    let mut sched = Vec::new();
    if dfs(cand, program, target, degrees, t, agent, world, &mut sched) {
        Some(sched)
    } else {
        None
    }
}

fn encode_row(row: &HistoryRow) -> Vec<u8> {
    let (arr, col) = row;
    let mut s = format!("a{arr}|");
    for (id, mem) in col {
        s.push_str(&format!("{id}:{mem:?};"));
    }
    s.into_bytes()
}

/// The suspicious set of `agent` at the start of round `t`, for the
/// execution of `program` on `instance` under `schedule`.
///
/// `suffix_window` > 0 additionally compares the benign continuations of
/// consistent candidates against the real one for that many rounds and
/// flags divergent candidates.
pub fn suspicious_set(
    instance: &Instance,
    program: &dyn AgentProgram,
    schedule: &BTreeSet<Round>,
    t: Round,
    agent: AgentId,
    suffix_window: Round,
) -> Option<SuspiciousSet> {
    // Record the real history, including per-round degrees.
    let mut world = WorldState::initial(instance, program);
    let mut target = Vec::new();
    let mut degrees = Vec::new();
    while world.round < t {
        let row = history_row(&world, agent)?;
        let me = world.agents.iter().find(|a| a.id == agent).unwrap();
        degrees.push(instance.graph.degree(me.position));
        target.push(encode_row(&row));
        let mut adv = NullAdv(schedule.contains(&world.round));
        step(instance, program, &mut adv, &mut world).ok()?;
    }
    if !world.agents.iter().any(|a| a.id == agent && a.status.is_alive()) {
        return None;
    }

    let mut nodes = BTreeSet::new();
    let mut suffix_divergent = BTreeSet::new();
    let n = instance.graph.node_count();
    for cand_bbh in 0..n {
        if cand_bbh == instance.home {
            continue;
        }
        let cand = Instance::new(instance.graph.clone(), instance.k, instance.home, Some(cand_bbh))
            .expect("candidate instance");
        if let Some(sched) = consistent(&cand, program, &target, &degrees, t, agent) {
            nodes.insert(cand_bbh);
            if suffix_window > 0
                && !benign_suffix_matches(instance, &cand, program, schedule, &sched, t, suffix_window)
            {
                suffix_divergent.insert(cand_bbh);
            }
        }
    }
    let no_cand =
        Instance::new(instance.graph.clone(), instance.k, instance.home, None).expect("instance");
    let no_hole = consistent(&no_cand, program, &target, &degrees, t, agent).is_some();
    Some(SuspiciousSet { agent, t, nodes, no_hole, suffix_divergent })
}

/// Compares the benign continuations (from round t) of the real execution
/// and a candidate's witnessing execution, over a bounded window.
fn benign_suffix_matches(
    real: &Instance,
    cand: &Instance,
    program: &dyn AgentProgram,
    real_sched: &BTreeSet<Round>,
    cand_sched: &[Round],
    t: Round,
    window: Round,
) -> bool {
    let run_to = |inst: &Instance, sched: &BTreeSet<Round>| -> Option<Vec<BTreeMap<AgentId, NodeId>>> {
        let mut world = WorldState::initial(inst, program);
        let mut positions = Vec::new();
        while world.round < t + window {
            let activate = world.round < t && sched.contains(&world.round);
            let mut adv = NullAdv(activate);
            step(inst, program, &mut adv, &mut world).ok()?;
            if world.round > t {
                positions.push(world.alive().map(|a| (a.id, a.position)).collect());
            }
        }
        Some(positions)
    };
    let a = run_to(real, real_sched);
    let b = run_to(cand, &cand_sched.iter().copied().collect());
    match (a, b) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    }
}
