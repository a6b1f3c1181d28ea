//! The brute-force suspicious-set oracle and the pruning-equivalence check.

use bbhsim::engine::Round;
use bbhsim::generators::build_path;
use bbhsim::protocols::programs::{Algorithm, Program, ProgramSpec};
use bbhsim::suspicious::suspicious_set;
use bbhsim::verify::{model_check, ModelCheckCfg};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeSet;

fn path4(n: usize, bbh: Option<usize>) -> (bbhsim::graph::Instance, Program) {
    let inst = build_path(n, 0, bbh, 4).unwrap();
    let prog = Program::new(
        &ProgramSpec { algorithm: Algorithm::Path4, n_known: None, k: None },
        &inst,
    )
    .unwrap();
    (inst, prog)
}

#[test]
fn s1_is_everything_but_home() {
    for n in [4usize, 6, 8] {
        let (inst, prog) = path4(n, Some(2));
        for agent in 0..4 {
            let s = suspicious_set(&inst, &prog, &BTreeSet::new(), 1, agent, 0).unwrap();
            let expect: BTreeSet<usize> = (1..n).collect();
            assert_eq!(s.nodes, expect, "n={n} agent={agent}");
            assert!(s.no_hole);
        }
    }
}

#[test]
fn monotone_along_randomized_traces() {
    let mut rng = StdRng::seed_from_u64(99);
    for case in 0..100 {
        let n = 4 + (case % 4);
        let bbh = 1 + (case % (n - 1));
        let (inst, prog) = path4(n, Some(bbh));
        // Random schedule over the first rounds.
        let mut schedule: BTreeSet<Round> = BTreeSet::new();
        for r in 1..=12u64 {
            if rng.random_bool(0.15) {
                schedule.insert(r);
            }
        }
        let agent = rng.random_range(0..4);
        let mut prev: Option<BTreeSet<usize>> = None;
        for t in (1..=13u64).step_by(3) {
            let Some(s) = suspicious_set(&inst, &prog, &schedule, t, agent, 0) else {
                break; // agent destroyed: set undefined from here on
            };
            if let Some(p) = &prev {
                assert!(
                    s.nodes.is_subset(p),
                    "case {case}: S({t}) = {:?} not within {:?}",
                    s.nodes,
                    p
                );
            }
            prev = Some(s.nodes);
        }
    }
}

#[test]
fn benign_histories_keep_every_candidate() {
    // A hole that never activates is indistinguishable from no hole at all:
    // along a benign prefix the suspicious set never shrinks, traversed or
    // not.
    let (inst, prog) = path4(6, Some(4));
    for t in [1u64, 5, 9, 13] {
        let s = suspicious_set(&inst, &prog, &BTreeSet::new(), t, 3, 0).unwrap();
        let expect: BTreeSet<usize> = (1..6).collect();
        assert_eq!(s.nodes, expect, "t={t}");
        assert!(s.no_hole);
    }
}

#[test]
fn detector_set_collapses_to_the_true_hole() {
    // Once an agent pins the hole from an absence, the oracle agrees: its
    // suspicious set is exactly the true position (and no-hole impossible).
    let (inst, prog) = path4(5, Some(2));
    // Leader first enters node 2 in round 6 (phase 1, subphase 1, round 1
    // is round 3 of the run; it probes node 2 at round 3 and bounces; the
    // first entry happens at subphase round 1). Find it dynamically.
    let mut fire = None;
    {
        use bbhsim::engine::{step, WorldState};
        let mut world = WorldState::initial(&inst, &prog);
        let mut adv = bbhsim::adversary::benign();
        while world.round <= 60 {
            let mut w2 = world.clone();
            let mut probe = bbhsim::adversary::scripted([world.round].into_iter().collect());
            let rec = step(&inst, &prog, &mut probe, &mut w2).unwrap();
            if !rec.destroyed.is_empty() {
                fire = Some(world.round);
                break;
            }
            step(&inst, &prog, &mut adv, &mut world).unwrap();
        }
    }
    let fire = fire.unwrap();
    let schedule: BTreeSet<u64> = [fire].into_iter().collect();
    // The survivors at the front detect within a few rounds; by fire+4 the
    // rear agents heard it too (relay), and everyone's set is {2}.
    let s = suspicious_set(&inst, &prog, &schedule, fire + 4, 1, 0).unwrap();
    assert_eq!(s.nodes, [2usize].into_iter().collect::<BTreeSet<_>>());
    assert!(!s.no_hole, "a destruction was observed: some hole must exist");
}

#[test]
fn post_destruction_ambiguity_for_distant_survivors() {
    // Kill the leader probing the hole; the waiters' own histories cannot
    // distinguish nearby candidates for a while.
    let (inst, prog) = path4(6, Some(2));
    // Find the first relevant round.
    let mut fire = None;
    {
        use bbhsim::engine::{step, WorldState};
        let mut world = WorldState::initial(&inst, &prog);
        let mut adv = bbhsim::adversary::benign();
        while world.round <= 60 {
            let mut w2 = world.clone();
            let mut probe = bbhsim::adversary::scripted([world.round].into_iter().collect());
            let rec = step(&inst, &prog, &mut probe, &mut w2).unwrap();
            if !rec.destroyed.is_empty() {
                fire = Some(world.round);
                break;
            }
            step(&inst, &prog, &mut adv, &mut world).unwrap();
        }
    }
    let fire = fire.expect("pattern reaches the hole");
    let schedule: BTreeSet<Round> = [fire].into_iter().collect();
    // Shortly after the destruction, an agent that saw nothing yet still
    // holds several candidates.
    let s = suspicious_set(&inst, &prog, &schedule, fire + 1, 0, 0).unwrap();
    assert!(s.nodes.len() >= 2, "F has not heard anything yet: {:?}", s.nodes);
}

/// Relevance pruning never changes a verdict: exhaustive equality on every
/// small path instance.
#[test]
fn pruned_equals_unpruned_small() {
    for n in 3..=5usize {
        for bbh in (1..n).map(Some).chain([None]) {
            let (inst, prog) = path4(n, bbh);
            let horizon = 14;
            let base = ModelCheckCfg {
                branch_horizon: horizon,
                run_horizon: horizon,
                prune_irrelevant: true,
                max_branches: 10_000_000,
                coverage: None,
                require_knowledge: true,
            };
            let unpruned = ModelCheckCfg { prune_irrelevant: false, ..base.clone() };
            let (v1, s1) = model_check(&inst, &prog, &base);
            let (v2, s2) = model_check(&inst, &prog, &unpruned);
            assert_eq!(v1, v2, "n={n} bbh={bbh:?}");
            assert!(s2.branches >= s1.branches, "unpruned explores at least as much");
        }
    }
}
