//! End-to-end behavior of the path/tree/ring pattern programs.

use bbhsim::adversary::{benign, first_contact, scripted, AdversarySpec, Predicate};
use bbhsim::engine::{run, Round};
use bbhsim::generators::{build_path, build_ring, build_tree};
use bbhsim::graph::decompose;
use bbhsim::protocols::programs::{Algorithm, Program, ProgramSpec};
use bbhsim::verify::{
    check_coverage, check_survivor_knowledge, model_check, CoverageSpec, CoverageTarget,
    ModelCheckCfg, Verdict,
};
use std::collections::BTreeSet;

fn program(algo: Algorithm, inst: &bbhsim::graph::Instance) -> Program {
    Program::new(&ProgramSpec { algorithm: algo, n_known: None, k: None }, inst).unwrap()
}

fn ring_program(inst: &bbhsim::graph::Instance, n: usize) -> Program {
    Program::new(&ProgramSpec { algorithm: Algorithm::Ring4, n_known: Some(n), k: None }, inst)
        .unwrap()
}

/// Benign phase boundaries: all pattern agents back home at each phase end.
#[test]
fn benign_path6_phase_boundaries_and_coverage() {
    let inst = build_path(5, 0, None, 6).unwrap();
    let prog = program(Algorithm::Path6, &inst);
    let mut adv = benign();
    let (trace, world) = run(&inst, &prog, &mut adv, 200).unwrap();
    assert_eq!(world.destruction_time, None);
    assert_eq!(world.alive_count(), 6);
    // Phase i occupies 10*2^i - 7 rounds: boundaries at 13, 46, 112...
    for (i, boundary) in [(1u32, 13u64), (2, 46), (3, 119)] {
        let rec = &trace.rounds[(boundary - 1) as usize];
        for agent in 0..6 {
            assert_eq!(
                rec.positions.get(&agent),
                Some(&0),
                "agent {agent} home at end of phase {i} (round {boundary})"
            );
        }
    }
    // Every node visited (budget 4 covers the whole 5-path from phase 2 on).
    for v in 0..5 {
        assert!(!world.ledger[v].is_empty(), "node {v} visited");
    }
    // Whole-graph window coverage in steady state.
    let decomp = decompose(&inst);
    let spec = CoverageSpec { target: CoverageTarget::WholeGraph, warmup: 46, window: 70 };
    assert!(check_coverage(&world.ledger, 200, &decomp, None, &spec).passed());
}

/// The five-round law, read off the trace: in every benign sub-phase the
/// leader pair advances exactly one walk edge per 5 rounds.
#[test]
fn five_round_law_on_benign_paths() {
    for n in [4usize, 8, 16] {
        let inst = build_path(n, 0, None, 6).unwrap();
        let prog = program(Algorithm::Path6, &inst);
        let mut adv = benign();
        let horizon = 400;
        let (trace, _) = run(&inst, &prog, &mut adv, horizon).unwrap();
        // agent 3 is L outbound: its position at the start of sub-phase
        // round 1 equals the pattern front; verify the front advances by
        // exactly one edge per completed sub-phase of phase 1 and 2.
        for (phase, start, budget) in [(1u32, 1u64, 2u64), (2, 14, 4), (3, 47, 8)] {
            let _ = phase;
            // Walk on a path from home 0: walk index == node index while
            // index < n-1 (before bouncing).
            let make_end = start + 1;
            // Front after make_pattern is at walk index 1.
            let mut front = 1u64;
            let subphases = 2 * (budget - 1);
            for sp in 0..subphases {
                let sp_end_round = make_end + 5 * (sp + 1);
                if sp_end_round > horizon {
                    break;
                }
                let outbound = sp < budget - 1;
                front = if outbound { front + 1 } else { front - 1 };
                // The walk bounces at the path end.
                let period = 2 * (n as u64 - 1);
                let fm = front % period;
                let expected_node = if fm <= n as u64 - 1 { fm } else { period - fm } as usize;
                let rec = &trace.rounds[(sp_end_round - 1) as usize];
                // Exactly two agents stand on the front node at sub-phase end
                // (the leader pair).
                let on_front =
                    rec.positions.values().filter(|&&p| p == expected_node).count();
                assert!(
                    on_front >= 2,
                    "n={n} subphase {sp}: front pair at node {expected_node} (round {sp_end_round}), got {:?}",
                    rec.positions
                );
            }
        }
    }
}

/// Paper: first activation on L entering 𝔟 destroys exactly the prober.
#[test]
fn first_contact_destroys_the_leader_probe() {
    let inst = build_path(6, 0, Some(3), 4).unwrap();
    let prog = program(Algorithm::Path4, &inst);
    let mut adv = first_contact();
    let (trace, world) = run(&inst, &prog, &mut adv, 300).unwrap();
    let td = world.destruction_time.expect("the pattern reaches node 3");
    let rec = &trace.rounds[(td - 1) as usize];
    assert_eq!(rec.destroyed, vec![3], "only the leader (rank 3) dies probing");
    // Survivors keep sweeping the home component; the black hole is never
    // re-entered.
    assert!(world.ledger[3].iter().all(|&r| r <= td));
    for v in 0..3 {
        let last = *world.ledger[v].last().unwrap();
        assert!(last > 290, "node {v} still being swept at the end");
    }
    // Survivor knowledge (claims checked against ground truth).
    let schedule: BTreeSet<Round> = trace.activation_rounds().into_iter().collect();
    let v = check_survivor_knowledge(&inst, &prog, &schedule, 300);
    assert!(matches!(v, Verdict::Pass), "{v:?}");
}

/// Always-active adversary: the black hole behaves classically; the pattern
/// loses its leader on first contact and the rest resolve.
#[test]
fn always_active_path4() {
    let inst = build_path(5, 0, Some(2), 4).unwrap();
    let prog = program(Algorithm::Path4, &inst);
    let mut adv = bbhsim::adversary::always_active();
    let (trace, world) = run(&inst, &prog, &mut adv, 200).unwrap();
    assert!(world.destruction_time.is_some());
    let schedule: BTreeSet<Round> = trace.activation_rounds().into_iter().collect();
    let v = check_survivor_knowledge(&inst, &prog, &schedule, 200);
    assert!(matches!(v, Verdict::Pass), "{v:?}");
    // ANY_COMPONENT coverage: survivors sweep some component perpetually.
    let decomp = decompose(&inst);
    let spec = CoverageSpec { target: CoverageTarget::AnyComponent, warmup: 100, window: 30 };
    assert!(check_coverage(&world.ledger, 200, &decomp, inst.bbh, &spec).passed());
}

/// Scripted mid-subphase activations: knowledge within 5 rounds, for every
/// relevant round of the first few phases.
#[test]
fn scripted_single_activations_yield_knowledge() {
    let inst = build_path(6, 0, Some(2), 4).unwrap();
    let prog = program(Algorithm::Path4, &inst);
    for r in 1..=60u64 {
        let schedule: BTreeSet<Round> = [r].into_iter().collect();
        let v = check_survivor_knowledge(&inst, &prog, &schedule, 250);
        assert!(
            matches!(v, Verdict::Pass),
            "activation at round {r}: {v:?}"
        );
    }
}

/// Benign ring: the pattern laps the ring; ledger period divides 5n.
#[test]
fn benign_ring_laps() {
    let inst = build_ring(6, 0, None, 4).unwrap();
    let prog = ring_program(&inst, 6);
    let mut adv = benign();
    let (_, world) = run(&inst, &prog, &mut adv, 200).unwrap();
    for v in 0..6 {
        let visits = &world.ledger[v];
        assert!(visits.len() >= 3, "node {v} visited repeatedly: {visits:?}");
        // In steady state, consecutive pattern visits are 5n rounds apart
        // for the leader and the rest of the pattern trails within the lap.
        let last = visits[visits.len() - 1];
        let prev = visits[visits.len() - 2];
        assert!(
            (last - prev) <= 5 * 6,
            "node {v} revisit gap {} exceeds 5n",
            last - prev
        );
    }
}

/// Ring with one destruction: the survivor sweep never re-enters the black
/// hole (its ledger freezes).
#[test]
fn ring_survivor_never_reenters_bbh() {
    let inst = build_ring(6, 0, Some(3), 4).unwrap();
    let prog = ring_program(&inst, 6);
    let mut adv = first_contact();
    let (trace, world) = run(&inst, &prog, &mut adv, 400).unwrap();
    let td = world.destruction_time.expect("destruction");
    assert!(world.ledger[3].iter().all(|&r| r <= td), "ledger[bbh] frozen");
    let schedule: BTreeSet<Round> = trace.activation_rounds().into_iter().collect();
    assert!(matches!(check_survivor_knowledge(&inst, &prog, &schedule, 400), Verdict::Pass));
    // All five safe nodes keep being visited.
    for v in [0usize, 1, 2, 4, 5] {
        let last = *world.ledger[v].last().unwrap();
        assert!(last > 380, "node {v} swept perpetually");
    }
}

/// Star tree with 6 agents, black hole at a leaf, trigger adversary.
#[test]
fn tree6_star_leaf_bbh() {
    let inst = build_tree(5, &[(0, 1), (0, 2), (0, 3), (0, 4)], 0, Some(2), 6).unwrap();
    let prog = program(Algorithm::Tree6, &inst);
    let mut adv = first_contact();
    let (trace, world) = run(&inst, &prog, &mut adv, 400).unwrap();
    assert!(world.destruction_time.is_some());
    let schedule: BTreeSet<Round> = trace.activation_rounds().into_iter().collect();
    assert!(matches!(check_survivor_knowledge(&inst, &prog, &schedule, 400), Verdict::Pass));
    // Home component = everything but the leaf: all swept perpetually.
    for v in [0usize, 1, 3, 4] {
        let last = *world.ledger[v].last().unwrap();
        assert!(last > 380, "node {v} swept, ledger tail {last}");
    }
    assert!(world.ledger[2].iter().all(|&r| r <= world.destruction_time.unwrap() + 1));
}

/// The 6-agent rendezvous: far-side knower intercepts F1 on the black hole.
/// Scripted kill of the rear pair strands the leader pair beyond 𝔟.
#[test]
fn home6_far_side_rendezvous() {
    // Path 0-1-2-3-4-5, bbh at 1: kill F,I2 at node 1 while L,I1 are beyond.
    let inst = build_path(6, 0, Some(1), 6).unwrap();
    let prog = program(Algorithm::Path6, &inst);
    // Need an activation while the rear pair sits on node 1 and the leader
    // pair is past it. Use the trigger: first round in phase 2 where agents
    // are at the bbh after round 20 and the front is far.
    // Simpler: exhaustively try single activation rounds and require that at
    // least one round strands far-side survivors, and that HOME coverage
    // still passes for all of them.
    let decomp = decompose(&inst);
    let mut stranded_seen = false;
    for r in 14..=46u64 {
        let schedule: BTreeSet<Round> = [r].into_iter().collect();
        let mut adv = scripted(schedule.clone());
        let (trace, world) = match run(&inst, &prog, &mut adv, 900) {
            Ok(x) => x,
            Err(e) => panic!("round {r}: {e}"),
        };
        if world.destruction_time.is_none() {
            continue;
        }
        let v = check_survivor_knowledge(&inst, &prog, &schedule, 900);
        assert!(matches!(v, Verdict::Pass), "activation at {r}: {v:?}");
        // HOME component must be covered in the tail.
        let spec =
            CoverageSpec { target: CoverageTarget::HomeComponent, warmup: 700, window: 40 };
        let cv = check_coverage(&world.ledger, 900, &decomp, inst.bbh, &spec);
        assert!(cv.passed(), "activation at {r}: HOME coverage failed: {cv:?}");
        // Detect runs where some survivor ended up beyond the black hole.
        let far = trace.rounds[(world.destruction_time.unwrap() + 3) as usize]
            .positions
            .values()
            .any(|&p| p > 1);
        stranded_seen |= far;
    }
    assert!(stranded_seen, "some schedule strands far-side survivors");
}

/// Small exhaustive model check: 4-agent program on short paths.
#[test]
fn model_check_path4_small() {
    for n in [4usize, 5] {
        for bbh in 1..n {
            let inst = build_path(n, 0, Some(bbh), 4).unwrap();
            let prog = program(Algorithm::Path4, &inst);
            let branch_horizon = 46; // end of phase 2
            let cfg = ModelCheckCfg {
                branch_horizon,
                run_horizon: branch_horizon + 400,
                prune_irrelevant: true,
                max_branches: 2_000_000,
                coverage: Some(CoverageSpec {
                    target: CoverageTarget::AnyComponent,
                    warmup: branch_horizon + 300,
                    window: 4 * n as u64 + 10,
                }),
                require_knowledge: true,
            };
            let (v, stats) = model_check(&inst, &prog, &cfg);
            assert!(
                v.passed(),
                "n={n} bbh={bbh}: {v:?} (branches={}, leaves={})",
                stats.branches,
                stats.leaves
            );
        }
    }
}

/// Benign executions never set a black-hole claim.
#[test]
fn no_false_positives_benign() {
    for (n, bbh) in [(5usize, None), (6, Some(4))] {
        let inst = build_path(n, 0, bbh, 6).unwrap();
        let prog = program(Algorithm::Path6, &inst);
        let mut adv = benign();
        let (_, world) = run(&inst, &prog, &mut adv, 150).unwrap();
        for a in world.agents.iter() {
            assert!(a.memory.bbh_claim().is_none(), "benign run, no claims");
        }
    }
}

/// Identical runs produce identical traces; scripted({}) equals benign.
#[test]
fn determinism_and_empty_script() {
    let inst = build_path(7, 0, Some(4), 6).unwrap();
    let prog = program(Algorithm::Path6, &inst);
    let mut a1 = benign();
    let mut a2 = scripted(BTreeSet::new());
    let (t1, _) = run(&inst, &prog, &mut a1, 160).unwrap();
    let (t2, _) = run(&inst, &prog, &mut a2, 160).unwrap();
    assert_eq!(t1, t2);
    let mut a3 = bbhsim::adversary::build(&AdversarySpec::Trigger { pred: Predicate::Never });
    let (t3, _) = run(&inst, &prog, &mut a3, 160).unwrap();
    assert_eq!(t1, t3);
}
