use bbhsim::adversary::{build, AdversarySpec, Predicate};
use bbhsim::engine::{step, WorldState};
use bbhsim::generators::build_random_bounded;
use bbhsim::protocols::programs::{Algorithm, Program, ProgramSpec};
use bbhsim::protocols::AgentMemory;

fn main() {
    let inst = build_random_bounded(10, 3, 4, 0, Some(5), 12).unwrap();
    println!("edges {:?} bbh=5", inst.graph.edge_list());
    let prog = Program::new(&ProgramSpec { algorithm: Algorithm::Graph3d3, n_known: None, k: None }, &inst).unwrap();
    let mut adv = build(&AdversarySpec::Trigger { pred: Predicate::Relevant });
    let mut world = WorldState::initial(&inst, &prog);
    loop {
        let r = world.round;
        if r > 350 { break; }
        if (325..=350).contains(&r) {
            let dump: Vec<String> = world.agents.iter().filter(|a| a.status.is_alive()).map(|a| {
                match &a.memory {
                    AgentMemory::Lg(m) => format!("a{}@{}:{} {}", a.id, a.position, a.memory.role_tag(), m.debug_job()),
                    _ => format!("a{}@{}:{}", a.id, a.position, a.memory.role_tag()),
                }
            }).collect();
            println!("r{r}: {dump:?}");
        }
        match step(&inst, &prog, &mut adv, &mut world) {
            Ok(rec) => {
                if !rec.destroyed.is_empty() { println!("  !! r{} destroyed {:?}", rec.round, rec.destroyed); }
                if (324..=329).contains(&rec.round) {
                    println!("  moves r{}: {:?}", rec.round, rec.moves.iter().collect::<Vec<_>>());
                }
            }
            Err(e) => { println!("ERR {e}"); break; }
        }
    }
}
