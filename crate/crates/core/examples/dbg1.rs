use bbhsim::adversary::benign;
use bbhsim::engine::run;
use bbhsim::generators::build_path;
use bbhsim::protocols::programs::{Algorithm, Program, ProgramSpec};

fn main() {
    let inst = build_path(9, 0, Some(4), 3).unwrap();
    let prog = Program::new(&ProgramSpec { algorithm: Algorithm::Path4, n_known: None, k: Some(3) }, &inst).unwrap();
    let mut adv = benign();
    let (trace, world) = run(&inst, &prog, &mut adv, 120).unwrap();
    for rec in trace.rounds.iter().take(50) {
        println!("r{:>3} pos={:?} roles={:?}", rec.round, rec.positions.iter().collect::<Vec<_>>(), rec.roles.values().collect::<Vec<_>>());
    }
    println!("alive={} ledger visits: {:?}", world.alive_count(), (0..9).map(|v| world.ledger[v].len()).collect::<Vec<_>>());
}
