//! Trivial programs used by engine tests and the suspicious-set oracle.

use crate::engine::{AgentId, AgentProgram, RoundInput};
use crate::graph::Port;
use crate::protocols::AgentMemory;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IdleMemory {
    pub steps_taken: u32,
    pub stop_at_step: u32,
}

/// Everyone stays at home forever.
pub struct IdleProgram;

impl AgentProgram for IdleProgram {
    fn init(&self, ids: &[AgentId]) -> Vec<AgentMemory> {
        ids.iter()
            .map(|_| AgentMemory::Idle(IdleMemory { steps_taken: 0, stop_at_step: 0 }))
            .collect()
    }

    fn decide(&self, input: &RoundInput<'_>) -> Result<(Port, AgentMemory), String> {
        Ok((0, input.own_memory().clone()))
    }
}

/// Each agent walks a right-hand walk (port 1 first, then "continue" at each
/// node) until it has taken its configured number of steps, then parks.
pub struct MarchProgram {
    /// Per agent rank: stop after this many steps.
    pub stop_at_step: Vec<u32>,
}

impl AgentProgram for MarchProgram {
    fn init(&self, ids: &[AgentId]) -> Vec<AgentMemory> {
        ids.iter()
            .enumerate()
            .map(|(rank, _)| {
                AgentMemory::Idle(IdleMemory {
                    steps_taken: 0,
                    stop_at_step: self.stop_at_step.get(rank).copied().unwrap_or(0),
                })
            })
            .collect()
    }

    fn decide(&self, input: &RoundInput<'_>) -> Result<(Port, AgentMemory), String> {
        let AgentMemory::Idle(mem) = input.own_memory() else {
            return Err("march program expects idle memory".into());
        };
        let mut mem = mem.clone();
        if mem.steps_taken >= mem.stop_at_step {
            return Ok((0, AgentMemory::Idle(mem)));
        }
        mem.steps_taken += 1;
        let port = if input.arrival_port == 0 {
            1
        } else {
            (input.arrival_port % input.degree) + 1
        };
        Ok((port, AgentMemory::Idle(mem)))
    }
}
