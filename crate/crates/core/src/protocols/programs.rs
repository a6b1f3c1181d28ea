//! Program construction and dispatch: one [`Program`] value drives all
//! agents of a scenario, routing each agent's decisions to its protocol
//! state machine.

use crate::engine::{AgentId, AgentProgram, RoundInput};
use crate::graph::{Instance, Port};
use crate::protocols::cautious::CautiousMemory;
use crate::protocols::lg::LgMemory;
use crate::protocols::pattern::{PatternCfg, PatternMemory, Variant};
use crate::protocols::{AgentMemory, MarkerMemory};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Path6,
    Path4,
    Tree6,
    Tree4,
    Ring4,
    Graph3d3,
    BhDelta2,
}

impl Algorithm {
    /// Nominal agent count for an instance with maximum degree `delta`.
    pub fn default_k(&self, delta: usize) -> usize {
        match self {
            Algorithm::Path6 | Algorithm::Tree6 => 6,
            Algorithm::Path4 | Algorithm::Tree4 | Algorithm::Ring4 => 4,
            Algorithm::Graph3d3 => 3 * delta + 3,
            Algorithm::BhDelta2 => delta + 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ProgramSpec {
    pub algorithm: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_known: Option<usize>,
    /// Agent count override (for deliberate downgrades).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("{algorithm:?} needs at least {min} agents, got {k}")]
    TooFewAgents { algorithm: Algorithm, min: usize, k: usize },
    #[error("ring4 requires a ring instance and its true size")]
    NotARing,
    #[error("tree program requires a tree instance")]
    NotATree,
}

#[derive(Debug, Clone)]
pub struct Program {
    algorithm: Algorithm,
    k: usize,
    ring_n: Option<usize>,
}

impl Program {
    pub fn new(spec: &ProgramSpec, instance: &Instance) -> Result<Program, ProgramError> {
        let k = instance.k;
        let algorithm = spec.algorithm;
        let min = match algorithm {
            Algorithm::Graph3d3 => 6,
            Algorithm::BhDelta2 => 2,
            _ => 3,
        };
        if k < min {
            return Err(ProgramError::TooFewAgents { algorithm, min, k });
        }
        let ring_n = match algorithm {
            Algorithm::Ring4 => {
                let n = spec.n_known.unwrap_or(instance.graph.node_count());
                if !instance.graph.is_ring() || n != instance.graph.node_count() {
                    return Err(ProgramError::NotARing);
                }
                Some(n)
            }
            _ => None,
        };
        if matches!(algorithm, Algorithm::Tree6 | Algorithm::Tree4) && !instance.graph.is_tree() {
            return Err(ProgramError::NotATree);
        }
        Ok(Program { algorithm, k, ring_n })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    fn pattern_everyone(&self, sorted: &[AgentId], variant: Variant) -> Vec<AgentMemory> {
        let cfg = PatternCfg {
            variant,
            members: sorted.to_vec(),
            sg: 4.min(self.k),
            ring_n: self.ring_n,
            marker_id: None,
        };
        sorted
            .iter()
            .map(|&id| AgentMemory::Pattern(Box::new(PatternMemory::new(cfg.clone(), id))))
            .collect()
    }
}

impl AgentProgram for Program {
    fn init(&self, ids: &[AgentId]) -> Vec<AgentMemory> {
        assert_eq!(ids.len(), self.k);
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        match self.algorithm {
            Algorithm::Path6 | Algorithm::Tree6 => self.pattern_everyone(&sorted, Variant::Home),
            Algorithm::Path4 | Algorithm::Tree4 => self.pattern_everyone(&sorted, Variant::Any),
            Algorithm::Ring4 => self.pattern_everyone(&sorted, Variant::Ring),
            Algorithm::Graph3d3 => {
                let marker = *sorted.last().unwrap();
                let sg: Vec<AgentId> = sorted[..4].to_vec();
                let lg: Vec<AgentId> = sorted[4..sorted.len() - 1].to_vec();
                let sg_cfg = PatternCfg {
                    variant: Variant::GraphSg,
                    members: sg.clone(),
                    sg: 4,
                    ring_n: None,
                    marker_id: Some(marker),
                };
                sorted
                    .iter()
                    .map(|&id| {
                        if id == marker {
                            AgentMemory::Marker(MarkerMemory { home_degree: 0 })
                        } else if sg.contains(&id) {
                            AgentMemory::Pattern(Box::new(PatternMemory::new(sg_cfg.clone(), id)))
                        } else {
                            AgentMemory::Lg(Box::new(
                                LgMemory::new(lg.clone(), marker, id).with_sg(sg.clone()),
                            ))
                        }
                    })
                    .collect()
            }
            Algorithm::BhDelta2 => {
                let marker = *sorted.last().unwrap();
                let walkers: Vec<AgentId> = sorted[..sorted.len() - 1].to_vec();
                sorted
                    .iter()
                    .map(|&id| {
                        if id == marker {
                            AgentMemory::Marker(MarkerMemory { home_degree: 0 })
                        } else {
                            AgentMemory::Cautious(Box::new(CautiousMemory::new(
                                walkers.clone(),
                                marker,
                                id,
                            )))
                        }
                    })
                    .collect()
            }
        }
    }

    fn decide(&self, input: &RoundInput<'_>) -> Result<(Port, AgentMemory), String> {
        match input.own_memory() {
            AgentMemory::Pattern(pm) => pm.as_ref().clone().decide(input),
            AgentMemory::Marker(m) => Ok((0, AgentMemory::Marker(m.clone()))),
            AgentMemory::Lg(m) => m.as_ref().clone().decide(input),
            AgentMemory::Cautious(m) => m.as_ref().clone().decide(input),
            AgentMemory::Idle(m) => Ok((0, AgentMemory::Idle(m.clone()))),
        }
    }
}
