//! Agent protocol state machines.
//!
//! All protocol memory lives in [`AgentMemory`]; the engine treats it as an
//! opaque value and only uses the small introspection hooks below (role tags
//! for rendering, black-hole claims and anchor claims for verification).

pub mod cautious;
pub mod idle_program;
pub mod lg;
pub mod pattern;
pub mod programs;
pub mod walk;

use crate::engine::Round;
use crate::graph::Port;
use serde::{Deserialize, Serialize};

/// Where an agent believes the black hole is, relative to its own position
/// at the start of the round in which the claim was recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BbhClaim {
    /// The node the agent occupied when the claim was set.
    Here,
    /// The neighbor behind this port of the node the agent occupied when the
    /// claim was set.
    Behind(Port),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub round: Round,
    pub claim: BbhClaim,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AgentMemory {
    Idle(idle_program::IdleMemory),
    Pattern(Box<pattern::PatternMemory>),
    Lg(Box<lg::LgMemory>),
    Marker(MarkerMemory),
    Cautious(Box<cautious::CautiousMemory>),
}

impl AgentMemory {
    /// Short role letter(s) for time-diagram rendering.
    pub fn role_tag(&self) -> String {
        match self {
            AgentMemory::Idle(_) => ".".into(),
            AgentMemory::Pattern(m) => m.role_tag(),
            AgentMemory::Lg(m) => m.role_tag(),
            AgentMemory::Marker(_) => "M".into(),
            AgentMemory::Cautious(m) => m.role_tag(),
        }
    }

    /// The agent's belief about the black hole position, if any.
    pub fn bbh_claim(&self) -> Option<ClaimRecord> {
        match self {
            AgentMemory::Idle(_) | AgentMemory::Marker(_) => None,
            AgentMemory::Pattern(m) => m.claim,
            AgentMemory::Lg(m) => m.claim,
            AgentMemory::Cautious(m) => m.claim,
        }
    }

    /// Port this agent permanently blocks at its current node, if it has
    /// settled as an anchor.
    pub fn anchor_claim(&self) -> Option<Port> {
        match self {
            AgentMemory::Pattern(m) => m.anchored,
            AgentMemory::Lg(m) => m.anchored,
            _ => None,
        }
    }

    /// Current large-group membership view `(generation, members)`.
    pub fn lg_view(&self) -> Option<(u32, Vec<crate::engine::AgentId>)> {
        match self {
            AgentMemory::Lg(m) => m.group_view(),
            _ => None,
        }
    }
}

/// The marker never moves; its presence makes home a marked node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MarkerMemory {
    pub home_degree: usize,
}
