//! Adversary strategies controlling black-hole activation.
//!
//! The adversary is omniscient: it sees the full world, including the moves
//! agents intend to make this round, before deciding whether to activate.

use crate::engine::{AgentId, Round};
use crate::graph::NodeId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Everything the adversary can see when deciding a round.
pub struct AdversaryView<'a> {
    pub round: Round,
    pub bbh: Option<NodeId>,
    pub home: NodeId,
    /// Start-of-round positions of alive agents.
    pub positions: &'a [(AgentId, NodeId)],
    /// Where each alive agent will be if it moves unhindered this round.
    pub intents: &'a [(AgentId, NodeId)],
    pub destroyed_count: usize,
}

impl AdversaryView<'_> {
    pub fn any_at_bbh(&self) -> bool {
        match self.bbh {
            Some(b) => self.positions.iter().any(|&(_, p)| p == b),
            None => false,
        }
    }

    pub fn any_entering_bbh(&self) -> bool {
        match self.bbh {
            Some(b) => self
                .positions
                .iter()
                .zip(self.intents)
                .any(|(&(_, pos), &(_, target))| pos != b && target == b),
            None => false,
        }
    }

    /// A round is relevant when activating would destroy at least one agent.
    pub fn relevant(&self) -> bool {
        self.any_at_bbh() || self.any_entering_bbh()
    }
}

pub trait Adversary {
    /// True = activate the black hole this round.
    fn decide(&mut self, view: &AdversaryView<'_>) -> bool;
}

/// Predicate DSL for trigger adversaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Always,
    Never,
    /// Some agent intends to enter 𝔟 this round.
    AnyEntering,
    /// Some agent is at 𝔟 this round.
    AnyAt,
    /// Either of the above.
    Relevant,
    RoundAtLeast(Round),
    RoundAtMost(Round),
    RoundIn(Round, Round),
    DestroyedAtLeast(usize),
    Not(Box<Predicate>),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Predicate {
    pub fn eval(&self, view: &AdversaryView<'_>) -> bool {
        match self {
            Predicate::Always => true,
            Predicate::Never => false,
            Predicate::AnyEntering => view.any_entering_bbh(),
            Predicate::AnyAt => view.any_at_bbh(),
            Predicate::Relevant => view.relevant(),
            Predicate::RoundAtLeast(r) => view.round >= *r,
            Predicate::RoundAtMost(r) => view.round <= *r,
            Predicate::RoundIn(a, b) => view.round >= *a && view.round <= *b,
            Predicate::DestroyedAtLeast(c) => view.destroyed_count >= *c,
            Predicate::Not(p) => !p.eval(view),
            Predicate::And(ps) => ps.iter().all(|p| p.eval(view)),
            Predicate::Or(ps) => ps.iter().any(|p| p.eval(view)),
        }
    }
}

/// Serializable adversary configuration; see [`build`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversarySpec {
    /// Never activates: the unique benign execution.
    Benign,
    /// Activates every round: the classical black hole.
    AlwaysActive,
    /// Activates exactly on the listed rounds.
    Scripted { rounds: BTreeSet<Round> },
    /// Activates whenever the predicate holds.
    Trigger { pred: Predicate },
    /// Like `Trigger`, but at most `max` activations.
    Budgeted { max: usize, pred: Predicate },
}

pub struct StrategyAdversary {
    spec: AdversarySpec,
    used: usize,
}

impl Adversary for StrategyAdversary {
    fn decide(&mut self, view: &AdversaryView<'_>) -> bool {
        match &self.spec {
            AdversarySpec::Benign => false,
            AdversarySpec::AlwaysActive => true,
            AdversarySpec::Scripted { rounds } => rounds.contains(&view.round),
            AdversarySpec::Trigger { pred } => pred.eval(view),
            AdversarySpec::Budgeted { max, pred } => {
                if self.used < *max && pred.eval(view) {
                    self.used += 1;
                    true
                } else {
                    false
                }
            }
        }
    }
}

pub fn build(spec: &AdversarySpec) -> StrategyAdversary {
    StrategyAdversary { spec: spec.clone(), used: 0 }
}

pub fn benign() -> StrategyAdversary {
    build(&AdversarySpec::Benign)
}

pub fn always_active() -> StrategyAdversary {
    build(&AdversarySpec::AlwaysActive)
}

pub fn scripted(rounds: BTreeSet<Round>) -> StrategyAdversary {
    build(&AdversarySpec::Scripted { rounds })
}

/// Fires once, on the first round in which any agent is at or entering 𝔟.
pub fn first_contact() -> StrategyAdversary {
    build(&AdversarySpec::Budgeted { max: 1, pred: Predicate::Relevant })
}
