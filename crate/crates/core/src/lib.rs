//! Synchronous simulator, protocol suite and model checker for mobile-agent
//! perpetual exploration of port-labeled graphs containing at most one
//! Byzantine black hole.

pub mod adversary;
pub mod engine;
pub mod generators;
pub mod graph;
pub mod protocols;
pub mod scenario;
pub mod suspicious;
pub mod verify;
