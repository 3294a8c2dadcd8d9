//! Deterministic simulator for the synchronous beeping model of networks,
//! together with broadcast, leader election, diameter estimation, message
//! collection, depth-first traversal, gossip and multi-broadcast protocols.

pub mod codec;
pub mod engine;
pub mod graphs;
pub mod harness;
pub mod multicast;
pub mod phase;
pub mod traversal;
pub mod waves;

pub use codec::{decode, decode_stream, encode, BitString, DecodeError};
pub use engine::{
    simulate, Action, BoundCheck, Graph, GraphError, NodeId, NodeProgram, ProtocolError, Reception,
    Round, RunReport, SimError, Trace,
};
pub use graphs::{generate, Family, GraphSpec};
pub use phase::ConfigError;
