//! Multi-flow mobile data offloading: the MDP simulator, a from-scratch
//! Q-network, the learning and planning agents, and the experiment harness.

pub mod agents;
pub mod env;
pub mod nn;
pub mod harness;
