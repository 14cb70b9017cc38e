//! Vehicular network simulator with decentralized deep Q-learning for V2V
//! sub-band and power allocation.
//!
//! Each V2V link is an agent that picks a sub-band and a transmit power from
//! local observations (own channel, last-slot interference, base-station
//! channel, neighbor sub-band usage, remaining payload and time). Agents share
//! one Q-network trained with experience replay and are compared against a
//! random sub-band baseline on latency-constrained delivery success.

pub mod channel;
pub mod config;
pub mod env;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod gradcheck;
pub mod policies;
pub mod qnet;
pub mod replay;
pub mod rng;
pub mod sweep;
pub mod trainer;

pub use error::{Error, Result};
