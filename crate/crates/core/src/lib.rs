//! Turn-based hex-grid combat simulation with scripted, hybrid
//! (RL manager + scripted subordinates) and per-unit RL agents.

pub mod dqn;
pub mod engine;
pub mod evalstats;
pub mod hexgrid;
pub mod hybrid;
pub mod nn;
pub mod scenario;
pub mod observation;
pub mod play;
pub mod replay;
pub mod scripted;
