//! Benchmark environments.

pub mod cartpole;
pub mod gridworld;

pub use cartpole::{CartPoleLqg, Episode, NoiseReading, Termination};
pub use gridworld::{Cell, GridMdp, GridWorld, Move};
