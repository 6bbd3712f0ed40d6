//! Simulation and estimation toolkit for single rare-earth emitters in
//! hollow-nanopillar arrays: occupancy blueprints, implantation depth
//! profiles, five-level population dynamics, optical Bloch pulse
//! sequences, Monte-Carlo photon streams with pulsed autocorrelation,
//! and nonlinear least-squares parameter recovery.

pub mod bloch;
pub mod config;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod levels;
pub mod presets;
pub mod profile;
pub mod rng;
pub mod runner;
pub mod stream;

pub use error::{Error, Result};
