//! Desk-scale cyber-physical testbed for a surrogate nuclear plant loop.
//!
//! The crate wires together a lumped-parameter plant simulator, an emulated
//! PLC with a three-element steam-generator level controller, a polling data
//! historian, a digital-twin state mirror, a voxel radiation dose model, a
//! grid-world RL navigation environment, scripted attack injection, and
//! analytic attack detectors. All processes exchange data over a small
//! length-prefixed tag protocol (`tagbus`).

pub mod attacks;
pub mod config;
pub mod detect;
pub mod dose;
pub mod harness;
pub mod historian;
pub mod manifest;
pub mod nav;
pub mod plant;
pub mod plc;
pub mod tagbus;
pub mod twin;

pub use tagbus::{Quality, TagValue, Value};
