//! Simulation engines for two-photon and coherent-state interferometry.

pub mod bohmian;
pub mod circuit;
pub mod field;
pub mod fock;
pub mod stats;
pub mod emptywave;
pub mod experiments;
