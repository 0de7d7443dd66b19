//! Simulator and verification harness for a corotational Oldroyd
//! fluid–structure interaction model on a periodic channel with a flexible lid.

pub mod algebra;
pub mod analysis;
pub mod cli;
pub mod config;
pub mod coupling;
pub mod error;
pub mod fluid;
pub mod geometry;
pub mod grid;
pub mod interp;
pub mod io;
pub mod kinetic;
pub mod linalg;
pub mod shell;
pub mod solute;
pub mod spectral;

pub use error::{Error, Result};
