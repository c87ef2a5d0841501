//! Directed spanning forests of planar Poisson processes, with the tools to sample
//! them, trace and count their coalescing paths, measure edge statistics near a
//! vertical line, and compare against a coalescing random-walk lattice model.

pub mod dsf;
pub mod error;
pub mod experiment;
pub mod io;
pub mod lattice;
pub mod point_process;
pub mod render;
pub mod rng;
pub mod spatial_index;
pub mod statistics;

pub use error::{Error, Result};
