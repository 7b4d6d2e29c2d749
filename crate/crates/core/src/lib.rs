//! Proximal gradient methods for convex optimization over measures on
//! discretized manifolds, with Bregman geometry given by power, entropy and
//! hyperbolic distance-generating functions.

pub mod analysis;
pub mod cli;
pub mod dgf;
pub mod error;
pub mod grid;
pub mod objective;
pub mod prox;
pub mod registry;
pub mod solver;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
