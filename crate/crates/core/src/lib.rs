//! Robust output regulation of sampled-data linear systems.
//!
//! The crate covers assumption checks, regulator equations, three
//! controller designs (emulation, generalized hold, multirate hold) and a
//! hybrid simulator for the resulting closed loops.

pub mod assumptions;
pub mod design;
pub mod error;
pub mod hybridsim;
pub mod model;
pub mod numkit;
pub mod regeq;
pub mod serde_matrix;

pub use error::{Error, Result};
