//! Core-shell average single particle model of LFP cells: finite-volume
//! discretization with a moving phase boundary, voltage output, simulation,
//! observability analysis and parameter identification.

pub mod cell;
pub mod error;
pub mod identify;
pub mod integrate;
pub mod io;
pub mod model;
pub mod ocp;
pub mod observability;
pub mod output;
pub mod par;
pub mod params;
pub mod phase;
pub mod profile;
pub mod scalar;
pub mod sim;
pub mod state;

pub use error::{ModelError, Result};
pub use params::{CellParameters, Direction, Electrode, ParameterSet};
