//! Simulation and analysis toolkit for an EIT quantum memory storing
//! orbital-angular-momentum qubits in a cold atomic ensemble.

pub mod calibration;
pub mod config;
pub mod eit;
pub mod error;
pub mod experiment;
pub mod harness;
pub mod modes;
pub mod optim;
pub mod quantum;
pub mod stats;
pub mod tomography;

pub use error::{Error, Result};
