//! EIT storage and retrieval: the time-domain solver, its frequency-domain
//! counterpart, probe shapes and qubit-level composition.

mod protocol;
mod qubit;
mod solver;
mod transfer;
mod waveform;

pub use protocol::StorageProtocol;
pub use qubit::{store_qubit, PerModeEfficiency};
pub use solver::{simulate_storage, FieldSnapshot, MemoryResult, SimGrid, STABILITY_LIMIT};
pub use transfer::{group_delay, spectral_propagate, transmission_transfer};
pub use waveform::{
    full_gaussian, gaussian_envelope, truncated_gaussian, truncated_gaussian_peak, Waveform,
};
