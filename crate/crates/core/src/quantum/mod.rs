//! Exact finite-`N` quantum dynamics.

pub mod basis;
pub mod expectation;
pub mod hamiltonian;
pub mod husimi;
pub mod operators;
pub mod otoc;
pub mod parity;
pub mod protocol;
pub mod sparse;
pub mod spectrum;
pub mod states;

pub use basis::{FockBasis, DEFAULT_DIM_CAP};
pub use hamiltonian::{build_hamiltonian, HamiltonianMatrix};
pub use operators::{Operator, OperatorKind};
pub use parity::{parity_blocks, Parity, ParityBlocks};
pub use spectrum::{diagonalize, diagonalize_full, Eigensystem, Spectrum};
pub use states::{coherent_state, QuantumState};
pub use husimi::{husimi_grid, husimi_profile, HusimiGrid, PhaseGrid};
pub use expectation::{observable_ed, ObservableSeries};
pub use otoc::{otoc_ed, OtocSeries};
pub use protocol::{quadratic_response_protocol, ProtocolResult, ProtocolSpec};
