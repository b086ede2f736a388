//! Spin-1/2 chain on the `2^N` computational basis.
//!
//! Basis index bit `i` (least significant first) encodes site `i + 1`: a clear
//! bit is `σ_z = +1`, a set bit is `σ_z = −1`. Stored states and spectra are
//! only meaningful under this encoding.

mod basis;
mod hamiltonian;
mod spectrum;
mod symmetry;

pub use basis::{SpinBasis, DEFAULT_MAX_SPINS};
pub use hamiltonian::{build_hamiltonian, IsingHamiltonian};
pub use spectrum::{diagonalize_with_symmetries, SectorBlock, SpectralDecomposition};
pub use symmetry::{
    orbit_size, sector_projector_population, spatial_reflection_operator, spin_parity_operator,
    BasisPermutation, Parity, SymmetrySector,
};
