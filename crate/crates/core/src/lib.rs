//! Diabatic state preparation in trapped-ion transverse-field Ising chains.
//!
//! The pipeline runs bottom-up through the modules of this crate:
//!
//! - [`trap`]: equilibrium positions of a linear Coulomb crystal and its
//!   transverse normal modes.
//! - [`couplings`]: the phonon-mediated Ising exchange matrix and its
//!   approximate power-law characterization.
//! - [`spin`]: matrix-free Hamiltonian on the `2^N` spin basis, the two parity
//!   symmetries and symmetry-resolved exact diagonalization.
//! - [`evolve`]: exponential field ramp and Crank-Nicolson integration.
//! - [`thermo`]: effective inverse temperatures and Boltzmann reference
//!   distributions.
//! - [`obs`]: Binder cumulant, structure factor and generalized specific heat
//!   for pure states and thermal ensembles alike.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the companion harness crate.
//!
//! All energies are conventional frequencies in Hz, times are in seconds, and
//! `ħ = 1` by default so a level `E` accrues the phase `E·t` (see
//! [`PhaseConvention`]). With `k_B = 1` inverse
//! temperatures carry units of 1/Hz.
#![no_std]

extern crate alloc;

pub mod couplings;
pub mod error;
pub mod evolve;
pub mod obs;
pub mod spin;
pub mod thermo;
pub mod trap;

pub use error::{Error, Result};

/// Complex amplitude type used for state vectors.
pub type C64 = num_complex::Complex64;

/// How a frequency-unit energy `E` and a time `t` combine into a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PhaseConvention {
    /// `ħ = 1`: the phase is `E·t`.
    #[default]
    Hbar,
    /// `h = 1`: the phase is `2π·E·t`.
    Planck,
}

impl PhaseConvention {
    /// Radians accumulated per unit of `E·t`.
    pub fn angular_factor(self) -> f64 {
        match self {
            PhaseConvention::Hbar => 1.0,
            PhaseConvention::Planck => core::f64::consts::TAU,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PhaseConvention::Hbar => "hbar",
            PhaseConvention::Planck => "planck",
        }
    }
}
