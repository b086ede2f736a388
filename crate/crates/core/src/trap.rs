//! Linear Paul trap: equilibrium positions and transverse normal modes.
//!
//! Positions are solved in the dimensionless units where the axial trap force
//! on ion `i` balances the Coulomb repulsion,
//! `u_i = Σ_{j<i} (u_i − u_j)^−2 − Σ_{j>i} (u_i − u_j)^−2`,
//! with physical positions `R_i = ℓ u_i` and `ℓ³ = e² / (4πε₀ M ω_z²)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use core::f64::consts::TAU;

use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

const PLANCK: f64 = 6.626_070_15e-34;
/// `e² / (4π ε₀)` in J·m.
const COULOMB_CONSTANT_E2: f64 = 2.307_077_552e-28;

/// Trap and laser parameters; all frequencies are ordinary frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapSpec {
    pub n_ions: usize,
    /// Transverse center-of-mass frequency, held fixed.
    pub omega_transverse: f64,
    /// Axial center-of-mass frequency, the tuning knob for the coupling range.
    pub omega_axial: f64,
    /// Recoil frequency `ν_R = h / (M λ²)`.
    pub recoil: f64,
    /// Rabi frequency `Ω`.
    pub rabi: f64,
    /// Laser wavelength in m. Only used to recover the ion mass for reporting.
    pub wavelength: f64,
}

impl TrapSpec {
    /// Yb+ parameters at 355 nm with a 4.797 MHz transverse trap.
    pub fn ytterbium(n_ions: usize, omega_axial: f64) -> Self {
        Self {
            n_ions,
            omega_transverse: 4.797e6,
            omega_axial,
            recoil: 18.5e3,
            rabi: 600e3,
            wavelength: 355e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(Error::InvalidParameter("n_ions must be at least 1".into()));
        }
        let freqs = [
            ("omega_transverse", self.omega_transverse),
            ("omega_axial", self.omega_axial),
            ("recoil", self.recoil),
            ("rabi", self.rabi),
            ("wavelength", self.wavelength),
        ];
        for (name, v) in freqs {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(alloc::format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.omega_axial >= self.omega_transverse {
            return Err(Error::InvalidParameter(alloc::format!(
                "omega_axial ({}) must be below omega_transverse ({})",
                self.omega_axial,
                self.omega_transverse
            )));
        }
        Ok(())
    }

    /// Ion mass implied by the recoil frequency and wavelength.
    pub fn ion_mass(&self) -> f64 {
        PLANCK / (self.recoil * self.wavelength * self.wavelength)
    }
}

/// Equilibrium configuration of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct IonChain {
    /// Dimensionless positions, strictly increasing.
    pub positions: Vec<f64>,
    /// `ℓ` in metres.
    pub length_scale: f64,
    /// Largest force-balance residual at convergence.
    pub residual: f64,
}

impl IonChain {
    /// Builds a chain from given dimensionless positions, e.g. a uniform
    /// lattice for testing fits.
    pub fn from_positions(positions: Vec<f64>, length_scale: f64) -> Self {
        let residual = force_residual(&positions);
        Self { positions, length_scale, residual }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn physical_positions(&self) -> Vec<f64> {
        self.positions.iter().map(|u| u * self.length_scale).collect()
    }

    /// Average nearest-neighbour spacing, dimensionless.
    pub fn mean_spacing_dimensionless(&self) -> f64 {
        let n = self.positions.len();
        if n < 2 {
            return 0.0;
        }
        (self.positions[n - 1] - self.positions[0]) / (n - 1) as f64
    }

    /// Average nearest-neighbour spacing `a` in metres.
    pub fn mean_spacing(&self) -> f64 {
        self.mean_spacing_dimensionless() * self.length_scale
    }

    pub fn min_spacing_dimensionless(&self) -> f64 {
        self.positions
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Newton solver settings for [`solve_equilibrium_positions_with`].
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumOptions {
    pub max_ions: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self { max_ions: 64, max_iterations: 200, tolerance: 1e-12 }
    }
}

fn force_residual(u: &[f64]) -> f64 {
    force_balance(u).iter().fold(0.0, |m, f| m.max(f.abs()))
}

fn force_balance(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let mut f = vec![0.0; n];
    for i in 0..n {
        let mut acc = u[i];
        for j in 0..n {
            if j != i {
                let d = u[i] - u[j];
                acc -= d.signum() / (d * d);
            }
        }
        f[i] = acc;
    }
    f
}

pub fn solve_equilibrium_positions(spec: &TrapSpec) -> Result<IonChain> {
    solve_equilibrium_positions_with(spec, &EquilibriumOptions::default())
}

/// Damped Newton iteration from an equally spaced guess.
pub fn solve_equilibrium_positions_with(
    spec: &TrapSpec,
    opts: &EquilibriumOptions,
) -> Result<IonChain> {
    spec.validate()?;
    let n = spec.n_ions;
    if n > opts.max_ions {
        return Err(Error::TooLarge { what: "n_ions", requested: n, max: opts.max_ions });
    }
    let omega_z = TAU * spec.omega_axial;
    let length_scale = (COULOMB_CONSTANT_E2 / (spec.ion_mass() * omega_z * omega_z)).cbrt();

    if n == 1 {
        return Ok(IonChain { positions: vec![0.0], length_scale, residual: 0.0 });
    }

    let spacing = 2.018 / (n as f64).powf(0.559);
    let centre = (n as f64 + 1.0) / 2.0;
    let mut u: Vec<f64> = (1..=n).map(|i| (i as f64 - centre) * spacing).collect();
    let mut f = force_balance(&u);
    let mut norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut iterations = 0;
    while iterations < opts.max_iterations {
        if f.iter().all(|x| x.abs() < 0.1 * opts.tolerance) {
            break;
        }
        iterations += 1;
        let jac = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0 + (0..n)
                    .filter(|&k| k != i)
                    .map(|k| 2.0 / (u[i] - u[k]).abs().powi(3))
                    .sum::<f64>()
            } else {
                -2.0 / (u[i] - u[j]).abs().powi(3)
            }
        });
        let rhs = DVector::from_vec(f.clone());
        // The Jacobian is symmetric and strictly diagonally dominant.
        let step = match jac.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => break,
        };

        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x - lambda * s).collect();
            if trial.windows(2).all(|w| w[1] > w[0]) {
                let tf = force_balance(&trial);
                let tn = tf.iter().map(|x| x * x).sum::<f64>().sqrt();
                if tn < norm || tn == 0.0 {
                    u = trial;
                    f = tf;
                    norm = tn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    // Enforce the reflection symmetry the exact solution has.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let m = 0.5 * (u[j] - u[i]);
        u[i] = -m;
        u[j] = m;
    }
    if n % 2 == 1 {
        u[n / 2] = 0.0;
    }

    let residual = force_residual(&u);
    if residual >= opts.tolerance {
        return Err(Error::EquilibriumNotConverged { iterations, residual });
    }
    Ok(IonChain { positions: u, length_scale, residual })
}

/// Transverse normal modes; column `m` of `mode_matrix` is mode `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransverseModes {
    pub mode_matrix: DMatrix<f64>,
    /// Mode frequencies in Hz, descending, so index 0 is the COM mode.
    pub frequencies: Vec<f64>,
}

impl TransverseModes {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Entry `b_im` for ion `i` and mode `m` (both 0-based).
    pub fn amplitude(&self, ion: usize, mode: usize) -> f64 {
        self.mode_matrix[(ion, mode)]
    }
}

/// Diagonalizes the transverse stiffness matrix of `chain`.
pub fn transverse_normal_modes(spec: &TrapSpec, chain: &IonChain) -> Result<TransverseModes> {
    spec.validate()?;
    let n = chain.len();
    if n != spec.n_ions {
        return Err(Error::DimensionMismatch { expected: spec.n_ions, got: n });
    }
    let ratio = spec.omega_transverse / spec.omega_axial;
    let u = &chain.positions;
    let stiffness = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            ratio * ratio
                - (0..n)
                    .filter(|&k| k != i)
                    .map(|k| 1.0 / (u[i] - u[k]).abs().powi(3))
                    .sum::<f64>()
        } else {
            1.0 / (u[i] - u[j]).abs().powi(3)
        }
    });

    let eig = SymmetricEigen::new(stiffness);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut mode_matrix = DMatrix::zeros(n, n);
    let mut frequencies = Vec::with_capacity(n);
    for (m, &src) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[src];
        if lambda <= 0.0 {
            return Err(Error::ZigzagInstability { mode: m, eigenvalue: lambda });
        }
        frequencies.push(spec.omega_axial * lambda.sqrt());
        let mut col = eig.eigenvectors.column(src).clone_owned();
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-10) {
            if *first < 0.0 {
                col.neg_mut();
            }
        }
        mode_matrix.set_column(m, &col);
    }
    Ok(TransverseModes { mode_matrix, frequencies })
}

/// Lamb-Dicke parameter `η = √(ν_R / ω_COM)`.
pub fn lamb_dicke(spec: &TrapSpec) -> Result<f64> {
    spec.validate()?;
    Ok((spec.recoil / spec.omega_transverse).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> TrapSpec {
        TrapSpec::ytterbium(n, 800e3)
    }

    #[test]
    fn single_ion_sits_at_centre() {
        let chain = solve_equilibrium_positions(&spec(1)).unwrap();
        assert_eq!(chain.positions, vec![0.0]);
        let modes = transverse_normal_modes(&spec(1), &chain).unwrap();
        assert_eq!(modes.frequencies, vec![4.797e6]);
        assert_eq!(modes.mode_matrix[(0, 0)], 1.0);
    }

    #[test]
    fn two_and_three_ion_closed_forms() {
        let two = solve_equilibrium_positions(&spec(2)).unwrap();
        let x2 = 0.25f64.cbrt();
        assert!((two.positions[1] - x2).abs() < 1e-13);
        assert!((two.positions[0] + x2).abs() < 1e-13);

        let three = solve_equilibrium_positions(&spec(3)).unwrap();
        let x3 = 1.25f64.cbrt();
        assert!((three.positions[2] - x3).abs() < 1e-13);
        assert_eq!(three.positions[1], 0.0);
    }

    #[test]
    fn two_ion_modes_are_com_and_tilt() {
        let s = spec(2);
        let chain = solve_equilibrium_positions(&s).unwrap();
        let modes = transverse_normal_modes(&s, &chain).unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        assert!((modes.frequencies[0] - s.omega_transverse).abs() < 1e-9 * s.omega_transverse);
        let tilt = (s.omega_transverse.powi(2) - s.omega_axial.powi(2)).sqrt();
        assert!((modes.frequencies[1] - tilt).abs() < 1e-9 * tilt);
        assert!((modes.amplitude(0, 0) - h).abs() < 1e-12);
        assert!((modes.amplitude(1, 0) - h).abs() < 1e-12);
        assert!((modes.amplitude(0, 1) - h).abs() < 1e-12);
        assert!((modes.amplitude(1, 1) + h).abs() < 1e-12);
    }

    #[test]
    fn com_mode_is_uniform_for_ten_ions() {
        let s = spec(10);
        let chain = solve_equilibrium_positions(&s).unwrap();
        let modes = transverse_normal_modes(&s, &chain).unwrap();
        let u = 1.0 / 10f64.sqrt();
        for i in 0..10 {
            assert!((modes.amplitude(i, 0) - u).abs() < 1e-10);
        }
        assert!((modes.frequencies[0] / s.omega_transverse - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lamb_dicke_matches_quoted_value() {
        let eta = lamb_dicke(&spec(1)).unwrap();
        assert!((eta - 0.0621).abs() < 1e-4);
        let mut s = spec(1);
        s.recoil = s.omega_transverse;
        assert_eq!(lamb_dicke(&s).unwrap(), 1.0);
    }

    #[test]
    fn rejects_oversized_chain_and_bad_spec() {
        let opts = EquilibriumOptions { max_ions: 4, ..Default::default() };
        assert!(matches!(
            solve_equilibrium_positions_with(&spec(5), &opts),
            Err(Error::TooLarge { .. })
        ));
        let mut s = spec(3);
        s.omega_axial = 5e6;
        assert!(matches!(s.validate(), Err(Error::InvalidParameter(_))));
        s = spec(0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn weak_transverse_trap_is_zigzag_unstable() {
        let s = TrapSpec { omega_transverse: 1.2e6, omega_axial: 1.0e6, ..spec(12) };
        let chain = solve_equilibrium_positions(&s).unwrap();
        assert!(matches!(
            transverse_normal_modes(&s, &chain),
            Err(Error::ZigzagInstability { .. })
        ));
    }

    #[test]
    fn ion_mass_is_ytterbium() {
        let amu = 1.660_539_066_60e-27;
        let m = spec(1).ion_mass() / amu;
        assert!((m - 171.0).abs() < 1.5, "mass {m} amu");
    }
}
