//! Observables evaluated on either a pure state or a thermal ensemble.

use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::evolve::QuantumState;
use crate::spin::{IsingHamiltonian, SpectralDecomposition, SpinBasis};
use crate::thermo::{diabatic_moments, ThermalDistribution, ThermalFit};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

pub const DEFAULT_K_POINTS: usize = 201;

/// The ensemble an observable is averaged over.
#[derive(Debug, Clone, Copy)]
pub enum EnsembleView<'a> {
    Pure {
        state: &'a QuantumState,
        /// Needed only for energy fluctuations.
        hamiltonian: Option<&'a IsingHamiltonian>,
    },
    Thermal {
        spectrum: &'a SpectralDecomposition,
        distribution: &'a ThermalDistribution,
    },
}

impl<'a> EnsembleView<'a> {
    pub fn pure(state: &'a QuantumState) -> Self {
        EnsembleView::Pure { state, hamiltonian: None }
    }

    pub fn pure_with_hamiltonian(state: &'a QuantumState, hamiltonian: &'a IsingHamiltonian) -> Self {
        EnsembleView::Pure { state, hamiltonian: Some(hamiltonian) }
    }

    pub fn thermal(spectrum: &'a SpectralDecomposition, distribution: &'a ThermalDistribution) -> Self {
        EnsembleView::Thermal { spectrum, distribution }
    }

    pub fn n_spins(&self) -> usize {
        match self {
            EnsembleView::Pure { state, .. } => state.n_spins(),
            EnsembleView::Thermal { spectrum, .. } => spectrum.n_spins(),
        }
    }

    /// Probability of each computational basis state.
    pub fn z_distribution(&self) -> Vec<f64> {
        match self {
            EnsembleView::Pure { state, .. } => state.probabilities(),
            EnsembleView::Thermal { spectrum, distribution } => {
                let dim = spectrum.dimension();
                let mut out = vec![0.0; dim];
                let mut v = vec![0.0; dim];
                for (&n, &p) in distribution.states.iter().zip(&distribution.probabilities) {
                    if p == 0.0 {
                        continue;
                    }
                    spectrum.eigenvector_into(n, &mut v);
                    for (o, a) in out.iter_mut().zip(&v) {
                        *o += p * a * a;
                    }
                }
                out
            }
        }
    }

    /// Expectation of an operator diagonal in the z basis, given by its value
    /// on each basis index.
    pub fn expectation(&self, value: impl Fn(usize) -> f64) -> f64 {
        self.z_distribution()
            .iter()
            .enumerate()
            .map(|(c, p)| p * value(c))
            .sum()
    }

    /// `⟨(ΔE)²⟩`; `None` for a pure state without a Hamiltonian.
    pub fn energy_variance(&self) -> Option<f64> {
        match self {
            EnsembleView::Pure { state, hamiltonian } => hamiltonian.map(|h| diabatic_moments(state, h).variance),
            EnsembleView::Thermal { spectrum, distribution } => {
                let e: Vec<f64> = distribution.states.iter().map(|&n| spectrum.energy(n)).collect();
                let p = &distribution.probabilities;
                let mean: f64 = p.iter().zip(&e).map(|(p, e)| p * e).sum();
                Some(p.iter().zip(&e).map(|(p, e)| p * (e - mean) * (e - mean)).sum())
            }
        }
    }
}

/// `P_n = |⟨n|ψ⟩|²` for every eigenstate, in spectrum order.
pub fn eigenstate_probabilities(state: &QuantumState, spectrum: &SpectralDecomposition) -> Result<Vec<f64>> {
    Ok(spectrum.overlaps(&state.amplitudes)?.iter().map(|z| z.norm_sqr()).collect())
}

/// `m_s(c) = (1/N) Σ_i s_i σ_z^i` with `s_i = (−1)^i` over sites `i = 1..N`
/// when staggered and `s_i = 1` otherwise.
pub fn magnetization(index: usize, n: usize, staggered: bool) -> f64 {
    let mut m = 0.0;
    for site in 0..n {
        let s = if staggered && site % 2 == 0 { -1.0 } else { 1.0 };
        m += s * SpinBasis::sigma_z(index, site);
    }
    m / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetizationMoments {
    pub m1: f64,
    pub m2: f64,
    pub m4: f64,
}

pub fn magnetization_moments(view: &EnsembleView<'_>, staggered: bool) -> MagnetizationMoments {
    let n = view.n_spins();
    let (mut m1, mut m2, mut m4) = (0.0, 0.0, 0.0);
    for (c, p) in view.z_distribution().into_iter().enumerate() {
        let m = magnetization(c, n, staggered);
        m1 += p * m;
        m2 += p * m * m;
        m4 += p * m * m * m * m;
    }
    MagnetizationMoments { m1, m2, m4 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binder {
    pub g_s: f64,
    /// `(g⁰ − g_s) / (g⁰ − 1)` with `g⁰ = 3 − 2/N`.
    pub g_bar: f64,
}

pub fn binder_reference(n: usize) -> f64 {
    3.0 - 2.0 / n as f64
}

/// Central fourth moment over squared central second moment of `m_s`.
pub fn binder_cumulant(view: &EnsembleView<'_>, staggered: bool) -> Result<Binder> {
    let n = view.n_spins();
    let dist = view.z_distribution();
    let mean: f64 = dist.iter().enumerate().map(|(c, p)| p * magnetization(c, n, staggered)).sum();
    let (mut c2, mut c4) = (0.0, 0.0);
    for (c, p) in dist.iter().enumerate() {
        let d = magnetization(c, n, staggered) - mean;
        c2 += p * d * d;
        c4 += p * d * d * d * d;
    }
    if !(c2 > 1e-300) {
        return Err(Error::ZeroVariance);
    }
    let g_s = c4 / (c2 * c2);
    let g0 = binder_reference(n);
    Ok(Binder { g_s, g_bar: (g0 - g_s) / (g0 - 1.0) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureFactorResult {
    pub wavenumbers: Vec<f64>,
    pub values: Vec<f64>,
    /// `C(r)` for `r = 1..N−1`; entry `r − 1`.
    pub correlations: Vec<f64>,
    /// Connected `C_{i,j}`.
    pub pair_correlations: DMatrix<f64>,
}

impl StructureFactorResult {
    /// Wavenumber of the largest `S(k)`; the first one on ties.
    pub fn peak_wavenumber(&self) -> f64 {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        self.wavenumbers[best]
    }
}

/// `points` evenly spaced wavenumbers over `[−π, π]`, with `0` and `±π` exact
/// when `points` is odd.
pub fn k_grid(points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let last = points - 1;
            let mut k: Vec<f64> = (0..points).map(|j| -PI + 2.0 * PI * j as f64 / last as f64).collect();
            k[0] = -PI;
            k[last] = PI;
            if points % 2 == 1 {
                k[last / 2] = 0.0;
            }
            k
        }
    }
}

pub fn default_k_grid() -> Vec<f64> {
    k_grid(DEFAULT_K_POINTS)
}

/// Connected `σ_z` correlations.
pub fn pair_correlations(view: &EnsembleView<'_>) -> DMatrix<f64> {
    let n = view.n_spins();
    let mut z = vec![0.0; n];
    let mut zz = DMatrix::<f64>::zeros(n, n);
    for (c, p) in view.z_distribution().into_iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for i in 0..n {
            let si = SpinBasis::sigma_z(c, i);
            z[i] += p * si;
            for j in i..n {
                zz[(i, j)] += p * si * SpinBasis::sigma_z(c, j);
            }
        }
    }
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = zz[(i, j)] - z[i] * z[j];
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// `S(k) = |Σ_{r=1}^{N−1} C(r) e^{ikr}| / (N − 1)`, with `C(r)` the average of
/// `C_{m,m+r}` along the chain.
pub fn structure_factor(view: &EnsembleView<'_>, wavenumbers: &[f64]) -> Result<StructureFactorResult> {
    let n = view.n_spins();
    if n < 2 {
        return Err(Error::TooFewIons { required: 2, got: n });
    }
    let pair = pair_correlations(view);
    let correlations: Vec<f64> = (1..n)
        .map(|r| (0..n - r).map(|m| pair[(m, m + r)]).sum::<f64>() / (n - r) as f64)
        .collect();
    let values = wavenumbers
        .iter()
        .map(|&k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (idx, c) in correlations.iter().enumerate() {
                let phase = k * (idx + 1) as f64;
                re += c * phase.cos();
                im += c * phase.sin();
            }
            re.hypot(im) / (n - 1) as f64
        })
        .collect();
    Ok(StructureFactorResult { wavenumbers: wavenumbers.to_vec(), values, correlations, pair_correlations: pair })
}

/// `C_v = ⟨(ΔE)²⟩ / T²` with `T` from `fit`, for either view.
pub fn specific_heat(view: &EnsembleView<'_>, fit: &ThermalFit) -> Result<f64> {
    if !fit.converged {
        return Err(Error::FitRefused("thermal fit did not converge"));
    }
    if !fit.is_thermal() {
        return Err(Error::FitRefused("effective temperature is not positive"));
    }
    let variance = view
        .energy_variance()
        .ok_or(Error::FitRefused("pure state needs its Hamiltonian for energy fluctuations"))?;
    Ok(fit.beta * fit.beta * variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn x_product(n: usize) -> QuantumState {
        let dim = 1 << n;
        QuantumState::from_real(&vec![1.0; dim]).unwrap()
    }

    fn ghz(n: usize, staggered: bool) -> QuantumState {
        let dim = 1usize << n;
        let a = if staggered { (0..n).step_by(2).map(|i| 1 << i).sum() } else { 0 };
        let mut v = vec![C64::new(0.0, 0.0); dim];
        v[a] = C64::new(1.0 / 2f64.sqrt(), 0.0);
        v[a ^ (dim - 1)] = C64::new(1.0 / 2f64.sqrt(), 0.0);
        QuantumState::new(v, 0.0).unwrap()
    }

    #[test]
    fn product_state_moments() {
        for n in 2..=8 {
            let s = x_product(n);
            let m = magnetization_moments(&EnsembleView::pure(&s), false);
            let nf = n as f64;
            assert!(m.m1.abs() < 1e-14);
            assert!((m.m2 - 1.0 / nf).abs() < 1e-14);
            assert!((m.m4 - (3.0 * nf - 2.0) / (nf * nf * nf)).abs() < 1e-14);
            let b = binder_cumulant(&EnsembleView::pure(&s), false).unwrap();
            assert!((b.g_s - binder_reference(n)).abs() < 1e-12);
            assert!(b.g_bar.abs() < 1e-12);
        }
    }

    #[test]
    fn ghz_binder_is_one() {
        for staggered in [false, true] {
            let s = ghz(6, staggered);
            let view = EnsembleView::pure(&s);
            let m = magnetization_moments(&view, staggered);
            assert!((m.m2 - 1.0).abs() < 1e-14 && (m.m4 - 1.0).abs() < 1e-14);
            let b = binder_cumulant(&view, staggered).unwrap();
            assert!((b.g_s - 1.0).abs() < 1e-12 && (b.g_bar - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn binder_needs_variance() {
        let s = initial_like(4);
        assert!(matches!(binder_cumulant(&EnsembleView::pure(&s), false), Err(Error::ZeroVariance)));
    }

    fn initial_like(n: usize) -> QuantumState {
        let mut v = vec![C64::new(0.0, 0.0); 1 << n];
        v[0] = C64::new(1.0, 0.0);
        QuantumState::new(v, 0.0).unwrap()
    }

    #[test]
    fn grid_has_exact_landmarks() {
        let k = default_k_grid();
        assert_eq!(k.len(), 201);
        assert_eq!(k[0], -PI);
        assert_eq!(k[100], 0.0);
        assert_eq!(k[200], PI);
        for j in 0..201 {
            assert!((k[j] + k[200 - j]).abs() < 1e-15);
        }
    }

    #[test]
    fn ghz_structure_factors() {
        let k = default_k_grid();
        let s = ghz(6, false);
        let r = structure_factor(&EnsembleView::pure(&s), &k).unwrap();
        assert!(r.correlations.iter().all(|c| (c - 1.0).abs() < 1e-14));
        assert!((r.values[100] - 1.0).abs() < 1e-14);
        assert_eq!(r.peak_wavenumber(), 0.0);

        let s = ghz(6, true);
        let r = structure_factor(&EnsembleView::pure(&s), &k).unwrap();
        for (idx, c) in r.correlations.iter().enumerate() {
            let expect = if (idx + 1) % 2 == 0 { 1.0 } else { -1.0 };
            assert!((c - expect).abs() < 1e-14);
        }
        assert!((r.values[200] - 1.0).abs() < 1e-12);
        assert!(r.peak_wavenumber().abs() == PI);
    }

    #[test]
    fn product_state_has_no_correlations() {
        let s = x_product(5);
        let r = structure_factor(&EnsembleView::pure(&s), &default_k_grid()).unwrap();
        assert!(r.values.iter().all(|v| v.abs() < 1e-14));
        assert!(matches!(
            structure_factor(&EnsembleView::pure(&initial_like(1)), &[0.0]),
            Err(Error::TooFewIons { .. })
        ));
    }
}
