//! Effective temperatures for a diabatically prepared state.
//!
//! Three criteria each pick one inverse temperature `β` (with `k_B = 1`, so
//! `β` is in 1/Hz): matching the mean energy, matching the energy variance,
//! and matching the ratio of the two lowest populations.

use alloc::vec;
use alloc::vec::Vec;


use crate::evolve::QuantumState;
use crate::spin::{IsingHamiltonian, SpectralDecomposition, SymmetrySector};
use crate::{Error, Result, C64};
#[allow(unused_imports)]
use num_traits::Float;

/// Levels closer than this fraction of the spectral span count as degenerate
/// with the ground level when sizing the `β` bracket.
const GAP_FRACTION: f64 = 1e-6;
/// `β_cap · gap`; beyond this the ensemble is a ground-state point mass.
const CAP_FACTOR: f64 = 50.0;
const FIT_TOLERANCE: f64 = 1e-10;
const FLUCTUATION_SCAN_POINTS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitMethod {
    Average,
    Fluctuation,
    Ratio,
}

impl FitMethod {
    pub const ALL: [FitMethod; 3] = [FitMethod::Average, FitMethod::Fluctuation, FitMethod::Ratio];

    pub fn label(self) -> &'static str {
        match self {
            FitMethod::Average => "average",
            FitMethod::Fluctuation => "fluctuation",
            FitMethod::Ratio => "ratio",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalFit {
    pub method: FitMethod,
    /// Inverse temperature in 1/Hz.
    pub beta: f64,
    pub converged: bool,
    /// Relative mismatch of the matched quantity at `beta`.
    pub residual: f64,
    pub sector_restricted: bool,
    /// `β ≤ 0`: a population inversion, not a stable thermal state.
    pub non_thermal: bool,
    /// The solution sits at the bracket edge `β_cap`.
    pub at_cap: bool,
    /// Every `β` satisfying the criterion (fluctuation fit only).
    pub crossings: Vec<f64>,
}

impl ThermalFit {
    fn new(method: FitMethod, beta: f64) -> Self {
        Self {
            method,
            beta,
            converged: true,
            residual: 0.0,
            sector_restricted: false,
            non_thermal: beta <= 0.0,
            at_cap: false,
            crossings: Vec::new(),
        }
    }

    /// Temperature in Hz; infinite at `β = 0`.
    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }

    /// Converged with a positive, finite temperature.
    pub fn is_thermal(&self) -> bool {
        self.converged && !self.non_thermal && self.beta > 0.0 && self.beta.is_finite()
    }

    pub fn restricted(mut self, sector_restricted: bool) -> Self {
        self.sector_restricted = sector_restricted;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyMoments {
    pub mean: f64,
    pub variance: f64,
}

fn spectral_bounds(energies: &[f64]) -> (f64, f64) {
    energies
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)))
}

/// Boltzmann weights normalized to one, and `ln Z`.
///
/// Energies are shifted by the ground (or, for `β < 0`, the top) level before
/// exponentiating.
pub fn boltzmann_weights(energies: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let (lo, hi) = spectral_bounds(energies);
    let shift = if beta >= 0.0 { lo } else { hi };
    let mut w: Vec<f64> = if beta.is_infinite() {
        energies.iter().map(|&e| if e == shift { 1.0 } else { 0.0 }).collect()
    } else {
        energies.iter().map(|&e| (-beta * (e - shift)).exp()).collect()
    };
    let z: f64 = w.iter().sum();
    for x in &mut w {
        *x /= z;
    }
    let log_z = if beta.is_infinite() { f64::NAN } else { z.ln() - beta * shift };
    (w, log_z)
}

/// Boltzmann mean and variance of `energies` at `beta`.
pub fn thermal_moments(energies: &[f64], beta: f64) -> EnergyMoments {
    let (w, _) = boltzmann_weights(energies, beta);
    let mean: f64 = w.iter().zip(energies).map(|(p, e)| p * e).sum();
    let variance: f64 = w.iter().zip(energies).map(|(p, e)| p * (e - mean) * (e - mean)).sum();
    EnergyMoments { mean, variance }
}

/// `⟨ψ|H|ψ⟩` and `‖(H − ⟨H⟩)ψ‖²`.
pub fn diabatic_moments(state: &QuantumState, h: &IsingHamiltonian) -> EnergyMoments {
    let psi = &state.amplitudes;
    let mut hpsi = vec![C64::new(0.0, 0.0); psi.len()];
    h.apply(psi, &mut hpsi);
    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let mean = psi.iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).re).sum::<f64>() / norm2;
    let variance = psi
        .iter()
        .zip(&hpsi)
        .map(|(a, b)| (b - a * mean).norm_sqr())
        .sum::<f64>()
        / norm2;
    EnergyMoments { mean, variance }
}

/// `50 / gap`, with the gap measured to the first level more than a
/// `1e−6` fraction of the span above the ground level.
pub fn beta_cap(energies: &[f64]) -> f64 {
    let (lo, hi) = spectral_bounds(energies);
    let span = hi - lo;
    if !(span > 0.0) {
        return CAP_FACTOR;
    }
    let gap = energies
        .iter()
        .map(|&e| e - lo)
        .filter(|&d| d > GAP_FRACTION * span)
        .fold(f64::INFINITY, f64::min);
    CAP_FACTOR / gap
}

fn validate_energies(energies: &[f64]) -> Result<()> {
    if energies.is_empty() || energies.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidParameter("energies must be non-empty and finite".into()));
    }
    Ok(())
}

/// Bisection on a decreasing `f` over `[lo, hi]` with `f(lo) ≥ 0 ≥ f(hi)`.
fn bisect_decreasing(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `β` with `⟨E⟩_therm(β) = target_energy`.
///
/// A target above the infinite-temperature mean lands on the `β < 0` branch,
/// which is returned flagged as non-thermal.
pub fn fit_beta_average(energies: &[f64], target_energy: f64) -> Result<ThermalFit> {
    validate_energies(energies)?;
    let (e0, top) = spectral_bounds(energies);
    let span = top - e0;
    let tol = FIT_TOLERANCE * span;
    if target_energy < e0 - tol || (span == 0.0 && target_energy <= e0) {
        return Err(Error::SubGroundStateEnergy { target: target_energy, ground: e0 });
    }
    if target_energy > top + tol || (span == 0.0 && target_energy >= top) {
        return Err(Error::AboveSpectrum { target: target_energy, top });
    }
    let mean0 = thermal_moments(energies, 0.0).mean;
    if target_energy == mean0 {
        return Ok(ThermalFit::new(FitMethod::Average, 0.0));
    }
    let cap = beta_cap(energies);
    let f = |b: f64| thermal_moments(energies, b).mean - target_energy;

    let positive = target_energy < mean0;
    let (lo, hi) = if positive { (0.0, cap) } else { (-cap, 0.0) };
    let edge = if positive { hi } else { lo };
    let edge_val = f(edge);
    let mut fit;
    if (positive && edge_val >= 0.0) || (!positive && edge_val <= 0.0) {
        fit = ThermalFit::new(FitMethod::Average, edge);
        fit.at_cap = true;
        fit.residual = edge_val.abs() / span;
        fit.converged = edge_val.abs() <= tol;
    } else {
        let mut beta = bisect_decreasing(lo, hi, f);
        // Newton polish: d⟨E⟩/dβ = −Var(E).
        for _ in 0..3 {
            let m = thermal_moments(energies, beta);
            if m.variance <= 0.0 {
                break;
            }
            let next = beta + (m.mean - target_energy) / m.variance;
            if next < lo || next > hi || (f(next).abs() >= f(beta).abs()) {
                break;
            }
            beta = next;
        }
        let r = f(beta).abs();
        fit = ThermalFit::new(FitMethod::Average, beta);
        fit.residual = r / span;
        fit.converged = r <= tol;
    }
    fit.non_thermal = !positive || fit.beta <= 0.0;
    Ok(fit)
}

/// `β ≥ 0` with `Var_therm(β) = target_variance`; the coldest of all
/// solutions is returned and every solution listed in `crossings`.
pub fn fit_beta_fluctuation(energies: &[f64], target_variance: f64) -> Result<ThermalFit> {
    validate_energies(energies)?;
    if !(target_variance >= 0.0 && target_variance.is_finite()) {
        return Err(Error::InvalidParameter("target variance must be non-negative".into()));
    }
    let (e0, top) = spectral_bounds(energies);
    let scale = (top - e0) * (top - e0);
    if scale == 0.0 {
        return Err(Error::VarianceUnreachable { target: target_variance, max: 0.0 });
    }
    let tol = FIT_TOLERANCE * scale;
    let cap = beta_cap(energies);
    let g = |b: f64| thermal_moments(energies, b).variance - target_variance;

    let mut grid = Vec::with_capacity(FLUCTUATION_SCAN_POINTS + 1);
    grid.push(0.0);
    let lmin = (cap * 1e-8).ln();
    let lmax = cap.ln();
    for k in 0..FLUCTUATION_SCAN_POINTS {
        let t = k as f64 / (FLUCTUATION_SCAN_POINTS - 1) as f64;
        grid.push((lmin + t * (lmax - lmin)).exp());
    }
    *grid.last_mut().unwrap() = cap;
    let vals: Vec<f64> = grid.iter().map(|&b| g(b)).collect();

    let mut crossings = Vec::new();
    if vals[0].abs() <= tol {
        crossings.push(0.0);
    }
    for k in 0..grid.len() - 1 {
        let (a, b) = (vals[k], vals[k + 1]);
        if a == 0.0 && k > 0 {
            crossings.push(grid[k]);
        } else if (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) {
            let root = if a > 0.0 {
                bisect_decreasing(grid[k], grid[k + 1], &g)
            } else {
                bisect_decreasing(grid[k], grid[k + 1], |x| -g(x))
            };
            crossings.push(root);
        }
    }

    let last = *vals.last().unwrap();
    if crossings.is_empty() {
        if last >= 0.0 || last.abs() <= tol {
            // Colder than the bracket resolves.
            let mut fit = ThermalFit::new(FitMethod::Fluctuation, cap);
            fit.at_cap = true;
            fit.residual = last.abs() / scale;
            fit.converged = last.abs() <= tol;
            return Ok(fit);
        }
        let (kmax, _) = vals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
        let lo = grid[kmax.saturating_sub(1)];
        let hi = grid[(kmax + 1).min(grid.len() - 1)];
        let max = golden_max(lo, hi, |b| thermal_moments(energies, b).variance);
        if target_variance > max + tol {
            return Err(Error::VarianceUnreachable { target: target_variance, max });
        }
        let beta = grid[kmax];
        let mut fit = ThermalFit::new(FitMethod::Fluctuation, beta);
        fit.residual = g(beta).abs() / scale;
        fit.converged = g(beta).abs() <= tol;
        fit.crossings.push(beta);
        return Ok(fit);
    }

    let beta = *crossings.last().unwrap();
    let r = g(beta).abs();
    let mut fit = ThermalFit::new(FitMethod::Fluctuation, beta);
    fit.residual = r / scale;
    fit.converged = r <= tol;
    fit.crossings = crossings;
    Ok(fit)
}

fn golden_max(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut best = f(a).max(f(b));
    for _ in 0..100 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        let (fc, fd) = (f(c), f(d));
        best = best.max(fc).max(fd);
        if fc > fd {
            b = d;
        } else {
            a = c;
        }
    }
    best
}

/// `β = (ln p_gs − ln p_1) / (E_1 − E_gs)`.
pub fn fit_beta_ratio(p_gs: f64, p_1: f64, e_gap: f64) -> Result<ThermalFit> {
    if !(p_gs > 0.0 && p_1 > 0.0) {
        return Err(Error::UndefinedRatio { p_gs, p_1 });
    }
    if !(e_gap > 0.0) {
        return Err(Error::DegenerateGap);
    }
    Ok(ThermalFit::new(FitMethod::Ratio, (p_gs.ln() - p_1.ln()) / e_gap))
}

/// Energies of the selected ensemble: every eigenstate, or only those in the
/// ground state's sector.
pub fn ensemble_indices(spectrum: &SpectralDecomposition, sector_restricted: bool) -> Vec<usize> {
    if sector_restricted {
        spectrum.indices_in_sector(spectrum.ground_sector())
    } else {
        (0..spectrum.len()).collect()
    }
}

pub fn ensemble_energies(spectrum: &SpectralDecomposition, sector_restricted: bool) -> Vec<f64> {
    ensemble_indices(spectrum, sector_restricted)
        .into_iter()
        .map(|k| spectrum.energy(k))
        .collect()
}

/// Boltzmann distribution over a set of eigenstates.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalDistribution {
    /// Global eigenstate indices, ascending in energy.
    pub states: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub beta: f64,
    /// `ln Σ e^{−βE_n}` over `states`; NaN at infinite `β`.
    pub log_partition: f64,
    pub sector_restricted: bool,
}

impl ThermalDistribution {
    pub fn partition_value(&self) -> f64 {
        self.log_partition.exp()
    }

    /// Probability of eigenstate `n`; zero if it is outside the ensemble.
    pub fn probability_of(&self, n: usize) -> f64 {
        self.states
            .iter()
            .position(|&k| k == n)
            .map_or(0.0, |p| self.probabilities[p])
    }

    /// Probabilities laid out over every eigenstate index of the spectrum.
    pub fn dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (&k, &p) in self.states.iter().zip(&self.probabilities) {
            out[k] = p;
        }
        out
    }
}

pub fn thermal_distribution(
    spectrum: &SpectralDecomposition,
    beta: f64,
    sector_restricted: bool,
) -> ThermalDistribution {
    let states = ensemble_indices(spectrum, sector_restricted);
    let energies: Vec<f64> = states.iter().map(|&k| spectrum.energy(k)).collect();
    let (probabilities, log_partition) = boltzmann_weights(&energies, beta);
    ThermalDistribution { states, probabilities, beta, log_partition, sector_restricted }
}

/// Largest pairwise `|T_i − T_j| / mean(T)` among thermal fits; `None` unless
/// at least two fits have positive temperatures.
pub fn fit_agreement(fits: &[ThermalFit]) -> Option<f64> {
    let temps: Vec<f64> = fits.iter().filter(|f| f.is_thermal()).map(|f| f.temperature()).collect();
    if temps.len() < 2 {
        return None;
    }
    let mean = temps.iter().sum::<f64>() / temps.len() as f64;
    let mut worst = 0.0f64;
    for i in 0..temps.len() {
        for j in i + 1..temps.len() {
            worst = worst.max((temps[i] - temps[j]).abs() / mean);
        }
    }
    Some(worst)
}

/// Log-linear `β` fit within one group of eigenstates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupFit {
    pub orbit_size: usize,
    pub beta: f64,
    pub states_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTemperatureReport {
    pub sector: SymmetrySector,
    pub groups: Vec<GroupFit>,
}

/// Splits the ground-sector eigenstates by the orbit size (2 or 4) of their
/// dominant zero-field basis state and fits `ln P_n = c − β E_n` within each.
/// Only populations above `min_probability` enter.
pub fn two_temperature_split(
    spectrum: &SpectralDecomposition,
    probabilities: &[f64],
    min_probability: f64,
) -> TwoTemperatureReport {
    let sector = spectrum.ground_sector();
    let mut groups = Vec::new();
    for orbit_size in [2usize, 4] {
        let pts: Vec<(f64, f64)> = spectrum
            .indices_in_sector(sector)
            .into_iter()
            .filter(|&k| probabilities[k] > min_probability && spectrum.dominant_orbit_size(k) == orbit_size)
            .map(|k| (spectrum.energy(k), probabilities[k].ln()))
            .collect();
        if pts.len() < 2 {
            continue;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        if sxx <= 0.0 {
            continue;
        }
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        groups.push(GroupFit { orbit_size, beta: -sxy / sxx, states_used: pts.len() });
    }
    TwoTemperatureReport { sector, groups }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_limits() {
        let e = [-2.0, -1.0, 0.5, 3.0];
        let cold = thermal_moments(&e, f64::INFINITY);
        assert_eq!(cold.mean, -2.0);
        assert_eq!(cold.variance, 0.0);
        let hot = thermal_moments(&e, 0.0);
        assert!((hot.mean - 0.125).abs() < 1e-15);
    }

    #[test]
    fn two_level_closed_forms() {
        let d = 1.7;
        for &beta in &[0.1, 0.8, 2.5] {
            let m = thermal_moments(&[0.0, d], beta);
            let x = (beta * d).exp();
            assert!((m.mean - d / (1.0 + x)).abs() < 1e-14);
            assert!((m.variance - d * d * x / ((1.0 + x) * (1.0 + x))).abs() < 1e-14);
        }
    }

    #[test]
    fn average_fit_inverts_two_level() {
        let fit = fit_beta_average(&[0.0, 1.0], 0.25).unwrap();
        assert!((fit.beta - 3f64.ln()).abs() < 1e-12);
        assert!(fit.converged && !fit.non_thermal);

        let zero = fit_beta_average(&[0.0, 1.0, 3.0], 4.0 / 3.0).unwrap();
        assert_eq!(zero.beta, 0.0);
    }

    #[test]
    fn average_fit_near_ground_hits_cap() {
        let e = [0.0, 1.0, 2.0];
        let fit = fit_beta_average(&e, 1e-30).unwrap();
        assert!(fit.at_cap && fit.converged);
        assert_eq!(fit.beta, 50.0);
        assert!(matches!(fit_beta_average(&e, -0.1), Err(Error::SubGroundStateEnergy { .. })));
        assert!(matches!(fit_beta_average(&e, 2.5), Err(Error::AboveSpectrum { .. })));
    }

    #[test]
    fn average_fit_negative_branch_is_flagged() {
        let fit = fit_beta_average(&[0.0, 1.0], 0.75).unwrap();
        assert!(fit.beta < 0.0);
        assert!(fit.non_thermal);
        assert!((fit.beta + 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fluctuation_fit_cases() {
        let fit = fit_beta_fluctuation(&[0.0, 1.0], 0.25).unwrap();
        assert_eq!(fit.beta, 0.0);

        let cold = fit_beta_fluctuation(&[0.0, 1.0], 0.0).unwrap();
        assert!(cold.at_cap && cold.converged);

        assert!(matches!(
            fit_beta_fluctuation(&[0.0, 1.0], 0.3),
            Err(Error::VarianceUnreachable { .. })
        ));

        // Round trip on a two-level system.
        let target = thermal_moments(&[0.0, 1.0], 1.3).variance;
        let fit = fit_beta_fluctuation(&[0.0, 1.0], target).unwrap();
        assert!((fit.beta - 1.3).abs() < 1e-9);
    }

    #[test]
    fn fluctuation_fit_returns_coldest_crossing() {
        // Three clusters make the variance non-monotone in β.
        let e = [0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0];
        let target = thermal_moments(&e, 3.0).variance;
        let fit = fit_beta_fluctuation(&e, target).unwrap();
        assert!(fit.crossings.len() >= 2, "crossings {:?}", fit.crossings);
        assert!((fit.beta - fit.crossings.iter().cloned().fold(0.0, f64::max)).abs() == 0.0);
        assert!((thermal_moments(&e, fit.beta).variance - target).abs() < 1e-8 * 100.0);
    }

    #[test]
    fn ratio_fit() {
        assert_eq!(fit_beta_ratio(0.3, 0.3, 1.0).unwrap().beta, 0.0);
        let f = fit_beta_ratio(0.6, 0.2, 1e3).unwrap();
        assert!((f.beta - 3f64.ln() / 1e3).abs() < 1e-18);
        assert!(f.is_thermal());
        let neg = fit_beta_ratio(0.2, 0.6, 1e3).unwrap();
        assert!(neg.non_thermal && !neg.is_thermal());
        assert!(matches!(fit_beta_ratio(0.0, 0.1, 1.0), Err(Error::UndefinedRatio { .. })));
        assert!(matches!(fit_beta_ratio(0.5, 0.1, 0.0), Err(Error::DegenerateGap)));
    }

    #[test]
    fn weights_are_normalized_and_monotone() {
        let e = [-3.0, -1.0, 0.0, 0.0, 2.0];
        let (w, log_z) = boltzmann_weights(&e, 0.7);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[0] >= p[1]));
        let z: f64 = e.iter().map(|x| (-0.7 * x).exp()).sum();
        assert!((log_z - z.ln()).abs() < 1e-12);
        let (w0, _) = boltzmann_weights(&e, 0.0);
        assert!(w0.iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn agreement_metric() {
        let a = ThermalFit::new(FitMethod::Average, 1.0);
        let b = ThermalFit::new(FitMethod::Ratio, 0.5);
        let c = ThermalFit::new(FitMethod::Fluctuation, -1.0);
        let agree = fit_agreement(&[a.clone(), b, c]).unwrap();
        assert!((agree - 1.0 / 1.5).abs() < 1e-12);
        assert!(fit_agreement(&[a]).is_none());
    }
}
