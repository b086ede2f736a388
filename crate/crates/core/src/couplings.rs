//! Phonon-mediated Ising exchange `J_ij = Ω² ν_R Σ_m b_im b_jm / (μ² − ω_m²)`
//! and its approximate power law `|J_ij| ≈ J_0 / |R_i/a − R_j/a|^α`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::trap::{
    lamb_dicke, solve_equilibrium_positions, transverse_normal_modes, IonChain, TrapSpec,
    TransverseModes,
};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Relative guard `|μ² − ω_m²| / μ²` below which a mode counts as resonant.
pub const RESONANCE_GUARD: f64 = 1e-6;

/// Ferromagnetic couplings are positive, antiferromagnetic ones negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CouplingSign {
    Ferromagnetic,
    Antiferromagnetic,
}

impl CouplingSign {
    pub fn factor(self) -> f64 {
        match self {
            CouplingSign::Ferromagnetic => 1.0,
            CouplingSign::Antiferromagnetic => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CouplingSign::Ferromagnetic => "fm",
            CouplingSign::Antiferromagnetic => "afm",
        }
    }

    /// Whether the Binder cumulant uses the staggered magnetization.
    pub fn staggered(self) -> bool {
        self == CouplingSign::Antiferromagnetic
    }
}

/// Least-squares power law through `ln|J_ij|` against log separation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub j0: f64,
    pub alpha: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    /// Pairs with `J_ij == 0` left out of the fit.
    pub excluded_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    /// Symmetric, zero diagonal, in Hz. Already carries the sign.
    pub values: DMatrix<f64>,
    pub sign: CouplingSign,
    /// Mean nearest-neighbour `|J_{i,i+1}|` in Hz.
    pub j0_nn: f64,
    pub fit: Option<PowerLawFit>,
}

impl CouplingMatrix {
    /// Wraps an explicit matrix. The diagonal is cleared and the matrix is
    /// symmetrized from its upper triangle.
    pub fn from_values(values: DMatrix<f64>, sign: CouplingSign) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::DimensionMismatch { expected: values.nrows(), got: values.ncols() });
        }
        let n = values.nrows();
        let mut v = values;
        for i in 0..n {
            v[(i, i)] = 0.0;
            for j in i + 1..n {
                v[(j, i)] = v[(i, j)];
            }
        }
        let j0_nn = nearest_neighbour_mean(&v);
        Ok(Self { values: v, sign, j0_nn, fit: None })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Same magnitudes with the requested sign.
    pub fn with_sign(&self, sign: CouplingSign) -> Self {
        let mut out = self.clone();
        if sign != self.sign {
            out.values.neg_mut();
            out.sign = sign;
        }
        out
    }

    pub fn is_sign_uniform(&self) -> bool {
        let n = self.n();
        let mut pos = false;
        let mut neg = false;
        for i in 0..n {
            for j in i + 1..n {
                let v = self.values[(i, j)];
                pos |= v > 0.0;
                neg |= v < 0.0;
            }
        }
        !(pos && neg)
    }

    /// Largest relative deviation from `J_ij = J_{N+1−i, N+1−j}`.
    pub fn reflection_asymmetry(&self) -> f64 {
        let n = self.n();
        let scale = self.values.amax().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let d = self.values[(i, j)] - self.values[(n - 1 - i, n - 1 - j)];
                worst = worst.max(d.abs() / scale);
            }
        }
        worst
    }
}

fn nearest_neighbour_mean(v: &DMatrix<f64>) -> f64 {
    let n = v.nrows();
    if n < 2 {
        return 0.0;
    }
    (0..n - 1).map(|i| v[(i, i + 1)].abs()).sum::<f64>() / (n - 1) as f64
}

/// Beat-note detuning `μ = ω_COM + 3 η Ω`.
pub fn detuning_from_com(spec: &TrapSpec) -> Result<f64> {
    let eta = lamb_dicke(spec)?;
    Ok(spec.omega_transverse + 3.0 * eta * spec.rabi)
}

/// Builds the ferromagnetic (blue-detuned) exchange matrix.
pub fn compute_couplings(
    modes: &TransverseModes,
    spec: &TrapSpec,
    mu: f64,
) -> Result<CouplingMatrix> {
    let n = modes.len();
    if n != spec.n_ions {
        return Err(Error::DimensionMismatch { expected: spec.n_ions, got: n });
    }
    let mu2 = mu * mu;
    let mut weights = Vec::with_capacity(n);
    for (m, &w) in modes.frequencies.iter().enumerate() {
        let gap = mu2 - w * w;
        if (gap / mu2).abs() < RESONANCE_GUARD {
            return Err(Error::DetuningResonance { mode: m, relative_gap: (gap / mu2).abs() });
        }
        weights.push(1.0 / gap);
    }
    let prefactor = spec.rabi * spec.rabi * spec.recoil;
    let b = &modes.mode_matrix;
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = (0..n).map(|m| b[(i, m)] * b[(j, m)] * weights[m]).sum();
            values[(i, j)] = prefactor * s;
            values[(j, i)] = prefactor * s;
        }
    }
    let j0_nn = nearest_neighbour_mean(&values);
    Ok(CouplingMatrix { values, sign: CouplingSign::Ferromagnetic, j0_nn, fit: None })
}

fn log_log_fit(points: &[(f64, f64)], excluded_pairs: usize) -> PowerLawFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    PowerLawFit { j0: intercept.exp(), alpha: -slope, residual: (ss / n).sqrt(), excluded_pairs }
}

fn fit_with_distance(
    couplings: &CouplingMatrix,
    distance: impl Fn(usize, usize) -> f64,
) -> Result<PowerLawFit> {
    let n = couplings.n();
    if n < 3 {
        return Err(Error::TooFewIons { required: 3, got: n });
    }
    let mut points = Vec::with_capacity(n * (n - 1) / 2);
    let mut excluded = 0;
    for i in 0..n {
        for j in i + 1..n {
            let v = couplings.values[(i, j)].abs();
            if v == 0.0 {
                excluded += 1;
                continue;
            }
            points.push((distance(i, j).ln(), v.ln()));
        }
    }
    if points.len() < 2 {
        return Err(Error::InvalidParameter("fewer than two nonzero couplings to fit".into()));
    }
    Ok(log_log_fit(&points, excluded))
}

/// Fits against physical separation in units of the mean spacing.
pub fn fit_power_law(couplings: &CouplingMatrix, chain: &IonChain) -> Result<PowerLawFit> {
    if chain.len() != couplings.n() {
        return Err(Error::DimensionMismatch { expected: couplings.n(), got: chain.len() });
    }
    let a = chain.mean_spacing_dimensionless();
    let u = &chain.positions;
    fit_with_distance(couplings, |i, j| (u[i] - u[j]).abs() / a)
}

/// Fits against index distance `|i − j|`.
pub fn fit_power_law_index(couplings: &CouplingMatrix) -> Result<PowerLawFit> {
    fit_with_distance(couplings, |i, j| (j - i) as f64)
}

/// Trap, modes and couplings for one axial frequency.
#[derive(Debug, Clone)]
pub struct TrapSolution {
    pub spec: TrapSpec,
    pub chain: IonChain,
    pub modes: TransverseModes,
    pub detuning: f64,
    /// Ferromagnetic couplings with the physical-distance fit attached.
    pub couplings: CouplingMatrix,
}

/// Runs positions → modes → couplings → fit.
pub fn solve_trap(spec: &TrapSpec) -> Result<TrapSolution> {
    let chain = solve_equilibrium_positions(spec)?;
    let modes = transverse_normal_modes(spec, &chain)?;
    let detuning = detuning_from_com(spec)?;
    let mut couplings = compute_couplings(&modes, spec, detuning)?;
    if spec.n_ions >= 3 {
        couplings.fit = Some(fit_power_law(&couplings, &chain)?);
    }
    Ok(TrapSolution { spec: *spec, chain, modes, detuning, couplings })
}

/// Fitted exponent at a given axial frequency.
pub fn alpha_for_axial(spec: &TrapSpec, omega_axial: f64) -> Result<f64> {
    let s = TrapSpec { omega_axial, ..*spec };
    let sol = solve_trap(&s)?;
    sol.couplings
        .fit
        .map(|f| f.alpha)
        .ok_or(Error::TooFewIons { required: 3, got: spec.n_ions })
}

/// Search interval for [`tune_axial_for_alpha_in`].
#[derive(Debug, Clone, Copy)]
pub struct AxialBracket {
    pub low: f64,
    /// `None` picks the highest stable axial frequency automatically.
    pub high: Option<f64>,
    pub alpha_tolerance: f64,
}

impl Default for AxialBracket {
    fn default() -> Self {
        Self { low: 100e3, high: None, alpha_tolerance: 1e-6 }
    }
}

fn highest_stable_axial(spec: &TrapSpec, low: f64) -> Result<f64> {
    let mut high = 0.5 * spec.omega_transverse;
    while high > low {
        let s = TrapSpec { omega_axial: high, ..*spec };
        match solve_trap(&s) {
            Ok(_) => return Ok(high),
            Err(Error::ZigzagInstability { .. }) | Err(Error::DetuningResonance { .. }) => {
                high *= 0.95
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidParameter("no stable axial frequency above the bracket floor".into()))
}

pub fn tune_axial_for_alpha(spec: &TrapSpec, target_alpha: f64) -> Result<f64> {
    tune_axial_for_alpha_in(spec, target_alpha, &AxialBracket::default())
}

/// Bisects on the axial frequency, transverse trap fixed, until the fitted
/// exponent matches `target_alpha`. The exponent falls as the axial trap
/// stiffens.
pub fn tune_axial_for_alpha_in(
    spec: &TrapSpec,
    target_alpha: f64,
    bracket: &AxialBracket,
) -> Result<f64> {
    if spec.n_ions < 3 {
        return Err(Error::TooFewIons { required: 3, got: spec.n_ions });
    }
    let mut lo = bracket.low;
    let mut hi = match bracket.high {
        Some(h) => h,
        None => highest_stable_axial(spec, lo)?,
    };
    let alpha_lo = alpha_for_axial(spec, lo)?;
    let alpha_hi = alpha_for_axial(spec, hi)?;
    let (min, max) = (alpha_lo.min(alpha_hi), alpha_lo.max(alpha_hi));
    if !(target_alpha >= min && target_alpha <= max) {
        return Err(Error::AlphaUnreachable { target: target_alpha, min, max });
    }
    let decreasing = alpha_hi < alpha_lo;
    let mut best = (f64::INFINITY, lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let a = alpha_for_axial(spec, mid)?;
        let err = a - target_alpha;
        if err.abs() < best.0 {
            best = (err.abs(), mid);
        }
        if err.abs() <= bracket.alpha_tolerance || (hi - lo) <= 1e-9 * mid {
            break;
        }
        if (err > 0.0) == decreasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn uniform_chain(n: usize) -> IonChain {
        IonChain::from_positions((0..n).map(|i| i as f64).collect(), 1.0)
    }

    #[test]
    fn detuning_values() {
        let s = TrapSpec::ytterbium(10, 800e3);
        let mu = detuning_from_com(&s).unwrap();
        assert!((mu / s.omega_transverse - 1.0233).abs() < 1e-4);

        let s0 = TrapSpec { rabi: 1e-300, ..s };
        assert!((detuning_from_com(&s0).unwrap() - s.omega_transverse).abs() < 1e-6);

        let s1 = TrapSpec { omega_transverse: 5e6, recoil: 0.01 * 5e6, rabi: 1e6, ..s };
        assert!((detuning_from_com(&s1).unwrap() - 5.3e6).abs() < 1e-6);
    }

    #[test]
    fn single_ion_has_no_couplings() {
        let s = TrapSpec::ytterbium(1, 800e3);
        let sol = solve_trap(&s).unwrap();
        assert_eq!(sol.couplings.n(), 1);
        assert_eq!(sol.couplings.get(0, 0), 0.0);
        assert_eq!(sol.couplings.j0_nn, 0.0);
    }

    #[test]
    fn two_ion_closed_form() {
        let s = TrapSpec::ytterbium(2, 800e3);
        let sol = solve_trap(&s).unwrap();
        let mu2 = sol.detuning * sol.detuning;
        let wt2 = s.omega_transverse * s.omega_transverse;
        let wz2 = s.omega_axial * s.omega_axial;
        let expected = s.rabi * s.rabi * s.recoil * (0.5 / (mu2 - wt2) - 0.5 / (mu2 - wt2 + wz2));
        let got = sol.couplings.get(0, 1);
        assert!((got - expected).abs() < 1e-9 * expected.abs(), "{got} vs {expected}");
    }

    #[test]
    fn resonance_is_rejected() {
        let s = TrapSpec::ytterbium(3, 800e3);
        let chain = solve_equilibrium_positions(&s).unwrap();
        let modes = transverse_normal_modes(&s, &chain).unwrap();
        let err = compute_couplings(&modes, &s, modes.frequencies[1]).unwrap_err();
        assert!(matches!(err, Error::DetuningResonance { mode: 1, .. }));
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let n = 8;
        let vals = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                1.0 / ((i as f64 - j as f64).abs()).powf(1.3)
            }
        });
        let cm = CouplingMatrix::from_values(vals, CouplingSign::Ferromagnetic).unwrap();
        let fit = fit_power_law(&cm, &uniform_chain(n)).unwrap();
        assert!((fit.alpha - 1.3).abs() < 1e-10);
        assert!(fit.residual < 1e-10);
        assert!((fit.j0 - 1.0).abs() < 1e-10);

        let flat = CouplingMatrix::from_values(
            DMatrix::from_element(n, n, 2.5),
            CouplingSign::Antiferromagnetic,
        )
        .unwrap();
        let fit = fit_power_law(&flat, &uniform_chain(n)).unwrap();
        assert!(fit.alpha.abs() < 1e-12);
        assert!((fit.j0 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fit_excludes_zero_couplings_and_needs_three_ions() {
        let mut vals = DMatrix::from_element(4, 4, 1.0);
        vals[(0, 3)] = 0.0;
        let cm = CouplingMatrix::from_values(vals, CouplingSign::Ferromagnetic).unwrap();
        let fit = fit_power_law(&cm, &uniform_chain(4)).unwrap();
        assert_eq!(fit.excluded_pairs, 1);

        let two = CouplingMatrix::from_values(DMatrix::from_element(2, 2, 1.0), CouplingSign::Ferromagnetic)
            .unwrap();
        assert!(matches!(
            fit_power_law(&two, &uniform_chain(2)),
            Err(Error::TooFewIons { .. })
        ));
    }

    #[test]
    fn afm_is_global_sign_flip() {
        let sol = solve_trap(&TrapSpec::ytterbium(6, 800e3)).unwrap();
        let fm = &sol.couplings;
        let afm = fm.with_sign(CouplingSign::Antiferromagnetic);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(afm.get(i, j), -fm.get(i, j));
            }
        }
        assert_eq!(afm.j0_nn, fm.j0_nn);
        assert_eq!(afm.with_sign(CouplingSign::Ferromagnetic).values, fm.values);
    }

    #[test]
    fn from_values_symmetrizes() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 1.5, 0.0, 4.0]);
        let cm = CouplingMatrix::from_values(m, CouplingSign::Ferromagnetic).unwrap();
        assert_eq!(cm.values.as_slice(), vec![0.0, 1.5, 1.5, 0.0].as_slice());
    }
}
