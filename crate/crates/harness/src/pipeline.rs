//! trap → couplings → evolve → diagonalize → thermo → obs for one config.

use std::sync::Arc;

use diabatherm_core::couplings::{solve_trap, tune_axial_for_alpha, CouplingMatrix, TrapSolution};
use diabatherm_core::evolve::{evolve_converged, initial_state, CrankNicolson, QuantumState, RampSchedule};
use diabatherm_core::obs::{
    binder_cumulant, eigenstate_probabilities, k_grid, magnetization_moments, specific_heat,
    structure_factor, Binder, EnsembleView, MagnetizationMoments, StructureFactorResult,
};
use diabatherm_core::spin::{build_hamiltonian, diagonalize_with_symmetries, IsingHamiltonian, SpectralDecomposition};
use diabatherm_core::thermo::{
    diabatic_moments, ensemble_energies, fit_agreement, fit_beta_average, fit_beta_fluctuation,
    fit_beta_ratio, thermal_distribution, two_temperature_split, EnergyMoments, FitMethod,
    ThermalDistribution, ThermalFit, TwoTemperatureReport,
};
use diabatherm_core::trap::TrapSpec;

use crate::config::{AxialSetting, RunConfig};
use crate::error::{HarnessError, Result};

/// Populations below this are left out of the two-temperature fit.
pub const TWO_TEMPERATURE_FLOOR: f64 = 1e-6;

/// Everything that depends only on the final Hamiltonian, shared by runs that
/// differ in ramp speed alone.
#[derive(Debug)]
pub struct Prepared {
    pub trap: TrapSolution,
    /// Signed couplings.
    pub couplings: CouplingMatrix,
    /// Mean nearest-neighbour `|J|`, the energy scale of the ramp.
    pub j0: f64,
    pub hamiltonian: IsingHamiltonian,
    pub spectrum: SpectralDecomposition,
}

pub fn trap_spec(cfg: &RunConfig) -> Result<TrapSpec> {
    let base = TrapSpec {
        n_ions: cfg.n_ions,
        omega_transverse: cfg.omega_transverse_hz,
        omega_axial: 0.5 * cfg.omega_transverse_hz,
        recoil: cfg.recoil_hz,
        rabi: cfg.rabi_hz,
        wavelength: cfg.wavelength_m,
    };
    let omega_axial = match cfg.axial()? {
        AxialSetting::Explicit(w) => w,
        AxialSetting::Alpha(a) => {
            if cfg.n_ions < 3 {
                return Err(HarnessError::config("alpha_target needs at least 3 ions; set trap.omega_axial_hz"));
            }
            tune_axial_for_alpha(&base, a)?
        }
    };
    Ok(TrapSpec { omega_axial, ..base })
}

/// The ramp for `cfg` given the coupling scale `j0`.
pub fn schedule(cfg: &RunConfig, j0: f64) -> Result<RampSchedule> {
    if !(j0 > 0.0) {
        return Err(diabatherm_core::Error::InvalidParameter("couplings vanish; J0 must be positive".into()).into());
    }
    Ok(match cfg.t_final_ms {
        Some(ms) if ms > 0.0 => RampSchedule::with_final_time(j0, cfg.b0_over_j0, ms * 1e-3, cfg.t_f_over_tau)?,
        Some(_) => RampSchedule::new(cfg.b0_over_j0 * j0, cfg.j0_tau / j0, 0.0)?,
        None => RampSchedule::from_protocol(j0, cfg.b0_over_j0, cfg.j0_tau, cfg.t_f_over_tau)?,
    })
}

impl Prepared {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = trap_spec(cfg)?;
        let trap = solve_trap(&spec)?;
        let couplings = trap.couplings.with_sign(cfg.sign);
        let j0 = couplings.j0_nn;
        let sched = schedule(cfg, j0)?;
        let hamiltonian = build_hamiltonian(&couplings, sched.final_field())?;
        let spectrum = diagonalize_with_symmetries(&hamiltonian)?;
        Ok(Self { trap, couplings, j0, hamiltonian, spectrum })
    }

    /// Whether this spectrum belongs to the final Hamiltonian of `sched`.
    pub fn matches(&self, sched: &RampSchedule) -> bool {
        let b = self.hamiltonian.b_field();
        (sched.final_field() - b).abs() <= 1e-12 * b.abs().max(f64::MIN_POSITIVE)
    }

    /// Eigenstate indices of the ground sector, ascending in energy.
    pub fn ground_sector_states(&self) -> Vec<usize> {
        self.spectrum.indices_in_sector(self.spectrum.ground_sector())
    }
}

/// Step-size and solver diagnostics of the accepted trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunInfo {
    pub dt: f64,
    pub steps: usize,
    pub halvings: usize,
    /// Largest gated-observable change at the last halving.
    pub dt_change: f64,
    pub max_residual: f64,
    pub max_norm_error: f64,
    pub fallback_steps: usize,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub method: FitMethod,
    pub result: std::result::Result<ThermalFit, String>,
}

#[derive(Debug, Clone)]
pub struct ViewObservables {
    pub moments: MagnetizationMoments,
    pub binder: Option<Binder>,
    pub structure: StructureFactorResult,
    pub energy_variance: f64,
    /// `None` when the feeding fit is unusable.
    pub specific_heat: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ThermalView {
    pub method: FitMethod,
    pub distribution: ThermalDistribution,
    pub observables: ViewObservables,
}

#[derive(Debug)]
pub struct ResultBundle {
    pub config: RunConfig,
    pub config_hash: String,
    pub prepared: Arc<Prepared>,
    pub schedule: RampSchedule,
    pub run: RunInfo,
    pub final_state: QuantumState,
    /// `P_n` over every eigenstate, in spectrum order.
    pub probabilities: Vec<f64>,
    pub diabatic_energy: EnergyMoments,
    pub fits: Vec<FitOutcome>,
    pub diabatic: ViewObservables,
    pub thermal: Vec<ThermalView>,
    pub agreement: Option<f64>,
    pub two_temperature: TwoTemperatureReport,
}

impl ResultBundle {
    pub fn fit(&self, method: FitMethod) -> Option<&ThermalFit> {
        self.fits.iter().find(|f| f.method == method).and_then(|f| f.result.as_ref().ok())
    }

    pub fn thermal_view(&self, method: FitMethod) -> Option<&ThermalView> {
        self.thermal.iter().find(|t| t.method == method)
    }

    /// The thermal view that feeds the configured observables.
    pub fn reference_thermal(&self) -> Option<&ThermalView> {
        self.thermal_view(self.config.thermal_fit)
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.prepared.spectrum
    }

    /// `P_n` over the ground sector, ascending in energy.
    pub fn ground_sector_probabilities(&self) -> Vec<f64> {
        self.prepared.ground_sector_states().iter().map(|&k| self.probabilities[k]).collect()
    }
}

pub fn stepper(cfg: &RunConfig) -> CrankNicolson {
    CrankNicolson::new(cfg.solver_tolerance, 200, cfg.shift_reference).with_phase(cfg.phase)
}

/// Observables compared between successive step-size halvings: ground-state
/// population, rescaled Binder cumulant, `S(0)`, `S(π)` and the diabatic
/// specific heat from the average fit. Undefined entries count as zero.
pub fn gate_observables(cfg: &RunConfig, prepared: &Prepared, state: &QuantumState) -> Result<Vec<f64>> {
    let p = eigenstate_probabilities(state, &prepared.spectrum)?;
    let view = EnsembleView::pure_with_hamiltonian(state, &prepared.hamiltonian);
    let g_bar = binder_cumulant(&view, cfg.sign.staggered()).map_or(0.0, |b| b.g_bar);
    let s = structure_factor(&view, &[0.0, core::f64::consts::PI])?;
    let energies = ensemble_energies(&prepared.spectrum, cfg.ensemble.is_restricted());
    let m = diabatic_moments(state, &prepared.hamiltonian);
    let cv = fit_beta_average(&energies, m.mean)
        .ok()
        .and_then(|f| specific_heat(&view, &f).ok())
        .unwrap_or(0.0);
    Ok(vec![p[0], g_bar, s.values[0], s.values[1], cv])
}

/// Runs the full pipeline from scratch.
pub fn run_experiment(cfg: &RunConfig) -> Result<ResultBundle> {
    let prepared = Arc::new(Prepared::new(cfg)?);
    run_prepared(cfg, prepared)
}

/// Runs the ramp and analysis on an already diagonalized final Hamiltonian.
pub fn run_prepared(cfg: &RunConfig, prepared: Arc<Prepared>) -> Result<ResultBundle> {
    cfg.validate()?;
    let sched = schedule(cfg, prepared.j0)?;
    if !prepared.matches(&sched) {
        return Err(HarnessError::config("prepared spectrum does not belong to this ramp's final field"));
    }
    let psi0 = initial_state(prepared.hamiltonian.basis());
    let mut cn = stepper(cfg);
    let converged = evolve_converged(&mut cn, &psi0, &prepared.hamiltonian, &sched, &cfg.dt, &[], |s| {
        gate_observables(cfg, &prepared, s).map_err(|e| match e {
            HarnessError::Numerical(e) => e,
            other => diabatherm_core::Error::InvalidParameter(other.to_string()),
        })
    })?;
    let traj = converged.trajectory;
    let run = RunInfo {
        dt: traj.dt,
        steps: traj.steps,
        halvings: converged.halvings,
        dt_change: converged.change,
        max_residual: traj.max_residual,
        max_norm_error: traj.max_norm_error,
        fallback_steps: traj.fallback_steps,
    };
    analyze(cfg, prepared, sched, traj.final_state, run)
}

fn view_observables(
    cfg: &RunConfig,
    view: &EnsembleView<'_>,
    fit: Option<&ThermalFit>,
    k: &[f64],
) -> Result<ViewObservables> {
    let staggered = cfg.sign.staggered();
    let structure = structure_factor(view, k)?;
    Ok(ViewObservables {
        moments: magnetization_moments(view, staggered),
        binder: binder_cumulant(view, staggered).ok(),
        structure,
        energy_variance: view.energy_variance().unwrap_or(f64::NAN),
        specific_heat: fit.and_then(|f| specific_heat(view, f).ok()),
    })
}

/// Everything downstream of the final state.
pub fn analyze(
    cfg: &RunConfig,
    prepared: Arc<Prepared>,
    sched: RampSchedule,
    final_state: QuantumState,
    run: RunInfo,
) -> Result<ResultBundle> {
    let spectrum = &prepared.spectrum;
    let h = &prepared.hamiltonian;
    let restricted = cfg.ensemble.is_restricted();
    let probabilities = eigenstate_probabilities(&final_state, spectrum)?;
    let diabatic_energy = diabatic_moments(&final_state, h);
    let energies = ensemble_energies(spectrum, restricted);
    let sector = prepared.ground_sector_states();

    let fits: Vec<FitOutcome> = cfg
        .fits
        .iter()
        .map(|&method| {
            let result = match method {
                FitMethod::Average => fit_beta_average(&energies, diabatic_energy.mean),
                FitMethod::Fluctuation => fit_beta_fluctuation(&energies, diabatic_energy.variance),
                FitMethod::Ratio => {
                    if sector.len() < 2 {
                        Err(diabatherm_core::Error::DegenerateGap)
                    } else {
                        fit_beta_ratio(
                            probabilities[sector[0]],
                            probabilities[sector[1]],
                            spectrum.energy(sector[1]) - spectrum.energy(sector[0]),
                        )
                    }
                }
            };
            let result = result.map(|f| f.restricted(restricted || method == FitMethod::Ratio));
            FitOutcome { method, result: result.map_err(|e| e.to_string()) }
        })
        .collect();

    let k = k_grid(cfg.k_points);
    let reference_fit = fits
        .iter()
        .find(|f| f.method == cfg.thermal_fit)
        .and_then(|f| f.result.as_ref().ok());
    let diabatic = view_observables(
        cfg,
        &EnsembleView::pure_with_hamiltonian(&final_state, h),
        reference_fit,
        &k,
    )?;

    let mut thermal = Vec::new();
    for outcome in &fits {
        let Ok(fit) = &outcome.result else { continue };
        if !fit.beta.is_finite() {
            continue;
        }
        let distribution = thermal_distribution(spectrum, fit.beta, restricted);
        let observables = view_observables(cfg, &EnsembleView::thermal(spectrum, &distribution), Some(fit), &k)?;
        thermal.push(ThermalView { method: outcome.method, distribution, observables });
    }

    let usable: Vec<ThermalFit> = fits.iter().filter_map(|f| f.result.clone().ok()).collect();
    let agreement = fit_agreement(&usable);
    let two_temperature = two_temperature_split(spectrum, &probabilities, TWO_TEMPERATURE_FLOOR);

    Ok(ResultBundle {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        prepared,
        schedule: sched,
        run,
        final_state,
        probabilities,
        diabatic_energy,
        fits,
        diabatic,
        thermal,
        agreement,
        two_temperature,
    })
}
