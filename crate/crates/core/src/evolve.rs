//! All-x initial state, exponential field ramp and Crank-Nicolson stepping.
//!
//! With `H` in frequency units and the phase factor `κ` of the chosen
//! [`PhaseConvention`], the exact propagator over `dt` is `exp(−iκ H dt)`; its
//! Cayley form is `(1 + iκ dt H / 2) ψ' = (1 − iκ dt H / 2) ψ`.

use alloc::vec;
use alloc::vec::Vec;


use crate::spin::{IsingHamiltonian, SpinBasis};
use crate::{Error, PhaseConvention, Result, C64};
#[allow(unused_imports)]
use num_traits::Float;

/// `B_x(t) = b0 · exp(−t / tau)` for `0 ≤ t ≤ t_final`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampSchedule {
    pub b0: f64,
    pub tau: f64,
    pub t_final: f64,
}

impl RampSchedule {
    pub fn new(b0: f64, tau: f64, t_final: f64) -> Result<Self> {
        if !(b0 > 0.0 && b0.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("b0 must be positive, got {b0}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("tau must be positive, got {tau}")));
        }
        if !(t_final >= 0.0 && t_final.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "t_final must be non-negative, got {t_final}"
            )));
        }
        Ok(Self { b0, tau, t_final })
    }

    /// `b0 = b0_over_j0 · J_0`, `tau = j0_tau / J_0`,
    /// `t_final = t_f_over_tau · tau`.
    pub fn from_protocol(j0: f64, b0_over_j0: f64, j0_tau: f64, t_f_over_tau: f64) -> Result<Self> {
        let tau = j0_tau / j0;
        Self::new(b0_over_j0 * j0, tau, t_f_over_tau * tau)
    }

    /// Fixes the total time and derives `tau = t_final / t_f_over_tau`.
    pub fn with_final_time(j0: f64, b0_over_j0: f64, t_final: f64, t_f_over_tau: f64) -> Result<Self> {
        Self::new(b0_over_j0 * j0, t_final / t_f_over_tau, t_final)
    }

    pub fn field(&self, t: f64) -> f64 {
        self.b0 * (-t / self.tau).exp()
    }

    pub fn final_field(&self) -> f64 {
        self.field(self.t_final)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub amplitudes: Vec<C64>,
    /// Seconds.
    pub time: f64,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<C64>, time: f64) -> Result<Self> {
        let dim = amplitudes.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(Error::InvalidParameter("state length must be a power of two".into()));
        }
        Ok(Self { amplitudes, time })
    }

    /// Normalized state from real amplitudes.
    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        let norm = amplitudes.iter().map(|x| x * x).sum::<f64>().sqrt();
        Self::new(amplitudes.iter().map(|&x| C64::new(x / norm, 0.0)).collect(), 0.0)
    }

    pub fn n_spins(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &QuantumState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .norm_sqr()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// The `σ_x = +1` product state: every amplitude `2^{−N/2}`.
pub fn initial_state(basis: SpinBasis) -> QuantumState {
    let dim = basis.dimension();
    let a = 1.0 / (dim as f64).sqrt();
    QuantumState { amplitudes: vec![C64::new(a, 0.0); dim], time: 0.0 }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    /// `‖A ψ' − b‖ / ‖b‖` of the accepted solution.
    pub residual: f64,
    pub used_fallback: bool,
}

/// Crank-Nicolson integrator with reusable scratch space.
///
/// The linear system is solved by a Jacobi iteration preconditioned with the
/// diagonal (Ising) part; the transverse field is the only off-diagonal term
/// and is small against `1/(π dt)` at production steps. When the iteration
/// stalls, conjugate gradients on the normal equations take over.
///
/// With `shift_reference` the step uses `H − ⟨ψ|H|ψ⟩`, which only changes the
/// global phase of the exact propagator but keeps the populated energies near
/// zero, where the Cayley phase error `(κ E dt)³ / 12` is smallest.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub shift_reference: bool,
    pub phase: PhaseConvention,
    hpsi: Vec<C64>,
    rhs: Vec<C64>,
    x: Vec<C64>,
    tmp: Vec<C64>,
    precond: Vec<C64>,
    scratch: [Vec<C64>; 4],
}

impl Default for CrankNicolson {
    fn default() -> Self {
        Self::new(1e-12, 200, true)
    }
}

impl CrankNicolson {
    pub fn new(tolerance: f64, max_iterations: usize, shift_reference: bool) -> Self {
        Self {
            tolerance,
            max_iterations,
            shift_reference,
            phase: PhaseConvention::default(),
            hpsi: Vec::new(),
            rhs: Vec::new(),
            x: Vec::new(),
            tmp: Vec::new(),
            precond: Vec::new(),
            scratch: Default::default(),
        }
    }

    pub fn with_phase(mut self, phase: PhaseConvention) -> Self {
        self.phase = phase;
        self
    }

    fn ensure(&mut self, dim: usize) {
        let zero = C64::new(0.0, 0.0);
        for v in [&mut self.hpsi, &mut self.rhs, &mut self.x, &mut self.tmp, &mut self.precond] {
            v.resize(dim, zero);
        }
        for v in &mut self.scratch {
            v.resize(dim, zero);
        }
    }

    /// Advances `state` by `dt` under `h`, which should already carry the
    /// field at the step midpoint.
    pub fn step(&mut self, state: &mut QuantumState, h: &IsingHamiltonian, dt: f64) -> Result<StepReport> {
        let dim = h.dimension();
        if state.amplitudes.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: state.amplitudes.len() });
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!("dt must be positive, got {dt}")));
        }
        self.ensure(dim);
        let a = 0.5 * self.phase.angular_factor() * dt;
        let ia = C64::new(0.0, a);
        let psi = &state.amplitudes;

        h.apply(psi, &mut self.hpsi);
        let shift = if self.shift_reference {
            let num: f64 = psi.iter().zip(&self.hpsi).map(|(p, q)| (p.conj() * q).re).sum();
            let den: f64 = psi.iter().map(|p| p.norm_sqr()).sum();
            num / den
        } else {
            0.0
        };

        let diag = h.diagonal();
        for k in 0..dim {
            let hp = self.hpsi[k] - psi[k] * shift;
            self.rhs[k] = psi[k] - ia * hp;
            // Second-order guess for the Cayley image.
            self.x[k] = psi[k] - ia * hp * 2.0;
            self.precond[k] = (C64::new(1.0, 0.0) + ia * (diag[k] - shift)).inv();
        }
        let rhs_norm = norm(&self.rhs);

        let mut prev_delta = f64::INFINITY;
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        let mut stalled = false;
        while iterations < self.max_iterations {
            iterations += 1;
            self.tmp.copy_from_slice(&self.rhs);
            h.add_transverse(-ia, &self.x, &mut self.tmp);
            let mut delta = 0.0;
            let mut res = 0.0;
            for k in 0..dim {
                let next = self.precond[k] * self.tmp[k];
                let d = self.x[k] - next;
                delta += d.norm_sqr();
                // A x − b = (1 + ia(D − s)) (x − x_next) for the previous iterate.
                res += (d / self.precond[k]).norm_sqr();
                self.x[k] = next;
            }
            let delta = delta.sqrt();
            residual = res.sqrt() / rhs_norm;
            if residual < self.tolerance {
                break;
            }
            if iterations > 2 && delta > 0.8 * prev_delta {
                stalled = true;
                break;
            }
            prev_delta = delta;
        }

        let mut report = StepReport { iterations, residual, used_fallback: false };
        if stalled || residual >= self.tolerance {
            report = self.solve_normal_equations(h, shift, a)?;
        } else {
            // The accepted iterate is one sweep past the measured residual.
            report.residual = self.true_residual(h, shift, ia) / rhs_norm;
        }
        if report.residual >= self.tolerance {
            return Err(Error::LinearSolveNotConverged {
                iterations: report.iterations,
                residual: report.residual,
            });
        }
        state.amplitudes.copy_from_slice(&self.x);
        state.time += dt;
        Ok(report)
    }

    /// `‖(1 + ia(H − s)) x − rhs‖`.
    fn true_residual(&mut self, h: &IsingHamiltonian, shift: f64, ia: C64) -> f64 {
        h.apply(&self.x, &mut self.tmp);
        let mut r = 0.0;
        for k in 0..self.x.len() {
            let ax = self.x[k] + ia * (self.tmp[k] - self.x[k] * shift);
            r += (ax - self.rhs[k]).norm_sqr();
        }
        r.sqrt()
    }

    /// CG on `(1 + a²(H − s)²) x = (1 − ia(H − s)) rhs`.
    fn solve_normal_equations(&mut self, h: &IsingHamiltonian, shift: f64, a: f64) -> Result<StepReport> {
        let dim = self.x.len();
        let ia = C64::new(0.0, a);
        let rhs_norm = norm(&self.rhs);
        let [r, p, ap, work] = &mut self.scratch;

        let shifted = |h: &IsingHamiltonian, v: &[C64], out: &mut [C64]| {
            h.apply(v, out);
            for k in 0..v.len() {
                out[k] -= v[k] * shift;
            }
        };
        // normal(v) = v + a² H'(H' v)
        let normal = |h: &IsingHamiltonian, v: &[C64], out: &mut [C64], work: &mut [C64]| {
            shifted(h, v, work);
            shifted(h, work, out);
            for k in 0..v.len() {
                out[k] = v[k] + out[k] * (a * a);
            }
        };

        // b' = A^H rhs
        shifted(h, &self.rhs, work);
        let mut bprime = vec![C64::new(0.0, 0.0); dim];
        for k in 0..dim {
            bprime[k] = self.rhs[k] - ia * work[k];
        }
        self.x.copy_from_slice(&self.rhs);
        normal(h, &self.x, ap, work);
        for k in 0..dim {
            r[k] = bprime[k] - ap[k];
            p[k] = r[k];
        }
        let mut rr: f64 = r.iter().map(|z| z.norm_sqr()).sum();
        let bnorm = norm(&bprime);
        let mut iterations = 0;
        while iterations < self.max_iterations && rr.sqrt() > 0.1 * self.tolerance * bnorm {
            iterations += 1;
            normal(h, p, ap, work);
            let pap: f64 = p.iter().zip(ap.iter()).map(|(x, y)| (x.conj() * y).re).sum();
            let alpha = rr / pap;
            for k in 0..dim {
                self.x[k] += p[k] * alpha;
                r[k] -= ap[k] * alpha;
            }
            let rr_new: f64 = r.iter().map(|z| z.norm_sqr()).sum();
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..dim {
                p[k] = r[k] + p[k] * beta;
            }
        }
        let residual = self.true_residual(h, shift, ia) / rhs_norm;
        Ok(StepReport { iterations, residual, used_fallback: true })
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// One Crank-Nicolson step with default solver settings.
pub fn crank_nicolson_step(state: &QuantumState, h: &IsingHamiltonian, dt: f64) -> Result<QuantumState> {
    let mut out = state.clone();
    CrankNicolson::default().step(&mut out, h, dt)?;
    Ok(out)
}

/// Outcome of one fixed-step integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: QuantumState,
    /// States at the requested sample times.
    pub samples: Vec<QuantumState>,
    pub steps: usize,
    pub dt: f64,
    pub max_residual: f64,
    /// Largest `|‖ψ‖ − 1|` seen at any step.
    pub max_norm_error: f64,
    pub fallback_steps: usize,
}

/// Integrates `state0` through `schedule` with the field evaluated at step
/// midpoints. `h` supplies the Ising diagonal; its own field is ignored.
///
/// `dt` is adjusted to divide `t_final` exactly. Each entry of `sample_times`
/// is rounded to the nearest step; `observer` sees the state there and a copy
/// is kept in [`Trajectory::samples`].
pub fn evolve<F>(
    state0: QuantumState,
    h: &IsingHamiltonian,
    schedule: &RampSchedule,
    dt: f64,
    sample_times: &[f64],
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(f64, &QuantumState),
{
    evolve_with(&mut CrankNicolson::default(), state0, h, schedule, dt, sample_times, &mut observer)
}

pub fn evolve_with(
    stepper: &mut CrankNicolson,
    state0: QuantumState,
    h: &IsingHamiltonian,
    schedule: &RampSchedule,
    dt: f64,
    sample_times: &[f64],
    observer: &mut dyn FnMut(f64, &QuantumState),
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(alloc::format!("dt must be positive, got {dt}")));
    }
    let steps = if schedule.t_final == 0.0 {
        0
    } else {
        ((schedule.t_final / dt).round() as usize).max(1)
    };
    let dt = if steps == 0 { dt } else { schedule.t_final / steps as f64 };

    let mut sample_steps: Vec<usize> = sample_times
        .iter()
        .map(|&t| ((t / dt).round().max(0.0) as usize).min(steps))
        .collect();
    sample_steps.sort_unstable();
    sample_steps.dedup();
    let mut next_sample = 0;

    let mut state = state0;
    state.time = 0.0;
    let mut samples = Vec::with_capacity(sample_steps.len());
    let mut record = |k: usize, state: &QuantumState, next: &mut usize, samples: &mut Vec<QuantumState>| {
        while *next < sample_steps.len() && sample_steps[*next] == k {
            observer(state.time, state);
            samples.push(state.clone());
            *next += 1;
        }
    };

    let mut max_residual = 0.0f64;
    let mut max_norm_error = (state.norm() - 1.0).abs();
    let mut fallback_steps = 0;
    record(0, &state, &mut next_sample, &mut samples);
    for k in 0..steps {
        let t_mid = (k as f64 + 0.5) * dt;
        let hk = h.with_field(schedule.field(t_mid));
        let report = stepper.step(&mut state, &hk, dt)?;
        state.time = (k + 1) as f64 * dt;
        max_residual = max_residual.max(report.residual);
        fallback_steps += report.used_fallback as usize;
        max_norm_error = max_norm_error.max((state.norm() - 1.0).abs());
        record(k + 1, &state, &mut next_sample, &mut samples);
    }

    Ok(Trajectory { final_state: state, samples, steps, dt, max_residual, max_norm_error, fallback_steps })
}

/// Step-size policy: start at `tau / tau_fraction` and halve until the
/// supplied observables move by less than `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtPolicy {
    pub tau_fraction: f64,
    pub tolerance: f64,
    pub max_halvings: usize,
    pub gate: bool,
}

impl Default for DtPolicy {
    fn default() -> Self {
        Self { tau_fraction: 2000.0, tolerance: 1e-6, max_halvings: 8, gate: true }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergedRun {
    pub trajectory: Trajectory,
    /// Observables of the accepted (finest) run.
    pub observables: Vec<f64>,
    /// Largest observable change at the last halving; zero without a gate.
    pub change: f64,
    pub halvings: usize,
}

/// Runs [`evolve`] under the step-size convergence gate.
///
/// `metric` maps a final state to the observables that must agree between
/// successive halvings.
pub fn evolve_converged<M>(
    stepper: &mut CrankNicolson,
    state0: &QuantumState,
    h: &IsingHamiltonian,
    schedule: &RampSchedule,
    policy: &DtPolicy,
    sample_times: &[f64],
    mut metric: M,
) -> Result<ConvergedRun>
where
    M: FnMut(&QuantumState) -> Result<Vec<f64>>,
{
    let dt0 = schedule.tau / policy.tau_fraction;
    let mut run = |dt: f64| evolve_with(stepper, state0.clone(), h, schedule, dt, sample_times, &mut |_, _| {});

    let first = run(dt0)?;
    let first_obs = metric(&first.final_state)?;
    if !policy.gate || first.steps == 0 {
        return Ok(ConvergedRun { trajectory: first, observables: first_obs, change: 0.0, halvings: 0 });
    }
    let (mut prev_obs, mut change) = (first_obs, f64::INFINITY);
    let mut dt = dt0;
    for halvings in 1..=policy.max_halvings {
        dt *= 0.5;
        let traj = run(dt)?;
        let obs = metric(&traj.final_state)?;
        change = prev_obs
            .iter()
            .zip(&obs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < policy.tolerance {
            return Ok(ConvergedRun { trajectory: traj, observables: obs, change, halvings });
        }
        prev_obs = obs;
    }
    Err(Error::StepSizeNotConverged { halvings: policy.max_halvings, change, dt })
}
