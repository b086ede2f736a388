use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} = {requested} exceeds the configured maximum of {max}")]
    TooLarge {
        what: &'static str,
        requested: usize,
        max: usize,
    },

    #[error("equilibrium solver did not converge after {iterations} iterations (residual {residual:e})")]
    EquilibriumNotConverged { iterations: usize, residual: f64 },

    #[error("transverse zigzag instability: mode {mode} has stiffness eigenvalue {eigenvalue:e}")]
    ZigzagInstability { mode: usize, eigenvalue: f64 },

    #[error("detuning resonance with transverse mode {mode} (|mu^2 - omega^2| / mu^2 = {relative_gap:e})")]
    DetuningResonance { mode: usize, relative_gap: f64 },

    #[error("power-law fit needs at least {required} ions, got {got}")]
    TooFewIons { required: usize, got: usize },

    #[error("target alpha {target} is unreachable; achievable range is [{min}, {max}]")]
    AlphaUnreachable { target: f64, min: f64, max: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parity labeling failed: residual {residual:e} exceeds tolerance")]
    ParityLabeling { residual: f64 },

    #[error("linear solve did not converge after {iterations} iterations (residual {residual:e})")]
    LinearSolveNotConverged { iterations: usize, residual: f64 },

    #[error("time step did not converge: observables still changed by {change:e} after {halvings} halvings (dt = {dt:e} s)")]
    StepSizeNotConverged { halvings: usize, change: f64, dt: f64 },

    #[error("target energy {target:e} Hz is at or below the ground-state energy {ground:e} Hz")]
    SubGroundStateEnergy { target: f64, ground: f64 },

    #[error("target energy {target:e} Hz is at or above the highest eigenvalue {top:e} Hz")]
    AboveSpectrum { target: f64, top: f64 },

    #[error("target variance {target:e} Hz^2 exceeds the largest thermal variance {max:e} Hz^2")]
    VarianceUnreachable { target: f64, max: f64 },

    #[error("probability ratio is undefined (p_gs = {p_gs:e}, p_1 = {p_1:e})")]
    UndefinedRatio { p_gs: f64, p_1: f64 },

    #[error("degenerate gap between ground and first excited state")]
    DegenerateGap,

    #[error("ensemble has zero magnetization variance; Binder cumulant undefined")]
    ZeroVariance,

    #[error("effective-temperature fit refused: {0}")]
    FitRefused(&'static str),
}
