//! Flat `key = value` run configuration with dotted section keys.
//!
//! Every key has a default, so an empty file is a valid configuration. The
//! canonical form lists every key once in a fixed order; its SHA-256 is the
//! config hash stamped on all outputs.

use std::fmt::Write as _;
use std::path::Path;

use diabatherm_core::couplings::CouplingSign;
use diabatherm_core::evolve::DtPolicy;
use diabatherm_core::thermo::FitMethod;
use diabatherm_core::PhaseConvention;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Which eigenstates enter the partition function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ensemble {
    AllStates,
    GroundSector,
}

impl Ensemble {
    pub fn label(self) -> &'static str {
        match self {
            Ensemble::AllStates => "all",
            Ensemble::GroundSector => "ground-sector",
        }
    }

    pub fn is_restricted(self) -> bool {
        self == Ensemble::GroundSector
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxialSetting {
    /// Tune the axial frequency until the fitted exponent matches.
    Alpha(f64),
    /// Fixed axial COM frequency in Hz.
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_ions: usize,
    pub sign: CouplingSign,
    pub alpha_target: Option<f64>,
    pub omega_axial_hz: Option<f64>,
    pub omega_transverse_hz: f64,
    pub rabi_hz: f64,
    pub recoil_hz: f64,
    pub wavelength_m: f64,
    pub b0_over_j0: f64,
    pub j0_tau: f64,
    pub t_f_over_tau: f64,
    /// Overrides `j0_tau`: `τ = t_final / t_f_over_tau`.
    pub t_final_ms: Option<f64>,
    pub phase: PhaseConvention,
    pub shift_reference: bool,
    pub solver_tolerance: f64,
    pub dt: DtPolicy,
    pub ensemble: Ensemble,
    pub fits: Vec<FitMethod>,
    /// Fit whose temperature feeds the thermal observables and `C_v`.
    pub thermal_fit: FitMethod,
    pub k_points: usize,
    pub snapshot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_ions: 10,
            sign: CouplingSign::Ferromagnetic,
            alpha_target: Some(1.0),
            omega_axial_hz: None,
            omega_transverse_hz: 4.797e6,
            rabi_hz: 600e3,
            recoil_hz: 18.5e3,
            wavelength_m: 355e-9,
            b0_over_j0: 5.0,
            j0_tau: 0.5,
            t_f_over_tau: 6.0,
            t_final_ms: None,
            phase: PhaseConvention::Hbar,
            shift_reference: true,
            solver_tolerance: 1e-12,
            dt: DtPolicy::default(),
            ensemble: Ensemble::AllStates,
            fits: FitMethod::ALL.to_vec(),
            thermal_fit: FitMethod::Average,
            k_points: diabatherm_core::obs::DEFAULT_K_POINTS,
            snapshot: true,
        }
    }
}

/// Canonical key order.
pub const KEYS: &[&str] = &[
    "n_ions",
    "sign",
    "alpha_target",
    "trap.omega_axial_hz",
    "trap.omega_transverse_hz",
    "trap.rabi_hz",
    "trap.recoil_hz",
    "trap.wavelength_m",
    "ramp.b0_over_j0",
    "ramp.j0_tau",
    "ramp.t_f_over_tau",
    "ramp.t_final_ms",
    "evolve.phase",
    "evolve.shift_reference",
    "evolve.solver_tolerance",
    "dt.tau_fraction",
    "dt.tolerance",
    "dt.max_halvings",
    "dt.gate",
    "ensemble",
    "fits",
    "observables.thermal_fit",
    "observables.k_points",
    "output.snapshot",
];

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| HarnessError::config(format!("{key}: `{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(HarnessError::config(format!("{key}: `{value}` is not finite")));
    }
    Ok(v)
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| HarnessError::config(format!("{key}: `{value}` is not a non-negative integer")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(HarnessError::config(format!("{key}: `{value}` is not a boolean"))),
    }
}

fn is_unset(value: &str) -> bool {
    matches!(value, "none" | "auto" | "")
}

pub fn parse_sign(value: &str) -> Result<CouplingSign> {
    match value.to_ascii_lowercase().as_str() {
        "fm" | "ferromagnetic" => Ok(CouplingSign::Ferromagnetic),
        "afm" | "antiferromagnetic" => Ok(CouplingSign::Antiferromagnetic),
        _ => Err(HarnessError::config(format!("sign: `{value}` is neither fm nor afm"))),
    }
}

pub fn parse_fit(value: &str) -> Result<FitMethod> {
    FitMethod::ALL
        .into_iter()
        .find(|m| m.label() == value)
        .ok_or_else(|| HarnessError::config(format!("unknown fit method `{value}`")))
}

impl RunConfig {
    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(HarnessError::config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            seen.push(key);
            cfg.set(key, value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| HarnessError::config(format!("override `{o}` is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_ions" => self.n_ions = parse_usize(key, value)?,
            "sign" => self.sign = parse_sign(value)?,
            "alpha_target" => {
                self.alpha_target = if is_unset(value) { None } else { Some(parse_f64(key, value)?) }
            }
            "trap.omega_axial_hz" => {
                self.omega_axial_hz = if is_unset(value) { None } else { Some(parse_f64(key, value)?) }
            }
            "trap.omega_transverse_hz" => self.omega_transverse_hz = parse_f64(key, value)?,
            "trap.rabi_hz" => self.rabi_hz = parse_f64(key, value)?,
            "trap.recoil_hz" => self.recoil_hz = parse_f64(key, value)?,
            "trap.wavelength_m" => self.wavelength_m = parse_f64(key, value)?,
            "ramp.b0_over_j0" => self.b0_over_j0 = parse_f64(key, value)?,
            "ramp.j0_tau" => self.j0_tau = parse_f64(key, value)?,
            "ramp.t_f_over_tau" => self.t_f_over_tau = parse_f64(key, value)?,
            "ramp.t_final_ms" => {
                self.t_final_ms = if is_unset(value) { None } else { Some(parse_f64(key, value)?) }
            }
            "evolve.phase" => {
                self.phase = match value {
                    "hbar" => PhaseConvention::Hbar,
                    "planck" => PhaseConvention::Planck,
                    _ => return Err(HarnessError::config(format!("{key}: `{value}` is neither hbar nor planck"))),
                }
            }
            "evolve.shift_reference" => self.shift_reference = parse_bool(key, value)?,
            "evolve.solver_tolerance" => self.solver_tolerance = parse_f64(key, value)?,
            "dt.tau_fraction" => self.dt.tau_fraction = parse_f64(key, value)?,
            "dt.tolerance" => self.dt.tolerance = parse_f64(key, value)?,
            "dt.max_halvings" => self.dt.max_halvings = parse_usize(key, value)?,
            "dt.gate" => self.dt.gate = parse_bool(key, value)?,
            "ensemble" => {
                self.ensemble = match value {
                    "all" | "all-states" => Ensemble::AllStates,
                    "ground-sector" => Ensemble::GroundSector,
                    _ => return Err(HarnessError::config(format!("ensemble: `{value}` is neither all nor ground-sector"))),
                }
            }
            "fits" => {
                let mut fits = Vec::new();
                for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let m = parse_fit(item)?;
                    if !fits.contains(&m) {
                        fits.push(m);
                    }
                }
                fits.sort_by_key(|m| FitMethod::ALL.iter().position(|x| x == m));
                self.fits = fits;
            }
            "observables.thermal_fit" => self.thermal_fit = parse_fit(value)?,
            "observables.k_points" => self.k_points = parse_usize(key, value)?,
            "output.snapshot" => self.snapshot = parse_bool(key, value)?,
            _ => return Err(HarnessError::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let f = |x: f64| format!("{x}");
        Some(match key {
            "n_ions" => self.n_ions.to_string(),
            "sign" => self.sign.label().to_string(),
            "alpha_target" => self.alpha_target.map_or_else(|| "none".into(), f),
            "trap.omega_axial_hz" => self.omega_axial_hz.map_or_else(|| "auto".into(), f),
            "trap.omega_transverse_hz" => f(self.omega_transverse_hz),
            "trap.rabi_hz" => f(self.rabi_hz),
            "trap.recoil_hz" => f(self.recoil_hz),
            "trap.wavelength_m" => f(self.wavelength_m),
            "ramp.b0_over_j0" => f(self.b0_over_j0),
            "ramp.j0_tau" => f(self.j0_tau),
            "ramp.t_f_over_tau" => f(self.t_f_over_tau),
            "ramp.t_final_ms" => self.t_final_ms.map_or_else(|| "auto".into(), f),
            "evolve.phase" => self.phase.label().into(),
            "evolve.shift_reference" => self.shift_reference.to_string(),
            "evolve.solver_tolerance" => f(self.solver_tolerance),
            "dt.tau_fraction" => f(self.dt.tau_fraction),
            "dt.tolerance" => f(self.dt.tolerance),
            "dt.max_halvings" => self.dt.max_halvings.to_string(),
            "dt.gate" => self.dt.gate.to_string(),
            "ensemble" => self.ensemble.label().into(),
            "fits" => self.fits.iter().map(|m| m.label()).collect::<Vec<_>>().join(","),
            "observables.thermal_fit" => self.thermal_fit.label().into(),
            "observables.k_points" => self.k_points.to_string(),
            "output.snapshot" => self.snapshot.to_string(),
            _ => return None,
        })
    }

    /// How the axial frequency is chosen; exactly one of `alpha_target` and
    /// `trap.omega_axial_hz` must be set.
    pub fn axial(&self) -> Result<AxialSetting> {
        match (self.alpha_target, self.omega_axial_hz) {
            (Some(a), None) => Ok(AxialSetting::Alpha(a)),
            (None, Some(w)) => Ok(AxialSetting::Explicit(w)),
            (Some(_), Some(_)) => Err(HarnessError::config(
                "alpha_target and trap.omega_axial_hz are both set; set alpha_target = none to fix the axial frequency",
            )),
            (None, None) => Err(HarnessError::config("either alpha_target or trap.omega_axial_hz must be set")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !(2..=diabatherm_core::spin::DEFAULT_MAX_SPINS).contains(&self.n_ions) {
            return bad(format!(
                "n_ions must lie in 2..={}, got {}",
                diabatherm_core::spin::DEFAULT_MAX_SPINS,
                self.n_ions
            ));
        }
        for (key, v) in [
            ("trap.omega_transverse_hz", self.omega_transverse_hz),
            ("trap.rabi_hz", self.rabi_hz),
            ("trap.recoil_hz", self.recoil_hz),
            ("trap.wavelength_m", self.wavelength_m),
            ("ramp.b0_over_j0", self.b0_over_j0),
            ("ramp.j0_tau", self.j0_tau),
            ("ramp.t_f_over_tau", self.t_f_over_tau),
            ("evolve.solver_tolerance", self.solver_tolerance),
            ("dt.tau_fraction", self.dt.tau_fraction),
            ("dt.tolerance", self.dt.tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{key} must be positive, got {v}"));
            }
        }
        match self.axial()? {
            AxialSetting::Alpha(a) if !(a > 0.0 && a <= 3.0) => {
                return bad(format!("alpha_target must lie in (0, 3], got {a}"));
            }
            AxialSetting::Explicit(w) if !(w > 0.0 && w < self.omega_transverse_hz) => {
                return bad(format!("trap.omega_axial_hz must lie in (0, omega_transverse), got {w}"));
            }
            _ => {}
        }
        if let Some(t) = self.t_final_ms {
            if !(t >= 0.0 && t.is_finite()) {
                return bad(format!("ramp.t_final_ms must be non-negative, got {t}"));
            }
        }
        if self.fits.is_empty() {
            return bad("fits must name at least one method".into());
        }
        if self.k_points < 2 {
            return bad(format!("observables.k_points must be at least 2, got {}", self.k_points));
        }
        Ok(())
    }

    /// Every key in canonical order, one `key = value` line each.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("known key")).unwrap();
        }
        out
    }

    /// Lowercase hex SHA-256 of [`canonical_text`](Self::canonical_text).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }

    /// Final time in seconds for a given `J0`.
    pub fn t_final_s(&self, j0: f64) -> f64 {
        match self.t_final_ms {
            Some(ms) => ms * 1e-3,
            None => self.t_f_over_tau * self.j0_tau / j0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(&["n_ions=6", "sign=afm", "ramp.t_final_ms=2.5", "fits=ratio,average"]).unwrap();
        let again = RunConfig::parse(&cfg.canonical_text()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(again.fits, vec![FitMethod::Average, FitMethod::Ratio]);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.set("ramp.j0_tau", "0.25").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn explicit_axial_needs_alpha_cleared() {
        assert!(RunConfig::parse("trap.omega_axial_hz = 8e5\n").unwrap().validate().is_err());
        let cfg = RunConfig::parse("alpha_target = none\ntrap.omega_axial_hz = 8e5\n").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.axial().unwrap(), AxialSetting::Explicit(8e5));
        assert_eq!(cfg.get("alpha_target").unwrap(), "none");
        assert_eq!(RunConfig::parse(&cfg.canonical_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(HarnessError::Config(_))));
        assert!(RunConfig::parse("n_ions = 6\nn_ions = 8").is_err());
        assert!(RunConfig::parse("n_ions = six").is_err());
        assert!(RunConfig::parse("sign = up").is_err());
        assert!(RunConfig::parse("just text").is_err());
        assert!(RunConfig::parse("n_ions = 40").unwrap().validate().is_err());
        assert!(RunConfig::parse("ramp.j0_tau = -1").unwrap().validate().is_err());
        assert!(RunConfig::parse("fits = ").unwrap().validate().is_err());
    }
}
