//! Result-bundle files.
//!
//! Energies, temperatures and couplings are written in kHz, inverse
//! temperatures in 1/kHz, times in ms. Every CSV carries a leading
//! `config_hash` column; text files carry a `config_hash` line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use diabatherm_core::spin::SymmetrySector;
use diabatherm_core::thermo::FitMethod;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::pipeline::{run_experiment, ResultBundle, RunInfo};
use crate::snapshot;

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CONFIG_FILE: &str = "config.txt";
pub const PROVENANCE_FILE: &str = "provenance.txt";
pub const PARTIAL_MARKER: &str = "PARTIAL";
pub const STATE_FILE: &str = "final_state.bin";

pub const COUPLINGS_CSV: &str = "couplings.csv";
pub const SPECTRUM_CSV: &str = "spectrum.csv";
pub const FIG1_CSV: &str = "fig1_probabilities.csv";
pub const OBSERVABLES_CSV: &str = "observables.csv";
pub const STRUCTURE_CSV: &str = "fig3_structure.csv";
pub const CORRELATIONS_CSV: &str = "correlations.csv";
pub const FITS_CSV: &str = "fits.csv";
pub const TWO_TEMPERATURE_CSV: &str = "two_temperature.csv";

pub const BUNDLE_CSVS: [&str; 8] = [
    COUPLINGS_CSV,
    SPECTRUM_CSV,
    FIG1_CSV,
    OBSERVABLES_CSV,
    STRUCTURE_CSV,
    CORRELATIONS_CSV,
    FITS_CSV,
    TWO_TEMPERATURE_CSV,
];

const KHZ: f64 = 1e3;

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn sector_label(s: SymmetrySector) -> String {
    let c = |v: i8| if v > 0 { '+' } else { '-' };
    format!("{}{}", c(s.spatial.sign()), c(s.spin.sign()))
}

fn beta_per_khz(beta: f64) -> f64 {
    beta * KHZ
}

fn temperature_khz(beta: f64) -> f64 {
    1.0 / beta / KHZ
}

pub(crate) struct Table {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Table {
    pub(crate) fn create<S: AsRef<str>>(path: PathBuf, header: &[S]) -> Result<Self> {
        let writer = csv::Writer::from_path(&path).map_err(|source| HarnessError::Csv { path: path.clone(), source })?;
        let mut t = Self { path, writer };
        t.row(header.iter().map(|s| s.as_ref().to_string()))?;
        Ok(t)
    }

    pub(crate) fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) -> Result<()> {
        let fields: Vec<String> = fields.into_iter().collect();
        self.writer
            .write_record(&fields)
            .map_err(|source| HarnessError::Csv { path: self.path.clone(), source })
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| HarnessError::io(&self.path, e))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// `key = value` lines in a stable order.
pub fn provenance(bundle: &ResultBundle) -> Vec<(&'static str, String)> {
    let p = &bundle.prepared;
    let r = &bundle.run;
    let fit = p.trap.couplings.fit.as_ref();
    vec![
        ("schema_version", SCHEMA_VERSION.to_string()),
        ("code_version", CODE_VERSION.to_string()),
        ("config_hash", bundle.config_hash.clone()),
        ("phase_convention", bundle.config.phase.label().to_string()),
        ("omega_axial_hz", num(p.trap.spec.omega_axial)),
        ("alpha_fit", opt(fit.map(|f| f.alpha))),
        ("alpha_fit_residual", opt(fit.map(|f| f.residual))),
        ("j0_khz", num(p.j0 / KHZ)),
        ("tau_ms", num(bundle.schedule.tau * 1e3)),
        ("t_final_ms", num(bundle.schedule.t_final * 1e3)),
        ("b_final_khz", num(bundle.schedule.final_field() / KHZ)),
        ("ground_sector", sector_label(p.spectrum.ground_sector())),
        ("ground_energy_khz", num(p.spectrum.ground_energy() / KHZ)),
        ("parity_residual", num(p.spectrum.max_parity_residual())),
        ("dt_s", num(r.dt)),
        ("steps", r.steps.to_string()),
        ("dt_halvings", r.halvings.to_string()),
        ("dt_change", num(r.dt_change)),
        ("max_solver_residual", num(r.max_residual)),
        ("max_norm_error", num(r.max_norm_error)),
        ("fallback_steps", r.fallback_steps.to_string()),
        ("fit_agreement", opt(bundle.agreement)),
    ]
}

/// Reads a `key = value` file, skipping blank and `#` lines.
pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::bundle(path, format!("malformed line {line:?}")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Recovers the step-size diagnostics recorded in a provenance file.
pub fn run_info_from(prov: &BTreeMap<String, String>, path: &Path) -> Result<RunInfo> {
    fn field<T: std::str::FromStr>(prov: &BTreeMap<String, String>, path: &Path, key: &str) -> Result<T> {
        prov.get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| HarnessError::bundle(path, format!("provenance lacks a valid {key}")))
    }
    Ok(RunInfo {
        dt: field(prov, path, "dt_s")?,
        steps: field(prov, path, "steps")?,
        halvings: field(prov, path, "dt_halvings")?,
        dt_change: field(prov, path, "dt_change")?,
        max_residual: field(prov, path, "max_solver_residual")?,
        max_norm_error: field(prov, path, "max_norm_error")?,
        fallback_steps: field(prov, path, "fallback_steps")?,
    })
}

fn config_text(cfg: &RunConfig, hash: &str) -> String {
    format!("# config_hash = {hash}\n{}", cfg.canonical_text())
}

/// Writes every bundle file into `dir`, which must exist.
pub fn write_bundle(bundle: &ResultBundle, dir: &Path) -> Result<()> {
    let hash = bundle.config_hash.as_str();
    let h = || hash.to_string();
    let spectrum = bundle.spectrum();
    let e0 = spectrum.ground_energy();

    write_text(&dir.join(CONFIG_FILE), &config_text(&bundle.config, hash))?;

    let mut t = Table::create(dir.join(COUPLINGS_CSV), &["config_hash", "i", "j", "j_khz"])?;
    let c = &bundle.prepared.couplings;
    for i in 0..c.n() {
        for j in i + 1..c.n() {
            t.row([h(), (i + 1).to_string(), (j + 1).to_string(), num(c.get(i, j) / KHZ)])?;
        }
    }
    t.finish()?;

    let mut t = Table::create(
        dir.join(SPECTRUM_CSV),
        &["config_hash", "n", "energy_khz", "e_minus_e0_khz", "sector", "orbit_size"],
    )?;
    for n in 0..spectrum.len() {
        t.row([
            h(),
            n.to_string(),
            num(spectrum.energy(n) / KHZ),
            num((spectrum.energy(n) - e0) / KHZ),
            sector_label(spectrum.sector(n)),
            spectrum.dominant_orbit_size(n).to_string(),
        ])?;
    }
    t.finish()?;

    let thermal_p: Vec<Option<Vec<f64>>> = FitMethod::ALL
        .iter()
        .map(|&m| bundle.thermal_view(m).map(|v| v.distribution.dense(spectrum.len())))
        .collect();
    let mut t = Table::create(
        dir.join(FIG1_CSV),
        &[
            "config_hash",
            "n",
            "e_minus_e0_khz",
            "p_dia",
            "p_therm_average",
            "p_therm_fluctuation",
            "p_therm_ratio",
            "sector",
        ],
    )?;
    for n in 0..spectrum.len() {
        let mut row = vec![h(), n.to_string(), num((spectrum.energy(n) - e0) / KHZ), num(bundle.probabilities[n])];
        row.extend(thermal_p.iter().map(|p| p.as_ref().map(|p| num(p[n])).unwrap_or_default()));
        row.push(sector_label(spectrum.sector(n)));
        t.row(row)?;
    }
    t.finish()?;

    let mut t = Table::create(
        dir.join(OBSERVABLES_CSV),
        &[
            "config_hash",
            "view",
            "fit",
            "beta_per_khz",
            "t_eff_khz",
            "m2",
            "m4",
            "g_s",
            "g_bar",
            "energy_variance_khz2",
            "cv",
            "s_peak_k",
        ],
    )?;
    let reference = bundle.fit(bundle.config.thermal_fit);
    let mut views = vec![("diabatic", bundle.config.thermal_fit, reference.map(|f| f.beta), &bundle.diabatic)];
    for tv in &bundle.thermal {
        views.push(("thermal", tv.method, Some(tv.distribution.beta), &tv.observables));
    }
    for (view, method, beta, o) in views {
        t.row([
            h(),
            view.to_string(),
            method.label().to_string(),
            opt(beta.map(beta_per_khz)),
            opt(beta.map(temperature_khz)),
            num(o.moments.m2),
            num(o.moments.m4),
            opt(o.binder.map(|b| b.g_s)),
            opt(o.binder.map(|b| b.g_bar)),
            num(o.energy_variance / (KHZ * KHZ)),
            opt(o.specific_heat),
            num(o.structure.peak_wavenumber()),
        ])?;
    }
    t.finish()?;

    let mut t = Table::create(
        dir.join(STRUCTURE_CSV),
        &["config_hash", "k", "s_dia", "s_therm_average", "s_therm_fluctuation", "s_therm_ratio"],
    )?;
    let thermal_s: Vec<Option<&Vec<f64>>> = FitMethod::ALL
        .iter()
        .map(|&m| bundle.thermal_view(m).map(|v| &v.observables.structure.values))
        .collect();
    for (i, &k) in bundle.diabatic.structure.wavenumbers.iter().enumerate() {
        let mut row = vec![h(), num(k), num(bundle.diabatic.structure.values[i])];
        row.extend(thermal_s.iter().map(|s| s.map(|s| num(s[i])).unwrap_or_default()));
        t.row(row)?;
    }
    t.finish()?;

    let mut t = Table::create(
        dir.join(CORRELATIONS_CSV),
        &["config_hash", "r", "c_dia", "c_therm_average", "c_therm_fluctuation", "c_therm_ratio"],
    )?;
    let thermal_c: Vec<Option<&Vec<f64>>> = FitMethod::ALL
        .iter()
        .map(|&m| bundle.thermal_view(m).map(|v| &v.observables.structure.correlations))
        .collect();
    for (r, &c) in bundle.diabatic.structure.correlations.iter().enumerate() {
        let mut row = vec![h(), r.to_string(), num(c)];
        row.extend(thermal_c.iter().map(|s| s.map(|s| num(s[r])).unwrap_or_default()));
        t.row(row)?;
    }
    t.finish()?;

    let mut t = Table::create(
        dir.join(FITS_CSV),
        &[
            "config_hash",
            "fit",
            "status",
            "beta_per_khz",
            "t_eff_khz",
            "converged",
            "non_thermal",
            "at_cap",
            "sector_restricted",
            "residual",
            "message",
        ],
    )?;
    for outcome in &bundle.fits {
        let row = match &outcome.result {
            Ok(f) => vec![
                h(),
                outcome.method.label().to_string(),
                "ok".to_string(),
                num(beta_per_khz(f.beta)),
                num(temperature_khz(f.beta)),
                f.converged.to_string(),
                f.non_thermal.to_string(),
                f.at_cap.to_string(),
                f.sector_restricted.to_string(),
                num(f.residual),
                String::new(),
            ],
            Err(msg) => {
                let mut row = vec![h(), outcome.method.label().to_string(), "failed".to_string()];
                row.extend(std::iter::repeat_n(String::new(), 7));
                row.push(msg.clone());
                row
            }
        };
        t.row(row)?;
    }
    t.finish()?;

    let mut t = Table::create(
        dir.join(TWO_TEMPERATURE_CSV),
        &["config_hash", "sector", "orbit_size", "beta_per_khz", "t_eff_khz", "states_used"],
    )?;
    for g in &bundle.two_temperature.groups {
        t.row([
            h(),
            sector_label(bundle.two_temperature.sector),
            g.orbit_size.to_string(),
            num(beta_per_khz(g.beta)),
            num(temperature_khz(g.beta)),
            g.states_used.to_string(),
        ])?;
    }
    t.finish()?;

    if bundle.config.snapshot {
        snapshot::write(&dir.join(STATE_FILE), &bundle.final_state, &snapshot::hash_bytes(hash)?)?;
    }

    let prov: String = provenance(bundle).into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    write_text(&dir.join(PROVENANCE_FILE), &prov)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Runs `cfg` and writes its bundle into `dir`. On failure the config and a
/// `PARTIAL` marker holding the diagnostic are left behind.
pub fn run_to_dir(cfg: &RunConfig, dir: &Path) -> Result<ResultBundle> {
    create_dir(dir)?;
    let marker = dir.join(PARTIAL_MARKER);
    write_text(&marker, "run in progress\n")?;
    let hash = cfg.hash();
    write_text(&dir.join(CONFIG_FILE), &config_text(cfg, &hash))?;
    let outcome = run_experiment(cfg).and_then(|b| write_bundle(&b, dir).map(|_| b));
    match outcome {
        Ok(bundle) => {
            fs::remove_file(&marker).map_err(|e| HarnessError::io(&marker, e))?;
            Ok(bundle)
        }
        Err(e) => {
            write_text(&marker, &format!("{e}\n"))?;
            Err(e)
        }
    }
}

/// Validates a bundle directory written by [`write_bundle`].
pub fn validate_bundle(dir: &Path) -> Result<BTreeMap<String, String>> {
    let fail = |reason: String| HarnessError::bundle(dir, reason);
    if dir.join(PARTIAL_MARKER).exists() {
        let why = fs::read_to_string(dir.join(PARTIAL_MARKER)).unwrap_or_default();
        return Err(fail(format!("bundle is partial: {}", why.trim())));
    }
    let prov_path = dir.join(PROVENANCE_FILE);
    if !prov_path.exists() {
        return Err(fail("missing provenance".into()));
    }
    let prov = read_key_values(&prov_path)?;
    let schema = prov.get("schema_version").ok_or_else(|| fail("provenance lacks schema_version".into()))?;
    if schema != &SCHEMA_VERSION.to_string() {
        return Err(fail(format!("schema version {schema} does not match {SCHEMA_VERSION}")));
    }
    let hash = prov.get("config_hash").ok_or_else(|| fail("provenance lacks config_hash".into()))?;
    run_info_from(&prov, &prov_path)?;

    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    if &cfg.hash() != hash {
        return Err(fail("config.txt does not match the recorded config hash".into()));
    }
    for name in BUNDLE_CSVS {
        let path = dir.join(name);
        let mut reader = csv::Reader::from_path(&path).map_err(|source| HarnessError::Csv { path: path.clone(), source })?;
        let headers = reader.headers().map_err(|source| HarnessError::Csv { path: path.clone(), source })?;
        if headers.get(0) != Some("config_hash") {
            return Err(fail(format!("{name} lacks a leading config_hash column")));
        }
        for record in reader.records() {
            let record = record.map_err(|source| HarnessError::Csv { path: path.clone(), source })?;
            if record.get(0) != Some(hash.as_str()) {
                return Err(fail(format!("{name} has a row from another config")));
            }
        }
    }
    if !cfg.snapshot {
        return Ok(prov);
    }
    let snap = snapshot::read(&dir.join(STATE_FILE))?;
    if snap.config_hash != snapshot::hash_bytes(hash)? {
        return Err(fail("final state snapshot belongs to another config".into()));
    }
    if snap.state.n_spins() != cfg.n_ions {
        return Err(fail("final state has the wrong number of spins".into()));
    }
    Ok(prov)
}
