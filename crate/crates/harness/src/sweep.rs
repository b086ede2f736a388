//! Parameter sweeps over a cartesian grid.
//!
//! A grid file holds `key = v1, v2, ...` lines using the run-config keys. The
//! first line varies slowest. Each point gets its own bundle directory;
//! merged figure tables are rebuilt from those bundles afterwards.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::emit::{self, Table, OBSERVABLES_CSV, PARTIAL_MARKER};
use crate::error::{HarnessError, Result};
use crate::pipeline::{run_prepared, schedule, Prepared};

/// Environment variable that overrides the worker count.
pub const JOBS_ENV: &str = "DIABATHERM_JOBS";
/// Hard limit on the number of grid points.
pub const MAX_POINTS: usize = 10_000;

pub const POINTS_CSV: &str = "points.csv";
pub const FAILURES_CSV: &str = "failures.csv";
pub const FIG1_CSV: &str = "fig1_probabilities.csv";
pub const FIG2_CSV: &str = "fig2_binder.csv";
pub const FIG3_CSV: &str = "fig3_structure.csv";
pub const FIG4_CSV: &str = "fig4_specific_heat.csv";

/// Keys that leave the final Hamiltonian unchanged.
const RAMP_ONLY_KEYS: [&str; 12] = [
    "ramp.j0_tau",
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
];

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, values) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::config(format!("grid line {}: expected key = v1, v2, ...", lineno + 1)))?;
            let key = key.trim().to_string();
            if key == "fits" {
                return Err(HarnessError::config("fits cannot be swept; set it in the base config"));
            }
            if axes.iter().any(|(k, _)| *k == key) {
                return Err(HarnessError::config(format!("grid key {key} appears twice")));
            }
            let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
            if values.iter().any(String::is_empty) {
                return Err(HarnessError::config(format!("grid key {key} has an empty value")));
            }
            axes.push((key, values));
        }
        Ok(Self { axes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Assignments of every point, last axis varying fastest.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        let mut out = vec![Vec::new()];
        for (key, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((key.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Concrete configs, validated up front.
    pub fn expand(&self, base: &RunConfig) -> Result<Vec<RunConfig>> {
        if self.len() > MAX_POINTS {
            return Err(HarnessError::config(format!("grid has {} points; limit is {MAX_POINTS}", self.len())));
        }
        self.points()
            .into_iter()
            .map(|assignments| {
                let mut cfg = base.clone();
                for (k, v) in &assignments {
                    cfg.set(k, v)?;
                }
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

/// Configs with equal keys share a final Hamiltonian.
pub fn hamiltonian_key(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    let defaults = RunConfig::default();
    for key in RAMP_ONLY_KEYS {
        let v = defaults.get(key).expect("known key");
        c.set(key, &v).expect("default value parses");
    }
    let zero_time = matches!(cfg.t_final_ms, Some(t) if t == 0.0);
    c.t_final_ms = None;
    format!("{}zero_time = {zero_time}\n", c.canonical_text())
}

#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub index: usize,
    pub dir: PathBuf,
    pub config_hash: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<PointOutcome>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }
}

pub fn point_dir_name(index: usize) -> String {
    format!("point_{index:04}")
}

/// Worker count: explicit value, then the environment, then all cores.
pub fn resolve_jobs(explicit: Option<usize>) -> Result<usize> {
    if let Some(j) = explicit {
        return Ok(j);
    }
    match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| HarnessError::config(format!("{JOBS_ENV} must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn run_point(cfg: &RunConfig, prepared: &std::result::Result<Arc<Prepared>, String>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let marker = dir.join(PARTIAL_MARKER);
    fs::write(&marker, "run in progress\n").map_err(|e| HarnessError::io(&marker, e))?;
    let outcome = (|| {
        let prepared = match prepared {
            Ok(p) if p.matches(&schedule(cfg, p.j0)?) => p.clone(),
            Ok(_) => Arc::new(Prepared::new(cfg)?),
            Err(msg) => return Err(HarnessError::Config(msg.clone())),
        };
        let bundle = run_prepared(cfg, prepared)?;
        emit::write_bundle(&bundle, dir)
    })();
    match outcome {
        Ok(()) => fs::remove_file(&marker).map_err(|e| HarnessError::io(&marker, e)),
        Err(e) => {
            let _ = fs::write(&marker, format!("{e}\n"));
            Err(e)
        }
    }
}

/// Runs every grid point into `out/point_NNNN` and writes the merged tables.
/// Point failures are recorded and do not stop the sweep.
pub fn run_sweep(base: &RunConfig, grid: &Grid, out: &Path, jobs: usize) -> Result<SweepReport> {
    let configs = grid.expand(base)?;
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::config(format!("cannot start worker pool: {e}")))?;

    let mut keys: Vec<(String, usize)> = Vec::new();
    let key_of: Vec<String> = configs.iter().map(hamiltonian_key).collect();
    for (i, k) in key_of.iter().enumerate() {
        if !keys.iter().any(|(known, _)| known == k) {
            keys.push((k.clone(), i));
        }
    }

    let points = pool.install(|| {
        let prepared: HashMap<String, std::result::Result<Arc<Prepared>, String>> = keys
            .par_iter()
            .map(|(k, i)| (k.clone(), Prepared::new(&configs[*i]).map(Arc::new).map_err(|e| e.to_string())))
            .collect();
        configs
            .par_iter()
            .enumerate()
            .map(|(index, cfg)| {
                let dir = out.join(point_dir_name(index));
                let error = run_point(cfg, &prepared[&key_of[index]], &dir).err().map(|e| {
                    log::warn!("point {index} failed: {e}");
                    e.to_string()
                });
                PointOutcome { index, dir, config_hash: cfg.hash(), error }
            })
            .collect::<Vec<_>>()
    });

    let report = SweepReport { points };
    merge(grid, &report, out)?;
    Ok(report)
}

type Records = Vec<BTreeMap<String, String>>;

fn read_records(path: &Path) -> Result<Records> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })?;
    let headers = reader
        .headers()
        .map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })?
        .clone();
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|source| HarnessError::Csv { path: path.to_path_buf(), source })?;
            Ok(headers.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}

struct PointData {
    index: usize,
    hash: String,
    cfg: RunConfig,
    prov: BTreeMap<String, String>,
    fig1: Records,
    observables: Records,
    structure: Records,
}

fn load_point(p: &PointOutcome) -> Result<PointData> {
    let prov = emit::validate_bundle(&p.dir)?;
    let cfg = RunConfig::load(&p.dir.join(emit::CONFIG_FILE))?;
    let expected = [
        (emit::FIG1_CSV, FIG1_HEADER.as_slice()),
        (OBSERVABLES_CSV, OBSERVABLES_HEADER.as_slice()),
        (emit::STRUCTURE_CSV, STRUCTURE_HEADER.as_slice()),
    ];
    for (name, header) in expected {
        let path = p.dir.join(name);
        let mut reader = csv::Reader::from_path(&path).map_err(|source| HarnessError::Csv { path: path.clone(), source })?;
        let found = reader.headers().map_err(|source| HarnessError::Csv { path: path.clone(), source })?;
        if !found.iter().eq(header.iter().copied()) {
            return Err(HarnessError::bundle(&p.dir, format!("{name} has an unexpected schema")));
        }
    }
    Ok(PointData {
        index: p.index,
        hash: p.config_hash.clone(),
        cfg,
        prov,
        fig1: read_records(&p.dir.join(emit::FIG1_CSV))?,
        observables: read_records(&p.dir.join(OBSERVABLES_CSV))?,
        structure: read_records(&p.dir.join(emit::STRUCTURE_CSV))?,
    })
}

const FIG1_HEADER: [&str; 8] = [
    "config_hash",
    "n",
    "e_minus_e0_khz",
    "p_dia",
    "p_therm_average",
    "p_therm_fluctuation",
    "p_therm_ratio",
    "sector",
];
const OBSERVABLES_HEADER: [&str; 12] = [
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
];
const STRUCTURE_HEADER: [&str; 6] =
    ["config_hash", "k", "s_dia", "s_therm_average", "s_therm_fluctuation", "s_therm_ratio"];

impl PointData {
    fn observable(&self, view: &str, column: &str) -> String {
        let fit = self.cfg.thermal_fit.label();
        self.observables
            .iter()
            .find(|r| r["view"] == view && r["fit"] == fit)
            .map(|r| r[column].clone())
            .unwrap_or_default()
    }

    fn lead(&self) -> Vec<String> {
        vec![
            self.index.to_string(),
            self.hash.clone(),
            self.cfg.n_ions.to_string(),
            self.cfg.sign.label().to_string(),
            self.prov.get("alpha_fit").cloned().unwrap_or_default(),
            self.prov.get("t_final_ms").cloned().unwrap_or_default(),
        ]
    }
}

const LEAD: [&str; 6] = ["point", "config_hash", "n_ions", "sign", "alpha", "t_final_ms"];

fn header(extra: &[&str]) -> Vec<String> {
    LEAD.iter().chain(extra).map(|s| s.to_string()).collect()
}

/// Writes `points.csv`, `failures.csv` and the merged figure tables.
pub fn merge(grid: &Grid, report: &SweepReport, out: &Path) -> Result<()> {
    let mut point_header = vec!["point", "dir", "config_hash", "status"];
    point_header.extend(grid.axes.iter().map(|(k, _)| k.as_str()));
    let mut points = Table::create(out.join(POINTS_CSV), &point_header)?;
    let mut failures = Table::create(out.join(FAILURES_CSV), &["point", "config_hash", "message"])?;
    let assignments = grid.points();

    let mut data = Vec::new();
    for p in &report.points {
        let loaded = match &p.error {
            Some(e) => Err(e.clone()),
            None => load_point(p).map_err(|e| e.to_string()),
        };
        let status = if loaded.is_ok() { "ok" } else { "failed" };
        let mut row = vec![
            p.index.to_string(),
            point_dir_name(p.index),
            p.config_hash.clone(),
            status.to_string(),
        ];
        row.extend(assignments[p.index].iter().map(|(_, v)| v.clone()));
        points.row(row)?;
        match loaded {
            Ok(d) => data.push(d),
            Err(msg) => failures.row([p.index.to_string(), p.config_hash.clone(), msg])?,
        }
    }
    points.finish()?;
    failures.finish()?;

    let mut fig1 = Table::create(out.join(FIG1_CSV), &header(&FIG1_HEADER[1..]))?;
    for d in &data {
        for r in &d.fig1 {
            let mut row = d.lead();
            row.extend(FIG1_HEADER[1..].iter().map(|c| r[*c].clone()));
            fig1.row(row)?;
        }
    }
    fig1.finish()?;

    let mut fig2 = Table::create(out.join(FIG2_CSV), &header(&["fit", "g_bar_dia", "g_bar_therm"]))?;
    for d in &data {
        let mut row = d.lead();
        row.push(d.cfg.thermal_fit.label().to_string());
        row.push(d.observable("diabatic", "g_bar"));
        row.push(d.observable("thermal", "g_bar"));
        fig2.row(row)?;
    }
    fig2.finish()?;

    let mut fig3 = Table::create(out.join(FIG3_CSV), &header(&["fit", "k", "s_dia", "s_therm"]))?;
    for d in &data {
        let therm_col = format!("s_therm_{}", d.cfg.thermal_fit.label());
        for r in &d.structure {
            let mut row = d.lead();
            row.push(d.cfg.thermal_fit.label().to_string());
            row.push(r["k"].clone());
            row.push(r["s_dia"].clone());
            row.push(r[&therm_col].clone());
            fig3.row(row)?;
        }
    }
    fig3.finish()?;

    let mut fig4 = Table::create(out.join(FIG4_CSV), &header(&["fit", "cv_dia", "cv_therm", "t_eff_khz"]))?;
    for d in &data {
        let mut row = d.lead();
        row.push(d.cfg.thermal_fit.label().to_string());
        row.push(d.observable("diabatic", "cv"));
        row.push(d.observable("thermal", "cv"));
        row.push(d.observable("thermal", "t_eff_khz"));
        fig4.row(row)?;
    }
    fig4.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expands_in_row_major_order() {
        let g = Grid::parse("sign = fm, afm\nramp.t_final_ms = 1, 2, 3 # ms\n").unwrap();
        assert_eq!(g.len(), 6);
        let pts = g.points();
        assert_eq!(pts[0], vec![("sign".into(), "fm".into()), ("ramp.t_final_ms".into(), "1".into())]);
        assert_eq!(pts[4][0].1, "afm");
        assert_eq!(pts[4][1].1, "2");
    }

    #[test]
    fn grid_rejects_bad_lines() {
        assert!(Grid::parse("sign fm").is_err());
        assert!(Grid::parse("sign = fm,\n").is_err());
        assert!(Grid::parse("sign = fm\nsign = afm").is_err());
        assert!(Grid::parse("fits = average").is_err());
        let g = Grid::parse("nonsense = 1").unwrap();
        assert!(g.expand(&RunConfig::default()).is_err());
    }

    #[test]
    fn ramp_speed_shares_a_hamiltonian() {
        let mut a = RunConfig::default();
        a.t_final_ms = Some(1.0);
        let mut b = a.clone();
        b.t_final_ms = Some(5.0);
        b.j0_tau = 2.0;
        assert_eq!(hamiltonian_key(&a), hamiltonian_key(&b));
        let mut c = a.clone();
        c.t_final_ms = Some(0.0);
        assert_ne!(hamiltonian_key(&a), hamiltonian_key(&c));
        let mut d = a.clone();
        d.n_ions = 8;
        assert_ne!(hamiltonian_key(&a), hamiltonian_key(&d));
    }
}
