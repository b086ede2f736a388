//! Recomputes a bundle's observables from its stored config and final state.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::config::RunConfig;
use crate::emit::{self, CONFIG_FILE, PROVENANCE_FILE, STATE_FILE};
use crate::error::{HarnessError, Result};
use crate::pipeline::{analyze, schedule, Prepared, ResultBundle};
use crate::snapshot;

/// Re-diagonalizes the final Hamiltonian and re-runs the analysis on the
/// stored state. With `out` set, the regenerated bundle is written there.
pub fn replay(bundle_dir: &Path, out: Option<&Path>) -> Result<ResultBundle> {
    emit::validate_bundle(bundle_dir)?;
    let cfg = RunConfig::load(&bundle_dir.join(CONFIG_FILE))?;
    let prov_path = bundle_dir.join(PROVENANCE_FILE);
    let run = emit::run_info_from(&emit::read_key_values(&prov_path)?, &prov_path)?;
    if !cfg.snapshot {
        return Err(HarnessError::bundle(bundle_dir, "bundle was written without a final-state snapshot"));
    }
    let snap = snapshot::read(&bundle_dir.join(STATE_FILE))?;

    let prepared = Arc::new(Prepared::new(&cfg)?);
    let sched = schedule(&cfg, prepared.j0)?;
    let bundle = analyze(&cfg, prepared, sched, snap.state, run)?;
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
        emit::write_bundle(&bundle, out)?;
    }
    Ok(bundle)
}
