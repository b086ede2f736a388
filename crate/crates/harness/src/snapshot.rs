//! Binary state snapshots.
//!
//! Layout, all little-endian: 8-byte magic `TFIMSNAP`, `u32` format version,
//! `u32` spin count, `f64` time in seconds, 32-byte SHA-256 of the config,
//! then `2^N` complex amplitudes as `(re, im)` `f64` pairs.

use std::fs;
use std::path::Path;

use diabatherm_core::evolve::QuantumState;
use diabatherm_core::C64;

use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"TFIMSNAP";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub config_hash: [u8; 32],
    pub state: QuantumState,
}

pub fn encode(state: &QuantumState, config_hash: &[u8; 32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * state.amplitudes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(state.n_spins() as u32).to_le_bytes());
    out.extend_from_slice(&state.time.to_le_bytes());
    out.extend_from_slice(config_hash);
    for a in &state.amplitudes {
        out.extend_from_slice(&a.re.to_le_bytes());
        out.extend_from_slice(&a.im.to_le_bytes());
    }
    out
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Snapshot> {
    let fail = |reason: String| HarnessError::Snapshot { path: path.to_path_buf(), reason };
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(fail("bad magic bytes".into()));
    }
    let version = u32_at(bytes, 8);
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let n = u32_at(bytes, 12) as usize;
    if n == 0 || n > diabatherm_core::spin::DEFAULT_MAX_SPINS {
        return Err(fail(format!("spin count {n} out of range")));
    }
    let time = f64_at(bytes, 16);
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(&bytes[24..56]);
    let dim = 1usize << n;
    let expected = HEADER_LEN + 16 * dim;
    if bytes.len() != expected {
        return Err(fail(format!("expected {expected} bytes for N = {n}, found {}", bytes.len())));
    }
    let amplitudes = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| C64::new(f64_at(c, 0), f64_at(c, 8)))
        .collect();
    let state = QuantumState::new(amplitudes, time).map_err(|e| fail(e.to_string()))?;
    Ok(Snapshot { config_hash, state })
}

pub fn write(path: &Path, state: &QuantumState, config_hash: &[u8; 32]) -> Result<()> {
    fs::write(path, encode(state, config_hash)).map_err(|e| HarnessError::io(path, e))
}

pub fn read(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode(&bytes, path)
}

/// Parses a hex SHA-256 digest.
pub fn hash_bytes(hex_digest: &str) -> Result<[u8; 32]> {
    let mut out = [0u8; 32];
    hex::decode_to_slice(hex_digest, &mut out)
        .map_err(|e| HarnessError::config(format!("bad config hash {hex_digest:?}: {e}")))?;
    Ok(out)
}
