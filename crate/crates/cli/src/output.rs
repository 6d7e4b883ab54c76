use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use tempfile::{NamedTempFile, TempDir};

pub const TOOL: &str = "curveflow";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn parent(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = parent(path);
    fs::create_dir_all(&dir)?;
    let mut tmp = NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn to_json(value: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("reports serialize");
    out.push(b'\n');
    out
}

/// `{tool, version, command, config, report, pass}`; no timestamps, so equal
/// inputs give equal bytes.
pub fn envelope(command: &str, config: &impl Serialize, report: &impl Serialize, pass: bool) -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "config": config,
        "report": report,
        "pass": pass,
    })
}

/// Report plus `schema.json` in the same directory.
pub fn write_report(path: &Path, value: &Value) -> std::io::Result<()> {
    write_atomic(path, &to_json(value))?;
    write_atomic(&parent(path).join("schema.json"), &to_json(&schema()))
}

/// A directory filled by `fill` in a sibling temporary directory and moved
/// into place once complete.
pub fn write_dir_atomic(path: &Path, fill: impl FnOnce(&Path) -> Result<(), String>) -> Result<(), String> {
    let dir = parent(path);
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let tmp = TempDir::with_prefix_in(".curveflow-", &dir).map_err(|e| e.to_string())?;
    fill(tmp.path())?;
    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let kept = tmp.keep();
    fs::rename(&kept, path).map_err(|e| {
        let _ = fs::remove_dir_all(&kept);
        format!("{}: {e}", path.display())
    })
}

/// Field documentation for every file the tool writes.
pub fn schema() -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "envelope": {
            "tool": "string",
            "version": "string, tool version",
            "command": "string, subcommand path",
            "config": "object, fully resolved arguments",
            "report": "object, command-specific (below)",
            "pass": "bool, verdict behind the exit code"
        },
        "snapshot_csv": {
            "s": "arclength from the first tip",
            "w": "warp w(s), radius of the orbit sphere",
            "phi": "lapse: ds = phi dx in material coordinates",
            "k_rad": "sectional curvature of planes containing the radial direction",
            "k_sph": "sectional curvature of planes tangent to the orbit sphere",
            "ric_min": "smallest Ricci eigenvalue, min(2 k_rad, k_rad + k_sph)",
            "scalar_r": "scalar curvature 4 k_rad + 2 k_sph"
        },
        "trace.json": {
            "times": "snapshot times",
            "snapshots": "snapshot_<k>.csv file names, in time order",
            "diagnostics": "per snapshot: t, riem_sup (max |sectional|), ric_min, vol_b1 (unit ball about the tip), distances (monitored pairs), positions (tracked points), trusted_radius",
            "history": "(t, sup |Riem|) after every accepted step",
            "steps": "accepted time steps",
            "states": "per snapshot: t, material grid x, lapse phi, warp w, DeTurck background, topology, tracked positions"
        },
        "flow monitor": {
            "estimates": "inequalities (a)-(d): fitted constant, binding time, violations",
            "smoothing": "c0 = sup t |Riem| over the window",
            "pinching": "min margin of Ric >= -eps0 (1 + k t)(1 + t R), or the reason it was skipped",
            "distances": "fitted and implied c1, c2; violations",
            "volume": "min unit-ball volume ratio per snapshot and the horizon S"
        },
        "ode sweep": "min margin, violations, horizon_passed, seed, sampling ranges; n11 mode: min N11 and its argmin",
        "tame build": "CSV with columns s,w of the tamed metric",
        "tame verify": "per index: identity on B_i, min Ricci, |Riem| majorant constant, tail monotonicity, unit-ball volumes; spreads across indices",
        "compare jacobi": "samples, solved, degenerate, violations, worst ln(|X|^2 / bound)",
        "gh converge": "upper and lower GH bounds per scale, monotonicity within the noise band, final gap vs target",
        "selftest": "per case: observed, expected, tolerance, error"
    })
}
