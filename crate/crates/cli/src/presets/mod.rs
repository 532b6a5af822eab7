//! Reproducible experiment presets. Each preset writes its artefacts and a
//! `manifest.json` holding the resolved settings, the seed and file hashes.

pub mod context;
pub mod fold;
pub mod kloeden;
pub mod scalar;
pub mod splice;
pub mod switching;

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{apply_overrides, Preset};
use crate::output::{Check, FileRecord, OutputDir};

pub const MANIFEST: &str = "manifest.json";

/// Default settings of a preset as JSON. `small` selects the reduced
/// variant where one exists.
pub fn default_settings(preset: Preset, small: bool) -> Result<Value> {
    Ok(match preset {
        Preset::Kloeden => serde_json::to_value(kloeden::Settings::default())?,
        Preset::Switching2d => serde_json::to_value(switching::Settings::default())?,
        Preset::ScalarSweep => serde_json::to_value(scalar::Settings::default())?,
        Preset::FoldBisect => serde_json::to_value(fold::Settings::default())?,
        Preset::SpliceDemo => serde_json::to_value(splice::Settings::default())?,
        Preset::ContextTask if small => serde_json::to_value(context::Settings::small())?,
        Preset::ContextTask => serde_json::to_value(context::Settings::default())?,
    })
}

/// Checks that `settings` deserialize for `preset` and applies overrides.
pub fn resolve_settings(preset: Preset, base: &Value, overrides: &[(String, String)]) -> Result<Value> {
    fn go<T: Serialize + serde::de::DeserializeOwned>(base: &Value, o: &[(String, String)]) -> Result<Value> {
        let typed: T = serde_json::from_value(base.clone()).context("invalid settings")?;
        Ok(serde_json::to_value(apply_overrides(&typed, o)?)?)
    }
    match preset {
        Preset::Kloeden => go::<kloeden::Settings>(base, overrides),
        Preset::Switching2d => go::<switching::Settings>(base, overrides),
        Preset::ScalarSweep => go::<scalar::Settings>(base, overrides),
        Preset::FoldBisect => go::<fold::Settings>(base, overrides),
        Preset::SpliceDemo => go::<splice::Settings>(base, overrides),
        Preset::ContextTask => go::<context::Settings>(base, overrides),
    }
}

pub fn run_preset(preset: Preset, settings: &Value, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    fn typed<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T> {
        serde_json::from_value(v.clone()).context("invalid settings")
    }
    match preset {
        Preset::Kloeden => kloeden::run(&typed(settings)?, seed, out),
        Preset::Switching2d => switching::run(&typed(settings)?, seed, out),
        Preset::ScalarSweep => scalar::run(&typed(settings)?, seed, out),
        Preset::FoldBisect => fold::run(&typed(settings)?, seed, out),
        Preset::SpliceDemo => splice::run(&typed(settings)?, seed, out),
        Preset::ContextTask => context::run(&typed(settings)?, seed, out),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub preset: Preset,
    pub seed: u64,
    pub settings: Value,
    pub files: Vec<FileRecord>,
    pub checks: Vec<Check>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Runs a preset into `dir` and writes its manifest.
pub fn execute(preset: Preset, settings: &Value, seed: u64, dir: &Path) -> Result<Manifest> {
    let mut out = OutputDir::create(dir)?;
    let checks = run_preset(preset, settings, seed, &mut out)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        preset,
        seed,
        settings: settings.clone(),
        files: out.files().to_vec(),
        checks,
    };
    out.write_json(MANIFEST, &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplayReport {
    pub identical: bool,
    pub mismatches: Vec<String>,
}

/// Reruns the preset recorded in a manifest into `dir` and compares the
/// hashes of every recorded file.
pub fn replay(manifest: &Manifest, dir: &Path) -> Result<ReplayReport> {
    if manifest.tool != env!("CARGO_PKG_NAME") {
        bail!("manifest was written by {:?}", manifest.tool);
    }
    let fresh = execute(manifest.preset, &manifest.settings, manifest.seed, dir)?;
    let mut mismatches = Vec::new();
    for rec in &manifest.files {
        match fresh.files.iter().find(|f| f.path == rec.path) {
            Some(f) if f.sha256 == rec.sha256 => {}
            Some(_) => mismatches.push(format!("{}: hash differs", rec.path)),
            None => mismatches.push(format!("{}: not produced", rec.path)),
        }
    }
    for f in &fresh.files {
        if !manifest.files.iter().any(|r| r.path == f.path) {
            mismatches.push(format!("{}: not in manifest", f.path));
        }
    }
    Ok(ReplayReport { identical: mismatches.is_empty(), mismatches })
}

/// Roots of a scalar function on `[lo, hi]` from sign changes on an
/// `n`-point grid, refined by bisection.
pub fn scalar_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let mut roots = Vec::new();
    for w in xs.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (f(a), f(b));
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa * fb > 0.0 {
            continue;
        }
        if fb == 0.0 {
            // Picked up as the left end of the next cell.
            continue;
        }
        let mut fa = fa;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = f(m);
            if fm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if fa * fm < 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        roots.push(0.5 * (a + b));
    }
    if f(hi) == 0.0 {
        roots.push(hi);
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_cubic() {
        let r = scalar_roots(|x| x * x * x - 0.25 * x, -1.0, 1.0, 101);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-0.5, 0.0, 0.5]) {
            assert!((got - want).abs() < 1e-14, "{got}");
        }
    }
}
