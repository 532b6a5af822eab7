//! Generic commands that work on a user-supplied model and input.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use echodex_core::contraction::{global_esp_check, large_input_radius, region_contraction_check, region_invariance_check, Region};
use echodex_core::echo_index::{estimate_echo_index, pullback_fibre, EchoIndexReport, FibreGrid, IndexProtocol, PullbackFibre};
use echodex_core::input::GeneratorSpec;
use echodex_core::training::TrainedModel;
use echodex_core::{InputSequence, RnnParams};
use serde_json::{json, Value};

use crate::config::apply_overrides;

/// Loads either a saved trained model or bare network parameters.
pub fn load_params(path: &Path) -> Result<RnnParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(m) = TrainedModel::load(text.as_bytes()) {
        return Ok(m.params);
    }
    serde_json::from_str(&text).with_context(|| format!("{} is neither a trained model nor network parameters", path.display()))
}

pub fn load_input(path: &Path) -> Result<InputSequence> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(InputSequence::read_csv(BufReader::new(f))?)
}

/// Parses `lo1,lo2..hi1,hi2` or `lo1,lo2:hi1,hi2`.
pub fn parse_region(s: &str) -> Result<Region> {
    let (lo, hi) = s
        .split_once("..")
        .or_else(|| s.split_once(':'))
        .context("region must be lo1,lo2..hi1,hi2")?;
    let parse = |p: &str| -> Result<Vec<f64>> {
        p.split(',').map(|v| v.trim().parse::<f64>().with_context(|| format!("bad bound {v:?}"))).collect()
    };
    Ok(Region::new(parse(lo)?, parse(hi)?)?)
}

/// Distinct input values of a sequence, in order of first appearance.
pub fn distinct_values(input: &InputSequence) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for row in input.values().chunks(input.dim()) {
        if !out.iter().any(|v| v.as_slice() == row) {
            out.push(row.to_vec());
        }
    }
    out
}

pub fn index(params: &RnnParams, input: &InputSequence, protocol: &IndexProtocol, overrides: &[(String, String)]) -> Result<EchoIndexReport> {
    let protocol = apply_overrides(protocol, overrides)?;
    Ok(estimate_echo_index(params, input, &protocol)?)
}

pub struct CertifyOptions<'a> {
    pub mu: f64,
    pub region: Option<Region>,
    pub input: Option<&'a InputSequence>,
    pub grid: usize,
    pub large_input_epsilon: Option<f64>,
}

/// Global certificate, or contraction and invariance on a region for the
/// values taken by an input.
pub fn certify(params: &RnnParams, opts: &CertifyOptions) -> Result<Value> {
    let mut doc = json!({ "mu": opts.mu });
    match (&opts.region, opts.input) {
        (Some(region), Some(input)) => {
            let samples = distinct_values(input);
            let grid = vec![opts.grid; region.dim()];
            let c = region_contraction_check(params, region, &samples, opts.mu, &grid)?;
            let inv = region_invariance_check(params, region, &samples, &grid)?;
            doc["certified"] = json!(c.certified && inv.invariant);
            doc["contraction"] = serde_json::to_value(c)?;
            doc["invariance"] = serde_json::to_value(inv)?;
        }
        (Some(_), None) => bail!("a region certificate needs --input for the input values"),
        (None, _) => {
            let g = global_esp_check(params, opts.mu)?;
            doc["certified"] = json!(g.certified);
            doc["global"] = serde_json::to_value(g)?;
        }
    }
    if let Some(eps) = opts.large_input_epsilon {
        doc["large_input"] = serde_json::to_value(large_input_radius(params, eps, opts.mu)?)?;
    }
    Ok(doc)
}

pub fn generate(spec_path: &Path) -> Result<InputSequence> {
    let text = std::fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec: GeneratorSpec = serde_json::from_str(&text).context("invalid generator spec")?;
    Ok(spec.generate()?)
}

pub fn fibre(params: &RnnParams, input: &InputSequence, time: i64, depth: usize, grid: Option<FibreGrid>) -> Result<PullbackFibre> {
    use echodex_core::DrivenSystem;
    let grid = grid.unwrap_or_else(|| FibreGrid::default_for(params.state_dim(), params.bound()));
    Ok(pullback_fibre(params, input, time, depth, &grid)?)
}
