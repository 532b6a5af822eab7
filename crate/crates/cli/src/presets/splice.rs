//! Replaces an index-two input outside `[-M, M]` by a constant large value;
//! the spliced inputs are arbitrarily close in the product metric yet have
//! echo index one.

use anyhow::{bail, Result};
use echodex_core::contraction::large_input_radius;
use echodex_core::echo_index::{estimate_echo_index, IndexProtocol};
use echodex_core::input::{d_prod, gen_uniform_scaled, splice_large_input, Window};
use echodex_core::systems;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{num, Check, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub w: f64,
    pub m: Vec<u64>,
    pub epsilon: f64,
    pub mu: f64,
    /// Multiple of the certified radius used as the far value.
    pub far_scale: f64,
    /// Ensembles start this many steps before time zero so that they see
    /// the spliced past.
    pub lead: usize,
    pub protocol: IndexProtocol,
    pub d_prod_half_width: usize,
    /// Allowed relative deviation of the per-unit-M distance ratio from 2.
    pub ratio_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            w: 0.0006,
            m: vec![5, 10, 20],
            epsilon: 1.0,
            mu: 0.5,
            far_scale: 1.0,
            lead: 100,
            protocol: IndexProtocol { ic_count: 10, transient: 2000, max_escalations: 1, ..Default::default() },
            d_prod_half_width: 60,
            ratio_tol: 0.1,
        }
    }
}

pub fn run(s: &Settings, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    if s.m.is_empty() || s.m.windows(2).any(|v| v[1] <= v[0]) {
        bail!("m must be a non-empty increasing list");
    }
    let p = systems::scalar_bistable(1.0);
    let spec = large_input_radius(&p, s.epsilon, s.mu)?;
    let far = vec![spec.radius() * s.far_scale];
    let reach = (s.protocol.transient << s.protocol.max_escalations)
        + s.protocol.window
        + s.protocol.shift.unsigned_abs() as usize;
    let half = s.lead + reach + 1;
    let u = gen_uniform_scaled(s.w, Window::symmetric(half), seed)?;
    let lead = -(s.lead as i64);

    let base = estimate_echo_index(&p, &u.shift(lead), &s.protocol)?;
    let mut checks = vec![Check::new(
        "original_index_two",
        base.index.definite() == Some(2),
        format!("index {} notes {:?}", base.index, base.notes),
    )];
    let mut rows = Vec::new();
    let mut distances = Vec::new();
    let mut reports = Vec::new();
    for &m in &s.m {
        let v = splice_large_input(&u, m, &far, &p, &spec)?;
        let r = estimate_echo_index(&p, &v.shift(lead), &s.protocol)?;
        let d = d_prod(&u, &v, s.d_prod_half_width)?;
        checks.push(Check::new(&format!("spliced_index_m{m}"), r.index.definite() == Some(1), format!("index {}", r.index)));
        rows.push(vec![m.to_string(), r.index.to_string(), num(d)]);
        distances.push(d);
        reports.push(json!({ "m": m, "index": r.index, "d_prod": d, "notes": r.notes }));
    }
    let mut ratios = Vec::new();
    for (i, pair) in distances.windows(2).enumerate() {
        let steps = (s.m[i + 1] - s.m[i]) as f64;
        ratios.push((pair[0] / pair[1]).powf(1.0 / steps));
    }
    checks.push(Check::new(
        "d_prod_halves_per_unit_m",
        ratios.iter().all(|r| (r / 2.0 - 1.0).abs() <= s.ratio_tol),
        format!("per-unit ratios {ratios:?}"),
    ));
    let beyond = splice_large_input(&u, half as u64, &far, &p, &spec)?;
    checks.push(Check::new(
        "splice_beyond_window_is_identity",
        beyond.values() == u.values() && d_prod(&u, &beyond, s.d_prod_half_width)? == 0.0,
        format!("m = {half}"),
    ));
    out.write_table("splice.csv", &["m", "index", "d_prod"], &rows)?;
    out.write_json(
        "summary.json",
        &json!({
            "far_value": far,
            "large_input": spec,
            "original_index": base.index,
            "spliced": reports,
            "ratios": ratios,
            "checks": checks,
        }),
    )?;
    Ok(checks)
}
