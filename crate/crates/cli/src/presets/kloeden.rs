//! Scalar map `x -> tanh(u x / (1 + |x|))` with `u = 1/a` in the past and `a`
//! from time zero on: the zero solution is the only entire solution, yet
//! forward orbits settle on the two nonzero roots.

use anyhow::{bail, Result};
use echodex_core::dynamics::{orbit_from, State};
use echodex_core::echo_index::{pullback_fibre, FibreGrid};
use echodex_core::contraction::Region;
use echodex_core::systems::KloedenSystem;
use echodex_core::InputSequence;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{num, Check, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub a: f64,
    /// Evenly spaced on `[-1, 1]`.
    pub ics: usize,
    pub k_start: i64,
    pub k_end: i64,
    pub root_tol: f64,
    pub fibre_points: usize,
    pub fibre_depths: Vec<usize>,
    pub fibre_tols: Vec<f64>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            a: 1.5,
            ics: 11,
            k_start: -10,
            k_end: 25,
            root_tol: 1e-3,
            fibre_points: 33,
            fibre_depths: vec![35, 60],
            fibre_tols: vec![1e-6, 1e-8],
        }
    }
}

pub fn run(s: &Settings, _seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    if s.ics < 2 || s.k_end <= s.k_start || s.fibre_depths.len() != s.fibre_tols.len() {
        bail!("kloeden settings need ics >= 2, k_end > k_start, and one tolerance per fibre depth");
    }
    let sys = KloedenSystem::new(s.a)?;
    let deepest = s.fibre_depths.iter().copied().max().unwrap_or(0) as i64;
    let first = s.k_start.min(1 - deepest).min(0);
    let values: Vec<f64> = (first..=s.k_end).map(|k| sys.drive(k)).collect();
    let input = InputSequence::explicit(first, values, 1)?;
    let root = sys.forward_root();

    let steps = (s.k_end - s.k_start) as usize;
    let ics: Vec<f64> = (0..s.ics).map(|i| -1.0 + 2.0 * i as f64 / (s.ics - 1) as f64).collect();
    let mut rows = Vec::new();
    let mut zero_ok = true;
    let mut worst_miss = 0.0f64;
    let mut past_ok = true;
    for (id, &x0) in ics.iter().enumerate() {
        let t = orbit_from(&sys, &input, s.k_start, &State::from(vec![x0]), steps)?;
        for (j, st) in t.states.iter().enumerate() {
            rows.push(vec![id.to_string(), (s.k_start + j as i64).to_string(), num(st.0[0])]);
        }
        let xs: Vec<f64> = t.states.iter().map(|st| st.0[0]).collect();
        if x0 == 0.0 {
            zero_ok &= xs.iter().all(|&v| v == 0.0);
        } else {
            worst_miss = worst_miss.max((xs[steps].abs() - root).abs());
            // Strictly negative times only: u[0] = a already expands.
            for (j, w) in xs.windows(2).enumerate() {
                if s.k_start + j as i64 + 1 < 0 {
                    past_ok &= w[1].abs() <= w[0].abs();
                }
            }
        }
    }
    out.write_table("trajectories.csv", &["ic_id", "k", "x_1"], &rows)?;

    let mut checks = vec![
        Check::new("zero_solution_fixed", zero_ok, "x = 0 stays exactly 0"),
        Check::new(
            "forward_orbits_reach_roots",
            worst_miss <= s.root_tol,
            format!("worst | |x[{}]| - {root} | = {worst_miss:e}", s.k_end),
        ),
        Check::new("past_contracts_to_zero", past_ok, "|x[k]| non-increasing while u = 1/a"),
    ];

    let grid = FibreGrid::Grid { region: Region::full(1, 1.0), per_axis: s.fibre_points };
    let mut fibres = Vec::new();
    for (&depth, &tol) in s.fibre_depths.iter().zip(&s.fibre_tols) {
        let f = pullback_fibre(&sys, &input, 0, depth, &grid)?;
        let rows: Vec<Vec<String>> =
            f.diameter_trace.iter().enumerate().map(|(i, d)| vec![i.to_string(), num(*d)]).collect();
        out.write_table(&format!("fibre_depth{depth}.csv"), &["step", "diameter"], &rows)?;
        checks.push(Check::new(
            &format!("pullback_fibre_depth{depth}"),
            f.diameter() < tol,
            format!("diameter {:e} (limit {tol:e})", f.diameter()),
        ));
        fibres.push(json!({ "depth": depth, "diameter": f.diameter() }));
    }
    out.write_json(
        "summary.json",
        &json!({ "root": root, "worst_root_miss": worst_miss, "fibres": fibres, "checks": checks }),
    )?;
    Ok(checks)
}
