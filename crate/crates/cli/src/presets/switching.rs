//! Two-dimensional network driven by a random switching between two input
//! values; two contracting bands give echo index two.

use anyhow::Result;
use echodex_core::contraction::{
    local_contraction_norm, region_contraction_check, region_invariance_check, strip_bounds_closed_form,
};
use echodex_core::dynamics::{evolve, State};
use echodex_core::echo_index::{
    estimate_echo_index, pullback_fibre, run_ensemble, separatrix_bisect, tracking_time, FibreGrid, IndexProtocol,
    InitialConditions, SeparatrixConfig,
};
use echodex_core::input::{gen_two_symbol, Window};
use echodex_core::systems;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::scalar_roots;
use crate::output::{num, Check, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub p: f64,
    pub half_window: usize,
    pub protocol: IndexProtocol,
    pub expected_index: usize,
    pub plot_ics: usize,
    pub plot_steps: usize,
    pub fibre_depth: usize,
    pub fibre_per_axis: usize,
    pub fibre_tol: f64,
    pub mu: f64,
    pub grid: usize,
    pub jacobian_grid: usize,
    pub jacobian_tol: f64,
    /// Reference values for the contraction strip and the tolerance on them.
    pub strip_reference: (f64, f64),
    pub strip_tol: f64,
    /// First input seed tried by the basin-boundary search. Seeds are tried
    /// in turn until the segment endpoints reach different clusters.
    pub separatrix_seed: u64,
    pub separatrix_seed_tries: u64,
    pub separatrix_x1: f64,
    pub separatrix_segment: (f64, f64),
    pub separatrix: SeparatrixConfig,
    pub track_gap: f64,
    pub track_range: (usize, usize),
    pub saddle_reference: f64,
    pub saddle_tol: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            p: 0.5,
            half_window: 4000,
            protocol: IndexProtocol::default(),
            expected_index: 2,
            plot_ics: 30,
            plot_steps: 300,
            fibre_depth: 200,
            fibre_per_axis: 33,
            fibre_tol: 1e-10,
            mu: 0.999,
            grid: 101,
            jacobian_grid: 101,
            jacobian_tol: 1e-10,
            strip_reference: (-0.539, 0.339),
            strip_tol: 1e-3,
            separatrix_seed: 0,
            separatrix_seed_tries: 20,
            separatrix_x1: 0.49,
            separatrix_segment: (-0.2, 0.0),
            separatrix: SeparatrixConfig::default(),
            track_gap: 1e-11,
            track_range: (150, 345),
            saddle_reference: 0.45,
            saddle_tol: 0.015,
        }
    }
}

pub fn run(s: &Settings, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    let p = systems::switching_2d();
    let (u1, u2) = systems::switching_inputs();
    let samples = vec![u1.to_vec(), u2.to_vec()];
    let mut checks = Vec::new();

    // Echo index and plot ensemble.
    let input = gen_two_symbol(&u1, &u2, s.p, Window::symmetric(s.half_window), seed)?;
    let report = estimate_echo_index(&p, &input, &s.protocol)?;
    checks.push(Check::new(
        "echo_index",
        report.index.definite() == Some(s.expected_index),
        format!("index {} (expected {}), notes {:?}", report.index, s.expected_index, report.notes),
    ));
    out.write_json("index.json", &report)?;
    let plot = run_ensemble(&p, &input, &InitialConditions::Sampled { count: s.plot_ics, seed }, 0, s.plot_steps)?;
    out.write_with("ensemble.csv", |w| plot.write_csv(w))?;

    // Pullback fibres of the two bands, compared with the forward clusters.
    let level = report.escalation.last().expect("at least one level");
    let n = (level.transient + s.protocol.window) as i64;
    let mut fibres = Vec::new();
    for (name, region) in [("upper", systems::region_upper()), ("lower", systems::region_lower())] {
        let grid = FibreGrid::Grid { region, per_axis: s.fibre_per_axis };
        let f = pullback_fibre(&p, &input, n, s.fibre_depth, &grid)?;
        let rows: Vec<Vec<String>> =
            f.diameter_trace.iter().enumerate().map(|(i, d)| vec![i.to_string(), num(*d)]).collect();
        out.write_table(&format!("fibre_{name}.csv"), &["step", "diameter"], &rows)?;
        let end = &f.points[0];
        let nearest = report.clusters.iter().map(|c| c.final_state.distance(end)).fold(f64::INFINITY, f64::min);
        checks.push(Check::new(
            &format!("fibre_{name}_collapses"),
            f.diameter() < s.fibre_tol,
            format!("diameter {:e} at depth {}", f.diameter(), s.fibre_depth),
        ));
        checks.push(Check::new(
            &format!("fibre_{name}_matches_forward_cluster"),
            nearest <= s.protocol.cluster_tol,
            format!("distance to nearest cluster representative at time {n}: {nearest:e}"),
        ));
        fibres.push(json!({ "band": name, "time": n, "diameter": f.diameter(), "point": end, "nearest_cluster": nearest }));
    }

    // Certificates on the two bands.
    let strip = strip_bounds_closed_form();
    checks.push(Check::new(
        "contraction_strip",
        (strip.0 - s.strip_reference.0).abs() <= s.strip_tol && (strip.1 - s.strip_reference.1).abs() <= s.strip_tol,
        format!("({}, {})", strip.0, strip.1),
    ));
    let mut certs = Vec::new();
    for (name, region) in [("upper", systems::region_upper()), ("lower", systems::region_lower())] {
        let c = region_contraction_check(&p, &region, &samples, s.mu, &[s.grid, s.grid])?;
        let inv = region_invariance_check(&p, &region, &samples, &[s.grid, s.grid])?;
        checks.push(Check::new(
            &format!("region_{name}_contracts"),
            c.certified,
            format!("worst norm {} at {:?} (mu {})", c.worst_norm, c.worst_point.as_slice(), s.mu),
        ));
        checks.push(Check::new(&format!("region_{name}_invariant"), inv.invariant, format!("{:?}", inv.witness)));
        certs.push(json!({ "region": name, "contraction": c, "invariance": inv }));
    }

    // Closed-form Jacobian norm: the Jacobian is diagonal.
    let a = systems::SWITCHING_ALPHA;
    let w = systems::SWITCHING_W_R;
    let mut worst = 0.0f64;
    let m = s.jacobian_grid;
    for u in &samples {
        for i in 0..m {
            for j in 0..m {
                let x = [-1.0 + 2.0 * i as f64 / (m - 1) as f64, -1.0 + 2.0 * j as f64 / (m - 1) as f64];
                let closed = (0..2)
                    .map(|c| {
                        let t = (w[c] * x[c] + u[c]).tanh();
                        ((1.0 - a) + a * w[c] * (1.0 - t * t)).abs()
                    })
                    .fold(0.0, f64::max);
                let svd = local_contraction_norm(&p, u, &State::from(x.to_vec()))?;
                worst = worst.max((closed - svd).abs());
            }
        }
    }
    checks.push(Check::new(
        "jacobian_norm_closed_form",
        worst <= s.jacobian_tol,
        format!("max |closed form - SVD| = {worst:e} on a {m}x{m} grid"),
    ));

    // Fixed points of the two autonomous component maps.
    let mut inventory = Vec::new();
    for (name, u) in [("f1", u1), ("f2", u2)] {
        let per_axis: Vec<Vec<f64>> =
            (0..2).map(|c| scalar_roots(|x| x - (w[c] * x + u[c]).tanh(), -1.0, 1.0, 2001)).collect();
        inventory.push(json!({ "map": name, "x1_roots": per_axis[0], "x2_roots": per_axis[1] }));
        if name == "f1" {
            let x1 = per_axis[0].first().copied().unwrap_or(f64::NAN);
            checks.push(Check::new(
                "saddle_line",
                per_axis[0].len() == 1 && (x1 - s.saddle_reference).abs() <= s.saddle_tol,
                format!("x1 = {x1} (reference {} +- {})", s.saddle_reference, s.saddle_tol),
            ));
        }
    }

    // Basin boundary on a vertical segment.
    let lo = State::from(vec![s.separatrix_x1, s.separatrix_segment.0]);
    let hi = State::from(vec![s.separatrix_x1, s.separatrix_segment.1]);
    let mut rejected = Vec::new();
    let mut found = None;
    for sd in s.separatrix_seed..s.separatrix_seed + s.separatrix_seed_tries {
        let sep_input = gen_two_symbol(&u1, &u2, s.p, Window::symmetric(s.half_window), sd)?;
        match separatrix_bisect(&p, &sep_input, &lo, &hi, &s.separatrix) {
            Ok(r) => {
                found = Some((sd, sep_input, r));
                break;
            }
            Err(e) => rejected.push(json!({ "seed": sd, "reason": e.to_string() })),
        }
    }
    let mut separatrix = json!({ "rejected_seeds": rejected });
    match &found {
        None => checks.push(Check::new(
            "separatrix_bracket",
            false,
            format!("no seed in {}..{} straddles a boundary", s.separatrix_seed, s.separatrix_seed + s.separatrix_seed_tries),
        )),
        Some((sd, sep_input, sep)) => {
            checks.push(Check::new(
                "separatrix_bracket",
                sep.bracket_len <= s.separatrix.target_len,
                format!("seed {sd}, boundary {:?}, bracket {:e}, warning {:?}", sep.boundary.as_slice(), sep.bracket_len, sep.warning),
            ));
            let times: Vec<usize> = sep.steps.iter().filter_map(|st| st.escape_time).collect();
            checks.push(Check::new("escape_time_monotone", times.windows(2).all(|t| t[1] >= t[0]), format!("{times:?}")));
            let b = sep.boundary.as_slice()[1];
            let below = State::from(vec![s.separatrix_x1, b - s.track_gap / 2.0]);
            let above = State::from(vec![s.separatrix_x1, b + s.track_gap / 2.0]);
            let tracked = tracking_time(&p, sep_input, &below, &above, s.separatrix.escape_threshold, s.separatrix.horizon)?;
            let h = s.separatrix.horizon;
            let apart = evolve(&p, sep_input, 0, &below, h)?.distance(&evolve(&p, sep_input, 0, &above, h)?);
            checks.push(Check::new(
                "straddling_points_track_then_split",
                tracked.is_some_and(|t| (s.track_range.0..=s.track_range.1).contains(&t)) && apart > 0.5,
                format!("tracked {tracked:?} steps, distance {apart} after {h}"),
            ));
            separatrix["seed"] = json!(sd);
            separatrix["report"] = serde_json::to_value(sep)?;
            separatrix["tracking_steps"] = json!(tracked);
        }
    }

    out.write_json(
        "summary.json",
        &json!({
            "index": report.index,
            "min_separation": report.min_separation,
            "max_diameter": report.max_diameter,
            "fibres": fibres,
            "strip": strip,
            "certificates": certs,
            "jacobian_max_error": worst,
            "fixed_points": inventory,
            "separatrix": separatrix,
            "checks": checks,
        }),
    )?;
    Ok(checks)
}
