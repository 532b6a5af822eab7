//! `x -> tanh(1.01 x + w u)` with uniform input in `[-w, w]`: two stable
//! responses below the fold, one above it.

use anyhow::{bail, Result};
use echodex_core::dynamics::{orbit, State};
use echodex_core::echo_index::{estimate_echo_index, EchoIndex, IndexProtocol};
use echodex_core::input::{gen_uniform_scaled, Window};
use echodex_core::systems;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{num, Check, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub w: Vec<f64>,
    pub expected: Vec<usize>,
    /// Seeds `seed, seed + 1, ...` per `w`.
    pub seeds: u64,
    /// Escape from the ghost of a lost fixed point is a rare event, so the
    /// transient must outlast it.
    pub protocol: IndexProtocol,
    pub plot_ics: usize,
    pub plot_steps: usize,
    /// Orbit length used to count switches between the two signs.
    pub switch_horizon: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            w: vec![0.0006, 0.01, 0.05],
            expected: vec![2, 1, 1],
            seeds: 5,
            protocol: IndexProtocol { ic_count: 10, transient: 50_000, max_escalations: 1, ..Default::default() },
            plot_ics: 10,
            plot_steps: 3000,
            switch_horizon: 100_000,
        }
    }
}

fn majority(indices: &[EchoIndex]) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for v in indices.iter().filter_map(|i| i.definite()) {
        let count = indices.iter().filter(|i| i.definite() == Some(v)).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((v, count));
        }
    }
    best.filter(|(_, c)| 2 * c > indices.len()).map(|(v, _)| v)
}

pub fn run(s: &Settings, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    if s.w.len() != s.expected.len() {
        bail!("scalar sweep needs one expected index per w");
    }
    let p = systems::scalar_bistable(1.0);
    let last = (s.protocol.transient << s.protocol.max_escalations) + s.protocol.window + s.protocol.shift.unsigned_abs() as usize;
    let len = last.max(s.plot_steps).max(s.switch_horizon);
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut per_w = Vec::new();
    for (&w, &expected) in s.w.iter().zip(&s.expected) {
        let seeds: Vec<u64> = (seed..seed + s.seeds).collect();
        let reports = seeds
            .par_iter()
            .map(|&sd| {
                let u = gen_uniform_scaled(w, Window::new(1, len), sd)?;
                estimate_echo_index(&p, &u, &s.protocol)
            })
            .collect::<echodex_core::Result<Vec<_>>>()?;
        let indices: Vec<EchoIndex> = reports.iter().map(|r| r.index).collect();
        for (sd, r) in seeds.iter().zip(&reports) {
            rows.push(vec![num(w), sd.to_string(), r.index.to_string(), r.stable.to_string()]);
        }
        let verdict = majority(&indices);
        checks.push(Check::new(
            &format!("index_w{w}"),
            verdict == Some(expected),
            format!("per seed {:?}, majority {verdict:?}, expected {expected}", indices.iter().map(|i| i.to_string()).collect::<Vec<_>>()),
        ));

        // Plot data and switching diagnostics on the first seed.
        let u = gen_uniform_scaled(w, Window::new(1, len), seed)?;
        let mut traj_rows = Vec::new();
        for i in 0..s.plot_ics {
            let x0 = -1.0 + 2.0 * i as f64 / (s.plot_ics.max(2) - 1) as f64;
            let t = orbit(&p, &u, &State::from(vec![x0]), s.plot_steps)?;
            for (k, st) in t.states.iter().enumerate() {
                traj_rows.push(vec![i.to_string(), k.to_string(), num(st.0[0])]);
            }
        }
        out.write_table(&format!("trajectories_w{w}.csv"), &["ic_id", "k", "x_1"], &traj_rows)?;
        let t = orbit(&p, &u, &State::from(vec![0.0]), s.switch_horizon)?;
        let xs: Vec<f64> = t.states[t.len() / 2..].iter().map(|st| st.0[0]).collect();
        let switches = xs.windows(2).filter(|v| v[0].signum() != v[1].signum()).count();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        per_w.push(json!({
            "w": w,
            "indices": indices,
            "majority": verdict,
            "sign_changes_second_half": switches,
            "tail_std": std,
            "reports": reports,
        }));
    }
    out.write_table("sweep.csv", &["w", "seed", "index", "stable"], &rows)?;
    out.write_json("summary.json", &json!({ "sweep": per_w, "checks": checks }))?;
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn majority_rule() {
        use EchoIndex::*;
        assert_eq!(majority(&[Definite(2), Definite(2), Definite(1)]), Some(2));
        assert_eq!(majority(&[Definite(2), Indefinite, Definite(1)]), None);
        assert_eq!(majority(&[Definite(1), Definite(1), Indefinite, Indefinite, Definite(1)]), Some(1));
    }
}
