//! Fold of the autonomous map `x -> tanh(g x + c)`: the largest constant
//! input that keeps both stable fixed points.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{Check, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub gain: f64,
    /// Bisection stops when the bracket on `w` is this narrow.
    pub tolerance: f64,
    pub bracket: (f64, f64),
    pub max_iterations: u64,
    pub agreement_tol: f64,
    pub reference_range: (f64, f64),
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            gain: 1.01,
            tolerance: 1e-7,
            bracket: (0.0, 0.01),
            max_iterations: 10_000_000,
            agreement_tol: 1e-5,
            reference_range: (0.0006, 0.00075),
        }
    }
}

/// `(x*, c*)` with `g (1 - x*^2) = 1` and `c* = atanh(x*) - g x*`; `c* < 0`
/// for the branch with `x* > 0`.
pub fn fold_point(gain: f64) -> Result<(f64, f64)> {
    if gain <= 1.0 {
        bail!("no fold for gain {gain} <= 1");
    }
    let x = (1.0 - 1.0 / gain).sqrt();
    Ok((x, x.atanh() - gain * x))
}

/// Whether the orbit of `-1` under constant input `w` stays negative, i.e.
/// the lower fixed point survives.
pub fn lower_point_survives(gain: f64, w: f64, max_iterations: u64) -> bool {
    let mut x: f64 = -1.0;
    for _ in 0..max_iterations {
        let next = (gain * x + w).tanh();
        if next >= 0.0 {
            return false;
        }
        if next == x {
            return true;
        }
        x = next;
    }
    true
}

pub fn run(s: &Settings, _seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    if s.tolerance.is_nan() || s.tolerance <= 0.0 {
        bail!("tolerance must be positive");
    }
    let (x_star, c_star) = fold_point(s.gain)?;
    let analytic = c_star.abs();
    let (mut lo, mut hi) = s.bracket;
    if !lower_point_survives(s.gain, lo, s.max_iterations) || lower_point_survives(s.gain, hi, s.max_iterations) {
        bail!("bracket ({lo}, {hi}) does not contain the fold");
    }
    let mut iterations = 0;
    while hi - lo > s.tolerance {
        let mid = 0.5 * (lo + hi);
        if lower_point_survives(s.gain, mid, s.max_iterations) {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let bisected = 0.5 * (lo + hi);
    let checks = vec![
        Check::new(
            "fold_in_reference_range",
            (s.reference_range.0..=s.reference_range.1).contains(&analytic),
            format!("|c*| = {analytic}"),
        ),
        Check::new(
            "bisection_agrees",
            (bisected - analytic).abs() <= s.agreement_tol,
            format!("bisection {bisected}, analytic {analytic}"),
        ),
    ];
    out.write_json(
        "summary.json",
        &json!({
            "x_star": x_star,
            "c_star": c_star,
            "w_c": analytic,
            "bisection": { "w": bisected, "bracket": [lo, hi], "iterations": iterations },
            "checks": checks,
        }),
    )?;
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_is_tangency() {
        let (x, c) = fold_point(1.01).unwrap();
        // Fixed point and unit slope at once.
        assert!((x - (1.01 * x + c).tanh()).abs() < 1e-15);
        assert!((1.01 * (1.0 - x * x) - 1.0).abs() < 1e-14);
        assert!(fold_point(1.0).is_err());
    }

    #[test]
    fn survival_flips_across_fold() {
        let (_, c) = fold_point(1.01).unwrap();
        assert!(lower_point_survives(1.01, 0.9 * c.abs(), 10_000_000));
        assert!(!lower_point_survives(1.01, 1.1 * c.abs(), 10_000_000));
    }
}
