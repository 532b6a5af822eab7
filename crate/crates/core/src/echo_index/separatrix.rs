use serde::{Deserialize, Serialize};

use super::cluster::cluster_asymptotics;
use super::ensemble::{run_ensemble, InitialConditions};
use crate::dynamics::{evolve, DrivenSystem, State};
use crate::error::{Error, Result};
use crate::input::InputSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparatrixConfig {
    /// Steps each point is evolved before it is labeled.
    pub horizon: usize,
    pub max_iters: usize,
    /// Stop once the bracket is no longer than this.
    pub target_len: f64,
    pub cluster_tol: f64,
    /// Distance at which two tracked orbits count as separated.
    pub escape_threshold: f64,
    /// Ensemble used to find the cluster representatives.
    pub ic_count: usize,
    pub seed: u64,
    pub window: usize,
}

impl Default for SeparatrixConfig {
    fn default() -> Self {
        SeparatrixConfig {
            horizon: 600,
            max_iters: 80,
            target_len: 1e-12,
            cluster_tol: 1e-3,
            escape_threshold: 1e-2,
            ic_count: 30,
            seed: 0,
            window: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub bracket_len: f64,
    /// First step at which the bracket ends are `escape_threshold` apart;
    /// `None` if they never separate within the horizon.
    pub escape_time: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixReport {
    /// Midpoint of the final bracket.
    pub boundary: State,
    pub lo: State,
    pub hi: State,
    pub lo_cluster: usize,
    pub hi_cluster: usize,
    pub bracket_len: f64,
    pub steps: Vec<BisectionStep>,
    pub warning: Option<String>,
}

/// Steps until orbits from `a` and `b` (both at time 0) are more than
/// `threshold` apart.
pub fn tracking_time<S: DrivenSystem + ?Sized>(
    sys: &S,
    input: &InputSequence,
    a: &State,
    b: &State,
    threshold: f64,
    horizon: usize,
) -> Result<Option<usize>> {
    input.require(1, horizon as i64)?;
    if a.distance(b) > threshold {
        return Ok(Some(0));
    }
    let (mut x, mut y) = (a.0.clone(), b.0.clone());
    for k in 1..=horizon {
        let u = input.value(k as i64)?;
        x = sys.apply(u, &x);
        y = sys.apply(u, &y);
        if (&x - &y).norm() > threshold {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

struct Labeler {
    finals: Vec<State>,
    tol: f64,
}

impl Labeler {
    fn label(&self, x: &State) -> Option<usize> {
        let d: Vec<f64> = self.finals.iter().map(|r| r.distance(x)).collect();
        let (best, &dmin) = d.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
        let clear = d.iter().enumerate().all(|(i, &v)| i == best || v >= 10.0 * self.tol);
        (dmin <= self.tol && clear).then_some(best)
    }
}

fn length(a: &State, b: &State) -> f64 {
    a.distance(b)
}

/// Bisects the segment `[lo, hi]` between two basins under one input.
pub fn separatrix_bisect<S: DrivenSystem + ?Sized>(
    sys: &S,
    input: &InputSequence,
    lo: &State,
    hi: &State,
    cfg: &SeparatrixConfig,
) -> Result<SeparatrixReport> {
    if cfg.window > cfg.horizon {
        return Err(Error::invalid("separatrix window exceeds horizon"));
    }
    let run = run_ensemble(
        sys,
        input,
        &InitialConditions::Sampled { count: cfg.ic_count, seed: cfg.seed },
        cfg.horizon - cfg.window,
        cfg.window,
    )?;
    let clusters = cluster_asymptotics(&run, cfg.cluster_tol, cfg.window)?;
    if clusters.clusters.len() < 2 {
        return Err(Error::invalid("input has a single asymptotic cluster; nothing to separate"));
    }
    let labeler = Labeler { finals: clusters.clusters.iter().map(|c| c.final_state.clone()).collect(), tol: cfg.cluster_tol };
    let label = |x: &State| -> Result<Option<usize>> { Ok(labeler.label(&evolve(sys, input, 0, x, cfg.horizon)?)) };

    let (la, lb) = match (label(lo)?, label(hi)?) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::invalid("segment endpoint does not settle on a cluster within the horizon")),
    };
    if la == lb {
        return Err(Error::invalid(format!("both endpoints converge to cluster {la}")));
    }

    let (mut a, mut b) = (lo.clone(), hi.clone());
    let mut steps = Vec::new();
    let mut warning = None;
    for _ in 0..cfg.max_iters {
        if length(&a, &b) <= cfg.target_len {
            break;
        }
        let mid = State((&a.0 + &b.0) * 0.5);
        if mid == a || mid == b {
            warning = Some("bracket reached floating-point resolution".to_string());
            break;
        }
        match label(&mid)? {
            Some(l) if l == la => a = mid,
            Some(l) if l == lb => b = mid,
            other => {
                warning = Some(match other {
                    Some(l) => format!("midpoint settled on a third cluster {l}"),
                    None => "midpoint unlabeled after the horizon".to_string(),
                });
                log::warn!("separatrix bisection stopped early: {}", warning.as_deref().unwrap_or_default());
                break;
            }
        }
        steps.push(BisectionStep {
            bracket_len: length(&a, &b),
            escape_time: tracking_time(sys, input, &a, &b, cfg.escape_threshold, cfg.horizon)?,
        });
    }
    let bracket_len = length(&a, &b);
    if warning.is_none() && bracket_len > cfg.target_len {
        warning = Some(format!("bracket {bracket_len:e} above target after {} iterations", cfg.max_iters));
    }
    Ok(SeparatrixReport {
        boundary: State((&a.0 + &b.0) * 0.5),
        lo: a,
        hi: b,
        lo_cluster: la,
        hi_cluster: lb,
        bracket_len,
        steps,
        warning,
    })
}
