//! Sufficient-condition certifiers for contraction and echo index one.
//!
//! Region checks sample the state box on a regular grid and the input set on
//! a finite list of values. They are numerical evidence at the sampled points,
//! not interval-arithmetic proofs; every report carries the worst sampled
//! value and its location so the margin `mu - worst_norm` can be judged.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DrivenSystem, RnnParams, State};
use crate::error::{Error, Result};
use crate::linalg::{row, spectral_norm};

/// Axis-aligned box `[lo, hi]` inside the phase space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch { what: "region corners", expected: lo.len(), got: hi.len() });
        }
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("region corners"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::invalid("region needs lo <= hi componentwise"));
        }
        Ok(Region { lo, hi })
    }

    /// `[-bound, bound]^n`.
    pub fn full(n: usize, bound: f64) -> Self {
        Region { lo: vec![-bound; n], hi: vec![bound; n] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }
    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn within(&self, bound: f64) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.abs() <= bound)
    }

    pub fn diameter(&self) -> f64 {
        crate::dynamics::euclidean(&self.lo, &self.hi)
    }

    /// Per-axis point counts; degenerate axes collapse to one point.
    fn resolution(&self, per_axis: &[usize]) -> Result<Vec<usize>> {
        if per_axis.len() != self.dim() {
            return Err(Error::DimensionMismatch { what: "grid resolution", expected: self.dim(), got: per_axis.len() });
        }
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(per_axis)
            .map(|((l, h), &n)| {
                if l == h {
                    Ok(1)
                } else if n < 2 {
                    Err(Error::invalid("grid needs at least 2 points per non-degenerate axis"))
                } else {
                    Ok(n)
                }
            })
            .collect()
    }

    /// Grid point with linear index `idx` (first axis varies slowest).
    fn grid_point(&self, counts: &[usize], mut idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for a in (0..self.dim()).rev() {
            let n = counts[a];
            let i = idx % n;
            idx /= n;
            x[a] = if n == 1 {
                self.lo[a]
            } else if i == n - 1 {
                self.hi[a]
            } else {
                self.lo[a] + (self.hi[a] - self.lo[a]) * (i as f64 / (n - 1) as f64)
            };
        }
        x
    }

    /// All grid points in linear-index order.
    pub fn grid(&self, per_axis: &[usize]) -> Result<Vec<State>> {
        let counts = self.resolution(per_axis)?;
        let total: usize = counts.iter().product();
        Ok((0..total).map(|i| State::from(self.grid_point(&counts, i))).collect())
    }
}

/// Outcome of a contraction certification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub mu: f64,
    pub certified: bool,
    pub grid_resolution: Vec<usize>,
    pub worst_norm: f64,
    pub worst_point: State,
    pub worst_input: Option<Vec<f64>>,
    pub input_samples: String,
    /// Contraction rate of the leaky map implied by a global pass,
    /// `1 - alpha (1 - mu)`.
    pub effective_rate: Option<f64>,
}

impl ContractionReport {
    pub fn margin(&self) -> f64 {
        self.mu - self.worst_norm
    }
}

/// `||D_x G(u, x)||_2`.
pub fn local_contraction_norm(params: &RnnParams, u: &[f64], x: &State) -> Result<f64> {
    spectral_norm(&params.jacobian(u, x)?)
}

fn check_region(params: &RnnParams, region: &Region) -> Result<()> {
    if region.dim() != params.state_dim() {
        return Err(Error::DimensionMismatch { what: "region", expected: params.state_dim(), got: region.dim() });
    }
    if !region.within(params.bound()) {
        return Err(Error::invalid("region must lie inside the phase space [-L, L]^N"));
    }
    Ok(())
}

fn check_samples(params: &RnnParams, u_samples: &[Vec<f64>]) -> Result<()> {
    if u_samples.is_empty() {
        return Err(Error::invalid("no input samples"));
    }
    if let Some(u) = u_samples.iter().find(|u| u.len() != params.input_dim()) {
        return Err(Error::DimensionMismatch { what: "input sample", expected: params.input_dim(), got: u.len() });
    }
    Ok(())
}

/// Evaluates the Jacobian norm on `grid x u_samples` and certifies the region
/// iff the largest value is at most `mu`. Ties for the worst point go to the
/// lowest grid index, then the lowest sample index.
pub fn region_contraction_check(
    params: &RnnParams,
    region: &Region,
    u_samples: &[Vec<f64>],
    mu: f64,
    grid: &[usize],
) -> Result<ContractionReport> {
    check_region(params, region)?;
    check_samples(params, u_samples)?;
    let counts = region.resolution(grid)?;
    let total: usize = counts.iter().product();
    let per_point: Vec<(f64, usize)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let x = State::from(region.grid_point(&counts, i));
            let mut best = (f64::NEG_INFINITY, 0);
            for (s, u) in u_samples.iter().enumerate() {
                let n = local_contraction_norm(params, u, &x)?;
                if n > best.0 {
                    best = (n, s);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let mut worst = (f64::NEG_INFINITY, 0, 0);
    for (i, (n, s)) in per_point.into_iter().enumerate() {
        if n > worst.0 {
            worst = (n, i, s);
        }
    }
    Ok(ContractionReport {
        mu,
        certified: worst.0 <= mu,
        grid_resolution: counts.clone(),
        worst_norm: worst.0,
        worst_point: State::from(region.grid_point(&counts, worst.1)),
        worst_input: Some(u_samples[worst.2].clone()),
        input_samples: format!("{} explicit input values", u_samples.len()),
        effective_rate: None,
    })
}

/// Analytic boundary of the expansion strip of the scalar leaky unit
/// `x -> (1 - a) x + a tanh(weight x + bias)`: the two states where the
/// derivative equals one, `x = (±atanh(sqrt(1 - 1/weight)) - bias) / weight`.
/// Requires `weight > 1`.
pub fn expansion_strip(weight: f64, bias: f64) -> Result<(f64, f64)> {
    if weight.is_nan() || weight <= 1.0 {
        return Err(Error::invalid(format!("no expansion strip for weight {weight} <= 1")));
    }
    let t = (1.0 - 1.0 / weight).sqrt().atanh();
    Ok(((-t - bias) / weight, (t - bias) / weight))
}

/// Expansion strip in `x_2` of the switching system under `u_1`.
pub fn strip_bounds_closed_form() -> (f64, f64) {
    expansion_strip(1.5, 0.15).expect("weight 1.5 > 1")
}

/// Global condition `phi'(0) ||W_r + W_fb D_x psi|| <= mu`. With a linear
/// readout `D_x psi = W_o` is constant, so one evaluation covers the whole
/// phase space and every input set.
pub fn global_esp_check(params: &RnnParams, mu: f64) -> Result<ContractionReport> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::invalid(format!("mu must lie in (0, 1), got {mu}")));
    }
    let slope = params.activation().derivative(0.0);
    let worst = slope * spectral_norm(params.effective_recurrent_matrix())?;
    let certified = worst <= mu;
    Ok(ContractionReport {
        mu,
        certified,
        grid_resolution: vec![],
        worst_norm: worst,
        worst_point: State::zeros(params.state_dim()),
        worst_input: None,
        input_samples: "all input values".into(),
        effective_rate: certified.then(|| 1.0 - params.alpha() * (1.0 - mu)),
    })
}

/// Radii beyond which inputs saturate every neuron enough to contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LargeInputSpec {
    pub epsilon: f64,
    pub mu: f64,
    /// Pre-activation magnitude that guarantees `phi'(xi) * max ||M|| <= mu`.
    pub xi_bar: f64,
    /// `R_j = (xi_bar + sigma_j) / (epsilon ||(W_in)_j||)`.
    pub radii: Vec<f64>,
    /// `sigma_j = max_x |f_j(x)|` over the phase space.
    pub sigma_bounds: Vec<f64>,
    /// `max_x ||M(x)||`.
    pub effective_norm: f64,
}

impl LargeInputSpec {
    /// Common radius valid for every row.
    pub fn radius(&self) -> f64 {
        self.radii.iter().copied().fold(0.0, f64::max)
    }

    /// Whether `u` lies in `P_j(epsilon, R_j)` for every row `j`: far enough
    /// from the origin and at least angle-cosine `epsilon` away from the
    /// hyperplane `(W_in)_j . u = 0`.
    pub fn contains(&self, params: &RnnParams, u: &[f64]) -> bool {
        if u.len() != params.input_dim() {
            return false;
        }
        let uv = DVector::from_column_slice(u);
        let nu = uv.norm();
        (0..params.state_dim()).all(|j| {
            let w = row(params.w_in(), j);
            let nw = w.norm();
            // A few ulps of slack so that exactly aligned inputs pass at epsilon = 1.
            let cos_ok = w.dot(&uv).abs() >= self.epsilon * nw * nu * (1.0 - 4.0 * f64::EPSILON);
            nu >= self.radii[j] && cos_ok
        })
    }
}

/// Large-input radii for `(epsilon, mu)`. For `tanh`,
/// `xi_bar = atanh(sqrt(1 - mu / sigma~))`, clamped to zero when
/// `mu >= sigma~`. The maximum of the linear `f_j` over the box is attained at
/// a corner: `sigma_j = L ||M_j||_1`.
pub fn large_input_radius(params: &RnnParams, epsilon: f64, mu: f64) -> Result<LargeInputSpec> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::invalid(format!("mu must lie in (0, 1), got {mu}")));
    }
    let n = params.state_dim();
    let w_in_norms: Vec<f64> = (0..n).map(|j| row(params.w_in(), j).norm()).collect();
    if let Some(j) = w_in_norms.iter().position(|v| *v == 0.0) {
        return Err(Error::invalid(format!("row {j} of W_in is zero; large inputs cannot saturate that neuron")));
    }
    let m = params.effective_recurrent_matrix();
    let effective_norm = spectral_norm(m)?;
    let xi_bar = if effective_norm == 0.0 {
        0.0
    } else {
        params.activation().saturation_threshold(mu / effective_norm)
    };
    let sigma_bounds: Vec<f64> =
        (0..n).map(|j| params.bound() * m.row(j).iter().map(|v| v.abs()).sum::<f64>()).collect();
    let radii = sigma_bounds.iter().zip(&w_in_norms).map(|(s, w)| (xi_bar + s) / (epsilon * w)).collect();
    Ok(LargeInputSpec { epsilon, mu, xi_bar, radii, sigma_bounds, effective_norm })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceWitness {
    pub state: State,
    pub input: Vec<f64>,
    pub image: State,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub invariant: bool,
    pub grid_resolution: Vec<usize>,
    /// First failing `(x, u)` in grid order.
    pub witness: Option<InvarianceWitness>,
}

/// Checks `G(u, x) in region` for every grid point `x` and sample `u`.
pub fn region_invariance_check(
    params: &RnnParams,
    region: &Region,
    u_samples: &[Vec<f64>],
    grid: &[usize],
) -> Result<InvarianceReport> {
    check_region(params, region)?;
    check_samples(params, u_samples)?;
    let counts = region.resolution(grid)?;
    let total: usize = counts.iter().product();
    let failure = (0..total).into_par_iter().find_map_first(|i| {
        let x = State::from(region.grid_point(&counts, i));
        u_samples.iter().find_map(|u| {
            let y = State(params.apply(u, &x.0));
            (!region.contains(y.as_slice())).then(|| InvarianceWitness { state: x.clone(), input: u.clone(), image: y })
        })
    });
    Ok(InvarianceReport { invariant: failure.is_none(), grid_resolution: counts, witness: failure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems;
    use nalgebra::DMatrix;

    fn inputs() -> Vec<Vec<f64>> {
        let (u1, u2) = systems::switching_inputs();
        vec![u1.to_vec(), u2.to_vec()]
    }

    #[test]
    fn zero_network_has_zero_norm() {
        let p = RnnParams::without_feedback(1.0, DMatrix::zeros(2, 2), DMatrix::zeros(2, 1)).unwrap();
        assert_eq!(local_contraction_norm(&p, &[0.3], &State::from(vec![0.2, 0.1])).unwrap(), 0.0);
    }

    #[test]
    fn switching_norm_matches_closed_form() {
        // Diagonal Jacobian: entries 1 - a + a w_i (1 - t_i^2).
        let p = systems::switching_2d();
        let a = systems::SWITCHING_ALPHA;
        let x = State::from(vec![0.0, 0.9]);
        let t1 = 0.25f64.tanh();
        let t2 = (1.5f64 * 0.9 + 0.15).tanh();
        let closed = (1.0 - a + a * 0.5 * (1.0 - t1 * t1)).max(1.0 + a / 2.0 * (1.0 - 3.0 * t2 * t2));
        let n = local_contraction_norm(&p, &[0.25, 0.15], &x).unwrap();
        assert!(closed < 1.0);
        assert!((n - closed).abs() < 1e-10);
        let inside = local_contraction_norm(&p, &[0.25, 0.15], &State::from(vec![0.0, 0.0])).unwrap();
        assert!(inside > 1.0);
    }

    #[test]
    fn strip_bounds() {
        let (lo, hi) = strip_bounds_closed_form();
        assert!((lo + 0.5390).abs() < 1e-3 && (hi - 0.3390).abs() < 1e-3);
        // Mirror strip for u_2.
        let (lo2, hi2) = expansion_strip(1.5, -0.15).unwrap();
        assert!((lo2 + hi).abs() < 1e-15 && (hi2 + lo).abs() < 1e-15);
        assert!(expansion_strip(0.9, 0.0).is_err());
    }

    #[test]
    fn upper_region_contracts_and_strip_does_not() {
        let p = systems::switching_2d();
        let rep = region_contraction_check(&p, &systems::region_upper(), &inputs(), 1.0, &[21, 21]).unwrap();
        assert!(rep.certified && rep.worst_norm < 1.0, "{rep:?}");
        let strip = Region::new(vec![-1.0, -0.2], vec![1.0, 0.2]).unwrap();
        let rep = region_contraction_check(&p, &strip, &inputs(), 1.0, &[11, 11]).unwrap();
        assert!(!rep.certified);
    }

    #[test]
    fn worst_point_reproduces() {
        let p = systems::switching_2d();
        let rep = region_contraction_check(&p, &systems::region_lower(), &inputs(), 0.999, &[17, 9]).unwrap();
        let again = local_contraction_norm(&p, rep.worst_input.as_ref().unwrap(), &rep.worst_point).unwrap();
        assert!((again - rep.worst_norm).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_region_is_single_point() {
        let p = systems::switching_2d();
        let r = Region::new(vec![0.3, 0.7], vec![0.3, 0.7]).unwrap();
        let rep = region_contraction_check(&p, &r, &inputs(), 1.0, &[5, 5]).unwrap();
        assert_eq!(rep.grid_resolution, vec![1, 1]);
        assert_eq!(rep.worst_point.as_slice(), &[0.3, 0.7]);
    }

    #[test]
    fn empty_samples_rejected() {
        let p = systems::switching_2d();
        assert!(region_contraction_check(&p, &systems::region_upper(), &[], 1.0, &[3, 3]).is_err());
        assert!(region_contraction_check(&p, &systems::region_upper(), &inputs(), 1.0, &[1, 3]).is_err());
    }

    #[test]
    fn refinement_never_rescues_a_failure() {
        let p = systems::switching_2d();
        let r = Region::new(vec![-1.0, 0.3], vec![1.0, 0.6]).unwrap();
        let mut n = 3;
        let mut failed = false;
        for _ in 0..5 {
            let rep = region_contraction_check(&p, &r, &inputs()[..1], 0.999, &[n, n]).unwrap();
            if failed {
                assert!(!rep.certified);
            }
            failed |= !rep.certified;
            let wider = region_contraction_check(&p, &r, &inputs(), 0.999, &[n, n]).unwrap();
            if !rep.certified {
                assert!(!wider.certified);
            }
            n = 2 * n - 1;
        }
        assert!(failed);
    }

    #[test]
    fn global_check_cases() {
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, -0.5]));
        let p = RnnParams::without_feedback(1.0, w, DMatrix::identity(2, 2)).unwrap();
        let rep = global_esp_check(&p, 0.9).unwrap();
        assert!(rep.certified && (rep.worst_norm - 0.9).abs() < 1e-15);
        let leaky = RnnParams::without_feedback(0.5, DMatrix::from_element(1, 1, 0.5), DMatrix::identity(1, 1)).unwrap();
        assert!((global_esp_check(&leaky, 0.6).unwrap().effective_rate.unwrap() - 0.8).abs() < 1e-15);
        let scalar = systems::scalar_bistable(1.0);
        assert!(!global_esp_check(&scalar, 0.999).unwrap().certified);
        let zero = RnnParams::without_feedback(1.0, DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        assert!(global_esp_check(&zero, 1e-9).unwrap().certified);
        assert!(global_esp_check(&zero, 1.0).is_err());
    }

    #[test]
    fn scalar_large_input_radius() {
        let w = 0.7;
        let p = systems::scalar_bistable(w);
        let spec = large_input_radius(&p, 1.0, 0.5).unwrap();
        let xi = (1.0 - 0.5f64 / 1.01).sqrt().atanh();
        assert!((spec.xi_bar - xi).abs() < 1e-14);
        assert!((spec.radii[0] - (xi + 1.01) / w).abs() < 1e-12);
        assert!(spec.contains(&p, &[spec.radius()]));
        assert!(spec.contains(&p, &[-2.0 * spec.radius()]));
        assert!(!spec.contains(&p, &[0.5 * spec.radius()]));
    }

    #[test]
    fn large_input_without_recurrence() {
        let w_in = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let p = RnnParams::without_feedback(1.0, DMatrix::zeros(2, 2), w_in).unwrap();
        let spec = large_input_radius(&p, 0.5, 0.5).unwrap();
        assert_eq!(spec.sigma_bounds, vec![0.0, 0.0]);
        assert_eq!(spec.xi_bar, 0.0); // ||M|| = 0 contracts already
        let q = RnnParams::without_feedback(1.0, DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        let spec = large_input_radius(&q, 0.5, 0.5).unwrap();
        let xi = (0.5f64).sqrt().atanh();
        assert!((spec.radii[0] - (xi + 1.0) / 0.5).abs() < 1e-12);
        assert!((spec.radii[1] - (xi + 1.0) / 1.0).abs() < 1e-12);
        // Angle condition: (1, 1)/sqrt(2) has cosine 0.707 with both rows.
        let r = spec.radius() * 2.0;
        assert!(spec.contains(&q, &[r, r]));
        // Nearly orthogonal to row 0.
        assert!(!spec.contains(&q, &[0.01 * r, 10.0 * r]));
    }

    #[test]
    fn zero_input_row_rejected() {
        let p = RnnParams::without_feedback(1.0, DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).unwrap();
        assert!(large_input_radius(&p, 0.5, 0.5).is_err());
    }

    #[test]
    fn invariance_cases() {
        let p = systems::switching_2d();
        let full = Region::full(2, 1.0);
        assert!(region_invariance_check(&p, &full, &inputs(), &[21, 21]).unwrap().invariant);
        for r in [systems::region_upper(), systems::region_lower()] {
            assert!(region_invariance_check(&p, &r, &inputs(), &[41, 41]).unwrap().invariant);
        }
        let strip = Region::new(vec![-1.0, -0.2], vec![1.0, 0.2]).unwrap();
        let rep = region_invariance_check(&p, &strip, &inputs(), &[11, 11]).unwrap();
        assert!(!rep.invariant);
        let w = rep.witness.unwrap();
        assert!(strip.contains(w.state.as_slice()) && !strip.contains(w.image.as_slice()));
    }

    #[test]
    fn region_validation() {
        assert!(Region::new(vec![0.0], vec![-1.0]).is_err());
        let p = systems::switching_2d();
        let outside = Region::new(vec![-2.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(region_invariance_check(&p, &outside, &inputs(), &[3, 3]).is_err());
    }
}
