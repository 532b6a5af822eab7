//! The RNN state map, its state Jacobian, and cocycle evaluation.
//!
//! A network is the leaky map
//!
//! ```text
//! G(u, x) = (1 - alpha) x + alpha * phi(W_r x + W_in u + W_fb psi(x))
//! ```
//!
//! driven as `x[k+1] = G(u[k+1], x[k])`. The pre-activation is always
//! accumulated in the order `W_r x`, `+ W_in u`, `+ W_fb psi(x)` so that
//! repeated evaluations agree bit for bit.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input::InputSequence;

/// Neuron nonlinearity. Only `tanh` exists today.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// `L` such that the image of the activation is `(-L, L)`.
    pub fn bound(self) -> f64 {
        match self {
            Activation::Tanh => 1.0,
        }
    }

    /// Largest pre-activation magnitude at which the derivative is still at
    /// least `slope` (`0 < slope <= phi'(0)`); zero when `slope >= phi'(0)`.
    pub fn saturation_threshold(self, slope: f64) -> f64 {
        match self {
            Activation::Tanh => {
                if slope >= 1.0 {
                    0.0
                } else {
                    (1.0 - slope).sqrt().atanh()
                }
            }
        }
    }
}

/// Output map `psi`.
#[derive(Clone, Debug, PartialEq)]
pub enum Readout {
    None,
    Linear(DMatrix<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_r: usize,
    pub n_i: usize,
    pub n_o: usize,
}

/// Network parameters. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc", into = "ParamsDoc")]
pub struct RnnParams {
    alpha: f64,
    w_r: DMatrix<f64>,
    w_in: DMatrix<f64>,
    w_fb: DMatrix<f64>,
    readout: Readout,
    activation: Activation,
    bound: f64,
    /// `W_r + W_fb W_o` (or `W_r` without readout); constant because `psi` is linear.
    effective: DMatrix<f64>,
}

impl RnnParams {
    pub fn new(
        alpha: f64,
        w_r: DMatrix<f64>,
        w_in: DMatrix<f64>,
        w_fb: DMatrix<f64>,
        readout: Readout,
        activation: Activation,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::config(format!("leak rate must lie in (0, 1], got {alpha}")));
        }
        let n_r = w_r.nrows();
        if w_r.ncols() != n_r {
            return Err(Error::DimensionMismatch { what: "W_r columns", expected: n_r, got: w_r.ncols() });
        }
        if w_in.nrows() != n_r {
            return Err(Error::DimensionMismatch { what: "W_in rows", expected: n_r, got: w_in.nrows() });
        }
        if w_fb.nrows() != n_r {
            return Err(Error::DimensionMismatch { what: "W_fb rows", expected: n_r, got: w_fb.nrows() });
        }
        let n_o = w_fb.ncols();
        match &readout {
            Readout::None => {
                if w_fb.iter().any(|&v| v != 0.0) {
                    return Err(Error::config("output feedback requires a readout"));
                }
            }
            Readout::Linear(w_o) => {
                if w_o.nrows() != n_o {
                    return Err(Error::DimensionMismatch { what: "W_o rows", expected: n_o, got: w_o.nrows() });
                }
                if w_o.ncols() != n_r {
                    return Err(Error::DimensionMismatch { what: "W_o columns", expected: n_r, got: w_o.ncols() });
                }
            }
        }
        let all = w_r.iter().chain(w_in.iter()).chain(w_fb.iter());
        let readout_vals: &[f64] = match &readout {
            Readout::Linear(w_o) => w_o.as_slice(),
            Readout::None => &[],
        };
        if all.chain(readout_vals.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network weights"));
        }
        let effective = match &readout {
            Readout::Linear(w_o) if n_o > 0 => &w_r + &w_fb * w_o,
            _ => w_r.clone(),
        };
        Ok(Self { alpha, w_r, w_in, w_fb, readout, activation, bound: activation.bound(), effective })
    }

    /// Network with no readout and no output feedback.
    pub fn without_feedback(alpha: f64, w_r: DMatrix<f64>, w_in: DMatrix<f64>) -> Result<Self> {
        let n_r = w_r.nrows();
        Self::new(alpha, w_r, w_in, DMatrix::zeros(n_r, 0), Readout::None, Activation::Tanh)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn w_r(&self) -> &DMatrix<f64> {
        &self.w_r
    }
    pub fn w_in(&self) -> &DMatrix<f64> {
        &self.w_in
    }
    pub fn w_fb(&self) -> &DMatrix<f64> {
        &self.w_fb
    }
    pub fn readout(&self) -> &Readout {
        &self.readout
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }
    pub fn dims(&self) -> Dims {
        Dims { n_r: self.w_r.nrows(), n_i: self.w_in.ncols(), n_o: self.w_fb.ncols() }
    }

    /// `M = W_r + W_fb D_x psi`.
    pub fn effective_recurrent_matrix(&self) -> &DMatrix<f64> {
        &self.effective
    }

    /// Same network with a different linear readout.
    pub fn with_readout(&self, w_o: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.alpha,
            self.w_r.clone(),
            self.w_in.clone(),
            self.w_fb.clone(),
            Readout::Linear(w_o),
            self.activation,
        )
    }

    /// `psi(x)`, empty without a readout.
    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.readout {
            Readout::Linear(w_o) => w_o * x,
            Readout::None => DVector::zeros(0),
        }
    }

    fn pre_activation(&self, u: DVectorView<'_, f64>, x: &DVector<f64>) -> DVector<f64> {
        let mut pre = DVector::zeros(x.len());
        pre.gemv(1.0, &self.w_r, x, 0.0);
        pre.gemv(1.0, &self.w_in, &u, 1.0);
        if let Readout::Linear(w_o) = &self.readout {
            if w_o.nrows() > 0 {
                pre.gemv(1.0, &self.w_fb, &(w_o * x), 1.0);
            }
        }
        pre
    }

    fn check(&self, u: &[f64], x: &State) -> Result<()> {
        let d = self.dims();
        if u.len() != d.n_i {
            return Err(Error::DimensionMismatch { what: "input vector", expected: d.n_i, got: u.len() });
        }
        if x.dim() != d.n_r {
            return Err(Error::DimensionMismatch { what: "state vector", expected: d.n_r, got: x.dim() });
        }
        Ok(())
    }

    /// One application of `G(u, x)`.
    pub fn step(&self, u: &[f64], x: &State) -> Result<State> {
        self.check(u, x)?;
        Ok(State(self.apply(u, &x.0)))
    }

    /// `D_x G(u, x) = (1 - alpha) I + alpha S(u, x) M`.
    pub fn jacobian(&self, u: &[f64], x: &State) -> Result<DMatrix<f64>> {
        self.check(u, x)?;
        let n = self.dims().n_r;
        let pre = self.pre_activation(DVectorView::from_slice(u, u.len()), &x.0);
        let mut jac = self.effective.clone();
        for (j, xi) in pre.iter().enumerate() {
            let s = self.alpha * self.activation.derivative(*xi);
            jac.row_mut(j).scale_mut(s);
        }
        for j in 0..n {
            jac[(j, j)] += 1.0 - self.alpha;
        }
        Ok(jac)
    }

    /// Upper bound on the number of steps before a state with
    /// `||x0||_inf = start_norm > L` enters `[-L, L]^N`, for inputs with
    /// entries bounded by `input_bound`. `None` when `alpha = 1` (entry is
    /// immediate) or the state is already inside.
    ///
    /// Uses `eta >= max ||phi(...)||_inf` over the ball `||x||_inf <= start_norm`,
    /// bounded row by row with absolute row sums.
    pub fn absorption_time_bound(&self, input_bound: f64, start_norm: f64) -> Option<f64> {
        let l = self.bound;
        if start_norm <= l || self.alpha >= 1.0 {
            return None;
        }
        let eta = (0..self.dims().n_r)
            .map(|j| {
                let rec: f64 = self.effective.row(j).iter().map(|v| v.abs()).sum();
                let inp: f64 = self.w_in.row(j).iter().map(|v| v.abs()).sum();
                self.activation.eval(rec * start_norm + inp * input_bound)
            })
            .fold(0.0, f64::max);
        Some(((l - eta) / (start_norm - eta)).ln() / (1.0 - self.alpha).ln())
    }
}

/// A map driven by input values; the shared surface of every system the
/// analysis tools accept.
pub trait DrivenSystem: Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Half-width `L` of the phase space `[-L, L]^N`.
    fn bound(&self) -> f64;
    /// Evaluate the map. Dimensions are the caller's responsibility.
    fn apply(&self, u: &[f64], x: &DVector<f64>) -> DVector<f64>;
}

impl DrivenSystem for RnnParams {
    fn state_dim(&self) -> usize {
        self.w_r.nrows()
    }
    fn input_dim(&self) -> usize {
        self.w_in.ncols()
    }
    fn bound(&self) -> f64 {
        self.bound
    }
    fn apply(&self, u: &[f64], x: &DVector<f64>) -> DVector<f64> {
        let mut pre = self.pre_activation(DVectorView::from_slice(u, u.len()), x);
        let keep = 1.0 - self.alpha;
        let a = self.alpha;
        let act = self.activation;
        pre.zip_apply(x, |p, xi| *p = keep * xi + a * act.eval(*p));
        pre
    }
}

/// Network state `x[k]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct State(pub DVector<f64>);

impl State {
    pub fn zeros(n: usize) -> Self {
        State(DVector::zeros(n))
    }
    pub fn dim(&self) -> usize {
        self.0.len()
    }
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
    pub fn norm_inf(&self) -> f64 {
        self.0.amax()
    }
    /// Euclidean distance.
    pub fn distance(&self, other: &State) -> f64 {
        euclidean(self.as_slice(), other.as_slice())
    }
}

impl From<Vec<f64>> for State {
    fn from(v: Vec<f64>) -> Self {
        State(DVector::from_vec(v))
    }
}

impl From<State> for Vec<f64> {
    fn from(s: State) -> Self {
        s.0.data.into()
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// States `x[anchor], x[anchor+1], ...` along one orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub anchor: i64,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory always holds its initial state")
    }
    pub fn len(&self) -> usize {
        self.states.len()
    }
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Checked single step for any driven system.
pub fn step<S: DrivenSystem + ?Sized>(sys: &S, u: &[f64], x: &State) -> Result<State> {
    if u.len() != sys.input_dim() {
        return Err(Error::DimensionMismatch { what: "input vector", expected: sys.input_dim(), got: u.len() });
    }
    if x.dim() != sys.state_dim() {
        return Err(Error::DimensionMismatch { what: "state vector", expected: sys.state_dim(), got: x.dim() });
    }
    Ok(State(sys.apply(u, &x.0)))
}

fn check_orbit<S: DrivenSystem + ?Sized>(
    sys: &S,
    input: &InputSequence,
    start: i64,
    x0: &State,
    n: usize,
) -> Result<()> {
    if input.dim() != sys.input_dim() {
        return Err(Error::DimensionMismatch { what: "input sequence", expected: sys.input_dim(), got: input.dim() });
    }
    if x0.dim() != sys.state_dim() {
        return Err(Error::DimensionMismatch { what: "initial state", expected: sys.state_dim(), got: x0.dim() });
    }
    if n > 0 {
        input.require(start + 1, start + n as i64)?;
    }
    Ok(())
}

/// `Phi(k, u, x0)` for `k = 0..=n`.
pub fn orbit<S: DrivenSystem + ?Sized>(
    sys: &S,
    input: &InputSequence,
    x0: &State,
    n: usize,
) -> Result<Trajectory> {
    orbit_from(sys, input, 0, x0, n)
}

/// Orbit started at time `start`: `x[start] = x0`, `x[k+1] = G(u[k+1], x[k])`.
pub fn orbit_from<S: DrivenSystem + ?Sized>(
    sys: &S,
    input: &InputSequence,
    start: i64,
    x0: &State,
    n: usize,
) -> Result<Trajectory> {
    check_orbit(sys, input, start, x0, n)?;
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0.clone());
    let mut x = x0.0.clone();
    for k in 1..=n as i64 {
        x = sys.apply(input.value_unchecked(start + k), &x);
        states.push(State(x.clone()));
    }
    Ok(Trajectory { anchor: start, states })
}

/// Final state of `orbit_from` without storing the path.
pub fn evolve<S: DrivenSystem + ?Sized>(
    sys: &S,
    input: &InputSequence,
    start: i64,
    x0: &State,
    n: usize,
) -> Result<State> {
    check_orbit(sys, input, start, x0, n)?;
    let mut x = x0.0.clone();
    for k in 1..=n as i64 {
        x = sys.apply(input.value_unchecked(start + k), &x);
    }
    Ok(State(x))
}

// ---------------------------------------------------------------------------
// Structured document form

#[derive(Clone, Debug, Serialize, Deserialize)]
pub(crate) struct MatrixDoc {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixDoc {
    fn from(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect();
        MatrixDoc { rows: m.nrows(), cols: m.ncols(), data }
    }
}

impl TryFrom<MatrixDoc> for DMatrix<f64> {
    type Error = Error;
    fn try_from(d: MatrixDoc) -> Result<Self> {
        if d.data.len() != d.rows * d.cols {
            return Err(Error::DimensionMismatch { what: "matrix data length", expected: d.rows * d.cols, got: d.data.len() });
        }
        Ok(DMatrix::from_row_slice(d.rows, d.cols, &d.data))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ReadoutDoc {
    None,
    Linear { w_o: MatrixDoc },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    dims: Dims,
    alpha: f64,
    activation: Activation,
    readout: ReadoutDoc,
    w_r: MatrixDoc,
    w_in: MatrixDoc,
    w_fb: MatrixDoc,
}

impl From<RnnParams> for ParamsDoc {
    fn from(p: RnnParams) -> Self {
        ParamsDoc {
            dims: p.dims(),
            alpha: p.alpha,
            activation: p.activation,
            readout: match &p.readout {
                Readout::None => ReadoutDoc::None,
                Readout::Linear(w) => ReadoutDoc::Linear { w_o: w.into() },
            },
            w_r: (&p.w_r).into(),
            w_in: (&p.w_in).into(),
            w_fb: (&p.w_fb).into(),
        }
    }
}

impl TryFrom<ParamsDoc> for RnnParams {
    type Error = Error;
    fn try_from(d: ParamsDoc) -> Result<Self> {
        let readout = match d.readout {
            ReadoutDoc::None => Readout::None,
            ReadoutDoc::Linear { w_o } => Readout::Linear(w_o.try_into()?),
        };
        let p = RnnParams::new(d.alpha, d.w_r.try_into()?, d.w_in.try_into()?, d.w_fb.try_into()?, readout, d.activation)?;
        if p.dims() != d.dims {
            return Err(Error::config(format!("declared dims {:?} disagree with matrices {:?}", d.dims, p.dims())));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input::InputSequence;
    use rand::Rng;

    fn switching() -> RnnParams {
        RnnParams::without_feedback(
            0.25,
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.5])),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    fn random_params(rng: &mut impl Rng, n_r: usize, n_i: usize, n_o: usize) -> RnnParams {
        let mut m = |r, c, s: f64| DMatrix::from_fn(r, c, |_, _| s * (2.0 * rng.random::<f64>() - 1.0));
        let w_r = m(n_r, n_r, 0.8);
        let w_in = m(n_r, n_i, 1.0);
        let w_fb = m(n_r, n_o, 0.5);
        let w_o = m(n_o, n_r, 0.5);
        let alpha = 0.2 + 0.8 * rng.random::<f64>();
        RnnParams::new(alpha, w_r, w_in, w_fb, Readout::Linear(w_o), Activation::Tanh).unwrap()
    }

    #[test]
    fn zero_network_maps_to_zero() {
        let p = RnnParams::without_feedback(1.0, DMatrix::zeros(3, 3), DMatrix::zeros(3, 2)).unwrap();
        let x = State::from(vec![0.3, -0.7, 0.9]);
        let y = p.step(&[0.0, 0.0], &x).unwrap();
        assert_eq!(y.as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(p.jacobian(&[0.0, 0.0], &x).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn switching_step_from_origin() {
        let y = switching().step(&[0.25, 0.15], &State::zeros(2)).unwrap();
        // 0.25 * tanh(1/4), 0.25 * tanh(3/20)
        assert!((y.as_slice()[0] - 0.25 * 0.244_918_662_403_709_1).abs() < 1e-15);
        assert!((y.as_slice()[1] - 0.25 * 0.148_885_033_623_317_98).abs() < 1e-15);
    }

    #[test]
    fn switching_jacobian_closed_form() {
        let p = switching();
        let a = 0.25;
        for &(x1, x2) in &[(0.0, 0.0), (0.3, -0.9), (-1.0, 0.6), (0.49, -0.11)] {
            let j = p.jacobian(&[0.25, 0.15], &State::from(vec![x1, x2])).unwrap();
            let t1 = (x1 / 2.0 + 0.25_f64).tanh();
            let t2 = (1.5 * x2 + 0.15_f64).tanh();
            assert!((j[(0, 0)] - (1.0 - a / 2.0 * (1.0 + t1 * t1))).abs() < 1e-14);
            assert!((j[(1, 1)] - (1.0 + a / 2.0 * (1.0 - 3.0 * t2 * t2))).abs() < 1e-14);
            assert_eq!(j[(0, 1)], 0.0);
            assert_eq!(j[(1, 0)], 0.0);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = crate::rng::substream(5, 1);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for trial in 0..100 {
            let (n_r, n_i, n_o) = (1 + trial % 6, 1 + trial % 3, trial % 3);
            let p = random_params(&mut rng, n_r, n_i, n_o);
            let u: Vec<f64> = (0..n_i).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            let x = State::from((0..n_r).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect::<Vec<_>>());
            let jac = p.jacobian(&u, &x).unwrap();
            for c in 0..n_r {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp.0[c] += h;
                xm.0[c] -= h;
                let col = (p.step(&u, &xp).unwrap().0 - p.step(&u, &xm).unwrap().0) / (2.0 * h);
                for r in 0..n_r {
                    let exact = jac[(r, c)];
                    let err = (col[r] - exact).abs() / exact.abs().max(1.0);
                    worst = worst.max(err);
                }
            }
        }
        assert!(worst <= 1e-6, "max relative error {worst}");
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = switching();
        assert!(matches!(p.step(&[1.0], &State::zeros(2)), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(p.step(&[1.0, 0.0], &State::zeros(3)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_leak_rejected() {
        for alpha in [0.0, -0.5, 1.5, f64::NAN] {
            assert!(RnnParams::without_feedback(alpha, DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).is_err());
        }
    }

    #[test]
    fn feedback_without_readout_rejected() {
        let r = RnnParams::new(
            1.0,
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::from_element(2, 1, 0.1),
            Readout::None,
            Activation::Tanh,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn orbit_zero_steps_is_initial_state() {
        let input = InputSequence::explicit(1, vec![], 2).unwrap();
        let x0 = State::from(vec![0.1, -0.1]);
        let t = orbit(&switching(), &input, &x0, 0).unwrap();
        assert_eq!(t.states, vec![x0]);
    }

    #[test]
    fn orbit_reports_window_exhaustion() {
        let input = InputSequence::explicit(1, vec![0.25, 0.15, -0.25, -0.15], 2).unwrap();
        let x0 = State::zeros(2);
        assert!(orbit(&switching(), &input, &x0, 2).is_ok());
        assert!(matches!(orbit(&switching(), &input, &x0, 3), Err(Error::WindowExhausted { .. })));
    }

    #[test]
    fn document_round_trip() {
        let mut rng = crate::rng::substream(9, 0);
        let p = random_params(&mut rng, 4, 2, 2);
        let text = serde_json::to_string(&p).unwrap();
        let back: RnnParams = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
        let q = switching();
        let back: RnnParams = serde_json::from_str(&serde_json::to_string(&q).unwrap()).unwrap();
        assert_eq!(q, back);
    }

    #[test]
    fn document_rejects_inconsistent_dims() {
        let q = switching();
        let mut v: serde_json::Value = serde_json::to_value(&q).unwrap();
        v["dims"]["n_r"] = 3.into();
        assert!(serde_json::from_value::<RnnParams>(v).is_err());
    }
}
