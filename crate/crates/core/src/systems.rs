//! Concrete systems used by the experiments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contraction::Region;
use crate::dynamics::{DrivenSystem, RnnParams};
use crate::error::{Error, Result};

/// Leak rate of the two-dimensional switching network.
pub const SWITCHING_ALPHA: f64 = 0.25;
/// Diagonal of its recurrent matrix.
pub const SWITCHING_W_R: [f64; 2] = [0.5, 1.5];
/// Lower edge of the invariant contracting band `x_2 >= 0.55`.
pub const SWITCHING_BAND: f64 = 0.55;

/// `G(u, x) = (1 - 1/4) x + 1/4 tanh(diag(1/2, 3/2) x + u)`.
pub fn switching_2d() -> RnnParams {
    switching_2d_with_alpha(SWITCHING_ALPHA).expect("valid leak rate")
}

pub fn switching_2d_with_alpha(alpha: f64) -> Result<RnnParams> {
    RnnParams::without_feedback(
        alpha,
        DMatrix::from_diagonal(&DVector::from_row_slice(&SWITCHING_W_R)),
        DMatrix::identity(2, 2),
    )
}

/// The two input values `u_1 = (1/4, 3/20)` and `u_2 = -u_1`.
pub fn switching_inputs() -> ([f64; 2], [f64; 2]) {
    ([0.25, 0.15], [-0.25, -0.15])
}

/// `[-1, 1] x [0.55, 1]`.
pub fn region_upper() -> Region {
    Region::new(vec![-1.0, SWITCHING_BAND], vec![1.0, 1.0]).expect("static region")
}

/// `[-1, 1] x [-1, -0.55]`.
pub fn region_lower() -> Region {
    Region::new(vec![-1.0, -1.0], vec![1.0, -SWITCHING_BAND]).expect("static region")
}

/// Self-coupling of the scalar bistable unit.
pub const SCALAR_GAIN: f64 = 1.01;

/// `x -> tanh(1.01 x + w_in u)`.
pub fn scalar_bistable(w_in: f64) -> RnnParams {
    RnnParams::without_feedback(1.0, DMatrix::from_element(1, 1, SCALAR_GAIN), DMatrix::from_element(1, 1, w_in))
        .expect("valid scalar network")
}

/// `x -> tanh(u x / (1 + |x|))` on `[-1, 1]`.
///
/// Its saturating map `x / (1 + |x|)` is outside the RNN family, so it is its
/// own driven system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KloedenSystem {
    a: f64,
}

impl KloedenSystem {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 1.0 && a.is_finite()) {
            return Err(Error::invalid(format!("Kloeden parameter must exceed 1, got {a}")));
        }
        Ok(KloedenSystem { a })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Driving value at time `k`: `a` for `k >= 0`, `1/a` before.
    pub fn drive(&self, k: i64) -> f64 {
        if k >= 0 {
            self.a
        } else {
            1.0 / self.a
        }
    }

    /// Positive fixed point of `x = tanh(a x / (1 + x))`, by bisection.
    pub fn forward_root(&self) -> f64 {
        let g = |x: f64| x - (self.a * x / (1.0 + x)).tanh();
        // g < 0 just above zero (slope 1 - a), g(1) > 0.
        let (mut lo, mut hi) = (1e-9, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

impl TryFrom<&KloedenSystem> for RnnParams {
    type Error = Error;
    fn try_from(_: &KloedenSystem) -> Result<Self> {
        Err(Error::config("x / (1 + |x|) inside tanh is not an affine pre-activation; not an RNN"))
    }
}

impl DrivenSystem for KloedenSystem {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn bound(&self) -> f64 {
        1.0
    }
    fn apply(&self, u: &[f64], x: &DVector<f64>) -> DVector<f64> {
        let v = x[0];
        DVector::from_element(1, (u[0] * v / (1.0 + v.abs())).tanh())
    }
}
