//! Input sequences on finite windows of the integer time axis, the shift
//! operator, sequence-space metrics, and the seeded generators.
//!
//! A bi-infinite input `u = (u[k])_{k in Z}` is stored as a window
//! `u[anchor], ..., u[anchor + len - 1]`. Reading outside the window is an
//! error, never an implicit padding.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contraction::LargeInputSpec;
use crate::dynamics::{euclidean, RnnParams};
use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// `len` consecutive time indices starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: i64,
    pub len: usize,
}

impl Window {
    pub fn new(start: i64, len: usize) -> Self {
        Window { start, len }
    }

    /// Window covering `[-half, half]`.
    pub fn symmetric(half: usize) -> Self {
        Window { start: -(half as i64), len: 2 * half + 1 }
    }
}

/// Componentwise bounds of the compact input set `U`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputBox {
    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn diameter(&self) -> f64 {
        euclidean(&self.lo, &self.hi)
    }

    pub fn union(&self, other: &InputBox) -> InputBox {
        InputBox {
            lo: self.lo.iter().zip(&other.lo).map(|(a, b)| a.min(*b)).collect(),
            hi: self.hi.iter().zip(&other.hi).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    fn tight(values: &[f64], dim: usize) -> InputBox {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for row in values.chunks(dim.max(1)) {
            for (c, v) in row.iter().enumerate() {
                lo[c] = lo[c].min(*v);
                hi[c] = hi[c].max(*v);
            }
        }
        if values.is_empty() {
            lo.fill(0.0);
            hi.fill(0.0);
        }
        InputBox { lo, hi }
    }
}

/// How a sequence was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// i.i.d. choice of `u1` (probability `p`) or `u2` per step.
    TwoSymbol { u1: Vec<f64>, u2: Vec<f64>, p: f64 },
    /// Scalar `w * Uniform(-1, 1)`.
    UniformScaled { w: f64 },
    /// Four-channel network input `(u1, u2, u3, u4)` of the context task.
    ContextTask { pulse_prob: f64 },
    /// `base` with every value outside `|k| <= m` replaced by `far_value`.
    Splice { base: Box<GeneratorSpec>, m: u64, far_value: Vec<f64> },
}

/// Complete recipe for a generated sequence: same spec, same values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub window: Window,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<InputSequence> {
        match &self.kind {
            GeneratorKind::TwoSymbol { u1, u2, p } => gen_two_symbol(u1, u2, *p, self.window, self.seed),
            GeneratorKind::UniformScaled { w } => gen_uniform_scaled(*w, self.window, self.seed),
            GeneratorKind::ContextTask { pulse_prob } => {
                Ok(gen_context_task(self.window, *pulse_prob, self.seed)?.network_input())
            }
            GeneratorKind::Splice { base, m, far_value } => {
                let base_seq = base.generate()?;
                Ok(splice_unchecked(&base_seq, *m, far_value))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Explicit,
    Generated(GeneratorSpec),
}

/// A finite window of a bi-infinite input sequence.
///
/// Cloning and shifting share the stored values.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSequence {
    anchor: i64,
    dim: usize,
    values: Arc<Vec<f64>>,
    bounds: InputBox,
    provenance: Provenance,
}

impl InputSequence {
    /// Sequence from row-major `values` (`dim` entries per time step), with
    /// the tightest box around the data as `U`.
    pub fn explicit(anchor: i64, values: Vec<f64>, dim: usize) -> Result<Self> {
        let bounds = InputBox::tight(&values, dim);
        Self::with_bounds(anchor, values, dim, bounds, Provenance::Explicit)
    }

    pub fn with_bounds(
        anchor: i64,
        values: Vec<f64>,
        dim: usize,
        bounds: InputBox,
        provenance: Provenance,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { what: "input values (multiple of dim)", expected: dim, got: values.len() % dim });
        }
        if bounds.lo.len() != dim || bounds.hi.len() != dim {
            return Err(Error::DimensionMismatch { what: "input bounds", expected: dim, got: bounds.lo.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input sequence"));
        }
        if let Some(bad) = values.chunks(dim).position(|row| !bounds.contains(row)) {
            return Err(Error::invalid(format!("input value at index {} lies outside the declared set U", anchor + bad as i64)));
        }
        Ok(InputSequence { anchor, dim, values: Arc::new(values), bounds, provenance })
    }

    pub fn anchor(&self) -> i64 {
        self.anchor
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    /// First stored index.
    pub fn first(&self) -> i64 {
        self.anchor
    }
    /// Last stored index (`first() - 1` when empty).
    pub fn last(&self) -> i64 {
        self.anchor + self.len() as i64 - 1
    }
    pub fn window(&self) -> Window {
        Window { start: self.anchor, len: self.len() }
    }
    pub fn bounds(&self) -> &InputBox {
        &self.bounds
    }
    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Errors unless `[from, to]` is stored.
    pub fn require(&self, from: i64, to: i64) -> Result<()> {
        for k in [from, to] {
            if k < self.first() || k > self.last() {
                return Err(Error::WindowExhausted { index: k, first: self.first(), last: self.last() });
            }
        }
        Ok(())
    }

    pub fn value(&self, k: i64) -> Result<&[f64]> {
        self.require(k, k)?;
        Ok(self.value_unchecked(k))
    }

    /// `u[k]`; panics outside the window. Callers check coverage first.
    #[inline]
    pub(crate) fn value_unchecked(&self, k: i64) -> &[f64] {
        let i = (k - self.anchor) as usize * self.dim;
        &self.values[i..i + self.dim]
    }

    /// `(sigma^n u)[k] = u[k + n]`, by moving the anchor.
    pub fn shift(&self, n: i64) -> InputSequence {
        InputSequence { anchor: self.anchor - n, ..self.clone() }
    }

    /// Row-major copy of the stored values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Only the listed channels, in the given order.
    pub fn select(&self, channels: &[usize]) -> Result<InputSequence> {
        if let Some(&c) = channels.iter().find(|&&c| c >= self.dim) {
            return Err(Error::invalid(format!("channel {c} out of range for dimension {}", self.dim)));
        }
        let values = self.values.chunks(self.dim).flat_map(|row| channels.iter().map(move |&c| row[c])).collect();
        let bounds = InputBox {
            lo: channels.iter().map(|&c| self.bounds.lo[c]).collect(),
            hi: channels.iter().map(|&c| self.bounds.hi[c]).collect(),
        };
        Self::with_bounds(self.anchor, values, channels.len(), bounds, Provenance::Explicit)
    }

    /// Writes `k,u_1,...,u_N` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.dim).map(|i| format!("u_{i}")));
        out.write_record(&header)?;
        for (i, row) in self.values.chunks(self.dim).enumerate() {
            let mut rec = vec![(self.anchor + i as i64).to_string()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format of [`write_csv`](Self::write_csv). Indices must be
    /// consecutive.
    pub fn read_csv<R: Read>(r: R) -> Result<InputSequence> {
        let mut rdr = csv::Reader::from_reader(r);
        let dim = rdr.headers()?.len().saturating_sub(1);
        if dim == 0 {
            return Err(Error::invalid("input CSV needs a k column and at least one value column"));
        }
        let mut anchor = None;
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let k: i64 = rec[0].trim().parse().map_err(|e| Error::invalid(format!("bad index {:?}: {e}", &rec[0])))?;
            let a = *anchor.get_or_insert(k);
            if k != a + i as i64 {
                return Err(Error::invalid(format!("non-consecutive index {k} in input CSV")));
            }
            for field in rec.iter().skip(1) {
                values.push(field.trim().parse::<f64>().map_err(|e| Error::invalid(format!("bad value {field:?}: {e}")))?);
            }
        }
        Self::explicit(anchor.unwrap_or(0), values, dim)
    }
}

/// `sum_{|k| <= half_width} |u[k] - v[k]| / 2^|k|`, the truncated product
/// metric. The omitted tail is at most `diam(U) * 2^(1 - half_width)`.
pub fn d_prod(u: &InputSequence, v: &InputSequence, half_width: usize) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch { what: "d_prod operands", expected: u.dim(), got: v.dim() });
    }
    let h = half_width as i64;
    u.require(-h, h)?;
    v.require(-h, h)?;
    // Summed from the outside in so the small terms accumulate first.
    let mut total = 0.0;
    for a in (0..=h).rev() {
        let w = 0.5f64.powi(a as i32);
        let mut term = euclidean(u.value_unchecked(a), v.value_unchecked(a));
        if a != 0 {
            term += euclidean(u.value_unchecked(-a), v.value_unchecked(-a));
        }
        total += term * w;
    }
    Ok(total)
}

/// Bound on the tail dropped by [`d_prod`] at `half_width`.
pub fn d_prod_truncation_bound(u: &InputSequence, v: &InputSequence, half_width: usize) -> f64 {
    u.bounds().union(v.bounds()).diameter() * 2f64.powi(1 - half_width as i32)
}

/// `sup_k |u[k] - v[k]|` over the (shared) window.
pub fn d_unif(u: &InputSequence, v: &InputSequence) -> Result<f64> {
    if u.window() != v.window() {
        return Err(Error::invalid(format!("d_unif needs equal windows, got {:?} and {:?}", u.window(), v.window())));
    }
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch { what: "d_unif operands", expected: u.dim(), got: v.dim() });
    }
    Ok(u.values
        .chunks(u.dim)
        .zip(v.values.chunks(v.dim))
        .map(|(a, b)| euclidean(a, b))
        .fold(0.0, f64::max))
}

pub fn gen_two_symbol(u1: &[f64], u2: &[f64], p: f64, window: Window, seed: u64) -> Result<InputSequence> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("symbol probability must lie in [0, 1], got {p}")));
    }
    if u1.len() != u2.len() || u1.is_empty() {
        return Err(Error::DimensionMismatch { what: "two-symbol alphabet", expected: u1.len(), got: u2.len() });
    }
    let dim = u1.len();
    let mut rng = rng::substream(seed, streams::TWO_SYMBOL);
    let mut values = Vec::with_capacity(window.len * dim);
    for _ in 0..window.len {
        let pick = if rng.random::<f64>() < p { u1 } else { u2 };
        values.extend_from_slice(pick);
    }
    let a = InputBox { lo: u1.to_vec(), hi: u1.to_vec() };
    let b = InputBox { lo: u2.to_vec(), hi: u2.to_vec() };
    let spec = GeneratorSpec {
        kind: GeneratorKind::TwoSymbol { u1: u1.to_vec(), u2: u2.to_vec(), p },
        window,
        seed,
    };
    InputSequence::with_bounds(window.start, values, dim, a.union(&b), Provenance::Generated(spec))
}

pub fn gen_uniform_scaled(w: f64, window: Window, seed: u64) -> Result<InputSequence> {
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::invalid(format!("input gain must be a finite non-negative number, got {w}")));
    }
    let mut rng = rng::substream(seed, streams::UNIFORM_SCALED);
    let values = (0..window.len).map(|_| w * rng::uniform(&mut rng, -1.0, 1.0)).collect();
    let spec = GeneratorSpec { kind: GeneratorKind::UniformScaled { w }, window, seed };
    InputSequence::with_bounds(window.start, values, 1, InputBox { lo: vec![-w], hi: vec![w] }, Provenance::Generated(spec))
}

/// Exponential smoothing kernel `g(s) = exp(-s / 50)`, cut where it drops
/// below `1e-6`.
pub const CONTEXT_FILTER_SCALE: f64 = 50.0;
pub const CONTEXT_FILTER_CUTOFF: f64 = 1e-6;
/// Biases added to the two smoothed drive channels.
pub const CONTEXT_BIASES: [f64; 2] = [0.3, 0.15];

pub fn context_filter() -> Vec<f64> {
    (0..)
        .map(|s| (-(s as f64) / CONTEXT_FILTER_SCALE).exp())
        .take_while(|g| *g >= CONTEXT_FILTER_CUTOFF)
        .collect()
}

/// Signals of the context-dependent routing task.
#[derive(Clone, Debug)]
pub struct ContextTask {
    /// Smoothed drive `(u1, u2)`, normalized to a window maximum of one.
    pub drive: InputSequence,
    /// Impulses `(u3, u4)`: `u3` switches the context on, `u4` off.
    pub pulses: InputSequence,
    /// `(z1, z2)`: context `+1`/`-1`, and `u1` when on / `u2` when off.
    pub targets: InputSequence,
}

impl ContextTask {
    /// `(u1, u2, u3, u4)` as fed to the network.
    pub fn network_input(&self) -> InputSequence {
        self.combine(true)
    }

    /// Same as [`network_input`](Self::network_input) with both pulse channels
    /// held at zero.
    pub fn network_input_without_pulses(&self) -> InputSequence {
        self.combine(false)
    }

    fn combine(&self, with_pulses: bool) -> InputSequence {
        let n = self.drive.len();
        let mut values = Vec::with_capacity(4 * n);
        for i in 0..n {
            let k = self.drive.first() + i as i64;
            values.extend_from_slice(self.drive.value_unchecked(k));
            if with_pulses {
                values.extend_from_slice(self.pulses.value_unchecked(k));
            } else {
                values.extend_from_slice(&[0.0, 0.0]);
            }
        }
        let bounds = InputBox { lo: vec![0.0; 4], hi: vec![1.0; 4] };
        let provenance = match (self.drive.provenance(), with_pulses) {
            (Provenance::Generated(spec), true) => Provenance::Generated(spec.clone()),
            _ => Provenance::Explicit,
        };
        InputSequence::with_bounds(self.drive.first(), values, 4, bounds, provenance)
            .expect("context channels are finite and inside [0, 1]")
    }

    /// Steps `k` with a pulse on either channel.
    pub fn pulse_times(&self) -> Vec<i64> {
        (self.pulses.first()..=self.pulses.last())
            .filter(|&k| self.pulses.value_unchecked(k).iter().any(|v| *v != 0.0))
            .collect()
    }
}

fn smoothed_channel(seed: u64, stream: u64, len: usize, bias: f64, kernel: &[f64]) -> Result<Vec<f64>> {
    let mut rng = rng::substream(seed, stream);
    let lag = kernel.len() - 1;
    let noise: Vec<f64> = (0..len + lag).map(|_| rng.random::<f64>()).collect();
    let mut out: Vec<f64> = (0..len)
        .map(|i| {
            let n = i + lag;
            kernel.iter().enumerate().map(|(s, g)| noise[n - s] * g).sum::<f64>() + bias
        })
        .collect();
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || max <= 0.0 {
        return Err(Error::invalid("context drive channel is degenerate (non-positive maximum)"));
    }
    out.iter_mut().for_each(|v| *v /= max);
    Ok(out)
}

/// Generates the context task on `window`. The context starts "off"
/// (`z1 = -1`); on a step where both pulses fire, "on" wins; `z1` takes its
/// new value on the pulse step itself.
pub fn gen_context_task(window: Window, pulse_prob: f64, seed: u64) -> Result<ContextTask> {
    if !(pulse_prob > 0.0 && pulse_prob < 1.0) {
        return Err(Error::invalid(format!("pulse probability must lie in (0, 1), got {pulse_prob}")));
    }
    if window.len == 0 {
        return Err(Error::invalid("context task window is empty"));
    }
    let kernel = context_filter();
    let u1 = smoothed_channel(seed, streams::CONTEXT_NOISE_1, window.len, CONTEXT_BIASES[0], &kernel)?;
    let u2 = smoothed_channel(seed, streams::CONTEXT_NOISE_2, window.len, CONTEXT_BIASES[1], &kernel)?;
    let mut on_rng = rng::substream(seed, streams::CONTEXT_PULSE_ON);
    let mut off_rng = rng::substream(seed, streams::CONTEXT_PULSE_OFF);

    let mut drive = Vec::with_capacity(2 * window.len);
    let mut pulses = Vec::with_capacity(2 * window.len);
    let mut targets = Vec::with_capacity(2 * window.len);
    let mut context = -1.0;
    for i in 0..window.len {
        let on = if on_rng.random::<f64>() < pulse_prob { 1.0 } else { 0.0 };
        let off = if off_rng.random::<f64>() < pulse_prob { 1.0 } else { 0.0 };
        if on > 0.0 {
            context = 1.0;
        } else if off > 0.0 {
            context = -1.0;
        }
        drive.extend_from_slice(&[u1[i], u2[i]]);
        pulses.extend_from_slice(&[on, off]);
        targets.extend_from_slice(&[context, if context > 0.0 { u1[i] } else { u2[i] }]);
    }
    let spec = GeneratorSpec { kind: GeneratorKind::ContextTask { pulse_prob }, window, seed };
    let unit = InputBox { lo: vec![0.0; 2], hi: vec![1.0; 2] };
    Ok(ContextTask {
        drive: InputSequence::with_bounds(window.start, drive, 2, unit.clone(), Provenance::Generated(spec))?,
        pulses: InputSequence::with_bounds(window.start, pulses, 2, unit, Provenance::Explicit)?,
        targets: InputSequence::with_bounds(
            window.start,
            targets,
            2,
            InputBox { lo: vec![-1.0, 0.0], hi: vec![1.0, 1.0] },
            Provenance::Explicit,
        )?,
    })
}

fn splice_unchecked(u: &InputSequence, m: u64, far_value: &[f64]) -> InputSequence {
    let m = m.min(i64::MAX as u64) as i64;
    let mut values = Vec::with_capacity(u.values.len());
    for k in u.first()..=u.last() {
        if k.abs() <= m {
            values.extend_from_slice(u.value_unchecked(k));
        } else {
            values.extend_from_slice(far_value);
        }
    }
    let far = InputBox { lo: far_value.to_vec(), hi: far_value.to_vec() };
    let provenance = match u.provenance() {
        Provenance::Generated(base) => Provenance::Generated(GeneratorSpec {
            kind: GeneratorKind::Splice { base: Box::new(base.clone()), m: m as u64, far_value: far_value.to_vec() },
            window: base.window,
            seed: base.seed,
        }),
        Provenance::Explicit => Provenance::Explicit,
    };
    InputSequence { anchor: u.anchor, dim: u.dim, values: Arc::new(values), bounds: u.bounds.union(&far), provenance }
}

/// `v[k] = u[k]` for `|k| <= m`, `v[k] = far_value` elsewhere on the window.
///
/// `far_value` must lie in every large-input region `P_j(eps, R_j)` of
/// `spec`, so that the far past and far future of `v` are contracting.
pub fn splice_large_input(
    u: &InputSequence,
    m: u64,
    far_value: &[f64],
    params: &RnnParams,
    spec: &LargeInputSpec,
) -> Result<InputSequence> {
    if far_value.len() != u.dim() {
        return Err(Error::DimensionMismatch { what: "splice far value", expected: u.dim(), got: far_value.len() });
    }
    if far_value.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("splice far value"));
    }
    if !spec.contains(params, far_value) {
        return Err(Error::invalid(format!("far value {far_value:?} is outside the certified large-input region")));
    }
    Ok(splice_unchecked(u, m, far_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(anchor: i64, len: usize) -> InputSequence {
        InputSequence::explicit(anchor, (0..len).map(|i| i as f64).collect(), 1).unwrap()
    }

    #[test]
    fn shift_by_zero_is_identity() {
        let u = ramp(-5, 11);
        assert_eq!(u.shift(0), u);
    }

    #[test]
    fn shift_reads_ahead() {
        let u = ramp(-5, 11);
        assert_eq!(u.shift(1).value(0).unwrap(), u.value(1).unwrap());
        assert_eq!(u.shift(-3).value(2).unwrap(), u.value(-1).unwrap());
    }

    proptest! {
        #[test]
        fn shift_composes(m in -100i64..=100, n in -100i64..=100) {
            let u = ramp(-250, 501);
            prop_assert_eq!(u.shift(m).shift(n), u.shift(m + n));
        }

        #[test]
        fn d_prod_tail_bound(seed in 0u64..1000, half in 1usize..20) {
            let w = Window::symmetric(2 * half);
            let u = gen_uniform_scaled(0.7, w, seed).unwrap();
            let v = gen_uniform_scaled(0.7, w, seed + 1).unwrap();
            let short = d_prod(&u, &v, half).unwrap();
            let long = d_prod(&u, &v, 2 * half).unwrap();
            prop_assert!(long - short <= d_prod_truncation_bound(&u, &v, half) + 1e-15);
            prop_assert!(long >= short);
        }
    }

    #[test]
    fn window_errors() {
        let u = ramp(0, 5);
        assert!(matches!(u.value(5), Err(Error::WindowExhausted { .. })));
        assert!(matches!(u.value(-1), Err(Error::WindowExhausted { .. })));
        assert!(matches!(d_prod(&u, &u, 1), Err(Error::WindowExhausted { .. })));
    }

    #[test]
    fn d_prod_single_difference() {
        let u = InputSequence::explicit(-12, vec![0.0; 25], 1).unwrap();
        let mut vals = vec![0.0; 25];
        vals[22] = 0.3; // k = 10
        let v = InputSequence::explicit(-12, vals, 1).unwrap();
        assert_eq!(d_prod(&u, &u, 12).unwrap(), 0.0);
        assert!((d_prod(&u, &v, 12).unwrap() - 0.3 / 1024.0).abs() < 1e-18);
        assert_eq!(d_prod(&u, &v, 9).unwrap(), 0.0);
    }

    #[test]
    fn d_unif_constants_and_errors() {
        let a = InputSequence::explicit(0, vec![1.0, 2.0, 1.0, 2.0], 2).unwrap();
        let b = InputSequence::explicit(0, vec![4.0, 6.0, 4.0, 6.0], 2).unwrap();
        assert_eq!(d_unif(&a, &a).unwrap(), 0.0);
        assert!((d_unif(&a, &b).unwrap() - 5.0).abs() < 1e-15);
        assert!(d_unif(&a, &b.shift(1)).is_err());
    }

    #[test]
    fn d_unif_metric_axioms() {
        let w = Window::new(0, 64);
        for t in 0..100u64 {
            let a = gen_uniform_scaled(1.0, w, 3 * t).unwrap();
            let b = gen_uniform_scaled(1.0, w, 3 * t + 1).unwrap();
            let c = gen_uniform_scaled(1.0, w, 3 * t + 2).unwrap();
            let ab = d_unif(&a, &b).unwrap();
            assert_eq!(ab, d_unif(&b, &a).unwrap());
            assert!(ab > 0.0);
            assert!(d_unif(&a, &c).unwrap() <= ab + d_unif(&b, &c).unwrap() + 1e-15);
        }
    }

    #[test]
    fn two_symbol_extremes_and_frequency() {
        let (u1, u2) = ([0.25, 0.15], [-0.25, -0.15]);
        let w = Window::new(1, 10_000);
        let all1 = gen_two_symbol(&u1, &u2, 1.0, w, 3).unwrap();
        assert!(all1.values().chunks(2).all(|r| r == u1));
        let all2 = gen_two_symbol(&u1, &u2, 0.0, w, 3).unwrap();
        assert!(all2.values().chunks(2).all(|r| r == u2));
        let half = gen_two_symbol(&u1, &u2, 0.5, w, 0).unwrap();
        let freq = half.values().chunks(2).filter(|r| *r == u1).count() as f64 / 1e4;
        assert!((0.48..=0.52).contains(&freq), "frequency {freq}");
        assert!(gen_two_symbol(&u1, &u2, 1.5, w, 0).is_err());
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = GeneratorSpec {
            kind: GeneratorKind::TwoSymbol { u1: vec![1.0], u2: vec![-1.0], p: 0.3 },
            window: Window::new(-20, 100),
            seed: 42,
        };
        assert_eq!(spec.generate().unwrap(), spec.generate().unwrap());
        let text = serde_json::to_string(&spec).unwrap();
        let back: GeneratorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn uniform_scaled_properties() {
        let w = Window::new(0, 100_000);
        let zero = gen_uniform_scaled(0.0, w, 1).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
        let u = gen_uniform_scaled(0.05, w, 0).unwrap();
        assert!(u.values().iter().all(|v| v.abs() <= 0.05));
        let mean = u.values().iter().sum::<f64>() / 1e5;
        // sd of the mean: 0.05 / sqrt(3 * 1e5)
        assert!(mean.abs() <= 3.0 * 0.05 / (3.0e5f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn context_task_properties() {
        let task = gen_context_task(Window::new(1, 15_000), 0.01, 0).unwrap();
        let on = task.pulses.values().chunks(2).filter(|r| r[0] == 1.0).count();
        assert!((113..=187).contains(&on), "pulse count {on}");
        assert!(task.drive.values().iter().all(|v| (0.0..=1.0).contains(v)));
        for c in 0..2 {
            let max = task.drive.values().chunks(2).map(|r| r[c]).fold(0.0, f64::max);
            assert_eq!(max, 1.0);
        }
        // z1 only changes on pulse steps.
        let t = task.targets.values();
        let p = task.pulses.values();
        for i in 1..task.targets.len() {
            if t[2 * i] != t[2 * i - 2] {
                assert!(p[2 * i] == 1.0 || p[2 * i + 1] == 1.0);
            }
            let z2 = if t[2 * i] > 0.0 { task.drive.values()[2 * i] } else { task.drive.values()[2 * i + 1] };
            assert_eq!(t[2 * i + 1], z2);
        }
        // Collision: on wins.
        for i in 0..task.pulses.len() {
            if p[2 * i] == 1.0 {
                assert_eq!(t[2 * i], 1.0);
            }
        }
    }

    #[test]
    fn context_without_pulses_keeps_context() {
        let task = gen_context_task(Window::new(1, 300), 1e-9, 7).unwrap();
        assert!(task.pulse_times().is_empty());
        assert!(task.targets.values().chunks(2).all(|r| r[0] == -1.0));
        let quiet = task.network_input_without_pulses();
        assert!(quiet.values().chunks(4).all(|r| r[2] == 0.0 && r[3] == 0.0));
    }

    #[test]
    fn filter_truncation() {
        let g = context_filter();
        assert_eq!(g.len(), 691);
        assert!(*g.last().unwrap() >= 1e-6);
        assert!((-(691.0f64) / 50.0).exp() < 1e-6);
    }

    #[test]
    fn csv_round_trip() {
        let u = gen_two_symbol(&[0.25, 0.15], &[-0.25, -0.15], 0.5, Window::new(-3, 20), 9).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let back = InputSequence::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), u.values());
        assert_eq!(back.window(), u.window());
        assert!(String::from_utf8(buf).unwrap().starts_with("k,u_1,u_2\n-3,"));
    }

    #[test]
    fn values_outside_declared_box_rejected() {
        let r = InputSequence::with_bounds(
            0,
            vec![0.5, 2.0],
            1,
            InputBox { lo: vec![0.0], hi: vec![1.0] },
            Provenance::Explicit,
        );
        assert!(r.is_err());
    }
}
