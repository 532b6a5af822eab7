//! Reservoir construction, teacher-forced training with output feedback,
//! closed-loop evaluation and PCA for the context-routing task.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{orbit_from, Activation, Readout, RnnParams, State, Trajectory};
use crate::error::{Error, Result};
use crate::input::{gen_context_task, ContextTask, InputSequence, Window};
use crate::linalg::spectral_radius;
use crate::rng::{self, streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservoirConfig {
    pub n_r: usize,
    /// Probability that a recurrent weight is zeroed.
    pub sparsity: f64,
    pub spectral_radius_target: f64,
    /// Weights are drawn uniform in `[-weight_range, weight_range]`.
    pub weight_range: f64,
    pub noise_std: f64,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        ReservoirConfig {
            n_r: 500,
            sparsity: 0.95,
            spectral_radius_target: 0.9,
            weight_range: 1.0,
            noise_std: 0.05,
            ridge_lambda: 0.7,
            seed: 0,
        }
    }
}

const MAX_RESERVOIR_RETRIES: u64 = 10;

fn uniform_matrix(rows: usize, cols: usize, range: f64, seed: u64, stream: u64) -> DMatrix<f64> {
    let mut r = rng::substream(seed, stream);
    // Row-major fill so the draw order does not depend on storage layout.
    let data: Vec<f64> = (0..rows * cols).map(|_| rng::uniform(&mut r, -range, range)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Random reservoir with `alpha = 1`, a zero linear readout, and feedback
/// from the first output only.
pub fn init_reservoir(cfg: &ReservoirConfig, n_i: usize, n_o: usize) -> Result<RnnParams> {
    if cfg.n_r == 0 {
        return Err(Error::config("reservoir size must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.sparsity) {
        return Err(Error::config(format!("sparsity must lie in [0, 1), got {}", cfg.sparsity)));
    }
    if !(cfg.weight_range > 0.0 && cfg.spectral_radius_target > 0.0) {
        return Err(Error::config("weight range and spectral radius target must be positive"));
    }
    let n = cfg.n_r;
    let mut w_r = None;
    for attempt in 0..=MAX_RESERVOIR_RETRIES {
        let salt = attempt << 16;
        let mut w = uniform_matrix(n, n, cfg.weight_range, cfg.seed, streams::RESERVOIR_W_R | salt);
        let mut mask = rng::substream(cfg.seed, streams::RESERVOIR_MASK | salt);
        for i in 0..n {
            for j in 0..n {
                if mask.random::<f64>() < cfg.sparsity {
                    w[(i, j)] = 0.0;
                }
            }
        }
        let rho = spectral_radius(&w)?;
        if rho > 0.0 {
            w_r = Some(w * (cfg.spectral_radius_target / rho));
            break;
        }
        log::debug!("reservoir draw {attempt} has zero spectral radius; redrawing");
    }
    let w_r = w_r.ok_or_else(|| {
        Error::Numerical(format!("no usable recurrent matrix after {MAX_RESERVOIR_RETRIES} retries"))
    })?;
    let rho = spectral_radius(&w_r)?;
    if (rho - cfg.spectral_radius_target).abs() > 1e-9 {
        return Err(Error::Numerical(format!(
            "rescaled spectral radius {rho} misses target {}",
            cfg.spectral_radius_target
        )));
    }
    let w_in = uniform_matrix(n, n_i, cfg.weight_range, cfg.seed, streams::RESERVOIR_W_IN);
    let mut w_fb = DMatrix::zeros(n, n_o);
    if n_o > 0 {
        w_fb.set_column(0, &uniform_matrix(n, 1, cfg.weight_range, cfg.seed, streams::RESERVOIR_W_FB).column(0));
    }
    RnnParams::new(1.0, w_r, w_in, w_fb, Readout::Linear(DMatrix::zeros(n_o, n)), Activation::Tanh)
}

/// States `x[k]` for every `k` of `input`'s window, starting from zero at
/// `first - 1`. The feedback term receives the target of the previous step
/// (`initial_feedback` on the first), and Gaussian noise is added to every
/// pre-activation. Row `i` of the result is the state at `first + i`.
pub fn teacher_forced_states(
    params: &RnnParams,
    input: &InputSequence,
    targets: &InputSequence,
    initial_feedback: &[f64],
    noise_std: f64,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let d = params.dims();
    if input.dim() != d.n_i {
        return Err(Error::DimensionMismatch { what: "input sequence", expected: d.n_i, got: input.dim() });
    }
    if targets.dim() != d.n_o {
        return Err(Error::DimensionMismatch { what: "target sequence", expected: d.n_o, got: targets.dim() });
    }
    if initial_feedback.len() != d.n_o {
        return Err(Error::DimensionMismatch { what: "initial feedback", expected: d.n_o, got: initial_feedback.len() });
    }
    if targets.first() != input.first() || targets.len() != input.len() {
        return Err(Error::invalid("input and targets must cover the same window"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::invalid(format!("noise level must be non-negative, got {noise_std}")));
    }
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut r = rng::substream(seed, streams::TRAINING_NOISE);
    let (alpha, act) = (params.alpha(), params.activation());
    let mut out = DMatrix::zeros(input.len(), d.n_r);
    let mut x = DVector::zeros(d.n_r);
    let mut fb = DVector::from_column_slice(initial_feedback);
    for (i, k) in (input.first()..=input.last()).enumerate() {
        let u = DVector::from_column_slice(input.value_unchecked(k));
        let mut pre = params.w_r() * &x;
        pre += params.w_in() * u;
        pre += params.w_fb() * &fb;
        if noise_std > 0.0 {
            pre.iter_mut().for_each(|p| *p += noise.sample(&mut r));
        }
        x = x.zip_map(&pre, |xi, p| (1.0 - alpha) * xi + alpha * act.eval(p));
        out.set_row(i, &x.transpose());
        fb.copy_from_slice(targets.value_unchecked(k));
    }
    Ok(out)
}

/// Solves `(S^T S + lambda I) W = S^T Y` and returns `W^T` (outputs by
/// states).
pub fn ridge_readout(states: &DMatrix<f64>, targets: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if states.nrows() == 0 {
        return Err(Error::invalid("ridge regression needs at least one sample"));
    }
    if targets.nrows() != states.nrows() {
        return Err(Error::DimensionMismatch { what: "target rows", expected: states.nrows(), got: targets.nrows() });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("ridge parameter must be non-negative, got {lambda}")));
    }
    if states.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge regression data"));
    }
    let n = states.ncols();
    let a = states.tr_mul(states) + DMatrix::identity(n, n) * lambda;
    let b = states.tr_mul(targets);
    let w = match a.clone().cholesky() {
        Some(c) => c.solve(&b),
        None => a
            .clone()
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical("normal equations are singular".to_string()))?,
    };
    let res = normal_equation_residual(states, targets, lambda, &w.transpose());
    if res > 1e-8 {
        return Err(Error::Numerical(format!("normal-equation residual {res:e} above 1e-8")));
    }
    Ok(w.transpose())
}

/// `|(S^T S + lambda I) W - S^T Y| / |S^T Y|` in the Frobenius norm, for a
/// readout `w_o = W^T`.
pub fn normal_equation_residual(states: &DMatrix<f64>, targets: &DMatrix<f64>, lambda: f64, w_o: &DMatrix<f64>) -> f64 {
    let w = w_o.transpose();
    let b = states.tr_mul(targets);
    let lhs = states.tr_mul(&(states * &w)) + &w * lambda;
    let scale = b.norm();
    if scale == 0.0 {
        lhs.norm()
    } else {
        (lhs - b).norm() / scale
    }
}

/// Root-mean-square error over the target standard deviation, per column.
pub fn nrmse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Vec<f64> {
    (0..target.ncols())
        .map(|c| {
            let t = target.column(c);
            let mean = t.mean();
            let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t.len() as f64;
            let mse = (pred.column(c) - t).norm_squared() / t.len() as f64;
            (mse / var).sqrt()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory,
    /// `psi(x[k])` for every state after the initial one, one row per step.
    pub outputs: DMatrix<f64>,
}

impl ClosedLoopRun {
    /// Trajectory states after the initial one, one row per step.
    pub fn state_matrix(&self) -> DMatrix<f64> {
        let s = &self.trajectory.states[1..];
        let n = s.first().map_or(0, State::dim);
        DMatrix::from_fn(s.len(), n, |i, j| s[i].0[j])
    }
}

/// Runs the network with its own output fed back over `steps` steps
/// following `start`.
pub fn closed_loop_eval(
    params: &RnnParams,
    input: &InputSequence,
    start: i64,
    x0: &State,
    steps: usize,
) -> Result<ClosedLoopRun> {
    let trajectory = orbit_from(params, input, start, x0, steps)?;
    let n_o = params.dims().n_o;
    let mut outputs = DMatrix::zeros(steps, n_o);
    for (i, s) in trajectory.states[1..].iter().enumerate() {
        outputs.set_row(i, &params.output(&s.0).transpose());
    }
    Ok(ClosedLoopRun { trajectory, outputs })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// Centered data projected on the leading `k` components.
    pub projections: DMatrix<f64>,
    /// Leading components, one per column.
    pub components: DMatrix<f64>,
    pub explained: Vec<f64>,
    pub cumulative_variance: f64,
}

/// Principal components of the rows of `data`.
pub fn pca_project(data: &DMatrix<f64>, k: usize) -> Result<Pca> {
    let (t, n) = data.shape();
    if t < 2 {
        return Err(Error::invalid("PCA needs at least two samples"));
    }
    let mean = data.row_mean();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.tr_mul(&centered) / (t - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = vals.iter().sum();
    let rank = vals.iter().filter(|&&v| v > 1e-12 * vals[0].max(f64::MIN_POSITIVE)).count();
    if k == 0 || k > rank {
        return Err(Error::invalid(format!("requested {k} components but the data has rank {rank}")));
    }
    let components = DMatrix::from_fn(n, k, |r, c| eig.eigenvectors[(r, order[c])]);
    let explained: Vec<f64> = vals[..k].iter().map(|v| v / total).collect();
    Ok(Pca {
        projections: &centered * &components,
        components,
        cumulative_variance: explained.iter().sum(),
        explained,
    })
}

/// Fraction of steps where `sign(pred)` equals `target`, skipping the
/// `guard` steps starting at each pulse index.
pub fn context_accuracy(pred: &[f64], target: &[f64], pulses: &[usize], guard: usize) -> f64 {
    let mut keep = vec![true; pred.len()];
    for &p in pulses {
        for k in keep.iter_mut().skip(p).take(guard) {
            *k = false;
        }
    }
    let (mut hit, mut total) = (0usize, 0usize);
    for ((p, t), k) in pred.iter().zip(target).zip(&keep) {
        if *k {
            total += 1;
            if p.signum() == t.signum() {
                hit += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub washout: usize,
    pub train_len: usize,
    pub test_len: usize,
    pub ridge_lambda: f64,
    pub noise_std: f64,
    pub reservoir: ReservoirConfig,
    pub input_seed: u64,
    /// Choices the task description leaves open.
    pub assumptions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: RnnParams,
    pub train_error: Vec<f64>,
    pub test_error: Vec<f64>,
    pub metadata: TrainingMetadata,
}

impl TrainedModel {
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextTaskConfig {
    pub reservoir: ReservoirConfig,
    pub train_len: usize,
    pub test_len: usize,
    pub washout: usize,
    pub pulse_prob: f64,
    pub input_seed: u64,
    /// Steps after each pulse excluded from the accuracy.
    pub guard: usize,
}

impl Default for ContextTaskConfig {
    fn default() -> Self {
        ContextTaskConfig {
            reservoir: ReservoirConfig::default(),
            train_len: 10_000,
            test_len: 5_000,
            washout: 200,
            pulse_prob: 0.01,
            input_seed: 0,
            guard: 20,
        }
    }
}

impl ContextTaskConfig {
    /// Reduced size for quick runs.
    pub fn small() -> Self {
        ContextTaskConfig {
            reservoir: ReservoirConfig { n_r: 200, ..Default::default() },
            train_len: 6_000,
            test_len: 3_000,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct ContextTaskOutcome {
    pub model: TrainedModel,
    pub task: ContextTask,
    pub closed_loop: ClosedLoopRun,
    pub accuracy: f64,
    pub pca: Pca,
}

fn rows(seq: &InputSequence, from: i64, to: i64) -> DMatrix<f64> {
    let len = (to - from + 1) as usize;
    DMatrix::from_fn(len, seq.dim(), |i, j| seq.value_unchecked(from + i as i64)[j])
}

/// Generates the task, trains on the first `train_len` steps, and evaluates
/// in closed loop on the following `test_len`.
pub fn train_context_task(cfg: &ContextTaskConfig) -> Result<ContextTaskOutcome> {
    if cfg.washout >= cfg.train_len || cfg.test_len < 2 {
        return Err(Error::config("washout must be shorter than training, and testing needs two steps"));
    }
    let task = gen_context_task(Window::new(1, cfg.train_len + cfg.test_len), cfg.pulse_prob, cfg.input_seed)?;
    let input = task.network_input();
    let base = init_reservoir(&cfg.reservoir, input.dim(), task.targets.dim())?;
    let train_end = cfg.train_len as i64;
    let train_in = InputSequence::explicit(1, input.values()[..cfg.train_len * input.dim()].to_vec(), input.dim())?;
    let train_tg = InputSequence::explicit(
        1,
        task.targets.values()[..cfg.train_len * task.targets.dim()].to_vec(),
        task.targets.dim(),
    )?;
    // Context starts "off"; the second output does not feed back.
    let states = teacher_forced_states(&base, &train_in, &train_tg, &[-1.0, 0.0], cfg.reservoir.noise_std, cfg.reservoir.seed)?;
    let fit_states = states.rows(cfg.washout, cfg.train_len - cfg.washout).into_owned();
    let fit_targets = rows(&task.targets, 1 + cfg.washout as i64, train_end);
    let w_o = ridge_readout(&fit_states, &fit_targets, cfg.reservoir.ridge_lambda)?;
    let params = base.with_readout(w_o.clone())?;
    let train_error = nrmse(&(&fit_states * w_o.transpose()), &fit_targets);

    let x_end = State(states.row(cfg.train_len - 1).transpose());
    let closed_loop = closed_loop_eval(&params, &input, train_end, &x_end, cfg.test_len)?;
    let test_targets = rows(&task.targets, train_end + 1, train_end + cfg.test_len as i64);
    let test_error = nrmse(&closed_loop.outputs, &test_targets);
    let pulses: Vec<usize> = task
        .pulse_times()
        .into_iter()
        .filter(|&k| k > train_end)
        .map(|k| (k - train_end - 1) as usize)
        .collect();
    let z1: Vec<f64> = closed_loop.outputs.column(0).iter().copied().collect();
    let t1: Vec<f64> = test_targets.column(0).iter().copied().collect();
    let accuracy = context_accuracy(&z1, &t1, &pulses, cfg.guard);
    let pca = pca_project(&closed_loop.state_matrix(), 2)?;

    let metadata = TrainingMetadata {
        washout: cfg.washout,
        train_len: cfg.train_len,
        test_len: cfg.test_len,
        ridge_lambda: cfg.reservoir.ridge_lambda,
        noise_std: cfg.reservoir.noise_std,
        reservoir: cfg.reservoir.clone(),
        input_seed: cfg.input_seed,
        assumptions: vec![
            "teacher forcing: feedback receives the previous step's target z1".to_string(),
            "pulses u3, u4 enter as two extra columns of the uniform input matrix".to_string(),
            format!("first {} training states discarded before regression", cfg.washout),
            "context starts off (z1 = -1)".to_string(),
        ],
    };
    Ok(ContextTaskOutcome {
        model: TrainedModel { params, train_error, test_error, metadata },
        task,
        closed_loop,
        accuracy,
        pca,
    })
}
