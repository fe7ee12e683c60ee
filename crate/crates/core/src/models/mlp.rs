//! One-hidden-layer perceptron regressor trained on mean squared error.
//!
//! Parameters live in one flat vector `[w1 | b1 | w2 | b2]` where `w1` is laid
//! out input-major (`w1[k * hidden + j]` connects input `k` to hidden unit `j`)
//! so the inner loops run contiguously over hidden units.

use rand::Rng;
use serde::{Deserialize, Serialize};

use wide::{f64x4, CmpGt};

use super::fastmath;
use super::lbfgs::{self, LbfgsOptions, Termination};
use super::params::{Activation, LearningRate, MlpParams, Solver};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

pub const ADAM_LEARNING_RATE: f64 = 1e-3;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const ADAM_MAX_ITER: usize = 5000;
pub const ADAM_TOL: f64 = 1e-6;
/// Consecutive non-improving iterations before a constant/invscaling run stops.
pub const ADAM_NO_CHANGE: usize = 10;
/// Consecutive non-improving iterations before the adaptive schedule divides the rate.
pub const ADAPTIVE_PATIENCE: usize = 2;
pub const ADAPTIVE_DIVISOR: f64 = 5.0;
pub const ADAPTIVE_MIN_RATE: f64 = 1e-6;
pub const LBFGS_MAX_ITER: usize = 1000;
pub const LBFGS_MEMORY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriteria {
    pub max_iter: usize,
    pub tol: f64,
}

impl StopCriteria {
    pub fn default_for(solver: Solver) -> Self {
        match solver {
            Solver::Adam => Self { max_iter: ADAM_MAX_ITER, tol: ADAM_TOL },
            Solver::Lbfgs => Self { max_iter: LBFGS_MAX_ITER, tol: ADAM_TOL },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub activation: Activation,
    pub n_inputs: usize,
    pub hidden: usize,
    params: Vec<f64>,
    /// Training loss (MSE) per iteration, starting at the initial weights.
    pub loss_log: Vec<f64>,
}

const LANES: usize = 4;

/// Scratch buffers for the blocked kernels. Hidden units are processed in
/// blocks of `LANES`; the weights are copied into zero-padded blocks so every
/// block is full. Padded units carry zero output weight and do not affect the
/// network.
#[derive(Default)]
struct Workspace {
    blocks: usize,
    w1: Vec<f64x4>,
    b1: Vec<f64x4>,
    w2: Vec<f64x4>,
    a: Vec<f64x4>,
    acc: Vec<f64x4>,
    out: Vec<f64>,
    delta: Vec<f64>,
    gw1: Vec<f64x4>,
}

fn pack(src: &[f64], dst: &mut Vec<f64x4>, blocks: usize) {
    dst.clear();
    dst.extend((0..blocks).map(|b| {
        let mut v = [0.0; LANES];
        for (l, s) in v.iter_mut().zip(src.iter().skip(b * LANES)) {
            *l = *s;
        }
        f64x4::from(v)
    }));
}

impl Workspace {
    fn load(&mut self, p: &[f64], n_inputs: usize, hidden: usize, rows: usize) {
        let nb = hidden.div_ceil(LANES);
        self.blocks = nb;
        self.w1.clear();
        let mut tmp = Vec::with_capacity(nb);
        for k in 0..n_inputs {
            pack(&p[k * hidden..(k + 1) * hidden], &mut tmp, nb);
            self.w1.extend_from_slice(&tmp);
        }
        let b1 = n_inputs * hidden;
        pack(&p[b1..b1 + hidden], &mut self.b1, nb);
        pack(&p[b1 + hidden..b1 + 2 * hidden], &mut self.w2, nb);
        self.a.resize(rows * nb, f64x4::ZERO);
        self.acc.resize(rows, f64x4::ZERO);
        self.out.resize(rows, 0.0);
        self.delta.resize(rows, 0.0);
        self.gw1.resize(n_inputs, f64x4::ZERO);
    }
}

/// An activation and its derivative written in terms of its output.
trait Unit {
    fn act(z: f64x4) -> f64x4;
    fn deriv(a: f64x4) -> f64x4;
}

struct IdentityUnit;
struct ReluUnit;
struct TanhUnit;
struct LogisticUnit;

impl Unit for IdentityUnit {
    #[inline(always)]
    fn act(z: f64x4) -> f64x4 {
        z
    }
    #[inline(always)]
    fn deriv(_: f64x4) -> f64x4 {
        f64x4::ONE
    }
}

impl Unit for ReluUnit {
    #[inline(always)]
    fn act(z: f64x4) -> f64x4 {
        z.max(f64x4::ZERO)
    }
    #[inline(always)]
    fn deriv(a: f64x4) -> f64x4 {
        a.cmp_gt(f64x4::ZERO).blend(f64x4::ONE, f64x4::ZERO)
    }
}

impl Unit for TanhUnit {
    #[inline(always)]
    fn act(z: f64x4) -> f64x4 {
        fastmath::tanh4(z)
    }
    #[inline(always)]
    fn deriv(a: f64x4) -> f64x4 {
        f64x4::ONE - a * a
    }
}

impl Unit for LogisticUnit {
    #[inline(always)]
    fn act(z: f64x4) -> f64x4 {
        fastmath::logistic4(z)
    }
    #[inline(always)]
    fn deriv(a: f64x4) -> f64x4 {
        a * (f64x4::ONE - a)
    }
}

/// Hidden activations into `ws.a` and outputs into `ws.out` for every row.
/// `NI` is the input count (0 selects the runtime-sized path).
fn forward_rows<U: Unit, const NI: usize>(x: &Matrix, b2: f64, ws: &mut Workspace) {
    let (nb, ni) = (ws.blocks, x.cols());
    ws.acc.iter_mut().for_each(|v| *v = f64x4::ZERO);
    for blk in 0..nb {
        let b1 = ws.b1[blk];
        let w2 = ws.w2[blk];
        let mut w = [f64x4::ZERO; NI];
        if NI > 0 {
            for (k, wk) in w.iter_mut().enumerate() {
                *wk = ws.w1[k * nb + blk];
            }
        }
        for (i, row) in x.iter_rows().enumerate() {
            let mut z = b1;
            if NI > 0 {
                for k in 0..NI {
                    z = w[k].mul_add(f64x4::splat(row[k]), z);
                }
            } else {
                for k in 0..ni {
                    z = ws.w1[k * nb + blk].mul_add(f64x4::splat(row[k]), z);
                }
            }
            let a = U::act(z);
            ws.a[i * nb + blk] = a;
            ws.acc[i] = a.mul_add(w2, ws.acc[i]);
        }
    }
    for (o, acc) in ws.out.iter_mut().zip(&ws.acc) {
        *o = b2 + acc.reduce_add();
    }
}

/// Writes the gradient for output errors `ws.delta` into `grad` (unpadded layout).
fn backward_rows<U: Unit, const NI: usize>(x: &Matrix, hidden: usize, grad: &mut [f64], ws: &mut Workspace) {
    let (nb, ni) = (ws.blocks, x.cols());
    let b1_at = ni * hidden;
    let w2_at = b1_at + hidden;
    for blk in 0..nb {
        let w2 = ws.w2[blk];
        let mut g = [f64x4::ZERO; NI];
        ws.gw1.iter_mut().for_each(|v| *v = f64x4::ZERO);
        let mut gb1 = f64x4::ZERO;
        let mut gw2 = f64x4::ZERO;
        for (i, row) in x.iter_rows().enumerate() {
            let a = ws.a[i * nb + blk];
            let d = f64x4::splat(ws.delta[i]);
            gw2 = a.mul_add(d, gw2);
            let dz = d * w2 * U::deriv(a);
            gb1 += dz;
            if NI > 0 {
                for k in 0..NI {
                    g[k] = dz.mul_add(f64x4::splat(row[k]), g[k]);
                }
            } else {
                for (gk, &xk) in ws.gw1.iter_mut().zip(row) {
                    *gk = dz.mul_add(f64x4::splat(xk), *gk);
                }
            }
        }
        if NI > 0 {
            ws.gw1.copy_from_slice(&g);
        }
        let off = blk * LANES;
        let valid = LANES.min(hidden - off);
        for (k, gk) in ws.gw1.iter().enumerate() {
            grad[k * hidden + off..k * hidden + off + valid].copy_from_slice(&gk.as_array_ref()[..valid]);
        }
        grad[b1_at + off..b1_at + off + valid].copy_from_slice(&gb1.as_array_ref()[..valid]);
        grad[w2_at + off..w2_at + off + valid].copy_from_slice(&gw2.as_array_ref()[..valid]);
    }
    *grad.last_mut().expect("output bias") = ws.delta.iter().sum();
}

/// Mean squared error over `x`, leaving per-row `2 r / n` in `ws.delta`.
fn loss_rows<U: Unit, const NI: usize>(x: &Matrix, y: &[f64], b2: f64, ws: &mut Workspace) -> f64 {
    forward_rows::<U, NI>(x, b2, ws);
    let n = x.rows() as f64;
    let mut sse = 0.0;
    for ((d, o), t) in ws.delta.iter_mut().zip(&ws.out).zip(y) {
        let r = o - t;
        sse += r * r;
        *d = 2.0 * r / n;
    }
    sse / n
}

impl MlpModel {
    /// Network with explicit parameters.
    pub fn from_parts(
        activation: Activation,
        w1_input_major: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    ) -> Result<Self> {
        let hidden = b1.len();
        if hidden == 0 || w2.len() != hidden || w1_input_major.len() % hidden != 0 {
            return Err(Error::Shape(format!(
                "w1 {} / b1 {} / w2 {} are inconsistent",
                w1_input_major.len(),
                hidden,
                w2.len()
            )));
        }
        let n_inputs = w1_input_major.len() / hidden;
        let mut params = w1_input_major;
        params.extend(b1);
        params.extend(w2);
        params.push(b2);
        Ok(Self { activation, n_inputs, hidden, params, loss_log: Vec::new() })
    }

    /// Glorot-uniform initialization of weights and biases.
    pub fn init(activation: Activation, n_inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let b_in = (6.0 / (n_inputs + hidden) as f64).sqrt();
        let b_out = (6.0 / (hidden + 1) as f64).sqrt();
        let mut params = Vec::with_capacity(Self::param_count(n_inputs, hidden));
        for _ in 0..(n_inputs * hidden + hidden) {
            params.push(rng.random_range(-b_in..b_in));
        }
        for _ in 0..(hidden + 1) {
            params.push(rng.random_range(-b_out..b_out));
        }
        Self { activation, n_inputs, hidden, params, loss_log: Vec::new() }
    }

    pub fn param_count(n_inputs: usize, hidden: usize) -> usize {
        n_inputs * hidden + 2 * hidden + 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::Dimension { expected: self.params.len(), got: p.len() });
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    fn forward_all(&self, p: &[f64], x: &Matrix, ws: &mut Workspace) {
        fn run<U: Unit>(x: &Matrix, b2: f64, ws: &mut Workspace) {
            match x.cols() {
                6 => forward_rows::<U, 6>(x, b2, ws),
                _ => forward_rows::<U, 0>(x, b2, ws),
            }
        }
        ws.load(p, self.n_inputs, self.hidden, x.rows());
        let b2 = p[p.len() - 1];
        match self.activation {
            Activation::Identity => run::<IdentityUnit>(x, b2, ws),
            Activation::Relu => run::<ReluUnit>(x, b2, ws),
            Activation::Tanh => run::<TanhUnit>(x, b2, ws),
            Activation::Logistic => run::<LogisticUnit>(x, b2, ws),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_inputs {
            return Err(Error::Dimension { expected: self.n_inputs, got: x.len() });
        }
        let xm = Matrix::new(1, x.len(), x.to_vec())?;
        let mut ws = Workspace::default();
        self.forward_all(&self.params, &xm, &mut ws);
        Ok(ws.out[0])
    }

    fn loss_grad_at(&self, p: &[f64], x: &Matrix, y: &[f64], grad: &mut [f64], ws: &mut Workspace) -> f64 {
        fn run<U: Unit>(m: &MlpModel, p: &[f64], x: &Matrix, y: &[f64], grad: &mut [f64], ws: &mut Workspace) -> f64 {
            ws.load(p, m.n_inputs, m.hidden, x.rows());
            let b2 = p[p.len() - 1];
            if x.cols() == 6 {
                let loss = loss_rows::<U, 6>(x, y, b2, ws);
                backward_rows::<U, 6>(x, m.hidden, grad, ws);
                loss
            } else {
                let loss = loss_rows::<U, 0>(x, y, b2, ws);
                backward_rows::<U, 0>(x, m.hidden, grad, ws);
                loss
            }
        }
        match self.activation {
            Activation::Identity => run::<IdentityUnit>(self, p, x, y, grad, ws),
            Activation::Relu => run::<ReluUnit>(self, p, x, y, grad, ws),
            Activation::Tanh => run::<TanhUnit>(self, p, x, y, grad, ws),
            Activation::Logistic => run::<LogisticUnit>(self, p, x, y, grad, ws),
        }
    }

    fn check_data(&self, x: &Matrix, y: &[f64]) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if x.cols() != self.n_inputs {
            return Err(Error::Dimension { expected: self.n_inputs, got: x.cols() });
        }
        if y.len() != x.rows() {
            return Err(Error::Dimension { expected: x.rows(), got: y.len() });
        }
        Ok(())
    }

    /// Mean squared error and its gradient with respect to [`params`](Self::params).
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_data(x, y)?;
        let mut grad = vec![0.0; self.params.len()];
        let mut ws = Workspace::default();
        let loss = self.loss_grad_at(&self.params, x, y, &mut grad, &mut ws);
        Ok((loss, grad))
    }

    pub fn loss(&self, x: &Matrix, y: &[f64]) -> Result<f64> {
        Ok(self.loss_and_gradient(x, y)?.0)
    }
}

/// Whether an Adam run with the adaptive schedule would follow the same
/// trajectory as the constant-schedule run that produced `loss_log`: true when
/// the log never shows `ADAPTIVE_PATIENCE` consecutive non-improving iterations.
pub fn adaptive_matches_constant(loss_log: &[f64], stop: StopCriteria) -> bool {
    let mut best = f64::INFINITY;
    let mut no_improve = 0;
    for &loss in loss_log.iter().take(stop.max_iter) {
        if loss > best - stop.tol {
            no_improve += 1;
        } else {
            no_improve = 0;
        }
        if no_improve >= ADAPTIVE_PATIENCE {
            return false;
        }
        best = best.min(loss);
    }
    true
}

/// Trains a network on standardized features. Deterministic for a given seed.
///
/// The returned weights are those with the lowest training loss observed, so
/// the final loss never exceeds the initial one.
pub fn mlp_fit(
    x: &Matrix,
    y: &[f64],
    params: &MlpParams,
    seed: u64,
    stop: Option<StopCriteria>,
) -> Result<MlpModel> {
    if params.hidden_layer_size == 0 {
        return Err(Error::InvalidInput("hidden layer size must be positive".into()));
    }
    let stop = stop.unwrap_or_else(|| StopCriteria::default_for(params.solver));
    let mut model = MlpModel::init(params.activation, x.cols(), params.hidden_layer_size, seed);
    model.check_data(x, y)?;
    match params.solver {
        Solver::Adam => fit_adam(&mut model, x, y, params.learning_rate, stop)?,
        Solver::Lbfgs => fit_lbfgs(&mut model, x, y, stop)?,
    }
    Ok(model)
}

fn fit_adam(
    model: &mut MlpModel,
    x: &Matrix,
    y: &[f64],
    schedule: LearningRate,
    stop: StopCriteria,
) -> Result<()> {
    let np = model.params.len();
    let mut p = model.params.clone();
    let mut grad = vec![0.0; np];
    let mut m = vec![0.0; np];
    let mut v = vec![0.0; np];
    let mut ws = Workspace::default();
    let mut log = Vec::with_capacity(stop.max_iter + 1);
    let mut best_loss = f64::INFINITY;
    let mut best_p = p.clone();
    let mut rate = ADAM_LEARNING_RATE;
    let mut no_improve = 0;
    let (mut b1t, mut b2t) = (1.0, 1.0);

    for t in 1..=stop.max_iter {
        let loss = model.loss_grad_at(&p, x, y, &mut grad, &mut ws);
        log.push(loss);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingFailure { iteration: t - 1, loss_log: log });
        }
        if loss > best_loss - stop.tol {
            no_improve += 1;
        } else {
            no_improve = 0;
        }
        if loss < best_loss {
            best_loss = loss;
            best_p.copy_from_slice(&p);
        }
        match schedule {
            LearningRate::Adaptive => {
                if no_improve >= ADAPTIVE_PATIENCE {
                    rate /= ADAPTIVE_DIVISOR;
                    no_improve = 0;
                    if rate < ADAPTIVE_MIN_RATE {
                        break;
                    }
                }
            }
            LearningRate::Constant | LearningRate::Invscaling => {
                if no_improve > ADAM_NO_CHANGE {
                    break;
                }
            }
        }
        let base = match schedule {
            LearningRate::Invscaling => ADAM_LEARNING_RATE / (t as f64).sqrt(),
            LearningRate::Constant | LearningRate::Adaptive => rate,
        };
        b1t *= ADAM_BETA1;
        b2t *= ADAM_BETA2;
        let step = base * (1.0 - b2t).sqrt() / (1.0 - b1t);
        for (((pi, mi), vi), g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(&grad) {
            *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
            *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
            *pi -= step * *mi / (vi.sqrt() + ADAM_EPS);
        }
    }
    if log.len() == stop.max_iter {
        // Score the weights produced by the final update as well.
        let loss = model.loss_grad_at(&p, x, y, &mut grad, &mut ws);
        if loss.is_finite() {
            log.push(loss);
            if loss < best_loss {
                best_p.copy_from_slice(&p);
            }
        }
    }
    model.params = best_p;
    model.loss_log = log;
    Ok(())
}

fn fit_lbfgs(model: &mut MlpModel, x: &Matrix, y: &[f64], stop: StopCriteria) -> Result<()> {
    let opts = LbfgsOptions {
        memory: LBFGS_MEMORY,
        max_iter: stop.max_iter,
        ..LbfgsOptions::default()
    };
    let mut ws = Workspace::default();
    let snapshot = model.clone();
    let res = lbfgs::minimize(
        |p, g| snapshot.loss_grad_at(p, x, y, g, &mut ws),
        model.params.clone(),
        &opts,
    );
    if res.termination == Termination::NonFinite {
        return Err(Error::TrainingFailure { iteration: 0, loss_log: res.log });
    }
    model.params = res.x;
    model.loss_log = res.log;
    Ok(())
}
