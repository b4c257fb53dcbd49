//! Losses, analytic gradients and the optimizer loop for the FHRR encoders.
//!
//! With `δ = θ_{s'} − θ_s − θ_a` per dimension, the binding residual
//! `|e^{iθ_{s'}} − e^{i(θ_s + θ_a)}|²` equals `2 − 2cos δ`. Every loss here is
//! a sum of such cosine terms, so gradients are closed-form sines.

use std::collections::BTreeSet;
use std::io::Write;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{new_encoders, ActionEncoder, StateEncoder};
use crate::error::{check_dim, HoloError, Result};
use crate::gridworld::{inverse_pairs, Action, DatasetSplit, GridSpec, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_bind: f64,
    pub w_inv: f64,
    pub w_ortho: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_bind: 2.0,
            w_inv: 0.5,
            w_ortho: 0.05,
        }
    }
}

impl LossWeights {
    pub fn new(w_bind: f64, w_inv: f64, w_ortho: f64) -> Result<Self> {
        let w = Self { w_bind, w_inv, w_ortho };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("w_bind", self.w_bind), ("w_inv", self.w_inv), ("w_ortho", self.w_ortho)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(HoloError::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 512,
            epochs: 500,
            learning_rate: 0.007,
            grad_clip: 1.0,
            batch_size: None,
            seed: 0,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(HoloError::InvalidDimension("dim must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(HoloError::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(HoloError::InvalidArgument("learning_rate must be > 0".into()));
        }
        if !(self.grad_clip > 0.0) {
            return Err(HoloError::InvalidArgument("grad_clip must be > 0".into()));
        }
        if self.batch_size == Some(0) {
            return Err(HoloError::InvalidArgument("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Gradients laid out like the encoders' phase tables (column-major).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub theta_s: Vec<f64>,
    pub theta_a: Vec<f64>,
}

impl Gradients {
    pub fn zeros(states: &StateEncoder, actions: &ActionEncoder) -> Self {
        Self {
            theta_s: vec![0.0; states.theta().as_slice().len()],
            theta_a: vec![0.0; actions.theta().as_slice().len()],
        }
    }

    pub fn norm(&self) -> f64 {
        self.theta_s
            .iter()
            .chain(&self.theta_a)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Mean over the batch of `‖φ_S(s') − φ_S(s) ⊙ φ_A(a)‖²`.
pub fn binding_loss(
    states: &StateEncoder,
    actions: &ActionEncoder,
    batch: &[Transition],
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(HoloError::Empty("binding-loss batch"));
    }
    check_dim(states.dim(), actions.dim())?;
    for t in batch {
        for s in [t.s, t.s_next] {
            if s >= states.len() {
                return Err(HoloError::IndexOutOfRange { what: "state", index: s, size: states.len() });
            }
        }
        if t.a.index() >= actions.len() {
            return Err(HoloError::IndexOutOfRange { what: "action", index: t.a.index(), size: actions.len() });
        }
    }
    let d = states.dim();
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros(states, actions);
    let mut loss = 0.0;
    let mut g = vec![0.0; d];
    for t in batch {
        let cs = states.theta().column(t.s);
        let cn = states.theta().column(t.s_next);
        let ca = actions.theta().column(t.a.index());
        let mut sample = 0.0;
        for k in 0..d {
            let delta = cn[k] - cs[k] - ca[k];
            sample += 2.0 - 2.0 * delta.cos();
            g[k] = 2.0 * delta.sin() * scale;
        }
        loss += sample;
        axpy(&mut grads.theta_s[t.s_next * d..(t.s_next + 1) * d], 1.0, &g);
        axpy(&mut grads.theta_s[t.s * d..(t.s + 1) * d], -1.0, &g);
        axpy(&mut grads.theta_a[t.a.index() * d..(t.a.index() + 1) * d], -1.0, &g);
    }
    Ok((loss * scale, grads))
}

/// Sum over pairs of `‖φ_A(a) ⊙ φ_A(a⁻¹) − 1‖²`; the gradient is w.r.t. `Θ_a`.
pub fn invertibility_loss(actions: &ActionEncoder, pairs: &[(Action, Action)]) -> Result<(f64, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(HoloError::Empty("invertibility pairs"));
    }
    let d = actions.dim();
    let mut grad = vec![0.0; actions.theta().as_slice().len()];
    let mut loss = 0.0;
    for &(a, b) in pairs {
        for x in [a, b] {
            if x.index() >= actions.len() {
                return Err(HoloError::IndexOutOfRange { what: "action", index: x.index(), size: actions.len() });
            }
        }
        let ca = actions.theta().column(a.index());
        let cb = actions.theta().column(b.index());
        for k in 0..d {
            let sum = ca[k] + cb[k];
            loss += 2.0 - 2.0 * sum.cos();
            let g = 2.0 * sum.sin();
            grad[a.index() * d + k] += g;
            grad[b.index() * d + k] += g;
        }
    }
    Ok((loss, grad))
}

/// Sum over unordered pairs of distinct states of `similarity(φ_S(s_i), φ_S(s_j))²`;
/// the gradient is w.r.t. `Θ_s`. Duplicate indices are ignored.
pub fn orthogonality_loss(states: &StateEncoder, indices: &[usize]) -> Result<(f64, Vec<f64>)> {
    let distinct: Vec<usize> = indices.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if distinct.len() < 2 {
        return Err(HoloError::InvalidArgument(
            "orthogonality loss needs at least two distinct states".into(),
        ));
    }
    if let Some(&bad) = distinct.iter().find(|&&s| s >= states.len()) {
        return Err(HoloError::IndexOutOfRange { what: "state", index: bad, size: states.len() });
    }
    let d = states.dim();
    let inv_d = 1.0 / d as f64;
    let n = distinct.len();
    let mut cos = Array2::zeros((n, d));
    let mut sin = Array2::zeros((n, d));
    for (i, &s) in distinct.iter().enumerate() {
        for (k, &p) in states.theta().column(s).iter().enumerate() {
            cos[[i, k]] = p.cos();
            sin[[i, k]] = p.sin();
        }
    }
    let mut sim = (cos.dot(&cos.t()) + sin.dot(&sin.t())) * inv_d;
    sim.diag_mut().fill(0.0);
    let loss = sim.iter().map(|v| v * v).sum::<f64>() / 2.0;
    // ∂L/∂θ_{i,k} = (2/D) Σ_j sim_ij (c_ik s_jk − s_ik c_jk)
    let wc = sim.dot(&cos);
    let ws = sim.dot(&sin);
    let mut grad = vec![0.0; states.theta().as_slice().len()];
    for (i, &s) in distinct.iter().enumerate() {
        let g = &mut grad[s * d..(s + 1) * d];
        for k in 0..d {
            g[k] = 2.0 * inv_d * (cos[[i, k]] * ws[[i, k]] - sin[[i, k]] * wc[[i, k]]);
        }
    }
    Ok((loss, grad))
}

/// Unweighted component losses plus the weighted total and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub bind: f64,
    pub inv: f64,
    pub ortho: f64,
    pub total: f64,
    pub grads: Gradients,
}

/// Distinct states touched by a batch, as either source or target.
pub fn batch_states(batch: &[Transition]) -> Vec<usize> {
    batch
        .iter()
        .flat_map(|t| [t.s, t.s_next])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn total_loss(
    states: &StateEncoder,
    actions: &ActionEncoder,
    batch: &[Transition],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let (bind, mut grads) = binding_loss(states, actions, batch)?;
    let (inv, g_inv) = invertibility_loss(actions, &inverse_pairs())?;
    let (ortho, g_ortho) = orthogonality_loss(states, &batch_states(batch))?;
    grads.theta_s.iter_mut().for_each(|g| *g *= weights.w_bind);
    grads.theta_a.iter_mut().for_each(|g| *g *= weights.w_bind);
    axpy(&mut grads.theta_a, weights.w_inv, &g_inv);
    axpy(&mut grads.theta_s, weights.w_ortho, &g_ortho);
    Ok(LossBreakdown {
        bind,
        inv,
        ortho,
        total: weights.w_bind * bind + weights.w_inv * inv + weights.w_ortho * ortho,
        grads,
    })
}

/// Adam moments (or nothing, for SGD) shaped like a list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, shapes: &[usize]) -> Self {
        let zeros = || shapes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Self {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn adam(shapes: &[usize]) -> Self {
        Self::new(OptimizerKind::Adam, shapes)
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }
}

/// Scales `grads` in place so that their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

/// Global-norm clipping followed by one Adam (or SGD) update. `grads` is
/// clipped in place. Returns the pre-clip gradient norm.
pub fn adam_step(
    params: &mut [&mut [f64]],
    grads: &mut [&mut [f64]],
    opt: &mut OptimizerState,
    lr: f64,
    grad_clip: f64,
) -> Result<f64> {
    let shapes = opt.shapes();
    check_dim(shapes.len(), params.len())?;
    check_dim(shapes.len(), grads.len())?;
    for ((n, p), g) in shapes.iter().zip(params.iter()).zip(grads.iter()) {
        check_dim(*n, p.len())?;
        check_dim(*n, g.len())?;
    }
    let norm = clip_global_norm(grads, grad_clip);
    opt.step += 1;
    match opt.kind {
        OptimizerKind::Sgd => {
            for (p, g) in params.iter_mut().zip(grads.iter()) {
                axpy(p, -lr, g);
            }
        }
        OptimizerKind::Adam => {
            let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.eps);
            let bc1 = 1.0 - b1.powi(opt.step as i32);
            let bc2 = 1.0 - b2.powi(opt.step as i32);
            for (((p, g), m), v) in params.iter_mut().zip(grads.iter()).zip(&mut opt.m).zip(&mut opt.v) {
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    let mh = m[i] / bc1;
                    let vh = v[i] / bc2;
                    p[i] -= lr * mh / (vh.sqrt() + eps);
                }
            }
        }
    }
    Ok(norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub bind: f64,
    pub inv: f64,
    pub ortho: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epochs: Vec<EpochLoss>,
}

impl LossReport {
    pub fn totals(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.total).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,bind,inv,ortho,total")?;
        for e in &self.epochs {
            writeln!(w, "{},{},{},{},{}", e.epoch, e.bind, e.inv, e.ortho, e.total)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEncoders {
    pub states: StateEncoder,
    pub actions: ActionEncoder,
    pub report: LossReport,
}

/// Trains fresh encoders on `data.train`. Each epoch's report holds the
/// loss measured before that epoch's updates (averaged over minibatches).
pub fn train(
    data: &DatasetSplit,
    grid: &GridSpec,
    config: &TrainConfig,
    weights: &LossWeights,
) -> Result<TrainedEncoders> {
    config.validate()?;
    weights.validate()?;
    if data.train.is_empty() {
        return Err(HoloError::Empty("training set"));
    }
    let (mut states, mut actions) = new_encoders(config.dim, grid.num_states(), Action::COUNT, config.seed)?;
    let mut opt = OptimizerState::new(
        config.optimizer,
        &[states.theta().as_slice().len(), actions.theta().as_slice().len()],
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546_464c_4521);
    let mut order = data.train.clone();
    let batch_size = config.batch_size.unwrap_or(order.len()).min(order.len());
    let mut report = LossReport::default();

    for epoch in 0..config.epochs {
        if batch_size < order.len() {
            order.shuffle(&mut shuffle_rng);
        }
        let mut acc = EpochLoss { epoch, bind: 0.0, inv: 0.0, ortho: 0.0, total: 0.0 };
        let mut n_batches = 0usize;
        for batch in order.chunks(batch_size) {
            let mut lb = total_loss(&states, &actions, batch, weights)?;
            acc.bind += lb.bind;
            acc.inv += lb.inv;
            acc.ortho += lb.ortho;
            acc.total += lb.total;
            n_batches += 1;
            adam_step(
                &mut [states.theta_mut().as_mut_slice(), actions.theta_mut().as_mut_slice()],
                &mut [&mut lb.grads.theta_s, &mut lb.grads.theta_a],
                &mut opt,
                config.learning_rate,
                config.grad_clip,
            )?;
        }
        let k = n_batches as f64;
        report.epochs.push(EpochLoss {
            epoch,
            bind: acc.bind / k,
            inv: acc.inv / k,
            ortho: acc.ortho / k,
            total: acc.total / k,
        });
    }
    Ok(TrainedEncoders { states, actions, report })
}

/// Worst relative error between analytic gradients of [`total_loss`] and
/// central finite differences on `n_probes` randomly chosen parameters.
/// Differences below `1e-8` in absolute value count as exact.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    states: &StateEncoder,
    actions: &ActionEncoder,
    batch: &[Transition],
    weights: &LossWeights,
    n_probes: usize,
    h: f64,
    seed: u64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(HoloError::InvalidArgument(format!("step h must be > 0, got {h}")));
    }
    let analytic = total_loss(states, actions, batch, weights)?.grads;
    let ns = analytic.theta_s.len();
    let na = analytic.theta_a.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_probes {
        let idx = rng.random_range(0..ns + na);
        let eval = |delta: f64| -> Result<f64> {
            let (mut s, mut a) = (states.clone(), actions.clone());
            if idx < ns {
                s.theta_mut().as_mut_slice()[idx] += delta;
            } else {
                a.theta_mut().as_mut_slice()[idx - ns] += delta;
            }
            Ok(total_loss(&s, &a, batch, weights)?.total)
        };
        let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
        let exact = if idx < ns { analytic.theta_s[idx] } else { analytic.theta_a[idx - ns] };
        worst = worst.max(relative_error(exact, numeric));
    }
    Ok(worst)
}

pub fn relative_error(exact: f64, approx: f64) -> f64 {
    let diff = (exact - approx).abs();
    if diff <= 1e-8 {
        0.0
    } else {
        diff / exact.abs().max(approx.abs())
    }
}
