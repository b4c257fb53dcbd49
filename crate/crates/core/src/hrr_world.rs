//! HRR variant of the world model: real state/action vectors, transitions by
//! circular convolution.
//!
//! Parameters are sampled standard normal and scaled by `1/√D` when encoded.
//! The losses mirror the FHRR ones: binding residual, invertibility against
//! the convolution identity (a unit impulse) and squared pairwise dot
//! products. Gradients through convolution are correlations:
//! `∂‖x ⊛ y − t‖²/∂x = 2·(y ⋆ r)` with `r = x ⊛ y − t`.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::encoder::TIE_TOLERANCE;
use crate::error::{check_dim, HoloError, Result};
use crate::gridworld::{inverse_pairs, Action, DatasetSplit, GridSpec, Transition};
use crate::hypervector::hrr::{cosine, Convolver};
use crate::training::{adam_step, EpochLoss, LossReport, LossWeights, OptimizerState, TrainConfig};

#[derive(Debug, Clone)]
pub struct HrrModel {
    dim: usize,
    /// Raw parameters, one contiguous row of length `D` per state.
    states: Vec<f64>,
    actions: Vec<f64>,
    n_states: usize,
    n_actions: usize,
    conv: Convolver,
}

impl HrrModel {
    pub fn new(dim: usize, n_states: usize, n_actions: usize, seed: u64) -> Result<Self> {
        if dim == 0 || n_states == 0 || n_actions == 0 {
            return Err(HoloError::InvalidDimension(format!(
                "HRR shape D={dim}, n_s={n_states}, n_a={n_actions}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
        let states = draw(dim * n_states);
        let actions = draw(dim * n_actions);
        Ok(Self {
            dim,
            states,
            actions,
            n_states,
            n_actions,
            conv: Convolver::new(dim)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.n_states
    }

    pub fn parameter_count(&self) -> usize {
        self.states.len() + self.actions.len()
    }

    fn scale(&self) -> f64 {
        1.0 / (self.dim as f64).sqrt()
    }

    pub fn encode_state(&self, s: usize) -> Result<Vec<f64>> {
        if s >= self.n_states {
            return Err(HoloError::IndexOutOfRange { what: "state", index: s, size: self.n_states });
        }
        let k = self.scale();
        Ok(self.states[s * self.dim..(s + 1) * self.dim].iter().map(|x| x * k).collect())
    }

    pub fn encode_action(&self, a: usize) -> Result<Vec<f64>> {
        if a >= self.n_actions {
            return Err(HoloError::IndexOutOfRange { what: "action", index: a, size: self.n_actions });
        }
        let k = self.scale();
        Ok(self.actions[a * self.dim..(a + 1) * self.dim].iter().map(|x| x * k).collect())
    }

    pub fn predict(&self, z: &[f64], a: usize) -> Result<Vec<f64>> {
        self.conv.convolve(z, &self.encode_action(a)?)
    }

    /// Nearest state by cosine similarity; ties go to the lower index.
    pub fn decode(&self, z: &[f64]) -> Result<usize> {
        check_dim(self.dim, z.len())?;
        let mut best = (0, f64::NEG_INFINITY);
        for s in 0..self.n_states {
            let c = cosine(&self.encode_state(s)?, z);
            if c > best.1 + TIE_TOLERANCE {
                best = (s, c);
            }
        }
        Ok(best.0)
    }

    pub fn similarity_to_state(&self, z: &[f64], s: usize) -> Result<f64> {
        Ok(cosine(&self.encode_state(s)?, z))
    }
}

#[derive(Debug, Clone)]
pub struct HrrGrads {
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
}

/// Component losses, weighted total and gradient w.r.t. the raw parameters.
pub fn hrr_total_loss(
    m: &HrrModel,
    batch: &[Transition],
    weights: &LossWeights,
) -> Result<(EpochLoss, HrrGrads)> {
    if batch.is_empty() {
        return Err(HoloError::Empty("HRR batch"));
    }
    let d = m.dim;
    let k = m.scale();
    let mut gs = vec![0.0; m.states.len()];
    let mut ga = vec![0.0; m.actions.len()];

    // binding, mean over the batch
    let inv_b = 1.0 / batch.len() as f64;
    let mut bind = 0.0;
    for t in batch {
        let x = m.encode_state(t.s)?;
        let y = m.encode_action(t.a.index())?;
        let target = m.encode_state(t.s_next)?;
        let p = m.conv.convolve(&x, &y)?;
        let r: Vec<f64> = p.iter().zip(&target).map(|(a, b)| a - b).collect();
        bind += r.iter().map(|v| v * v).sum::<f64>();
        let gx = m.conv.correlate(&y, &r)?;
        let gy = m.conv.correlate(&x, &r)?;
        let c = 2.0 * inv_b * weights.w_bind * k;
        for i in 0..d {
            gs[t.s * d + i] += c * gx[i];
            gs[t.s_next * d + i] -= c * r[i];
            ga[t.a.index() * d + i] += c * gy[i];
        }
    }
    bind *= inv_b;

    let identity = crate::hypervector::hrr::impulse(d);
    let mut inv = 0.0;
    for (a, b) in inverse_pairs() {
        let x = m.encode_action(a.index())?;
        let y = m.encode_action(b.index())?;
        let p = m.conv.convolve(&x, &y)?;
        let r: Vec<f64> = p.iter().zip(&identity).map(|(u, v)| u - v).collect();
        inv += r.iter().map(|v| v * v).sum::<f64>();
        let gx = m.conv.correlate(&y, &r)?;
        let gy = m.conv.correlate(&x, &r)?;
        let c = 2.0 * weights.w_inv * k;
        for i in 0..d {
            ga[a.index() * d + i] += c * gx[i];
            ga[b.index() * d + i] += c * gy[i];
        }
    }

    let distinct: Vec<usize> = batch
        .iter()
        .flat_map(|t| [t.s, t.s_next])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let enc: Vec<Vec<f64>> = distinct.iter().map(|&s| m.encode_state(s)).collect::<Result<_>>()?;
    let mut ortho = 0.0;
    for i in 0..enc.len() {
        for j in (i + 1)..enc.len() {
            let dot: f64 = enc[i].iter().zip(&enc[j]).map(|(a, b)| a * b).sum();
            ortho += dot * dot;
            let c = 2.0 * dot * weights.w_ortho * k;
            let (si, sj) = (distinct[i], distinct[j]);
            for q in 0..d {
                gs[si * d + q] += c * enc[j][q];
                gs[sj * d + q] += c * enc[i][q];
            }
        }
    }

    Ok((
        EpochLoss {
            epoch: 0,
            bind,
            inv,
            ortho,
            total: weights.w_bind * bind + weights.w_inv * inv + weights.w_ortho * ortho,
        },
        HrrGrads { states: gs, actions: ga },
    ))
}

pub struct TrainedHrr {
    pub model: HrrModel,
    pub report: LossReport,
}

pub fn hrr_train(
    data: &DatasetSplit,
    grid: &GridSpec,
    config: &TrainConfig,
    weights: &LossWeights,
) -> Result<TrainedHrr> {
    config.validate()?;
    weights.validate()?;
    if data.train.is_empty() {
        return Err(HoloError::Empty("training set"));
    }
    let mut model = HrrModel::new(config.dim, grid.num_states(), Action::COUNT, config.seed)?;
    let mut opt = OptimizerState::new(config.optimizer, &[model.states.len(), model.actions.len()]);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x4852_525f_5348_5546);
    let mut order = data.train.clone();
    let bs = config.batch_size.unwrap_or(order.len()).min(order.len());
    let mut report = LossReport::default();
    for epoch in 0..config.epochs {
        if bs < order.len() {
            order.shuffle(&mut rng);
        }
        let mut acc = EpochLoss { epoch, bind: 0.0, inv: 0.0, ortho: 0.0, total: 0.0 };
        let mut n = 0.0;
        for batch in order.chunks(bs) {
            let (l, mut g) = hrr_total_loss(&model, batch, weights)?;
            acc.bind += l.bind;
            acc.inv += l.inv;
            acc.ortho += l.ortho;
            acc.total += l.total;
            n += 1.0;
            adam_step(
                &mut [&mut model.states, &mut model.actions],
                &mut [&mut g.states, &mut g.actions],
                &mut opt,
                config.learning_rate,
                config.grad_clip,
            )?;
        }
        report.epochs.push(EpochLoss {
            epoch,
            bind: acc.bind / n,
            inv: acc.inv / n,
            ortho: acc.ortho / n,
            total: acc.total / n,
        });
    }
    Ok(TrainedHrr { model, report })
}
