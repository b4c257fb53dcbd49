//! MLP baselines: learned state/action embedding tables feeding a ReLU MLP
//! that predicts the next state's embedding.
//!
//! The regression target is the model's own current embedding row for
//! `s_next`, so the tables receive gradient from both the input and the
//! target side. Predictions are decoded by cosine nearest neighbour.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{CleanupPolicy, RolloutResult};
use crate::encoder::{read_f64s, read_u32, write_f64s, TIE_TOLERANCE};
use crate::error::{check_dim, HoloError, Result};
use crate::gridworld::{Action, DatasetSplit, GridSpec, Transition};
use crate::training::{adam_step, relative_error, OptimizerKind, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MlpVariant {
    #[serde(rename = "mlp-s")]
    Small,
    #[serde(rename = "mlp-m")]
    Medium,
    #[serde(rename = "mlp-l")]
    Large,
}

impl MlpVariant {
    pub const ALL: [MlpVariant; 3] = [MlpVariant::Small, MlpVariant::Medium, MlpVariant::Large];

    /// (hidden layers, hidden width)
    pub fn shape(self) -> (usize, usize) {
        match self {
            MlpVariant::Small => (2, 128),
            MlpVariant::Medium => (4, 256),
            MlpVariant::Large => (6, 512),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MlpVariant::Small => "mlp-s",
            MlpVariant::Medium => "mlp-m",
            MlpVariant::Large => "mlp-l",
        }
    }

    fn code(self) -> u32 {
        self as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// `None` for shapes outside the three named baselines.
    pub variant: Option<MlpVariant>,
}

impl MlpConfig {
    pub fn variant(v: MlpVariant) -> Self {
        let (hidden_layers, hidden_width) = v.shape();
        Self {
            state_dim: 64,
            action_dim: 16,
            hidden_layers,
            hidden_width,
            variant: Some(v),
        }
    }

    pub fn custom(state_dim: usize, action_dim: usize, hidden_layers: usize, hidden_width: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            hidden_layers,
            hidden_width,
            variant: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 || self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(HoloError::InvalidDimension(format!("MLP shape {self:?}")));
        }
        if let Some(v) = self.variant {
            if v.shape() != (self.hidden_layers, self.hidden_width) || (self.state_dim, self.action_dim) != (64, 16) {
                return Err(HoloError::InvalidArgument(format!("{self:?} does not match {}", v.name())));
            }
        }
        Ok(())
    }

    fn layer_sizes(&self) -> Vec<(usize, usize)> {
        let mut sizes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.state_dim + self.action_dim;
        for _ in 0..self.hidden_layers {
            sizes.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        sizes.push((fan_in, self.state_dim));
        sizes
    }
}

/// Affine layer `y = W x + b` with `W` shaped `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: MlpConfig,
    /// `|S| × state_dim`
    pub state_table: Array2<f64>,
    /// `|A| × action_dim`
    pub action_table: Array2<f64>,
    pub layers: Vec<Dense>,
}

impl MlpModel {
    /// Embeddings are standard normal; layer weights and biases are uniform
    /// in `±1/√fan_in`.
    pub fn new(config: MlpConfig, n_states: usize, n_actions: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_states == 0 || n_actions == 0 {
            return Err(HoloError::InvalidDimension("MLP needs at least one state and action".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |r, c| Array2::from_shape_simple_fn((r, c), || StandardNormal.sample(&mut rng));
        let state_table = normal(n_states, config.state_dim);
        let action_table = normal(n_actions, config.action_dim);
        let layers = config
            .layer_sizes()
            .into_iter()
            .map(|(fan_in, out)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                Dense {
                    w: Array2::from_shape_simple_fn((out, fan_in), || rng.random_range(-bound..bound)),
                    b: Array1::from_shape_simple_fn(out, || rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Self {
            config,
            state_table,
            action_table,
            layers,
        })
    }

    pub fn num_states(&self) -> usize {
        self.state_table.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.action_table.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.state_table.len()
            + self.action_table.len()
            + self.layers.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>()
    }

    pub fn state_embedding(&self, s: usize) -> Result<ArrayView1<'_, f64>> {
        if s >= self.num_states() {
            return Err(HoloError::IndexOutOfRange { what: "state", index: s, size: self.num_states() });
        }
        Ok(self.state_table.row(s))
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a < self.num_actions() {
            Ok(())
        } else {
            Err(HoloError::IndexOutOfRange { what: "action", index: a, size: self.num_actions() })
        }
    }

    /// Predicts the next embedding from an arbitrary current embedding.
    pub fn forward_from_embedding(&self, z: &[f64], a: usize) -> Result<Vec<f64>> {
        check_dim(self.config.state_dim, z.len())?;
        self.check_action(a)?;
        let mut x = Array1::zeros(self.config.state_dim + self.config.action_dim);
        x.slice_mut(s![..self.config.state_dim]).assign(&ArrayView1::from(z));
        x.slice_mut(s![self.config.state_dim..]).assign(&self.action_table.row(a));
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            x = l.w.dot(&x) + &l.b;
            if i < last {
                x.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(x.to_vec())
    }

    fn input_batch(&self, batch: &[Transition]) -> Array2<f64> {
        let sd = self.config.state_dim;
        let mut x = Array2::zeros((batch.len(), sd + self.config.action_dim));
        for (i, t) in batch.iter().enumerate() {
            x.slice_mut(s![i, ..sd]).assign(&self.state_table.row(t.s));
            x.slice_mut(s![i, sd..]).assign(&self.action_table.row(t.a.index()));
        }
        x
    }

    fn check_batch(&self, batch: &[Transition]) -> Result<()> {
        for t in batch {
            self.state_embedding(t.s)?;
            self.state_embedding(t.s_next)?;
            self.check_action(t.a.index())?;
        }
        Ok(())
    }
}

pub fn mlp_forward(m: &MlpModel, s: usize, a: usize) -> Result<Vec<f64>> {
    let z = m.state_embedding(s)?.to_vec();
    m.forward_from_embedding(&z, a)
}

/// Gradient buffers with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub state_table: Array2<f64>,
    pub action_table: Array2<f64>,
    pub layers: Vec<Dense>,
}

/// Mean squared error between predictions and the current target rows,
/// averaged over batch and embedding components, with its gradient.
pub fn mlp_loss(m: &MlpModel, batch: &[Transition]) -> Result<(f64, MlpGrads)> {
    if batch.is_empty() {
        return Err(HoloError::Empty("MLP batch"));
    }
    m.check_batch(batch)?;
    let sd = m.config.state_dim;
    let n = batch.len();
    let last = m.layers.len() - 1;

    let mut acts = vec![m.input_batch(batch)];
    for (i, l) in m.layers.iter().enumerate() {
        let mut z = acts[i].dot(&l.w.t()) + &l.b;
        if i < last {
            z.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(z);
    }
    let out = acts.last().unwrap();
    let mut target = Array2::zeros((n, sd));
    for (i, t) in batch.iter().enumerate() {
        target.row_mut(i).assign(&m.state_table.row(t.s_next));
    }
    let diff = out - &target;
    let scale = 1.0 / (n * sd) as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() * scale;

    let mut delta = diff * (2.0 * scale);
    let mut state_g = Array2::zeros(m.state_table.raw_dim());
    let mut action_g = Array2::zeros(m.action_table.raw_dim());
    for (i, t) in batch.iter().enumerate() {
        let mut row = state_g.row_mut(t.s_next);
        row -= &delta.row(i);
    }
    let mut layer_g = Vec::with_capacity(m.layers.len());
    for i in (0..m.layers.len()).rev() {
        let a_prev = &acts[i];
        let gw = delta.t().dot(a_prev);
        let gb = delta.sum_axis(Axis(0));
        let mut d_prev = delta.dot(&m.layers[i].w);
        if i > 0 {
            // ReLU derivative, read off the stored post-activation
            d_prev.zip_mut_with(a_prev, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
        }
        layer_g.push(Dense { w: gw, b: gb });
        delta = d_prev;
    }
    layer_g.reverse();
    for (i, t) in batch.iter().enumerate() {
        let mut srow = state_g.row_mut(t.s);
        srow += &delta.slice(s![i, ..sd]);
        let mut arow = action_g.row_mut(t.a.index());
        arow += &delta.slice(s![i, sd..]);
    }
    Ok((
        loss,
        MlpGrads {
            state_table: state_g,
            action_table: action_g,
            layers: layer_g,
        },
    ))
}

fn param_slices(m: &mut MlpModel) -> Vec<&mut [f64]> {
    let mut v: Vec<&mut [f64]> = vec![
        m.state_table.as_slice_mut().expect("standard layout"),
        m.action_table.as_slice_mut().expect("standard layout"),
    ];
    for l in &mut m.layers {
        v.push(l.w.as_slice_mut().expect("standard layout"));
        v.push(l.b.as_slice_mut().expect("standard layout"));
    }
    v
}

fn grad_slices(g: &mut MlpGrads) -> Vec<&mut [f64]> {
    let mut v: Vec<&mut [f64]> = vec![
        g.state_table.as_slice_mut().expect("standard layout"),
        g.action_table.as_slice_mut().expect("standard layout"),
    ];
    for l in &mut g.layers {
        v.push(l.w.as_slice_mut().expect("standard layout"));
        v.push(l.b.as_slice_mut().expect("standard layout"));
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.0005,
            grad_clip: 1.0,
            batch_size: Some(32),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedMlp {
    pub model: MlpModel,
    /// Mean minibatch loss per epoch.
    pub losses: Vec<f64>,
}

pub fn mlp_train(
    data: &DatasetSplit,
    grid: &GridSpec,
    cfg: MlpConfig,
    train_cfg: &MlpTrainConfig,
) -> Result<TrainedMlp> {
    if data.train.is_empty() {
        return Err(HoloError::Empty("training set"));
    }
    if train_cfg.epochs == 0 || !(train_cfg.learning_rate > 0.0) || !(train_cfg.grad_clip > 0.0) {
        return Err(HoloError::InvalidArgument(format!("bad MLP training config {train_cfg:?}")));
    }
    if train_cfg.batch_size == Some(0) {
        return Err(HoloError::InvalidArgument("batch_size must be at least 1".into()));
    }
    let mut model = MlpModel::new(cfg, grid.num_states(), Action::COUNT, train_cfg.seed)?;
    let shapes: Vec<usize> = param_slices(&mut model).iter().map(|p| p.len()).collect();
    let mut opt = OptimizerState::new(OptimizerKind::Adam, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed ^ 0x4d4c_505f_5348_5546);
    let mut order = data.train.clone();
    let bs = train_cfg.batch_size.unwrap_or(order.len()).min(order.len());
    let mut losses = Vec::with_capacity(train_cfg.epochs);
    for _ in 0..train_cfg.epochs {
        if bs < order.len() {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        let mut count = 0;
        for batch in order.chunks(bs) {
            let (loss, mut grads) = mlp_loss(&model, batch)?;
            total += loss;
            count += 1;
            adam_step(
                &mut param_slices(&mut model),
                &mut grad_slices(&mut grads),
                &mut opt,
                train_cfg.learning_rate,
                train_cfg.grad_clip,
            )?;
        }
        losses.push(total / count as f64);
    }
    Ok(TrainedMlp { model, losses })
}

fn cosine(a: ArrayView1<'_, f64>, b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.dot(&a).sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine similarity between a predicted embedding and the table row of `s`.
pub fn mlp_similarity(m: &MlpModel, predicted: &[f64], s: usize) -> Result<f64> {
    check_dim(m.config.state_dim, predicted.len())?;
    Ok(cosine(m.state_embedding(s)?, predicted))
}

/// Nearest table row by cosine similarity; ties go to the lower index.
pub fn mlp_decode(m: &MlpModel, predicted: &[f64]) -> Result<usize> {
    check_dim(m.config.state_dim, predicted.len())?;
    let mut best = (0, f64::NEG_INFINITY);
    for (s, row) in m.state_table.rows().into_iter().enumerate() {
        let c = cosine(row, predicted);
        if c > best.1 + TIE_TOLERANCE {
            best = (s, c);
        }
    }
    Ok(best.0)
}

/// Feeds each prediction back as the next input embedding, snapping to the
/// decoded table row whenever the cleanup policy fires.
pub fn mlp_rollout(
    m: &MlpModel,
    s0: usize,
    actions: &[Action],
    truth: &[usize],
    policy: CleanupPolicy,
) -> Result<RolloutResult> {
    if actions.is_empty() {
        return Err(HoloError::Empty("action list"));
    }
    check_dim(actions.len(), truth.len())?;
    let mut z = m.state_embedding(s0)?.to_vec();
    let mut result = RolloutResult::with_capacity(actions.len());
    for (k, (a, &t)) in actions.iter().zip(truth).enumerate() {
        z = m.forward_from_embedding(&z, a.index())?;
        let decoded = mlp_decode(m, &z)?;
        result.push(decoded, mlp_similarity(m, &z, t)?, t);
        if policy.cleans_after(k + 1) {
            z = m.state_embedding(decoded)?.to_vec();
        }
    }
    Ok(result)
}

/// Worst relative error of [`mlp_loss`] gradients against central differences.
pub fn mlp_gradient_check(m: &MlpModel, batch: &[Transition], n_probes: usize, h: f64, seed: u64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(HoloError::InvalidArgument(format!("step h must be > 0, got {h}")));
    }
    let (_, mut grads) = mlp_loss(m, batch)?;
    let flat_grads: Vec<Vec<f64>> = grad_slices(&mut grads).iter().map(|g| g.to_vec()).collect();
    let sizes: Vec<usize> = flat_grads.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_probes {
        let mut idx = rng.random_range(0..total);
        let mut block = 0;
        while idx >= sizes[block] {
            idx -= sizes[block];
            block += 1;
        }
        let eval = |delta: f64| -> Result<f64> {
            let mut probe = m.clone();
            param_slices(&mut probe)[block][idx] += delta;
            Ok(mlp_loss(&probe, batch)?.0)
        };
        let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
        worst = worst.max(relative_error(flat_grads[block][idx], numeric));
    }
    Ok(worst)
}

const MLP_MAGIC: &[u8; 4] = b"HWMB";
const CUSTOM_VARIANT: u32 = u32::MAX;

/// `"HWMB"`, then little-endian u32 variant code (0/1/2, or `u32::MAX` for
/// custom shapes), `|S|`, `|A|`, state dim, action dim, hidden layers, hidden
/// width; then the state table, action table and each layer's `W` (row-major,
/// `out × in`) followed by `b`, all as little-endian f64.
pub fn write_mlp<W: Write>(mut w: W, m: &MlpModel) -> Result<()> {
    w.write_all(MLP_MAGIC)?;
    let c = &m.config;
    let header = [
        c.variant.map_or(CUSTOM_VARIANT, MlpVariant::code),
        m.num_states() as u32,
        m.num_actions() as u32,
        c.state_dim as u32,
        c.action_dim as u32,
        c.hidden_layers as u32,
        c.hidden_width as u32,
    ];
    for x in header {
        w.write_all(&x.to_le_bytes())?;
    }
    let mut m = m.clone();
    for p in param_slices(&mut m) {
        write_f64s(&mut w, p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mlp<R: Read>(mut r: R) -> Result<MlpModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MLP_MAGIC {
        return Err(HoloError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let mut h = [0usize; 7];
    for x in &mut h {
        *x = read_u32(&mut r)? as usize;
    }
    let variant = match h[0] as u32 {
        CUSTOM_VARIANT => None,
        code => Some(
            *MlpVariant::ALL
                .get(code as usize)
                .ok_or_else(|| HoloError::Checkpoint(format!("unknown variant code {code}")))?,
        ),
    };
    let config = MlpConfig {
        state_dim: h[3],
        action_dim: h[4],
        hidden_layers: h[5],
        hidden_width: h[6],
        variant,
    };
    let mut m = MlpModel::new(config, h[1], h[2], 0).map_err(|e| HoloError::Checkpoint(e.to_string()))?;
    for p in param_slices(&mut m) {
        let vals = read_f64s(&mut r, p.len())?;
        p.copy_from_slice(&vals);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(HoloError::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(m)
}

pub fn save_mlp(path: &Path, m: &MlpModel) -> Result<()> {
    write_mlp(BufWriter::new(File::create(path)?), m)
}

pub fn load_mlp(path: &Path) -> Result<MlpModel> {
    read_mlp(BufReader::new(File::open(path)?))
}
