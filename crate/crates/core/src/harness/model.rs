//! A common interface over the FHRR, HRR and MLP world models so that every
//! experiment runs the same protocol against each of them.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baseline_mlp::{
    mlp_decode, mlp_forward, mlp_rollout, mlp_similarity, mlp_train, MlpConfig, MlpModel, MlpTrainConfig,
    MlpVariant,
};
use crate::dynamics::{add_noise_with, rollout_with_cleanup, CleanupPolicy, LatentState, RolloutResult};
use crate::encoder::{build_codebook, parameter_count, ActionEncoder, Codebook, StateEncoder};
use crate::error::{HoloError, Result};
use crate::gridworld::{Action, DatasetSplit, GridSpec, Trajectory, Transition};
use crate::hrr_world::{hrr_train, HrrModel};
use crate::hypervector::{bind, similarity_unchecked};
use crate::training::{train, LossReport, LossWeights, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "fhrr")]
    Fhrr,
    #[serde(rename = "hrr")]
    Hrr,
    #[serde(rename = "mlp-s")]
    MlpS,
    #[serde(rename = "mlp-m")]
    MlpM,
    #[serde(rename = "mlp-l")]
    MlpL,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Fhrr, ModelKind::Hrr, ModelKind::MlpS, ModelKind::MlpM, ModelKind::MlpL];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fhrr => "fhrr",
            ModelKind::Hrr => "hrr",
            ModelKind::MlpS => "mlp-s",
            ModelKind::MlpM => "mlp-m",
            ModelKind::MlpL => "mlp-l",
        }
    }

    pub fn mlp_variant(self) -> Option<MlpVariant> {
        match self {
            ModelKind::MlpS => Some(MlpVariant::Small),
            ModelKind::MlpM => Some(MlpVariant::Medium),
            ModelKind::MlpL => Some(MlpVariant::Large),
            _ => None,
        }
    }

    pub fn is_vsa(self) -> bool {
        matches!(self, ModelKind::Fhrr | ModelKind::Hrr)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = HoloError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HoloError::InvalidArgument(format!("unknown model kind `{s}` (expected fhrr, hrr, mlp-s, mlp-m or mlp-l)")))
    }
}

/// Outcome of one prediction from a ground-truth state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub decoded: usize,
    /// Similarity of the prediction to the true next state's embedding.
    pub similarity: f64,
}

pub trait WorldModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn parameter_count(&self) -> usize;

    fn num_states(&self) -> usize;

    fn one_step(&self, t: &Transition) -> Result<StepOutcome>;

    /// Adds `N(0, σ)` to every real component of the predicted latent, then decodes.
    fn one_step_noisy(&self, t: &Transition, sigma: f64, rng: &mut dyn RngCore) -> Result<usize>;

    fn rollout(&self, traj: &Trajectory, policy: CleanupPolicy) -> Result<RolloutResult>;

    /// A single prediction, optionally followed by decoding; used for timing.
    fn bench_step(&self, s: usize, a: Action, decode: bool) -> Result<usize>;
}

/// Trained FHRR encoders with their codebook.
#[derive(Debug, Clone)]
pub struct FhrrModel {
    pub states: StateEncoder,
    pub actions: ActionEncoder,
    pub codebook: Codebook,
    action_hvs: Vec<crate::hypervector::ComplexHV>,
}

impl FhrrModel {
    pub fn new(states: StateEncoder, actions: ActionEncoder) -> Result<Self> {
        crate::error::check_dim(states.dim(), actions.dim())?;
        let codebook = build_codebook(&states);
        let action_hvs = (0..actions.len()).map(|a| actions.encode(a)).collect::<Result<_>>()?;
        Ok(Self {
            states,
            actions,
            codebook,
            action_hvs,
        })
    }

    fn predict(&self, s: usize, a: Action) -> Result<LatentState> {
        crate::dynamics::predict_next(&LatentState::clean(self.codebook.row(s)?.clone()), &self.action_hvs[a.index()])
    }
}

impl WorldModel for FhrrModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Fhrr
    }

    fn parameter_count(&self) -> usize {
        parameter_count(&self.states, &self.actions)
    }

    fn num_states(&self) -> usize {
        self.states.len()
    }

    fn one_step(&self, t: &Transition) -> Result<StepOutcome> {
        let z = self.predict(t.s, t.a)?;
        let (decoded, _) = self.codebook.nearest(&z.hv)?;
        Ok(StepOutcome {
            decoded,
            similarity: similarity_unchecked(&z.hv, self.codebook.row(t.s_next)?),
        })
    }

    fn one_step_noisy(&self, t: &Transition, sigma: f64, rng: &mut dyn RngCore) -> Result<usize> {
        let z = add_noise_with(&self.predict(t.s, t.a)?, sigma, rng)?;
        Ok(self.codebook.nearest(&z.hv)?.0)
    }

    fn rollout(&self, traj: &Trajectory, policy: CleanupPolicy) -> Result<RolloutResult> {
        let acts: Vec<_> = traj.actions.iter().map(|a| self.action_hvs[a.index()].clone()).collect();
        let z0 = LatentState::clean(self.codebook.row(traj.start)?.clone());
        rollout_with_cleanup(&z0, &acts, &traj.states[1..], &self.codebook, policy)
    }

    fn bench_step(&self, s: usize, a: Action, decode: bool) -> Result<usize> {
        // phase addition plus one canonicalization sweep
        let z = bind(&self.states.encode_phases(s)?, &self.actions.encode_phases(a.index())?)?;
        let z = black_box(z);
        if decode {
            Ok(self.codebook.nearest(&z.to_complex())?.0)
        } else {
            Ok(z.dim())
        }
    }
}

fn gaussian(sigma: f64) -> Result<Option<Normal<f64>>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(HoloError::InvalidArgument(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(if sigma == 0.0 { None } else { Some(Normal::new(0.0, sigma).expect("validated sigma")) })
}

fn perturb(v: &mut [f64], sigma: f64, rng: &mut dyn RngCore) -> Result<()> {
    if let Some(n) = gaussian(sigma)? {
        v.iter_mut().for_each(|x| *x += n.sample(rng));
    }
    Ok(())
}

impl WorldModel for HrrModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Hrr
    }

    fn parameter_count(&self) -> usize {
        HrrModel::parameter_count(self)
    }

    fn num_states(&self) -> usize {
        HrrModel::num_states(self)
    }

    fn one_step(&self, t: &Transition) -> Result<StepOutcome> {
        let z = self.predict(&self.encode_state(t.s)?, t.a.index())?;
        Ok(StepOutcome {
            decoded: self.decode(&z)?,
            similarity: self.similarity_to_state(&z, t.s_next)?,
        })
    }

    fn one_step_noisy(&self, t: &Transition, sigma: f64, rng: &mut dyn RngCore) -> Result<usize> {
        let mut z = self.predict(&self.encode_state(t.s)?, t.a.index())?;
        perturb(&mut z, sigma, rng)?;
        self.decode(&z)
    }

    fn rollout(&self, traj: &Trajectory, policy: CleanupPolicy) -> Result<RolloutResult> {
        let mut z = self.encode_state(traj.start)?;
        let mut out = RolloutResult::with_capacity(traj.actions.len());
        for (k, (a, &truth)) in traj.actions.iter().zip(&traj.states[1..]).enumerate() {
            z = self.predict(&z, a.index())?;
            let decoded = self.decode(&z)?;
            out.push(decoded, self.similarity_to_state(&z, truth)?, truth);
            if policy.cleans_after(k + 1) {
                z = self.encode_state(decoded)?;
            }
        }
        Ok(out)
    }

    fn bench_step(&self, s: usize, a: Action, decode: bool) -> Result<usize> {
        let z = black_box(self.predict(&self.encode_state(s)?, a.index())?);
        if decode {
            self.decode(&z)
        } else {
            Ok(z.len())
        }
    }
}

impl WorldModel for MlpModel {
    fn kind(&self) -> ModelKind {
        match self.config.variant {
            Some(MlpVariant::Small) => ModelKind::MlpS,
            Some(MlpVariant::Large) => ModelKind::MlpL,
            _ => ModelKind::MlpM,
        }
    }

    fn parameter_count(&self) -> usize {
        MlpModel::parameter_count(self)
    }

    fn num_states(&self) -> usize {
        MlpModel::num_states(self)
    }

    fn one_step(&self, t: &Transition) -> Result<StepOutcome> {
        let p = mlp_forward(self, t.s, t.a.index())?;
        Ok(StepOutcome {
            decoded: mlp_decode(self, &p)?,
            similarity: mlp_similarity(self, &p, t.s_next)?,
        })
    }

    fn one_step_noisy(&self, t: &Transition, sigma: f64, rng: &mut dyn RngCore) -> Result<usize> {
        let mut p = mlp_forward(self, t.s, t.a.index())?;
        perturb(&mut p, sigma, rng)?;
        mlp_decode(self, &p)
    }

    fn rollout(&self, traj: &Trajectory, policy: CleanupPolicy) -> Result<RolloutResult> {
        mlp_rollout(self, traj.start, &traj.actions, &traj.states[1..], policy)
    }

    fn bench_step(&self, s: usize, a: Action, decode: bool) -> Result<usize> {
        let p = black_box(mlp_forward(self, s, a.index())?);
        if decode {
            mlp_decode(self, &p)
        } else {
            Ok(p.len())
        }
    }
}

/// Hyperparameters for training any model kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTraining {
    pub vsa: TrainConfig,
    pub weights: LossWeights,
    pub mlp: MlpTrainConfig,
}

/// A trained model plus whatever training history it produced.
pub enum TrainedModel {
    Fhrr(FhrrModel, LossReport),
    Hrr(HrrModel, LossReport),
    Mlp(MlpModel, Vec<f64>),
}

impl TrainedModel {
    pub fn as_world_model(&self) -> &dyn WorldModel {
        match self {
            TrainedModel::Fhrr(m, _) => m,
            TrainedModel::Hrr(m, _) => m,
            TrainedModel::Mlp(m, _) => m,
        }
    }
}

pub fn train_model(
    kind: ModelKind,
    data: &DatasetSplit,
    grid: &GridSpec,
    cfg: &ModelTraining,
    seed: u64,
) -> Result<TrainedModel> {
    match kind {
        ModelKind::Fhrr => {
            let t = train(data, grid, &TrainConfig { seed, ..cfg.vsa.clone() }, &cfg.weights)?;
            Ok(TrainedModel::Fhrr(FhrrModel::new(t.states, t.actions)?, t.report))
        }
        ModelKind::Hrr => {
            let t = hrr_train(data, grid, &TrainConfig { seed, ..cfg.vsa.clone() }, &cfg.weights)?;
            Ok(TrainedModel::Hrr(t.model, t.report))
        }
        _ => {
            let variant = kind.mlp_variant().expect("MLP kind");
            let t = mlp_train(data, grid, MlpConfig::variant(variant), &MlpTrainConfig { seed, ..cfg.mlp.clone() })?;
            Ok(TrainedModel::Mlp(t.model, t.losses))
        }
    }
}
