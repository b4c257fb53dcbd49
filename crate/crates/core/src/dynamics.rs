//! Latent transitions, rollouts, cleanup and noise injection.
//!
//! A transition binds the current latent with the action vector. Rollouts
//! can be run step by step in embedding space or as a single modular sum of
//! action phases; both give the same final latent.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoder::{Codebook, StateEncoder};
use crate::error::{check_dim, HoloError, Result};
use crate::gridworld::{Action, GridSpec};
use crate::hypervector::{bind_complex, canonicalize, similarity_unchecked, ComplexHV, PhaseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Clean,
    Noisy,
    Cleaned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub hv: ComplexHV,
    pub provenance: Provenance,
}

impl LatentState {
    pub fn clean(hv: ComplexHV) -> Self {
        Self {
            hv,
            provenance: Provenance::Clean,
        }
    }
}

impl From<ComplexHV> for LatentState {
    fn from(hv: ComplexHV) -> Self {
        Self::clean(hv)
    }
}

/// How often a rollout snaps its latent back onto the codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanupPolicy {
    period: Option<usize>,
}

impl Default for CleanupPolicy {
    fn default() -> Self {
        Self { period: Some(2) }
    }
}

impl CleanupPolicy {
    pub fn every(period: usize) -> Result<Self> {
        if period == 0 {
            return Err(HoloError::InvalidArgument("cleanup period must be at least 1".into()));
        }
        Ok(Self { period: Some(period) })
    }

    pub fn disabled() -> Self {
        Self { period: None }
    }

    pub fn period(&self) -> Option<usize> {
        self.period
    }

    /// Whether to clean after `steps_done` steps (counted from one).
    pub fn cleans_after(&self, steps_done: usize) -> bool {
        self.period.is_some_and(|p| steps_done % p == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    /// Decoded state after each step.
    pub decoded_states: Vec<usize>,
    /// Similarity of each step's prediction to the true state's embedding.
    pub similarities: Vec<f64>,
    pub steps_correct: usize,
    pub final_correct: bool,
}

impl RolloutResult {
    pub fn horizon(&self) -> usize {
        self.decoded_states.len()
    }

    /// Accumulates one step. `truth` is the ground-truth state after the step.
    pub(crate) fn push(&mut self, decoded: usize, sim: f64, truth: usize) {
        self.decoded_states.push(decoded);
        self.similarities.push(sim);
        if decoded == truth {
            self.steps_correct += 1;
        }
        self.final_correct = decoded == truth;
    }

    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            decoded_states: Vec::with_capacity(n),
            similarities: Vec::with_capacity(n),
            steps_correct: 0,
            final_correct: false,
        }
    }
}

/// `trial,horizon,cleanup_period,final_correct,steps_correct`; a disabled
/// cleanup period is written as `0`.
pub fn write_rollouts_csv<W: Write>(mut w: W, policy: CleanupPolicy, results: &[RolloutResult]) -> Result<()> {
    writeln!(w, "trial,horizon,cleanup_period,final_correct,steps_correct")?;
    let period = policy.period().unwrap_or(0);
    for (i, r) in results.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            i,
            r.horizon(),
            period,
            u8::from(r.final_correct),
            r.steps_correct
        )?;
    }
    Ok(())
}

pub fn predict_next(z: &LatentState, a_hv: &ComplexHV) -> Result<LatentState> {
    Ok(LatentState {
        hv: bind_complex(&z.hv, a_hv)?,
        provenance: z.provenance,
    })
}

/// The latent after each step of binding `z0` with successive actions.
pub fn rollout_embedding(z0: &LatentState, actions: &[ComplexHV]) -> Result<Vec<LatentState>> {
    if actions.is_empty() {
        return Err(HoloError::Empty("action list"));
    }
    let mut out: Vec<LatentState> = Vec::with_capacity(actions.len());
    for a in actions {
        let prev = out.last().unwrap_or(z0);
        let next = predict_next(prev, a)?;
        out.push(next);
    }
    Ok(out)
}

/// Number of canonicalization sweeps performed by a phase rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhaseRolloutOps {
    pub additions: usize,
    pub canonicalizations: usize,
}

pub fn rollout_phase(theta0: &PhaseVector, action_phases: &[PhaseVector]) -> Result<PhaseVector> {
    rollout_phase_counted(theta0, action_phases).map(|(v, _)| v)
}

/// Sums all action phases onto `theta0` and wraps once at the end.
pub fn rollout_phase_counted(
    theta0: &PhaseVector,
    action_phases: &[PhaseVector],
) -> Result<(PhaseVector, PhaseRolloutOps)> {
    if action_phases.is_empty() {
        return Err(HoloError::Empty("action list"));
    }
    let mut ops = PhaseRolloutOps::default();
    let mut acc = theta0.phases().to_vec();
    for a in action_phases {
        check_dim(acc.len(), a.dim())?;
        for (x, y) in acc.iter_mut().zip(a.phases()) {
            *x += y;
        }
        ops.additions += 1;
    }
    acc.iter_mut().for_each(|x| *x = canonicalize(*x));
    ops.canonicalizations += 1;
    Ok((PhaseVector::new(acc)?, ops))
}

/// Nearest codebook row; the cleaned latent is that exact row.
pub fn cleanup(z: &LatentState, cb: &Codebook) -> Result<(usize, LatentState)> {
    let (s, _) = cb.nearest(&z.hv)?;
    Ok((
        s,
        LatentState {
            hv: cb.row(s)?.clone(),
            provenance: Provenance::Cleaned,
        },
    ))
}

/// Rolls `z0` forward through `actions`, snapping to the codebook whenever
/// the policy says so. `truth[k]` is the true state after step `k + 1`.
pub fn rollout_with_cleanup(
    z0: &LatentState,
    actions: &[ComplexHV],
    truth: &[usize],
    cb: &Codebook,
    policy: CleanupPolicy,
) -> Result<RolloutResult> {
    if actions.is_empty() {
        return Err(HoloError::Empty("action list"));
    }
    check_dim(actions.len(), truth.len())?;
    let mut z = z0.clone();
    let mut result = RolloutResult::with_capacity(actions.len());
    for (k, (a, &t)) in actions.iter().zip(truth).enumerate() {
        z = predict_next(&z, a)?;
        let (decoded, _) = cb.nearest(&z.hv)?;
        let sim = similarity_unchecked(&z.hv, cb.row(t)?);
        result.push(decoded, sim, t);
        if policy.cleans_after(k + 1) {
            z = LatentState {
                hv: cb.row(decoded)?.clone(),
                provenance: Provenance::Cleaned,
            };
        }
    }
    Ok(result)
}

/// Adds i.i.d. `N(0, σ)` to the real and imaginary part of every component.
pub fn add_noise(z: &LatentState, sigma: f64, seed: u64) -> Result<LatentState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise_with(z, sigma, &mut rng)
}

pub fn add_noise_with<R: Rng + ?Sized>(z: &LatentState, sigma: f64, rng: &mut R) -> Result<LatentState> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(HoloError::InvalidArgument(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(z.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    let mut hv = z.hv.clone();
    let (re, im) = hv.parts_mut();
    for (r, i) in re.iter_mut().zip(im.iter_mut()) {
        *r += normal.sample(rng);
        *i += normal.sample(rng);
    }
    Ok(LatentState {
        hv,
        provenance: Provenance::Noisy,
    })
}

/// `similarity(φ_S(s), φ_S(s + k·a))` for every in-grid `k` in `[k_min, k_max]`.
/// Negative offsets walk along the inverse action; off-grid offsets are omitted.
pub fn similarity_profile(
    states: &StateEncoder,
    s: usize,
    a: Action,
    k_min: isize,
    k_max: isize,
    g: &GridSpec,
) -> Result<Vec<(isize, f64)>> {
    if !(k_min <= 0 && 0 <= k_max) {
        return Err(HoloError::InvalidArgument(format!(
            "offset range [{k_min}, {k_max}] must contain 0"
        )));
    }
    g.check_state(s)?;
    let base = states.encode(s)?;
    let mut out = Vec::new();
    for k in k_min..=k_max {
        if let Some(t) = g.offset(s, a, k)? {
            out.push((k, similarity_unchecked(&base, &states.encode(t)?)));
        }
    }
    Ok(out)
}
