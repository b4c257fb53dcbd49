//! Experiment drivers: one-step and rollout evaluation, the zero-shot and
//! noise sweeps, kernel profiles, embedding export and timing.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Experiment, ExperimentConfig};
use super::metrics::{Manifest, RunMetrics};
use super::model::{train_model, FhrrModel, ModelKind, ModelTraining, TrainedModel, WorldModel};
use crate::baseline_mlp::{save_mlp, MlpModel};
use crate::dynamics::{similarity_profile, write_rollouts_csv, CleanupPolicy, RolloutResult};
use crate::encoder::{save_checkpoint, CheckpointMeta, StateEncoder};
use crate::error::{HoloError, Result};
use crate::gridworld::{
    enumerate_transitions, sample_trajectory, zero_shot_split, Action, DatasetSplit, GridSpec, Trajectory, Transition,
};

pub const THREADS_ENV: &str = "HOLOWORLD_THREADS";

/// Worker count from `HOLOWORLD_THREADS`; unset means one thread.
pub fn eval_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| HoloError::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
    }
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(eval_threads()?)
        .build()
        .map_err(|e| HoloError::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// SplitMix64 finalizer; decorrelates derived seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at `horizon` under base seed `seed`. Any model
/// evaluated at the same seed sees the same trajectories.
pub fn trial_seed(seed: u64, horizon: usize, trial: usize) -> u64 {
    mix(mix(mix(seed) ^ horizon as u64) ^ trial as u64)
}

pub fn trial_trajectories(g: &GridSpec, horizon: usize, trials: usize, seed: u64) -> Result<Vec<Trajectory>> {
    (0..trials).map(|t| sample_trajectory(g, horizon, trial_seed(seed, horizon, t))).collect()
}

fn percent(hits: usize, n: usize) -> f64 {
    100.0 * hits as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStepMetrics {
    /// Percentage of transitions decoded to the true next state.
    pub accuracy: f64,
    /// Mean similarity to the true next embedding, times 100.
    pub cosine: f64,
}

pub fn eval_one_step(model: &dyn WorldModel, transitions: &[Transition]) -> Result<OneStepMetrics> {
    if transitions.is_empty() {
        return Err(HoloError::Empty("evaluation transitions"));
    }
    let mut hits = 0;
    let mut sim = 0.0;
    for t in transitions {
        let o = model.one_step(t)?;
        hits += usize::from(o.decoded == t.s_next);
        sim += o.similarity;
    }
    Ok(OneStepMetrics {
        accuracy: percent(hits, transitions.len()),
        cosine: 100.0 * sim / transitions.len() as f64,
    })
}

/// Runs every trajectory; results come back in trial order regardless of
/// the worker count.
pub fn rollout_trials(model: &dyn WorldModel, trajs: &[Trajectory], policy: CleanupPolicy) -> Result<Vec<RolloutResult>> {
    with_pool(|| trajs.par_iter().map(|t| model.rollout(t, policy)).collect::<Result<Vec<_>>>())?
}

/// Percentage of trials whose decoded final state is the true final state.
pub fn final_state_accuracy(results: &[RolloutResult]) -> f64 {
    percent(results.iter().filter(|r| r.final_correct).count(), results.len().max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutMetrics {
    pub horizon: usize,
    pub cleanup: bool,
    pub accuracy: f64,
    pub results: Vec<RolloutResult>,
}

impl RolloutMetrics {
    pub fn metric_name(&self) -> String {
        rollout_metric(self.horizon, self.cleanup)
    }
}

pub fn rollout_metric(horizon: usize, cleanup: bool) -> String {
    if cleanup {
        format!("rollout_{horizon}_clean")
    } else {
        format!("rollout_{horizon}")
    }
}

/// Accuracy per horizon, without cleanup and with cleanup every `period`
/// steps (the second pass is skipped when `period` is `None`).
pub fn eval_rollouts(
    model: &dyn WorldModel,
    g: &GridSpec,
    horizons: &[usize],
    period: Option<usize>,
    trials: usize,
    seed: u64,
) -> Result<Vec<RolloutMetrics>> {
    if trials == 0 {
        return Err(HoloError::InvalidArgument("trials must be at least 1".into()));
    }
    let mut out = Vec::new();
    for &h in horizons {
        let trajs = trial_trajectories(g, h, trials, seed)?;
        let mut policies = vec![(false, CleanupPolicy::disabled())];
        if let Some(p) = period {
            policies.push((true, CleanupPolicy::every(p)?));
        }
        for (cleanup, policy) in policies {
            let results = rollout_trials(model, &trajs, policy)?;
            out.push(RolloutMetrics {
                horizon: h,
                cleanup,
                accuracy: final_state_accuracy(&results),
                results,
            });
        }
    }
    Ok(out)
}

/// One-step accuracy (percent) with `N(0, σ)` latent noise, over `repeats`
/// passes through `transitions`. The noise stream depends only on `seed`.
pub fn noisy_accuracy(
    model: &dyn WorldModel,
    transitions: &[Transition],
    sigma: f64,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    if transitions.is_empty() || repeats == 0 {
        return Err(HoloError::Empty("noisy evaluation"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..repeats {
        for t in transitions {
            hits += usize::from(model.one_step_noisy(t, sigma, &mut rng)? == t.s_next);
        }
    }
    Ok(percent(hits, transitions.len() * repeats))
}

/// Accuracy per sigma, in the order given.
pub fn sweep_robustness(
    model: &dyn WorldModel,
    transitions: &[Transition],
    sigmas: &[f64],
    repeats: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    sigmas
        .iter()
        .enumerate()
        .map(|(i, &s)| Ok((s, noisy_accuracy(model, transitions, s, repeats, mix(seed ^ mix(i as u64)))?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub kind: ModelKind,
    pub ratio: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub accuracy_clean: f64,
}

/// Retrains each kind at each ratio and seed; reports horizon accuracy with
/// and without cleanup.
#[allow(clippy::too_many_arguments)]
pub fn sweep_zero_shot(
    kinds: &[ModelKind],
    ratios: &[f64],
    horizon: usize,
    trials: usize,
    seeds: &[u64],
    period: usize,
    g: &GridSpec,
    training: &ModelTraining,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::new();
    for &ratio in ratios {
        for &seed in seeds {
            let split = zero_shot_split(&enumerate_transitions(g), ratio, seed)?;
            for &kind in kinds {
                let trained = train_model(kind, &split, g, training, seed)?;
                let m = eval_rollouts(trained.as_world_model(), g, &[horizon], (period > 0).then_some(period), trials, seed)?;
                out.push(SweepPoint {
                    kind,
                    ratio,
                    seed,
                    accuracy: m[0].accuracy,
                    accuracy_clean: m.get(1).map_or(f64::NAN, |r| r.accuracy),
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    /// Per action, `(k, mean similarity)` for every offset reachable from at
    /// least one state.
    pub curves: BTreeMap<Action, Vec<(isize, f64)>>,
}

impl KernelReport {
    pub fn curve(&self, a: Action) -> &[(isize, f64)] {
        self.curves.get(&a).map_or(&[], Vec::as_slice)
    }

    /// Offset with the largest mean similarity.
    pub fn peak(&self, a: Action) -> Option<isize> {
        self.curve(a)
            .iter()
            .copied()
            .fold(None, |best: Option<(isize, f64)>, (k, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            })
            .map(|(k, _)| k)
    }

    /// Mean `|f(k) - g(k)|` over offsets present in both curves.
    pub fn mean_abs_difference(&self, a: Action, b: Action) -> f64 {
        let other: BTreeMap<isize, f64> = self.curve(b).iter().copied().collect();
        let diffs: Vec<f64> = self
            .curve(a)
            .iter()
            .filter_map(|(k, v)| other.get(k).map(|w| (v - w).abs()))
            .collect();
        if diffs.is_empty() {
            0.0
        } else {
            diffs.iter().sum::<f64>() / diffs.len() as f64
        }
    }
}

/// Similarity profiles averaged over `states` for every action.
pub fn kernel_profile_report(enc: &StateEncoder, states: &[usize], k_max: usize, g: &GridSpec) -> Result<KernelReport> {
    if states.is_empty() {
        return Err(HoloError::Empty("kernel states"));
    }
    let k = k_max as isize;
    let mut curves = BTreeMap::new();
    for a in Action::ALL {
        let mut acc: BTreeMap<isize, (f64, usize)> = BTreeMap::new();
        for &s in states {
            for (off, v) in similarity_profile(enc, s, a, -k, k, g)? {
                let e = acc.entry(off).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
        }
        curves.insert(a, acc.into_iter().map(|(off, (sum, n))| (off, sum / n as f64)).collect());
    }
    Ok(KernelReport { curves })
}

pub fn write_kernel_csv<W: Write>(mut w: W, seed: u64, report: &KernelReport) -> Result<()> {
    for a in Action::ALL {
        for (k, v) in report.curve(a) {
            writeln!(w, "{seed},{},{k},{v}", a.name())?;
        }
    }
    Ok(())
}

/// `index,row,col,p0..p{D-1}`: canonical phases of every state.
pub fn export_fhrr_embeddings<W: Write>(mut w: W, enc: &StateEncoder, g: &GridSpec) -> Result<()> {
    write_header(&mut w, "p", enc.dim())?;
    for s in 0..enc.len() {
        let (r, c) = g.coords(s)?;
        write_row(&mut w, s, r, c, enc.encode_phases(s)?.phases())?;
    }
    Ok(())
}

/// `index,row,col,e0..e{k-1}`: the state-table rows.
pub fn export_mlp_embeddings<W: Write>(mut w: W, m: &MlpModel, g: &GridSpec) -> Result<()> {
    write_header(&mut w, "e", m.config.state_dim)?;
    for s in 0..m.num_states() {
        let (r, c) = g.coords(s)?;
        write_row(&mut w, s, r, c, &m.state_embedding(s)?.to_vec())?;
    }
    Ok(())
}

/// `index,row,col,x0..x{D-1}`: scaled real state vectors.
pub fn export_hrr_embeddings<W: Write>(mut w: W, m: &crate::hrr_world::HrrModel, g: &GridSpec) -> Result<()> {
    write_header(&mut w, "x", m.dim())?;
    for s in 0..m.num_states() {
        let (r, c) = g.coords(s)?;
        write_row(&mut w, s, r, c, &m.encode_state(s)?)?;
    }
    Ok(())
}

fn write_header<W: Write>(w: &mut W, prefix: &str, n: usize) -> Result<()> {
    write!(w, "index,row,col")?;
    for i in 0..n {
        write!(w, ",{prefix}{i}")?;
    }
    writeln!(w)?;
    Ok(())
}

// `Display` for f64 prints the shortest string that parses back to the same bits.
fn write_row<W: Write>(w: &mut W, s: usize, r: usize, c: usize, values: &[f64]) -> Result<()> {
    write!(w, "{s},{r},{c}")?;
    for v in values {
        write!(w, ",{v}")?;
    }
    writeln!(w)?;
    Ok(())
}

pub fn export_embeddings<W: Write>(w: W, model: &TrainedModel, g: &GridSpec) -> Result<()> {
    match model {
        TrainedModel::Fhrr(m, _) => export_fhrr_embeddings(w, &m.states, g),
        TrainedModel::Hrr(m, _) => export_hrr_embeddings(w, m, g),
        TrainedModel::Mlp(m, _) => export_mlp_embeddings(w, m, g),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub kind: ModelKind,
    pub parameters: usize,
    /// Median milliseconds per prediction.
    pub predict_ms: f64,
    /// Same, including decoding against the codebook.
    pub predict_cleanup_ms: f64,
}

const BENCH_BLOCK: usize = 16;

fn median_ms(model: &dyn WorldModel, decode: bool, repetitions: usize) -> Result<f64> {
    let n_s = model.num_states();
    let call = |i: usize| model.bench_step(i % n_s, Action::ALL[i % Action::COUNT], decode);
    for i in 0..BENCH_BLOCK.max(repetitions / 10) {
        call(i)?;
    }
    let blocks = repetitions.div_ceil(BENCH_BLOCK).max(1);
    let mut per_call = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let t0 = Instant::now();
        for i in 0..BENCH_BLOCK {
            std::hint::black_box(call(b * BENCH_BLOCK + i)?);
        }
        per_call.push(t0.elapsed().as_secs_f64() * 1e3 / BENCH_BLOCK as f64);
    }
    per_call.sort_by(f64::total_cmp);
    Ok(per_call[per_call.len() / 2])
}

/// Median wall-clock per 1-step prediction, measured in blocks after warm-up.
pub fn benchmark_inference(models: &[&dyn WorldModel], repetitions: usize) -> Result<Vec<Timing>> {
    models
        .iter()
        .map(|m| {
            Ok(Timing {
                kind: m.kind(),
                parameters: m.parameter_count(),
                predict_ms: median_ms(*m, false, repetitions)?,
                predict_cleanup_ms: median_ms(*m, true, repetitions)?,
            })
        })
        .collect()
}

type CacheKey = (ModelKind, u64, u64);

/// Trained models shared between experiments of one run.
#[derive(Default)]
pub struct ModelCache {
    models: BTreeMap<CacheKey, TrainedModel>,
}

impl ModelCache {
    pub fn get_or_train(
        &mut self,
        kind: ModelKind,
        seed: u64,
        split: &DatasetSplit,
        g: &GridSpec,
        training: &ModelTraining,
    ) -> Result<&TrainedModel> {
        let key = (kind, seed, split.ratio.to_bits());
        if !self.models.contains_key(&key) {
            let m = train_model(kind, split, g, training, seed)?;
            self.models.insert(key, m);
        }
        Ok(&self.models[&key])
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn default_split(cfg: &ExperimentConfig, g: &GridSpec, seed: u64) -> Result<DatasetSplit> {
    zero_shot_split(&enumerate_transitions(g), cfg.zero_shot_ratio, seed)
}

/// Writes the model's checkpoint and loss curve under `out`.
pub fn save_model(out: &Path, model: &TrainedModel, seed: u64, cfg: &ExperimentConfig) -> Result<Option<PathBuf>> {
    let kind = model.as_world_model().kind();
    let stem = format!("{kind}_seed{seed}");
    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;
    match model {
        TrainedModel::Fhrr(m, report) => {
            let path = ckpt_dir.join(format!("{stem}.hwm"));
            let meta = CheckpointMeta {
                seed,
                epoch: report.epochs.len(),
                w_bind: cfg.w_bind,
                w_inv: cfg.w_inv,
                w_ortho: cfg.w_ortho,
            };
            save_checkpoint(&path, &m.states, &m.actions, &meta)?;
            report.write_csv(create(&out.join("losses").join(format!("{stem}.csv")))?)?;
            Ok(Some(path))
        }
        TrainedModel::Hrr(_, report) => {
            report.write_csv(create(&out.join("losses").join(format!("{stem}.csv")))?)?;
            Ok(None)
        }
        TrainedModel::Mlp(m, losses) => {
            let path = ckpt_dir.join(format!("{stem}.hwmb"));
            save_mlp(&path, m)?;
            let mut w = create(&out.join("losses").join(format!("{stem}.csv")))?;
            writeln!(w, "epoch,loss")?;
            for (e, l) in losses.iter().enumerate() {
                writeln!(w, "{e},{l}")?;
            }
            Ok(Some(path))
        }
    }
}

fn train_all(cfg: &ExperimentConfig, g: &GridSpec, cache: &mut ModelCache) -> Result<()> {
    let training = cfg.training();
    for &seed in &cfg.seeds {
        let split = default_split(cfg, g, seed)?;
        for &kind in &cfg.models {
            let trained = cache.get_or_train(kind, seed, &split, g, &training)?;
            save_model(&cfg.output_dir, trained, seed, cfg)?;
        }
    }
    Ok(())
}

fn one_step_all(
    cfg: &ExperimentConfig,
    g: &GridSpec,
    cache: &mut ModelCache,
    metrics: &mut RunMetrics,
    exp: Experiment,
) -> Result<()> {
    let training = cfg.training();
    for &seed in &cfg.seeds {
        let split = default_split(cfg, g, seed)?;
        let all = split.all();
        for &kind in &cfg.models {
            let model = cache.get_or_train(kind, seed, &split, g, &training)?.as_world_model();
            let t = metrics.table_mut(exp.name(), kind.name());
            let one = eval_one_step(model, &all)?;
            t.record("accuracy", seed, one.accuracy);
            t.record("cosine", seed, one.cosine);
            if !split.holdout.is_empty() {
                let zs = eval_one_step(model, &split.holdout)?;
                t.record("zero_shot_accuracy", seed, zs.accuracy);
                t.record("zero_shot_cosine", seed, zs.cosine);
            }
            t.record("parameters", seed, model.parameter_count() as f64);
        }
    }
    Ok(())
}

fn rollouts_all(
    cfg: &ExperimentConfig,
    g: &GridSpec,
    cache: &mut ModelCache,
    metrics: &mut RunMetrics,
    exp: Experiment,
) -> Result<()> {
    let training = cfg.training();
    let period = (cfg.cleanup_period > 0).then_some(cfg.cleanup_period);
    let policy = period.map_or(Ok(CleanupPolicy::disabled()), CleanupPolicy::every)?;
    for &seed in &cfg.seeds {
        let split = default_split(cfg, g, seed)?;
        for &kind in &cfg.models {
            let model = cache.get_or_train(kind, seed, &split, g, &training)?.as_world_model();
            for r in eval_rollouts(model, g, &cfg.horizons, period, cfg.trials, seed)? {
                metrics.table_mut(exp.name(), kind.name()).record(&r.metric_name(), seed, r.accuracy);
                let name = format!("{kind}_seed{seed}_{}.csv", r.metric_name());
                let p = if r.cleanup { policy } else { CleanupPolicy::disabled() };
                write_rollouts_csv(create(&cfg.output_dir.join("rollouts").join(name))?, p, &r.results)?;
            }
        }
    }
    Ok(())
}

fn zeroshot(cfg: &ExperimentConfig, g: &GridSpec, metrics: &mut RunMetrics) -> Result<()> {
    let points = sweep_zero_shot(
        &cfg.sweep_models,
        &cfg.zero_shot_ratios,
        cfg.sweep_horizon,
        cfg.trials,
        &cfg.seeds,
        cfg.cleanup_period,
        g,
        &cfg.training(),
    )?;
    let mut w = create(&cfg.output_dir.join("zeroshot.csv"))?;
    writeln!(w, "model,ratio,seed,horizon,accuracy,accuracy_clean")?;
    for p in &points {
        writeln!(w, "{},{},{},{},{},{}", p.kind, p.ratio, p.seed, cfg.sweep_horizon, p.accuracy, p.accuracy_clean)?;
        let t = metrics.table_mut(Experiment::Zeroshot.name(), p.kind.name());
        t.record(&format!("ratio_{}", p.ratio), p.seed, p.accuracy);
        if p.accuracy_clean.is_finite() {
            t.record(&format!("ratio_{}_clean", p.ratio), p.seed, p.accuracy_clean);
        }
    }
    Ok(())
}

fn noise(cfg: &ExperimentConfig, g: &GridSpec, cache: &mut ModelCache, metrics: &mut RunMetrics) -> Result<()> {
    let training = cfg.training();
    let mut w = create(&cfg.output_dir.join("noise.csv"))?;
    writeln!(w, "model,seed,sigma,accuracy")?;
    for &seed in &cfg.seeds {
        let split = default_split(cfg, g, seed)?;
        let all = split.all();
        for &kind in &cfg.models {
            let model = cache.get_or_train(kind, seed, &split, g, &training)?.as_world_model();
            for (sigma, acc) in sweep_robustness(model, &all, &cfg.noise_sigmas, cfg.noise_repeats, seed)? {
                writeln!(w, "{kind},{seed},{sigma},{acc}")?;
                metrics
                    .table_mut(Experiment::Noise.name(), kind.name())
                    .record(&format!("sigma_{sigma}"), seed, acc);
            }
        }
    }
    Ok(())
}

fn kernel(cfg: &ExperimentConfig, g: &GridSpec, cache: &mut ModelCache, metrics: &mut RunMetrics) -> Result<()> {
    let training = cfg.training();
    let mut w = create(&cfg.output_dir.join("kernel.csv"))?;
    writeln!(w, "seed,action,k,similarity")?;
    let states: Vec<usize> = (0..g.num_states()).collect();
    for &seed in &cfg.seeds {
        let split = default_split(cfg, g, seed)?;
        let TrainedModel::Fhrr(m, _) = cache.get_or_train(ModelKind::Fhrr, seed, &split, g, &training)? else {
            unreachable!("fhrr kind trains an FHRR model")
        };
        let report = kernel_profile_report(&m.states, &states, cfg.kernel_k_max, g)?;
        write_kernel_csv(&mut w, seed, &report)?;
        let t = metrics.table_mut(Experiment::Kernel.name(), ModelKind::Fhrr.name());
        for a in Action::ALL {
            t.record(&format!("peak_{}", a.name()), seed, report.peak(a).unwrap_or(0) as f64);
        }
        t.record("up_down_asymmetry", seed, report.mean_abs_difference(Action::Up, Action::Down));
        t.record("left_right_asymmetry", seed, report.mean_abs_difference(Action::Left, Action::Right));
    }
    Ok(())
}

fn export(cfg: &ExperimentConfig, g: &GridSpec, cache: &mut ModelCache) -> Result<()> {
    let training = cfg.training();
    for &seed in &cfg.seeds {
        let split = default_split(cfg, g, seed)?;
        for &kind in &cfg.models {
            let m = cache.get_or_train(kind, seed, &split, g, &training)?;
            let path = cfg.output_dir.join("embeddings").join(format!("{kind}_seed{seed}.csv"));
            export_embeddings(create(&path)?, m, g)?;
        }
    }
    Ok(())
}

fn bench(cfg: &ExperimentConfig, g: &GridSpec, cache: &mut ModelCache, metrics: &mut RunMetrics) -> Result<()> {
    let training = cfg.training();
    let seed = cfg.seeds[0];
    let split = default_split(cfg, g, seed)?;
    for &kind in &cfg.models {
        cache.get_or_train(kind, seed, &split, g, &training)?;
    }
    let key = |k: ModelKind| (k, seed, split.ratio.to_bits());
    let models: Vec<&dyn WorldModel> = cfg.models.iter().map(|&k| cache.models[&key(k)].as_world_model()).collect();
    let timings = benchmark_inference(&models, cfg.bench_repetitions)?;
    // timings vary between runs, so only the parameter counts enter metrics.json
    let mut w = create(&cfg.output_dir.join("bench.csv"))?;
    writeln!(w, "model,parameters,predict_ms,predict_cleanup_ms")?;
    for t in &timings {
        writeln!(w, "{},{},{},{}", t.kind, t.parameters, t.predict_ms, t.predict_cleanup_ms)?;
        metrics
            .table_mut(Experiment::Bench.name(), t.kind.name())
            .record("parameters", seed, t.parameters as f64);
    }
    Ok(())
}

/// Runs the configured experiments in order and writes `metrics.json`,
/// the figure CSVs, checkpoints and `manifest.json` under the output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunMetrics> {
    cfg.validate()?;
    let g = cfg.grid()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let config_text = cfg.to_toml_string();
    fs::write(cfg.output_dir.join("config.toml"), &config_text)?;
    let mut cache = ModelCache::default();
    let mut metrics = RunMetrics::default();
    for &e in &cfg.experiments {
        match e {
            Experiment::Train => train_all(cfg, &g, &mut cache)?,
            Experiment::Eval => one_step_all(cfg, &g, &mut cache, &mut metrics, e)?,
            Experiment::Rollout => rollouts_all(cfg, &g, &mut cache, &mut metrics, e)?,
            Experiment::Table1 => {
                train_all(cfg, &g, &mut cache)?;
                one_step_all(cfg, &g, &mut cache, &mut metrics, e)?;
                rollouts_all(cfg, &g, &mut cache, &mut metrics, e)?;
            }
            Experiment::Zeroshot => zeroshot(cfg, &g, &mut metrics)?,
            Experiment::Noise => noise(cfg, &g, &mut cache, &mut metrics)?,
            Experiment::Kernel => kernel(cfg, &g, &mut cache, &mut metrics)?,
            Experiment::Export => export(cfg, &g, &mut cache)?,
            Experiment::Bench => bench(cfg, &g, &mut cache, &mut metrics)?,
        }
    }
    metrics.write_json(&cfg.output_dir.join("metrics.json"))?;
    Manifest::new(config_text, cfg.seeds.clone()).write(&cfg.output_dir.join("manifest.json"))?;
    Ok(metrics)
}

/// FHRR model rebuilt from a saved checkpoint.
pub fn load_fhrr(path: &Path) -> Result<FhrrModel> {
    let (s, a, _) = crate::encoder::load_checkpoint(path)?;
    FhrrModel::new(s, a)
}
