//! Flat key-value experiment configuration (TOML syntax, `#` comments).
//!
//! Every key is optional; omitted keys take the defaults below. Unknown keys,
//! nested tables and ill-typed values are rejected with an error naming the key.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::model::{ModelKind, ModelTraining};
use crate::baseline_mlp::MlpTrainConfig;
use crate::error::{HoloError, Result};
use crate::gridworld::GridSpec;
use crate::training::{LossWeights, OptimizerKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Train,
    Eval,
    Rollout,
    Table1,
    Zeroshot,
    Noise,
    Kernel,
    Export,
    Bench,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Train,
        Experiment::Eval,
        Experiment::Rollout,
        Experiment::Table1,
        Experiment::Zeroshot,
        Experiment::Noise,
        Experiment::Kernel,
        Experiment::Export,
        Experiment::Bench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Train => "train",
            Experiment::Eval => "eval",
            Experiment::Rollout => "rollout",
            Experiment::Table1 => "table1",
            Experiment::Zeroshot => "zeroshot",
            Experiment::Noise => "noise",
            Experiment::Kernel => "kernel",
            Experiment::Export => "export",
            Experiment::Bench => "bench",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub models: Vec<ModelKind>,
    pub dim: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub zero_shot_ratio: f64,
    pub epochs: usize,
    pub lr_vsa: f64,
    pub lr_mlp: f64,
    pub grad_clip: f64,
    pub w_bind: f64,
    pub w_inv: f64,
    pub w_ortho: f64,
    /// 0 trains full-batch.
    pub vsa_batch_size: usize,
    /// 0 trains full-batch.
    pub mlp_batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seeds: Vec<u64>,
    pub horizons: Vec<usize>,
    /// 0 disables cleanup in the "+ clean" rows.
    pub cleanup_period: usize,
    pub noise_sigmas: Vec<f64>,
    /// Noisy passes over the transition set per sigma.
    pub noise_repeats: usize,
    pub zero_shot_ratios: Vec<f64>,
    pub sweep_horizon: usize,
    pub sweep_models: Vec<ModelKind>,
    pub trials: usize,
    pub kernel_k_max: usize,
    pub bench_repetitions: usize,
    pub output_dir: PathBuf,
    pub experiments: Vec<Experiment>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Fhrr, ModelKind::MlpS, ModelKind::MlpM, ModelKind::MlpL],
            dim: 512,
            grid_rows: 10,
            grid_cols: 10,
            zero_shot_ratio: 0.2,
            epochs: 500,
            lr_vsa: 0.007,
            lr_mlp: 0.0005,
            grad_clip: 1.0,
            w_bind: 2.0,
            w_inv: 0.5,
            w_ortho: 0.05,
            vsa_batch_size: 0,
            mlp_batch_size: 32,
            optimizer: OptimizerKind::Adam,
            seeds: vec![0, 1, 2],
            horizons: vec![5, 20, 100],
            cleanup_period: 2,
            noise_sigmas: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0],
            noise_repeats: 5,
            zero_shot_ratios: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            sweep_horizon: 20,
            sweep_models: vec![ModelKind::Fhrr, ModelKind::MlpM],
            trials: 500,
            kernel_k_max: 9,
            bench_repetitions: 1000,
            output_dir: PathBuf::from("results"),
            experiments: vec![Experiment::Table1],
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> HoloError {
    HoloError::Config {
        key: key.to_string(),
        message: message.into(),
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, format!("expected a number, got {}", v.type_str()))),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(bad(key, format!("expected a non-negative integer, got {v}"))),
    }
}

fn as_str<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(key, format!("expected a string, got {}", v.type_str())))
}

fn as_list<T>(key: &str, v: &toml::Value, item: impl Fn(&str, &toml::Value) -> Result<T>) -> Result<Vec<T>> {
    let arr = v
        .as_array()
        .ok_or_else(|| bad(key, format!("expected a list, got {}", v.type_str())))?;
    arr.iter().map(|x| item(key, x)).collect()
}

fn as_model(key: &str, v: &toml::Value) -> Result<ModelKind> {
    as_str(key, v)?.parse().map_err(|e: HoloError| bad(key, e.to_string()))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let key = e.message().split('`').nth(1).unwrap_or("<syntax>").to_string();
            HoloError::Config {
                key,
                message: e.to_string(),
            }
        })?;
        let mut c = Self::default();
        for (key, v) in &table {
            let k = key.as_str();
            if v.is_table() {
                return Err(bad(k, "nested tables are not allowed; keys must be flat"));
            }
            match k {
                "models" => c.models = as_list(k, v, as_model)?,
                "sweep_models" => c.sweep_models = as_list(k, v, as_model)?,
                "dim" => c.dim = as_usize(k, v)?,
                "grid_rows" => c.grid_rows = as_usize(k, v)?,
                "grid_cols" => c.grid_cols = as_usize(k, v)?,
                "zero_shot_ratio" => c.zero_shot_ratio = as_f64(k, v)?,
                "epochs" => c.epochs = as_usize(k, v)?,
                "lr_vsa" => c.lr_vsa = as_f64(k, v)?,
                "lr_mlp" => c.lr_mlp = as_f64(k, v)?,
                "grad_clip" => c.grad_clip = as_f64(k, v)?,
                "w_bind" => c.w_bind = as_f64(k, v)?,
                "w_inv" => c.w_inv = as_f64(k, v)?,
                "w_ortho" => c.w_ortho = as_f64(k, v)?,
                "vsa_batch_size" => c.vsa_batch_size = as_usize(k, v)?,
                "mlp_batch_size" => c.mlp_batch_size = as_usize(k, v)?,
                "optimizer" => {
                    c.optimizer = match as_str(k, v)? {
                        "adam" => OptimizerKind::Adam,
                        "sgd" => OptimizerKind::Sgd,
                        other => return Err(bad(k, format!("unknown optimizer `{other}` (expected adam or sgd)"))),
                    }
                }
                "seeds" => c.seeds = as_list(k, v, |k, x| as_usize(k, x).map(|s| s as u64))?,
                "horizons" => c.horizons = as_list(k, v, as_usize)?,
                "cleanup_period" => c.cleanup_period = as_usize(k, v)?,
                "noise_sigmas" => c.noise_sigmas = as_list(k, v, as_f64)?,
                "noise_repeats" => c.noise_repeats = as_usize(k, v)?,
                "zero_shot_ratios" => c.zero_shot_ratios = as_list(k, v, as_f64)?,
                "sweep_horizon" => c.sweep_horizon = as_usize(k, v)?,
                "trials" => c.trials = as_usize(k, v)?,
                "kernel_k_max" => c.kernel_k_max = as_usize(k, v)?,
                "bench_repetitions" => c.bench_repetitions = as_usize(k, v)?,
                "output_dir" => c.output_dir = PathBuf::from(as_str(k, v)?),
                "experiments" => {
                    c.experiments = as_list(k, v, |k, x| {
                        let s = as_str(k, x)?;
                        Experiment::parse(s).ok_or_else(|| bad(k, format!("unknown experiment `{s}`")))
                    })?
                }
                _ => return Err(bad(k, "unknown key")),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Flat TOML rendering that parses back to an identical config.
    pub fn to_toml_string(&self) -> String {
        let list = |v: Vec<String>| format!("[{}]", v.join(", "));
        let quoted = |s: &str| format!("\"{s}\"");
        let models = |m: &[ModelKind]| list(m.iter().map(|k| quoted(k.name())).collect());
        let floats = |v: &[f64]| list(v.iter().map(|x| format!("{x:?}")).collect());
        let ints = |v: Vec<String>| list(v);
        let mut lines = vec![
            format!("models = {}", models(&self.models)),
            format!("dim = {}", self.dim),
            format!("grid_rows = {}", self.grid_rows),
            format!("grid_cols = {}", self.grid_cols),
            format!("zero_shot_ratio = {:?}", self.zero_shot_ratio),
            format!("epochs = {}", self.epochs),
            format!("lr_vsa = {:?}", self.lr_vsa),
            format!("lr_mlp = {:?}", self.lr_mlp),
            format!("grad_clip = {:?}", self.grad_clip),
            format!("w_bind = {:?}", self.w_bind),
            format!("w_inv = {:?}", self.w_inv),
            format!("w_ortho = {:?}", self.w_ortho),
            format!("vsa_batch_size = {}", self.vsa_batch_size),
            format!("mlp_batch_size = {}", self.mlp_batch_size),
            format!(
                "optimizer = {}",
                quoted(match self.optimizer {
                    OptimizerKind::Adam => "adam",
                    OptimizerKind::Sgd => "sgd",
                })
            ),
            format!("seeds = {}", ints(self.seeds.iter().map(u64::to_string).collect())),
            format!("horizons = {}", ints(self.horizons.iter().map(usize::to_string).collect())),
            format!("cleanup_period = {}", self.cleanup_period),
            format!("noise_sigmas = {}", floats(&self.noise_sigmas)),
            format!("noise_repeats = {}", self.noise_repeats),
            format!("zero_shot_ratios = {}", floats(&self.zero_shot_ratios)),
            format!("sweep_horizon = {}", self.sweep_horizon),
            format!("sweep_models = {}", models(&self.sweep_models)),
            format!("trials = {}", self.trials),
            format!("kernel_k_max = {}", self.kernel_k_max),
            format!("bench_repetitions = {}", self.bench_repetitions),
            format!("output_dir = {}", toml::Value::String(self.output_dir.display().to_string())),
            format!("experiments = {}", list(self.experiments.iter().map(|e| quoted(e.name())).collect())),
        ];
        lines.push(String::new());
        lines.join("\n")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("grid_rows", self.grid_rows),
            ("grid_cols", self.grid_cols),
            ("epochs", self.epochs),
            ("trials", self.trials),
            ("sweep_horizon", self.sweep_horizon),
            ("noise_repeats", self.noise_repeats),
            ("bench_repetitions", self.bench_repetitions),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(bad(k, "must be at least 1"));
            }
        }
        if self.models.is_empty() {
            return Err(bad("models", "must list at least one model"));
        }
        if self.seeds.is_empty() {
            return Err(bad("seeds", "must list at least one seed"));
        }
        if self.horizons.contains(&0) {
            return Err(bad("horizons", "horizon 0 is not allowed"));
        }
        if !(0.0..1.0).contains(&self.zero_shot_ratio) {
            return Err(bad("zero_shot_ratio", "must lie in [0, 1)"));
        }
        if let Some(r) = self.zero_shot_ratios.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(bad("zero_shot_ratios", format!("ratio {r} outside [0, 1)")));
        }
        if let Some(s) = self.noise_sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(bad("noise_sigmas", format!("sigma {s} must be finite and >= 0")));
        }
        for (k, v) in [("lr_vsa", self.lr_vsa), ("lr_mlp", self.lr_mlp), ("grad_clip", self.grad_clip)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(k, "must be finite and > 0"));
            }
        }
        for (k, v) in [("w_bind", self.w_bind), ("w_inv", self.w_inv), ("w_ortho", self.w_ortho)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(k, "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid_rows, self.grid_cols)
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            w_bind: self.w_bind,
            w_inv: self.w_inv,
            w_ortho: self.w_ortho,
        }
    }

    pub fn training(&self) -> ModelTraining {
        let batch = |b: usize| (b > 0).then_some(b);
        ModelTraining {
            vsa: TrainConfig {
                dim: self.dim,
                epochs: self.epochs,
                learning_rate: self.lr_vsa,
                grad_clip: self.grad_clip,
                batch_size: batch(self.vsa_batch_size),
                seed: 0,
                optimizer: self.optimizer,
            },
            weights: self.weights(),
            mlp: MlpTrainConfig {
                epochs: self.epochs,
                learning_rate: self.lr_mlp,
                grad_clip: self.grad_clip,
                batch_size: batch(self.mlp_batch_size),
                seed: 0,
            },
        }
    }
}
