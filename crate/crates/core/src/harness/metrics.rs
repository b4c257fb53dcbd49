//! Per-seed metric tables and the run manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HoloError, Result};

/// Named scalar metrics, each with one value per seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    values: BTreeMap<String, BTreeMap<u64, f64>>,
}

impl MetricsTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, metric: &str, seed: u64, value: f64) {
        self.values.entry(metric.to_string()).or_default().insert(seed, value);
    }

    pub fn per_seed(&self, metric: &str) -> Option<&BTreeMap<u64, f64>> {
        self.values.get(metric)
    }

    pub fn get(&self, metric: &str, seed: u64) -> Option<f64> {
        self.values.get(metric)?.get(&seed).copied()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        let v = self.values.get(metric)?;
        (!v.is_empty()).then(|| v.values().sum::<f64>() / v.len() as f64)
    }

    pub fn metrics(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn merge(&mut self, other: MetricsTable) {
        for (m, seeds) in other.values {
            self.values.entry(m).or_default().extend(seeds);
        }
    }

    /// `{"seeds": {seed: {metric: v}}, "mean": {metric: v}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut seeds: BTreeMap<String, BTreeMap<&str, f64>> = BTreeMap::new();
        for (m, per) in &self.values {
            for (s, v) in per {
                seeds.entry(s.to_string()).or_default().insert(m, *v);
            }
        }
        let mean: BTreeMap<&str, f64> = self.metrics().filter_map(|m| Some((m, self.mean(m)?))).collect();
        serde_json::json!({ "seeds": seeds, "mean": mean })
    }
}

/// All results of a run, nested experiment -> model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub experiments: BTreeMap<String, BTreeMap<String, MetricsTable>>,
}

impl RunMetrics {
    pub fn table_mut(&mut self, experiment: &str, model: &str) -> &mut MetricsTable {
        self.experiments
            .entry(experiment.to_string())
            .or_default()
            .entry(model.to_string())
            .or_default()
    }

    pub fn table(&self, experiment: &str, model: &str) -> Option<&MetricsTable> {
        self.experiments.get(experiment)?.get(model)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: BTreeMap<&str, BTreeMap<&str, serde_json::Value>> = self
            .experiments
            .iter()
            .map(|(e, models)| (e.as_str(), models.iter().map(|(m, t)| (m.as_str(), t.to_json())).collect()))
            .collect();
        serde_json::to_value(map).expect("string-keyed maps serialize")
    }

    /// Deterministic pretty JSON; contains no timestamps.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seeds: Vec<u64>,
    pub config: String,
    /// Seconds since the Unix epoch when the run finished.
    pub finished_at: u64,
}

/// `git describe`-style string: the crate version, plus the repository's
/// description when `git` is available.
pub fn version_string() -> String {
    let pkg = concat!("v", env!("CARGO_PKG_VERSION"));
    let described = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    match described {
        Some(d) => format!("{pkg}-g{d}"),
        None => pkg.to_string(),
    }
}

impl Manifest {
    pub fn new(config_text: String, seeds: Vec<u64>) -> Self {
        let finished_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            version: version_string(),
            seeds,
            config: config_text,
            finished_at,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(HoloError::from)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_over_seeds() {
        let mut t = MetricsTable::new();
        t.record("acc", 0, 90.0);
        t.record("acc", 1, 96.0);
        t.record("acc", 2, 93.0);
        assert_eq!(t.mean("acc"), Some(93.0));
        assert_eq!(t.get("acc", 1), Some(96.0));
        assert_eq!(t.mean("missing"), None);
    }

    #[test]
    fn json_is_nested_and_ordered() {
        let mut r = RunMetrics::default();
        r.table_mut("table1", "mlp-m").record("acc", 1, 2.0);
        r.table_mut("table1", "fhrr").record("acc", 0, 1.0);
        let j = r.to_json();
        assert_eq!(j["table1"]["fhrr"]["seeds"]["0"]["acc"], 1.0);
        assert_eq!(j["table1"]["mlp-m"]["mean"]["acc"], 2.0);
        let text = serde_json::to_string(&j).unwrap();
        assert!(text.find("fhrr").unwrap() < text.find("mlp-m").unwrap());
    }

    #[test]
    fn version_string_starts_with_crate_version() {
        assert!(version_string().starts_with(concat!("v", env!("CARGO_PKG_VERSION"))));
    }
}
