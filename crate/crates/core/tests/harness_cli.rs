mod common;

use std::path::Path;
use std::process::Command;

use holoworld::dynamics::{CleanupPolicy, RolloutResult};
use holoworld::encoder::{build_codebook, load_checkpoint, save_checkpoint, CheckpointMeta};
use holoworld::gridworld::{enumerate_transitions, zero_shot_split, Action, GridSpec, Trajectory, Transition};
use holoworld::harness::experiments::{export_fhrr_embeddings, trial_trajectories};
use holoworld::harness::model::StepOutcome;
use holoworld::harness::{
    benchmark_inference, eval_one_step, eval_rollouts, kernel_profile_report, sweep_robustness, sweep_zero_shot,
    ExperimentConfig, ModelKind, WorldModel,
};
use holoworld::hypervector::{similarity, PhaseVector};
use holoworld::Result;
use rand::RngCore;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_holoworld"))
}

/// Answers from the environment itself.
struct Lookup(GridSpec);

impl WorldModel for Lookup {
    fn kind(&self) -> ModelKind {
        ModelKind::Fhrr
    }
    fn parameter_count(&self) -> usize {
        0
    }
    fn num_states(&self) -> usize {
        self.0.num_states()
    }
    fn one_step(&self, t: &Transition) -> Result<StepOutcome> {
        Ok(StepOutcome { decoded: t.s_next, similarity: 1.0 })
    }
    fn one_step_noisy(&self, t: &Transition, _: f64, _: &mut dyn RngCore) -> Result<usize> {
        Ok(t.s_next)
    }
    fn rollout(&self, traj: &Trajectory, _: CleanupPolicy) -> Result<RolloutResult> {
        let n = traj.actions.len();
        Ok(RolloutResult {
            decoded_states: traj.states[1..].to_vec(),
            similarities: vec![1.0; n],
            steps_correct: n,
            final_correct: true,
        })
    }
    fn bench_step(&self, s: usize, _: Action, _: bool) -> Result<usize> {
        Ok(s)
    }
}

#[test]
fn perfect_lookup_scores_full_marks() {
    let g = GridSpec::default();
    let m = eval_one_step(&Lookup(g), &enumerate_transitions(&g)).unwrap();
    assert_eq!((m.accuracy, m.cosine), (100.0, 100.0));
    let r = eval_rollouts(&Lookup(g), &g, &[5], Some(2), 10, 0).unwrap();
    assert!(r.iter().all(|x| x.accuracy == 100.0));
    assert!(eval_one_step(&Lookup(g), &[]).is_err());
    assert!(eval_rollouts(&Lookup(g), &g, &[0], None, 10, 0).is_err());
}

#[test]
fn trials_are_shared_across_models() {
    let g = GridSpec::default();
    let a = trial_trajectories(&g, 20, 50, 7).unwrap();
    assert_eq!(a, trial_trajectories(&g, 20, 50, 7).unwrap());
    assert_ne!(a, trial_trajectories(&g, 20, 50, 8).unwrap());
}

#[test]
fn horizon_one_matches_one_step_on_sampled_pairs() {
    let t = common::fhrr(0);
    let g = GridSpec::default();
    let trajs = trial_trajectories(&g, 1, 500, 3).unwrap();
    let pairs: Vec<Transition> =
        trajs.iter().map(|x| Transition { s: x.start, a: x.actions[0], s_next: x.states[1] }).collect();
    let one = eval_one_step(&t.model, &pairs).unwrap().accuracy;
    let roll = eval_rollouts(&t.model, &g, &[1], None, 500, 3).unwrap()[0].accuracy;
    assert_eq!(one, roll);
}

#[test]
fn zero_noise_matches_clean_evaluation() {
    let t = common::fhrr(1);
    let all = t.split.all();
    let clean = eval_one_step(&t.model, &all).unwrap().accuracy;
    let sweep = sweep_robustness(&t.model, &all, &[0.0, 1.0], 2, 0).unwrap();
    assert_eq!(sweep[0], (0.0, clean));
    assert!(sweep_robustness(&t.model, &all, &[-1.0], 1, 0).is_err());
}

#[test]
fn ratio_zero_sweep_equals_full_data_training() {
    let g = GridSpec::new(4, 4).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.dim = 64;
    cfg.epochs = 30;
    let training = cfg.training();
    let pts = sweep_zero_shot(&[ModelKind::Fhrr], &[0.0], 6, 40, &[5], 2, &g, &training).unwrap();
    let split = zero_shot_split(&enumerate_transitions(&g), 0.0, 5).unwrap();
    let m = holoworld::harness::train_model(ModelKind::Fhrr, &split, &g, &training, 5).unwrap();
    let r = eval_rollouts(m.as_world_model(), &g, &[6], Some(2), 40, 5).unwrap();
    assert_eq!(pts[0].accuracy, r[0].accuracy);
    assert_eq!(pts[0].accuracy_clean, r[1].accuracy);
}

#[test]
fn kernel_report_peaks_at_zero() {
    let t = common::fhrr(2);
    let g = GridSpec::default();
    let states: Vec<usize> = (0..100).collect();
    let rep = kernel_profile_report(&t.model.states, &states, 9, &g).unwrap();
    for a in Action::ALL {
        assert_eq!(rep.peak(a), Some(0), "{a:?}");
        let zero = rep.curve(a).iter().find(|(k, _)| *k == 0).unwrap().1;
        assert!((zero - 1.0).abs() < 1e-12);
    }
    let asym = rep.mean_abs_difference(Action::Up, Action::Down);
    assert!(asym < 0.05, "{asym}");
}

#[test]
fn exported_phases_round_trip() {
    let t = common::fhrr(0);
    let g = GridSpec::default();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("fhrr.hwm");
    let meta = CheckpointMeta { seed: 0, epoch: 500, w_bind: 2.0, w_inv: 0.5, w_ortho: 0.05 };
    save_checkpoint(&ckpt, &t.model.states, &t.model.actions, &meta).unwrap();
    let (loaded, _, _) = load_checkpoint(&ckpt).unwrap();

    let mut buf = Vec::new();
    export_fhrr_embeddings(&mut buf, &t.model.states, &g).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&header[..4], &["index", "row", "col", "p0"]);
    assert_eq!(header.len(), 3 + 512);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 100);

    let cb = build_codebook(&t.model.states);
    let reencoded: Vec<_> = rows
        .iter()
        .enumerate()
        .map(|(s, line)| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[0].parse::<usize>().unwrap(), s);
            assert_eq!((f[1].parse().unwrap(), f[2].parse().unwrap()), g.coords(s).unwrap());
            let phases: Vec<f64> = f[3..].iter().map(|x| x.parse().unwrap()).collect();
            let from_ckpt = loaded.encode_phases(s).unwrap();
            assert!(phases.iter().zip(from_ckpt.phases()).all(|(a, b)| a.to_bits() == b.to_bits()));
            PhaseVector::new(phases).unwrap().to_complex()
        })
        .collect();
    for i in (0..100).step_by(7) {
        for j in (0..100).step_by(3) {
            let want = similarity(cb.row(i).unwrap(), cb.row(j).unwrap()).unwrap();
            let got = similarity(&reencoded[i], &reencoded[j]).unwrap();
            assert!((want - got).abs() < 1e-9);
        }
    }
}

#[test]
fn cleanup_costs_time_and_fhrr_is_fast() {
    let t = common::fhrr(0);
    let g = GridSpec::new(10, 10).unwrap();
    let split = zero_shot_split(&enumerate_transitions(&g), 0.2, 0).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.epochs = 2;
    let mlp = holoworld::harness::train_model(ModelKind::MlpS, &split, &g, &cfg.training(), 0).unwrap();
    let timings = benchmark_inference(&[&t.model, mlp.as_world_model()], 2000).unwrap();
    for x in &timings {
        assert!(x.predict_cleanup_ms > x.predict_ms, "{x:?}");
    }
    assert!(timings[0].predict_ms < 1.0, "{:?}", timings[0]);
    assert_eq!(timings[0].parameters, 53_248);
    assert_eq!(timings[1].parameters, 41_600);
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn invalid_config_exits_nonzero_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    for (text, key) in [
        ("epochz = 3\n", "epochz"),
        ("trials = \"many\"\n", "trials"),
        ("seeds = []\n", "seeds"),
        ("[nested]\nx = 1\n", "nested"),
        ("models = [\"fhrr\", \"cnn\"]\n", "models"),
    ] {
        let p = write(dir.path(), "bad.toml", text);
        let out = bin().args(["run", "--config"]).arg(&p).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{text}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(&format!("`{key}`")), "{text}: {err}");
    }
    let out = bin().args(["eval", "--config", "/definitely/missing.toml"]).output().unwrap();
    assert!(!out.status.success());
}

const SMALL: &str = r#"
# tiny end-to-end run
models = ["fhrr", "hrr", "mlp-s"]
dim = 64
grid_rows = 5
grid_cols = 5
epochs = 15
seeds = [0, 1]
horizons = [3]
trials = 30
noise_sigmas = [0.0, 1.0]
noise_repeats = 1
zero_shot_ratios = [0.0, 0.5]
sweep_horizon = 4
sweep_models = ["fhrr", "mlp-s"]
kernel_k_max = 4
bench_repetitions = 32
experiments = ["table1", "zeroshot", "noise", "kernel", "export", "bench"]
"#;

fn run_small(dir: &Path, out: &str, threads: Option<&str>) -> Vec<u8> {
    let cfg = write(dir, "small.toml", SMALL);
    let mut cmd = bin();
    cmd.args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.join(out));
    match threads {
        Some(t) => cmd.env("HOLOWORLD_THREADS", t),
        None => cmd.env_remove("HOLOWORLD_THREADS"),
    };
    let o = cmd.output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(dir.join(out).join("metrics.json")).unwrap()
}

#[test]
fn end_to_end_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_small(dir.path(), "a", None);
    let b = run_small(dir.path(), "b", Some("3"));
    assert_eq!(a, b, "metrics.json differs between runs");

    let out = dir.path().join("a");
    for f in [
        "config.toml",
        "manifest.json",
        "zeroshot.csv",
        "noise.csv",
        "kernel.csv",
        "bench.csv",
        "checkpoints/fhrr_seed0.hwm",
        "checkpoints/fhrr_seed0.hwm.json",
        "checkpoints/mlp-s_seed1.hwmb",
        "losses/hrr_seed0.csv",
        "rollouts/fhrr_seed1_rollout_3_clean.csv",
        "embeddings/mlp-s_seed0.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let metrics: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let acc = &metrics["table1"]["fhrr"]["seeds"]["1"]["accuracy"];
    assert!(acc.is_number());
    // 25 states instead of 100: 75 fewer 64-wide table rows
    assert_eq!(metrics["bench"]["mlp-s"]["mean"]["parameters"], (41_600 - 75 * 64) as f64);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1]));
    assert!(manifest["version"].as_str().unwrap().starts_with('v'));
    let copied = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert_eq!(
        ExperimentConfig::from_toml_str(&copied).unwrap(),
        ExperimentConfig::from_toml_str(SMALL).map(|mut c| {
            c.output_dir = out.clone();
            c
        })
        .unwrap()
    );
}

#[test]
fn subcommands_run_single_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "dim = 32\ngrid_rows = 3\ngrid_cols = 3\nepochs = 5\ntrials = 5\nhorizons = [2]\n");
    let out = dir.path().join("o");
    let o = bin()
        .args(["eval", "--models", "fhrr,mlp-s", "--seeds", "4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("zero_shot_accuracy"), "{stdout}");
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert!(m["eval"]["mlp-s"]["seeds"]["4"]["accuracy"].is_number());
    assert!(m.get("table1").is_none());
}
