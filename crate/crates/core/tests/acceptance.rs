//! Acceptance gate. Trains FHRR and MLP-M on seeds 0, 1 and 2 with the
//! default configuration, then checks every criterion and prints one line
//! per criterion. Exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use holoworld::baseline_mlp::{mlp_loss, MlpConfig, MlpModel, MlpVariant};
use holoworld::dynamics::{cleanup, rollout_embedding, rollout_phase, LatentState};
use holoworld::encoder::{build_codebook, new_encoders, parameter_count, ActionEncoder, Codebook, StateEncoder};
use holoworld::gridworld::{enumerate_transitions, inverse_pairs, zero_shot_split, Action, GridSpec, Transition};
use holoworld::harness::experiments::trial_trajectories;
use holoworld::harness::{
    eval_one_step, eval_rollouts, kernel_profile_report, sweep_robustness, train_model, ExperimentConfig, FhrrModel,
    ModelKind, TrainedModel, WorldModel,
};
use holoworld::hrr_world::HrrModel;
use holoworld::hypervector::{
    bind, inverse, phase_encode, random_phase_vector, similarity, ComplexHV, PhaseDistribution, PhaseMatrix,
    PhaseVector,
};
use holoworld::training::{binding_loss, invertibility_loss, orthogonality_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

const SEEDS: [u64; 3] = [0, 1, 2];
const TRIALS: usize = 500;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("[{}] {id:02} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    let per: Vec<String> = v.iter().map(|x| format!("{x:.2}")).collect();
    format!("mean {:.2} (seeds {})", mean(v), per.join(" / "))
}

struct SeedRun {
    fhrr: FhrrModel,
    mlp: TrainedModel,
    all: Vec<Transition>,
    holdout: Vec<Transition>,
}

fn train_seed(seed: u64, ratio: f64) -> SeedRun {
    let g = GridSpec::default();
    let cfg = ExperimentConfig::default();
    let split = zero_shot_split(&enumerate_transitions(&g), ratio, seed).unwrap();
    let TrainedModel::Fhrr(fhrr, _) = train_model(ModelKind::Fhrr, &split, &g, &cfg.training(), seed).unwrap() else {
        unreachable!()
    };
    let mlp = train_model(ModelKind::MlpM, &split, &g, &cfg.training(), seed).unwrap();
    SeedRun {
        fhrr,
        mlp,
        all: split.all(),
        holdout: split.holdout,
    }
}

fn rollout_acc(m: &dyn WorldModel, horizon: usize, clean: bool, seed: u64) -> f64 {
    let g = GridSpec::default();
    let r = eval_rollouts(m, &g, &[horizon], clean.then_some(2), TRIALS, seed).unwrap();
    r[usize::from(clean)].accuracy
}

fn rel_err(exact: f64, approx: f64) -> f64 {
    let diff = (exact - approx).abs();
    if diff <= 1e-8 {
        0.0
    } else {
        diff / exact.abs().max(approx.abs())
    }
}

fn circ_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn max_circ_dist(a: &PhaseVector, b: &PhaseVector) -> f64 {
    a.phases().iter().zip(b.phases()).map(|(x, y)| circ_dist(*x, *y)).fold(0.0, f64::max)
}

/// Worst error over >= 100 random cases for each algebraic law.
fn algebra_suite() -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let cases = 128;
    let g = GridSpec::new(3, 3).unwrap();
    let batch = enumerate_transitions(&g);
    for i in 0..cases as u64 {
        let d = rng.random_range(1..=256);
        let a = random_phase_vector(d, PhaseDistribution::Uniform, 3 * i).unwrap();
        let b = random_phase_vector(d, PhaseDistribution::Uniform, 3 * i + 1).unwrap();
        let c = random_phase_vector(d, PhaseDistribution::Uniform, 3 * i + 2).unwrap();
        let ab_c = bind(&bind(&a, &b).unwrap(), &c).unwrap();
        let a_bc = bind(&a, &bind(&b, &c).unwrap()).unwrap();
        worst = worst.max(max_circ_dist(&ab_c, &a_bc));
        worst = worst.max(max_circ_dist(&bind(&a, &b).unwrap(), &bind(&b, &a).unwrap()));
        let back = bind(&bind(&a, &b).unwrap(), &inverse(&b)).unwrap();
        worst = worst.max((similarity(&back.to_complex(), &a.to_complex()).unwrap() - 1.0).abs());
        worst = worst.max(max_circ_dist(&bind(&a, &inverse(&a)).unwrap(), &PhaseVector::identity(d)));
        worst = worst.max(bind(&a, &b).unwrap().to_complex().max_modulus_error());
        worst = worst.max(inverse(&a).to_complex().max_modulus_error());

        // adding 2π to one parameter leaves every loss unchanged
        let (s, act) = new_encoders(8, 9, 4, 500 + i).unwrap();
        let idx = rng.random_range(0..8 * 13);
        let (mut s2, mut a2) = (s.clone(), act.clone());
        if idx < 72 {
            s2.theta_mut().as_mut_slice()[idx] += 2.0 * PI;
        } else {
            a2.theta_mut().as_mut_slice()[idx - 72] += 2.0 * PI;
        }
        let all: Vec<usize> = (0..9).collect();
        worst = worst.max((binding_loss(&s, &act, &batch).unwrap().0 - binding_loss(&s2, &a2, &batch).unwrap().0).abs());
        worst = worst.max(
            (invertibility_loss(&act, &inverse_pairs()).unwrap().0 - invertibility_loss(&a2, &inverse_pairs()).unwrap().0)
                .abs(),
        );
        worst = worst.max((orthogonality_loss(&s, &all).unwrap().0 - orthogonality_loss(&s2, &all).unwrap().0).abs());
    }
    (worst, cases)
}

#[derive(Clone, Copy)]
enum Loss {
    Bind,
    Inv,
    Ortho,
}

fn loss_value(l: Loss, s: &StateEncoder, a: &ActionEncoder, batch: &[Transition]) -> f64 {
    match l {
        Loss::Bind => binding_loss(s, a, batch).unwrap().0,
        Loss::Inv => invertibility_loss(a, &inverse_pairs()).unwrap().0,
        Loss::Ortho => orthogonality_loss(s, &(0..s.len()).collect::<Vec<_>>()).unwrap().0,
    }
}

fn loss_grad(l: Loss, s: &StateEncoder, a: &ActionEncoder, batch: &[Transition]) -> Vec<f64> {
    let ns = s.theta().as_slice().len();
    let na = a.theta().as_slice().len();
    match l {
        Loss::Bind => {
            let (_, g) = binding_loss(s, a, batch).unwrap();
            g.theta_s.into_iter().chain(g.theta_a).collect()
        }
        Loss::Inv => vec![0.0; ns].into_iter().chain(invertibility_loss(a, &inverse_pairs()).unwrap().1).collect(),
        Loss::Ortho => orthogonality_loss(s, &(0..s.len()).collect::<Vec<_>>())
            .unwrap()
            .1
            .into_iter()
            .chain(vec![0.0; na])
            .collect(),
    }
}

fn mlp_params(m: &mut MlpModel) -> Vec<&mut f64> {
    let mut v: Vec<&mut f64> = m.state_table.iter_mut().collect();
    v.extend(m.action_table.iter_mut());
    for l in &mut m.layers {
        v.extend(l.w.iter_mut());
        v.extend(l.b.iter_mut());
    }
    v
}

/// Worst relative error and probe count across the three losses (D = 8 and
/// 32) and a one-hidden-layer MLP of width 8.
fn gradient_suite() -> (f64, usize) {
    let h = 1e-5;
    let g = GridSpec::new(3, 3).unwrap();
    let batch = enumerate_transitions(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut min_probes = usize::MAX;
    for d in [8, 32] {
        let (s, a) = new_encoders(d, 9, 4, 40 + d as u64).unwrap();
        let ns = s.theta().as_slice().len();
        let total = ns + a.theta().as_slice().len();
        for l in [Loss::Bind, Loss::Inv, Loss::Ortho] {
            let grad = loss_grad(l, &s, &a, &batch);
            let probes = 60;
            for _ in 0..probes {
                let idx = rng.random_range(0..total);
                let shifted = |delta: f64| {
                    let (mut s2, mut a2) = (s.clone(), a.clone());
                    if idx < ns {
                        s2.theta_mut().as_mut_slice()[idx] += delta;
                    } else {
                        a2.theta_mut().as_mut_slice()[idx - ns] += delta;
                    }
                    loss_value(l, &s2, &a2, &batch)
                };
                worst = worst.max(rel_err(grad[idx], (shifted(h) - shifted(-h)) / (2.0 * h)));
            }
            min_probes = min_probes.min(probes);
        }
    }
    let m = MlpModel::new(MlpConfig::custom(6, 3, 1, 8), 9, 4, 3).unwrap();
    let (_, gr) = mlp_loss(&m, &batch).unwrap();
    let mut analytic: Vec<f64> = gr.state_table.iter().copied().collect();
    analytic.extend(gr.action_table.iter());
    for l in &gr.layers {
        analytic.extend(l.w.iter());
        analytic.extend(l.b.iter());
    }
    let probes = 60;
    for _ in 0..probes {
        let idx = rng.random_range(0..analytic.len());
        let shifted = |delta: f64| {
            let mut p = m.clone();
            *mlp_params(&mut p).into_iter().nth(idx).unwrap() += delta;
            mlp_loss(&p, &batch).unwrap().0
        };
        worst = worst.max(rel_err(analytic[idx], (shifted(h) - shifted(-h)) / (2.0 * h)));
    }
    (worst, min_probes.min(probes))
}

fn rff_errors() -> (f64, f64) {
    // worst absolute error at fixed distances, D = 10^4
    let m = PhaseMatrix::random(10_000, 2, PhaseDistribution::Gaussian, 11).unwrap();
    let sim = |m: &PhaseMatrix, x: &[f64], y: &[f64]| {
        similarity(&phase_encode(x, m).unwrap(), &phase_encode(y, m).unwrap()).unwrap()
    };
    let x = [0.4, -0.1];
    let worst = [0.0f64, 0.5, 1.0, 2.0]
        .iter()
        .map(|&r| {
            let y = [x[0] + r * 0.6, x[1] + r * 0.8];
            (sim(&m, &x, &y) - (-r * r / 2.0f64).exp()).abs()
        })
        .fold(0.0, f64::max);
    // mean error over 100 probe pairs, averaged over 4 projection draws
    let mean_err = |d: usize, base: u64| {
        (0..4)
            .map(|k| {
                let m = PhaseMatrix::random(d, 2, PhaseDistribution::Gaussian, base + k).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(99);
                (0..100)
                    .map(|_| {
                        let x: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                        let y: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                        let sq = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                        (sim(&m, &x, &y) - (-sq / 2.0).exp()).abs()
                    })
                    .sum::<f64>()
                    / 100.0
            })
            .sum::<f64>()
            / 4.0
    };
    (worst, mean_err(40_000, 300) / mean_err(10_000, 200))
}

fn rollout_equivalence(fhrr: &FhrrModel) -> f64 {
    let g = GridSpec::default();
    let trajs = trial_trajectories(&g, 100, 100, 4242).unwrap();
    let mut worst: f64 = 0.0;
    for t in &trajs {
        let theta0 = fhrr.states.encode_phases(t.start).unwrap();
        let phases: Vec<PhaseVector> = t.actions.iter().map(|a| fhrr.actions.encode_phases(a.index()).unwrap()).collect();
        let hvs: Vec<ComplexHV> = t.actions.iter().map(|a| fhrr.actions.encode(a.index()).unwrap()).collect();
        let fast = rollout_phase(&theta0, &phases).unwrap();
        let slow = rollout_embedding(&LatentState::clean(theta0.to_complex()), &hvs).unwrap();
        worst = worst.max(max_circ_dist(&fast, &slow.last().unwrap().hv.to_phases()));
    }
    worst
}

fn cleanup_error_rate(d: usize, sigma: f64, trials: usize) -> f64 {
    let (s, _) = new_encoders(d, 100, 4, 30 + d as u64).unwrap();
    let cb = build_codebook(&s);
    let n = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
    let errors = (0..trials)
        .filter(|&t| {
            let p: Vec<f64> = s.encode_phases(t % 100).unwrap().phases().iter().map(|x| x + n.sample(&mut rng)).collect();
            let z = LatentState::from(PhaseVector::new(p).unwrap().to_complex());
            cleanup(&z, &cb).unwrap().0 != t % 100
        })
        .count();
    errors as f64 / trials as f64
}

fn cleanup_suite(fhrr: &FhrrModel) -> (bool, f64, f64, bool) {
    let mut idempotent = true;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = Normal::new(0.0, 1.0).unwrap();
    for t in 0..200 {
        let mut z = fhrr.codebook.row(t % 100).unwrap().clone();
        let p: Vec<f64> = z.to_phases().phases().iter().map(|x| x + n.sample(&mut rng)).collect();
        z = PhaseVector::new(p).unwrap().to_complex();
        let (i, once) = cleanup(&LatentState::from(z), &fhrr.codebook).unwrap();
        let (j, twice) = cleanup(&once, &fhrr.codebook).unwrap();
        idempotent &= i == j && once.hv == twice.hv;
    }
    let e512 = cleanup_error_rate(512, 2.2, 10_000);
    let e2048 = cleanup_error_rate(2048, 2.2, 10_000);
    let row = fhrr.states.encode(7).unwrap();
    let dup = Codebook::from_rows(vec![fhrr.states.encode(3).unwrap(), row.clone(), row.clone(), row.clone()]).unwrap();
    let ties = (0..20).all(|_| cleanup(&LatentState::clean(row.clone()), &dup).unwrap().0 == 1);
    (idempotent, e512, e2048, ties)
}

fn environment_oracle() -> (bool, bool) {
    let g = GridSpec::default();
    let mut got: Vec<(usize, usize, usize)> =
        enumerate_transitions(&g).iter().map(|t| (t.s, t.a.index(), t.s_next)).collect();
    got.sort();
    let mut want = Vec::new();
    for r in 0..10i64 {
        for c in 0..10i64 {
            for (a, (dr, dc)) in [(-1, 0), (1, 0), (0, -1), (0, 1)].into_iter().enumerate() {
                let (nr, nc) = (r + dr, c + dc);
                let next = if (0..10).contains(&nr) && (0..10).contains(&nc) { nr * 10 + nc } else { r * 10 + c };
                want.push(((r * 10 + c) as usize, a, next as usize));
            }
        }
    }
    want.sort();
    let env_ok = got.len() == 400 && got == want;
    let ts = enumerate_transitions(&g);
    let mut split_ok = true;
    for (i, ratio) in [0.0, 0.1, 0.2, 0.5, 0.9].into_iter().enumerate() {
        for seed in 0..5 {
            let sp = zero_shot_split(&ts, ratio, seed * 10 + i as u64).unwrap();
            let mut keys: Vec<(usize, usize)> =
                sp.train.iter().chain(&sp.holdout).map(|t| (t.s, t.a.index())).collect();
            keys.sort();
            keys.dedup();
            split_ok &= keys.len() == 400
                && sp.train.len() + sp.holdout.len() == 400
                && sp.holdout.len() == (ratio * 400.0f64).round() as usize;
        }
    }
    (env_ok, split_ok)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut rep = Report { failures: 0 };

    let runs: Vec<SeedRun> = SEEDS.iter().map(|&s| train_seed(s, 0.2)).collect();
    let per = |f: &dyn Fn(&SeedRun, u64) -> f64| -> Vec<f64> { runs.iter().zip(SEEDS).map(|(r, s)| f(r, s)).collect() };

    let acc_all = per(&|r, _| eval_one_step(&r.fhrr, &r.all).unwrap().accuracy);
    rep.line(1, "FHRR 1-step accuracy, all 400 transitions >= 92%", mean(&acc_all) >= 92.0, fmt(&acc_all));

    let zs = per(&|r, _| eval_one_step(&r.fhrr, &r.holdout).unwrap().accuracy);
    rep.line(2, "FHRR zero-shot 1-step accuracy, 80 held-out pairs >= 75%", mean(&zs) >= 75.0, fmt(&zs));

    let zs_cos = per(&|r, _| eval_one_step(&r.fhrr, &r.holdout).unwrap().cosine);
    rep.line(3, "FHRR zero-shot cosine similarity (x100) >= 70", mean(&zs_cos) >= 70.0, fmt(&zs_cos));

    let mlp_zs = per(&|r, _| eval_one_step(r.mlp.as_world_model(), &r.holdout).unwrap().accuracy);
    rep.line(4, "MLP-M zero-shot 1-step accuracy <= 5%", mean(&mlp_zs) <= 5.0, fmt(&mlp_zs));

    let h5 = per(&|r, s| rollout_acc(&r.fhrr, 5, false, s));
    let h20 = per(&|r, s| rollout_acc(&r.fhrr, 20, false, s));
    let h20c = per(&|r, s| rollout_acc(&r.fhrr, 20, true, s));
    let h100c = per(&|r, s| rollout_acc(&r.fhrr, 100, true, s));
    let ok5 = mean(&h5) >= 60.0 && mean(&h20) >= 25.0 && mean(&h20c) >= 50.0 && mean(&h100c) >= 25.0;
    rep.line(
        5,
        "FHRR rollouts h5 >= 60, h20 >= 25, h20+clean >= 50, h100+clean >= 25",
        ok5,
        format!(
            "h5 {:.2}, h20 {:.2}, h20+clean {:.2}, h100+clean {:.2}",
            mean(&h5),
            mean(&h20),
            mean(&h20c),
            mean(&h100c)
        ),
    );

    let mlp_h20 = per(&|r, s| rollout_acc(r.mlp.as_world_model(), 20, false, s));
    let margin = mean(&h20) - mean(&mlp_h20);
    rep.line(
        6,
        "FHRR h20 exceeds MLP-M h20 by >= 25 points",
        margin >= 25.0,
        format!("FHRR {:.2} vs MLP-M {:.2}, margin {margin:.2}", mean(&h20), mean(&mlp_h20)),
    );

    let sigma5 = |m: &dyn WorldModel, r: &SeedRun, s: u64| sweep_robustness(m, &r.all, &[5.0], 5, s).unwrap()[0].1;
    let f5 = per(&|r, s| sigma5(&r.fhrr, r, s));
    let m5 = per(&|r, s| sigma5(r.mlp.as_world_model(), r, s));
    rep.line(
        7,
        "Noise sigma=5: FHRR >= 80%, MLP-M >= 30 points lower",
        mean(&f5) >= 80.0 && mean(&f5) - mean(&m5) >= 30.0,
        format!("FHRR {:.2}, MLP-M {:.2}", mean(&f5), mean(&m5)),
    );

    let sparse: Vec<SeedRun> = SEEDS.iter().map(|&s| train_seed(s, 0.9)).collect();
    let f09: Vec<f64> = sparse.iter().zip(SEEDS).map(|(r, s)| rollout_acc(&r.fhrr, 20, false, s)).collect();
    let m09: Vec<f64> =
        sparse.iter().zip(SEEDS).map(|(r, s)| rollout_acc(r.mlp.as_world_model(), 20, false, s)).collect();
    rep.line(
        8,
        "Zero-shot ratio 0.9: FHRR h20 >= 3x MLP-M h20",
        mean(&f09) >= 3.0 * mean(&m09),
        format!("FHRR {} vs MLP-M {}", fmt(&f09), fmt(&m09)),
    );

    let (s, a) = new_encoders(512, 100, 4, 0).unwrap();
    let counts = [
        parameter_count(&s, &a),
        HrrModel::new(512, 100, 4, 0).unwrap().parameter_count(),
        MlpModel::new(MlpConfig::variant(MlpVariant::Small), 100, 4, 0).unwrap().parameter_count(),
        MlpModel::new(MlpConfig::variant(MlpVariant::Medium), 100, 4, 0).unwrap().parameter_count(),
        MlpModel::new(MlpConfig::variant(MlpVariant::Large), 100, 4, 0).unwrap().parameter_count(),
    ];
    rep.line(
        9,
        "Parameter counts FHRR/HRR/MLP-S/M/L = 53248/53248/41600/241024/1394048",
        counts == [53_248, 53_248, 41_600, 241_024, 1_394_048],
        format!("{counts:?}"),
    );

    let (alg_worst, alg_cases) = algebra_suite();
    rep.line(
        10,
        "Algebra suite within 1e-9 over >= 100 cases each",
        alg_worst <= 1e-9 && alg_cases >= 100,
        format!("worst {alg_worst:.3e} over {alg_cases} cases"),
    );

    let (grad_worst, probes) = gradient_suite();
    rep.line(
        11,
        "Gradient suite rel. error < 1e-4 over >= 50 probes",
        grad_worst < 1e-4 && probes >= 50,
        format!("worst {grad_worst:.3e}, {probes} probes per check"),
    );

    let (rff_worst, rff_ratio) = rff_errors();
    rep.line(
        12,
        "RFF kernel within 0.05 at D=1e4; error ratio D=4e4/D=1e4 in [0.25, 0.75]",
        rff_worst <= 0.05 && (0.25..=0.75).contains(&rff_ratio),
        format!("worst {rff_worst:.4}, ratio {rff_ratio:.3}"),
    );

    let eq = rollout_equivalence(&runs[0].fhrr);
    rep.line(13, "Phase/embedding rollouts agree to 1e-9 (100 x 100 steps)", eq <= 1e-9, format!("worst {eq:.3e}"));

    let (idem, e512, e2048, ties) = cleanup_suite(&runs[0].fhrr);
    rep.line(
        14,
        "Cleanup idempotent, error(D=2048) <= error(D=512), ties to lowest index",
        idem && e2048 <= e512 && ties,
        format!("idempotent {idem}, error 512 {e512:.4} -> 2048 {e2048:.4}, ties {ties}"),
    );

    let (env_ok, split_ok) = environment_oracle();
    rep.line(
        15,
        "Environment matches nested-loop oracle; splits partition",
        env_ok && split_ok,
        format!("transitions {env_ok}, splits {split_ok}"),
    );

    let g = GridSpec::default();
    let states: Vec<usize> = (0..100).collect();
    let peaks: Vec<Vec<Option<isize>>> = runs
        .iter()
        .map(|r| {
            let k = kernel_profile_report(&r.fhrr.states, &states, 9, &g).unwrap();
            Action::ALL.iter().map(|&a| k.peak(a)).collect()
        })
        .collect();
    rep.line(
        16,
        "Trained kernel profiles maximal at k=0 for all four actions",
        peaks.iter().flatten().all(|p| *p == Some(0)),
        format!("peaks per seed {peaks:?}"),
    );

    println!(
        "{} of 16 criteria passed in {:.0}s",
        16 - rep.failures,
        start.elapsed().as_secs_f64()
    );
    if rep.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
