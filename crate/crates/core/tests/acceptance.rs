//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netslice::dataset::{Provenance, Sample};
use netslice::domain::PARTITION_SUM_TOLERANCE;
use netslice::estimator::{Activation, EstimatorModel};
use netslice::harness::{self, ExperimentConfig, ExperimentOutput, Phase, Scale, METRICS_FILES};
use netslice::netsim::SimulatorState;
use netslice::optimizer::{default_action, solve_cell, EstimatorObjective, FnObjective, SolverParams};
use netslice::schemes::{oracle_grid, traffic_proportional, Exploration, Scheme, SchemeKind};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Shared, expensive artifacts.
struct Fixture {
    samples: Vec<Sample>,
    raw: usize,
    model: EstimatorModel,
    test_mae: f64,
    train_time: Duration,
}

fn quiet() {
    std::env::set_var("NETSLICE_QUIET", "1");
}

fn desk_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_scale(Scale::Desk);
    cfg.seed = seed;
    cfg
}

fn build_fixture() -> Fixture {
    // 1200 collection slots × 3 cells × 3 slices ≈ 10.7k raw samples.
    let mut cfg = desk_config(11);
    cfg.phases.collect = 1200;
    let collected = harness::collect(&cfg).expect("collect");
    let started = Instant::now();
    let (model, report) = harness::train_estimator(&cfg, &collected.samples, cfg.sim.history_len).expect("train");
    Fixture {
        raw: collected.raw_samples,
        samples: collected.samples,
        model,
        test_mae: report.test_mae,
        train_time: started.elapsed(),
    }
}

/// `(f(x+h) - f(x-h)) / 2h` with the logistic difference taken on whichever
/// tail keeps precision, so saturated outputs don't round to zero.
fn central_difference(model: &EstimatorModel, x: f64, z: &[f64], h: f64) -> f64 {
    assert_eq!(model.output_activation(), Activation::Sigmoid);
    let hi = model.output_logit(x + h, z).unwrap();
    let lo = model.output_logit(x - h, z).unwrap();
    let s = |a: f64| Activation::Sigmoid.apply(a);
    let diff = if hi + lo > 0.0 { s(-lo) - s(-hi) } else { s(hi) - s(lo) };
    diff / (2.0 * h)
}

fn c1_gradient(fx: &Fixture) -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let base = &fx.samples[rng.random_range(0..fx.samples.len())];
        let z: Vec<f64> = base
            .input
            .z
            .iter()
            .map(|v| v * rng.random_range(0.8..1.2))
            .collect();
        let x = rng.random_range(h..1.0 - h);
        let analytic = fx.model.input_gradient(x, &z).unwrap();
        let fd = central_difference(&fx.model, x, &z, h);
        worst = worst.max((analytic - fd).abs() / fd.abs().max(1e-8));
    }
    let t = started.elapsed();
    verdict(
        worst <= 1e-4 && t < Duration::from_secs(5),
        format!("max relative error {worst:.2e} over 100 points, {:.2}s", secs(t)),
    )
}

fn c2_estimator(fx: &Fixture) -> Verdict {
    verdict(
        fx.raw >= 10_000 && fx.test_mae <= 0.08 && fx.train_time < Duration::from_secs(120),
        format!(
            "{} raw / {} total samples, held-out MAE {:.4}, training {:.1}s",
            fx.raw,
            fx.samples.len(),
            fx.test_mae,
            secs(fx.train_time)
        ),
    )
}

/// Observation sets of cells visited by an exploring simulator.
fn random_states(seed: u64, slices: &[u32], count: usize) -> Vec<Vec<Vec<f64>>> {
    let mut cfg = desk_config(seed).sim;
    cfg.seed = seed;
    cfg.initial_slices = slices.to_vec();
    let mut sim = SimulatorState::init(cfg).unwrap();
    let policy = Exploration::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let mut states = Vec::new();
    let mut slot = 0;
    while states.len() < count {
        for ci in 0..sim.num_cells() {
            if rng.random_bool(0.2) && states.len() < count {
                states.push(sim.observations(ci));
            }
        }
        let parts: Vec<_> = (0..sim.num_cells())
            .map(|ci| {
                let obs = sim.observations(ci);
                let demands = sim.upcoming_offered_load(ci);
                let ids = sim.cell_ids();
                policy
                    .allocate(&netslice::schemes::CellContext {
                        cell_id: ids[ci],
                        slot,
                        slices: sim.active_slices(ci),
                        observations: &obs,
                        demands: &demands,
                        previous: None,
                    })
                    .unwrap()
                    .partition
            })
            .collect();
        sim.step(&parts).unwrap();
        slot += 1;
    }
    states
}

fn c3_oracle(fx: &Fixture) -> Verdict {
    let started = Instant::now();
    let mut states = random_states(301, &[1, 2, 4], 50);
    states.extend(random_states(302, &[1, 2, 3, 4], 50));
    let mut ok = 0;
    let mut exceed = 0;
    for (i, obs) in states.iter().enumerate() {
        let obj = EstimatorObjective::new(&fx.model, obs).unwrap();
        let params = SolverParams {
            seed: i as u64,
            ..SolverParams::default()
        };
        let init = default_action(obs.len()).unwrap();
        let idla = solve_cell(&obj, init.shares(), &params, 0).unwrap();
        let grid = oracle_grid(&obj, 0.05, 2_000_000).unwrap();
        if idla.utility >= grid.utility - 0.01 {
            ok += 1;
        }
        if idla.utility > grid.utility {
            exceed += 1;
        }
    }
    let t = started.elapsed();
    verdict(
        ok >= 95 && t < Duration::from_secs(60),
        format!("{ok}/100 within 0.01 of the grid optimum ({exceed} above it), {:.1}s", secs(t)),
    )
}

/// Closed-form optimum of `Σ ln(2 − e^{−k_s x_s})` on the simplex.
fn kkt_allocation(k: &[f64]) -> Vec<f64> {
    let alloc = |lambda: f64| -> Vec<f64> {
        k.iter()
            .map(|&k| (((k + lambda) / (2.0 * lambda)).ln() / k).clamp(0.0, 1.0))
            .collect()
    };
    let (mut lo, mut hi) = (1e-12, k.iter().cloned().fold(0.0, f64::max));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if alloc(mid).iter().sum::<f64>() > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    alloc(0.5 * (lo + hi))
}

fn c4_kkt() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let n = rng.random_range(2..=4);
        let k: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
        let kk = k.clone();
        let obj = FnObjective::new(n, move |s, x: f64| {
            let e = (-kk[s] * x).exp();
            (1.0 - e, kk[s] * e)
        });
        let params = SolverParams {
            seed: i,
            ..SolverParams::default()
        };
        let init = default_action(n).unwrap();
        let got = solve_cell(&obj, init.shares(), &params, 0).unwrap();
        let want = kkt_allocation(&k);
        for (a, b) in got.partition.shares().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(worst <= 1e-2, format!("max coordinate error {worst:.2e} over 20 instances"))
}

fn c5_feasibility(run: &ExperimentOutput) -> Verdict {
    let mut sums: BTreeMap<(&str, u64, u32), f64> = BTreeMap::new();
    let mut bad_share = 0;
    for r in &run.logs {
        if !(0.0..=1.0).contains(&r.share) {
            bad_share += 1;
        }
        *sums.entry((r.scheme.as_str(), r.slot, r.cell_id)).or_default() += r.share;
    }
    let over = sums.values().filter(|&&s| s > 1.0 + PARTITION_SUM_TOLERANCE).count();
    let slots = run.logs.iter().map(|r| r.slot).max().map_or(0, |s| s + 1);
    let schemes: std::collections::BTreeSet<&str> = run.logs.iter().map(|r| r.scheme.as_str()).collect();
    verdict(
        bad_share == 0 && over == 0 && slots >= 1000 && run.partitions_checked as usize == sums.len(),
        format!(
            "{} partitions over {slots} slots and schemes {:?}: {bad_share} bad shares, {over} sums above 1",
            sums.len(),
            schemes
        ),
    )
}

fn c6_augmentation(fx: &Fixture) -> Verdict {
    let raw: BTreeMap<u64, &Sample> = fx
        .samples
        .iter()
        .filter(|s| s.provenance == Provenance::Raw)
        .map(|s| (s.parent, s))
        .collect();
    let (mut r1, mut r2, mut bad) = (0, 0, 0);
    for s in fx.samples.iter().filter(|s| s.provenance != Provenance::Raw) {
        let p = raw[&s.parent];
        let n = p.input.z.len();
        let ok = match s.provenance {
            Provenance::AugmentedRule1 => {
                r1 += 1;
                p.label < 1.0
                    && s.label.to_bits() == 1f64.to_bits()
                    && s.input.x.to_bits() == p.input.x.to_bits()
                    && s.input.z[..n - 2].iter().zip(&p.input.z[..n - 2]).all(|(a, b)| a.to_bits() == b.to_bits())
                    && s.input.z[n - 2].to_bits() == p.achieved.throughput.to_bits()
                    && s.input.z[n - 1].to_bits() == p.achieved.delay.to_bits()
            }
            Provenance::AugmentedRule2 => {
                r2 += 1;
                p.label == 1.0
                    && s.label.to_bits() == 1f64.to_bits()
                    && s.input.x >= p.input.x
                    && s.input.x <= 1.0
                    && s.input.z.iter().zip(&p.input.z).all(|(a, b)| a.to_bits() == b.to_bits())
            }
            Provenance::Raw => unreachable!(),
        };
        if !ok {
            bad += 1;
        }
    }
    verdict(
        bad == 0 && r1 > 0 && r2 > 0 && r1 + r2 == raw.len(),
        format!("{r1} rule-1 and {r2} rule-2 copies of {} raw samples, {bad} mismatches", raw.len()),
    )
}

fn c7_reconfiguration(cfg: &ExperimentConfig, run: &ExperimentOutput, elapsed: Duration) -> Verdict {
    let m = &run.metrics;
    let idla = m.summary_for("idla", Phase::H2).unwrap();
    let traffic = m.summary_for("traffic", Phase::H2).unwrap();
    let h1 = m.summary_for("idla", Phase::H1).unwrap().mean_utility;
    let series: Vec<f64> = m
        .utility_series("idla")
        .into_iter()
        .filter(|r| r.phase == Phase::H2)
        .map(|r| r.utility_mean)
        .collect();
    // First slot after the change at which the 10-slot trailing mean is
    // within 10% of the converged H1 mean.
    let window = 10;
    let recovery = (window..=series.len()).find(|&end| {
        let mean = series[end - window..end].iter().sum::<f64>() / window as f64;
        mean >= 0.9 * h1
    });
    let recovered = recovery.is_some_and(|end| end <= 50);
    let retrained_once = run.model.metadata().epochs_run == cfg.estimator.train.epochs;
    verdict(
        idla.mean_satisfaction >= traffic.mean_satisfaction
            && recovered
            && retrained_once
            && elapsed < Duration::from_secs(600),
        format!(
            "H2 mean satisfaction idla {:.4} vs traffic {:.4}; utility back within 10% of H1 ({h1:.4}) after {} slots; run {:.1}s",
            idla.mean_satisfaction,
            traffic.mean_satisfaction,
            recovery.map_or("never".to_string(), |s| s.to_string()),
            secs(elapsed)
        ),
    )
}

fn c8_warm_start(fx: &Fixture) -> Verdict {
    let mut cfg = desk_config(801).sim;
    cfg.num_cells = 1;
    cfg.seed = 801;
    let mut sim = SimulatorState::init(cfg).unwrap();
    let model = &fx.model;
    let (mut warm_iters, mut cold_iters) = (0.0, 0.0);
    let mut prev = default_action(sim.active_slices(0).len()).unwrap();
    for slot in 0..200u64 {
        let obs = sim.observations(0);
        let obj = EstimatorObjective::new(model, &obs).unwrap();
        let params = SolverParams {
            seed: slot,
            ..SolverParams::default()
        };
        let warm = solve_cell(&obj, prev.shares(), &params, 0).unwrap();
        let cold = solve_cell(&obj, default_action(obs.len()).unwrap().shares(), &params, 0).unwrap();
        warm_iters += warm.mean_iterations();
        cold_iters += cold.mean_iterations();
        prev = warm.partition.clone();
        let demands = sim.upcoming_offered_load(0);
        sim.step(&[traffic_proportional(&demands).unwrap()]).unwrap();
    }
    let (w, c) = (warm_iters / 200.0, cold_iters / 200.0);
    verdict(w <= c, format!("mean iterations warm {w:.1} vs cold {c:.1} over 200 slots"))
}

fn digest_outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    use sha2::{Digest, Sha256};
    let mut files: Vec<String> = METRICS_FILES.iter().map(|s| s.to_string()).collect();
    files.push("slot_log.csv".into());
    files
        .into_iter()
        .map(|f| {
            let bytes = std::fs::read(dir.join(&f)).unwrap();
            (f, Sha256::digest(&bytes).to_vec())
        })
        .collect()
}

fn c9_determinism(a: &Path, b: &Path) -> Verdict {
    let (da, db) = (digest_outputs(a), digest_outputs(b));
    let differing: Vec<&str> = da
        .iter()
        .zip(&db)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    verdict(
        differing.is_empty(),
        format!("{} files compared, differing: {:?}", da.len(), differing),
    )
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            verdict(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    // Support `cargo test -- --list` and name filters from the test runner.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args.iter().any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }
    quiet();
    let tmp = tempfile::tempdir().unwrap();

    let fixture = guarded_fixture();
    let mut cfg = desk_config(7);
    cfg.schemes = vec![SchemeKind::Idla, SchemeKind::Traffic, SchemeKind::Oracle, SchemeKind::Equal];
    cfg.output_dir = tmp.path().join("run_a");
    let started = Instant::now();
    let run_a = catch_unwind(|| harness::run_experiment(&cfg).expect("desk run"));
    let elapsed = started.elapsed();
    let mut cfg_b = cfg.clone();
    cfg_b.output_dir = tmp.path().join("run_b");
    let run_b_ok = run_a.is_ok() && catch_unwind(|| harness::run_experiment(&cfg_b).expect("desk run")).is_ok();

    let need_fx = |f: &dyn Fn(&Fixture) -> Verdict| match &fixture {
        Some(fx) => guarded(|| f(fx)),
        None => verdict(false, "fixture (collection + training) failed".into()),
    };
    let need_run = |f: &dyn Fn(&ExperimentOutput) -> Verdict| match &run_a {
        Ok(run) => guarded(|| f(run)),
        Err(_) => verdict(false, "desk experiment failed".into()),
    };

    let results = [
        ("C1 gradient fidelity", need_fx(&c1_gradient)),
        ("C2 estimator quality", need_fx(&c2_estimator)),
        ("C3 optimizer vs grid oracle", need_fx(&c3_oracle)),
        ("C4 KKT equivalence", guarded(c4_kkt)),
        ("C5 hard feasibility", need_run(&c5_feasibility)),
        ("C6 augmentation exactness", need_fx(&c6_augmentation)),
        ("C7 dynamic reconfiguration", need_run(&|r| c7_reconfiguration(&cfg, r, elapsed))),
        ("C8 warm start", need_fx(&c8_warm_start)),
        (
            "C9 determinism",
            if run_b_ok {
                guarded(|| c9_determinism(&cfg.output_dir, &cfg_b.output_dir))
            } else {
                verdict(false, "desk experiment failed".into())
            },
        ),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn guarded_fixture() -> Option<Fixture> {
    catch_unwind(build_fixture).ok()
}
