//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails or overruns its time budget.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use kmlab::dataset::{Dataset, Point};
use kmlab::experiment::{emit_plots_data, run_sweep_on, DataSource, ExperimentConfig};
use kmlab::kmeans::{self, Centroids, Clustering, DeltaMode};
use kmlab::lloyd::{self, StopReason};
use kmlab::rng::derive_seed;
use kmlab::seeding::{seed_buckshot, seed_random, SeedMethod};
use kmlab::stochastic::{self, LearningRate, StochasticState};
use kmlab::theory::{self, BoundParams};
use rand::Rng;

use common::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(id: &str, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> (bool, Duration) {
    let start = Instant::now();
    let o = f();
    let took = start.elapsed();
    let in_time = took < budget;
    let ok = o.pass && in_time;
    println!(
        "{} [{id}] {name}: {}; {:.2}s of {:.0}s budget{}",
        if ok { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        budget.as_secs_f64(),
        if in_time { "" } else { " (over budget)" }
    );
    (ok, took)
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

/// φ(c, Y) = φ(m, Y) + |Y|·‖m − c‖² on random instances.
fn c1a() -> Outcome {
    let mut g = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = g.random_range(1..=50);
        let d = g.random_range(1..=20);
        let scale = 10f64.powi(g.random_range(-2..=3));
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| scale * (2.0 * g.random::<f64>() - 1.0))
                    .collect()
            })
            .collect();
        let c: Vec<f64> = (0..d)
            .map(|_| scale * (2.0 * g.random::<f64>() - 1.0))
            .collect();
        let ds = Dataset::from_rows(rows.clone()).unwrap();
        let one = Clustering::new(vec![0; n], 1).unwrap();
        let at_c = kmeans::cost(&ds, &Centroids::new(vec![c.clone()]).unwrap(), &one)
            .unwrap()
            .total;
        let m = kmeans::means(&ds, &one).unwrap();
        let at_m = kmeans::cost(&ds, &m, &one).unwrap().total;
        let shift = n as f64 * sq(m.center(0), &c);
        let phi = at_c.max(1.0);
        worst = worst.max((at_c - at_m - shift).abs() / phi);
        let lib = kmeans::centroidal_identity_check(&rows, &c).unwrap();
        worst = worst.max(lib / phi);
    }
    outcome(
        worst <= 1e-9,
        format!("max residual/max(1,φ) = {worst:.3e} over 100 instances"),
    )
}

/// BBS replays equal cumulative means of the samples each center received.
fn c1b() -> Outcome {
    let mut g = rng(102);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..20 {
        let k = g.random_range(1..=4);
        let d = g.random_range(1..=6);
        let anchors: Vec<Vec<f64>> = (0..k)
            .map(|r| {
                (0..d)
                    .map(|j| if j == 0 { 1000.0 * r as f64 } else { 0.0 })
                    .collect()
            })
            .collect();
        let c0 = Centroids::new(anchors.clone()).unwrap();
        let batches: Vec<Vec<(Vec<f64>, usize)>> = (0..100)
            .map(|_| {
                (0..g.random_range(1..=8))
                    .map(|_| {
                        let r = g.random_range(0..k);
                        let x: Vec<f64> = anchors[r]
                            .iter()
                            .map(|a| a + 10.0 * g.random::<f64>() - 5.0)
                            .collect();
                        (x, r)
                    })
                    .collect()
            })
            .collect();
        let lib_gap = stochastic::verify_bbs_running_average(&c0, &batches).unwrap();
        // independent replay through the public state machine
        let mut state = StochasticState::new(c0.clone(), LearningRate::Bbs).unwrap();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for b in &batches {
            let pts: Vec<Point> = b.iter().map(|(x, _)| Point::dense(x.clone())).collect();
            let refs: Vec<&Point> = pts.iter().collect();
            state.apply_batch(&refs).unwrap();
            for (x, r) in b {
                sums[*r].iter_mut().zip(x).for_each(|(s, v)| *s += v);
                counts[*r] += 1;
            }
        }
        let scale = 1000.0 * k as f64;
        let mut gap: f64 = lib_gap;
        for r in 0..k {
            let expect: Vec<f64> = if counts[r] == 0 {
                anchors[r].clone()
            } else {
                sums[r].iter().map(|s| s / counts[r] as f64).collect()
            };
            let got = state.centroids().center(r);
            for (e, v) in expect.iter().zip(got) {
                gap = gap.max((e - v).abs());
            }
        }
        worst_ratio = worst_ratio.max(gap / scale);
    }
    outcome(
        worst_ratio <= 1e-10,
        format!("max gap/scale = {worst_ratio:.3e} over 20 scripted replays"),
    )
}

/// Exact Δ against enumeration of all bijections.
fn c1c() -> Outcome {
    let mut g = rng(103);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let k = g.random_range(1..=8);
        let d = g.random_range(1..=5);
        let mk = |g: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..k)
                .map(|_| (0..d).map(|_| 20.0 * g.random::<f64>() - 10.0).collect())
                .collect()
        };
        let cp = mk(&mut g);
        let c = mk(&mut g);
        let w: Vec<usize> = (0..k).map(|_| g.random_range(1..=50)).collect();
        let lib = kmeans::delta(
            &Centroids::new(cp.clone()).unwrap(),
            &Centroids::new(c.clone()).unwrap(),
            &w,
            DeltaMode::Exact,
        )
        .unwrap()
        .value;
        let brute = brute_delta(&cp, &c, &w);
        worst = worst.max((lib - brute).abs() / brute.max(1.0));
    }
    outcome(
        worst <= 1e-9,
        format!("max relative error = {worst:.3e} over 50 instances, k <= 8"),
    )
}

fn fixture_2() -> Vec<(&'static str, Dataset, usize)> {
    let planted = kmlab::dataset::SyntheticSpec {
        centers: vec![vec![0.0, 0.0], vec![6.0, 0.0], vec![3.0, 5.0]],
        sizes: vec![60; 3],
        radius: 2.0,
        seed: 201,
    }
    .generate()
    .unwrap()
    .dataset;
    let mut g = rng(202);
    let micro =
        Dataset::from_rows((0..12).map(|_| vec![10.0 * g.random::<f64>()]).collect()).unwrap();
    vec![
        ("planted n=180", planted, 3),
        ("uniform n=200", uniform_rows(200, 5, 1.0, 203), 4),
        ("micro n=12", micro, 3),
    ]
}

/// Lloyd traces never increase; terminal clusterings are stationary and, on
/// the micro fixture, among the enumerated stationary clusterings.
fn c2() -> Outcome {
    let mut failures = Vec::new();
    let mut runs = 0;
    for (fi, (name, ds, k)) in fixture_2().into_iter().enumerate() {
        let enumerated = if ds.len() <= 12 {
            Some(lloyd::enumerate_stationary(&ds, k).unwrap())
        } else {
            None
        };
        for start in 0..100u64 {
            let c0 = seed_random(&ds, k, &mut rng(derive_seed(2, &[fi as u64, start]))).unwrap();
            let res = lloyd::lloyd_run(&ds, &c0, 10_000).unwrap();
            runs += 1;
            if res.stopped == StopReason::MaxIters {
                failures.push(format!("{name} start {start}: no convergence"));
            }
            if res.trace.costs.windows(2).any(|w| w[1] > w[0]) {
                failures.push(format!("{name} start {start}: cost increased"));
            }
            if !lloyd::is_stationary(&ds, &res.clustering)
                .unwrap()
                .stationary
            {
                failures.push(format!(
                    "{name} start {start}: terminal clustering not stationary"
                ));
            }
            if let Some(all) = &enumerated {
                if !all.iter().any(|(a, _)| a.same_partition(&res.clustering)) {
                    failures.push(format!(
                        "{name} start {start}: terminal clustering not enumerated"
                    ));
                }
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{runs} runs on 3 fixtures")
    } else {
        format!("{} violations, first: {}", failures.len(), failures[0])
    };
    outcome(failures.is_empty(), detail)
}

/// φ(C) − φ* ≤ Δ(C, C*) around a verified stationary point.
fn c3() -> Outcome {
    let p = small_planted(301);
    let ds = &p.dataset;
    let (c_init, _) = planted_optimum(&p);
    let res = lloyd::lloyd_run(ds, &c_init, 1000).unwrap();
    let (cstar, astar) = (res.centroids, res.clustering);
    if !lloyd::is_stationary(ds, &astar).unwrap().stationary {
        return outcome(false, "reference point is not stationary".into());
    }
    let phi_star = brute_cost(ds, cstar.centers(), astar.labels());
    let mut g = rng(302);
    let mut held = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..100 {
        let b = 10f64.powf(g.random_range(-4.0..1.5));
        let c = theory::perturb_to_delta(&cstar, astar.sizes(), b * phi_star, &mut g).unwrap();
        let lib = kmeans::cost_gap_bound_check(ds, &c, &cstar, &astar).unwrap();
        // oracle: direct costs and enumerated matching
        let gap = brute_voronoi_cost(ds, c.centers()) - phi_star;
        let delta = brute_delta(c.centers(), cstar.centers(), astar.sizes());
        let slack = 1e-9 * delta.max(1.0);
        if gap <= delta + slack && lib.holds {
            held += 1;
        }
        worst = worst.max((gap - delta) / delta.max(1.0));
    }
    outcome(
        held == 100,
        format!("{held}/100 perturbations satisfy the bound; max (gap-Δ)/max(1,Δ) = {worst:.3e}"),
    )
}

/// Empirical update frequency against 1 − (1 − n_r/n)^m.
fn c4() -> Outcome {
    let mut rows = vec![vec![0.0]; 25];
    rows.extend(vec![vec![100.0]; 75]);
    let ds = Dataset::from_rows(rows).unwrap();
    let c = Centroids::new(vec![vec![0.0], vec![100.0]]).unwrap();
    let trials = 1_000_000;
    let freq = stochastic::frozen_update_frequency(&ds, &c, 4, trials, &mut rng(401)).unwrap()[0];
    let p = 1.0 - 0.75f64.powi(4);
    let lib_p = stochastic::update_probability(25, 100, 4).unwrap();
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    let z = (freq - p) / sigma;
    outcome(
        z.abs() <= 3.0 && lib_p == 0.68359375,
        format!("frequency {freq:.6} vs {p} ({z:+.2} sigma); formula gives {lib_p}"),
    )
}

/// Closed-form envelope against direct simulation of u_t = (1 − a/t)u_{t−1} + b/t².
fn c5() -> Outcome {
    let a_grid = [1.1, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 7.0, 10.0];
    let b_grid = [0.1, 1.0, 10.0];
    let t0_grid = [1.0, 5.0, 50.0];
    let mut bad = 0;
    let mut cells = 0;
    for &a in &a_grid {
        for &b in &b_grid {
            for &t0 in &t0_grid {
                cells += 1;
                let p = BoundParams {
                    a,
                    b,
                    t0,
                    u_t0: 1.0,
                };
                let mut u: f64 = 1.0;
                let mut ok = u <= theory::recurrence_envelope(&p, t0).unwrap();
                let mut t = t0 + 1.0;
                while t <= 10_000.0 {
                    u = ((1.0 - a / t) * u + b / (t * t)).max(0.0);
                    ok &= u <= theory::recurrence_envelope(&p, t).unwrap();
                    t += 1.0;
                }
                if !ok {
                    bad += 1;
                }
            }
        }
    }
    outcome(
        bad == 0,
        format!(
            "{}/{cells} grid points dominated up to t = 10^4",
            cells - bad
        ),
    )
}

fn sweep_cfg(m_list: &[usize], iters: usize, with_bbs: bool) -> ExperimentConfig {
    let mut policies = vec![LearningRate::Flat {
        c_prime: 2.0,
        t0: 3.0,
    }];
    if with_bbs {
        policies.push(LearningRate::Bbs);
    }
    ExperimentConfig {
        source: DataSource::Synthetic(large_planted_spec()),
        m_list: m_list.to_vec(),
        k_list: vec![3],
        policies,
        reps: 5,
        iters,
        seed: 6,
        out_dir: "out".into(),
        normalize: false,
        cost_eval_every: 1,
        seeding: SeedMethod::Buckshot { m0: 60 },
    }
}

/// Log-log slope of φ̄^t − φ_min on the planted fixture.
fn c6(ds: &Dataset, clusterable: &str, assumptions_ok: bool) -> Outcome {
    let cfg = sweep_cfg(&[100], 300, false);
    let res = run_sweep_on(&cfg, ds).unwrap();
    let cr = &res.configs[0];
    match cr.slope {
        Some(fit) => outcome(
            assumptions_ok && fit.slope <= -0.8 && fit.r2 >= 0.7,
            format!(
                "{clusterable}; slope {:.3}, r2 {:.3} over {} points (phi0 {:.1}, phi_min {:.4})",
                fit.slope, fit.r2, fit.points, cr.phi0, cr.phi_min
            ),
        ),
        None => outcome(false, format!("{clusterable}; slope undefined")),
    }
}

/// Buckshot lands within half the stable radius.
fn c7(ds: &Dataset, cstar: &Centroids, astar: &Clustering, radius: f64) -> Outcome {
    let phi = brute_cost(ds, cstar.centers(), astar.labels());
    let limit = 0.5 * radius * phi;
    let mut ok = 0;
    for trial in 0..200u64 {
        let mut g = rng(derive_seed(7, &[trial]));
        let c0 = seed_buckshot(ds, 3, 60, &mut g).unwrap();
        let d = kmeans::delta(&c0, cstar, astar.sizes(), DeltaMode::Exact)
            .unwrap()
            .value;
        if d <= limit {
            ok += 1;
        }
    }
    outcome(
        ok >= 160,
        format!("{ok}/200 seeds within 0.5*gamma^2 f^2/256 * phi = {limit:.3e}"),
    )
}

/// Terminal averaged cost does not increase with m.
fn c8(ds: &Dataset) -> Outcome {
    let cfg = sweep_cfg(&[1, 10, 100], 200, false);
    let res = run_sweep_on(&cfg, ds).unwrap();
    let terminal: Vec<f64> = res.configs.iter().map(|c| c.terminal_phi()).collect();
    let ok = terminal.windows(2).all(|w| w[1] <= w[0]);
    outcome(ok, format!("terminal phi for m = 1, 10, 100: {terminal:?}"))
}

fn sweep_files(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    threads: usize,
    dir: &Path,
) -> Vec<(String, Vec<u8>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    let res = pool.install(|| run_sweep_on(cfg, ds)).unwrap();
    let mut files: Vec<(String, Vec<u8>)> = emit_plots_data(&res, dir)
        .unwrap()
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Byte-identical outputs at 1 and 8 worker threads.
fn c9(ds: &Dataset) -> Outcome {
    let cfg = sweep_cfg(&[1, 10, 100], 200, true);
    let tmp = tempfile::tempdir().unwrap();
    let one = sweep_files(&cfg, ds, 1, &tmp.path().join("t1"));
    let eight = sweep_files(&cfg, ds, 8, &tmp.path().join("t8"));
    let csvs = one.iter().filter(|f| f.0.ends_with(".csv")).count();
    let same = one == eight;
    outcome(
        same && csvs > 0,
        format!("{csvs} CSV files, identical = {same}"),
    )
}

fn main() {
    let mut all = true;
    let mut tally = |r: (bool, Duration)| {
        all &= r.0;
        r.1
    };
    tally(run("1a", "centroidal identity", secs(1), c1a));
    tally(run("1b", "BBS running average", secs(1), c1b));
    tally(run("1c", "exact centroidal distance", secs(5), c1c));
    tally(run("2", "batch solver properties", secs(30), c2));
    tally(run("3", "cost-gap bound", secs(5), c3));
    tally(run("4", "update probability", secs(10), c4));
    tally(run("5", "recurrence envelope", secs(5), c5));

    let planted = large_planted();
    let ds = &planted.dataset;
    let (cstar, astar) = planted_optimum(&planted);
    let report = theory::check_assumptions(ds, &astar, &cstar, 0.01).unwrap();
    let stationary = lloyd::is_stationary(ds, &astar).unwrap().stationary;
    let clusterable = format!(
        "fixture: f {:.0} (needs > {:.0}), gamma {:.4} (needs > {:.4}), p_min {:.3} (needs >= {:.3}), stationary {stationary}",
        report.f_achieved,
        report.f_required,
        report.gamma_achieved,
        report.gamma_threshold,
        report.p_min,
        report.balance_threshold
    );
    let assumptions_ok = report.all_hold() && stationary;

    let c6_time = tally(run("6", "O(1/t) convergence slope", secs(60), || {
        c6(ds, &clusterable, assumptions_ok)
    }));
    tally(run("7", "Buckshot seeding success", secs(10), || {
        c7(ds, &cstar, &astar, report.stable_radius)
    }));
    tally(run("8", "mini-batch size trend", secs(120), || c8(ds)));
    tally(run("9", "thread-count determinism", secs(120), || c9(ds)));
    println!("criterion 6 took {:.2}s", c6_time.as_secs_f64());

    if !all {
        std::process::exit(1);
    }
}
