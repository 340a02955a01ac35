//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails the
//! run if any criterion fails.

use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use coadapt_core::analysis::{summarize_last_seconds, trim_last_seconds, SummaryOptions};
use coadapt_core::config::bundled;
use coadapt_core::dynamics::{
    estimate_gradient_bias, random_game, run_sweep, simulate_simultaneous_gd, summarize_sweep, RandomGameOptions,
    SimConfig,
};
use coadapt_core::protocol::{build_session, DisplayMode, GameVersion, TrialRunner};
use coadapt_core::records::read_trials_csv;
use coadapt_core::{GameParams, JointAction, TrialRecord, Vector};
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(label: &str, got: &Vector, want: &[f64], tol: f64) -> Result<(), String> {
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        ensure((g - w).abs() <= tol, || format!("{label}[{i}] = {g:.4}, expected {w} ± {tol}"))?;
    }
    ensure(got.len() == want.len(), || format!("{label} has length {}", got.len()))
}

fn games() -> Vec<(&'static str, GameParams)> {
    ["2x2", "1x2", "2x1"].into_iter().map(|n| (n, bundled(n).unwrap())).collect()
}

fn a1() -> Outcome {
    let start = Instant::now();
    #[rustfmt::skip]
    let published: [(&str, [&[f64]; 4]); 3] = [
        ("2x2", [&[-0.25, -0.25], &[0.13, 0.13], &[0.25, 0.25], &[-0.13, -0.13]]),
        ("1x2", [&[-0.25], &[0.15, 0.15], &[0.25], &[-0.15, -0.15]]),
        ("2x1", [&[-0.25, -0.25], &[0.37], &[0.25, 0.25], &[-0.37]]),
    ];
    for (name, [h_ne, m_ne, h_se, m_se]) in published {
        let p = bundled(name).map_err(|e| e.to_string())?;
        let ne = p.solve_nash().map_err(|e| e.to_string())?;
        let se = p.solve_stackelberg().map_err(|e| e.to_string())?;
        within(&format!("{name} h_NE"), &ne.h, h_ne, 0.02)?;
        within(&format!("{name} m_NE"), &ne.m, m_ne, 0.02)?;
        within(&format!("{name} h_SE"), &se.h, h_se, 0.02)?;
        within(&format!("{name} m_SE"), &se.m, m_se, 0.02)?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("3 games within 0.02 per coordinate in {elapsed:.2?}"))
}

fn a2() -> Outcome {
    for (name, p) in games() {
        let eq = p.equilibria().map_err(|e| e.to_string())?;
        ensure(p.check_differential_nash(&eq.nash), || format!("{name}: Nash check fails at solved point"))?;
        ensure(p.check_differential_stackelberg(&eq.stackelberg), || {
            format!("{name}: Stackelberg check fails at solved point")
        })?;
        // The leader problem can stay convex after negating A_H (the 1x2 game's
        // J'D_H J term dominates), so the Stackelberg mutant is probed at the
        // original solution, where its total gradient is -2 A_H h != 0.
        let mutant = p.clone().with_negated_human_quad();
        let mutant_ne = mutant.solve_nash().map_err(|e| e.to_string())?;
        for x in [&mutant_ne, &eq.nash] {
            ensure(!mutant.check_differential_nash(x), || format!("{name}: mutant passes Nash check"))?;
        }
        ensure(!mutant.check_differential_stackelberg(&eq.stackelberg), || {
            format!("{name}: mutant passes Stackelberg check")
        })?;
    }
    Ok("true at solved points, false on negated-A_H mutants, all 3 games".into())
}

fn a3() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let options = RandomGameOptions { min_separation: 0.0, ..RandomGameOptions::default() };
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let (dh, dm) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let p = random_game(dh, dm, seed, &options).map_err(|e| e.to_string())?;
        let x = JointAction::new(
            Vector::from_fn(dh, |_, _| rng.random_range(-1.0..1.0)),
            Vector::from_fn(dm, |_, _| rng.random_range(-1.0..1.0)),
        );
        let gh = p.grad_h(&x).unwrap();
        let gm = p.grad_m(&x).unwrap();
        let fd = |own_is_h: bool, n: usize| {
            Vector::from_fn(n, |i, _| {
                let shift = |s: f64| {
                    let mut y = x.clone();
                    if own_is_h {
                        y.h[i] += s;
                        p.cost_h(&y).unwrap()
                    } else {
                        y.m[i] += s;
                        p.cost_m(&y).unwrap()
                    }
                };
                (shift(step) - shift(-step)) / (2.0 * step)
            })
        };
        for (analytic, numeric) in [(&gh, fd(true, dh)), (&gm, fd(false, dm))] {
            let rel = (analytic - &numeric).norm() / analytic.norm().max(1e-12);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-6, || format!("worst relative error {worst:.3e}"))?;
    Ok(format!("100 games up to 8x8, worst relative error {worst:.2e}"))
}

fn a4() -> Outcome {
    let start = Instant::now();
    let p = bundled("2x2").map_err(|e| e.to_string())?;
    let h = Vector::zeros(2);
    let m = Vector::from_vec(vec![0.1, 0.1]);
    let est = estimate_gradient_bias(&p, &h, &m, 0.1, 100_000, 4).map_err(|e| e.to_string())?;
    let target = p.grad_h(&JointAction::new(h, m)).unwrap() * 2.0;
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        let z = (est.mean[i] - target[i]).abs() / est.std_err[i];
        worst = worst.max(z);
    }
    let elapsed = start.elapsed();
    ensure(worst <= 3.0, || format!("estimate {} vs 2 grad {}: {worst:.2} standard errors", est.mean, target))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("within {worst:.2} standard errors of 2 grad_H in {elapsed:.2?}"))
}

fn strictly(values: &[f64], increasing: bool) -> bool {
    values.windows(2).all(|w| if increasing { w[0] < w[1] } else { w[0] > w[1] })
}

fn a5() -> Outcome {
    let start = Instant::now();
    let p = bundled("2x2").map_err(|e| e.to_string())?;
    let mut base = SimConfig::for_game(&p);
    base.eta = 0.01;
    base.sigma = 0.1;
    base.steps = 10_000;
    base.inner_steps = 10;
    let alphas = [0.0001, 0.001, 0.01, 0.1];
    let seeds: Vec<u64> = (0..20).collect();
    let runs = run_sweep(&p, &base, &alphas, &seeds).map_err(|e| e.to_string())?;
    let summary = summarize_sweep(&runs);
    let to_se: Vec<f64> = summary.iter().map(|s| s.median.h_se).collect();
    let to_ne: Vec<f64> = summary.iter().map(|s| s.median.h_ne).collect();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" > ");
    ensure(strictly(&to_se, false), || format!("median |h - h_SE| not decreasing: {to_se:?}"))?;
    ensure(strictly(&to_ne, true), || format!("median |h - h_NE| not increasing: {to_ne:?}"))?;
    ensure(to_ne[0] < to_se[0], || "slowest rate does not end nearer NE".into())?;
    ensure(to_se[3] < to_ne[3], || "fastest rate does not end nearer SE".into())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("median |h - h_SE| {} over alpha = 1e-4..1e-1 in {elapsed:.2?}", fmt(&to_se)))
}

fn a6() -> Outcome {
    let start = Instant::now();
    let alphas = [0.0001, 0.001, 0.01];
    let mut ordered = 0;
    for seed in 0..10u64 {
        let p = random_game(64, 128, seed, &RandomGameOptions::default()).map_err(|e| e.to_string())?;
        let mut base = SimConfig::for_game(&p);
        base.eta = 0.01;
        base.steps = 1000;
        base.inner_steps = 10;
        let runs = run_sweep(&p, &base, &alphas, &[seed]).map_err(|e| e.to_string())?;
        let d: Vec<_> = runs.iter().filter_map(|r| r.trajectory.final_distances()).collect();
        if d.len() != 3 {
            continue;
        }
        let ne_smallest_at_slowest = d[0].h_ne < d[1].h_ne && d[0].h_ne < d[2].h_ne;
        let se_smallest_at_fastest = d[2].h_se < d[0].h_se && d[2].h_se < d[1].h_se;
        if ne_smallest_at_slowest && se_smallest_at_fastest {
            ordered += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(ordered >= 8, || format!("ordering held for only {ordered}/10 seeds"))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("ordering held for {ordered}/10 seeds of 64x128 games in {elapsed:.2?}"))
}

fn a7() -> Outcome {
    let rates = [0.001, 0.01, 0.1, 1.0];
    let mut worst: f64 = 0.0;
    for (name, p) in games() {
        let ne = p.solve_nash().map_err(|e| e.to_string())?;
        for &alpha in &rates {
            for &eta in &rates {
                let mut cfg = SimConfig::for_game(&p);
                cfg.alpha = alpha;
                cfg.eta = eta;
                cfg.steps = 1;
                cfg.h0 = ne.h.iter().copied().collect();
                cfg.m0 = ne.m.iter().copied().collect();
                let traj = simulate_simultaneous_gd(&p, &cfg).map_err(|e| e.to_string())?;
                let last = traj.final_state().ok_or_else(|| format!("{name}: empty trajectory"))?;
                worst = worst.max((&last.h - &ne.h).amax()).max((&last.m - &ne.m).amax());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("one-step residual {worst:.3e}"))?;
    Ok(format!("one-step residual {worst:.1e} over 16 (alpha, eta) pairs, 3 games"))
}

struct Served {
    child: Child,
    base: String,
}

impl Served {
    fn start(data: &Path) -> Result<Self, String> {
        let mut child = Command::new(env!("CARGO_BIN_EXE_coadapt"))
            .args(["serve", "--host", "127.0.0.1", "--port", "0", "--data"])
            .arg(data)
            .env_remove("PORT")
            .env_remove("DATA_PATH")
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("spawning server: {e}"))?;
        let mut lines = BufReader::new(child.stderr.take().expect("piped stderr")).lines();
        let base = loop {
            match lines.next() {
                Some(Ok(line)) => {
                    if let Some(url) = line.strip_prefix("listening on ") {
                        break url.trim().to_string();
                    }
                }
                _ => {
                    let _ = child.kill();
                    return Err("server exited before listening".into());
                }
            }
        };
        std::thread::spawn(move || lines.for_each(drop));
        Ok(Self { child, base })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn synthetic_trials(key: &str) -> Result<Vec<TrialRecord>, String> {
    let version = GameVersion::TwoByTwo;
    let p = version.params().map_err(|e| e.to_string())?;
    let plan = build_session(version, DisplayMode::CostCircle, 8, key, false).map_err(|e| e.to_string())?;
    let mut trials = Vec::new();
    for (i, cfg) in plan.trials.into_iter().take(5).enumerate() {
        let mut run = TrialRunner::new(&p, cfg, key, &plan.session_id, i).map_err(|e| e.to_string())?;
        let mut k = 0.0f64;
        while !run.is_done() {
            let raw = [0.6 * (0.011 * k + i as f64).sin(), 0.5 * (0.017 * k).cos()];
            run.tick(&raw).map_err(|e| e.to_string())?;
            k += 1.0;
        }
        trials.push(run.finish());
    }
    Ok(trials)
}

fn a8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("trials.sqlite");
    let trials = synthetic_trials("acceptance-participant")?;
    ensure(trials.iter().all(|t| t.samples.len() == 1500), || "synthetic trials are not 1500 samples".into())?;

    let client = reqwest::blocking::Client::new();
    let server = Served::start(&data)?;
    for t in &trials {
        let r = client
            .post(format!("{}/api/trials", server.base))
            .body(t.to_canonical_json())
            .send()
            .map_err(|e| e.to_string())?;
        ensure(r.status().is_success(), || format!("POST returned {}", r.status()))?;
    }
    server.kill();

    let server = Served::start(&data)?;
    let csv = client
        .get(format!("{}/api/export", server.base))
        .send()
        .and_then(|r| r.text())
        .map_err(|e| e.to_string())?;
    server.kill();
    ensure(csv.lines().count() == 1 + 5 * 1500, || format!("export after restart has {} lines", csv.lines().count()))?;

    let exported = read_trials_csv(csv.as_bytes()).map_err(|e| e.to_string())?;
    for t in &exported {
        let n = trim_last_seconds(t, 5.0).samples.len();
        ensure(n == 300, || format!("trial {} trims to {n} samples", t.trial_index))?;
    }
    let eq = bundled("2x2").unwrap().equilibria().unwrap();
    let options = SummaryOptions::default();
    let via_server = summarize_last_seconds(&exported, 5.0, &eq, &options).map_err(|e| e.to_string())?;
    let direct = summarize_last_seconds(&trials, 5.0, &eq, &options).map_err(|e| e.to_string())?;
    ensure(via_server == direct, || "summary through the server differs from the in-memory summary".into())?;
    Ok(format!("5 trials x 1500 samples survive restart; {} rates summarized bit-for-bit", direct.per_alpha.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 8] = [
        ("A1", "equilibrium reproduction", a1),
        ("A2", "condition checks", a2),
        ("A3", "gradient correctness", a3),
        ("A4", "zeroth-order estimator", a4),
        ("A5", "equilibrium shift", a5),
        ("A6", "large-scale simulation", a6),
        ("A7", "stationary-point invariance", a7),
        ("A8", "pipeline round trip", a8),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("{id} PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
