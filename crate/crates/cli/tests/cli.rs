use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use coadapt_core::protocol::{build_session, DisplayMode, GameVersion, TrialRunner};
use coadapt_server::Store;

fn coadapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coadapt"))
        .args(args)
        .env_remove("PORT")
        .env_remove("DATA_PATH")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn configs() -> &'static str {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs")
}

#[test]
fn equilibria_prints_the_bundled_solutions() {
    let o = coadapt(&["equilibria", "--game", "2x2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("Nash         h = (-0.2501, -0.2501)  m = (0.1326, 0.1326)"), "{text}");
    assert!(text.contains("differential Stackelberg conditions holds"));
    assert!(stderr(&o).starts_with("effective config: {"));

    let o = coadapt(&["equilibria", "--game", "2x1", "--json"]);
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let m_se = doc["stackelberg"]["m"][0].as_f64().unwrap();
    assert!((m_se + 0.37).abs() < 0.02);

    let decoupled = format!("{}/decoupled.toml", configs());
    let o = coadapt(&["equilibria", "--game", &decoupled]);
    let text = stdout(&o);
    assert!(text.contains("Nash         h = (0.0000, 0.0000)  m = (0.0000, 0.0000)"), "{text}");
    assert!(text.contains("Stackelberg  h = (0.0000, 0.0000)  m = (0.0000, 0.0000)"), "{text}");
}

#[test]
fn exit_codes() {
    assert_eq!(coadapt(&[]).status.code(), Some(2));
    assert_eq!(coadapt(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(coadapt(&["simulate", "--game", "2x2", "--alpha", "fast"]).status.code(), Some(2));
    assert_eq!(coadapt(&["sweep", "--game", "2x2", "--alphas", "", "--out", "x"]).status.code(), Some(2));
    assert_eq!(coadapt(&["sweep", "--game", "2x2", "--out", "x"]).status.code(), Some(2));
    let o = coadapt(&["equilibria", "--game", "/no/such/game.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/game.toml"));
    let o = coadapt(&["simulate", "--game", "2x2", "--sigma", "0"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert_eq!(coadapt(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = coadapt(&["simulate", "--game", "2x2", "--T", "200", "--seed", "9", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 1 + 201);
    assert!(text.starts_with("t,h_1,h_2,m_1,m_2,cost_H,cost_M,dist_h_NE,dist_h_SE,dist_m_NE,dist_m_SE\n"));
}

#[test]
fn zero_eta_freezes_the_human() {
    let o = coadapt(&["simulate", "--game", "2x2", "--T", "50", "--eta", "0", "--h0", "0.3,-0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let h: Vec<(String, String)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect();
    assert_eq!(h.len(), 51);
    assert!(h.iter().all(|x| *x == h[0]));
}

#[test]
fn generated_large_game_simulates() {
    let dir = tempfile::tempdir().unwrap();
    let game = dir.path().join("big.toml");
    let o = coadapt(&["gen-game", "--dh", "64", "--dm", "128", "--seed", "1", "--out", game.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = dir.path().join("traj.csv");
    let o = coadapt(&["simulate", "--game", game.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 1 + 1001);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 1 + 64 + 128 + 6);
}

#[test]
fn gen_game_hits_targets() {
    let o = coadapt(&["gen-game", "--dh", "2", "--dm", "2", "--seed", "5", "--nash-target", "-0.25,-0.25"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let p = coadapt_core::config::game_from_str(&stdout(&o)).unwrap();
    let ne = p.solve_nash().unwrap();
    assert!((ne.h[0] + 0.25).abs() < 1e-9 && (ne.h[1] + 0.25).abs() < 1e-9);
    assert_eq!(coadapt(&["gen-game", "--dh", "2", "--dm", "2", "--se-target", "0.2,0.2"]).status.code(), Some(2));
}

#[test]
fn sweep_writes_manifest_trajectories_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = coadapt(&[
        "sweep", "--game", "2x2", "--alphas", "0.0001,0.001,0.01", "--seeds", "2", "--T", "300", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for a in ["0.0001", "0.001", "0.01"] {
        for s in 0..2 {
            assert!(out.join(format!("2x2_{a}_{s}.csv")).exists());
        }
    }
    assert_eq!(fs::read_to_string(out.join("manifest.csv")).unwrap().lines().count(), 7);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.starts_with("alpha,runs,diverged,median_dist_h_NE"));

    let single = dir.path().join("single");
    let o = coadapt(&["sweep", "--game", "2x2", "--alphas", "0.01", "--seeds", "1", "--T", "10", "--out", single.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let trajectories = fs::read_dir(&single)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("2x2_"))
        .count();
    assert_eq!(trajectories, 1);
}

fn seed_store(path: &Path) {
    let store = Store::open(path).unwrap();
    let p = GameVersion::TwoByTwo.params().unwrap();
    let plan = build_session(GameVersion::TwoByTwo, DisplayMode::CostCircle, 1, "cli-test", false).unwrap();
    for (i, mut cfg) in plan.trials.into_iter().enumerate() {
        cfg.duration_s = 6.0;
        let mut run = TrialRunner::new(&p, cfg, "cli-test", &plan.session_id, i).unwrap();
        let mut k = 0.0f64;
        while !run.is_done() {
            run.tick(&[0.5 * (0.05 * k).sin(), 0.3]).unwrap();
            k += 1.0;
        }
        store.insert_trial(&run.finish()).unwrap();
    }
}

#[test]
fn export_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.sqlite");
    seed_store(&data);
    let csv = dir.path().join("samples.csv");
    let o = coadapt(&["export", "--data", data.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 20 * 360);

    let o = coadapt(&["export", "--data", data.to_str().unwrap(), "--alpha", "0.1"]);
    assert_eq!(stdout(&o).lines().count(), 1 + 4 * 360);

    let plots = dir.path().join("plots");
    let o = coadapt(&["analyze", "--in", csv.to_str().unwrap(), "--game", "2x2", "--out", plots.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 6);
    let costs = fs::read_to_string(plots.join("costs_box.csv")).unwrap();
    assert_eq!(costs.lines().count(), 6);
    for f in ["actions_median_0.csv", "actions_median_1.svg", "hist_H_0.01.csv", "hist_M_0.1.svg", "costs_box.svg"] {
        assert!(plots.join(f).exists(), "{f}");
    }

    let o = coadapt(&["export", "--data", dir.path().join("missing.sqlite").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn serve_rejects_bad_replay_file() {
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("plan.json");
    fs::write(&replay, "{}").unwrap();
    let o = coadapt(&["serve", "--port", "0", "--data", dir.path().join("d.sqlite").to_str().unwrap(), "--replay", replay.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
