use std::net::SocketAddr;
use std::path::Path;
use std::thread;

use coadapt_core::protocol::SessionPlan;
use coadapt_core::records::{read_trials_csv, EXPORT_HEADER};
use coadapt_core::{Sample, TrialRecord};
use coadapt_server::{router, seed_for_key, Store};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::Value;

struct Server {
    base: String,
    _dir: tempfile::TempDir,
    runtime: Option<tokio::runtime::Runtime>,
}

impl Server {
    fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("data.sqlite")).unwrap();
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let addr: SocketAddr = listener.local_addr().unwrap();
        let app = router(store, None, false, None);
        runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self { base: format!("http://{addr}"), _dir: dir, runtime: Some(runtime) }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn post(&self, record: &str) -> (StatusCode, Value) {
        let r = Client::new().post(self.url("/api/trials")).body(record.to_string()).send().unwrap();
        (r.status(), r.json().unwrap())
    }

    fn export(&self, query: &str) -> String {
        Client::new().get(self.url(&format!("/api/export{query}"))).send().unwrap().text().unwrap()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}

fn trial(key: &str, index: usize, n: usize) -> TrialRecord {
    TrialRecord {
        participant_key: key.into(),
        session_id: "s1".into(),
        trial_index: index,
        alpha: 0.01,
        symmetry: vec![1.0, -1.0],
        samples: (0..n)
            .map(|i| {
                let x = (i as f64 * 0.37 + index as f64).sin();
                Sample { t: i as f64 / 60.0, h: vec![x, -x / 3.0], m: vec![0.1, x * 0.7], cost_h: x * x, cost_m: 0.1 / 3.0 }
            })
            .collect(),
    }
}

#[test]
fn ingest_is_idempotent_and_detects_conflicts() {
    let s = Server::start();
    let rec = trial("p1", 0, 10);
    let (status, body) = s.post(&rec.to_canonical_json());
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["accepted"], true);
    let id = body["trial_id"].as_i64().unwrap();

    let (status, again) = s.post(&rec.to_canonical_json());
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["trial_id"].as_i64().unwrap(), id);
    assert_eq!(s.export("").lines().count(), 11);

    let mut changed = rec.clone();
    changed.samples[3].cost_h += 1.0;
    assert_eq!(s.post(&changed.to_canonical_json()).0, StatusCode::CONFLICT);
    assert_eq!(s.export("").lines().count(), 11);
}

#[test]
fn schema_violations_are_rejected() {
    let s = Server::start();
    let json = trial("p1", 0, 3).to_canonical_json().replace("\"participant_key\":\"p1\",", "");
    assert_eq!(s.post(&json).0, StatusCode::BAD_REQUEST);
    assert_eq!(s.post("not json").0, StatusCode::BAD_REQUEST);
    let mut bad = trial("p1", 0, 3);
    bad.samples[2].t = 0.0;
    assert_eq!(s.post(&bad.to_canonical_json()).0, StatusCode::BAD_REQUEST);
}

#[test]
fn sessions_are_persisted_per_key() {
    let s = Server::start();
    let get = |q: &str| Client::new().get(s.url(&format!("/api/session?{q}"))).send().unwrap();
    let r = get("version=2x2&mode=heatmap&key=k1");
    assert_eq!(r.status(), StatusCode::OK);
    let plan: SessionPlan = r.json().unwrap();
    assert_eq!(plan.trials.len(), 20);
    assert_eq!(plan.seed, seed_for_key("k1"));
    let again: SessionPlan = get("version=2x2&mode=heatmap&key=k1").json().unwrap();
    assert_eq!(again, plan);
    assert_eq!(get("version=3x3&mode=heatmap&key=k1").status(), StatusCode::BAD_REQUEST);
    assert_eq!(get("version=2x2&mode=sparkles&key=k2").status(), StatusCode::BAD_REQUEST);
    assert_eq!(get("version=2x2&mode=heatmap").status(), StatusCode::BAD_REQUEST);
    assert_eq!(get("version=1x2&mode=heatmap&key=k3").status(), StatusCode::BAD_REQUEST);
    let one_d: SessionPlan = get("version=1x2&mode=cost_circle&key=k3").json().unwrap();
    assert_eq!(one_d.trials.len(), 10);
}

#[test]
fn game_endpoint_reports_equilibria() {
    let s = Server::start();
    let info: Value = Client::new().get(s.url("/api/game?version=2x1")).send().unwrap().json().unwrap();
    assert_eq!(info["params"]["d_H"], 2);
    let m_se = info["stackelberg"][1][0].as_f64().unwrap();
    assert!((m_se + 0.37).abs() < 0.02, "{m_se}");
    assert_eq!(Client::new().get(s.url("/api/game?version=9x9")).send().unwrap().status(), StatusCode::BAD_REQUEST);
}

#[test]
fn export_round_trips_and_partitions() {
    let s = Server::start();
    assert_eq!(s.export("").trim(), EXPORT_HEADER.join(","));
    let a = trial("alice", 0, 1500);
    let b = trial("bob", 1, 7);
    s.post(&a.to_canonical_json());
    s.post(&b.to_canonical_json());
    let all = s.export("");
    assert_eq!(all.lines().count(), 1 + 1500 + 7);
    let back = read_trials_csv(all.as_bytes()).unwrap();
    let strip = |mut t: TrialRecord| {
        t.session_id.clear();
        t
    };
    assert_eq!(back, vec![strip(a), strip(b.clone())]);
    let only_bob = s.export("?key=bob");
    assert_eq!(read_trials_csv(only_bob.as_bytes()).unwrap(), vec![strip(b)]);
}

#[test]
fn concurrent_participants_do_not_interleave() {
    let s = Server::start();
    let (participants, trials) = (8, 5);
    thread::scope(|scope| {
        for p in 0..participants {
            let s = &s;
            scope.spawn(move || {
                for i in 0..trials {
                    let (status, _) = s.post(&trial(&format!("p{p}"), i, 120).to_canonical_json());
                    assert_eq!(status, StatusCode::OK);
                }
            });
        }
    });
    let back = read_trials_csv(s.export("").as_bytes()).unwrap();
    assert_eq!(back.len(), participants * trials);
    for t in back {
        let mut expected = trial(&t.participant_key, t.trial_index, 120);
        expected.session_id.clear();
        assert_eq!(t, expected);
    }
}

fn reopen_count(path: &Path) -> usize {
    Store::open(path).unwrap().trial_count().unwrap()
}

#[test]
fn acknowledged_trials_survive_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.sqlite");
    {
        let store = Store::open(&path).unwrap();
        assert!(store.insert_trial(&trial("k", 0, 5)).unwrap().created);
        assert!(!store.insert_trial(&trial("k", 0, 5)).unwrap().created);
        store.insert_trial(&trial("k", 1, 5)).unwrap();
    }
    assert_eq!(reopen_count(&path), 2);
}

#[test]
fn replay_plan_is_served_to_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path().join("r.sqlite")).unwrap();
    let plan = coadapt_core::protocol::build_session(
        coadapt_core::protocol::GameVersion::OneByTwo,
        coadapt_core::protocol::DisplayMode::CostCircle,
        99,
        "fixed",
        false,
    )
    .unwrap();
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let app = router(store, Some(plan.clone()), false, None);
    runtime.spawn(async move { axum::serve(listener, app).await.unwrap() });
    let got: SessionPlan = Client::new().get(format!("{base}/api/session?key=anyone")).send().unwrap().json().unwrap();
    assert_eq!(got.trials, plan.trials);
    assert_eq!(got.participant_key, "anyone");
    let game: Value = Client::new().get(format!("{base}/api/game")).send().unwrap().json().unwrap();
    assert_eq!(game["version"], "1x2");
    runtime.shutdown_background();
}
