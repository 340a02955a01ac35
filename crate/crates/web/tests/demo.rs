use coadapt_core::protocol::{DisplayBounds, GameVersion};
use coadapt_web::{equilibria_json, simulate_json, Trial, CIRCLE_MAX_PX, CIRCLE_MIN_PX};
use serde_json::Value;

#[test]
fn equilibria_for_every_version() {
    let v: Value = serde_json::from_str(&equilibria_json("2x2").unwrap()).unwrap();
    assert!((v["nash"]["h"][0].as_f64().unwrap() + 0.25).abs() < 0.02);
    assert_eq!(v["stackelberg_conditions_hold"], true);
    assert!(equilibria_json("1x2").is_ok() && equilibria_json("2x1").is_ok());
    assert!(equilibria_json("5x5").is_err());
}

#[test]
fn simulation_is_down_sampled() {
    let v: Value = serde_json::from_str(&simulate_json("2x2", 0.1, 0.01, 0.1, 1000, 1, 50).unwrap()).unwrap();
    let states = v["states"].as_array().unwrap();
    assert!(states.len() <= 52);
    assert_eq!(states.last().unwrap()["t"], 1000);
    assert!(simulate_json("2x2", 0.1, 0.01, 0.0, 10, 1, 50).is_err());
}

#[test]
fn circle_trial_runs_to_completion() {
    let mut t = Trial::create("1x2", "cost_circle", 1.0, &[-1.0]).unwrap();
    let mut last = Value::Null;
    while !t.done() {
        last = serde_json::from_str(&t.tick_json(300.0, 50.0, 800.0, 600.0).unwrap()).unwrap();
    }
    assert_eq!(last["done"], true);
    let r = last["radius"].as_f64().unwrap();
    assert!((CIRCLE_MIN_PX..=CIRCLE_MAX_PX).contains(&r));
    let rec = t.record();
    assert_eq!(rec.samples.len(), 1500);
    assert_eq!(rec.samples[0].h, vec![-0.25]);
}

#[test]
fn heatmap_frame_has_49_dots() {
    let mut t = Trial::create("2x2", "heatmap", 0.01, &[1.0, -1.0]).unwrap();
    let frame: Value = serde_json::from_str(&t.tick_json(400.0, 300.0, 800.0, 600.0).unwrap()).unwrap();
    let dots = frame["dots"].as_array().unwrap();
    assert_eq!(dots.len(), 49);
    let center = &dots[24];
    assert_eq!((center["dx"].as_f64(), center["dy"].as_f64()), (Some(0.0), Some(0.0)));
    let bounds = DisplayBounds::for_game(&GameVersion::TwoByTwo.params().unwrap());
    assert_eq!(center["shade"].as_f64().unwrap(), bounds.shade(frame["cost_H"].as_f64().unwrap()));
    assert!(Trial::create("1x2", "heatmap", 0.01, &[1.0]).is_err());
}
