//! Browser demo. Three operations are exported to JavaScript:
//!
//! * [`equilibria`]: solve a bundled game;
//! * [`simulate`]: run the zeroth-order learning dynamics and return a
//!   down-sampled trajectory;
//! * [`Trial`]: play one trial with the mouse against the adapting AI, on
//!   either feedback display.
//!
//! Every export returns JSON. The same functions are plain Rust underneath
//! (the `*_json` functions), so they are tested natively.

use coadapt_core::dynamics::{simulate_zeroth_order, SimConfig};
use coadapt_core::protocol::{
    circle_radius, cursor_to_human_action, heatmap_grid, DisplayBounds, DisplayMode, GameVersion, TrialConfig,
    TrialRunner, INITIAL_AI_ACTION, TRIAL_DURATION_S,
};
use coadapt_core::{GameParams, Vector};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub const CIRCLE_MIN_PX: f64 = 4.0;
pub const CIRCLE_MAX_PX: f64 = 180.0;

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn params(version: &str) -> Result<(GameVersion, GameParams), String> {
    let v: GameVersion = version.parse().map_err(|e: coadapt_core::Error| e.to_string())?;
    Ok((v, v.params().map_err(|e| e.to_string())?))
}

pub fn equilibria_json(version: &str) -> Result<String, String> {
    let (_, p) = params(version)?;
    let eq = p.equilibria().map_err(|e| e.to_string())?;
    Ok(json!({
        "d_H": p.d_h(),
        "d_M": p.d_m(),
        "nash": { "h": vec_of(&eq.nash.h), "m": vec_of(&eq.nash.m) },
        "stackelberg": { "h": vec_of(&eq.stackelberg.h), "m": vec_of(&eq.stackelberg.m) },
        "nash_conditions_hold": eq.nash_conditions_hold,
        "stackelberg_conditions_hold": eq.stackelberg_conditions_hold,
    })
    .to_string())
}

/// Trajectory with at most `points` states kept (evenly spaced, always
/// including the last).
pub fn simulate_json(
    version: &str,
    alpha: f64,
    eta: f64,
    sigma: f64,
    steps: usize,
    seed: u64,
    points: usize,
) -> Result<String, String> {
    let (_, p) = params(version)?;
    let mut cfg = SimConfig::for_game(&p);
    cfg.alpha = alpha;
    cfg.eta = eta;
    cfg.sigma = sigma;
    cfg.steps = steps;
    cfg.seed = seed;
    let traj = simulate_zeroth_order(&p, &cfg).map_err(|e| e.to_string())?;
    let n = traj.len();
    let stride = n.div_ceil(points.max(2)).max(1);
    let keep: Vec<usize> = (0..n).step_by(stride).chain((n > 0 && (n - 1) % stride != 0).then_some(n - 1)).collect();
    let states: Vec<_> = keep
        .iter()
        .map(|&i| {
            let s = &traj.steps[i];
            let d = &traj.distances[i];
            json!({ "t": s.t, "h": vec_of(&s.h), "m": vec_of(&s.m), "dist_h_NE": d.h_ne, "dist_h_SE": d.h_se })
        })
        .collect();
    Ok(json!({ "states": states, "diverged_at": traj.diverged_at }).to_string())
}

/// One interactive trial: feed it cursor positions at the display's sample
/// rate and draw what it returns.
#[wasm_bindgen]
pub struct Trial {
    runner: TrialRunner,
    params: GameParams,
    mode: DisplayMode,
    bounds: DisplayBounds,
}

impl Trial {
    pub fn create(version: &str, mode: &str, alpha: f64, symmetry: &[f64]) -> Result<Trial, String> {
        let (_, p) = params(version)?;
        let mode: DisplayMode = mode.parse().map_err(|e: coadapt_core::Error| e.to_string())?;
        if mode == DisplayMode::Heatmap && p.d_h() != 2 {
            return Err("the heatmap display needs a two-dimensional human action".into());
        }
        let m0 = if alpha == 0.0 {
            vec_of(&p.solve_nash().map_err(|e| e.to_string())?.m)
        } else {
            vec![INITIAL_AI_ACTION; p.d_m()]
        };
        let config = TrialConfig {
            alpha,
            symmetry: symmetry.to_vec(),
            duration_s: TRIAL_DURATION_S,
            sample_hz: mode.sample_hz(),
            m0,
        };
        let runner = TrialRunner::new(&p, config, "browser-demo", "demo", 0).map_err(|e| e.to_string())?;
        let bounds = DisplayBounds::for_game(&p);
        Ok(Trial { runner, params: p, mode, bounds })
    }

    /// Records one tick at cursor pixel `(px, py)` and returns the frame:
    /// the sample, plus the circle radius or the 49 heat-map shades.
    pub fn tick_json(&mut self, px: f64, py: f64, width: f64, height: f64) -> Result<String, String> {
        let raw = cursor_to_human_action(self.params.d_h(), px, py, width, height).map_err(|e| e.to_string())?;
        let sample = self.runner.tick(&raw).map_err(|e| e.to_string())?.clone();
        let mut frame = json!({
            "t": sample.t,
            "h": sample.h,
            "m": sample.m,
            "cost_H": sample.cost_h,
            "cost_M": sample.cost_m,
            "done": self.runner.is_done(),
        });
        match self.mode {
            DisplayMode::CostCircle => {
                let scale = self.bounds.circle_scale(CIRCLE_MIN_PX, CIRCLE_MAX_PX);
                frame["radius"] = json!(circle_radius(sample.cost_h, scale, CIRCLE_MIN_PX, CIRCLE_MAX_PX));
            }
            DisplayMode::Heatmap => {
                // The probes live in the game's frame; the dots are drawn in
                // the screen frame, so the offsets are mirrored back.
                let s = &self.runner.config().symmetry;
                let h = Vector::from_iterator(2, raw.iter().zip(s).map(|(x, s)| x * s));
                let m = Vector::from_column_slice(&sample.m);
                let cells = heatmap_grid(&self.params, &h, &m).map_err(|e| e.to_string())?;
                let dots: Vec<_> = cells
                    .iter()
                    .map(|c| json!({ "dx": c.offset[0] * s[0], "dy": c.offset[1] * s[1], "shade": self.bounds.shade(c.cost) }))
                    .collect();
                frame["dots"] = json!(dots);
            }
        }
        Ok(frame.to_string())
    }

    pub fn record(&self) -> coadapt_core::TrialRecord {
        self.runner.clone().finish()
    }
}

#[wasm_bindgen]
impl Trial {
    #[wasm_bindgen(constructor)]
    pub fn new(version: &str, mode: &str, alpha: f64, symmetry: Vec<f64>) -> Result<Trial, JsError> {
        Trial::create(version, mode, alpha, &symmetry).map_err(|e| JsError::new(&e))
    }

    pub fn tick(&mut self, px: f64, py: f64, width: f64, height: f64) -> Result<String, JsError> {
        self.tick_json(px, py, width, height).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(getter)]
    pub fn sample_hz(&self) -> f64 {
        self.runner.config().sample_hz
    }

    #[wasm_bindgen(getter)]
    pub fn done(&self) -> bool {
        self.runner.is_done()
    }

    /// The trial so far as an upload-ready record.
    pub fn record_json(&self, participant_key: &str) -> String {
        let mut r = self.record();
        r.participant_key = participant_key.to_string();
        r.to_canonical_json()
    }
}

#[wasm_bindgen]
pub fn equilibria(version: &str) -> Result<String, JsError> {
    equilibria_json(version).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(
    version: &str,
    alpha: f64,
    eta: f64,
    sigma: f64,
    steps: usize,
    seed: u64,
    points: usize,
) -> Result<String, JsError> {
    simulate_json(version, alpha, eta, sigma, steps, seed, points).map_err(|e| JsError::new(&e))
}
