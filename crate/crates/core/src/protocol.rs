//! Experiment protocol: session plans, mirror symmetries, cursor scaling,
//! feedback display math and the per-tick trial loop.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config;
use crate::dynamics::{AiAdapter, RateMode, EXPERIMENT_RATES};
use crate::error::{Error, Result};
use crate::game::{GameParams, Vector};
use crate::records::{Sample, TrialRecord};

pub const TRIAL_DURATION_S: f64 = 25.0;

/// Half-width of the heat-map probe box around the cursor.
pub const HEATMAP_HALF_WIDTH: f64 = 0.15;
/// Spacing of heat-map probes in action units.
pub const HEATMAP_SPACING: f64 = 0.05;
pub const HEATMAP_SIDE: usize = 7;

/// Initial AI action for adapting trials, away from both equilibria.
pub const INITIAL_AI_ACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GameVersion {
    #[serde(rename = "1x2")]
    OneByTwo,
    #[serde(rename = "2x1")]
    TwoByOne,
    #[serde(rename = "2x2")]
    TwoByTwo,
}

impl GameVersion {
    pub const ALL: [GameVersion; 3] = [GameVersion::OneByTwo, GameVersion::TwoByOne, GameVersion::TwoByTwo];

    pub fn name(self) -> &'static str {
        match self {
            GameVersion::OneByTwo => "1x2",
            GameVersion::TwoByOne => "2x1",
            GameVersion::TwoByTwo => "2x2",
        }
    }

    /// `(d_H, d_M)`.
    pub fn dims(self) -> (usize, usize) {
        match self {
            GameVersion::OneByTwo => (1, 2),
            GameVersion::TwoByOne => (2, 1),
            GameVersion::TwoByTwo => (2, 2),
        }
    }

    pub fn params(self) -> Result<GameParams> {
        config::bundled(self.name())
    }
}

impl fmt::Display for GameVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GameVersion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GameVersion::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown game version {s:?}; expected 1x2, 2x1 or 2x2")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayMode {
    CostCircle,
    Heatmap,
}

impl DisplayMode {
    pub fn name(self) -> &'static str {
        match self {
            DisplayMode::CostCircle => "cost_circle",
            DisplayMode::Heatmap => "heatmap",
        }
    }

    pub fn sample_hz(self) -> f64 {
        match self {
            DisplayMode::CostCircle => 60.0,
            DisplayMode::Heatmap => 24.0,
        }
    }
}

impl fmt::Display for DisplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DisplayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cost_circle" => Ok(DisplayMode::CostCircle),
            "heatmap" => Ok(DisplayMode::Heatmap),
            other => Err(Error::invalid(format!("unknown display mode {other:?}; expected cost_circle or heatmap"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub alpha: f64,
    pub symmetry: Vec<f64>,
    pub duration_s: f64,
    pub sample_hz: f64,
    pub m0: Vec<f64>,
}

impl TrialConfig {
    /// Number of ticks in a full trial.
    pub fn sample_count(&self) -> usize {
        (self.duration_s * self.sample_hz).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionPlan {
    pub participant_key: String,
    pub session_id: String,
    pub game_version: GameVersion,
    pub display_mode: DisplayMode,
    pub seed: u64,
    pub trials: Vec<TrialConfig>,
}

impl SessionPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session plan serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// All sign vectors in `{−1, +1}^d`, starting from the identity.
pub fn symmetries(d: usize) -> Vec<Vec<f64>> {
    (0..1usize << d)
        .map(|bits| (0..d).map(|j| if bits >> j & 1 == 1 { -1.0 } else { 1.0 }).collect())
        .collect()
}

/// One trial per (rate, symmetry) pair, shuffled by `seed`.
///
/// The heat-map display is only defined for the 2x2 game; `research` lifts
/// that restriction.
pub fn build_session(
    version: GameVersion,
    mode: DisplayMode,
    seed: u64,
    participant_key: &str,
    research: bool,
) -> Result<SessionPlan> {
    if mode == DisplayMode::Heatmap && version != GameVersion::TwoByTwo && !research {
        return Err(Error::invalid(format!("the heatmap display requires the 2x2 game, got {version}")));
    }
    let params = version.params()?;
    let nash_m = params.solve_nash()?.m;
    let (d_h, d_m) = version.dims();
    let mut trials = Vec::with_capacity(EXPERIMENT_RATES.len() << d_h);
    for &alpha in &EXPERIMENT_RATES {
        for symmetry in symmetries(d_h) {
            let m0 = if alpha == 0.0 { nash_m.iter().copied().collect() } else { vec![INITIAL_AI_ACTION; d_m] };
            trials.push(TrialConfig { alpha, symmetry, duration_s: TRIAL_DURATION_S, sample_hz: mode.sample_hz(), m0 });
        }
    }
    trials.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(SessionPlan {
        participant_key: participant_key.to_string(),
        session_id: format!("{seed:016x}"),
        game_version: version,
        display_mode: mode,
        seed,
        trials,
    })
}

/// `h_i = s_i · raw_i`. Its own inverse.
pub fn apply_mirror(signs: &[f64], raw: &[f64]) -> Vec<f64> {
    raw.iter().zip(signs).map(|(x, s)| s * x).collect()
}

/// Screen pixel to action square: bottom-left is `(−1, −1)`, top-right is
/// `(1, 1)`, y grows downward on screen. Clamped to the square.
pub fn cursor_to_action(px: f64, py: f64, width: f64, height: f64) -> [f64; 2] {
    let x = 2.0 * px / width - 1.0;
    let y = 1.0 - 2.0 * py / height;
    [x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0)]
}

/// Cursor to a human action of dimension `d_h`. One-dimensional games use
/// the horizontal axis only.
pub fn cursor_to_human_action(d_h: usize, px: f64, py: f64, width: f64, height: f64) -> Result<Vec<f64>> {
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::invalid("viewport dimensions must be positive"));
    }
    let [x, y] = cursor_to_action(px, py, width, height);
    match d_h {
        1 => Ok(vec![x]),
        2 => Ok(vec![x, y]),
        d => Err(Error::dim(format!("cursor input drives one or two action dimensions, not {d}"))),
    }
}

/// Inverse of [`cursor_to_action`] (no clamping).
pub fn action_to_cursor(x: f64, y: f64, width: f64, height: f64) -> [f64; 2] {
    [(x + 1.0) * width / 2.0, (1.0 - y) * height / 2.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatmapCell {
    pub offset: [f64; 2],
    pub cost: f64,
}

/// Heat-map probe offsets, row by row from the bottom-left.
pub fn heatmap_offsets() -> Vec<[f64; 2]> {
    let step = |i: usize| (i as f64 - 3.0) / 20.0;
    (0..HEATMAP_SIDE).flat_map(|j| (0..HEATMAP_SIDE).map(move |i| [step(i), step(j)])).collect()
}

/// Human cost at each probe `h + offset`, holding `m` fixed.
pub fn heatmap_grid(p: &GameParams, h: &Vector, m: &Vector) -> Result<Vec<HeatmapCell>> {
    if p.d_h() != 2 || h.len() != 2 || m.len() != p.d_m() {
        return Err(Error::dim("the heat-map display needs a two-dimensional human action"));
    }
    Ok(heatmap_offsets()
        .into_iter()
        .map(|offset| {
            let probe = h + Vector::from_column_slice(&offset);
            HeatmapCell { offset, cost: p.human().value(&probe, m) }
        })
        .collect())
}

/// `clamp(r_min + scale · max(cost, 0), r_min, r_max)`.
pub fn circle_radius(cost: f64, scale: f64, r_min: f64, r_max: f64) -> f64 {
    (r_min + scale * cost.max(0.0)).clamp(r_min, r_max)
}

/// Luminance in `[0, 1]`; white at `lo`, black at `hi`.
pub fn cost_to_shade(cost: f64, lo: f64, hi: f64) -> f64 {
    1.0 - ((cost - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Fixed per-game normalization for the feedback displays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayBounds {
    pub cost_lo: f64,
    pub cost_hi: f64,
}

impl DisplayBounds {
    /// Range of the human cost over a grid on `[−1, 1]^{d_H + d_M}`.
    pub fn for_game(p: &GameParams) -> Self {
        let (d_h, d_m) = (p.d_h(), p.d_m());
        let n = d_h + d_m;
        let per_axis: usize = if n <= 4 { 11 } else { 3 };
        let coord = |k: usize| -1.0 + 2.0 * k as f64 / (per_axis - 1) as f64;
        let total = per_axis.pow(n as u32);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut h = Vector::zeros(d_h);
        let mut m = Vector::zeros(d_m);
        for idx in 0..total {
            let mut rest = idx;
            for d in 0..n {
                let x = coord(rest % per_axis);
                rest /= per_axis;
                if d < d_h {
                    h[d] = x;
                } else {
                    m[d - d_h] = x;
                }
            }
            let c = p.human().value(&h, &m);
            lo = lo.min(c);
            hi = hi.max(c);
        }
        Self { cost_lo: lo, cost_hi: hi }
    }

    /// Circle scale that reaches `r_max` at the top of the cost range.
    pub fn circle_scale(&self, r_min: f64, r_max: f64) -> f64 {
        if self.cost_hi > 0.0 {
            (r_max - r_min) / self.cost_hi
        } else {
            1.0
        }
    }

    pub fn shade(&self, cost: f64) -> f64 {
        cost_to_shade(cost, self.cost_lo, self.cost_hi)
    }
}

/// Runs one trial tick by tick: each tick records the sample for the
/// current cursor, then lets the AI adapt to it.
#[derive(Debug, Clone)]
pub struct TrialRunner {
    adapter: AiAdapter,
    config: TrialConfig,
    participant_key: String,
    session_id: String,
    trial_index: usize,
    m: Vector,
    samples: Vec<Sample>,
}

impl TrialRunner {
    pub fn new(
        params: &GameParams,
        config: TrialConfig,
        participant_key: &str,
        session_id: &str,
        trial_index: usize,
    ) -> Result<Self> {
        if config.symmetry.len() != params.d_h() || config.m0.len() != params.d_m() {
            return Err(Error::dim("trial configuration does not match the game dimensions"));
        }
        if !(config.sample_hz > 0.0) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let adapter = AiAdapter::new(params, RateMode::Replication)?;
        crate::dynamics::check_rate(config.alpha, RateMode::Replication)?;
        Ok(Self {
            adapter,
            m: Vector::from_column_slice(&config.m0),
            samples: Vec::with_capacity(config.sample_count()),
            config,
            participant_key: participant_key.to_string(),
            session_id: session_id.to_string(),
            trial_index,
        })
    }

    pub fn config(&self) -> &TrialConfig {
        &self.config
    }

    pub fn m(&self) -> &Vector {
        &self.m
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn is_done(&self) -> bool {
        self.samples.len() >= self.config.sample_count()
    }

    /// Records `raw_h` (screen frame) at the next tick time and updates the AI.
    pub fn tick(&mut self, raw_h: &[f64]) -> Result<&Sample> {
        let p = self.adapter.params();
        if raw_h.len() != p.d_h() {
            return Err(Error::dim(format!("expected {} cursor coordinates", p.d_h())));
        }
        let h = Vector::from_vec(apply_mirror(&self.config.symmetry, raw_h));
        let sample = Sample {
            t: self.samples.len() as f64 / self.config.sample_hz,
            h: raw_h.to_vec(),
            m: self.m.iter().copied().collect(),
            cost_h: p.human().value(&h, &self.m),
            cost_m: p.ai().value(&self.m, &h),
        };
        self.m = self.adapter.step(&h, &self.m, self.config.alpha)?;
        self.samples.push(sample);
        Ok(self.samples.last().expect("just pushed"))
    }

    pub fn finish(self) -> TrialRecord {
        TrialRecord {
            participant_key: self.participant_key,
            session_id: self.session_id,
            trial_index: self.trial_index,
            alpha: self.config.alpha,
            symmetry: self.config.symmetry,
            samples: self.samples,
        }
    }
}
