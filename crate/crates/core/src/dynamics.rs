//! Learning dynamics: the AI's gradient adaptation rule, the two-point
//! zeroth-order model of the human, and simultaneous gradient play.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{calibrate_offsets, search_coupling_scale, CouplingSearch, GameParams, JointAction, Matrix, PlayerCost, Vector};
use crate::records::fmt_f64;

/// Adaptation rates used in the human experiments.
pub const EXPERIMENT_RATES: [f64; 5] = [0.0, 0.001, 0.01, 0.1, 1.0];

/// States whose norm exceeds this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum RateMode {
    /// `α ∈ [0, 1]`, with the piecewise rule at the endpoints.
    #[default]
    Replication,
    /// Any `α ≥ 0`; rates above one take a plain gradient step.
    General,
}

/// The AI's piecewise adaptation rule:
///
/// * `α = 0`: hold the Nash action `m^NE`;
/// * `0 < α < 1`: one gradient step `m − α (A_M m + B_M h + a_M)`;
/// * `α = 1`: best response `−A_M⁻¹ (B_M h + a_M)`.
#[derive(Debug, Clone)]
pub struct AiAdapter {
    params: GameParams,
    nash_m: Vector,
    mode: RateMode,
}

impl AiAdapter {
    pub fn new(params: &GameParams, mode: RateMode) -> Result<Self> {
        let nash_m = params.solve_nash()?.m;
        Ok(Self { params: params.clone(), nash_m, mode })
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    pub fn mode(&self) -> RateMode {
        self.mode
    }

    pub fn nash_m(&self) -> &Vector {
        &self.nash_m
    }

    pub fn step(&self, h: &Vector, m: &Vector, alpha: f64) -> Result<Vector> {
        check_rate(alpha, self.mode)?;
        if h.len() != self.params.d_h() || m.len() != self.params.d_m() {
            return Err(Error::Dimension("ai_step action dimensions".into()));
        }
        if alpha == 0.0 {
            Ok(self.nash_m.clone())
        } else if alpha == 1.0 {
            self.params.best_response_m(h)
        } else {
            Ok(ai_gradient_step(&self.params, h, m, alpha))
        }
    }
}

pub fn check_rate(alpha: f64, mode: RateMode) -> Result<()> {
    let ok = match mode {
        RateMode::Replication => (0.0..=1.0).contains(&alpha),
        RateMode::General => alpha >= 0.0 && alpha.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("adaptation rate {alpha} out of range for {mode:?} mode")))
    }
}

/// `m − α ∂c_M/∂m (h, m)`.
pub fn ai_gradient_step(p: &GameParams, h: &Vector, m: &Vector, alpha: f64) -> Vector {
    m - p.ai().grad_own(m, h) * alpha
}

/// Piecewise AI update (see [`AiAdapter`]). Solves for `m^NE` on every call;
/// hold an [`AiAdapter`] to reuse it.
pub fn ai_step(p: &GameParams, h: &Vector, m: &Vector, alpha: f64) -> Result<Vector> {
    AiAdapter::new(p, RateMode::Replication)?.step(h, m, alpha)
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    /// AI adaptation rate `α`.
    pub alpha: f64,
    /// Human model rate `η`.
    pub eta: f64,
    /// Perturbation scale `σ`.
    pub sigma: f64,
    /// Outer iterations `T`.
    pub steps: usize,
    /// Inner AI steps `K`.
    pub inner_steps: usize,
    pub h0: Vec<f64>,
    pub m0: Vec<f64>,
    pub seed: u64,
    pub rate_mode: RateMode,
}

impl SimConfig {
    /// Defaults: `α = 0.01, η = 0.01, σ = 0.1, T = 1000, K = 10`, `h0 = 0`,
    /// `m0 = (0.1, …, 0.1)`, general-rate mode.
    pub fn new(d_h: usize, d_m: usize) -> Self {
        Self {
            alpha: 0.01,
            eta: 0.01,
            sigma: 0.1,
            steps: 1000,
            inner_steps: 10,
            h0: vec![0.0; d_h],
            m0: vec![0.1; d_m],
            seed: 0,
            rate_mode: RateMode::General,
        }
    }

    pub fn for_game(p: &GameParams) -> Self {
        Self::new(p.d_h(), p.d_m())
    }

    pub fn validate(&self, p: &GameParams) -> Result<()> {
        check_rate(self.alpha, self.rate_mode)?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be a finite non-negative number, got {}", self.eta)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("T must be at least 1"));
        }
        if self.h0.len() != p.d_h() || self.m0.len() != p.d_m() {
            return Err(Error::Dimension(format!(
                "initial state is ({}, {}), game is {}x{}",
                self.h0.len(),
                self.m0.len(),
                p.d_h(),
                p.d_m()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub t: usize,
    pub h: Vector,
    pub m: Vector,
    pub cost_h: f64,
    pub cost_m: f64,
}

/// Euclidean distances of one state to the two equilibria, split by player.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distances {
    pub h_ne: f64,
    pub h_se: f64,
    pub m_ne: f64,
    pub m_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub distances: Vec<Distances>,
    /// Index of the first state that left the finite/bounded region.
    pub diverged_at: Option<usize>,
}

struct Recorder<'a> {
    params: &'a GameParams,
    nash: JointAction,
    stackelberg: JointAction,
    out: Trajectory,
}

impl<'a> Recorder<'a> {
    fn new(params: &'a GameParams, capacity: usize) -> Result<Self> {
        Ok(Self {
            params,
            nash: params.solve_nash()?,
            stackelberg: params.solve_stackelberg()?,
            out: Trajectory {
                steps: Vec::with_capacity(capacity),
                distances: Vec::with_capacity(capacity),
                diverged_at: None,
            },
        })
    }

    /// Records the state, or marks divergence and returns false.
    fn record(&mut self, t: usize, h: &Vector, m: &Vector) -> bool {
        let bounded = |v: &Vector| v.iter().all(|x| x.is_finite()) && v.norm() <= DIVERGENCE_NORM;
        if !bounded(h) || !bounded(m) {
            self.out.diverged_at = Some(t);
            return false;
        }
        let cost_h = self.params.human().value(h, m);
        let cost_m = self.params.ai().value(m, h);
        self.out.distances.push(Distances {
            h_ne: (h - &self.nash.h).norm(),
            h_se: (h - &self.stackelberg.h).norm(),
            m_ne: (m - &self.nash.m).norm(),
            m_se: (m - &self.stackelberg.m).norm(),
        });
        self.out.steps.push(TrajectoryStep { t, h: h.clone(), m: m.clone(), cost_h, cost_m });
        true
    }
}

/// `K` gradient steps of the AI against a fixed human action, starting from `m`.
fn inner_ai_steps(ai: &PlayerCost, h: &Vector, m: &Vector, alpha: f64, k: usize) -> Vector {
    let drive = &ai.coupling * h + &ai.linear;
    let mut u = m.clone();
    for _ in 0..k {
        let g = &ai.quad * &u + &drive;
        u.axpy(-alpha, &g, 1.0);
    }
    u
}

fn gaussian_vector(rng: &mut impl Rng, normal: &Normal<f64>, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| normal.sample(rng)))
}

/// Simulated human using a two-point zeroth-order gradient estimate against an
/// AI that takes `K` look-ahead gradient steps on each probe:
///
/// ```text
///     δ ~ N(0, σ² I)
///     u_K, v_K  = K AI steps from m_t against h_t + δ and h_t − δ
///     g_t       = (c_H(h_t + δ, u_K) − c_H(h_t − δ, v_K)) / σ²
///     h_{t+1}   = h_t − η g_t δ
///     m_{t+1}   = m_t − α ∂c_M/∂m (h_t, m_t)
/// ```
///
/// For a quadratic cost `E[g δ] = 2 ∇`, so the human's effective rate is `2η`.
pub fn simulate_zeroth_order(p: &GameParams, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate(p)?;
    let normal = Normal::new(0.0, cfg.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (human, ai) = (p.human(), p.ai());
    let sigma2 = cfg.sigma * cfg.sigma;

    let mut h = Vector::from_column_slice(&cfg.h0);
    let mut m = Vector::from_column_slice(&cfg.m0);
    let mut rec = Recorder::new(p, cfg.steps + 1)?;
    if !rec.record(0, &h, &m) {
        return Ok(rec.out);
    }
    for t in 0..cfg.steps {
        let delta = gaussian_vector(&mut rng, &normal, p.d_h());
        let h_plus = &h + &delta;
        let h_minus = &h - &delta;
        let u = inner_ai_steps(ai, &h_plus, &m, cfg.alpha, cfg.inner_steps);
        let v = inner_ai_steps(ai, &h_minus, &m, cfg.alpha, cfg.inner_steps);
        let g = (human.value(&h_plus, &u) - human.value(&h_minus, &v)) / sigma2;

        let m_next = ai_gradient_step(p, &h, &m, cfg.alpha);
        h.axpy(-cfg.eta * g, &delta, 1.0);
        m = m_next;
        if !rec.record(t + 1, &h, &m) {
            break;
        }
    }
    Ok(rec.out)
}

/// Both players descend their own partial gradients simultaneously:
/// `h ← h − η ∂c_H/∂h`, `m ← m − α ∂c_M/∂m`. `σ` and `K` are unused.
pub fn simulate_simultaneous_gd(p: &GameParams, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate(p)?;
    let mut h = Vector::from_column_slice(&cfg.h0);
    let mut m = Vector::from_column_slice(&cfg.m0);
    let mut rec = Recorder::new(p, cfg.steps + 1)?;
    if !rec.record(0, &h, &m) {
        return Ok(rec.out);
    }
    for t in 0..cfg.steps {
        let gh = p.human().grad_own(&h, &m);
        let gm = p.ai().grad_own(&m, &h);
        h.axpy(-cfg.eta, &gh, 1.0);
        m.axpy(-cfg.alpha, &gm, 1.0);
        if !rec.record(t + 1, &h, &m) {
            break;
        }
    }
    Ok(rec.out)
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state(&self) -> Option<&TrajectoryStep> {
        self.steps.last()
    }

    pub fn final_distances(&self) -> Option<Distances> {
        self.distances.last().copied()
    }

    pub fn csv_header(d_h: usize, d_m: usize) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=d_h).map(|i| format!("h_{i}")));
        cols.extend((1..=d_m).map(|i| format!("m_{i}")));
        cols.extend(
            ["cost_H", "cost_M", "dist_h_NE", "dist_h_SE", "dist_m_NE", "dist_m_SE"].map(String::from),
        );
        cols
    }

    /// One row per recorded state.
    pub fn write_csv<W: Write>(&self, d_h: usize, d_m: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header(d_h, d_m))?;
        for (s, d) in self.steps.iter().zip(&self.distances) {
            let mut row = vec![s.t.to_string()];
            row.extend(s.h.iter().chain(s.m.iter()).map(|&x| fmt_f64(x)));
            row.extend([s.cost_h, s.cost_m, d.h_ne, d.h_se, d.m_ne, d.m_se].map(fmt_f64));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub mean: Vector,
    /// Per-coordinate standard error of the mean.
    pub std_err: Vector,
    pub samples: usize,
}

/// Sample mean of the two-point estimate `g δ` with the AI held fixed (no
/// inner steps). Its expectation on a quadratic cost is `2 ∂c_H/∂h`.
pub fn estimate_gradient_bias(
    p: &GameParams,
    h: &Vector,
    m: &Vector,
    sigma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be positive"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma must be positive"));
    }
    p.grad_h(&JointAction::new(h.clone(), m.clone()))?;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = p.d_h();
    let mut sum = Vector::zeros(d);
    let mut sum_sq = Vector::zeros(d);
    let sigma2 = sigma * sigma;
    for _ in 0..n_samples {
        let delta = gaussian_vector(&mut rng, &normal, d);
        let g = (p.human().value(&(h + &delta), m) - p.human().value(&(h - &delta), m)) / sigma2;
        let sample = delta * g;
        sum_sq += sample.component_mul(&sample);
        sum += sample;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let std_err = if n_samples > 1 {
        let var = (sum_sq / n - mean.component_mul(&mean)) * (n / (n - 1.0));
        var.map(|v| (v.max(0.0) / n).sqrt())
    } else {
        Vector::from_element(d, f64::INFINITY)
    };
    Ok(GradientEstimate { mean, std_err, samples: n_samples })
}

/// Knobs for [`random_game`].
///
/// The defaults mirror the structure of the bundled experiment games: weak
/// direct coupling `B_H`, a stronger follower coupling `B_M`, and a large
/// partner offset `b_H`, so the two equilibria are well separated while the
/// human's Nash action is insensitive to where the AI starts.
#[derive(Debug, Clone)]
pub struct RandomGameOptions {
    /// Multiplier on the human's curvature matrices `A_H` and `D_H`.
    pub human_scale: f64,
    /// Spread of the Gram part of each curvature matrix `I + c WWᵀ/n`.
    pub curvature_spread: f64,
    pub direct_coupling: f64,
    pub follower_coupling: f64,
    /// Half-width of the uniform draw for `a_H`, relative to `human_scale`.
    pub human_offset: f64,
    /// Half-width of the uniform draw for `b_H`, relative to `human_scale`.
    pub partner_offset: f64,
    /// Minimum `‖h^NE − h^SE‖`.
    pub min_separation: f64,
    pub max_attempts: usize,
    /// Calibrate `a_H` so the Nash human action is exactly this.
    pub nash_target: Option<Vector>,
    /// With a Nash target, also fit a scalar on `B_H` to move `h^SE` here.
    pub stackelberg_target: Option<Vector>,
    pub search: CouplingSearch,
}

impl Default for RandomGameOptions {
    fn default() -> Self {
        Self {
            human_scale: 0.25,
            curvature_spread: 0.5,
            direct_coupling: 0.02,
            follower_coupling: 1.0,
            human_offset: 0.5,
            partner_offset: 2.0,
            min_separation: 0.1,
            max_attempts: 64,
            nash_target: None,
            stackelberg_target: None,
            search: CouplingSearch::default(),
        }
    }
}

fn gram_spd(rng: &mut impl Rng, n: usize, spread: f64) -> Matrix {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let w = Matrix::from_fn(n, n, |_, _| std.sample(rng));
    let g = &w * w.transpose() / n as f64;
    Matrix::identity(n, n) + (&g + g.transpose()) * (0.5 * spread)
}

fn draw_game(rng: &mut impl Rng, d_h: usize, d_m: usize, o: &RandomGameOptions) -> Result<GameParams> {
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let s = o.human_scale;
    let human_quad = gram_spd(rng, d_h, o.curvature_spread) * s;
    let ai_quad = gram_spd(rng, d_m, o.curvature_spread);
    let human_partner_quad = gram_spd(rng, d_m, o.curvature_spread) * s;
    let ai_partner_quad = gram_spd(rng, d_h, o.curvature_spread);
    let bh = o.direct_coupling * s / (d_m as f64).sqrt();
    let human_coupling = Matrix::from_fn(d_h, d_m, |_, _| std.sample(rng) * bh);
    let bm = o.follower_coupling / (d_h as f64).sqrt();
    let ai_coupling = Matrix::from_fn(d_m, d_h, |_, _| std.sample(rng) * bm);
    let human_linear = Vector::from_fn(d_h, |_, _| rng.random_range(-1.0..1.0) * o.human_offset * s);
    let partner_linear = Vector::from_fn(d_m, |_, _| rng.random_range(-1.0..1.0) * o.partner_offset * s);
    GameParams::new(
        PlayerCost {
            quad: human_quad,
            coupling: human_coupling,
            partner_quad: human_partner_quad,
            linear: human_linear,
            partner_linear,
        },
        PlayerCost {
            quad: ai_quad,
            coupling: ai_coupling,
            partner_quad: ai_partner_quad,
            linear: Vector::zeros(d_m),
            partner_linear: Vector::zeros(d_h),
        },
    )
}

/// Seeded random game satisfying every existence condition, with a
/// positive-definite leader Hessian and distinct equilibria.
pub fn random_game(d_h: usize, d_m: usize, seed: u64, options: &RandomGameOptions) -> Result<GameParams> {
    if d_h == 0 || d_m == 0 {
        return Err(Error::invalid("game dimensions must be at least 1"));
    }
    for target in [&options.nash_target, &options.stackelberg_target].into_iter().flatten() {
        if target.len() != d_h {
            return Err(Error::Dimension(format!("target has length {}, expected {d_h}", target.len())));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = String::from("no attempts made");
    for _ in 0..options.max_attempts {
        let game = draw_game(&mut rng, d_h, d_m, options)?;
        let game = match (&options.nash_target, &options.stackelberg_target) {
            (Some(ne), Some(se)) => match search_coupling_scale(&game, ne, se, &options.search) {
                Ok(c) => c.params,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            },
            (Some(ne), None) => match calibrate_offsets(&game, ne, ne) {
                Ok(c) => c.params,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            },
            (None, _) => game,
        };
        if let Err(e) = game.validate() {
            last = e.to_string();
            continue;
        }
        let (ne, se) = match (game.solve_nash(), game.solve_stackelberg()) {
            (Ok(ne), Ok(se)) => (ne, se),
            (Err(e), _) | (_, Err(e)) => {
                last = e.to_string();
                continue;
            }
        };
        let separation = (&ne.h - &se.h).norm();
        if separation < options.min_separation {
            last = format!("equilibria only {separation:.3e} apart");
            continue;
        }
        return Ok(game);
    }
    Err(Error::GenerationFailed { attempts: options.max_attempts, reason: last })
}

/// One `(α, seed)` run of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub alpha: f64,
    pub seed: u64,
    pub trajectory: Trajectory,
}

/// Runs [`simulate_zeroth_order`] for every `(α, seed)` pair in parallel.
/// Results come back ordered by `α` then seed.
pub fn run_sweep(p: &GameParams, base: &SimConfig, alphas: &[f64], seeds: &[u64]) -> Result<Vec<SweepRun>> {
    if alphas.is_empty() {
        return Err(Error::invalid("sweep needs at least one adaptation rate"));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("sweep needs at least one seed"));
    }
    let jobs: Vec<(f64, u64)> = alphas.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    jobs.into_par_iter()
        .map(|(alpha, seed)| {
            let cfg = SimConfig { alpha, seed, ..base.clone() };
            simulate_zeroth_order(p, &cfg).map(|trajectory| SweepRun { alpha, seed, trajectory })
        })
        .collect()
}

/// Median final distances for one adaptation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSummary {
    pub alpha: f64,
    pub runs: usize,
    pub diverged: usize,
    pub median: Distances,
}

pub fn summarize_sweep(runs: &[SweepRun]) -> Vec<SweepSummary> {
    let mut alphas: Vec<f64> = runs.iter().map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    alphas
        .into_iter()
        .map(|alpha| {
            let group: Vec<&SweepRun> = runs.iter().filter(|r| r.alpha == alpha).collect();
            let finals: Vec<Distances> = group.iter().filter_map(|r| r.trajectory.final_distances()).collect();
            let med = |f: fn(&Distances) -> f64| {
                crate::analysis::median(&finals.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN)
            };
            SweepSummary {
                alpha,
                runs: group.len(),
                diverged: group.iter().filter(|r| r.trajectory.diverged_at.is_some()).count(),
                median: Distances {
                    h_ne: med(|d| d.h_ne),
                    h_se: med(|d| d.h_se),
                    m_ne: med(|d| d.m_ne),
                    m_se: med(|d| d.m_se),
                },
            }
        })
        .collect()
}

pub fn write_sweep_summary<W: Write>(rows: &[SweepSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "alpha", "runs", "diverged", "median_dist_h_NE", "median_dist_h_SE", "median_dist_m_NE", "median_dist_m_SE",
    ])?;
    for r in rows {
        w.write_record([
            r.alpha.to_string(),
            r.runs.to_string(),
            r.diverged.to_string(),
            fmt_f64(r.median.h_ne),
            fmt_f64(r.median.h_se),
            fmt_f64(r.median.m_ne),
            fmt_f64(r.median.m_se),
        ])?;
    }
    w.flush()?;
    Ok(())
}
