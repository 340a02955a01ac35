//! Two-player quadratic games between a human (leader) and an adapting AI.
//!
//! Both costs share one shape. For a player with own action `x` and partner
//! action `y`:
//!
//! ```text
//!     c(x, y) = ½ xᵀA x + xᵀB y + ½ yᵀD y + xᵀa + yᵀb
//! ```
//!
//! The human's cost is `c_H(h, m)` with `x = h, y = m`; the AI's cost is
//! `c_M(h, m)` with `x = m, y = h`. Everything below is closed form: the Nash
//! point is one block linear solve, the human-led Stackelberg point is one
//! solve of the leader's reduced problem after substituting the AI's (affine)
//! best response.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Absolute tolerance on gradient norms in the differential equilibrium checks.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
/// Smallest eigenvalue that still counts as positive definite.
pub const EIGENVALUE_THRESHOLD: f64 = 1e-10;

const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// One player's quadratic cost parameters, written from that player's point of view.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerCost {
    /// `A`: curvature in the player's own action.
    pub quad: Matrix,
    /// `B`: bilinear coupling, own rows by partner columns.
    pub coupling: Matrix,
    /// `D`: curvature in the partner's action.
    pub partner_quad: Matrix,
    /// `a`: linear term in the player's own action.
    pub linear: Vector,
    /// `b`: linear term in the partner's action.
    pub partner_linear: Vector,
}

impl PlayerCost {
    pub fn own_dim(&self) -> usize {
        self.quad.nrows()
    }

    pub fn partner_dim(&self) -> usize {
        self.partner_quad.nrows()
    }

    pub fn value(&self, own: &Vector, partner: &Vector) -> f64 {
        0.5 * own.dot(&(&self.quad * own))
            + own.dot(&(&self.coupling * partner))
            + 0.5 * partner.dot(&(&self.partner_quad * partner))
            + own.dot(&self.linear)
            + partner.dot(&self.partner_linear)
    }

    /// Partial gradient in the player's own action: `A x + B y + a`.
    pub fn grad_own(&self, own: &Vector, partner: &Vector) -> Vector {
        &self.quad * own + &self.coupling * partner + &self.linear
    }

    /// Partial gradient in the partner's action: `Bᵀ x + D y + b`.
    pub fn grad_partner(&self, own: &Vector, partner: &Vector) -> Vector {
        self.coupling.tr_mul(own) + &self.partner_quad * partner + &self.partner_linear
    }

    fn check_shapes(&self, who: &str, own: usize, partner: usize) -> Result<()> {
        let shape = |m: &Matrix| (m.nrows(), m.ncols());
        let expect = [
            ("A", shape(&self.quad), (own, own)),
            ("B", shape(&self.coupling), (own, partner)),
            ("D", shape(&self.partner_quad), (partner, partner)),
            ("a", (self.linear.len(), 1), (own, 1)),
            ("b", (self.partner_linear.len(), 1), (partner, 1)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::dim(format!(
                    "{name}_{who} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        self.quad.iter().all(|v| v.is_finite())
            && self.coupling.iter().all(|v| v.is_finite())
            && self.partner_quad.iter().all(|v| v.is_finite())
            && self.linear.iter().all(|v| v.is_finite())
            && self.partner_linear.iter().all(|v| v.is_finite())
    }
}

/// Full parameterization of the human and AI costs.
#[derive(Debug, Clone, PartialEq)]
pub struct GameParams {
    human: PlayerCost,
    ai: PlayerCost,
}

/// A pair of action vectors `(h, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAction {
    pub h: Vector,
    pub m: Vector,
}

impl JointAction {
    pub fn new(h: Vector, m: Vector) -> Self {
        Self { h, m }
    }

    pub fn zeros(d_h: usize, d_m: usize) -> Self {
        Self::new(Vector::zeros(d_h), Vector::zeros(d_m))
    }

    pub fn from_slices(h: &[f64], m: &[f64]) -> Self {
        Self::new(Vector::from_column_slice(h), Vector::from_column_slice(m))
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(self.m.iter()).all(|v| v.is_finite())
    }
}

fn is_symmetric(m: &Matrix) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= SYMMETRY_TOLERANCE * scale
}

fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Matrix) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub fn is_positive_definite(m: &Matrix) -> bool {
    min_eigenvalue(m) > EIGENVALUE_THRESHOLD
}

fn solve_square(m: Matrix, rhs: &Vector, what: &str) -> Result<Vector> {
    let sol = m
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Singular(format!("{what} is singular")))?;
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(Error::Singular(format!("{what} is numerically singular")))
    }
}

fn solve_matrix(m: &Matrix, rhs: &Matrix, what: &str) -> Result<Matrix> {
    let sol = m
        .clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::Singular(format!("{what} is singular")))?;
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(Error::Singular(format!("{what} is numerically singular")))
    }
}

/// Eigenvalue summary of the existence conditions on a game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantReport {
    /// min eig of `A_H`.
    pub human_quad: f64,
    /// min eig of `A_M`.
    pub ai_quad: f64,
    /// min eig of `A_H − B_H A_M⁻¹ B_M` (symmetric part).
    pub schur: f64,
    /// min eig of the leader's total Hessian after substituting the best response.
    pub total_hessian: f64,
}

impl InvariantReport {
    /// The three stated existence conditions (`A_H`, `A_M`, Schur complement).
    pub fn existence_holds(&self) -> bool {
        self.human_quad > EIGENVALUE_THRESHOLD
            && self.ai_quad > EIGENVALUE_THRESHOLD
            && self.schur > EIGENVALUE_THRESHOLD
    }
}

impl GameParams {
    /// Checks shapes, finiteness and symmetry. `D_H` and `D_M` are symmetrized
    /// with a warning when asymmetric; an asymmetric `A_H` or `A_M` is rejected.
    /// Positive definiteness is *not* required here, see [`GameParams::validate`].
    pub fn new(mut human: PlayerCost, mut ai: PlayerCost) -> Result<Self> {
        let d_h = human.own_dim();
        let d_m = ai.own_dim();
        if d_h == 0 || d_m == 0 {
            return Err(Error::dim("action dimensions must be positive"));
        }
        human.check_shapes("H", d_h, d_m)?;
        ai.check_shapes("M", d_m, d_h)?;
        if !human.all_finite() || !ai.all_finite() {
            return Err(Error::invalid("game parameters must be finite"));
        }
        if !is_symmetric(&human.quad) {
            return Err(Error::invalid("A_H must be symmetric"));
        }
        if !is_symmetric(&ai.quad) {
            return Err(Error::invalid("A_M must be symmetric"));
        }
        if !is_symmetric(&human.partner_quad) {
            log::warn!("D_H is not symmetric; using (D_H + D_Hᵀ)/2");
            human.partner_quad = symmetrize(&human.partner_quad);
        }
        if !is_symmetric(&ai.partner_quad) {
            log::warn!("D_M is not symmetric; using (D_M + D_Mᵀ)/2");
            ai.partner_quad = symmetrize(&ai.partner_quad);
        }
        Ok(Self { human, ai })
    }

    pub fn human(&self) -> &PlayerCost {
        &self.human
    }

    pub fn ai(&self) -> &PlayerCost {
        &self.ai
    }

    pub fn d_h(&self) -> usize {
        self.human.own_dim()
    }

    pub fn d_m(&self) -> usize {
        self.ai.own_dim()
    }

    /// Replaces the human's linear offset `a_H`.
    pub fn with_human_linear(mut self, a_h: Vector) -> Result<Self> {
        if a_h.len() != self.d_h() {
            return Err(Error::dim(format!("a_H has length {}, expected {}", a_h.len(), self.d_h())));
        }
        self.human.linear = a_h;
        Ok(self)
    }

    /// Same game with the human's curvature `A_H` negated (useful for second-order checks).
    pub fn with_negated_human_quad(mut self) -> Self {
        self.human.quad = -self.human.quad;
        self
    }

    pub fn invariants(&self) -> InvariantReport {
        let human_quad = min_eigenvalue(&self.human.quad);
        let ai_quad = min_eigenvalue(&self.ai.quad);
        let schur = solve_matrix(&self.ai.quad, &self.ai.coupling, "A_M")
            .map(|x| symmetrize(&(&self.human.quad - &self.human.coupling * x)))
            .map(|s| min_eigenvalue(&s))
            .unwrap_or(f64::NAN);
        let total_hessian = self
            .leader_problem()
            .map(|l| min_eigenvalue(&l.hessian))
            .unwrap_or(f64::NAN);
        InvariantReport { human_quad, ai_quad, schur, total_hessian }
    }

    /// Requires `A_H ≻ 0`, `A_M ≻ 0` and `A_H − B_H A_M⁻¹ B_M ≻ 0`.
    pub fn validate(&self) -> Result<()> {
        let r = self.invariants();
        if !(r.human_quad > EIGENVALUE_THRESHOLD) {
            return Err(Error::NotPositiveDefinite(format!("A_H (min eigenvalue {:.3e})", r.human_quad)));
        }
        if !(r.ai_quad > EIGENVALUE_THRESHOLD) {
            return Err(Error::NotPositiveDefinite(format!("A_M (min eigenvalue {:.3e})", r.ai_quad)));
        }
        if !(r.schur > EIGENVALUE_THRESHOLD) {
            return Err(Error::NotPositiveDefinite(format!(
                "A_H - B_H A_M^-1 B_M (min eigenvalue {:.3e})",
                r.schur
            )));
        }
        Ok(())
    }

    fn check_action(&self, x: &JointAction) -> Result<()> {
        if x.h.len() != self.d_h() || x.m.len() != self.d_m() {
            return Err(Error::dim(format!(
                "joint action is ({}, {}), game is {}x{}",
                x.h.len(),
                x.m.len(),
                self.d_h(),
                self.d_m()
            )));
        }
        Ok(())
    }

    fn check_h(&self, h: &Vector) -> Result<()> {
        if h.len() != self.d_h() {
            return Err(Error::dim(format!("h has length {}, expected {}", h.len(), self.d_h())));
        }
        Ok(())
    }

    /// `c_H(h, m)`.
    pub fn cost_h(&self, x: &JointAction) -> Result<f64> {
        self.check_action(x)?;
        Ok(self.human.value(&x.h, &x.m))
    }

    /// `c_M(h, m)`.
    pub fn cost_m(&self, x: &JointAction) -> Result<f64> {
        self.check_action(x)?;
        Ok(self.ai.value(&x.m, &x.h))
    }

    /// `∂c_H/∂h = A_H h + B_H m + a_H`.
    pub fn grad_h(&self, x: &JointAction) -> Result<Vector> {
        self.check_action(x)?;
        Ok(self.human.grad_own(&x.h, &x.m))
    }

    /// `∂c_M/∂m = A_M m + B_M h + a_M`.
    pub fn grad_m(&self, x: &JointAction) -> Result<Vector> {
        self.check_action(x)?;
        Ok(self.ai.grad_own(&x.m, &x.h))
    }

    /// The AI's best response `−A_M⁻¹(B_M h + a_M)`.
    pub fn best_response_m(&self, h: &Vector) -> Result<Vector> {
        self.check_h(h)?;
        let rhs = -(&self.ai.coupling * h + &self.ai.linear);
        solve_square(self.ai.quad.clone(), &rhs, "A_M")
    }

    /// Solves `[[A_H, B_H], [B_M, A_M]] [h; m] = −[a_H; a_M]`.
    pub fn solve_nash(&self) -> Result<JointAction> {
        let (dh, dm) = (self.d_h(), self.d_m());
        let mut k = Matrix::zeros(dh + dm, dh + dm);
        k.view_mut((0, 0), (dh, dh)).copy_from(&self.human.quad);
        k.view_mut((0, dh), (dh, dm)).copy_from(&self.human.coupling);
        k.view_mut((dh, 0), (dm, dh)).copy_from(&self.ai.coupling);
        k.view_mut((dh, dh), (dm, dm)).copy_from(&self.ai.quad);
        let mut rhs = Vector::zeros(dh + dm);
        rhs.rows_mut(0, dh).copy_from(&(-&self.human.linear));
        rhs.rows_mut(dh, dm).copy_from(&(-&self.ai.linear));
        let sol = solve_square(k, &rhs, "Nash first-order system (no isolated Nash equilibrium)")?;
        Ok(JointAction::new(sol.rows(0, dh).into_owned(), sol.rows(dh, dm).into_owned()))
    }

    /// The leader's problem after substituting the follower's best response.
    pub fn leader_problem(&self) -> Result<LeaderProblem> {
        let gain = -solve_matrix(&self.ai.quad, &self.ai.coupling, "A_M")?;
        let offset = -solve_square(self.ai.quad.clone(), &self.ai.linear, "A_M")?;
        let bh_j = &self.human.coupling * &gain;
        let hessian = symmetrize(
            &(&self.human.quad + &bh_j + bh_j.transpose() + gain.tr_mul(&(&self.human.partner_quad * &gain))),
        );
        let gradient_offset = &self.human.linear
            + &self.human.coupling * &offset
            + gain.tr_mul(&(&self.human.partner_quad * &offset))
            + gain.tr_mul(&self.human.partner_linear);
        Ok(LeaderProblem { gain, offset, hessian, gradient_offset })
    }

    /// Human-led Stackelberg equilibrium.
    pub fn solve_stackelberg(&self) -> Result<JointAction> {
        let leader = self.leader_problem()?;
        let h = leader.minimizer()?;
        let m = leader.response(&h);
        Ok(JointAction::new(h, m))
    }

    /// Total derivative `d/dh c_H(h, BR_M(h))` evaluated through the partial
    /// gradients: `∂_h c_H + Jᵀ ∂_m c_H` at `(h, BR_M(h))`.
    pub fn total_grad_h(&self, h: &Vector) -> Result<Vector> {
        let leader = self.leader_problem()?;
        self.check_h(h)?;
        let m = leader.response(h);
        Ok(self.human.grad_own(h, &m) + leader.gain.tr_mul(&self.human.grad_partner(h, &m)))
    }

    pub fn check_nash(&self, x: &JointAction) -> NashReport {
        let (grad_h, grad_m) = match (self.grad_h(x), self.grad_m(x)) {
            (Ok(gh), Ok(gm)) => (gh.norm(), gm.norm()),
            _ => (f64::INFINITY, f64::INFINITY),
        };
        NashReport {
            grad_h_norm: grad_h,
            grad_m_norm: grad_m,
            human_hessian_min_eig: min_eigenvalue(&self.human.quad),
            ai_hessian_min_eig: min_eigenvalue(&self.ai.quad),
        }
    }

    pub fn check_stackelberg(&self, x: &JointAction) -> StackelbergReport {
        let invariants = self.invariants();
        let mut report = StackelbergReport {
            response_residual: f64::INFINITY,
            total_grad_norm: f64::INFINITY,
            total_hessian_min_eig: invariants.total_hessian,
            ai_hessian_min_eig: invariants.ai_quad,
            schur_min_eig: invariants.schur,
        };
        if self.check_action(x).is_err() {
            return report;
        }
        if let Ok(br) = self.best_response_m(&x.h) {
            report.response_residual = (&x.m - br).norm();
        }
        if let Ok(g) = self.total_grad_h(&x.h) {
            report.total_grad_norm = g.norm();
        }
        report
    }

    /// Sufficient conditions for a differential Nash equilibrium.
    pub fn check_differential_nash(&self, x: &JointAction) -> bool {
        self.check_nash(x).holds()
    }

    /// Sufficient conditions for a differential human-led Stackelberg equilibrium.
    pub fn check_differential_stackelberg(&self, x: &JointAction) -> bool {
        self.check_stackelberg(x).holds()
    }

    pub fn equilibria(&self) -> Result<EquilibriumSet> {
        let nash = self.solve_nash()?;
        let stackelberg = self.solve_stackelberg()?;
        let nash_report = self.check_nash(&nash);
        let stackelberg_report = self.check_stackelberg(&stackelberg);
        Ok(EquilibriumSet {
            nash_conditions_hold: nash_report.holds(),
            stackelberg_conditions_hold: stackelberg_report.holds(),
            nash,
            stackelberg,
            nash_report,
            stackelberg_report,
        })
    }

    /// The game seen through a mirror `h → S h` with `S = diag(signs)`.
    /// Equilibria map as `h* → S h*` with `m*` unchanged.
    pub fn mirrored(&self, signs: &[f64]) -> Result<Self> {
        if signs.len() != self.d_h() {
            return Err(Error::dim(format!("{} signs for d_H = {}", signs.len(), self.d_h())));
        }
        if signs.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::invalid("mirror signs must be ±1"));
        }
        let s = Matrix::from_diagonal(&Vector::from_column_slice(signs));
        let human = PlayerCost {
            quad: &s * &self.human.quad * &s,
            coupling: &s * &self.human.coupling,
            partner_quad: self.human.partner_quad.clone(),
            linear: &s * &self.human.linear,
            partner_linear: self.human.partner_linear.clone(),
        };
        let ai = PlayerCost {
            quad: self.ai.quad.clone(),
            coupling: &self.ai.coupling * &s,
            partner_quad: &s * &self.ai.partner_quad * &s,
            linear: self.ai.linear.clone(),
            partner_linear: &s * &self.ai.partner_linear,
        };
        GameParams::new(human, ai)
    }
}

/// `h ↦ c_H(h, J h + r)`, a quadratic in `h` alone.
#[derive(Debug, Clone)]
pub struct LeaderProblem {
    /// `J = −A_M⁻¹ B_M`.
    pub gain: Matrix,
    /// `r = −A_M⁻¹ a_M`.
    pub offset: Vector,
    /// `A_H + B_H J + Jᵀ B_Hᵀ + Jᵀ D_H J`.
    pub hessian: Matrix,
    /// `a_H + B_H r + Jᵀ D_H r + Jᵀ b_H`.
    pub gradient_offset: Vector,
}

impl LeaderProblem {
    pub fn response(&self, h: &Vector) -> Vector {
        &self.gain * h + &self.offset
    }

    pub fn gradient(&self, h: &Vector) -> Vector {
        &self.hessian * h + &self.gradient_offset
    }

    pub fn minimizer(&self) -> Result<Vector> {
        let chol = Cholesky::new(self.hessian.clone()).ok_or_else(|| {
            Error::NotPositiveDefinite(format!(
                "leader total Hessian (min eigenvalue {:.3e})",
                min_eigenvalue(&self.hessian)
            ))
        })?;
        if min_eigenvalue(&self.hessian) <= EIGENVALUE_THRESHOLD {
            return Err(Error::NotPositiveDefinite("leader total Hessian is near-singular".into()));
        }
        Ok(chol.solve(&(-&self.gradient_offset)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NashReport {
    pub grad_h_norm: f64,
    pub grad_m_norm: f64,
    pub human_hessian_min_eig: f64,
    pub ai_hessian_min_eig: f64,
}

impl NashReport {
    pub fn holds(&self) -> bool {
        self.grad_h_norm <= GRADIENT_TOLERANCE
            && self.grad_m_norm <= GRADIENT_TOLERANCE
            && self.human_hessian_min_eig > EIGENVALUE_THRESHOLD
            && self.ai_hessian_min_eig > EIGENVALUE_THRESHOLD
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StackelbergReport {
    /// `‖m − BR_M(h)‖`.
    pub response_residual: f64,
    pub total_grad_norm: f64,
    pub total_hessian_min_eig: f64,
    pub ai_hessian_min_eig: f64,
    /// Reported for reference; the total Hessian is what the condition uses.
    pub schur_min_eig: f64,
}

impl StackelbergReport {
    pub fn holds(&self) -> bool {
        self.response_residual <= GRADIENT_TOLERANCE
            && self.total_grad_norm <= GRADIENT_TOLERANCE
            && self.total_hessian_min_eig > EIGENVALUE_THRESHOLD
            && self.ai_hessian_min_eig > EIGENVALUE_THRESHOLD
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSet {
    pub nash: JointAction,
    pub stackelberg: JointAction,
    pub nash_conditions_hold: bool,
    pub stackelberg_conditions_hold: bool,
    pub nash_report: NashReport,
    pub stackelberg_report: StackelbergReport,
}

/// Result of fitting `a_H` so the Nash point lands on a target human action.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub params: GameParams,
    /// Multiplier applied to the template's `B_H`.
    pub coupling_scale: f64,
    pub stackelberg_h: Vector,
    /// `‖h_SE − target‖`.
    pub stackelberg_residual: f64,
}

/// Places the Nash human action at `h_ne` by choosing `a_H`.
///
/// With `a_M = 0` the Nash AI action is `m = −A_M⁻¹ B_M h_ne`, and `a_H` is
/// chosen to zero the human's gradient there. The resulting Stackelberg
/// action is reported against `h_se`; it is not fitted.
pub fn calibrate_offsets(template: &GameParams, h_ne: &Vector, h_se: &Vector) -> Result<Calibration> {
    calibrate_scaled(template, h_ne, h_se, 1.0)
}

fn calibrate_scaled(template: &GameParams, h_ne: &Vector, h_se: &Vector, scale: f64) -> Result<Calibration> {
    template.check_h(h_ne)?;
    template.check_h(h_se)?;
    if template.ai.linear.amax() != 0.0 {
        return Err(Error::invalid("calibration template must have a_M = 0"));
    }
    let mut params = template.clone();
    params.human.coupling *= scale;
    params.validate()?;
    let m_ne = params.best_response_m(h_ne)?;
    let a_h = -(&params.human.quad * h_ne + &params.human.coupling * &m_ne);
    let params = params.with_human_linear(a_h)?;
    let stackelberg_h = params.solve_stackelberg()?.h;
    let stackelberg_residual = (&stackelberg_h - h_se).norm();
    Ok(Calibration { params, coupling_scale: scale, stackelberg_h, stackelberg_residual })
}

/// Log-spaced scalar sweep over multipliers of `B_H`.
#[derive(Debug, Clone)]
pub struct CouplingSearch {
    pub min_scale: f64,
    pub max_scale: f64,
    pub steps: usize,
    /// Accept when `‖h_SE − target‖` is at most this.
    pub tolerance: f64,
}

impl Default for CouplingSearch {
    fn default() -> Self {
        Self { min_scale: 1e-2, max_scale: 1e2, steps: 161, tolerance: 1e-2 }
    }
}

impl CouplingSearch {
    fn scales(&self) -> impl Iterator<Item = f64> + '_ {
        let (lo, hi) = (self.min_scale.ln(), self.max_scale.ln());
        let n = self.steps.max(2);
        (0..n).map(move |i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp())
    }
}

/// Calibrates `a_H` for the Nash target while sweeping a scalar on `B_H` to
/// bring the Stackelberg action as close as possible to `h_se`.
pub fn search_coupling_scale(
    template: &GameParams,
    h_ne: &Vector,
    h_se: &Vector,
    search: &CouplingSearch,
) -> Result<Calibration> {
    if !(search.min_scale > 0.0 && search.max_scale >= search.min_scale) {
        return Err(Error::invalid("coupling search needs 0 < min_scale <= max_scale"));
    }
    let mut best: Option<Calibration> = None;
    for scale in search.scales() {
        let Ok(c) = calibrate_scaled(template, h_ne, h_se, scale) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| c.stackelberg_residual < b.stackelberg_residual) {
            best = Some(c);
        }
    }
    match best {
        Some(c) if c.stackelberg_residual <= search.tolerance => Ok(c),
        Some(c) => Err(Error::CalibrationFailed { residual: c.stackelberg_residual, scale: c.coupling_scale }),
        None => Err(Error::CalibrationFailed { residual: f64::INFINITY, scale: f64::NAN }),
    }
}
