//! Zero-dynamics attacks: invariant-zero synthesis for the linear outputs and
//! the zero-output manifold attack for the longitudinal-acceleration output.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::numerics::{eig2x2, null_direction, rank_with_tol, rk4_step, CMat, State, DEFAULT_RANK_TOL};
use crate::sim::{ChannelTaps, SimError};
use crate::vehicle::{Inputs, LateralModel, OutputConfig, OutputMap};

/// Invariant zero with its state and input directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZdaPlan {
    pub s0: Complex64,
    pub x0: [Complex64; 2],
    pub a0: Complex64,
    pub t0: f64,
    pub output_case: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ZdaSynthesis {
    Feasible(ZdaPlan),
    Infeasible,
}

impl ZdaSynthesis {
    pub fn plan(&self) -> Option<&ZdaPlan> {
        match self {
            ZdaSynthesis::Feasible(p) => Some(p),
            ZdaSynthesis::Infeasible => None,
        }
    }
}

impl ZdaPlan {
    pub fn scaled(&self, k: f64) -> Self {
        Self { x0: [self.x0[0] * k, self.x0[1] * k], a0: self.a0 * k, ..*self }
    }

    /// Rescale so `‖x0‖ = amplitude` with the larger state component positive.
    pub fn scaled_to(&self, amplitude: f64) -> Self {
        let norm = (self.x0[0].norm_sqr() + self.x0[1].norm_sqr()).sqrt();
        if norm == 0.0 {
            return *self;
        }
        let lead = if self.x0[0].norm() >= self.x0[1].norm() { self.x0[0] } else { self.x0[1] };
        let sign = if lead.re < 0.0 { -1.0 } else { 1.0 };
        self.scaled(sign * amplitude / norm)
    }

    /// Plant offset that puts the state on the zero direction at `t0`.
    pub fn state_offset(&self) -> State {
        [self.x0[0].re, self.x0[1].re]
    }

    /// Largest entry of `(s0 I − A) x0 − B a0` and `C x0`.
    pub fn residual(&self, model: &LateralModel, c: &[[f64; 2]]) -> f64 {
        let v = [self.x0[0], self.x0[1], self.a0];
        let p = rosenbrock_matrix(model, c, self.s0);
        p.mul_vec(&v).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `[sI − A, −B; C, 0]` for the output rows `c`.
pub fn rosenbrock_matrix(model: &LateralModel, c: &[[f64; 2]], s: Complex64) -> CMat {
    let mut p = CMat::zeros(2 + c.len(), 3);
    let a = model.a.0;
    for i in 0..2 {
        for j in 0..2 {
            p[(i, j)] = Complex64::new(-a[i][j], 0.0);
        }
        p[(i, i)] += s;
        p[(i, 2)] = Complex64::new(-model.b[i], 0.0);
    }
    for (k, row) in c.iter().enumerate() {
        p[(2 + k, 0)] = Complex64::new(row[0], 0.0);
        p[(2 + k, 1)] = Complex64::new(row[1], 0.0);
    }
    p
}

/// Eigenvalues of `A` plus the closed-form single-output zero of every row.
fn candidates(model: &LateralModel, c: &[[f64; 2]]) -> Vec<Complex64> {
    let mut out: Vec<Complex64> = eig2x2(&model.a).to_vec();
    for row in c {
        // With B = (0, b2), C x0 = 0 and the first state row give s0 = a11 − a12·c1/c2.
        if row[1] != 0.0 {
            out.push(Complex64::new(model.a11() - model.a12() * row[0] / row[1], 0.0));
        }
    }
    out
}

pub fn zda_synthesize_linear(model: &LateralModel, map: &OutputMap, t0: f64) -> Result<ZdaSynthesis, AttackError> {
    zda_synthesize_linear_with_tol(model, map, t0, DEFAULT_RANK_TOL)
}

pub fn zda_synthesize_linear_with_tol(
    model: &LateralModel,
    map: &OutputMap,
    t0: f64,
    tol: f64,
) -> Result<ZdaSynthesis, AttackError> {
    let (c, _) = map.linear_parts().ok_or(AttackError::NonlinearOutput(map.config))?;
    for s in candidates(model, c) {
        // Equilibrate columns first: the input column is orders of magnitude
        // smaller than the state columns, which would skew a relative pivot test.
        let mut p = rosenbrock_matrix(model, c, s);
        let norms: Vec<f64> = (0..p.cols()).map(|j| (0..p.rows()).map(|i| p[(i, j)].norm_sqr()).sum::<f64>().sqrt()).collect();
        for (j, &n) in norms.iter().enumerate() {
            if n > 0.0 {
                for i in 0..p.rows() {
                    p[(i, j)] /= n;
                }
            }
        }
        if rank_with_tol(&p, tol) == 3 {
            continue;
        }
        if let Some(w) = null_direction(&p, tol) {
            let v: Vec<Complex64> = w.iter().zip(&norms).map(|(z, &n)| if n > 0.0 { z / n } else { *z }).collect();
            let len = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let v: Vec<Complex64> = v.iter().map(|z| z / len).collect();
            return Ok(ZdaSynthesis::Feasible(ZdaPlan { s0: s, x0: [v[0], v[1]], a0: v[2], t0, output_case: map.config }));
        }
    }
    Ok(ZdaSynthesis::Infeasible)
}

/// `Re(a0·e^{s0(t − t0)})`
pub fn zda_input(plan: &ZdaPlan, t: f64) -> f64 {
    (plan.a0 * (plan.s0 * (t - plan.t0)).exp()).re
}

/// Adds the zero-direction signal to the yaw-moment command from `t0` on.
#[derive(Debug, Clone, Copy)]
pub struct ZdaTaps {
    pub plan: ZdaPlan,
}

impl ChannelTaps for ZdaTaps {
    fn actuator(&self, t: f64, u: Inputs) -> Inputs {
        if t >= self.plan.t0 {
            Inputs { mz: u.mz + zda_input(&self.plan, t), ..u }
        } else {
            u
        }
    }
}

/// Branch of the zero-output manifold `{r = 0} ∪ {v_y = 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroBranch {
    /// `r = 0`, nontrivial zero dynamics `v̇_y = a11·v_y`.
    Z1,
    /// `v_y = 0`; only the equilibrium keeps the output at zero.
    Z2,
    OffManifold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZdaNonlinearPlan {
    pub branch: ZeroBranch,
    /// N·m; zero off the Z1 branch.
    pub m1_bar: f64,
    pub t0: f64,
}

pub fn zda_synthesize_nonlinear(model: &LateralModel, x_est: &State, eps: f64, t0: f64) -> ZdaNonlinearPlan {
    assert!(eps > 0.0, "manifold tolerance must be positive");
    let [vy, r] = *x_est;
    let branch = if vy.abs() < eps {
        ZeroBranch::Z2
    } else if r.abs() < eps {
        ZeroBranch::Z1
    } else {
        ZeroBranch::OffManifold
    };
    let m1_bar = if branch == ZeroBranch::Z1 { zda_nonlinear_feedback(model, x_est) } else { 0.0 };
    ZdaNonlinearPlan { branch, m1_bar, t0 }
}

/// `M̄1·e^{a11(t − t0)}` on the Z1 branch.
pub fn zda_nonlinear_input(plan: &ZdaNonlinearPlan, model: &LateralModel, t: f64) -> Result<f64, AttackError> {
    match plan.branch {
        ZeroBranch::Z1 => Ok(plan.m1_bar * (model.a11() * (t - plan.t0)).exp()),
        b => Err(AttackError::BranchUnsupported(b)),
    }
}

/// State-feedback realization `−(a21/b2)·v_y` keeping `ṙ = 0` on `r = 0`.
pub fn zda_nonlinear_feedback(model: &LateralModel, x: &State) -> f64 {
    -(model.a21() / model.b2()) * x[0]
}

/// Yaw-moment sequence that regulates `r` onto the Z1 branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preparation {
    /// Held yaw moment per step, N·m.
    pub mz: Vec<f64>,
    /// Time actually needed, s.
    pub horizon: f64,
    /// Predicted state at the end of the preparation.
    pub final_state: State,
}

/// Proportional feedback `Mz = −gain·r` on the attacker's model, zero
/// steering, until `|r| < eps`.
pub fn off_manifold_preparation(
    model: &LateralModel,
    x_est: &State,
    eps: f64,
    gain: f64,
    dt: f64,
    max_horizon: f64,
) -> Result<Preparation, AttackError> {
    let max_steps = (max_horizon / dt).round() as usize;
    let mut x = *x_est;
    let mut mz = Vec::new();
    while x[1].abs() >= eps {
        if mz.len() >= max_steps {
            return Err(AttackError::Unreachable { horizon: max_horizon });
        }
        let u = Inputs::new(-gain * x[1], 0.0);
        x = rk4_step(&|s: &State, ui: &Inputs| model.derivative(s, ui), &|_| u, 0.0, &x, dt);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(SimError::Numerics(crate::numerics::NumericsError::NonFinite { step: mz.len() + 1 }).into());
        }
        mz.push(u.mz);
    }
    Ok(Preparation { horizon: mz.len() as f64 * dt, mz, final_state: x })
}

/// Nonlinear zero-dynamics attack, optionally preceded by a preparation
/// phase that steers an off-manifold state onto `r = 0`.
#[derive(Debug, Clone)]
pub struct ZdaNonlinearTaps {
    model: LateralModel,
    preparation: Option<Preparation>,
    plan: ZdaNonlinearPlan,
    step: usize,
    held: Option<f64>,
}

impl ZdaNonlinearTaps {
    /// `x_est` is the attacker's state estimate at `t_start`.
    pub fn new(
        model: &LateralModel,
        x_est: &State,
        eps: f64,
        t_start: f64,
        dt: f64,
        prep_gain: f64,
        max_horizon: f64,
    ) -> Result<Self, AttackError> {
        let first = zda_synthesize_nonlinear(model, x_est, eps, t_start);
        let (preparation, plan) = if first.branch == ZeroBranch::OffManifold {
            let prep = off_manifold_preparation(model, x_est, eps, prep_gain, dt, max_horizon)?;
            let t0 = t_start + prep.mz.len() as f64 * dt;
            let plan = zda_synthesize_nonlinear(model, &prep.final_state, eps, t0);
            (Some(prep), plan)
        } else {
            (None, first)
        };
        Ok(Self { model: *model, preparation, plan, step: 0, held: None })
    }

    pub fn plan(&self) -> &ZdaNonlinearPlan {
        &self.plan
    }

    pub fn preparation(&self) -> Option<&Preparation> {
        self.preparation.as_ref()
    }
}

impl ChannelTaps for ZdaNonlinearTaps {
    fn begin_step(&mut self, _t: f64, _dt: f64) {
        self.held = self.preparation.as_ref().and_then(|p| p.mz.get(self.step).copied());
        self.step += 1;
    }

    fn actuator(&self, t: f64, u: Inputs) -> Inputs {
        if let Some(mz) = self.held {
            return Inputs { mz: u.mz + mz, ..u };
        }
        if t >= self.plan.t0 {
            if let Ok(m) = zda_nonlinear_input(&self.plan, &self.model, t) {
                return Inputs { mz: u.mz + m, ..u };
            }
        }
        u
    }
}
