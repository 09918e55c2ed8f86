//! Covert attacks: an actuator injection on the yaw-moment channel paired with
//! a sensor compensation computed from the attacker's own model replica.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::numerics::{rk4_step, State};
use crate::sim::{design_observer_gain, observer_step, ChannelTaps, ObserverState, SensorFrame, Waveform};
use crate::vehicle::{build_state_space, output_map, Inputs, LateralModel, OutputConfig, OutputMap};

/// Attacker replica state; `xa` starts at zero when the attack begins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CovertState {
    pub xa: State,
    /// Tracking integrator.
    pub za: f64,
}

/// Cross-term weight in the longitudinal-acceleration compensation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensationForm {
    /// `vᵃ·r̂ⁿ + v̂ⁿ·rᵃ + vᵃ·rᵃ`, which cancels the bilinear output exactly.
    #[default]
    Exact,
    /// Same with `2·vᵃ·rᵃ`; leaves a residual of `vᵃ·rᵃ`.
    AsPublished,
}

impl CompensationForm {
    fn cross_weight(self) -> f64 {
        match self {
            CompensationForm::Exact => 1.0,
            CompensationForm::AsPublished => 2.0,
        }
    }
}

/// RK4 step of `ẋa = A xa + B u_c`; no steering term.
pub fn covert_internal_step(cs: &CovertState, model: &LateralModel, u_c: &dyn Fn(f64) -> f64, t: f64, dt: f64) -> CovertState {
    let deriv = |x: &State, mz: &f64| model.derivative(x, &Inputs::new(*mz, 0.0));
    CovertState { xa: rk4_step(&deriv, &|tau| u_c(tau), t, &cs.xa, dt), ..*cs }
}

/// `−C·xa` per channel.
pub fn covert_sensor_comp_linear(cs: &CovertState, map: &OutputMap) -> Result<Vec<f64>, AttackError> {
    let (c, _) = map.linear_parts().ok_or(AttackError::NonlinearOutput(map.config))?;
    Ok(c.iter().map(|row| -(row[0] * cs.xa[0] + row[1] * cs.xa[1])).collect())
}

/// Compensation for `y = −r·v_y`, added to the true reading.
pub fn covert_sensor_comp_nonlinear(cs: &CovertState, xhat_nominal: &State, form: CompensationForm) -> f64 {
    let [va, ra] = cs.xa;
    let [vn, rn] = *xhat_nominal;
    va * rn + vn * ra + form.cross_weight() * va * ra
}

/// Accumulates `za += (y − r_a)·dt`, then returns `ka·x̂ + la·za − u_nominal`.
pub fn covert_tracking_input(
    cs: &mut CovertState,
    tracking: &TrackingConfig,
    xhat: &State,
    y: f64,
    t: f64,
    u_nominal: f64,
    dt: f64,
) -> f64 {
    cs.za += (y - tracking.reference.value(t)) * dt;
    tracking.ka[0] * xhat[0] + tracking.ka[1] * xhat[1] + tracking.la * cs.za - u_nominal
}

/// Yaw-rate tracking law `Mz = ka·x + la·za`, `ża = r − r_a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    pub ka: [f64; 2],
    pub la: f64,
    /// Yaw-rate reference, rad/s.
    pub reference: Waveform,
}

/// Gains placing the three closed-loop poles of `(A + B ka, la)` with the
/// yaw-rate integrator at `poles` (real or conjugate pairs).
pub fn integral_tracking_gains(model: &LateralModel, poles: [Complex64; 3]) -> Result<([f64; 2], f64), AttackError> {
    // (s − p1)(s − p2)(s − p3) = s³ + c2 s² + c1 s + c0
    let c2 = -(poles[0] + poles[1] + poles[2]);
    let c1 = poles[0] * poles[1] + poles[0] * poles[2] + poles[1] * poles[2];
    let c0 = -(poles[0] * poles[1] * poles[2]);
    let scale = poles.iter().map(|p| p.norm()).fold(1.0, f64::max);
    if c2.im.abs() > 1e-12 * scale || c1.im.abs() > 1e-12 * scale * scale || c0.im.abs() > 1e-12 * scale.powi(3) {
        return Err(AttackError::BadTracking("poles must be real or conjugate pairs".into()));
    }
    let (a11, a12, a21, a22, b2) = (model.a11(), model.a12(), model.a21(), model.a22(), model.b2());
    if a11 == 0.0 || a12 == 0.0 {
        return Err(AttackError::BadTracking("yaw rate integrator is not controllable".into()));
    }
    let k2 = -(c2.re + a11 + a22) / b2;
    let la = c0.re / (a11 * b2);
    let k1 = (a11 * a22 + a11 * b2 * k2 - b2 * la - a12 * a21 - c1.re) / (a12 * b2);
    Ok(([k1, k2], la))
}

/// Where the attacker's nominal-state estimate comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NominalSource {
    /// The attack-free twin state.
    #[default]
    Oracle,
    /// Luenberger observer on the yaw-rate and lateral-acceleration sensors,
    /// with the replica's contribution removed.
    Observer {
        /// Real observer poles, 1/s.
        poles: [f64; 2],
        /// Relative error of the initial estimate, e.g. 0.1 for 10%.
        initial_error: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovertMode {
    /// `y* = y − C·xa` for the linear outputs.
    #[default]
    Linear,
    /// Bilinear compensation for the longitudinal-acceleration output.
    Nonlinear {
        #[serde(default)]
        form: CompensationForm,
        #[serde(default)]
        source: NominalSource,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovertConfig {
    /// Open-loop yaw-moment injection, N·m. Ignored when tracking is set.
    #[serde(default)]
    pub u_c: Waveform,
    /// s
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub mode: CovertMode,
    #[serde(default)]
    pub tracking: Option<TrackingConfig>,
    /// Keep `Mz_nominal + u_c` within this bound, N·m.
    #[serde(default)]
    pub mz_limit: Option<f64>,
    /// Percent errors on the attacker's copy of `(Cf, Cr)`.
    #[serde(default)]
    pub model_error_pct: Option<[f64; 2]>,
}

impl Default for CovertConfig {
    fn default() -> Self {
        Self {
            u_c: Waveform::Constant { value: 1.0 },
            start: 0.0,
            mode: CovertMode::Linear,
            tracking: None,
            mz_limit: None,
            model_error_pct: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CovertTaps {
    cfg: CovertConfig,
    model: LateralModel,
    map: OutputMap,
    imu_map: OutputMap,
    state: CovertState,
    active: bool,
    /// Tracking command for the current step and the one computed from this
    /// step's sample, applied one step later.
    held: f64,
    next: f64,
    observer: Option<ObserverState>,
    last_imu: [f64; 2],
    dt: f64,
}

impl CovertTaps {
    /// `model` is the true plant model; the attacker's replica applies the
    /// configured stiffness error to it.
    pub fn new(model: &LateralModel, output: OutputConfig, cfg: CovertConfig) -> Result<Self, AttackError> {
        let replica = match cfg.model_error_pct {
            Some([f, r]) => build_state_space(&model.params.with_stiffness_error(f, r))
                .map_err(|e| AttackError::Incompatible(e.to_string()))?,
            None => *model,
        };
        let map = output_map(&replica, output);
        if matches!(cfg.mode, CovertMode::Linear) != output.is_linear() {
            return Err(AttackError::Incompatible(format!("{:?} compensation cannot serve the {output:?} output", cfg.mode)));
        }
        let imu_map = output_map(&replica, OutputConfig::Combined);
        Ok(Self {
            cfg,
            model: replica,
            map,
            imu_map,
            state: CovertState::default(),
            active: false,
            held: 0.0,
            next: 0.0,
            observer: None,
            last_imu: [0.0; 2],
            dt: 0.0,
        })
    }

    pub fn state(&self) -> &CovertState {
        &self.state
    }

    pub fn nominal_estimate(&self) -> Option<State> {
        self.observer.as_ref().map(|o| o.xhat)
    }

    fn injection(&self, t: f64, u_nominal: f64) -> f64 {
        if t < self.cfg.start {
            return 0.0;
        }
        let raw = if self.cfg.tracking.is_some() { self.held } else { self.cfg.u_c.value(t) };
        match self.cfg.mz_limit {
            Some(lim) => raw.clamp(-lim - u_nominal, lim - u_nominal),
            None => raw,
        }
    }
}

impl ChannelTaps for CovertTaps {
    fn begin_step(&mut self, t: f64, dt: f64) {
        self.active = t >= self.cfg.start;
        self.dt = dt;
    }

    fn actuator(&self, t: f64, u: Inputs) -> Inputs {
        Inputs { mz: u.mz + self.injection(t, u.mz), ..u }
    }

    fn sensor(&mut self, frame: &SensorFrame<'_>) -> Vec<f64> {
        self.last_imu = frame.imu;
        let xhat_n = match self.cfg.mode {
            CovertMode::Nonlinear { source: NominalSource::Observer { poles, initial_error }, .. } => {
                if self.observer.is_none() {
                    let gain = design_observer_gain(
                        &self.model,
                        &self.imu_map,
                        [Complex64::new(poles[0], 0.0), Complex64::new(poles[1], 0.0)],
                    )
                    .expect("combined output is observable for valid vehicles");
                    let x = frame.x_nominal;
                    let xhat = [x[0] * (1.0 + initial_error), x[1] * (1.0 + initial_error)];
                    self.observer = Some(ObserverState { xhat, gain });
                }
                self.observer.as_ref().map(|o| o.xhat).unwrap_or_default()
            }
            _ => frame.x_nominal,
        };

        if let Some(tr) = self.cfg.tracking {
            if self.active {
                let xa = self.state.xa;
                let xhat = [xhat_n[0] + xa[0], xhat_n[1] + xa[1]];
                self.next = covert_tracking_input(&mut self.state, &tr, &xhat, frame.imu[0], frame.t, frame.u_nominal.mz, self.dt);
            }
        }

        let mut y = frame.y_true.to_vec();
        match self.cfg.mode {
            CovertMode::Linear => {
                let comp = covert_sensor_comp_linear(&self.state, &self.map).expect("linear map checked at construction");
                y.iter_mut().zip(comp).for_each(|(v, c)| *v += c);
            }
            CovertMode::Nonlinear { form, .. } => {
                y[0] += covert_sensor_comp_nonlinear(&self.state, &xhat_n, form);
            }
        }
        y
    }

    fn end_step(&mut self, t: f64, dt: f64, u_nominal: &dyn Fn(f64) -> Inputs) {
        if let Some(obs) = self.observer.take() {
            let (c, _) = self.imu_map.linear_parts().expect("combined map is linear");
            let xa = self.state.xa;
            let y: Vec<f64> =
                self.last_imu.iter().zip(c).map(|(m, row)| m - (row[0] * xa[0] + row[1] * xa[1])).collect();
            let next =
                observer_step(&obs, u_nominal, &y, &self.model, &self.imu_map, t, dt).expect("combined map is linear");
            self.observer = Some(next);
        }
        // The step straddling `start` already carries part of the injection.
        if t + dt > self.cfg.start {
            let this = &*self;
            let u_c = |tau: f64| this.injection(tau, u_nominal(tau).mz);
            self.state = covert_internal_step(&self.state, &self.model, &u_c, t, dt);
        }
        self.held = self.next;
    }
}
