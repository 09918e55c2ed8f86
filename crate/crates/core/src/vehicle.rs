//! Two-state bicycle model of lateral dynamics, its output configurations,
//! and actuator/tire saturation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{eig2x2, Mat2, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("vehicle parameter `{name}` must be finite and strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("saturation limit `{name}` must be finite and strictly positive, got {value}")]
    BadLimit { name: &'static str, value: f64 },
}

/// How the cornering stiffness values are interpreted.
///
/// `PerAxlePair` multiplies every stiffness term by two (one stiffness per
/// tire, two tires per axle); `PerAxle` treats each value as the whole axle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StiffnessConvention {
    #[default]
    PerAxlePair,
    PerAxle,
}

impl StiffnessConvention {
    pub fn factor(self) -> f64 {
        match self {
            StiffnessConvention::PerAxlePair => 2.0,
            StiffnessConvention::PerAxle => 1.0,
        }
    }
}

/// Physical constants of the vehicle. SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg·m²
    pub yaw_inertia: f64,
    /// m, CG to front axle
    pub cg_to_front: f64,
    /// m, CG to rear axle
    pub cg_to_rear: f64,
    /// N/rad
    pub front_stiffness: f64,
    /// N/rad
    pub rear_stiffness: f64,
    /// m/s, frozen longitudinal speed
    pub speed: f64,
    #[serde(default)]
    pub stiffness_convention: StiffnessConvention,
}

impl VehicleParams {
    /// Class-C hatchback reference vehicle.
    pub fn table1(convention: StiffnessConvention) -> Self {
        Self {
            mass: 1412.0,
            yaw_inertia: 1536.7,
            cg_to_front: 1.015,
            cg_to_rear: 1.895,
            front_stiffness: 58_400.0,
            rear_stiffness: 40_400.0,
            speed: 16.67,
            stiffness_convention: convention,
        }
    }

    pub fn validate(&self) -> Result<(), VehicleError> {
        let fields = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("cg_to_front", self.cg_to_front),
            ("cg_to_rear", self.cg_to_rear),
            ("front_stiffness", self.front_stiffness),
            ("rear_stiffness", self.rear_stiffness),
            ("speed", self.speed),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(VehicleError::NonPositive { name, value });
            }
        }
        Ok(())
    }

    /// `a·Cf − b·Cr`, the coupling term whose sign decides the lateral
    /// acceleration zero's stability.
    pub fn coupling(&self) -> f64 {
        self.cg_to_front * self.front_stiffness - self.cg_to_rear * self.rear_stiffness
    }

    /// Copy with the cornering stiffnesses perturbed by the given percentages.
    pub fn with_stiffness_error(&self, front_pct: f64, rear_pct: f64) -> Self {
        Self {
            front_stiffness: self.front_stiffness * (1.0 + front_pct / 100.0),
            rear_stiffness: self.rear_stiffness * (1.0 + rear_pct / 100.0),
            ..*self
        }
    }
}

/// Steering and yaw-moment inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    /// Yaw moment, N·m.
    pub mz: f64,
    /// Steering angle, rad.
    pub delta: f64,
}

impl Inputs {
    pub const ZERO: Inputs = Inputs { mz: 0.0, delta: 0.0 };

    pub fn new(mz: f64, delta: f64) -> Self {
        Self { mz, delta }
    }

    pub fn add(self, other: Inputs) -> Inputs {
        Inputs { mz: self.mz + other.mz, delta: self.delta + other.delta }
    }
}

/// `ẋ = A x + B·Mz + E·δ` with `B = (0, b2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LateralModel {
    pub a: Mat2,
    pub b: [f64; 2],
    pub e: [f64; 2],
    pub params: VehicleParams,
}

impl LateralModel {
    pub fn a11(&self) -> f64 {
        self.a.0[0][0]
    }
    pub fn a12(&self) -> f64 {
        self.a.0[0][1]
    }
    pub fn a21(&self) -> f64 {
        self.a.0[1][0]
    }
    pub fn a22(&self) -> f64 {
        self.a.0[1][1]
    }
    pub fn b2(&self) -> f64 {
        self.b[1]
    }
    pub fn e1(&self) -> f64 {
        self.e[0]
    }
    pub fn speed(&self) -> f64 {
        self.params.speed
    }

    pub fn derivative(&self, x: &State, u: &Inputs) -> State {
        let ax = self.a.mul_vec(x);
        [
            ax[0] + self.b[0] * u.mz + self.e[0] * u.delta,
            ax[1] + self.b[1] * u.mz + self.e[1] * u.delta,
        ]
    }
}

pub fn build_state_space(p: &VehicleParams) -> Result<LateralModel, VehicleError> {
    p.validate()?;
    let k = p.stiffness_convention.factor();
    let (m, iz, a, b, cf, cr, vx) =
        (p.mass, p.yaw_inertia, p.cg_to_front, p.cg_to_rear, p.front_stiffness, p.rear_stiffness, p.speed);
    let a11 = -k * (cf + cr) / (vx * m);
    let a12 = k * (b * cr - a * cf) / (vx * m) - vx;
    let a21 = k * (b * cr - a * cf) / (iz * vx);
    let a22 = -k * (a * a * cf + b * b * cr) / (iz * vx);
    Ok(LateralModel {
        a: Mat2::new(a11, a12, a21, a22),
        b: [0.0, 1.0 / iz],
        e: [k * cf / m, k * a * cf / iz],
        params: *p,
    })
}

/// Which IMU quantities are reported as the plant output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputConfig {
    #[default]
    YawRate,
    LateralAccel,
    Combined,
    LongitudinalAccel,
}

impl OutputConfig {
    pub fn is_linear(self) -> bool {
        !matches!(self, OutputConfig::LongitudinalAccel)
    }

    pub fn channels(self) -> usize {
        match self {
            OutputConfig::Combined => 2,
            _ => 1,
        }
    }
}

/// Output equation kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum OutputKind {
    /// `y = C x + D δ`; one `C` row and one `D` entry per channel.
    Linear { c: Vec<[f64; 2]>, d: Vec<f64> },
    /// `y = −r·v_y`, no steering feedthrough.
    Nonlinear,
}

/// Realized output equation together with the configuration it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputMap {
    pub config: OutputConfig,
    pub kind: OutputKind,
}

impl OutputMap {
    pub fn channels(&self) -> usize {
        match &self.kind {
            OutputKind::Linear { c, .. } => c.len(),
            OutputKind::Nonlinear => 1,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.kind, OutputKind::Linear { .. })
    }

    /// `(C, D)` for linear maps.
    pub fn linear_parts(&self) -> Option<(&[[f64; 2]], &[f64])> {
        match &self.kind {
            OutputKind::Linear { c, d } => Some((c, d)),
            OutputKind::Nonlinear => None,
        }
    }

    pub fn measure(&self, x: &State, delta: f64) -> Vec<f64> {
        match &self.kind {
            OutputKind::Linear { c, d } => c
                .iter()
                .zip(d)
                .map(|(row, dj)| row[0] * x[0] + row[1] * x[1] + dj * delta)
                .collect(),
            OutputKind::Nonlinear => vec![-x[1] * x[0]],
        }
    }

    /// Index of the yaw-rate channel, if the output carries one.
    pub fn yaw_rate_channel(&self) -> Option<usize> {
        match self.config {
            OutputConfig::YawRate | OutputConfig::Combined => Some(0),
            _ => None,
        }
    }
}

pub fn output_map(m: &LateralModel, cfg: OutputConfig) -> OutputMap {
    let yaw = [0.0, 1.0];
    let lat = [m.a11(), m.a12() + m.speed()];
    let kind = match cfg {
        OutputConfig::YawRate => OutputKind::Linear { c: vec![yaw], d: vec![0.0] },
        OutputConfig::LateralAccel => OutputKind::Linear { c: vec![lat], d: vec![m.e1()] },
        OutputConfig::Combined => OutputKind::Linear { c: vec![yaw, lat], d: vec![0.0, m.e1()] },
        OutputConfig::LongitudinalAccel => OutputKind::Nonlinear,
    };
    OutputMap { config: cfg, kind }
}

pub fn measure(map: &OutputMap, x: &State, delta: f64) -> Vec<f64> {
    map.measure(x, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HurwitzCheck {
    pub is_hurwitz: bool,
    pub trace: f64,
    pub det: f64,
}

/// For a 2×2 matrix, Hurwitz iff trace < 0 and det > 0.
pub fn hurwitz_check(m: &LateralModel) -> HurwitzCheck {
    let trace = m.a.trace();
    let det = m.a.det();
    HurwitzCheck { is_hurwitz: trace < 0.0 && det > 0.0, trace, det }
}

/// Real parts of both eigenvalues strictly negative.
pub fn eigen_stable(a: &Mat2) -> bool {
    eig2x2(a).iter().all(|l| l.re < 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroDynamicsStability {
    MinimumPhase,
    NonMinimumPhase,
    Boundary,
}

/// Classify the lateral-acceleration zero from the sign of `a·Cf − b·Cr`.
pub fn zero_dynamics_stability(p: &VehicleParams) -> ZeroDynamicsStability {
    let front = p.cg_to_front * p.front_stiffness;
    let rear = p.cg_to_rear * p.rear_stiffness;
    let diff = front - rear;
    let scale = front.abs().max(rear.abs());
    if diff.abs() <= 1e-9 * scale {
        ZeroDynamicsStability::Boundary
    } else if diff < 0.0 {
        ZeroDynamicsStability::MinimumPhase
    } else {
        ZeroDynamicsStability::NonMinimumPhase
    }
}

/// Symmetric clamps; `None` disables a limit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationLimits {
    /// N·m
    #[serde(default)]
    pub mz_max: Option<f64>,
    /// rad
    #[serde(default)]
    pub delta_max: Option<f64>,
    /// rad, slip angle where the tire force plateaus
    #[serde(default)]
    pub tire_alpha_sat: Option<f64>,
}

impl SaturationLimits {
    pub const NONE: SaturationLimits = SaturationLimits { mz_max: None, delta_max: None, tire_alpha_sat: None };

    pub fn validate(&self) -> Result<(), VehicleError> {
        let limits = [("mz_max", self.mz_max), ("delta_max", self.delta_max), ("tire_alpha_sat", self.tire_alpha_sat)];
        for (name, lim) in limits {
            if let Some(value) = lim {
                if !(value.is_finite() && value > 0.0) {
                    return Err(VehicleError::BadLimit { name, value });
                }
            }
        }
        Ok(())
    }

    pub fn actuators_enabled(&self) -> bool {
        self.mz_max.is_some() || self.delta_max.is_some()
    }
}

fn clamp_sym(v: f64, lim: Option<f64>) -> f64 {
    match lim {
        Some(l) => v.clamp(-l, l),
        None => v,
    }
}

/// Clamp both actuator channels. The flag is set iff any component changed.
pub fn saturate(u: Inputs, lim: &SaturationLimits) -> (Inputs, bool) {
    let out = Inputs { mz: clamp_sym(u.mz, lim.mz_max), delta: clamp_sym(u.delta, lim.delta_max) };
    let clipped = out.mz != u.mz || out.delta != u.delta;
    (out, clipped)
}

/// Piecewise-linear tire law: linear up to the knee, flat beyond it.
pub fn tire_effective_force(alpha: f64, stiffness: f64, lim: &SaturationLimits) -> f64 {
    match lim.tire_alpha_sat {
        Some(knee) if alpha.abs() > knee => stiffness * knee * alpha.signum(),
        _ => stiffness * alpha,
    }
}

/// Bicycle model with saturating tire forces. Reduces exactly to
/// [`LateralModel::derivative`] when no slip angle exceeds the knee.
pub fn surrogate_derivative(p: &VehicleParams, lim: &SaturationLimits, x: &State, u: &Inputs) -> State {
    let k = p.stiffness_convention.factor();
    let (vy, r) = (x[0], x[1]);
    let vx = p.speed;
    let alpha_f = u.delta - (vy + p.cg_to_front * r) / vx;
    let alpha_r = -(vy - p.cg_to_rear * r) / vx;
    let ff = k * tire_effective_force(alpha_f, p.front_stiffness, lim);
    let fr = k * tire_effective_force(alpha_r, p.rear_stiffness, lim);
    [
        (ff + fr) / p.mass - vx * r,
        (p.cg_to_front * ff - p.cg_to_rear * fr + u.mz) / p.yaw_inertia,
    ]
}
