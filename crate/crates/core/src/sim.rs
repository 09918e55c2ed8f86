//! Closed-loop simulation with attacker middleware on the actuator and sensor
//! channels, an attack-free twin run in lockstep, and a Luenberger observer.

use std::cell::Cell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{rk4_step, Mat2, NumericsError, State, TimeGrid};
use crate::vehicle::{
    saturate, surrogate_derivative, Inputs, LateralModel, OutputConfig, OutputMap, SaturationLimits,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("pair (A, C) is not observable for the {0:?} output")]
    Unobservable(OutputConfig),
    #[error("observer requires a linear output map, got {0:?}")]
    NonlinearOutput(OutputConfig),
    #[error("desired observer poles must be real or a conjugate pair")]
    ComplexPoles,
    #[error("yaw-rate feedback needs a yaw-rate channel, output is {0:?}")]
    NoYawRateChannel(OutputConfig),
    #[error("invalid waveform: {0}")]
    BadWaveform(String),
}

/// Time signal used for steering profiles, injected attack signals and
/// tracking references.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Waveform {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `level` for `t ≥ time`, zero before.
    StepAt {
        time: f64,
        level: f64,
    },
    /// `amplitude·sin(2π·frequency·t + phase)`
    Sinusoid {
        amplitude: f64,
        /// Hz
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

pub type SteeringProfile = Waveform;

impl Waveform {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Waveform::Zero => 0.0,
            Waveform::Constant { value } => value,
            Waveform::StepAt { time, level } => {
                if t >= time {
                    level
                } else {
                    0.0
                }
            }
            Waveform::Sinusoid { amplitude, frequency, phase } => amplitude * (2.0 * PI * frequency * t + phase).sin(),
        }
    }

    /// Largest absolute value the signal takes.
    pub fn peak(&self) -> f64 {
        match *self {
            Waveform::Zero => 0.0,
            Waveform::Constant { value } => value.abs(),
            Waveform::StepAt { level, .. } => level.abs(),
            Waveform::Sinusoid { amplitude, .. } => amplitude,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let finite = |v: f64| v.is_finite();
        match *self {
            Waveform::Zero => Ok(()),
            Waveform::Constant { value } if finite(value) => Ok(()),
            Waveform::StepAt { time, level } if finite(time) && finite(level) => Ok(()),
            Waveform::Sinusoid { amplitude, frequency, phase } => {
                if !(amplitude >= 0.0 && amplitude.is_finite()) {
                    Err(SimError::BadWaveform(format!("amplitude must be >= 0, got {amplitude}")))
                } else if !(frequency > 0.0 && frequency.is_finite()) {
                    Err(SimError::BadWaveform(format!("frequency must be > 0, got {frequency}")))
                } else if !finite(phase) {
                    Err(SimError::BadWaveform("phase must be finite".into()))
                } else {
                    Ok(())
                }
            }
            _ => Err(SimError::BadWaveform("values must be finite".into())),
        }
    }
}

/// Which physical plant is integrated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    #[default]
    Linear,
    /// Same bicycle model with piecewise-linear saturating tire forces.
    NonlinearTireSurrogate,
}

/// Physical plant bound to its model and limits.
#[derive(Debug, Clone, Copy)]
pub struct Plant<'a> {
    pub kind: PlantKind,
    pub model: &'a LateralModel,
    pub limits: &'a SaturationLimits,
}

impl Plant<'_> {
    pub fn derivative(&self, x: &State, u: &Inputs) -> State {
        match self.kind {
            PlantKind::Linear => self.model.derivative(x, u),
            PlantKind::NonlinearTireSurrogate => surrogate_derivative(&self.model.params, self.limits, x, u),
        }
    }

    /// Yaw rate and lateral acceleration `v̇_y + vx·r`.
    pub fn imu(&self, x: &State, u: &Inputs) -> [f64; 2] {
        match self.kind {
            PlantKind::Linear => {
                let m = self.model;
                [x[1], m.a11() * x[0] + (m.a12() + m.speed()) * x[1] + m.e1() * u.delta]
            }
            PlantKind::NonlinearTireSurrogate => {
                [x[1], self.derivative(x, u)[0] + self.model.speed() * x[1]]
            }
        }
    }

    /// Sensor reading for the configured output.
    pub fn sense(&self, map: &OutputMap, x: &State, u: &Inputs) -> Vec<f64> {
        match self.kind {
            PlantKind::Linear => map.measure(x, u.delta),
            PlantKind::NonlinearTireSurrogate => {
                let imu = self.imu(x, u);
                match map.config {
                    OutputConfig::YawRate => vec![imu[0]],
                    OutputConfig::LateralAccel => vec![imu[1]],
                    OutputConfig::Combined => imu.to_vec(),
                    OutputConfig::LongitudinalAccel => vec![-x[1] * x[0]],
                }
            }
        }
    }
}

/// Proportional yaw-rate feedback on the received measurement,
/// `Mz = −gain·r_received`, applied with one sample of delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YawRateFeedback {
    /// N·m per rad/s
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorNoise {
    /// Standard deviation in output units, applied to every channel.
    pub std_dev: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOptions {
    pub plant: PlantKind,
    /// Initial state shared by the attacked plant and its twin.
    pub initial_state: State,
    /// Extra offset applied to the attacked plant only.
    pub attack_offset: State,
    pub controller: Option<YawRateFeedback>,
    pub sensor_noise: Option<SensorNoise>,
}

/// What the sensor-side middleware sees for one sample.
#[derive(Debug, Clone)]
pub struct SensorFrame<'a> {
    pub t: f64,
    pub y_true: &'a [f64],
    /// Yaw rate and lateral acceleration of the attacked plant.
    pub imu: [f64; 2],
    /// Controller command before the actuator tap.
    pub u_nominal: Inputs,
    /// Attack-free twin state; read only by oracle-mode attackers.
    pub x_nominal: State,
}

/// Attacker middleware sitting on both channels.
///
/// Per step the simulator calls `begin_step`, passes the sample through
/// `sensor`, evaluates `actuator` at every RK4 stage time, then calls
/// `end_step`. Whatever `actuator` reads may change only in `begin_step` and
/// `end_step`.
pub trait ChannelTaps {
    fn begin_step(&mut self, _t: f64, _dt: f64) {}

    fn actuator(&self, _t: f64, u_nominal: Inputs) -> Inputs {
        u_nominal
    }

    fn sensor(&mut self, frame: &SensorFrame<'_>) -> Vec<f64> {
        frame.y_true.to_vec()
    }

    /// `u_nominal` gives the controller command over `[t, t + dt]`.
    fn end_step(&mut self, _t: f64, _dt: f64, _u_nominal: &dyn Fn(f64) -> Inputs) {}
}

/// Pass-through on both channels.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTaps;

impl ChannelTaps for IdentityTaps {}

/// Actuator channel selector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    #[default]
    YawMoment,
    Steering,
}

impl Channel {
    pub fn inject(self, u: Inputs, value: f64) -> Inputs {
        match self {
            Channel::YawMoment => Inputs { mz: u.mz + value, ..u },
            Channel::Steering => Inputs { delta: u.delta + value, ..u },
        }
    }
}

/// Open-loop false-data injection on one actuator channel from `start` on.
#[derive(Debug, Clone, Copy)]
pub struct InjectionTaps {
    pub channel: Channel,
    pub signal: Waveform,
    pub start: f64,
}

impl ChannelTaps for InjectionTaps {
    fn actuator(&self, t: f64, u: Inputs) -> Inputs {
        if t >= self.start {
            self.channel.inject(u, self.signal.value(t))
        } else {
            u
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub x_true: State,
    pub x_nominal: State,
    pub u_nominal: Inputs,
    /// Input reaching the plant after the actuator tap and saturation.
    pub u_injected: Inputs,
    pub y_true: Vec<f64>,
    pub y_received: Vec<f64>,
    pub y_nominal: Vec<f64>,
    /// Saturation changed the input at any stage of this step.
    pub clipped: bool,
}

/// One record per integration step, sampled at the start of the step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub channels: usize,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dt(&self) -> Option<f64> {
        match self.records.as_slice() {
            [a, b, ..] => Some(b.t - a.t),
            _ => None,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    /// CSV/plot column names in schema order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = [
            "t", "vy_true", "r_true", "vy_nom", "r_nom", "mz_nom", "mz_inj", "delta_nom", "delta_inj",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for i in 0..self.channels {
            names.push(format!("y_true_{i}"));
            names.push(format!("y_recv_{i}"));
            names.push(format!("y_nom_{i}"));
        }
        names.push("clipped".into());
        names
    }

    /// Row values in schema order (the clipped flag as 0/1).
    pub fn row_values(&self, r: &TraceRecord) -> Vec<f64> {
        let mut v = vec![
            r.t,
            r.x_true[0],
            r.x_true[1],
            r.x_nominal[0],
            r.x_nominal[1],
            r.u_nominal.mz,
            r.u_injected.mz,
            r.u_nominal.delta,
            r.u_injected.delta,
        ];
        for i in 0..self.channels {
            v.push(r.y_true[i]);
            v.push(r.y_received[i]);
            v.push(r.y_nominal[i]);
        }
        v.push(if r.clipped { 1.0 } else { 0.0 });
        v
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column_names().iter().position(|n| n == name)?;
        Some(self.records.iter().map(|r| self.row_values(r)[idx]).collect())
    }

    pub fn clipped_count(&self) -> usize {
        self.records.iter().filter(|r| r.clipped).count()
    }
}

/// Simulate with default options (linear plant, zero initial state, open loop).
pub fn simulate(
    model: &LateralModel,
    map: &OutputMap,
    steer: &SteeringProfile,
    taps: &mut dyn ChannelTaps,
    lim: &SaturationLimits,
    grid: &TimeGrid,
) -> Result<Trace, SimError> {
    simulate_with(model, map, steer, taps, lim, grid, &SimOptions::default())
}

pub fn simulate_with(
    model: &LateralModel,
    map: &OutputMap,
    steer: &SteeringProfile,
    taps: &mut dyn ChannelTaps,
    lim: &SaturationLimits,
    grid: &TimeGrid,
    opts: &SimOptions,
) -> Result<Trace, SimError> {
    let plant = Plant { kind: opts.plant, model, limits: lim };
    let yaw_idx = match opts.controller {
        Some(_) => Some(map.yaw_rate_channel().ok_or(SimError::NoYawRateChannel(map.config))?),
        None => None,
    };
    let mut noise = opts.sensor_noise.filter(|n| n.std_dev > 0.0).map(|n| {
        let normal = Normal::new(0.0, n.std_dev).expect("finite positive std_dev");
        (ChaCha8Rng::seed_from_u64(n.seed), normal)
    });

    let dt = grid.dt;
    let mut x = [opts.initial_state[0] + opts.attack_offset[0], opts.initial_state[1] + opts.attack_offset[1]];
    let mut xn = opts.initial_state;
    let mut prev_recv: Option<Vec<f64>> = None;
    let mut prev_nom: Option<Vec<f64>> = None;
    let mut records = Vec::with_capacity(grid.n_steps);

    for k in 0..grid.n_steps {
        let t = grid.time(k);
        let feedback = |prev: &Option<Vec<f64>>| match (opts.controller, yaw_idx, prev) {
            (Some(c), Some(i), Some(y)) => -c.gain * y[i],
            _ => 0.0,
        };
        let mz_cmd = feedback(&prev_recv);
        let mz_cmd_nom = feedback(&prev_nom);
        let u_nom = |tau: f64| Inputs { mz: mz_cmd, delta: steer.value(tau) };
        let u_twin = |tau: f64| saturate(Inputs { mz: mz_cmd_nom, delta: steer.value(tau) }, lim).0;

        taps.begin_step(t, dt);
        let (u_inj, clipped_now) = saturate(taps.actuator(t, u_nom(t)), lim);
        let mut y_true = plant.sense(map, &x, &u_inj);
        if let Some((rng, normal)) = noise.as_mut() {
            for v in y_true.iter_mut() {
                *v += normal.sample(rng);
            }
        }
        let imu = plant.imu(&x, &u_inj);
        let y_nominal = plant.sense(map, &xn, &u_twin(t));
        let y_received = taps.sensor(&SensorFrame { t, y_true: &y_true, imu, u_nominal: u_nom(t), x_nominal: xn });

        let clipped = Cell::new(clipped_now);
        let taps_ref: &dyn ChannelTaps = taps;
        let applied = |tau: f64| {
            let (u, c) = saturate(taps_ref.actuator(tau, u_nom(tau)), lim);
            if c {
                clipped.set(true);
            }
            u
        };
        let deriv = |s: &State, u: &Inputs| plant.derivative(s, u);
        let x_next = rk4_step(&deriv, &applied, t, &x, dt);
        let xn_next = rk4_step(&deriv, &u_twin, t, &xn, dt);
        if x_next.iter().chain(xn_next.iter()).any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite { step: k + 1 }.into());
        }
        let clipped = clipped.get();
        taps.end_step(t, dt, &u_nom);

        records.push(TraceRecord {
            t,
            x_true: x,
            x_nominal: xn,
            u_nominal: u_nom(t),
            u_injected: u_inj,
            y_true,
            y_received: y_received.clone(),
            y_nominal: y_nominal.clone(),
            clipped,
        });
        prev_recv = Some(y_received);
        prev_nom = Some(y_nominal);
        x = x_next;
        xn = xn_next;
    }
    Ok(Trace { channels: map.channels(), records })
}

/// Luenberger observer state; `gain[j]` is the correction column for output channel `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub xhat: State,
    pub gain: Vec<State>,
}

/// One RK4 step of `x̂̇ = A x̂ + B Mz + E δ + L (y − C x̂ − D δ)`.
///
/// The measurement is held over the step, so the innovation is evaluated at
/// the start of the step and kept constant across the stages.
pub fn observer_step(
    obs: &ObserverState,
    u: &dyn Fn(f64) -> Inputs,
    y: &[f64],
    model: &LateralModel,
    map: &OutputMap,
    t: f64,
    dt: f64,
) -> Result<ObserverState, SimError> {
    let (c, d) = map.linear_parts().ok_or(SimError::NonlinearOutput(map.config))?;
    let delta0 = u(t).delta;
    let mut correction = [0.0; 2];
    for (j, (row, dj)) in c.iter().zip(d).enumerate() {
        let innov = y[j] - (row[0] * obs.xhat[0] + row[1] * obs.xhat[1]) - dj * delta0;
        correction[0] += obs.gain[j][0] * innov;
        correction[1] += obs.gain[j][1] * innov;
    }
    let deriv = |s: &State, ui: &Inputs| {
        let f = model.derivative(s, ui);
        [f[0] + correction[0], f[1] + correction[1]]
    };
    let xhat = rk4_step(&deriv, &|tau| u(tau), t, &obs.xhat, dt);
    Ok(ObserverState { xhat, gain: obs.gain.clone() })
}

/// `A − L C` for a linear map.
pub fn observer_error_matrix(model: &LateralModel, map: &OutputMap, gain: &[State]) -> Option<Mat2> {
    let (c, _) = map.linear_parts()?;
    let mut lc = Mat2::new(0.0, 0.0, 0.0, 0.0);
    for (row, col) in c.iter().zip(gain) {
        for i in 0..2 {
            for j in 0..2 {
                lc.0[i][j] += col[i] * row[j];
            }
        }
    }
    Some(model.a.add(&lc.scale(-1.0)))
}

/// Ackermann pole placement for the two-state observer.
///
/// Each output row is tried on its own, then their sum; the first that makes
/// `(A, c)` observable receives the whole gain.
pub fn design_observer_gain(
    model: &LateralModel,
    map: &OutputMap,
    poles: [Complex64; 2],
) -> Result<Vec<State>, SimError> {
    let (c, _) = map.linear_parts().ok_or(SimError::NonlinearOutput(map.config))?;
    let sum = poles[0] + poles[1];
    let prod = poles[0] * poles[1];
    let scale = poles[0].norm().max(poles[1].norm()).max(1.0);
    if sum.im.abs() > 1e-12 * scale || prod.im.abs() > 1e-12 * scale * scale {
        return Err(SimError::ComplexPoles);
    }
    let a = model.a;
    // φ(A) = A² − (p1+p2) A + p1 p2 I
    let phi = a.mul(&a).add(&a.scale(-sum.re)).add(&Mat2::identity().scale(prod.re));

    let mut candidates: Vec<(Option<usize>, [f64; 2])> = c.iter().copied().enumerate().map(|(j, r)| (Some(j), r)).collect();
    if c.len() > 1 {
        let summed = c.iter().fold([0.0, 0.0], |acc, r| [acc[0] + r[0], acc[1] + r[1]]);
        candidates.push((None, summed));
    }
    for (which, row) in candidates {
        let row_a = [row[0] * a.0[0][0] + row[1] * a.0[1][0], row[0] * a.0[0][1] + row[1] * a.0[1][1]];
        let obs = Mat2::new(row[0], row[1], row_a[0], row_a[1]);
        let norm = (row[0].hypot(row[1])) * (row_a[0].hypot(row_a[1]));
        if norm == 0.0 || obs.det().abs() <= 1e-9 * norm {
            continue;
        }
        let inv = obs.inverse().expect("non-zero determinant");
        // L = φ(A) · O⁻¹ · e2
        let col = phi.mul_vec(&[inv.0[0][1], inv.0[1][1]]);
        let mut gain = vec![[0.0; 2]; c.len()];
        match which {
            Some(j) => gain[j] = col,
            None => gain.iter_mut().for_each(|g| *g = col),
        }
        return Ok(gain);
    }
    Err(SimError::Unobservable(map.config))
}
