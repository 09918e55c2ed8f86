//! Stealth and impact metrics over completed traces, and a threshold monitor
//! on the smoothed output residual.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::State;
use crate::sim::{observer_step, ObserverState, SimError, Trace, Waveform};
use crate::vehicle::{Inputs, LateralModel, OutputMap};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("detector threshold must be > 0, got {0}")]
    BadThreshold(f64),
    #[error("detector window {window} s is shorter than the step {dt} s")]
    BadWindow { window: f64, dt: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    /// Output units.
    #[serde(default = "DetectorConfig::default_threshold")]
    pub threshold: f64,
    /// Moving-average length, s.
    #[serde(default = "DetectorConfig::default_window")]
    pub window: f64,
}

impl DetectorConfig {
    fn default_threshold() -> f64 {
        1e-6
    }

    fn default_window() -> f64 {
        0.05
    }

    pub fn validate(&self, dt: f64) -> Result<(), DetectionError> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(DetectionError::BadThreshold(self.threshold));
        }
        if !(self.window >= dt * (1.0 - 1e-9)) || !self.window.is_finite() {
            return Err(DetectionError::BadWindow { window: self.window, dt });
        }
        Ok(())
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { threshold: Self::default_threshold(), window: Self::default_window() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StealthReport {
    /// `max_t ‖y_received − y_nominal‖∞`
    pub sup_dev: f64,
    /// RMS over time of the same per-sample norm.
    pub rms_dev: f64,
    pub first_alarm: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    /// Per component `(v_y, r)`, m/s and rad/s.
    pub sup_state_dev: [f64; 2],
    pub terminal_dev: [f64; 2],
    /// `∫ ‖x_true − x_nominal‖² dt`, rectangle rule.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlarmSeries {
    pub alarms: Vec<bool>,
    pub first_alarm: Option<f64>,
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Per-sample `‖y_received − y_nominal‖∞`.
pub fn deviation_series(trace: &Trace) -> Vec<f64> {
    trace.records.iter().map(|r| inf_norm_diff(&r.y_received, &r.y_nominal)).collect()
}

/// `(sup, rms)` of a deviation series; zeros when empty.
pub fn sup_rms(dev: &[f64]) -> (f64, f64) {
    if dev.is_empty() {
        return (0.0, 0.0);
    }
    let sup = dev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let rms = (dev.iter().map(|v| v * v).sum::<f64>() / dev.len() as f64).sqrt();
    // Rounding in the mean can push rms a few ulps above sup for constant series.
    (sup, rms.min(sup))
}

/// Trailing moving average over `w` samples, zero-padded before the start.
pub fn moving_average(series: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for (k, v) in series.iter().enumerate() {
        acc += v;
        if k >= w {
            acc -= series[k - w];
        }
        out.push(acc / w as f64);
    }
    out
}

/// Alarm wherever the smoothed series exceeds the threshold.
pub fn alarm_series(dev: &[f64], times: &[f64], dt: f64, cfg: &DetectorConfig) -> Result<AlarmSeries, DetectionError> {
    cfg.validate(dt)?;
    let w = (cfg.window / dt).round() as usize;
    let alarms: Vec<bool> = moving_average(dev, w).into_iter().map(|m| m > cfg.threshold).collect();
    let first_alarm = alarms.iter().position(|&a| a).map(|k| times[k]);
    Ok(AlarmSeries { alarms, first_alarm })
}

pub fn residual_alarm(trace: &Trace, cfg: &DetectorConfig) -> Result<AlarmSeries, DetectionError> {
    let dt = trace.dt().unwrap_or(cfg.window);
    alarm_series(&deviation_series(trace), &trace.times(), dt, cfg)
}

pub fn stealth_report(trace: &Trace, detector: Option<&DetectorConfig>) -> Result<StealthReport, DetectionError> {
    let dev = deviation_series(trace);
    let (sup_dev, rms_dev) = sup_rms(&dev);
    let first_alarm = match detector {
        Some(cfg) => residual_alarm(trace, cfg)?.first_alarm,
        None => None,
    };
    Ok(StealthReport { sup_dev, rms_dev, first_alarm })
}

/// Deviation restricted to samples with `t_lo ≤ t ≤ t_hi`; no monitor.
pub fn stealth_report_between(trace: &Trace, t_lo: f64, t_hi: f64) -> StealthReport {
    let dev: Vec<f64> = trace
        .records
        .iter()
        .filter(|r| r.t >= t_lo && r.t <= t_hi)
        .map(|r| inf_norm_diff(&r.y_received, &r.y_nominal))
        .collect();
    let (sup_dev, rms_dev) = sup_rms(&dev);
    StealthReport { sup_dev, rms_dev, first_alarm: None }
}

pub fn impact_report(trace: &Trace) -> ImpactReport {
    let dt = trace.dt().unwrap_or(0.0);
    let mut rep = ImpactReport::default();
    for r in &trace.records {
        let d = [r.x_true[0] - r.x_nominal[0], r.x_true[1] - r.x_nominal[1]];
        rep.sup_state_dev[0] = rep.sup_state_dev[0].max(d[0].abs());
        rep.sup_state_dev[1] = rep.sup_state_dev[1].max(d[1].abs());
        rep.energy += (d[0] * d[0] + d[1] * d[1]) * dt;
        rep.terminal_dev = [d[0].abs(), d[1].abs()];
    }
    rep
}

/// Largest absolute state component reached in the trace by the attack-free twin.
pub fn nominal_state_peak(trace: &Trace) -> [f64; 2] {
    trace.records.iter().fold([0.0, 0.0], |m, r| [m[0].max(r.x_nominal[0].abs()), m[1].max(r.x_nominal[1].abs())])
}

/// Controller's-eye residual: a Luenberger observer driven by the received
/// outputs and nominal commands, returning `‖y_received − ŷ‖∞` per sample.
///
/// The yaw-moment command is held per step; the steering profile is
/// evaluated at the stage times.
pub fn observer_residual(
    trace: &Trace,
    model: &LateralModel,
    map: &OutputMap,
    gain: Vec<State>,
    xhat0: State,
    steer: &Waveform,
) -> Result<Vec<f64>, DetectionError> {
    let (c, d) = map.linear_parts().ok_or(SimError::NonlinearOutput(map.config))?;
    let dt = trace.dt().unwrap_or(0.0);
    let mut obs = ObserverState { xhat: xhat0, gain };
    let mut out = Vec::with_capacity(trace.len());
    for r in &trace.records {
        let delta = steer.value(r.t);
        let res = c
            .iter()
            .zip(d)
            .zip(&r.y_received)
            .map(|((row, dj), y)| (y - row[0] * obs.xhat[0] - row[1] * obs.xhat[1] - dj * delta).abs())
            .fold(0.0, f64::max);
        out.push(res);
        let mz = r.u_nominal.mz;
        let u = |tau: f64| Inputs::new(mz, steer.value(tau));
        obs = observer_step(&obs, &u, &r.y_received, model, map, r.t, dt)?;
    }
    Ok(out)
}
