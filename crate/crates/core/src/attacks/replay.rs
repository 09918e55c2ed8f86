//! Replay attack: record the sensor stream during a steady window, replay it
//! while optionally injecting on an actuator channel. Needs no plant model.

use serde::{Deserialize, Serialize};

use super::AttackError;
use crate::numerics::TimeGrid;
use crate::sim::{Channel, ChannelTaps, SensorFrame, Waveform};
use crate::vehicle::Inputs;

/// Recorded samples `y(t_r − τ) … y(t_r)` on the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    pub samples: Vec<Vec<f64>>,
    pub t_r: f64,
    pub tau: f64,
    pub dt: f64,
}

/// Largest `‖(y_{k+1} − y_k)/dt‖∞` over the samples.
pub fn max_rate(samples: &[Vec<f64>], dt: f64) -> f64 {
    samples
        .windows(2)
        .flat_map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| ((b - a) / dt).abs()))
        .fold(0.0, f64::max)
}

/// Accept a recording of `round(τ/dt) + 1` samples ending at `t_r` if the
/// output rate stays below `delta_ss`.
pub fn replay_record(
    samples: &[Vec<f64>],
    dt: f64,
    t_r: f64,
    tau: f64,
    delta_ss: f64,
) -> Result<ReplayBuffer, AttackError> {
    let n = window_steps(tau, dt)?;
    if samples.len() != n + 1 {
        return Err(AttackError::BadWindow(format!("expected {} samples for τ = {tau} s, got {}", n + 1, samples.len())));
    }
    let rate = max_rate(samples, dt);
    if !(rate < delta_ss) {
        return Err(AttackError::NotSteadyState { rate, delta_ss });
    }
    Ok(ReplayBuffer { samples: samples.to_vec(), t_r, tau, dt })
}

fn window_steps(tau: f64, dt: f64) -> Result<usize, AttackError> {
    let n = (tau / dt).round();
    if !(tau > 0.0 && dt > 0.0) || ((tau / dt) - n).abs() > 1e-6 {
        return Err(AttackError::BadWindow(format!("τ = {tau} s is not a whole number of {dt} s steps")));
    }
    Ok(n as usize)
}

/// `y(t − τ)` for `t ∈ [t_r, t_r + τ]`, taken from the nearest grid sample.
pub fn replay_output(buf: &ReplayBuffer, t: f64) -> Result<&[f64], AttackError> {
    let k = ((t - buf.t_r) / buf.dt).round();
    if k < 0.0 || k as usize >= buf.samples.len() {
        return Err(AttackError::OutOfWindow { t, start: buf.t_r, end: buf.t_r + buf.tau });
    }
    Ok(&buf.samples[k as usize])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayInjection {
    pub channel: Channel,
    pub signal: Waveform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    /// End of the recording window and start of the replay, s.
    pub t_r: f64,
    /// Window length, s.
    pub tau: f64,
    /// Steady-state rate bound in output units per second.
    #[serde(default)]
    pub delta_ss: Option<f64>,
    /// Applied for `t_r < t ≤ t_r + τ`.
    #[serde(default)]
    pub injection: Option<ReplayInjection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ReplayStatus {
    Recording,
    Replaying,
    /// The recording failed the steady-state test; the attack was abandoned.
    Rejected { rate: f64, delta_ss: f64 },
}

#[derive(Debug, Clone)]
pub struct ReplayTaps {
    cfg: ReplayConfig,
    dt: f64,
    k_record: usize,
    k_replay: usize,
    n: usize,
    default_rate_scale: Option<f64>,
    step: usize,
    recording: Vec<Vec<f64>>,
    buffer: Option<ReplayBuffer>,
    status: ReplayStatus,
}

impl ReplayTaps {
    /// `reference_frequency` (Hz) sets the default steady-state bound to
    /// `1.5·2π·f` times the peak recorded output when `delta_ss` is unset.
    pub fn new(cfg: ReplayConfig, grid: &TimeGrid, reference_frequency: Option<f64>) -> Result<Self, AttackError> {
        let n = window_steps(cfg.tau, grid.dt)?;
        let k_replay = grid
            .index_of(cfg.t_r, 1e-6)
            .ok_or_else(|| AttackError::BadWindow(format!("t_r = {} s is not on the grid", cfg.t_r)))?;
        if k_replay < n {
            return Err(AttackError::BadWindow(format!("recording would start before t = {} s", grid.t0)));
        }
        if k_replay >= grid.n_steps {
            return Err(AttackError::BadWindow(format!("t_r = {} s is past the end of the run", cfg.t_r)));
        }
        if let Some(d) = cfg.delta_ss {
            if !(d > 0.0) {
                return Err(AttackError::BadWindow(format!("delta_ss must be > 0, got {d}")));
            }
        }
        Ok(Self {
            cfg,
            dt: grid.dt,
            k_record: k_replay - n,
            k_replay,
            n,
            default_rate_scale: reference_frequency.map(|f| 1.5 * 2.0 * std::f64::consts::PI * f),
            step: 0,
            recording: Vec::with_capacity(n + 1),
            buffer: None,
            status: ReplayStatus::Recording,
        })
    }

    pub fn status(&self) -> &ReplayStatus {
        &self.status
    }

    pub fn buffer(&self) -> Option<&ReplayBuffer> {
        self.buffer.as_ref()
    }

    /// Steady-state bound actually applied to the recording.
    fn delta_ss(&self) -> f64 {
        if let Some(d) = self.cfg.delta_ss {
            return d;
        }
        let peak = self.recording.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        match self.default_rate_scale {
            Some(scale) if peak > 0.0 => scale * peak,
            _ => 1e-3,
        }
    }
}

impl ChannelTaps for ReplayTaps {
    fn actuator(&self, t: f64, u: Inputs) -> Inputs {
        match (&self.status, self.cfg.injection) {
            (ReplayStatus::Replaying, Some(inj)) if t > self.cfg.t_r && t <= self.cfg.t_r + self.cfg.tau => {
                inj.channel.inject(u, inj.signal.value(t))
            }
            _ => u,
        }
    }

    fn sensor(&mut self, frame: &SensorFrame<'_>) -> Vec<f64> {
        let k = self.step;
        self.step += 1;
        if (self.k_record..=self.k_replay).contains(&k) {
            self.recording.push(frame.y_true.to_vec());
        }
        if k == self.k_replay {
            let delta_ss = self.delta_ss();
            match replay_record(&self.recording, self.dt, self.cfg.t_r, self.cfg.tau, delta_ss) {
                Ok(buf) => {
                    self.buffer = Some(buf);
                    self.status = ReplayStatus::Replaying;
                }
                Err(AttackError::NotSteadyState { rate, delta_ss }) => {
                    self.status = ReplayStatus::Rejected { rate, delta_ss };
                }
                Err(e) => unreachable!("window validated at construction: {e}"),
            }
        }
        match &self.buffer {
            Some(buf) if k >= self.k_replay && k <= self.k_replay + self.n => buf.samples[k - self.k_replay].clone(),
            _ => frame.y_true.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(amp: f64, f: f64, t0: f64, dt: f64, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|k| vec![amp * (2.0 * PI * f * (t0 + k as f64 * dt)).sin()]).collect()
    }

    #[test]
    fn constant_segment_always_accepted() {
        let s = vec![vec![0.7]; 101];
        assert!(replay_record(&s, 0.01, 2.0, 1.0, 1e-12).is_ok());
    }

    #[test]
    fn sinusoid_rejected_below_derivative_bound() {
        let (amp, f) = (2.0, 0.5);
        let bound = amp * 2.0 * PI * f;
        let s = sine(amp, f, 0.0, 0.001, 2001);
        assert!(matches!(replay_record(&s, 0.001, 2.0, 2.0, 0.9 * bound), Err(AttackError::NotSteadyState { .. })));
        assert!(replay_record(&s, 0.001, 2.0, 2.0, 1.01 * bound).is_ok());
    }

    #[test]
    fn window_length_enforced() {
        let s = vec![vec![0.0]; 50];
        assert!(matches!(replay_record(&s, 0.01, 1.0, 1.0, 1.0), Err(AttackError::BadWindow(_))));
    }

    #[test]
    fn output_lookup() {
        let s = sine(1.0, 0.25, 6.0, 0.01, 401);
        let buf = replay_record(&s, 0.01, 10.0, 4.0, 10.0).unwrap();
        assert_eq!(replay_output(&buf, 10.0).unwrap(), s[0].as_slice());
        assert_eq!(replay_output(&buf, 14.0).unwrap(), s[400].as_slice());
        assert!(matches!(replay_output(&buf, 14.02), Err(AttackError::OutOfWindow { .. })));
        assert!(matches!(replay_output(&buf, 9.9), Err(AttackError::OutOfWindow { .. })));
    }

    #[test]
    fn construction_checks_grid() {
        let grid = TimeGrid::new(0.0, 0.01, 1000).unwrap();
        let ok = ReplayConfig { t_r: 5.0, tau: 2.0, delta_ss: None, injection: None };
        assert!(ReplayTaps::new(ok, &grid, None).is_ok());
        assert!(ReplayTaps::new(ReplayConfig { t_r: 1.0, ..ok }, &grid, None).is_err());
        assert!(ReplayTaps::new(ReplayConfig { t_r: 5.005, ..ok }, &grid, None).is_err());
        assert!(ReplayTaps::new(ReplayConfig { delta_ss: Some(0.0), ..ok }, &grid, None).is_err());
    }
}
