//! Declarative scenario files and the run pipeline:
//! model, output map, attack synthesis, simulation with taps, reports.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{
    zda_synthesize_linear_with_tol, AttackClass, AttackError, AttackResources, CovertConfig, CovertMode, CovertTaps,
    ReplayConfig, ReplayStatus, ReplayTaps, TrackingConfig, ZdaNonlinearPlan, ZdaNonlinearTaps, ZdaPlan, ZdaSynthesis,
    ZdaTaps, ZeroBranch,
};
use crate::detection::{
    impact_report, nominal_state_peak, stealth_report, stealth_report_between, DetectionError, DetectorConfig,
    ImpactReport, StealthReport,
};
use crate::numerics::{State, TimeGrid, DEFAULT_RANK_TOL};
use crate::sim::{
    simulate_with, ChannelTaps, IdentityTaps, PlantKind, SensorNoise, SimError, SimOptions, SteeringProfile, Trace,
    Waveform, YawRateFeedback,
};
use crate::vehicle::{build_state_space, output_map, OutputConfig, SaturationLimits, VehicleError, VehicleParams};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown scenario `{0}`")]
    Unknown(String),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

impl ScenarioError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ScenarioError::Io { path: path.display().to_string(), source }
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_dt() -> f64 {
    0.001
}

fn default_eps() -> f64 {
    1e-6
}

fn default_prep_gain() -> f64 {
    2000.0
}

fn default_horizon() -> f64 {
    10.0
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

/// Simulation grid, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZdaMode {
    /// Plant starts offset along the zero direction; output is nulled exactly.
    #[default]
    OnManifold,
    /// Plant starts on the nominal trajectory; only the input is injected.
    InjectionOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    Replay(ReplayConfig),
    ZdaLinear {
        /// Attack start, s; defaults to the grid start.
        #[serde(default)]
        t0: Option<f64>,
        /// `‖x0‖` of the zero direction, SI state units.
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        mode: ZdaMode,
        #[serde(default = "default_rank_tol")]
        rank_tol: f64,
    },
    ZdaNonlinear {
        /// Attacked plant's offset from the nominal initial state; the
        /// attacker knows the resulting state exactly.
        state_offset: State,
        #[serde(default = "default_eps")]
        eps: f64,
        /// N·m per rad/s, used only when the state is off the manifold.
        #[serde(default = "default_prep_gain")]
        prep_gain: f64,
        /// s
        #[serde(default = "default_horizon")]
        max_horizon: f64,
    },
    Covert(CovertConfig),
}

impl AttackSpec {
    pub fn class(&self) -> AttackClass {
        match self {
            AttackSpec::Replay(_) => AttackClass::Replay,
            AttackSpec::ZdaLinear { .. } | AttackSpec::ZdaNonlinear { .. } => AttackClass::ZeroDynamics,
            AttackSpec::Covert(_) => AttackClass::Covert,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisOutcome {
    Feasible,
    Infeasible,
}

/// Bounds checked by the suite runner.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub synthesis: Option<SynthesisOutcome>,
    #[serde(default)]
    pub max_stealth_dev: Option<f64>,
    #[serde(default)]
    pub min_stealth_dev: Option<f64>,
    /// Bound on the stealth deviation inside the replay window.
    #[serde(default)]
    pub max_replay_window_dev: Option<f64>,
    /// Lower bound on the largest state-deviation component.
    #[serde(default)]
    pub min_state_dev: Option<f64>,
    /// Lower bound on state deviation divided by the nominal state peak.
    #[serde(default)]
    pub min_state_dev_over_nominal: Option<f64>,
    /// Upper bound on terminal over peak state deviation.
    #[serde(default)]
    pub max_terminal_ratio: Option<f64>,
    #[serde(default)]
    pub min_terminal_ratio: Option<f64>,
    #[serde(default)]
    pub alarm: Option<bool>,
    #[serde(default)]
    pub clipped: Option<bool>,
    /// Final true yaw rate within `tol` of `target`, rad/s.
    #[serde(default)]
    pub final_yaw_rate: Option<[f64; 2]>,
}

/// One scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub output: OutputConfig,
    /// Steering angle profile, rad.
    #[serde(default)]
    pub steering: SteeringProfile,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
    #[serde(default = "no_limits")]
    pub saturation: SaturationLimits,
    #[serde(default)]
    pub detector: DetectorConfig,
    pub grid: GridSpec,
    #[serde(default)]
    pub plant: PlantKind,
    /// `(v_y, r)` shared by the attacked plant and its twin.
    #[serde(default)]
    pub initial_state: State,
    #[serde(default)]
    pub controller: Option<YawRateFeedback>,
    /// Standard deviation of additive sensor noise in output units.
    #[serde(default)]
    pub sensor_noise: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub expect: Expectations,
}

fn no_limits() -> SaturationLimits {
    SaturationLimits::NONE
}

impl ScenarioSpec {
    pub fn time_grid(&self) -> Result<TimeGrid, ScenarioError> {
        TimeGrid::from_duration(self.grid.t0, self.grid.dt, self.grid.duration)
            .map_err(|e| ScenarioError::Validation(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Validation(m));
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        self.vehicle.validate()?;
        self.saturation.validate()?;
        let grid = self.time_grid()?;
        self.detector.validate(grid.dt)?;
        self.steering.validate()?;
        if !self.initial_state.iter().all(|v| v.is_finite()) {
            return invalid("initial_state must be finite".into());
        }
        if self.controller.is_some() && !matches!(self.output, OutputConfig::YawRate | OutputConfig::Combined) {
            return invalid(format!("yaw-rate feedback needs a yaw-rate channel, output is {:?}", self.output));
        }
        if let Some(std) = self.sensor_noise {
            if !(std >= 0.0 && std.is_finite()) {
                return invalid(format!("sensor_noise must be >= 0, got {std}"));
            }
        }
        let Some(attack) = self.attack else { return Ok(()) };
        match attack {
            AttackSpec::Replay(cfg) => {
                ReplayTaps::new(cfg, &grid, None)?;
                if let Some(inj) = cfg.injection {
                    inj.signal.validate()?;
                }
            }
            AttackSpec::ZdaLinear { t0, amplitude, mode, rank_tol } => {
                if !self.output.is_linear() {
                    return invalid(format!("zda_linear needs a linear output, got {:?}", self.output));
                }
                if !(amplitude > 0.0 && amplitude.is_finite()) {
                    return invalid(format!("zda amplitude must be > 0, got {amplitude}"));
                }
                if !(rank_tol > 0.0) {
                    return invalid(format!("rank_tol must be > 0, got {rank_tol}"));
                }
                let t0 = t0.unwrap_or(grid.t0);
                if grid.index_of(t0, 1e-6).is_none() || t0 > grid.t_end() {
                    return invalid(format!("zda t0 = {t0} s is not on the grid"));
                }
                if mode == ZdaMode::OnManifold && (t0 - grid.t0).abs() > 1e-12 {
                    return invalid("on_manifold zda must start at the grid start".into());
                }
            }
            AttackSpec::ZdaNonlinear { state_offset, eps, prep_gain, max_horizon } => {
                if self.output != OutputConfig::LongitudinalAccel {
                    return invalid(format!("zda_nonlinear needs the longitudinal_accel output, got {:?}", self.output));
                }
                if !(eps > 0.0) || !(max_horizon > 0.0) || !prep_gain.is_finite() {
                    return invalid("zda_nonlinear needs eps > 0, max_horizon > 0 and a finite prep_gain".into());
                }
                if !state_offset.iter().all(|v| v.is_finite()) {
                    return invalid("state_offset must be finite".into());
                }
            }
            AttackSpec::Covert(cfg) => {
                let nonlinear = matches!(cfg.mode, CovertMode::Nonlinear { .. });
                if nonlinear != (self.output == OutputConfig::LongitudinalAccel) {
                    return invalid(format!(
                        "{} covert compensation is incompatible with the {:?} output",
                        if nonlinear { "nonlinear" } else { "linear" },
                        self.output
                    ));
                }
                cfg.u_c.validate()?;
                if let Some(lim) = cfg.mz_limit {
                    if !(lim > 0.0) {
                        return invalid(format!("covert mz_limit must be > 0, got {lim}"));
                    }
                }
                if let Some(TrackingConfig { reference, .. }) = cfg.tracking {
                    reference.validate()?;
                    if !matches!(self.output, OutputConfig::YawRate | OutputConfig::Combined) {
                        return invalid("covert tracking steers the yaw rate and needs a yaw-rate output".into());
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

const BUNDLED: &[(&str, &str)] = &[
    ("nominal_sinusoid", include_str!("../scenarios/nominal_sinusoid.json")),
    ("table1_replay", include_str!("../scenarios/table1_replay.json")),
    ("table1_zda_yawrate", include_str!("../scenarios/table1_zda_yawrate.json")),
    ("table1_zda_yawrate_closed_loop", include_str!("../scenarios/table1_zda_yawrate_closed_loop.json")),
    ("table1_zda_lataccel", include_str!("../scenarios/table1_zda_lataccel.json")),
    ("table1_zda_combined", include_str!("../scenarios/table1_zda_combined.json")),
    ("table1_zda_nonlinear", include_str!("../scenarios/table1_zda_nonlinear.json")),
    ("table1_zda_nonlinear_prepared", include_str!("../scenarios/table1_zda_nonlinear_prepared.json")),
    ("table1_covert_linear", include_str!("../scenarios/table1_covert_linear.json")),
    ("table1_covert_linear_surrogate", include_str!("../scenarios/table1_covert_linear_surrogate.json")),
    ("table1_covert_nonlinear", include_str!("../scenarios/table1_covert_nonlinear.json")),
    ("table1_covert_nonlinear_observer", include_str!("../scenarios/table1_covert_nonlinear_observer.json")),
    ("table1_covert_tracking", include_str!("../scenarios/table1_covert_tracking.json")),
    ("saturation_zda_clip", include_str!("../scenarios/saturation_zda_clip.json")),
    ("saturation_covert_limits", include_str!("../scenarios/saturation_covert_limits.json")),
    ("saturation_covert_unaware", include_str!("../scenarios/saturation_covert_unaware.json")),
    ("remark1_degraded_rear", include_str!("../scenarios/remark1_degraded_rear.json")),
];

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled_scenario(name: &str) -> Result<ScenarioSpec, ScenarioError> {
    let text = bundled_source(name).ok_or_else(|| ScenarioError::Unknown(name.to_string()))?;
    parse_scenario(text)
}

/// A path to a scenario file, or else the name of a bundled scenario.
pub fn load_scenario(arg: &str) -> Result<ScenarioSpec, ScenarioError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::io(path, e))?;
        let mut spec = parse_scenario(&text)?;
        if spec.name.is_empty() {
            spec.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        return Ok(spec);
    }
    bundled_scenario(arg)
}

/// Constants produced by attack synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthesisRecord {
    ZdaLinear {
        synthesis: ZdaSynthesis,
        mode: ZdaMode,
    },
    ZdaNonlinear {
        plan: ZdaNonlinearPlan,
        /// Preparation time before the attack, s.
        preparation_horizon: Option<f64>,
    },
    Covert {
        mode: CovertMode,
        tracking: Option<TrackingConfig>,
    },
    Replay {
        status: ReplayStatus,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub attack: Option<AttackClass>,
    pub resources: Option<AttackResources>,
    pub synthesis: Option<SynthesisRecord>,
    pub stealth: StealthReport,
    /// Stealth restricted to the replay window.
    pub replay_window_stealth: Option<StealthReport>,
    pub impact: ImpactReport,
    pub nominal_state_peak: [f64; 2],
    pub clipped_samples: usize,
    pub first_clipped: Option<f64>,
    pub events: Vec<String>,
    /// Kept out of the serialized summary so reruns produce identical files.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn zda_plan(&self) -> Option<&ZdaPlan> {
        match &self.synthesis {
            Some(SynthesisRecord::ZdaLinear { synthesis: ZdaSynthesis::Feasible(p), .. }) => Some(p),
            _ => None,
        }
    }

    pub fn synthesis_outcome(&self) -> Option<SynthesisOutcome> {
        match &self.synthesis {
            Some(SynthesisRecord::ZdaLinear { synthesis, .. }) => Some(match synthesis {
                ZdaSynthesis::Feasible(_) => SynthesisOutcome::Feasible,
                ZdaSynthesis::Infeasible => SynthesisOutcome::Infeasible,
            }),
            Some(SynthesisRecord::ZdaNonlinear { plan, .. }) => Some(if plan.branch == ZeroBranch::Z1 {
                SynthesisOutcome::Feasible
            } else {
                SynthesisOutcome::Infeasible
            }),
            _ => None,
        }
    }
}

/// Synthesis only, no simulation.
pub fn synthesize(spec: &ScenarioSpec) -> Result<Option<SynthesisRecord>, ScenarioError> {
    spec.validate()?;
    let model = build_state_space(&spec.vehicle)?;
    let map = output_map(&model, spec.output);
    let grid = spec.time_grid()?;
    Ok(match spec.attack {
        None => None,
        Some(AttackSpec::ZdaLinear { t0, mode, rank_tol, amplitude }) => {
            let synthesis = match zda_synthesize_linear_with_tol(&model, &map, t0.unwrap_or(grid.t0), rank_tol)? {
                ZdaSynthesis::Feasible(p) => ZdaSynthesis::Feasible(p.scaled_to(amplitude)),
                ZdaSynthesis::Infeasible => ZdaSynthesis::Infeasible,
            };
            Some(SynthesisRecord::ZdaLinear { synthesis, mode })
        }
        Some(AttackSpec::ZdaNonlinear { state_offset, eps, prep_gain, max_horizon }) => {
            let x = [spec.initial_state[0] + state_offset[0], spec.initial_state[1] + state_offset[1]];
            let taps = ZdaNonlinearTaps::new(&model, &x, eps, grid.t0, grid.dt, prep_gain, max_horizon)?;
            Some(SynthesisRecord::ZdaNonlinear {
                plan: *taps.plan(),
                preparation_horizon: taps.preparation().map(|p| p.horizon),
            })
        }
        Some(AttackSpec::Covert(cfg)) => Some(SynthesisRecord::Covert { mode: cfg.mode, tracking: cfg.tracking }),
        Some(AttackSpec::Replay(_)) => None,
    })
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<(Trace, RunSummary), ScenarioError> {
    let started = Instant::now();
    spec.validate()?;
    let model = build_state_space(&spec.vehicle)?;
    let map = output_map(&model, spec.output);
    let grid = spec.time_grid()?;
    let mut opts = SimOptions {
        plant: spec.plant,
        initial_state: spec.initial_state,
        attack_offset: [0.0, 0.0],
        controller: spec.controller,
        sensor_noise: spec.sensor_noise.map(|std_dev| SensorNoise { std_dev, seed: spec.seed }),
    };
    let lim = &spec.saturation;
    let mut events = Vec::new();
    let mut replay_window = None;

    let run = |taps: &mut dyn ChannelTaps, opts: &SimOptions| simulate_with(&model, &map, &spec.steering, taps, lim, &grid, opts);

    let (trace, synthesis) = match spec.attack {
        None => (run(&mut IdentityTaps, &opts)?, None),
        Some(AttackSpec::ZdaLinear { .. }) => {
            let record = synthesize(spec)?.expect("zda synthesis record");
            let trace = match &record {
                SynthesisRecord::ZdaLinear { synthesis: ZdaSynthesis::Feasible(plan), mode } => {
                    if *mode == ZdaMode::OnManifold {
                        opts.attack_offset = plan.state_offset();
                    }
                    run(&mut ZdaTaps { plan: *plan }, &opts)?
                }
                _ => {
                    events.push("no invariant zeros: attack not feasible, ran attack-free".to_string());
                    run(&mut IdentityTaps, &opts)?
                }
            };
            (trace, Some(record))
        }
        Some(AttackSpec::ZdaNonlinear { state_offset, eps, prep_gain, max_horizon }) => {
            let x = [spec.initial_state[0] + state_offset[0], spec.initial_state[1] + state_offset[1]];
            let mut taps = ZdaNonlinearTaps::new(&model, &x, eps, grid.t0, grid.dt, prep_gain, max_horizon)?;
            opts.attack_offset = state_offset;
            if let Some(p) = taps.preparation() {
                events.push(format!("off manifold: preparation phase of {} s", p.horizon));
            }
            match taps.plan().branch {
                ZeroBranch::Z1 => {}
                ZeroBranch::Z2 => events.push("v_y = 0 branch: only the equilibrium is zero-output".into()),
                ZeroBranch::OffManifold => events.push("state left off the zero-output manifold".into()),
            }
            let trace = run(&mut taps, &opts)?;
            let record = SynthesisRecord::ZdaNonlinear {
                plan: *taps.plan(),
                preparation_horizon: taps.preparation().map(|p| p.horizon),
            };
            (trace, Some(record))
        }
        Some(AttackSpec::Covert(cfg)) => {
            let mut taps = CovertTaps::new(&model, spec.output, cfg)?;
            let trace = run(&mut taps, &opts)?;
            (trace, Some(SynthesisRecord::Covert { mode: cfg.mode, tracking: cfg.tracking }))
        }
        Some(AttackSpec::Replay(cfg)) => {
            let freq = match spec.steering {
                Waveform::Sinusoid { frequency, .. } => Some(frequency),
                _ => None,
            };
            let mut taps = ReplayTaps::new(cfg, &grid, freq)?;
            let trace = run(&mut taps, &opts)?;
            if let ReplayStatus::Rejected { rate, delta_ss } = taps.status() {
                events.push(format!("recording rejected: output rate {rate} exceeds {delta_ss}, attack abandoned"));
            } else {
                replay_window = Some(stealth_report_between(&trace, cfg.t_r, cfg.t_r + cfg.tau));
            }
            (trace, Some(SynthesisRecord::Replay { status: taps.status().clone() }))
        }
    };

    let stealth = stealth_report(&trace, Some(&spec.detector))?;
    let summary = RunSummary {
        scenario: spec.name.clone(),
        attack: spec.attack.map(|a| a.class()),
        resources: spec.attack.map(|a| a.class().resources()),
        synthesis,
        stealth,
        replay_window_stealth: replay_window,
        impact: impact_report(&trace),
        nominal_state_peak: nominal_state_peak(&trace),
        clipped_samples: trace.clipped_count(),
        first_clipped: trace.records.iter().find(|r| r.clipped).map(|r| r.t),
        events,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((trace, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Evaluate a scenario's expectations against its run.
pub fn check_expectations(spec: &ScenarioSpec, trace: &Trace, s: &RunSummary) -> Vec<Check> {
    let e = &spec.expect;
    let mut out = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| out.push(Check { name: name.into(), passed, detail });
    let state_peak = s.impact.sup_state_dev[0].max(s.impact.sup_state_dev[1]);
    let terminal = s.impact.terminal_dev[0].max(s.impact.terminal_dev[1]);

    if let Some(want) = e.synthesis {
        let got = s.synthesis_outcome();
        push("synthesis", got == Some(want), format!("{got:?}"));
    }
    if let Some(max) = e.max_stealth_dev {
        push("stealth", s.stealth.sup_dev <= max, format!("sup_dev {:.3e} <= {max:.1e}", s.stealth.sup_dev));
    }
    if let Some(min) = e.min_stealth_dev {
        push("detectable", s.stealth.sup_dev > min, format!("sup_dev {:.3e} > {min:.1e}", s.stealth.sup_dev));
    }
    if let Some(max) = e.max_replay_window_dev {
        let dev = s.replay_window_stealth.map(|r| r.sup_dev);
        push("replay window stealth", dev.is_some_and(|d| d <= max), format!("{dev:?} <= {max:.1e}"));
    }
    if let Some(min) = e.min_state_dev {
        push("impact", state_peak >= min, format!("state dev {state_peak:.3e} >= {min:.1e}"));
    }
    if let Some(k) = e.min_state_dev_over_nominal {
        let nominal = s.nominal_state_peak[0].max(s.nominal_state_peak[1]);
        push(
            "impact vs nominal",
            state_peak > k * nominal,
            format!("state dev {state_peak:.3e} > {k} x nominal {nominal:.3e}"),
        );
    }
    if let Some(max) = e.max_terminal_ratio {
        let ratio = if state_peak > 0.0 { terminal / state_peak } else { 0.0 };
        push("decay", ratio <= max, format!("terminal/peak {ratio:.3e} <= {max}"));
    }
    if let Some(min) = e.min_terminal_ratio {
        let ratio = if state_peak > 0.0 { terminal / state_peak } else { 0.0 };
        push("growth", ratio >= min, format!("terminal/peak {ratio:.3e} >= {min}"));
    }
    if let Some(want) = e.alarm {
        let got = s.stealth.first_alarm;
        let ok = match (want, got, s.first_clipped) {
            (false, None, _) => true,
            (true, Some(ta), Some(tc)) => ta <= tc + spec.detector.window + 1e-12,
            (true, Some(_), None) => true,
            _ => false,
        };
        push("alarm", ok, format!("first alarm {got:?}, first clip {:?}", s.first_clipped));
    }
    if let Some(want) = e.clipped {
        push("clipping", (s.clipped_samples > 0) == want, format!("{} clipped samples", s.clipped_samples));
    }
    if let Some([target, tol]) = e.final_yaw_rate {
        let r = trace.records.last().map_or(f64::NAN, |r| r.x_true[1]);
        push("tracking", (r - target).abs() <= tol, format!("final r {r:.6} vs {target} ± {tol}"));
    }
    out
}
