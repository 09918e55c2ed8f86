//! Stealthy attack synthesis and the channel taps that execute them.

pub mod covert;
pub mod replay;
pub mod zda;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimError;
use crate::vehicle::OutputConfig;

pub use covert::{
    covert_internal_step, covert_sensor_comp_linear, covert_sensor_comp_nonlinear, covert_tracking_input,
    integral_tracking_gains, CompensationForm, CovertConfig, CovertMode, CovertState, CovertTaps, NominalSource,
    TrackingConfig,
};
pub use replay::{max_rate, replay_output, replay_record, ReplayBuffer, ReplayConfig, ReplayInjection, ReplayStatus, ReplayTaps};
pub use zda::{
    off_manifold_preparation, rosenbrock_matrix, zda_input, zda_nonlinear_feedback, zda_nonlinear_input,
    zda_synthesize_linear, zda_synthesize_linear_with_tol, zda_synthesize_nonlinear, Preparation, ZdaNonlinearPlan,
    ZdaNonlinearTaps, ZdaPlan, ZdaSynthesis, ZdaTaps, ZeroBranch,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("{0:?} output is nonlinear; this operation needs a linear output map")]
    NonlinearOutput(OutputConfig),
    #[error("nonlinear zero-dynamics input is only defined on the r = 0 branch, plan is on {0:?}")]
    BranchUnsupported(ZeroBranch),
    #[error("yaw rate not regulated below tolerance within {horizon} s")]
    Unreachable { horizon: f64 },
    #[error("output not in steady state: max rate {rate} exceeds {delta_ss}")]
    NotSteadyState { rate: f64, delta_ss: f64 },
    #[error("t = {t} s is outside the replay window [{start}, {end}]")]
    OutOfWindow { t: f64, start: f64, end: f64 },
    #[error("replay window: {0}")]
    BadWindow(String),
    #[error("tracking gains: {0}")]
    BadTracking(String),
    #[error("incompatible attack configuration: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Attack classes in the resource taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackClass {
    Replay,
    ZeroDynamics,
    Covert,
}

/// What an attacker must have to mount a given attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackResources {
    pub needs_model: bool,
    pub needs_disclosure: bool,
    pub needs_actuator_disruption: bool,
    pub needs_sensor_disruption: bool,
}

impl AttackClass {
    pub fn resources(self) -> AttackResources {
        match self {
            AttackClass::Replay => AttackResources {
                needs_model: false,
                needs_disclosure: true,
                needs_actuator_disruption: true,
                needs_sensor_disruption: true,
            },
            AttackClass::ZeroDynamics => AttackResources {
                needs_model: true,
                needs_disclosure: false,
                needs_actuator_disruption: true,
                needs_sensor_disruption: false,
            },
            AttackClass::Covert => AttackResources {
                needs_model: true,
                needs_disclosure: true,
                needs_actuator_disruption: true,
                needs_sensor_disruption: true,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resource_rows() {
        assert!(!AttackClass::Replay.resources().needs_model);
        assert!(!AttackClass::ZeroDynamics.resources().needs_sensor_disruption);
        let c = AttackClass::Covert.resources();
        assert!(c.needs_actuator_disruption && c.needs_sensor_disruption);
    }
}
