use serde::{Deserialize, Serialize};

use super::SessionError;
use crate::geometry::SyntheticCameraSpec;
use crate::monitor::MonitorParams;
use crate::zones::ZoneParams;

/// Simulated operator. The defaults are calibrated so the simulated runs
/// land in the published improvement bands; they are not measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorParams {
    /// Walking speed in m/s.
    pub walk_speed: f64,
    /// Mean delay before reacting to a prompt or starting the next task.
    pub reaction_latency: f64,
    /// Latencies are drawn uniformly within ± this fraction of the mean.
    pub latency_jitter: f64,
    /// Task durations are drawn uniformly within ± this fraction.
    pub duration_jitter: f64,
    /// Time to move the forearms between rest and the work spot.
    pub reach_time: f64,
    /// Where the operator stands while working, robot frame (x, y).
    pub station: [f64; 2],
    /// Hand x coordinate at rest, outside the camera footprint.
    pub rest_x: f64,
    /// Lateral offset of each hand from the work point.
    pub hand_spacing: f64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        Self {
            walk_speed: 1.2,
            reaction_latency: 4.0,
            latency_jitter: 0.25,
            duration_jitter: 0.1,
            reach_time: 1.0,
            station: [-1.6, 0.0],
            rest_x: -1.45,
            hand_spacing: 0.12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams {
    /// Required operator distance from the robot base while it moves.
    pub separation: f64,
    /// Where the operator waits, as a distance from the base.
    pub remote_distance: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            separation: 4.0,
            remote_distance: 4.2,
        }
    }
}

/// Everything about a run except the task script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Simulated sensor rate in Hz; the session ticks once per frame.
    pub frame_rate: f64,
    /// Runs longer than this in simulated seconds are aborted.
    pub max_time: f64,
    pub camera: SyntheticCameraSpec,
    pub zones: ZoneParams,
    pub monitor: MonitorParams,
    pub operator: OperatorParams,
    pub baseline: BaselineParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frame_rate: crate::simcell::DEFAULT_FRAME_RATE,
            max_time: 900.0,
            camera: SyntheticCameraSpec {
                center: [-0.35, 0.0],
                ..SyntheticCameraSpec::default()
            },
            zones: ZoneParams {
                omega: 28.0,
                ..ZoneParams::default()
            },
            monitor: MonitorParams::default(),
            operator: OperatorParams::default(),
            baseline: BaselineParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SessionError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let o = &self.operator;
        let positive = [
            self.frame_rate,
            self.max_time,
            o.walk_speed,
            o.reach_time,
            self.baseline.separation,
        ];
        if positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(SessionError::Config("rates, speeds and times must be positive".into()));
        }
        if !(o.reaction_latency >= 0.0
            && (0.0..1.0).contains(&o.latency_jitter)
            && (0.0..1.0).contains(&o.duration_jitter))
        {
            return Err(SessionError::Config("operator latency and jitter out of range".into()));
        }
        if self.baseline.remote_distance < self.baseline.separation {
            return Err(SessionError::Config(
                "remote distance is inside the separation distance".into(),
            ));
        }
        self.zones.validate().map_err(|e| SessionError::Config(e.to_string()))?;
        self.monitor
            .validate()
            .map_err(|e| SessionError::Config(e.to_string()))?;
        crate::geometry::make_synthetic_camera(&self.camera).map_err(|e| SessionError::Config(e.to_string()))?;
        Ok(())
    }
}
