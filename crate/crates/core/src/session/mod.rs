//! Assembly sessions: the task script, the operator stand-in, the AR
//! interaction state machine and the tick loop that ties them to the cell
//! and the safety monitor. The baseline mode runs the same script under a
//! conventional separation policy for comparison.

mod config;
mod engine;
mod metrics;
mod operator;
pub mod protocol;
mod record;
mod script;
mod state;

pub use config::{BaselineParams, OperatorParams, RunConfig};
pub use engine::{RunOptions, Session, SessionEvent};
pub use metrics::{write_metrics_csv, RunMetrics, METRICS_CSV_HEADER};
pub use operator::OperatorAgent;
pub use protocol::{Message, Snapshot};
pub use record::{annotations_path, replay, verdicts_path, FrameAnnotation, RecordHeader, ReplayError, ReplayOutput};
pub use script::{
    ArmKey, GuideConfig, LegConfig, ManualConfig, Node, ObjectConfig, Owner, RobotConfig, ScenarioConfig,
    ScriptedIntrusion, SegmentConfig, TaskConfig,
};
pub use state::{Button, ButtonEffect, ButtonEvent, Edge, Mode, Phase, SessionState};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::monitor::MonitorError;
use crate::simcell::{SimError, StreamError};
use crate::zones::ZoneError;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("config: {0}")]
    Config(String),
    #[error("script: {0}")]
    Script(String),
    #[error("circular dependency through {0}")]
    CircularDependency(String),
    #[error("safety invariant violated at t={time:.3}s: {what}")]
    Invariant { time: f64, what: String },
    #[error("run did not finish within {0} s")]
    Timeout(f64),
    #[error("recording: {0}")]
    Recording(String),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Zone(#[from] ZoneError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
