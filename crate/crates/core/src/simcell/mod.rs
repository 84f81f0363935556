//! Simulated cell: a serial robot arm, carried and static objects, scripted
//! operator intrusions and a depth renderer standing in for the ceiling
//! sensor.

mod cell;
mod config;
mod kinematics;
mod render;
mod scene;
pub mod stream;
mod trajectory;

pub use cell::{CellObject, SimCell};
pub use config::{IntrusionConfig, PoseKeyConfig, PrimitiveConfig, Scene, SceneConfig, TrajectoryConfig};
pub use kinematics::{CapsuleGeometry, FkResult, KinematicChain, Link, Tool};
pub use render::{add_depth_noise, render_depth, DepthRenderer};
pub use scene::{PrimitiveTag, Ray, ScenePrimitive, Shape};
pub use stream::{DepthStreamReader, DepthStreamWriter, StreamError};
pub use trajectory::{
    forearm_pose, IntrusionEvent, IntrusionScript, PoseKey, Trajectory, Waypoint, FOREARM_LENGTH, FOREARM_RADIUS,
};

use thiserror::Error;

/// Simulated sensor rate.
pub const DEFAULT_FRAME_RATE: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid kinematic chain: {0}")]
    InvalidChain(String),
    #[error("expected {expected} joint angles, got {got}")]
    JointCount { expected: usize, got: usize },
    #[error("joint {joint} angle {value} outside its limits")]
    JointLimit { joint: usize, value: f64 },
    #[error("invalid primitive: {0}")]
    InvalidPrimitive(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid intrusion: {0}")]
    InvalidIntrusion(String),
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("unknown object {0:?}")]
    UnknownObject(String),
    #[error("{0}")]
    ObjectState(String),
    #[error("scene config: {0}")]
    Config(String),
}
