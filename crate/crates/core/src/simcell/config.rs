use serde::{Deserialize, Serialize};

use super::scene::{PrimitiveTag, ScenePrimitive, Shape};
use super::trajectory::{IntrusionEvent, IntrusionScript, PoseKey, Trajectory, Waypoint};
use super::SimError;
use crate::geometry::PoseConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveConfig {
    #[serde(default)]
    pub name: String,
    pub shape: Shape,
    pub pose: PoseConfig,
    #[serde(default = "static_tag")]
    pub tag: PrimitiveTag,
}

fn static_tag() -> PrimitiveTag {
    PrimitiveTag::Static
}

impl PrimitiveConfig {
    pub fn build(&self) -> Result<ScenePrimitive, SimError> {
        let pose = self.pose.to_transform().map_err(|e| SimError::Config(e.to_string()))?;
        ScenePrimitive::new(self.shape, pose, self.tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub name: String,
    pub waypoints: Vec<Waypoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseKeyConfig {
    pub t: f64,
    pub pose: PoseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrusionConfig {
    pub start: f64,
    pub shape: Shape,
    pub path: Vec<PoseKeyConfig>,
}

impl IntrusionConfig {
    pub fn build(&self) -> Result<IntrusionEvent, SimError> {
        let path = self
            .path
            .iter()
            .map(|k| {
                Ok(PoseKey {
                    t: k.t,
                    pose: k.pose.to_transform().map_err(|e| SimError::Config(e.to_string()))?,
                })
            })
            .collect::<Result<_, SimError>>()?;
        IntrusionEvent::new(self.start, self.shape, path)
    }
}

/// Declarative scene: static primitives, named joint trajectories and
/// intrusion events.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default, rename = "primitive")]
    pub primitives: Vec<PrimitiveConfig>,
    #[serde(default, rename = "trajectory")]
    pub trajectories: Vec<TrajectoryConfig>,
    #[serde(default, rename = "intrusion")]
    pub intrusions: Vec<IntrusionConfig>,
}

/// A loaded [`SceneConfig`].
#[derive(Debug, Clone)]
pub struct Scene {
    pub primitives: Vec<(String, ScenePrimitive)>,
    pub trajectories: Vec<(String, Trajectory)>,
    pub intrusions: IntrusionScript,
}

impl SceneConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<Scene, SimError> {
        let primitives = self
            .primitives
            .iter()
            .map(|p| Ok((p.name.clone(), p.build()?)))
            .collect::<Result<_, SimError>>()?;
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| Ok((t.name.clone(), Trajectory::new(t.waypoints.clone())?)))
            .collect::<Result<_, SimError>>()?;
        let events = self
            .intrusions
            .iter()
            .map(IntrusionConfig::build)
            .collect::<Result<_, _>>()?;
        Ok(Scene {
            primitives,
            trajectories,
            intrusions: IntrusionScript::new(events),
        })
    }
}
