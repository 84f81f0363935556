use nalgebra::Vector3;

use super::kinematics::{FkResult, KinematicChain};
use super::scene::{PrimitiveTag, ScenePrimitive, Shape};
use super::trajectory::{IntrusionScript, Trajectory};
use super::SimError;
use crate::geometry::RigidTransform;
use crate::zones::{ControlPointLabel, ControlPointSet};

/// Joint deviation tolerated between the robot and a new trajectory's start.
const TRAJECTORY_START_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CellObject {
    pub name: String,
    pub shape: Shape,
    pub pose: RigidTransform,
    /// Tool-to-object transform while grasped.
    grasp: Option<RigidTransform>,
}

impl CellObject {
    pub fn is_grasped(&self) -> bool {
        self.grasp.is_some()
    }

    pub fn primitive(&self) -> ScenePrimitive {
        let tag = if self.is_grasped() {
            PrimitiveTag::CarriedObject
        } else {
            PrimitiveTag::Static
        };
        ScenePrimitive {
            shape: self.shape,
            pose: self.pose,
            tag,
        }
    }

    pub fn control_points(&self) -> ControlPointSet {
        match self.shape {
            Shape::Box { half_extents } => ControlPointSet::from_box(&self.pose, &Vector3::from(half_extents)),
            _ => ControlPointSet::new(ControlPointLabel::Object, self.primitive().bounding_corners())
                .expect("corners are finite"),
        }
    }
}

#[derive(Debug, Clone)]
struct Motion {
    trajectory: Trajectory,
    progress: f64,
}

/// Robot, objects and intrusions on one clock.
#[derive(Debug, Clone)]
pub struct SimCell {
    chain: KinematicChain,
    q: Vec<f64>,
    fk: FkResult,
    motion: Option<Motion>,
    objects: Vec<CellObject>,
    intrusions: IntrusionScript,
    time: f64,
}

impl SimCell {
    pub fn new(chain: KinematicChain, q: Vec<f64>) -> Result<Self, SimError> {
        let fk = chain.forward_kinematics(&q)?;
        Ok(Self {
            chain,
            q,
            fk,
            motion: None,
            objects: Vec::new(),
            intrusions: IntrusionScript::default(),
            time: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn fk(&self) -> &FkResult {
        &self.fk
    }

    pub fn tool_frame(&self) -> &RigidTransform {
        &self.fk.tool_frame
    }

    pub fn objects(&self) -> &[CellObject] {
        &self.objects
    }

    pub fn object(&self, name: &str) -> Option<&CellObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    fn object_mut(&mut self, name: &str) -> Result<&mut CellObject, SimError> {
        self.objects
            .iter_mut()
            .find(|o| o.name == name)
            .ok_or_else(|| SimError::UnknownObject(name.to_string()))
    }

    pub fn add_object(&mut self, name: &str, shape: Shape, pose: RigidTransform) -> Result<(), SimError> {
        if self.object(name).is_some() {
            return Err(SimError::ObjectState(format!("object {name:?} already exists")));
        }
        ScenePrimitive::new(shape, pose, PrimitiveTag::Static)?;
        self.objects.push(CellObject {
            name: name.to_string(),
            shape,
            pose,
            grasp: None,
        });
        Ok(())
    }

    pub fn remove_object(&mut self, name: &str) -> Result<CellObject, SimError> {
        let i = self
            .objects
            .iter()
            .position(|o| o.name == name)
            .ok_or_else(|| SimError::UnknownObject(name.to_string()))?;
        Ok(self.objects.remove(i))
    }

    pub fn intrusions(&self) -> &IntrusionScript {
        &self.intrusions
    }

    pub fn intrusions_mut(&mut self) -> &mut IntrusionScript {
        &mut self.intrusions
    }

    /// Starts `trajectory` from its first waypoint, which must match the
    /// current joint angles.
    pub fn set_trajectory(&mut self, trajectory: Trajectory) -> Result<(), SimError> {
        for w in trajectory.waypoints() {
            self.chain.check_limits(&w.q)?;
        }
        let start = &trajectory.waypoints()[0].q;
        let jump = start
            .iter()
            .zip(&self.q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if jump > TRAJECTORY_START_TOLERANCE {
            return Err(SimError::InvalidTrajectory(format!(
                "starts {jump} rad away from the robot"
            )));
        }
        self.motion = Some(Motion {
            trajectory,
            progress: 0.0,
        });
        Ok(())
    }

    /// Drops the current trajectory; the robot stays where it is.
    pub fn clear_trajectory(&mut self) {
        self.motion = None;
    }

    /// True when no trajectory is left to execute.
    pub fn motion_done(&self) -> bool {
        self.motion
            .as_ref()
            .is_none_or(|m| m.progress >= m.trajectory.duration())
    }

    pub fn motion_remaining(&self) -> f64 {
        self.motion
            .as_ref()
            .map_or(0.0, |m| (m.trajectory.duration() - m.progress).max(0.0))
    }

    /// Advances the clock by `dt`. The robot follows its trajectory only
    /// when `robot_enabled`. Returns whether the joints moved.
    pub fn step(&mut self, dt: f64, robot_enabled: bool) -> Result<bool, SimError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SimError::InvalidStep(dt));
        }
        self.time += dt;
        let mut moved = false;
        if robot_enabled {
            if let Some(m) = &mut self.motion {
                if m.progress < m.trajectory.duration() {
                    m.progress = (m.progress + dt).min(m.trajectory.duration());
                    let q = m.trajectory.sample(m.progress);
                    moved = q != self.q;
                    self.fk = self.chain.forward_kinematics(&q)?;
                    self.q = q;
                }
            }
        }
        if moved {
            let tool = self.fk.tool_frame;
            for o in &mut self.objects {
                if let Some(offset) = o.grasp {
                    o.pose = tool.compose(&offset);
                }
            }
        }
        Ok(moved)
    }

    /// Attaches a resting object to the tool at its current relative pose.
    pub fn grasp(&mut self, name: &str) -> Result<(), SimError> {
        let tool = self.fk.tool_frame;
        let o = self.object_mut(name)?;
        if o.grasp.is_some() {
            return Err(SimError::ObjectState(format!("{name:?} is already grasped")));
        }
        o.grasp = Some(tool.inverse().compose(&o.pose));
        Ok(())
    }

    /// Leaves a grasped object where it is.
    pub fn release(&mut self, name: &str) -> Result<(), SimError> {
        let o = self.object_mut(name)?;
        if o.grasp.take().is_none() {
            return Err(SimError::ObjectState(format!("{name:?} is not grasped")));
        }
        Ok(())
    }

    pub fn robot_control_points(&self) -> ControlPointSet {
        self.fk.control_points()
    }

    pub fn carried_control_points(&self) -> Vec<ControlPointSet> {
        self.objects
            .iter()
            .filter(|o| o.is_grasped())
            .map(CellObject::control_points)
            .collect()
    }

    pub fn robot_primitives(&self) -> impl Iterator<Item = ScenePrimitive> + '_ {
        self.fk
            .capsules
            .iter()
            .map(|c| ScenePrimitive::from_capsule(c, PrimitiveTag::RobotLink).expect("chain radii are positive"))
    }

    /// Everything the sensor sees at the current time.
    pub fn primitives(&self) -> Vec<ScenePrimitive> {
        let mut out: Vec<ScenePrimitive> = self.robot_primitives().collect();
        out.extend(self.objects.iter().map(CellObject::primitive));
        out.extend(self.intrusions.primitives_at(self.time));
        out
    }
}
