use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::RigidTransform;
use crate::zones::{ControlPointLabel, ControlPointSet};

/// Capsule between two points, radius in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapsuleGeometry {
    pub radius: f64,
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl CapsuleGeometry {
    pub fn transformed(&self, t: &RigidTransform) -> CapsuleGeometry {
        CapsuleGeometry {
            radius: self.radius,
            a: t.apply(&self.a),
            b: t.apply(&self.b),
        }
    }
}

/// One revolute joint followed by a rigid link. The capsule is expressed in
/// the frame after the joint rotation and before the link offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub axis: Unit<Vector3<f64>>,
    pub offset: RigidTransform,
    pub capsule: CapsuleGeometry,
    pub limits: (f64, f64),
}

impl Link {
    /// Standard DH link: `Rot_z(θ) · Trans_z(d) · Trans_x(a) · Rot_x(α)`, with
    /// a capsule from the joint origin to the link end.
    pub fn dh(d: f64, a: f64, alpha: f64, radius: f64) -> Link {
        let rot_x = RigidTransform::from_axis_angle(&Vector3::x_axis(), alpha);
        let offset = RigidTransform::from_translation(Vector3::new(a, 0.0, d)).compose(&rot_x);
        Link {
            axis: Vector3::z_axis(),
            offset,
            capsule: CapsuleGeometry {
                radius,
                a: Vector3::zeros(),
                b: Vector3::new(a, 0.0, d),
            },
            limits: (-2.0 * PI, 2.0 * PI),
        }
    }
}

/// Rigid tool on the last link frame: a capsule plus the tool center point.
#[derive(Debug, Clone, PartialEq)]
pub struct Tool {
    pub capsule: CapsuleGeometry,
    pub tcp: RigidTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    links: Vec<Link>,
    tool: Option<Tool>,
    base: RigidTransform,
}

/// Forward kinematics output, all in the robot frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FkResult {
    /// Base frame followed by the frame at the end of every link.
    pub frames: Vec<RigidTransform>,
    /// Link capsules, then the tool capsule if present.
    pub capsules: Vec<CapsuleGeometry>,
    /// Tool center point frame, or the last link frame without a tool.
    pub tool_frame: RigidTransform,
}

impl FkResult {
    /// Both endpoints of every capsule.
    pub fn control_points(&self) -> ControlPointSet {
        let pts = self.capsules.iter().flat_map(|c| [c.a, c.b]).collect();
        ControlPointSet::new(ControlPointLabel::Robot, pts).expect("chain has capsules")
    }
}

impl KinematicChain {
    pub fn new(links: Vec<Link>, tool: Option<Tool>) -> Result<Self, SimError> {
        if links.len() < 2 {
            return Err(SimError::InvalidChain(format!(
                "{} links, need at least 2",
                links.len()
            )));
        }
        let radii = links
            .iter()
            .map(|l| l.capsule.radius)
            .chain(tool.iter().map(|t| t.capsule.radius));
        for r in radii {
            if !(r > 0.0 && r.is_finite()) {
                return Err(SimError::InvalidChain(format!("capsule radius {r}")));
            }
        }
        if let Some(l) = links
            .iter()
            .find(|l| l.limits.0.is_nan() || l.limits.1.is_nan() || l.limits.0 > l.limits.1)
        {
            return Err(SimError::InvalidChain(format!("joint limits {:?}", l.limits)));
        }
        Ok(Self {
            links,
            tool,
            base: RigidTransform::identity(),
        })
    }

    /// UR5 geometry with a parallel gripper: 12 cm gripper body, TCP 15 cm
    /// past the flange.
    pub fn ur5() -> Self {
        let d = [0.089159, 0.0, 0.0, 0.10915, 0.09465, 0.0823];
        let a = [0.0, -0.425, -0.39225, 0.0, 0.0, 0.0];
        let alpha = [FRAC_PI_2, 0.0, 0.0, FRAC_PI_2, -FRAC_PI_2, 0.0];
        let radius = [0.075, 0.06, 0.05, 0.045, 0.045, 0.045];
        let links = (0..6).map(|i| Link::dh(d[i], a[i], alpha[i], radius[i])).collect();
        let tool = Tool {
            capsule: CapsuleGeometry {
                radius: 0.04,
                a: Vector3::zeros(),
                b: Vector3::new(0.0, 0.0, 0.12),
            },
            tcp: RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.15)),
        };
        Self::new(links, Some(tool)).expect("valid UR5 chain")
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn tool(&self) -> Option<&Tool> {
        self.tool.as_ref()
    }

    pub fn check_limits(&self, q: &[f64]) -> Result<(), SimError> {
        if q.len() != self.links.len() {
            return Err(SimError::JointCount {
                expected: self.links.len(),
                got: q.len(),
            });
        }
        for (i, (l, &qi)) in self.links.iter().zip(q).enumerate() {
            if !(qi >= l.limits.0 && qi <= l.limits.1) {
                return Err(SimError::JointLimit { joint: i, value: qi });
            }
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<FkResult, SimError> {
        self.check_limits(q)?;
        let mut frame = self.base;
        let mut frames = vec![frame];
        let mut capsules = Vec::with_capacity(self.links.len() + 1);
        for (link, &qi) in self.links.iter().zip(q) {
            let jointed = frame.compose(&RigidTransform::from_axis_angle(&link.axis, qi));
            capsules.push(link.capsule.transformed(&jointed));
            frame = jointed.compose(&link.offset);
            frames.push(frame);
        }
        let tool_frame = match &self.tool {
            Some(tool) => {
                capsules.push(tool.capsule.transformed(&frame));
                frame.compose(&tool.tcp)
            }
            None => frame,
        };
        Ok(FkResult {
            frames,
            capsules,
            tool_frame,
        })
    }
}
