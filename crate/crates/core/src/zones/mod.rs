//! The three-zone partition of the workspace image.
//!
//! Control points are projected into the image, grown into disks, hulled and
//! filled to form the robot mask. Growing the same points by an extra margin
//! and removing the robot mask yields the danger zone; everything else is the
//! human zone. Carried objects get their own hull and are merged into both.

mod fence;
mod hull;
mod mask;

pub use fence::{build_fence_mesh, FenceMesh};
pub use hull::{
    convex_hull, disk_samples, hull_of_disks, rasterize_hull_of_disks, Polygon2D, DISK_SAMPLES, ON_EDGE_TOLERANCE,
};
pub use mask::{BinaryMask, MaskError};

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraModel, GeometryError, RigidTransform};

#[derive(Debug, Error)]
pub enum ZoneError {
    #[error("convex hull of an empty point set")]
    EmptyPointSet,
    #[error("non-finite point coordinate")]
    NonFinite,
    #[error("invalid zone parameters: {0}")]
    InvalidParams(String),
    #[error("control point set is empty")]
    EmptyControlPoints,
    #[error("every control point is behind the camera")]
    AllBehindCamera,
    #[error("danger zone is empty")]
    EmptyDangerZone,
    #[error("fence boundary needs at least 2 distinct vertices, got {0}")]
    DegenerateBoundary(usize),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlPointLabel {
    Robot,
    Object,
}

/// Robot-frame points whose projections seed a zone hull.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPointSet {
    label: ControlPointLabel,
    points: Vec<Vector3<f64>>,
}

impl ControlPointSet {
    pub fn new(label: ControlPointLabel, points: Vec<Vector3<f64>>) -> Result<Self, ZoneError> {
        if points.is_empty() {
            return Err(ZoneError::EmptyControlPoints);
        }
        if points.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(ZoneError::NonFinite);
        }
        Ok(Self { label, points })
    }

    /// The 8 corners of an oriented box with the given half extents.
    pub fn from_box(pose: &RigidTransform, half_extents: &Vector3<f64>) -> Self {
        let mut points = Vec::with_capacity(8);
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    let local = Vector3::new(sx * half_extents.x, sy * half_extents.y, sz * half_extents.z);
                    points.push(pose.apply(&local));
                }
            }
        }
        Self {
            label: ControlPointLabel::Object,
            points,
        }
    }

    pub fn label(&self) -> ControlPointLabel {
        self.label
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }
}

/// Zone radii in workspace-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneParams {
    /// Radius of the region grown around each projected control point.
    pub omega: f64,
    /// Extra margin that generates the danger zone.
    pub delta_omega: f64,
    /// Height of the extruded fence in meters.
    pub fence_height: f64,
}

impl Default for ZoneParams {
    /// At 512×424 over a 2 m wide table a pixel is about 3.9 mm, so these are
    /// roughly 8 cm and 6 cm.
    fn default() -> Self {
        Self {
            omega: 20.0,
            delta_omega: 15.0,
            fence_height: 1.0,
        }
    }
}

impl ZoneParams {
    pub fn validate(&self) -> Result<(), ZoneError> {
        let ok = self.omega.is_finite()
            && self.omega >= 1.0
            && self.delta_omega.is_finite()
            && self.delta_omega >= 0.0
            && self.fence_height.is_finite()
            && self.fence_height > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ZoneError::InvalidParams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    Robot,
    Danger,
    Human,
}

/// Disjoint robot / danger / human masks covering the whole frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonePartition {
    robot: BinaryMask,
    danger: BinaryMask,
    human: BinaryMask,
}

impl ZonePartition {
    /// Builds the partition from a robot mask and its margin-grown version;
    /// `outer` is clipped to include `robot`.
    pub fn from_masks(robot: BinaryMask, outer: &BinaryMask) -> Result<Self, ZoneError> {
        let danger = outer.and_not(&robot)?;
        let human = robot.or(&danger)?.not();
        Ok(Self { robot, danger, human })
    }

    pub fn robot(&self) -> &BinaryMask {
        &self.robot
    }

    pub fn danger(&self) -> &BinaryMask {
        &self.danger
    }

    pub fn human(&self) -> &BinaryMask {
        &self.human
    }

    pub fn width(&self) -> u32 {
        self.robot.width()
    }

    pub fn height(&self) -> u32 {
        self.robot.height()
    }

    pub fn zone_at(&self, u: u32, v: u32) -> Zone {
        if self.robot.get(u, v) {
            Zone::Robot
        } else if self.danger.get(u, v) {
            Zone::Danger
        } else {
            Zone::Human
        }
    }

    pub fn zone_at_index(&self, i: usize) -> Zone {
        if self.robot.get_index(i) {
            Zone::Robot
        } else if self.danger.get_index(i) {
            Zone::Danger
        } else {
            Zone::Human
        }
    }

    /// Pairwise disjoint and jointly complete.
    pub fn is_valid_partition(&self) -> bool {
        let shapes = self.robot.same_shape(&self.danger) && self.robot.same_shape(&self.human);
        shapes
            && !self.robot.intersects(&self.danger)
            && !self.robot.intersects(&self.human)
            && !self.danger.intersects(&self.human)
            && self
                .robot
                .or(&self.danger)
                .and_then(|m| m.or(&self.human))
                .map(|m| m.is_full())
                .unwrap_or(false)
    }

    /// `Z_r ∪ Z_d`.
    pub fn robot_or_danger(&self) -> BinaryMask {
        self.robot.or(&self.danger).expect("partition masks share a shape")
    }
}

/// Projects control points and rounds them to pixel centers. Points behind
/// the camera are skipped.
pub fn project_control_points(set: &ControlPointSet, cam: &CameraModel) -> Vec<Point2<f64>> {
    set.points
        .iter()
        .filter_map(|p| cam.project_world_to_model(p).ok())
        .map(|(px, _)| {
            let (u, v) = px.rasterize();
            Point2::new(u as f64, v as f64)
        })
        .collect()
}

fn union_of_hulls(groups: &[Vec<Point2<f64>>], radius: f64, width: u32, height: u32) -> Result<BinaryMask, ZoneError> {
    let mut mask = BinaryMask::new(width, height);
    for centers in groups.iter().filter(|g| !g.is_empty()) {
        hull_of_disks(centers, radius)?.rasterize_into(&mut mask);
    }
    Ok(mask)
}

/// Robot zone = robot hull ∪ object hulls at `omega`; danger zone = the same
/// hulls at `omega + delta_omega` minus the robot zone; human zone = the rest.
pub fn build_zones(
    robot: &ControlPointSet,
    objects: &[ControlPointSet],
    params: &ZoneParams,
    cam: &CameraModel,
) -> Result<ZonePartition, ZoneError> {
    params.validate()?;
    let groups: Vec<Vec<Point2<f64>>> = std::iter::once(robot)
        .chain(objects)
        .map(|set| project_control_points(set, cam))
        .collect();
    if groups.iter().all(Vec::is_empty) {
        return Err(ZoneError::AllBehindCamera);
    }
    let (w, h) = (cam.width(), cam.height());
    let robot_zone = union_of_hulls(&groups, params.omega, w, h)?;
    let outer = if params.delta_omega > 0.0 {
        let mut m = union_of_hulls(&groups, params.omega + params.delta_omega, w, h)?;
        m.or_assign(&robot_zone)?;
        m
    } else {
        robot_zone.clone()
    };
    ZonePartition::from_masks(robot_zone, &outer)
}

/// Outer boundary of `Z_r ∪ Z_d` as a convex counter-clockwise polygon whose
/// vertices are pixel centers on the edge of that region.
pub fn danger_boundary(partition: &ZonePartition) -> Result<Polygon2D, ZoneError> {
    if partition.danger().is_empty() {
        return Err(ZoneError::EmptyDangerZone);
    }
    mask_outline(&partition.robot_or_danger()).ok_or(ZoneError::EmptyDangerZone)
}

/// Convex outline through the leftmost and rightmost set pixel of every
/// row, or `None` for an empty mask.
pub fn mask_outline(mask: &BinaryMask) -> Option<Polygon2D> {
    let (w, h) = (mask.width(), mask.height());
    let mut extremes = Vec::new();
    for v in 0..h {
        let mut first = None;
        let mut last = None;
        for u in (0..w).filter(|&u| mask.get(u, v)) {
            first.get_or_insert(u);
            last = Some(u);
        }
        if let (Some(a), Some(b)) = (first, last) {
            extremes.push(Point2::new(f64::from(a), f64::from(v)));
            if b != a {
                extremes.push(Point2::new(f64::from(b), f64::from(v)));
            }
        }
    }
    convex_hull(&extremes).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_synthetic_camera, SyntheticCameraSpec};

    fn cam64() -> CameraModel {
        make_synthetic_camera(&SyntheticCameraSpec {
            mount_height: 2.0,
            width: 64,
            height: 64,
            fov_x: 1.0,
            center: [0.0, 0.0],
        })
        .unwrap()
    }

    fn robot_at(points: &[[f64; 3]]) -> ControlPointSet {
        ControlPointSet::new(
            ControlPointLabel::Robot,
            points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_margin_has_empty_danger_zone() {
        let params = ZoneParams {
            omega: 5.0,
            delta_omega: 0.0,
            fence_height: 1.0,
        };
        let z = build_zones(&robot_at(&[[0.0, 0.0, 0.5]]), &[], &params, &cam64()).unwrap();
        assert!(z.danger().is_empty());
        assert_eq!(*z.human(), z.robot().not());
        assert!(z.is_valid_partition());
    }

    #[test]
    fn single_point_gives_disk_and_annulus() {
        let params = ZoneParams {
            omega: 6.0,
            delta_omega: 4.0,
            fence_height: 1.0,
        };
        let cam = cam64();
        let robot = robot_at(&[[0.1, -0.05, 0.3]]);
        let z = build_zones(&robot, &[], &params, &cam).unwrap();
        let c = project_control_points(&robot, &cam)[0];
        let sample_scale = 1.0 / (std::f64::consts::PI / DISK_SAMPLES as f64).cos();
        for (u, v) in z.danger().iter_ones() {
            let d = (Point2::new(f64::from(u), f64::from(v)) - c).norm();
            assert!(d > 6.0 && d <= 10.0 * sample_scale + 1e-9, "danger pixel at {d}");
        }
        for (u, v) in z.robot().iter_ones() {
            let d = (Point2::new(f64::from(u), f64::from(v)) - c).norm();
            assert!(d <= 6.0 * sample_scale + 1e-9);
        }
        assert!(z.is_valid_partition());
    }

    #[test]
    fn object_outside_hull_grows_robot_zone() {
        let params = ZoneParams::default();
        let cam = make_synthetic_camera(&SyntheticCameraSpec::default()).unwrap();
        let robot = robot_at(&[[0.0, 0.0, 0.1], [0.2, 0.0, 0.4]]);
        let before = build_zones(&robot, &[], &params, &cam).unwrap();
        let obj = ControlPointSet::from_box(
            &RigidTransform::from_translation(Vector3::new(-0.5, 0.3, 0.1)),
            &Vector3::new(0.05, 0.05, 0.05),
        );
        let after = build_zones(&robot, &[obj], &params, &cam).unwrap();
        assert!(before.robot().is_subset_of(after.robot()));
        assert!(after.robot().count_ones() > before.robot().count_ones());
        assert!(after.is_valid_partition());
    }

    #[test]
    fn behind_camera_is_an_error() {
        let err = build_zones(&robot_at(&[[0.0, 0.0, 3.0]]), &[], &ZoneParams::default(), &cam64());
        assert!(matches!(err, Err(ZoneError::AllBehindCamera)));
    }

    #[test]
    fn boundary_of_single_disk_is_circle_like() {
        let cam = make_synthetic_camera(&SyntheticCameraSpec::default()).unwrap();
        let params = ZoneParams::default();
        let robot = robot_at(&[[0.0, 0.0, 0.0]]);
        let z = build_zones(&robot, &[], &params, &cam).unwrap();
        let c = project_control_points(&robot, &cam)[0];
        let boundary = danger_boundary(&z).unwrap();
        let r = params.omega + params.delta_omega;
        assert!(boundary.is_convex() && boundary.signed_area2() > 0.0);
        for p in &boundary.vertices {
            let d = (p - c).norm();
            assert!((d - r).abs() <= 1.0, "vertex at radius {d}");
            assert!(z.danger().get(p.x as u32, p.y as u32));
        }
    }

    #[test]
    fn boundary_requires_danger_zone() {
        let params = ZoneParams {
            delta_omega: 0.0,
            ..ZoneParams::default()
        };
        let z = build_zones(&robot_at(&[[0.0, 0.0, 0.5]]), &[], &params, &cam64()).unwrap();
        assert!(matches!(danger_boundary(&z), Err(ZoneError::EmptyDangerZone)));
    }
}
