//! Camera models and coordinate transforms.
//!
//! The world frame is the robot base frame. A [`CameraModel`] stores the
//! camera pose in that frame (camera-to-world), so a world point `P` maps to
//! camera coordinates as `Rᵀ (P − t)` and back as `R p + t`.

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal (max |RᵀR - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation has determinant {0}, expected +1")]
    NotProperRotation(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("point is behind the camera (camera-frame depth {0})")]
    BehindCamera(f64),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("invalid synthetic camera spec: {0}")]
    InvalidSpec(String),
    #[error("pixel ray does not reach the plane z = {0}")]
    RayMissesPlane(f64),
    #[error("camera config: {0}")]
    Config(String),
}

/// A proper rigid motion `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let deviation = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if deviation > ROTATION_TOLERANCE {
            return Err(GeometryError::NotOrthonormal(deviation));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::NotProperRotation(det));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about `axis` through the origin.
    pub fn from_axis_angle(axis: &Unit<Vector3<f64>>, angle: f64) -> Self {
        Self {
            rotation: Rotation3::from_axis_angle(axis, angle).into_inner(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation-only part of the motion, for direction vectors.
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Row-major rotation entries followed by the translation.
    pub fn to_array(&self) -> ([f64; 9], [f64; 3]) {
        let r = &self.rotation;
        (
            [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            [self.translation.x, self.translation.y, self.translation.z],
        )
    }

    pub fn from_array(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self, GeometryError> {
        Self::new(
            Matrix3::from_row_slice(rotation),
            Vector3::from_column_slice(translation),
        )
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Serialized form of a [`RigidTransform`]: row-major rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseConfig {
    #[serde(default = "identity_rows")]
    pub rotation: [f64; 9],
    #[serde(default)]
    pub translation: [f64; 3],
}

fn identity_rows() -> [f64; 9] {
    [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
}

impl PoseConfig {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: identity_rows(),
            translation: [x, y, z],
        }
    }

    pub fn to_transform(&self) -> Result<RigidTransform, GeometryError> {
        RigidTransform::from_array(&self.rotation, &self.translation)
    }
}

impl From<&RigidTransform> for PoseConfig {
    fn from(t: &RigidTransform) -> Self {
        let (rotation, translation) = t.to_array();
        Self { rotation, translation }
    }
}

/// Pin-hole intrinsics in pixels. Pixel centers sit at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|x| x.is_finite());
        if !finite {
            return Err(GeometryError::NonFinite);
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::InvalidIntrinsics("empty image".into()));
        }
        if !(0.0..f64::from(self.width)).contains(&self.cx) || !(0.0..f64::from(self.height)).contains(&self.cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Real-valued pixel position. `u` runs along image columns, `v` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Nearest pixel center, ties rounding up.
    pub fn rasterize(&self) -> (i64, i64) {
        ((self.u + 0.5).floor() as i64, (self.v + 0.5).floor() as i64)
    }

    pub fn in_bounds(&self, width: u32, height: u32) -> bool {
        let (u, v) = self.rasterize();
        u >= 0 && v >= 0 && u < i64::from(width) && v < i64::from(height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub intrinsics: CameraIntrinsics,
    /// Camera pose in the world frame (camera-to-world).
    pub extrinsics: RigidTransform,
}

impl CameraModel {
    pub fn new(intrinsics: CameraIntrinsics, extrinsics: RigidTransform) -> Result<Self, GeometryError> {
        intrinsics.validate()?;
        Ok(Self { intrinsics, extrinsics })
    }

    pub fn width(&self) -> u32 {
        self.intrinsics.width
    }

    pub fn height(&self) -> u32 {
        self.intrinsics.height
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsics.rotation().transpose() * (p - self.extrinsics.translation())
    }

    pub fn camera_center(&self) -> Vector3<f64> {
        *self.extrinsics.translation()
    }

    /// World-frame direction of the ray through `p`, scaled so its
    /// camera-frame z component is 1. A ray parameter along it therefore
    /// equals camera-frame depth.
    pub fn pixel_ray(&self, p: PixelCoord) -> Vector3<f64> {
        let k = &self.intrinsics;
        let dir_cam = Vector3::new((p.u - k.cx) / k.fx, (p.v - k.cy) / k.fy, 1.0);
        self.extrinsics.apply_vector(&dir_cam)
    }

    /// Projects a world point onto the image plane, returning the real-valued
    /// pixel and the camera-frame depth.
    pub fn project_world_to_model(&self, p: &Vector3<f64>) -> Result<(PixelCoord, f64), GeometryError> {
        if p.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let c = self.world_to_camera(p);
        if c.z <= 0.0 {
            return Err(GeometryError::BehindCamera(c.z));
        }
        let k = &self.intrinsics;
        Ok((PixelCoord::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy), c.z))
    }

    /// Inverse of [`project_world_to_model`](Self::project_world_to_model).
    pub fn backproject_model_to_world(&self, p: PixelCoord, depth: f64) -> Result<Vector3<f64>, GeometryError> {
        if !(p.u.is_finite() && p.v.is_finite() && depth.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if depth <= 0.0 {
            return Err(GeometryError::NonPositiveDepth(depth));
        }
        let k = &self.intrinsics;
        let c = Vector3::new((p.u - k.cx) / k.fx * depth, (p.v - k.cy) / k.fy * depth, depth);
        Ok(self.extrinsics.apply(&c))
    }

    /// Intersects the ray through `p` with the horizontal plane `z = plane_z`.
    pub fn backproject_to_plane(&self, p: PixelCoord, plane_z: f64) -> Result<Vector3<f64>, GeometryError> {
        let dir = self.pixel_ray(p);
        let origin = self.camera_center();
        if dir.z.abs() < f64::EPSILON {
            return Err(GeometryError::RayMissesPlane(plane_z));
        }
        let depth = (plane_z - origin.z) / dir.z;
        if depth <= 0.0 {
            return Err(GeometryError::RayMissesPlane(plane_z));
        }
        self.backproject_model_to_world(p, depth)
    }

    pub fn from_config_str(text: &str) -> Result<Self, GeometryError> {
        let file: CameraConfig = toml::from_str(text).map_err(|e| GeometryError::Config(e.message().to_string()))?;
        file.to_model()
    }

    pub fn to_config_string(&self) -> String {
        let cfg = CameraConfig::from(self);
        toml::to_string(&cfg).expect("camera config serializes")
    }
}

/// On-disk camera description: `fx, fy, cx, cy, width, height` plus a
/// row-major `rotation` (9 values) and a `translation` (3 values).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl CameraConfig {
    pub fn to_model(&self) -> Result<CameraModel, GeometryError> {
        CameraModel::new(
            CameraIntrinsics {
                fx: self.fx,
                fy: self.fy,
                cx: self.cx,
                cy: self.cy,
                width: self.width,
                height: self.height,
            },
            RigidTransform::from_array(&self.rotation, &self.translation)?,
        )
    }
}

impl From<&CameraModel> for CameraConfig {
    fn from(cam: &CameraModel) -> Self {
        let (rotation, translation) = cam.extrinsics.to_array();
        let k = cam.intrinsics;
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            rotation,
            translation,
        }
    }
}

/// Ceiling-mounted camera looking straight down at the workspace plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCameraSpec {
    /// Camera height above the workspace plane in meters.
    pub mount_height: f64,
    pub width: u32,
    pub height: u32,
    /// Horizontal field of view in radians.
    pub fov_x: f64,
    /// World (x, y) of the point directly below the camera.
    #[serde(default)]
    pub center: [f64; 2],
}

impl Default for SyntheticCameraSpec {
    /// 512×424 at 2 m with a 2 m wide footprint on the table.
    fn default() -> Self {
        Self {
            mount_height: 2.0,
            width: 512,
            height: 424,
            fov_x: 2.0 * 0.5f64.atan(),
            center: [0.0, 0.0],
        }
    }
}

/// Builds the overhead camera. Image columns follow world +x and image rows
/// follow world −y; the optical axis points along world −z.
pub fn make_synthetic_camera(spec: &SyntheticCameraSpec) -> Result<CameraModel, GeometryError> {
    if !(spec.mount_height.is_finite() && spec.mount_height > 0.0) {
        return Err(GeometryError::InvalidSpec(format!(
            "mount height must be positive, got {}",
            spec.mount_height
        )));
    }
    if !(spec.fov_x > 0.0 && spec.fov_x < std::f64::consts::PI) {
        return Err(GeometryError::InvalidSpec(format!(
            "field of view must lie in (0, π), got {}",
            spec.fov_x
        )));
    }
    if spec.width < 2 || spec.height < 2 {
        return Err(GeometryError::InvalidSpec("image must be at least 2x2".into()));
    }
    let w = f64::from(spec.width);
    let h = f64::from(spec.height);
    let f = 0.5 * w / (0.5 * spec.fov_x).tan();
    let intrinsics = CameraIntrinsics {
        fx: f,
        fy: f,
        cx: 0.5 * (w - 1.0),
        cy: 0.5 * (h - 1.0),
        width: spec.width,
        height: spec.height,
    };
    let looking_down = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let extrinsics = RigidTransform::new(
        looking_down,
        Vector3::new(spec.center[0], spec.center[1], spec.mount_height),
    )?;
    CameraModel::new(intrinsics, extrinsics)
}

/// Maps a robot-frame point into the head-mounted display frame by first
/// applying the robot→marker transform and then marker→display.
pub fn transform_to_holo_frame(
    p: &Vector3<f64>,
    marker_in_robot: &RigidTransform,
    holo_in_marker: &RigidTransform,
) -> Vector3<f64> {
    holo_in_marker.apply(&marker_in_robot.apply(p))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthImageError {
    #[error("depth buffer has {got} values, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("invalid depth {value} at ({u}, {v})")]
    InvalidDepth { u: u32, v: u32, value: f32 },
}

/// Row-major metric depth map. A value of 0 marks a pixel with no return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    depth: Vec<f32>,
    pub frame_index: u64,
}

impl DepthImage {
    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            depth: vec![value; width as usize * height as usize],
            frame_index: 0,
        }
    }

    pub fn from_vec(width: u32, height: u32, depth: Vec<f32>, frame_index: u64) -> Result<Self, DepthImageError> {
        let expected = width as usize * height as usize;
        if depth.len() != expected {
            return Err(DepthImageError::SizeMismatch {
                expected,
                got: depth.len(),
            });
        }
        if let Some(i) = depth.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(DepthImageError::InvalidDepth {
                u: (i % width as usize) as u32,
                v: (i / width as usize) as u32,
                value: depth[i],
            });
        }
        Ok(Self {
            width,
            height,
            depth,
            frame_index,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn same_shape(&self, other: &DepthImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.depth[v as usize * self.width as usize + u as usize]
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: f32) {
        let w = self.width as usize;
        self.depth[v as usize * w + u as usize] = value;
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.depth
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.depth
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn simple_camera() -> CameraModel {
        CameraModel::new(
            CameraIntrinsics {
                fx: 500.0,
                fy: 500.0,
                cx: 256.0,
                cy: 212.0,
                width: 512,
                height: 424,
            },
            RigidTransform::identity(),
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let (p, d) = simple_camera()
            .project_world_to_model(&Vector3::new(0.0, 0.0, 1.0))
            .unwrap();
        assert_eq!((p.u, p.v, d), (256.0, 212.0, 1.0));
    }

    #[test]
    fn lateral_offset_follows_focal_length() {
        // u = fx * X / Z + cx = 500 * 0.5 / 1 + 256
        let (p, d) = simple_camera()
            .project_world_to_model(&Vector3::new(0.5, 0.0, 1.0))
            .unwrap();
        assert_eq!((p.u, p.v, d), (506.0, 212.0, 1.0));
    }

    #[test]
    fn flipped_camera_sees_origin_at_its_height() {
        let x = Unit::new_normalize(Vector3::x());
        let flip = RigidTransform::from_axis_angle(&x, PI);
        let pose = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 2.0)).compose(&flip);
        let cam = CameraModel::new(simple_camera().intrinsics, pose).unwrap();
        let (_, depth) = cam.project_world_to_model(&Vector3::zeros()).unwrap();
        assert!((depth - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_points_behind_and_nan() {
        let cam = simple_camera();
        assert!(matches!(
            cam.project_world_to_model(&Vector3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::BehindCamera(_))
        ));
        assert_eq!(
            cam.project_world_to_model(&Vector3::new(f64::NAN, 0.0, 1.0)),
            Err(GeometryError::NonFinite)
        );
    }

    #[test]
    fn backprojection_inverts_examples() {
        let cam = simple_camera();
        let p = cam
            .backproject_model_to_world(PixelCoord::new(506.0, 212.0), 1.0)
            .unwrap();
        assert!((p - Vector3::new(0.5, 0.0, 1.0)).norm() < 1e-12);
        let axis = cam
            .backproject_model_to_world(PixelCoord::new(256.0, 212.0), 3.5)
            .unwrap();
        assert!((axis - Vector3::new(0.0, 0.0, 3.5)).norm() < 1e-12);
        assert!(matches!(
            cam.backproject_model_to_world(PixelCoord::new(1.0, 1.0), 0.0),
            Err(GeometryError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn holo_transform_examples() {
        let p = Vector3::new(0.3, -0.2, 0.9);
        let id = RigidTransform::identity();
        assert_eq!(transform_to_holo_frame(&p, &id, &id), p);
        let shift = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(
            transform_to_holo_frame(&Vector3::zeros(), &shift, &id),
            Vector3::new(1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn rejects_invalid_rotations() {
        let scaled = Matrix3::identity() * 1.01;
        assert!(matches!(
            RigidTransform::new(scaled, Vector3::zeros()),
            Err(GeometryError::NotOrthonormal(_))
        ));
        let mirror = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            RigidTransform::new(mirror, Vector3::zeros()),
            Err(GeometryError::NotProperRotation(_))
        ));
    }

    #[test]
    fn synthetic_camera_validation_and_determinism() {
        let spec = SyntheticCameraSpec::default();
        assert_eq!(
            make_synthetic_camera(&spec).unwrap(),
            make_synthetic_camera(&spec).unwrap()
        );
        let bad = SyntheticCameraSpec {
            mount_height: 0.0,
            ..spec
        };
        assert!(matches!(
            make_synthetic_camera(&bad),
            Err(GeometryError::InvalidSpec(_))
        ));
        let bad_fov = SyntheticCameraSpec { fov_x: PI, ..spec };
        assert!(make_synthetic_camera(&bad_fov).is_err());
    }

    #[test]
    fn synthetic_camera_covers_two_meters() {
        let cam = make_synthetic_camera(&SyntheticCameraSpec::default()).unwrap();
        let left = cam.backproject_to_plane(PixelCoord::new(-0.5, 211.5), 0.0).unwrap();
        let right = cam.backproject_to_plane(PixelCoord::new(511.5, 211.5), 0.0).unwrap();
        assert!(((right.x - left.x) - 2.0).abs() < 1e-9);
        // rows run along world -y
        let top = cam.backproject_to_plane(PixelCoord::new(255.5, 0.0), 0.0).unwrap();
        assert!(top.y > 0.0);
    }

    #[test]
    fn camera_config_round_trip() {
        let cam = make_synthetic_camera(&SyntheticCameraSpec::default()).unwrap();
        let text = cam.to_config_string();
        assert_eq!(CameraModel::from_config_str(&text).unwrap(), cam);
        assert!(CameraModel::from_config_str("fx = 1.0").is_err());
    }

    #[test]
    fn rasterize_rounds_half_up() {
        assert_eq!(PixelCoord::new(2.5, -0.5).rasterize(), (3, 0));
        assert_eq!(PixelCoord::new(2.49, 7.51).rasterize(), (2, 8));
    }
}
