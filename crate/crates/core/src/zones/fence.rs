use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Polygon2D, ZoneError, ZoneParams};
use crate::geometry::{CameraModel, PixelCoord};

/// Triangulated vertical wall standing on the workspace plane along a
/// boundary polygon. Coordinates are in the robot frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FenceMesh {
    pub triangles: Vec<[Vector3<f64>; 3]>,
}

impl FenceMesh {
    pub fn quad_count(&self) -> usize {
        self.triangles.len() / 2
    }
}

/// One quad (two triangles) per boundary edge, from the plane `z = 0` up to
/// the fence height. A closed polygon contributes its closing edge; a
/// two-vertex boundary becomes a single wall. Zero-length edges are dropped.
pub fn build_fence_mesh(boundary: &Polygon2D, params: &ZoneParams, cam: &CameraModel) -> Result<FenceMesh, ZoneError> {
    params.validate()?;
    let n = boundary.vertices.len();
    if n < 2 {
        return Err(ZoneError::DegenerateBoundary(n));
    }
    let base: Vec<Vector3<f64>> = boundary
        .vertices
        .iter()
        .map(|p| cam.backproject_to_plane(PixelCoord::new(p.x, p.y), 0.0))
        .collect::<Result<_, _>>()?;
    let lift = Vector3::new(0.0, 0.0, params.fence_height);
    let edges = if n == 2 { 1 } else { n };
    let mut triangles = Vec::with_capacity(2 * edges);
    for i in 0..edges {
        let (a, b) = (base[i], base[(i + 1) % n]);
        if boundary.vertices[i] == boundary.vertices[(i + 1) % n] {
            continue;
        }
        let (a_top, b_top) = (a + lift, b + lift);
        triangles.push([a, b, b_top]);
        triangles.push([a, b_top, a_top]);
    }
    if triangles.is_empty() {
        return Err(ZoneError::DegenerateBoundary(n));
    }
    Ok(FenceMesh { triangles })
}
