use nalgebra::{Point2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::scene::{FixedOriginHit, ScenePrimitive};
use crate::geometry::{CameraModel, DepthImage, PixelCoord};
use crate::zones::convex_hull;

/// Z-buffer depth renderer over the table plane `z = 0`.
#[derive(Debug, Clone)]
pub struct DepthRenderer {
    cam: CameraModel,
    origin: Vector3<f64>,
    rays: Vec<Vector3<f64>>,
    background: Vec<f32>,
}

impl DepthRenderer {
    pub fn new(cam: &CameraModel) -> Self {
        let (w, h) = (cam.width(), cam.height());
        let origin = cam.camera_center();
        let mut rays = Vec::with_capacity(w as usize * h as usize);
        let mut background = Vec::with_capacity(rays.capacity());
        for v in 0..h {
            for u in 0..w {
                let dir = cam.pixel_ray(PixelCoord::new(f64::from(u), f64::from(v)));
                let t = if dir.z < 0.0 { -origin.z / dir.z } else { 0.0 };
                background.push(if t > 0.0 { t as f32 } else { 0.0 });
                rays.push(dir);
            }
        }
        Self {
            cam: *cam,
            origin,
            rays,
            background,
        }
    }

    pub fn camera(&self) -> &CameraModel {
        &self.cam
    }

    /// The empty table.
    pub fn background(&self) -> DepthImage {
        DepthImage::from_vec(self.cam.width(), self.cam.height(), self.background.clone(), 0)
            .expect("background depths are valid")
    }

    /// Per-row pixel spans `(v, u0, u1)` that can see `prim`: the convex
    /// hull of its projected bounding points, widened by one pixel.
    fn footprint(&self, prim: &ScenePrimitive) -> Vec<(u32, u32, u32)> {
        let (w, h) = (i64::from(self.cam.width()), i64::from(self.cam.height()));
        let mut projected = Vec::new();
        for corner in prim.footprint_points() {
            match self.cam.project_world_to_model(&corner) {
                Ok((p, _)) => projected.push(Point2::new(p.u, p.v)),
                Err(_) => return (0..h as u32).map(|v| (v, 0, w as u32 - 1)).collect(),
            }
        }
        let Ok(hull) = convex_hull(&projected) else {
            return Vec::new();
        };
        let vs = &hull.vertices;
        let ymin = vs.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let ymax = vs.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let v0 = (ymin.floor() as i64 - 1).max(0);
        let v1 = (ymax.ceil() as i64 + 1).min(h - 1);
        let mut spans = Vec::new();
        for v in v0..=v1 {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            // The hull widened by one pixel in every direction covers the
            // row band [v - 1, v + 1].
            let (ya, yb) = (v as f64 - 1.0, v as f64 + 1.0);
            let n = vs.len();
            for i in 0..n {
                let (a, b) = (vs[i], vs[(i + 1) % n]);
                if a.y >= ya && a.y <= yb {
                    lo = lo.min(a.x);
                    hi = hi.max(a.x);
                }
                for y in [ya, yb] {
                    if (a.y < y && b.y > y) || (a.y > y && b.y < y) {
                        let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                        lo = lo.min(x);
                        hi = hi.max(x);
                    }
                }
            }
            if lo > hi {
                continue;
            }
            let u0 = (lo.floor() as i64 - 1).max(0);
            let u1 = (hi.ceil() as i64 + 1).min(w - 1);
            if u0 <= u1 {
                spans.push((v as u32, u0 as u32, u1 as u32));
            }
        }
        spans
    }

    /// Draws `prim` into `image`, keeping the nearer depth per pixel.
    pub fn draw(&self, image: &mut DepthImage, prim: &ScenePrimitive) {
        let w = self.cam.width() as usize;
        let hit = FixedOriginHit::new(prim, &self.origin);
        let depth = image.as_mut_slice();
        for (v, u0, u1) in self.footprint(prim) {
            let row = v as usize * w;
            let span = row + u0 as usize..=row + u1 as usize;
            for (d, ray) in depth[span.clone()].iter_mut().zip(&self.rays[span]) {
                if let Some(t) = hit.intersect(ray) {
                    let t = t as f32;
                    if *d == 0.0 || t < *d {
                        *d = t;
                    }
                }
            }
        }
    }

    pub fn render(&self, scene: &[ScenePrimitive]) -> DepthImage {
        let mut image = self.background();
        for prim in scene {
            self.draw(&mut image, prim);
        }
        image
    }

    /// Draws `scene` over a copy of `base`, typically a cached render of
    /// the parts of the scene that do not move.
    pub fn render_over(&self, base: &DepthImage, scene: &[ScenePrimitive]) -> DepthImage {
        let mut image = base.clone();
        for prim in scene {
            self.draw(&mut image, prim);
        }
        image
    }
}

/// Adds zero-mean Gaussian noise of standard deviation `sigma` meters to
/// every pixel that has a return.
pub fn add_depth_noise<R: Rng + ?Sized>(image: &mut DepthImage, sigma: f64, rng: &mut R) {
    let Ok(normal) = Normal::new(0.0, sigma) else { return };
    for d in image.as_mut_slice().iter_mut().filter(|d| **d > 0.0) {
        *d = (f64::from(*d) + normal.sample(rng)).max(f64::from(f32::MIN_POSITIVE)) as f32;
    }
}

/// Renders `scene` over the table plane as seen by `cam`.
pub fn render_depth(scene: &[ScenePrimitive], cam: &CameraModel) -> DepthImage {
    DepthRenderer::new(cam).render(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_synthetic_camera, RigidTransform, SyntheticCameraSpec};
    use crate::simcell::{PrimitiveTag, Shape};

    fn cam() -> CameraModel {
        make_synthetic_camera(&SyntheticCameraSpec {
            width: 64,
            height: 48,
            ..SyntheticCameraSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn empty_scene_is_table_depth() {
        let img = render_depth(&[], &cam());
        assert!(img.as_slice().iter().all(|d| (d - 2.0).abs() < 1e-6));
    }

    #[test]
    fn sphere_on_axis() {
        let (h, r) = (0.4, 0.1);
        // with an even width the optical axis falls between pixels, so use
        // an odd-sized image
        let cam = make_synthetic_camera(&SyntheticCameraSpec {
            width: 65,
            height: 49,
            ..SyntheticCameraSpec::default()
        })
        .unwrap();
        let s = ScenePrimitive::new(
            Shape::Sphere { radius: r },
            RigidTransform::from_translation(Vector3::new(0.0, 0.0, h)),
            PrimitiveTag::Static,
        )
        .unwrap();
        let img = render_depth(&[s], &cam);
        assert!((f64::from(img.get(32, 24)) - (2.0 - h - r)).abs() < 1e-6);
    }
}
