//! Convex hulls and convex polygon rasterization in pixel space.

use std::cmp::Ordering;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::mask::BinaryMask;
use super::ZoneError;

/// Tolerance, in pixels, for a point to count as lying on a polygon edge.
pub const ON_EDGE_TOLERANCE: f64 = 1e-9;

/// Boundary samples per disk when turning control points into regions.
pub const DISK_SAMPLES: usize = 16;

/// Ordered pixel-space polygon. Hulls are counter-clockwise in the (u, v)
/// axes and start at the vertex with the smallest v, then smallest u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon2D {
    pub vertices: Vec<Point2<f64>>,
}

#[inline]
fn cross(o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn lowest_then_leftmost(a: &Point2<f64>, b: &Point2<f64>) -> Ordering {
    a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x))
}

/// Monotone chain over points ordered by v, then u. Collinear boundary
/// points and duplicates are dropped; fully collinear input collapses to its
/// two extreme points.
pub fn convex_hull(points: &[Point2<f64>]) -> Result<Polygon2D, ZoneError> {
    if points.is_empty() {
        return Err(ZoneError::EmptyPointSet);
    }
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(ZoneError::NonFinite);
    }
    let mut pts = points.to_vec();
    pts.sort_by(lowest_then_leftmost);
    pts.dedup();
    if pts.len() == 1 {
        return Ok(Polygon2D { vertices: pts });
    }

    let chain = |ordered: &mut dyn Iterator<Item = &Point2<f64>>| {
        let mut stack: Vec<Point2<f64>> = Vec::new();
        for &p in ordered {
            while stack.len() >= 2 && cross(&stack[stack.len() - 2], &stack[stack.len() - 1], &p) <= 0.0 {
                stack.pop();
            }
            stack.push(p);
        }
        stack.pop();
        stack
    };
    // up the right side, then back down the left
    let mut vertices = chain(&mut pts.iter());
    vertices.extend(chain(&mut pts.iter().rev()));
    Ok(Polygon2D { vertices })
}

impl Polygon2D {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Twice the signed area; positive for counter-clockwise order.
    pub fn signed_area2(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a.x * b.y - b.x * a.y
            })
            .sum()
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return true;
        }
        (0..n).all(|i| {
            cross(
                &self.vertices[i],
                &self.vertices[(i + 1) % n],
                &self.vertices[(i + 2) % n],
            ) >= 0.0
        })
    }

    /// Inside-or-on test for a convex counter-clockwise polygon. Degenerate
    /// one- and two-vertex polygons contain the points within tolerance of
    /// the vertex or segment.
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        match self.vertices.len() {
            0 => false,
            1 => (self.vertices[0] - p).norm() <= ON_EDGE_TOLERANCE,
            2 => segment_distance(&self.vertices[0], &self.vertices[1], p) <= ON_EDGE_TOLERANCE,
            n => (0..n).all(|i| {
                let a = &self.vertices[i];
                let b = &self.vertices[(i + 1) % n];
                let len = (b - a).norm();
                len == 0.0 || cross(a, b, p) / len >= -ON_EDGE_TOLERANCE
            }),
        }
    }

    /// Horizontal extent of the polygon on the line `y`, if it reaches it.
    fn row_extent(&self, y: f64) -> Option<(f64, f64)> {
        let n = self.vertices.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if a.y == y {
                lo = lo.min(a.x);
                hi = hi.max(a.x);
            }
            if (a.y < y && b.y > y) || (a.y > y && b.y < y) {
                let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Scanline fill: a pixel is set iff its center lies inside or on the
    /// polygon. Content outside the frame is clipped.
    pub fn rasterize_into(&self, mask: &mut BinaryMask) {
        if self.vertices.is_empty() {
            return;
        }
        let (w, h) = (i64::from(mask.width()), i64::from(mask.height()));
        let slack = 1e-6;
        let ymin = self.vertices.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let ymax = self.vertices.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let v0 = ((ymin - slack).ceil() as i64).max(0);
        let v1 = ((ymax + slack).floor() as i64).min(h - 1);
        for v in v0..=v1 {
            let y = v as f64;
            // Rows touching a vertex within the slack may miss the exact
            // extent; probe slightly inside too.
            let extent = self
                .row_extent(y)
                .or_else(|| self.row_extent(y + slack))
                .or_else(|| self.row_extent(y - slack));
            let Some((xl, xr)) = extent else { continue };
            let inside = |u: i64| self.contains(&Point2::new(u as f64, y));
            let mut lo = ((xl - slack).ceil() as i64).max(0);
            let mut hi = ((xr + slack).floor() as i64).min(w - 1);
            if lo > hi {
                continue;
            }
            while lo <= hi && !inside(lo) {
                lo += 1;
            }
            while hi >= lo && !inside(hi) {
                hi -= 1;
            }
            if lo > hi {
                continue;
            }
            while lo > 0 && inside(lo - 1) {
                lo -= 1;
            }
            while hi < w - 1 && inside(hi + 1) {
                hi += 1;
            }
            mask.fill_span(v as u32, lo as u32, hi as u32);
        }
    }

    pub fn rasterize(&self, width: u32, height: u32) -> BinaryMask {
        let mut m = BinaryMask::new(width, height);
        self.rasterize_into(&mut m);
        m
    }
}

fn segment_distance(a: &Point2<f64>, b: &Point2<f64>, p: &Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Boundary samples of a disk, placed on the circumscribed regular polygon
/// so the sampled region always contains the true disk.
pub fn disk_samples(center: &Point2<f64>, radius: f64) -> impl Iterator<Item = Point2<f64>> + '_ {
    let step = std::f64::consts::TAU / DISK_SAMPLES as f64;
    let r = radius / (0.5 * step).cos();
    (0..DISK_SAMPLES).map(move |k| {
        let a = step * k as f64;
        Point2::new(center.x + r * a.cos(), center.y + r * a.sin())
    })
}

/// Hull of the disk samples around every center.
pub fn hull_of_disks(centers: &[Point2<f64>], radius: f64) -> Result<Polygon2D, ZoneError> {
    let samples: Vec<Point2<f64>> = centers.iter().flat_map(|c| disk_samples(c, radius)).collect();
    convex_hull(&samples)
}

/// Filled convex hull of disks of `radius` pixels around `centers`.
pub fn rasterize_hull_of_disks(
    centers: &[Point2<f64>],
    radius: f64,
    width: u32,
    height: u32,
) -> Result<BinaryMask, ZoneError> {
    if !(radius >= 1.0 && radius.is_finite()) {
        return Err(ZoneError::InvalidParams(format!("disk radius {radius} < 1")));
    }
    if centers.is_empty() {
        return Ok(BinaryMask::new(width, height));
    }
    Ok(hull_of_disks(centers, radius)?.rasterize(width, height))
}
