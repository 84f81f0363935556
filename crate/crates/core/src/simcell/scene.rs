use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::kinematics::CapsuleGeometry;
use super::SimError;
use crate::geometry::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Segment from the pose origin along local +z, swept by `radius`.
    Capsule {
        radius: f64,
        length: f64,
    },
    Sphere {
        radius: f64,
    },
    Box {
        half_extents: [f64; 3],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimitiveTag {
    RobotLink,
    CarriedObject,
    Intrusion,
    Static,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePrimitive {
    pub shape: Shape,
    pub pose: RigidTransform,
    pub tag: PrimitiveTag,
}

/// Ray `o + t·d` for `t > 0`.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub dir: Vector3<f64>,
}

fn sphere_hit(ray: &Ray, c: &Vector3<f64>, r: f64) -> Option<f64> {
    let oc = ray.origin - c;
    let a = ray.dir.norm_squared();
    let b = ray.dir.dot(&oc);
    let cc = oc.norm_squared() - r * r;
    let disc = b * b - a * cc;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / a;
    (t > 0.0).then_some(t)
}

fn capsule_hit(ray: &Ray, a: &Vector3<f64>, b: &Vector3<f64>, r: f64) -> Option<f64> {
    let ba = b - a;
    let oa = ray.origin - a;
    let baba = ba.norm_squared();
    let bard = ba.dot(&ray.dir);
    let baoa = ba.dot(&oa);
    let rdoa = ray.dir.dot(&oa);
    let rdrd = ray.dir.norm_squared();
    let mut best: Option<f64> = None;
    let mut keep = |t: Option<f64>| {
        if let Some(t) = t {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    };
    let k2 = baba * rdrd - bard * bard;
    if baba > 0.0 && k2 > 1e-12 * baba * rdrd {
        let k1 = baba * rdoa - baoa * bard;
        let k0 = baba * oa.norm_squared() - baoa * baoa - r * r * baba;
        let h = k1 * k1 - k2 * k0;
        if h >= 0.0 {
            let t = (-k1 - h.sqrt()) / k2;
            let y = baoa + t * bard;
            if t > 0.0 && y > 0.0 && y < baba {
                keep(Some(t));
            }
        }
    }
    keep(sphere_hit(ray, a, r));
    keep(sphere_hit(ray, b, r));
    best
}

fn box_hit(ray: &Ray, pose: &RigidTransform, half: &[f64; 3]) -> Option<f64> {
    let inv = pose.inverse();
    slab(&inv.apply(&ray.origin), &inv.apply_vector(&ray.dir), half)
}

/// Ray intersection for many rays sharing one origin, with the
/// origin-dependent terms computed once.
pub(crate) enum FixedOriginHit {
    Sphere {
        c: f64,
        oc: Vector3<f64>,
    },
    Capsule {
        ba: Vector3<f64>,
        oa: Vector3<f64>,
        ob: Vector3<f64>,
        baba: f64,
        baoa: f64,
        k0: f64,
        ca: f64,
        cb: f64,
    },
    Box {
        inv: RigidTransform,
        o: Vector3<f64>,
        half: [f64; 3],
    },
}

impl FixedOriginHit {
    pub(crate) fn new(prim: &ScenePrimitive, origin: &Vector3<f64>) -> Self {
        match prim.shape {
            Shape::Sphere { radius } => {
                let oc = origin - prim.pose.translation();
                FixedOriginHit::Sphere {
                    c: oc.norm_squared() - radius * radius,
                    oc,
                }
            }
            Shape::Capsule { .. } => {
                let (a, b, r) = prim.capsule_axis().expect("capsule");
                let ba = b - a;
                let oa = origin - a;
                let ob = origin - b;
                let baba = ba.norm_squared();
                let baoa = ba.dot(&oa);
                FixedOriginHit::Capsule {
                    ba,
                    oa,
                    ob,
                    baba,
                    baoa,
                    k0: baba * oa.norm_squared() - baoa * baoa - r * r * baba,
                    ca: oa.norm_squared() - r * r,
                    cb: ob.norm_squared() - r * r,
                }
            }
            Shape::Box { half_extents } => {
                let inv = prim.pose.inverse();
                FixedOriginHit::Box {
                    o: inv.apply(origin),
                    inv,
                    half: half_extents,
                }
            }
        }
    }

    #[inline]
    fn sphere(dir: &Vector3<f64>, a: f64, oc: &Vector3<f64>, c: f64) -> Option<f64> {
        let b = dir.dot(oc);
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        let t = (-b - disc.sqrt()) / a;
        (t > 0.0).then_some(t)
    }

    #[inline]
    pub(crate) fn intersect(&self, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            FixedOriginHit::Sphere { c, oc } => Self::sphere(dir, dir.norm_squared(), oc, *c),
            FixedOriginHit::Capsule {
                ba,
                oa,
                ob,
                baba,
                baoa,
                k0,
                ca,
                cb,
            } => {
                let rdrd = dir.norm_squared();
                let bard = ba.dot(dir);
                let k2 = baba * rdrd - bard * bard;
                if *baba > 0.0 && k2 > 1e-12 * baba * rdrd {
                    let k1 = baba * dir.dot(oa) - baoa * bard;
                    let h = k1 * k1 - k2 * k0;
                    if h < 0.0 {
                        // misses the infinite cylinder, hence the capsule
                        return None;
                    }
                    let t = (-k1 - h.sqrt()) / k2;
                    let y = baoa + t * bard;
                    if t > 0.0 && y > 0.0 && y < *baba {
                        return Some(t);
                    }
                }
                match (Self::sphere(dir, rdrd, oa, *ca), Self::sphere(dir, rdrd, ob, *cb)) {
                    (Some(p), Some(q)) => Some(p.min(q)),
                    (p, q) => p.or(q),
                }
            }
            FixedOriginHit::Box { inv, o, half } => {
                let d = inv.apply_vector(dir);
                slab(o, &d, half)
            }
        }
    }
}

fn slab(o: &Vector3<f64>, d: &Vector3<f64>, half: &[f64; 3]) -> Option<f64> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for i in 0..3 {
        if d[i].abs() < 1e-300 {
            if o[i].abs() > half[i] {
                return None;
            }
            continue;
        }
        let a = (-half[i] - o[i]) / d[i];
        let b = (half[i] - o[i]) / d[i];
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1 && t0 > 0.0).then_some(t0)
}

impl ScenePrimitive {
    pub fn new(shape: Shape, pose: RigidTransform, tag: PrimitiveTag) -> Result<Self, SimError> {
        let ok = match shape {
            Shape::Capsule { radius, length } => {
                radius > 0.0 && length >= 0.0 && radius.is_finite() && length.is_finite()
            }
            Shape::Sphere { radius } => radius > 0.0 && radius.is_finite(),
            Shape::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0 && h.is_finite()),
        };
        if !ok {
            return Err(SimError::InvalidPrimitive(format!("{shape:?}")));
        }
        Ok(Self { shape, pose, tag })
    }

    /// Capsule whose axis runs from `a` to `b`.
    pub fn capsule_between(a: Vector3<f64>, b: Vector3<f64>, radius: f64, tag: PrimitiveTag) -> Result<Self, SimError> {
        let axis = b - a;
        let length = axis.norm();
        let rotation = if length > 0.0 {
            Rotation3::rotation_between(&Vector3::z(), &axis)
                .unwrap_or_else(|| Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI))
        } else {
            Rotation3::identity()
        };
        let pose =
            RigidTransform::new(rotation.into_inner(), a).map_err(|e| SimError::InvalidPrimitive(e.to_string()))?;
        Self::new(Shape::Capsule { radius, length }, pose, tag)
    }

    pub fn from_capsule(c: &CapsuleGeometry, tag: PrimitiveTag) -> Result<Self, SimError> {
        Self::capsule_between(c.a, c.b, c.radius, tag)
    }

    /// World endpoints and radius if this is a capsule.
    pub fn capsule_axis(&self) -> Option<(Vector3<f64>, Vector3<f64>, f64)> {
        match self.shape {
            Shape::Capsule { radius, length } => Some((
                *self.pose.translation(),
                self.pose.apply(&Vector3::new(0.0, 0.0, length)),
                radius,
            )),
            _ => None,
        }
    }

    /// Nearest hit parameter along the ray, if any.
    pub fn intersect(&self, ray: &Ray) -> Option<f64> {
        match self.shape {
            Shape::Sphere { radius } => sphere_hit(ray, self.pose.translation(), radius),
            Shape::Capsule { .. } => {
                let (a, b, r) = self.capsule_axis().expect("capsule");
                capsule_hit(ray, &a, &b, r)
            }
            Shape::Box { half_extents } => box_hit(ray, &self.pose, &half_extents),
        }
    }

    /// Points whose convex hull contains the primitive, kept tight for
    /// elongated capsules: the bounding-box corners of both end spheres.
    pub fn footprint_points(&self) -> Vec<Vector3<f64>> {
        match self.shape {
            Shape::Capsule { .. } => {
                let (a, b, r) = self.capsule_axis().expect("capsule");
                let mut out = Vec::with_capacity(16);
                for c in [a, b] {
                    for sx in [-r, r] {
                        for sy in [-r, r] {
                            for sz in [-r, r] {
                                out.push(c + Vector3::new(sx, sy, sz));
                            }
                        }
                    }
                }
                out
            }
            _ => self.bounding_corners(),
        }
    }

    /// Points whose convex hull contains the primitive.
    pub fn bounding_corners(&self) -> Vec<Vector3<f64>> {
        let corners = |lo: Vector3<f64>, hi: Vector3<f64>| {
            let mut out = Vec::with_capacity(8);
            for x in [lo.x, hi.x] {
                for y in [lo.y, hi.y] {
                    for z in [lo.z, hi.z] {
                        out.push(Vector3::new(x, y, z));
                    }
                }
            }
            out
        };
        match self.shape {
            Shape::Sphere { radius } => {
                let c = self.pose.translation();
                let r = Vector3::repeat(radius);
                corners(c - r, c + r)
            }
            Shape::Capsule { .. } => {
                let (a, b, r) = self.capsule_axis().expect("capsule");
                let r = Vector3::repeat(r);
                corners(a.inf(&b) - r, a.sup(&b) + r)
            }
            Shape::Box { half_extents } => {
                let h = Vector3::from(half_extents);
                corners(-h, h).iter().map(|p| self.pose.apply(p)).collect()
            }
        }
    }
}
