#![allow(dead_code)]

use std::collections::VecDeque;

use hrc_safety::geometry::{make_synthetic_camera, DepthImage, SyntheticCameraSpec};
use hrc_safety::zones::{build_zones, BinaryMask, ControlPointLabel, ControlPointSet, ZoneParams};
use nalgebra::{Point2, Vector3};

pub fn cross(o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Jarvis march from the lowest, then leftmost point, counter-clockwise,
/// keeping only the farthest of collinear candidates.
pub fn gift_wrap(points: &[Point2<f64>]) -> Vec<Point2<f64>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    pts.dedup();
    let start = pts[0];
    if pts.len() == 1 {
        return pts;
    }
    let mut hull = vec![start];
    let mut cur = start;
    loop {
        let mut cand = *pts.iter().find(|p| **p != cur).unwrap();
        for p in &pts {
            if *p == cur {
                continue;
            }
            let c = cross(&cur, &cand, p);
            if c < 0.0 || (c == 0.0 && (p - cur).norm_squared() > (cand - cur).norm_squared()) {
                cand = *p;
            }
        }
        if cand == start {
            break;
        }
        hull.push(cand);
        cur = cand;
        assert!(hull.len() <= pts.len(), "gift wrap did not close");
    }
    hull
}

/// Per-pixel half-plane test against every supporting line of the point
/// set, found by brute force over all pairs.
pub fn hull_oracle(points: &[Point2<f64>], width: u32, height: u32) -> BinaryMask {
    let tol = 1e-9;
    let mut edges = Vec::new();
    for a in points {
        for b in points {
            let len = (b - a).norm();
            if len < 1e-12 {
                continue;
            }
            if points.iter().all(|p| cross(a, b, p) / len >= -1e-9) {
                edges.push((*a, *b, len));
            }
        }
    }
    BinaryMask::from_fn(width, height, |u, v| {
        let p = Point2::new(f64::from(u), f64::from(v));
        edges.iter().all(|(a, b, len)| cross(a, b, &p) / len >= -tol)
    })
}

pub fn disk_oracle(center: &Point2<f64>, radius: f64) -> Vec<Point2<f64>> {
    let step = std::f64::consts::PI / 8.0;
    let r = radius / (step / 2.0).cos();
    (0..16)
        .map(|k| {
            let a = step * f64::from(k);
            Point2::new(center.x + r * a.cos(), center.y + r * a.sin())
        })
        .collect()
}

/// Overhead-camera projection written out directly, rounded half up.
pub fn project_oracle(spec: &SyntheticCameraSpec, p: &Vector3<f64>) -> Point2<f64> {
    let (w, h) = (f64::from(spec.width), f64::from(spec.height));
    let f = 0.5 * w / (0.5 * spec.fov_x).tan();
    let depth = spec.mount_height - p.z;
    let u = 0.5 * (w - 1.0) + f * (p.x - spec.center[0]) / depth;
    let v = 0.5 * (h - 1.0) - f * (p.y - spec.center[1]) / depth;
    Point2::new((u + 0.5).floor(), (v + 0.5).floor())
}

pub fn zone_oracle(
    spec: &SyntheticCameraSpec,
    sets: &[Vec<Vector3<f64>>],
    params: &ZoneParams,
) -> (BinaryMask, BinaryMask) {
    let grow = |radius: f64| {
        let mut m = BinaryMask::new(spec.width, spec.height);
        for set in sets {
            let samples: Vec<Point2<f64>> = set
                .iter()
                .flat_map(|p| disk_oracle(&project_oracle(spec, p), radius))
                .collect();
            m.or_assign(&hull_oracle(&samples, spec.width, spec.height)).unwrap();
        }
        m
    };
    let robot = grow(params.omega);
    let outer = grow(params.omega + params.delta_omega).or(&robot).unwrap();
    (robot.clone(), outer.and_not(&robot).unwrap())
}

/// Components under the pixel offsets within `epsilon`, by breadth-first
/// search, size-filtered, each sorted, ordered by first pixel.
pub fn components_oracle(mask: &BinaryMask, epsilon: f64, min_size: usize) -> Vec<Vec<usize>> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let r = epsilon.floor() as i64;
    let mut offsets = Vec::new();
    for dv in -r..=r {
        for du in -r..=r {
            if (du, dv) != (0, 0) && ((du * du + dv * dv) as f64) <= epsilon * epsilon {
                offsets.push((du, dv));
            }
        }
    }
    let mut seen = vec![false; (w * h) as usize];
    let mut out = Vec::new();
    for start in 0..(w * h) as usize {
        if seen[start] || !mask.get_index(start) {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (u, v) = (i as i64 % w, i as i64 / w);
            for (du, dv) in &offsets {
                let (nu, nv) = (u + du, v + dv);
                if nu < 0 || nv < 0 || nu >= w || nv >= h {
                    continue;
                }
                let j = (nv * w + nu) as usize;
                if !seen[j] && mask.get_index(j) {
                    seen[j] = true;
                    comp.push(j);
                    queue.push_back(j);
                }
            }
        }
        comp.sort_unstable();
        if comp.len() >= min_size {
            out.push(comp);
        }
    }
    out
}

pub fn changed_oracle(model: &DepthImage, frame: &DepthImage, tau: f64) -> BinaryMask {
    BinaryMask::from_fn(model.width(), model.height(), |u, v| {
        let (a, b) = (model.get(u, v), frame.get(u, v));
        a > 0.0 && b > 0.0 && (f64::from(a) - f64::from(b)).abs() >= tau
    })
}

pub fn small_spec() -> SyntheticCameraSpec {
    SyntheticCameraSpec {
        width: 64,
        height: 64,
        ..SyntheticCameraSpec::default()
    }
}

pub fn check_against_oracle(robot: Vec<Vector3<f64>>, objects: Vec<Vec<Vector3<f64>>>, params: ZoneParams) {
    let spec = small_spec();
    let cam = make_synthetic_camera(&spec).unwrap();
    let robot_set = ControlPointSet::new(ControlPointLabel::Robot, robot.clone()).unwrap();
    let object_sets: Vec<ControlPointSet> = objects
        .iter()
        .map(|o| ControlPointSet::new(ControlPointLabel::Object, o.clone()).unwrap())
        .collect();
    let zones = build_zones(&robot_set, &object_sets, &params, &cam).unwrap();
    let mut sets = vec![robot];
    sets.extend(objects);
    let (want_robot, want_danger) = zone_oracle(&spec, &sets, &params);
    assert_eq!(zones.robot(), &want_robot);
    assert_eq!(zones.danger(), &want_danger);
    assert_eq!(zones.human(), &want_robot.or(&want_danger).unwrap().not());
}
