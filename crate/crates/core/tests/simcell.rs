use std::f64::consts::PI;
use std::io::Cursor;

use hrc_safety::geometry::{make_synthetic_camera, CameraModel, DepthImage, RigidTransform, SyntheticCameraSpec};
use hrc_safety::simcell::*;
use hrc_safety::zones::{build_zones, ZoneParams};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn camera() -> CameraModel {
    make_synthetic_camera(&SyntheticCameraSpec::default()).unwrap()
}

fn joints() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-PI..PI, 6)
}

/// Largest image-plane radius, in pixels, of any sphere of `radius` around
/// the points, allowing for perspective stretch away from the optical axis.
fn projected_radius(cam: &CameraModel, points: &[Vector3<f64>], radius: f64) -> f64 {
    let f = cam.intrinsics.fx.max(cam.intrinsics.fy);
    points
        .iter()
        .map(|p| {
            let c = cam.world_to_camera(p);
            let dist = c.norm();
            assert!(dist > radius && c.z > 0.0);
            let alpha = (radius / dist).asin();
            let theta = (c.x.hypot(c.y) / c.z).atan();
            assert!(theta + alpha < PI / 2.0);
            f * ((theta + alpha).tan() - theta.tan())
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn link_frames_stay_rigid(q in joints()) {
        let fk = KinematicChain::ur5().forward_kinematics(&q).unwrap();
        for frame in fk.frames.iter().chain(std::iter::once(&fk.tool_frame)) {
            let r = frame.rotation();
            prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).norm() < 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
        // capsule endpoints chain together
        for w in fk.frames.windows(2) {
            prop_assert!(w[0].translation().iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn planar_two_link_matches_closed_form(q1 in -PI..PI, q2 in -PI..PI, l1 in 0.1..1.0f64, l2 in 0.1..1.0f64) {
        let chain = KinematicChain::new(vec![Link::dh(0.0, l1, 0.0, 0.02), Link::dh(0.0, l2, 0.0, 0.02)], None).unwrap();
        let fk = chain.forward_kinematics(&[q1, q2]).unwrap();
        let want = Vector3::new(l1 * q1.cos() + l2 * (q1 + q2).cos(), l1 * q1.sin() + l2 * (q1 + q2).sin(), 0.0);
        prop_assert!((fk.tool_frame.translation() - want).norm() < 1e-9);
        let elbow = Vector3::new(l1 * q1.cos(), l1 * q1.sin(), 0.0);
        prop_assert!((fk.frames[1].translation() - elbow).norm() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rendered_robot_lies_inside_its_zone(q in joints()) {
        let cam = camera();
        let fk = KinematicChain::ur5().forward_kinematics(&q).unwrap();
        let cps = fk.control_points();
        let max_r = fk.capsules.iter().map(|c| c.radius).fold(0.0, f64::max);
        let omega = projected_radius(&cam, cps.points(), max_r) + 1.0;
        let params = ZoneParams { omega, delta_omega: 0.0, ..ZoneParams::default() };
        let zones = build_zones(&cps, &[], &params, &cam).unwrap();

        let renderer = DepthRenderer::new(&cam);
        let prims: Vec<ScenePrimitive> = fk
            .capsules
            .iter()
            .map(|c| ScenePrimitive::from_capsule(c, PrimitiveTag::RobotLink).unwrap())
            .collect();
        let bg = renderer.background();
        let img = renderer.render(&prims);
        for v in 0..cam.height() {
            for u in 0..cam.width() {
                if img.get(u, v) < bg.get(u, v) {
                    prop_assert!(zones.robot().get(u, v), "robot pixel ({u}, {v}) outside Z_r");
                }
            }
        }
    }

    #[test]
    fn adding_primitives_only_brings_surfaces_closer(boxes in prop::collection::vec((prop::array::uniform3(-0.8..0.8f64), prop::array::uniform3(0.02..0.3f64)), 1..5)) {
        let renderer = DepthRenderer::new(&camera());
        let mut scene = Vec::new();
        let mut before = renderer.render(&scene);
        for (c, h) in boxes {
            let mut c = c;
            c[2] = c[2].abs() + h[2];
            scene.push(ScenePrimitive::new(
                Shape::Box { half_extents: h },
                RigidTransform::from_translation(Vector3::from(c)),
                PrimitiveTag::Static,
            ).unwrap());
            let after = renderer.render(&scene);
            for (a, b) in after.as_slice().iter().zip(before.as_slice()) {
                prop_assert!(*b == 0.0 || (*a > 0.0 && a <= b));
            }
            before = after;
        }
    }
}

#[test]
fn sphere_depth_matches_analytic_ray_cast() {
    let spec = SyntheticCameraSpec {
        width: 96,
        height: 80,
        ..SyntheticCameraSpec::default()
    };
    let cam = make_synthetic_camera(&spec).unwrap();
    let center = Vector3::new(0.13, -0.07, 0.4);
    let radius = 0.25;
    let sphere = ScenePrimitive::new(
        Shape::Sphere { radius },
        RigidTransform::from_translation(center),
        PrimitiveTag::Static,
    )
    .unwrap();
    let img = render_depth(&[sphere], &cam);
    let k = cam.intrinsics;
    let eye = Vector3::new(0.0, 0.0, spec.mount_height);
    let mut hits = 0;
    for v in 0..spec.height {
        for u in 0..spec.width {
            // camera looks down with image rows along −y
            let dir = Vector3::new((f64::from(u) - k.cx) / k.fx, -(f64::from(v) - k.cy) / k.fy, -1.0);
            let oc = eye - center;
            let (a, b, c) = (dir.dot(&dir), 2.0 * dir.dot(&oc), oc.dot(&oc) - radius * radius);
            let disc = b * b - 4.0 * a * c;
            let table = spec.mount_height;
            let want = if disc >= 0.0 {
                ((-b - disc.sqrt()) / (2.0 * a)).min(table)
            } else {
                table
            };
            if disc >= 0.0 {
                hits += 1;
            }
            assert!((f64::from(img.get(u, v)) - want).abs() < 1e-5, "pixel ({u}, {v})");
        }
    }
    assert!(hits > 100);
}

#[test]
fn depth_stream_round_trips_and_detects_truncation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let frames: Vec<DepthImage> = (0..5)
        .map(|i| {
            let mut img = DepthImage::filled(16, 12, 2.0 - 0.1 * i as f32);
            add_depth_noise(&mut img, 0.01, &mut rng);
            img
        })
        .collect();
    let mut w = DepthStreamWriter::new(Cursor::new(Vec::new()), 16, 12).unwrap();
    for f in &frames {
        w.write_frame(f).unwrap();
    }
    let bytes = w.finish().unwrap().into_inner();
    let read: Vec<DepthImage> = DepthStreamReader::new(bytes.as_slice())
        .unwrap()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(read.len(), 5);
    for (a, b) in read.iter().zip(&frames) {
        assert!(a
            .as_slice()
            .iter()
            .map(|x| x.to_bits())
            .eq(b.as_slice().iter().map(|x| x.to_bits())));
    }
    let cut = &bytes[..bytes.len() - 100];
    let partial: Vec<_> = DepthStreamReader::new(cut).unwrap().collect();
    assert_eq!(partial.iter().filter(|r| r.is_ok()).count(), 4);
    assert!(partial.last().unwrap().is_err());
}

#[test]
fn noise_is_seeded_and_leaves_missing_returns_alone() {
    let mut img = DepthImage::filled(8, 8, 1.5);
    img.set(3, 3, 0.0);
    let mut a = img.clone();
    let mut b = img.clone();
    add_depth_noise(&mut a, 0.01, &mut ChaCha8Rng::seed_from_u64(1));
    add_depth_noise(&mut b, 0.01, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a.as_slice(), b.as_slice());
    assert_eq!(a.get(3, 3), 0.0);
    assert!(a.as_slice().iter().any(|&d| d != 1.5 && d != 0.0));
}
