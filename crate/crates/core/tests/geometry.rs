use hrc_safety::geometry::*;
use nalgebra::{Matrix3, Matrix4, Unit, Vector3, Vector4};
use proptest::prelude::*;

fn rotation() -> impl Strategy<Value = RigidTransform> {
    (
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
        -3.1..3.1f64,
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64),
    )
        .prop_filter_map("axis must be nonzero", |((x, y, z), angle, (tx, ty, tz))| {
            let axis = Vector3::new(x, y, z);
            (axis.norm() > 1e-3).then(|| {
                let r = RigidTransform::from_axis_angle(&Unit::new_normalize(axis), angle);
                RigidTransform::from_translation(Vector3::new(tx, ty, tz)).compose(&r)
            })
        })
}

fn camera() -> impl Strategy<Value = CameraModel> {
    (
        200.0..900.0f64,
        200.0..900.0f64,
        0.1..0.9f64,
        0.1..0.9f64,
        64u32..640,
        48u32..480,
        rotation(),
    )
        .prop_map(|(fx, fy, sx, sy, w, h, pose)| {
            let k = CameraIntrinsics {
                fx,
                fy,
                cx: sx * f64::from(w),
                cy: sy * f64::from(h),
                width: w,
                height: h,
            };
            CameraModel::new(k, pose).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn pixel_depth_round_trip(cam in camera(), fu in 0.0..1.0f64, fv in 0.0..1.0f64, depth in 0.1..10.0f64) {
        let p = PixelCoord::new(fu * f64::from(cam.width() - 1), fv * f64::from(cam.height() - 1));
        let world = cam.backproject_model_to_world(p, depth).unwrap();
        let (q, d) = cam.project_world_to_model(&world).unwrap();
        prop_assert!((q.u - p.u).abs() < 1e-9 && (q.v - p.v).abs() < 1e-9);
        prop_assert!((d - depth).abs() < 1e-9);
    }

    #[test]
    fn world_point_round_trip(cam in camera(), x in -1.0..1.0f64, y in -1.0..1.0f64, z in 0.1..10.0f64) {
        let world = cam.extrinsics.apply(&Vector3::new(x * z, y * z, z));
        let (p, d) = cam.project_world_to_model(&world).unwrap();
        let back = cam.backproject_model_to_world(p, d).unwrap();
        prop_assert!((back - world).norm() < 1e-9);
    }

    #[test]
    fn projection_matches_matrix_oracle(cam in camera(), x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64) {
        let p = Vector3::new(x, y, z);
        let k = cam.intrinsics;
        let kmat = Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
        let world_to_cam = cam.extrinsics.to_homogeneous().try_inverse().unwrap();
        let c = world_to_cam * Vector4::new(x, y, z, 1.0);
        prop_assume!(c.z > 1e-3);
        let h = kmat * Vector3::new(c.x, c.y, c.z);
        let (px, depth) = cam.project_world_to_model(&p).unwrap();
        prop_assert!((px.u - h.x / h.z).abs() < 1e-6 && (px.v - h.y / h.z).abs() < 1e-6);
        prop_assert!((depth - c.z).abs() < 1e-9);
    }

    #[test]
    fn rigid_transforms_preserve_distances(t in rotation(), a in prop::array::uniform3(-5.0..5.0f64), b in prop::array::uniform3(-5.0..5.0f64)) {
        let (a, b) = (Vector3::from(a), Vector3::from(b));
        prop_assert!(((t.apply(&a) - t.apply(&b)).norm() - (a - b).norm()).abs() < 1e-9);
    }

    #[test]
    fn holo_transform_matches_homogeneous_product(m in rotation(), h in rotation(), p in prop::array::uniform3(-3.0..3.0f64)) {
        let p = Vector3::from(p);
        let got = transform_to_holo_frame(&p, &m, &h);
        let oracle: Matrix4<f64> = h.to_homogeneous() * m.to_homogeneous();
        let want = oracle * p.push(1.0);
        prop_assert!((got - want.xyz()).norm() < 1e-9);
        let composed = h.compose(&m).apply(&p);
        prop_assert!((got - composed).norm() < 1e-9);
    }

    #[test]
    fn inverse_undoes_transform(t in rotation(), p in prop::array::uniform3(-3.0..3.0f64)) {
        let p = Vector3::from(p);
        prop_assert!((t.inverse().apply(&t.apply(&p)) - p).norm() < 1e-9);
    }
}

#[test]
fn synthetic_camera_footprint() {
    let cam = make_synthetic_camera(&SyntheticCameraSpec::default()).unwrap();
    let left = cam.backproject_to_plane(PixelCoord::new(-0.5, 211.5), 0.0).unwrap();
    let right = cam.backproject_to_plane(PixelCoord::new(511.5, 211.5), 0.0).unwrap();
    assert!((right.x - left.x - 2.0).abs() < 1e-9);
    // rows run along −y
    let top = cam.backproject_to_plane(PixelCoord::new(255.5, 0.0), 0.0).unwrap();
    assert!(top.y > 0.0);
}

#[test]
fn camera_config_round_trips_through_toml() {
    let cam = make_synthetic_camera(&SyntheticCameraSpec {
        center: [-0.35, 0.1],
        ..SyntheticCameraSpec::default()
    })
    .unwrap();
    let back = CameraModel::from_config_str(&cam.to_config_string()).unwrap();
    assert_eq!(back, cam);
}
