use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::scene::{ScenePrimitive, Shape};
use super::{PrimitiveTag, SimError};
use crate::geometry::RigidTransform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub q: Vec<f64>,
    /// Arrival time in seconds from the start of the trajectory.
    pub t: f64,
}

/// Joint-space path, linearly interpolated between waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self, SimError> {
        let Some(first) = waypoints.first() else {
            return Err(SimError::InvalidTrajectory("no waypoints".into()));
        };
        let dof = first.q.len();
        if waypoints
            .iter()
            .any(|w| w.q.len() != dof || w.q.iter().any(|x| !x.is_finite()))
        {
            return Err(SimError::InvalidTrajectory("inconsistent joint vectors".into()));
        }
        if first.t.is_nan() || first.t < 0.0 || !waypoints.windows(2).all(|p| p[1].t > p[0].t) {
            return Err(SimError::InvalidTrajectory(
                "times must be non-negative and strictly increasing".into(),
            ));
        }
        Ok(Self { waypoints })
    }

    /// Constant-speed path through `qs`, each leg taking time proportional
    /// to its largest joint move at `max_joint_speed` rad/s.
    pub fn timed(qs: &[Vec<f64>], max_joint_speed: f64, min_leg: f64) -> Result<Self, SimError> {
        let mut t = 0.0;
        let mut waypoints = Vec::with_capacity(qs.len());
        for (i, q) in qs.iter().enumerate() {
            if i > 0 {
                let span = q.iter().zip(&qs[i - 1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                t += (span / max_joint_speed).max(min_leg);
            }
            waypoints.push(Waypoint { q: q.clone(), t });
        }
        Self::new(waypoints)
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn duration(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    pub fn end(&self) -> &[f64] {
        &self.waypoints.last().expect("non-empty").q
    }

    /// Joint angles at time `t`, held constant outside the waypoint span.
    pub fn sample(&self, t: f64) -> Vec<f64> {
        let w = &self.waypoints;
        if t <= w[0].t {
            return w[0].q.clone();
        }
        let k = w.partition_point(|p| p.t <= t);
        if k >= w.len() {
            return w[w.len() - 1].q.clone();
        }
        let (p0, p1) = (&w[k - 1], &w[k]);
        let s = (t - p0.t) / (p1.t - p0.t);
        p0.q.iter().zip(&p1.q).map(|(a, b)| (1.0 - s) * a + s * b).collect()
    }
}

/// Default forearm capsule of a reaching operator.
pub const FOREARM_RADIUS: f64 = 0.05;
pub const FOREARM_LENGTH: f64 = 0.35;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseKey {
    /// Seconds after the event start.
    pub t: f64,
    pub pose: RigidTransform,
}

/// A primitive moving along a pose path, present only while its path runs.
#[derive(Debug, Clone, PartialEq)]
pub struct IntrusionEvent {
    pub start: f64,
    pub shape: Shape,
    pub path: Vec<PoseKey>,
}

/// Pose of a forearm capsule from elbow to hand.
pub fn forearm_pose(elbow: Vector3<f64>, hand: Vector3<f64>) -> RigidTransform {
    let rotation = Rotation3::rotation_between(&Vector3::z(), &(hand - elbow))
        .unwrap_or_else(|| Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
    RigidTransform::new(rotation.into_inner(), elbow).expect("rotation is proper")
}

fn interpolate_pose(a: &RigidTransform, b: &RigidTransform, s: f64) -> RigidTransform {
    if s <= 0.0 {
        return *a;
    }
    if s >= 1.0 {
        return *b;
    }
    let qa = UnitQuaternion::from_matrix(a.rotation());
    let qb = UnitQuaternion::from_matrix(b.rotation());
    let q = qa.slerp(&qb, s);
    let t = a.translation() * (1.0 - s) + b.translation() * s;
    RigidTransform::new(q.to_rotation_matrix().into_inner(), t).expect("slerp is a rotation")
}

impl IntrusionEvent {
    pub fn new(start: f64, shape: Shape, path: Vec<PoseKey>) -> Result<Self, SimError> {
        if !(start >= 0.0 && start.is_finite()) {
            return Err(SimError::InvalidIntrusion(format!("start time {start}")));
        }
        if path.is_empty() || path[0].t.is_nan() || path[0].t < 0.0 || !path.windows(2).all(|p| p[1].t > p[0].t) {
            return Err(SimError::InvalidIntrusion(
                "path times must be non-negative and increasing".into(),
            ));
        }
        ScenePrimitive::new(shape, path[0].pose, PrimitiveTag::Intrusion)?;
        Ok(Self { start, shape, path })
    }

    /// Forearm moving between the given (time, elbow, hand) keys.
    pub fn forearm(start: f64, keys: &[(f64, Vector3<f64>, Vector3<f64>)]) -> Result<Self, SimError> {
        let path = keys
            .iter()
            .map(|&(t, elbow, hand)| PoseKey {
                t,
                pose: forearm_pose(elbow, hand),
            })
            .collect();
        let shape = Shape::Capsule {
            radius: FOREARM_RADIUS,
            length: FOREARM_LENGTH,
        };
        Self::new(start, shape, path)
    }

    pub fn end(&self) -> f64 {
        self.start + self.path.last().expect("non-empty").t
    }

    pub fn is_active(&self, time: f64) -> bool {
        time >= self.start + self.path[0].t && time <= self.end()
    }

    pub fn pose_at(&self, time: f64) -> RigidTransform {
        let local = time - self.start;
        let k = self.path.partition_point(|p| p.t <= local);
        if k == 0 {
            return self.path[0].pose;
        }
        if k >= self.path.len() {
            return self.path[self.path.len() - 1].pose;
        }
        let (a, b) = (&self.path[k - 1], &self.path[k]);
        interpolate_pose(&a.pose, &b.pose, (local - a.t) / (b.t - a.t))
    }

    pub fn primitive_at(&self, time: f64) -> Option<ScenePrimitive> {
        self.is_active(time).then(|| ScenePrimitive {
            shape: self.shape,
            pose: self.pose_at(time),
            tag: PrimitiveTag::Intrusion,
        })
    }
}

/// Intrusion events ordered by start time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntrusionScript {
    events: Vec<IntrusionEvent>,
}

impl IntrusionScript {
    pub fn new(mut events: Vec<IntrusionEvent>) -> Self {
        events.sort_by(|a, b| a.start.total_cmp(&b.start));
        Self { events }
    }

    pub fn push(&mut self, event: IntrusionEvent) {
        let at = self.events.partition_point(|e| e.start <= event.start);
        self.events.insert(at, event);
    }

    pub fn events(&self) -> &[IntrusionEvent] {
        &self.events
    }

    pub fn any_active(&self, time: f64) -> bool {
        self.events.iter().any(|e| e.is_active(time))
    }

    pub fn primitives_at(&self, time: f64) -> impl Iterator<Item = ScenePrimitive> + '_ {
        self.events.iter().filter_map(move |e| e.primitive_at(time))
    }

    pub fn retain(&mut self, keep: impl FnMut(&IntrusionEvent) -> bool) {
        self.events.retain(keep);
    }

    /// Drops events that ended before `time`.
    pub fn prune(&mut self, time: f64) {
        self.events.retain(|e| e.end() >= time);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj() -> Trajectory {
        Trajectory::new(vec![
            Waypoint {
                q: vec![0.0, 1.0],
                t: 0.0,
            },
            Waypoint {
                q: vec![1.0, -1.0],
                t: 2.0,
            },
            Waypoint {
                q: vec![0.3, 0.7],
                t: 3.0,
            },
        ])
        .unwrap()
    }

    #[test]
    fn waypoints_hit_exactly() {
        let t = traj();
        for w in t.waypoints() {
            assert_eq!(t.sample(w.t), w.q);
        }
        assert_eq!(t.sample(-1.0), vec![0.0, 1.0]);
        assert_eq!(t.sample(10.0), vec![0.3, 0.7]);
        assert_eq!(t.sample(1.0), vec![0.5, 0.0]);
    }

    #[test]
    fn bad_times_rejected() {
        let w = |t| Waypoint { q: vec![0.0], t };
        assert!(Trajectory::new(vec![w(0.0), w(0.0)]).is_err());
        assert!(Trajectory::new(vec![w(-1.0)]).is_err());
        assert!(Trajectory::new(vec![]).is_err());
    }

    #[test]
    fn timed_legs_follow_speed() {
        let t = Trajectory::timed(&[vec![0.0, 0.0], vec![1.0, 0.5], vec![1.0, 0.5]], 0.5, 0.25).unwrap();
        let times: Vec<f64> = t.waypoints().iter().map(|w| w.t).collect();
        assert_eq!(times, vec![0.0, 2.0, 2.25]);
    }

    #[test]
    fn forearm_path_interpolates() {
        let e = IntrusionEvent::forearm(
            5.0,
            &[
                (0.0, Vector3::new(-1.0, 0.0, 0.3), Vector3::new(-0.65, 0.0, 0.3)),
                (2.0, Vector3::new(-0.6, 0.0, 0.3), Vector3::new(-0.25, 0.0, 0.3)),
            ],
        )
        .unwrap();
        assert!(!e.is_active(4.9));
        assert!(e.is_active(6.0));
        assert!(!e.is_active(7.1));
        let p = e.pose_at(6.0);
        assert!((p.translation() - Vector3::new(-0.8, 0.0, 0.3)).norm() < 1e-12);
        let (a, b, _) = e.primitive_at(6.0).unwrap().capsule_axis().unwrap();
        assert!(((b - a).norm() - FOREARM_LENGTH).abs() < 1e-12);
        assert!((b.x - a.x - FOREARM_LENGTH).abs() < 1e-9);
    }

    #[test]
    fn script_orders_events() {
        let ev = |s| {
            IntrusionEvent::forearm(
                s,
                &[
                    (0.0, Vector3::zeros(), Vector3::x()),
                    (1.0, Vector3::zeros(), Vector3::x()),
                ],
            )
            .unwrap()
        };
        let mut script = IntrusionScript::new(vec![ev(4.0), ev(1.0)]);
        script.push(ev(2.0));
        let starts: Vec<f64> = script.events().iter().map(|e| e.start).collect();
        assert_eq!(starts, vec![1.0, 2.0, 4.0]);
        script.prune(3.5);
        assert_eq!(script.events().len(), 1);
    }
}
