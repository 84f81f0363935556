use std::collections::{BTreeMap, HashMap};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::state::Mode;
use super::SessionError;
use crate::geometry::PoseConfig;
use crate::simcell::{PrimitiveConfig, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Owner {
    #[serde(rename = "H")]
    Human,
    #[serde(rename = "R")]
    Robot,
    #[serde(rename = "H+R")]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub name: String,
    pub shape: Shape,
    pub pose: PoseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegConfig {
    /// Named joint pose to move to.
    pub to: String,
    /// Object grasped on arrival.
    #[serde(default)]
    pub grasp: Option<String>,
    /// Object released on arrival.
    #[serde(default)]
    pub release: Option<String>,
}

/// A stretch of robot motion that runs once its dependencies are met.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub name: String,
    #[serde(default = "both_modes")]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub after_tasks: Vec<u8>,
    #[serde(default)]
    pub after_segments: Vec<String>,
    pub legs: Vec<LegConfig>,
}

fn both_modes() -> Vec<Mode> {
    vec![Mode::Ar, Mode::Baseline]
}

/// Collaborative hand-guidance: once `after_segment` ends the robot enters
/// force mode and the operator guides it to `to` over `duration` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuideConfig {
    pub after_segment: String,
    pub to: String,
    pub duration: f64,
    pub release: String,
    pub work_at: [f64; 3],
    /// Corners of the box around the operator's arms that joins the robot
    /// zone while guiding.
    pub corridor_min: [f64; 3],
    pub corridor_max: [f64; 3],
}

/// Manual completion of a shared task when collaboration is not allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualConfig {
    pub after_segment: String,
    pub duration: f64,
    pub work_at: [f64; 3],
    /// Object moved into place when the task completes.
    pub place: ObjectConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: u8,
    pub owner: Owner,
    #[serde(default)]
    pub name: String,
    /// Nominal working time of a human task.
    #[serde(default)]
    pub duration: f64,
    #[serde(default)]
    pub after: Vec<u8>,
    /// Segments that must be done before the task can start. Segments that
    /// do not run in the current mode are skipped.
    #[serde(default)]
    pub after_segments: Vec<String>,
    /// Segments that make up a robot task.
    #[serde(default)]
    pub segments: Vec<String>,
    /// Where the operator's hands work.
    #[serde(default)]
    pub work_at: Option<[f64; 3]>,
    /// Parts that appear when the task completes.
    #[serde(default)]
    pub parts: Vec<ObjectConfig>,
    #[serde(default)]
    pub guide: Option<GuideConfig>,
    #[serde(default)]
    pub manual: Option<ManualConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmKey {
    pub t: f64,
    pub elbow: [f64; 3],
    pub hand: [f64; 3],
}

/// Extra forearm intrusion, anchored to the session start or to the start
/// of a task or segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedIntrusion {
    #[serde(default = "start_anchor")]
    pub anchor: String,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "both_modes")]
    pub modes: Vec<Mode>,
    pub keys: Vec<ArmKey>,
}

fn start_anchor() -> String {
    "start".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub home: String,
    /// Fastest joint speed in rad/s.
    pub joint_speed: f64,
    /// Shortest time for any leg.
    #[serde(default = "default_min_leg")]
    pub min_leg: f64,
    pub poses: BTreeMap<String, Vec<f64>>,
}

fn default_min_leg() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub robot: RobotConfig,
    #[serde(default, rename = "static")]
    pub statics: Vec<PrimitiveConfig>,
    #[serde(default, rename = "object")]
    pub objects: Vec<ObjectConfig>,
    #[serde(rename = "task")]
    pub tasks: Vec<TaskConfig>,
    #[serde(default, rename = "segment")]
    pub segments: Vec<SegmentConfig>,
    #[serde(default, rename = "intrusion")]
    pub intrusions: Vec<ScriptedIntrusion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Task(u8),
    Segment(usize),
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SessionError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SessionError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn task(&self, id: u8) -> Option<&TaskConfig> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn segment_index(&self, name: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.name == name)
    }

    pub fn segment_runs(&self, index: usize, mode: Mode) -> bool {
        self.segments[index].modes.contains(&mode)
    }

    pub fn pose(&self, name: &str) -> Result<&[f64], SessionError> {
        self.robot
            .poses
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| SessionError::Script(format!("unknown robot pose {name:?}")))
    }

    /// Prerequisites of `node` in `mode`.
    pub fn dependencies(&self, node: Node, mode: Mode) -> Vec<Node> {
        let segs = |names: &[String]| -> Vec<Node> {
            names
                .iter()
                .filter_map(|n| self.segment_index(n))
                .filter(|&i| self.segment_runs(i, mode))
                .map(Node::Segment)
                .collect()
        };
        match node {
            Node::Task(id) => {
                let Some(t) = self.task(id) else { return Vec::new() };
                let mut deps: Vec<Node> = t.after.iter().map(|&a| Node::Task(a)).collect();
                deps.extend(segs(&t.after_segments));
                deps.extend(segs(&t.segments));
                match (mode, &t.guide, &t.manual) {
                    (Mode::Ar, Some(g), _) => deps.extend(segs(std::slice::from_ref(&g.after_segment))),
                    (Mode::Baseline, _, Some(m)) => deps.extend(segs(std::slice::from_ref(&m.after_segment))),
                    _ => {}
                }
                deps
            }
            Node::Segment(i) => {
                let s = &self.segments[i];
                let mut deps: Vec<Node> = s.after_tasks.iter().map(|&a| Node::Task(a)).collect();
                deps.extend(segs(&s.after_segments));
                deps
            }
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let err = |m: String| Err(SessionError::Script(m));
        if self.tasks.is_empty() {
            return err("no tasks".into());
        }
        let mut ids: Vec<u8> = self.tasks.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return err("duplicate task id".into());
        }
        if !(self.robot.joint_speed > 0.0 && self.robot.min_leg > 0.0) {
            return err("robot speeds must be positive".into());
        }
        self.pose(&self.robot.home)?;
        let dof = self.pose(&self.robot.home)?.len();
        if self.robot.poses.values().any(|q| q.len() != dof) {
            return err("robot poses differ in joint count".into());
        }
        let mut names = HashMap::new();
        for (i, s) in self.segments.iter().enumerate() {
            if names.insert(s.name.as_str(), i).is_some() {
                return err(format!("duplicate segment {:?}", s.name));
            }
            if s.legs.is_empty() {
                return err(format!("segment {:?} has no legs", s.name));
            }
            for leg in &s.legs {
                self.pose(&leg.to)?;
            }
        }
        let known_segment = |n: &String| {
            if self.segment_index(n).is_some() {
                Ok(())
            } else {
                Err(SessionError::Script(format!("unknown segment {n:?}")))
            }
        };
        let known_task = |id: &u8| {
            if self.task(*id).is_some() {
                Ok(())
            } else {
                Err(SessionError::Script(format!("unknown task {id}")))
            }
        };
        for t in &self.tasks {
            t.after.iter().try_for_each(known_task)?;
            t.after_segments.iter().try_for_each(known_segment)?;
            t.segments.iter().try_for_each(known_segment)?;
            match t.owner {
                Owner::Human if t.duration.is_nan() || t.duration <= 0.0 || t.work_at.is_none() => {
                    return err(format!("human task {} needs a duration and work_at", t.id));
                }
                Owner::Robot if t.segments.is_empty() => {
                    return err(format!("robot task {} lists no segments", t.id));
                }
                Owner::Both => {
                    let (Some(g), Some(m)) = (&t.guide, &t.manual) else {
                        return err(format!("shared task {} needs guide and manual blocks", t.id));
                    };
                    known_segment(&g.after_segment)?;
                    known_segment(&m.after_segment)?;
                    self.pose(&g.to)?;
                    if !(g.duration > 0.0 && m.duration > 0.0) {
                        return err(format!("shared task {} needs positive durations", t.id));
                    }
                }
                _ => {}
            }
        }
        for s in &self.segments {
            s.after_tasks.iter().try_for_each(known_task)?;
            s.after_segments.iter().try_for_each(known_segment)?;
        }
        for x in &self.intrusions {
            self.anchor(&x.anchor)?;
            if x.keys.is_empty() {
                return err("scripted intrusion without keys".into());
            }
        }
        for mode in [Mode::Ar, Mode::Baseline] {
            self.topological_order(mode)?;
        }
        Ok(())
    }

    /// Parses an intrusion anchor: `start`, `task:<id>` or `segment:<name>`.
    pub fn anchor(&self, anchor: &str) -> Result<Option<Node>, SessionError> {
        if anchor == "start" {
            return Ok(None);
        }
        if let Some(id) = anchor.strip_prefix("task:") {
            let id: u8 = id
                .parse()
                .map_err(|_| SessionError::Script(format!("bad anchor {anchor:?}")))?;
            if self.task(id).is_some() {
                return Ok(Some(Node::Task(id)));
            }
        }
        if let Some(name) = anchor.strip_prefix("segment:") {
            if let Some(i) = self.segment_index(name) {
                return Ok(Some(Node::Segment(i)));
            }
        }
        Err(SessionError::Script(format!("bad anchor {anchor:?}")))
    }

    /// Tasks and segments of `mode` in dependency order.
    pub fn topological_order(&self, mode: Mode) -> Result<Vec<Node>, SessionError> {
        let mut nodes: Vec<Node> = self.tasks.iter().map(|t| Node::Task(t.id)).collect();
        nodes.extend(
            (0..self.segments.len())
                .filter(|&i| self.segment_runs(i, mode))
                .map(Node::Segment),
        );
        let mut state: HashMap<Node, u8> = HashMap::new();
        let mut order = Vec::with_capacity(nodes.len());
        fn visit(
            cfg: &ScenarioConfig,
            mode: Mode,
            n: Node,
            state: &mut HashMap<Node, u8>,
            order: &mut Vec<Node>,
        ) -> Result<(), SessionError> {
            match state.get(&n) {
                Some(2) => return Ok(()),
                Some(1) => return Err(SessionError::CircularDependency(format!("{n:?}"))),
                _ => {}
            }
            state.insert(n, 1);
            for d in cfg.dependencies(n, mode) {
                visit(cfg, mode, d, state, order)?;
            }
            state.insert(n, 2);
            order.push(n);
            Ok(())
        }
        for n in nodes {
            visit(self, mode, n, &mut state, &mut order)?;
        }
        Ok(order)
    }
}

pub(crate) fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}
