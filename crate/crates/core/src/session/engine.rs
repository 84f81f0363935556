use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Point2, Vector3};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::RunMetrics;
use super::operator::OperatorAgent;
use super::protocol::{ButtonStates, PendingOutline, Snapshot, SCHEMA_VERSION};
use super::record::{FrameAnnotation, RecordHeader, Recorder};
use super::script::{vec3, Node, Owner, ScenarioConfig};
use super::state::{Button, ButtonEffect, ButtonEvent, Mode, Phase, SessionState};
use super::SessionError;
use crate::geometry::{make_synthetic_camera, CameraModel, DepthImage, RigidTransform};
use crate::monitor::{FrameReport, RegionId, SafetyMonitor, VerdictLogLine};
use crate::simcell::{
    DepthRenderer, IntrusionEvent, KinematicChain, PrimitiveTag, ScenePrimitive, SimCell, Trajectory, Waypoint,
};
use crate::zones::{
    build_fence_mesh, build_zones, danger_boundary, mask_outline, ControlPointLabel, ControlPointSet, Polygon2D,
    ZonePartition,
};

/// Hold time for arms whose withdrawal is scheduled later.
const OPEN_ENDED: f64 = 1.0e6;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub seed: u64,
    pub run_id: String,
    /// The operator agent presses the buttons itself. Off when a console
    /// supplies them.
    pub operator_buttons: bool,
    /// Render and evaluate frames in baseline mode too.
    pub sense_always: bool,
}

impl RunOptions {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            run_id: format!("{mode}-{seed}"),
            operator_buttons: true,
            sense_always: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub time: f64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TaskStatus {
    Waiting,
    Active,
    Done,
}

/// What the operator is doing with their hands and feet.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Hands {
    Free,
    Starting {
        task: u8,
        at: f64,
    },
    Working {
        task: u8,
        parts_at: f64,
        done_at: f64,
        parts_added: bool,
    },
    Leaving {
        at: f64,
    },
    WalkingOut {
        until: f64,
    },
    Entering {
        task: u8,
        at: f64,
    },
    WalkingIn {
        task: u8,
        until: f64,
    },
    GuideStarting {
        at: f64,
    },
    Guiding {
        since: f64,
        arms_start: f64,
    },
    Withdrawing {
        until: f64,
    },
}

#[derive(Debug, Clone, Copy)]
struct ActiveSegment {
    index: usize,
    leg: usize,
}

#[derive(Debug, Clone, Copy)]
struct GuideRun {
    task: u8,
    finished: bool,
}

/// One assembly run: the cell, the monitor, the interaction state and the
/// operator, advanced one sensor frame per [`Session::step`].
pub struct Session {
    scenario: ScenarioConfig,
    config: RunConfig,
    options: RunOptions,
    cam: CameraModel,
    renderer: DepthRenderer,
    cell: SimCell,
    monitor: SafetyMonitor,
    state: SessionState,
    operator: OperatorAgent,
    tick: u64,
    frame_index: u64,
    tasks: BTreeMap<u8, TaskStatus>,
    segments_done: Vec<bool>,
    active: Option<ActiveSegment>,
    guide: Option<GuideRun>,
    hands: Hands,
    buttons: Vec<ButtonEvent>,
    prompt: Option<(Button, f64)>,
    anchors: Vec<Option<Node>>,
    prev_robot: Option<Vec<Vector3<f64>>>,
    last_prims: Vec<ScenePrimitive>,
    /// Render of the resting primitives, reused while they stay put.
    static_layer: (Vec<ScenePrimitive>, DepthImage),
    last_frame: DepthImage,
    zone_inputs: Option<(ControlPointSet, Vec<ControlPointSet>)>,
    zones: Option<ZonePartition>,
    last_report: Option<FrameReport>,
    log: Vec<VerdictLogLine>,
    events: Vec<SessionEvent>,
    confirm_acks: Vec<Vec<RegionId>>,
    frame_confirms: Vec<RegionId>,
    idle: f64,
    finished_at: Option<f64>,
    recorder: Option<Recorder>,
}

impl Session {
    pub fn new(scenario: ScenarioConfig, config: RunConfig, options: RunOptions) -> Result<Self, SessionError> {
        scenario.validate()?;
        config.validate()?;
        let cam = make_synthetic_camera(&config.camera)?;
        let renderer = DepthRenderer::new(&cam);
        let chain = KinematicChain::ur5();
        let home = scenario.pose(&scenario.robot.home)?.to_vec();
        if home.len() != chain.dof() {
            return Err(SessionError::Script(format!(
                "robot poses have {} joints, the arm has {}",
                home.len(),
                chain.dof()
            )));
        }
        let mut cell = SimCell::new(chain, home)?;
        for s in &scenario.statics {
            cell.add_object(&s.name, s.shape, s.pose.to_transform()?)?;
        }
        for o in &scenario.objects {
            cell.add_object(&o.name, o.shape, o.pose.to_transform()?)?;
        }
        let last_prims = cell.primitives();
        let model = renderer.render(&last_prims);
        let monitor = SafetyMonitor::new(model.clone(), config.monitor)?;
        let mut state = SessionState::new(options.mode);
        if options.mode == Mode::Baseline {
            state.phase = Phase::RobotRunning;
        }
        let anchors = scenario
            .intrusions
            .iter()
            .map(|x| scenario.anchor(&x.anchor))
            .collect::<Result<_, _>>()?;
        let tasks = scenario.tasks.iter().map(|t| (t.id, TaskStatus::Waiting)).collect();
        let segments_done = vec![false; scenario.segments.len()];
        let operator = OperatorAgent::new(config.operator, options.seed);
        let mut session = Self {
            scenario,
            config,
            options,
            cam,
            renderer,
            cell,
            monitor,
            state,
            operator,
            tick: 0,
            frame_index: 0,
            tasks,
            segments_done,
            active: None,
            guide: None,
            hands: Hands::Free,
            buttons: Vec::new(),
            prompt: None,
            anchors,
            prev_robot: None,
            static_layer: (Vec::new(), DepthImage::filled(1, 1, 0.0)),
            last_prims,
            last_frame: model,
            zone_inputs: None,
            zones: None,
            last_report: None,
            log: Vec::new(),
            events: Vec::new(),
            confirm_acks: Vec::new(),
            frame_confirms: Vec::new(),
            idle: 0.0,
            finished_at: None,
            recorder: None,
        };
        session.trigger(None, 0.0)?;
        Ok(session)
    }

    /// Records every frame from now on to `path` plus its two sidecar
    /// files. Must be called before the first step.
    pub fn record_to(&mut self, path: &Path) -> Result<(), SessionError> {
        if self.tick != 0 {
            return Err(SessionError::Recording(
                "recording must start before the first step".into(),
            ));
        }
        let header = RecordHeader {
            mode: self.options.mode,
            seed: self.options.seed,
            scenario: self.scenario.name.clone(),
            config: self.config.clone(),
        };
        self.recorder = Some(Recorder::create(path, &header, self.monitor.model())?);
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.config.dt()
    }

    pub fn mode(&self) -> Mode {
        self.options.mode
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn cell(&self) -> &SimCell {
        &self.cell
    }

    pub fn monitor(&self) -> &SafetyMonitor {
        &self.monitor
    }

    pub fn camera(&self) -> &CameraModel {
        &self.cam
    }

    pub fn zones(&self) -> Option<&ZonePartition> {
        self.zones.as_ref()
    }

    pub fn last_frame(&self) -> &DepthImage {
        &self.last_frame
    }

    pub fn last_report(&self) -> Option<&FrameReport> {
        self.last_report.as_ref()
    }

    pub fn verdict_log(&self) -> &[VerdictLogLine] {
        &self.log
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    /// Operator distance from the robot base, in meters.
    pub fn operator_distance(&self) -> f64 {
        self.operator.distance_at(self.time())
    }

    pub fn is_finished(&self) -> bool {
        self.finished_at.is_some()
    }

    /// Region ids confirmed since the last call, one entry per CONFIRM.
    pub fn take_confirm_acks(&mut self) -> Vec<Vec<RegionId>> {
        std::mem::take(&mut self.confirm_acks)
    }

    /// Queues a button edge; it takes effect at the first tick at or after
    /// its time.
    pub fn queue_button(&mut self, event: ButtonEvent) {
        let at = self.buttons.partition_point(|e| e.time <= event.time);
        self.buttons.insert(at, event);
    }

    pub fn metrics(&self) -> Option<RunMetrics> {
        self.finished_at.map(|t| RunMetrics {
            run_id: self.options.run_id.clone(),
            mode: self.options.mode,
            total_time_s: t,
            robot_idle_time_s: self.idle,
            halts: self.state.halts,
            confirmations: self.state.confirmations,
        })
    }

    /// Steps until every task is done.
    pub fn run(&mut self) -> Result<RunMetrics, SessionError> {
        while !self.step()? {}
        Ok(self.metrics().expect("finished"))
    }

    fn sensing(&self) -> bool {
        self.options.mode == Mode::Ar || self.options.sense_always || self.recorder.is_some()
    }

    fn note(&mut self, time: f64, message: impl Into<String>) {
        self.events.push(SessionEvent {
            time,
            message: message.into(),
        });
    }

    /// Advances one frame. Returns true once the run is complete.
    pub fn step(&mut self) -> Result<bool, SessionError> {
        if self.finished_at.is_some() {
            return Ok(true);
        }
        let dt = self.config.dt();
        let now = self.time();
        if now > self.config.max_time {
            return Err(SessionError::Timeout(self.config.max_time));
        }
        self.apply_buttons(now)?;
        if self.sensing() {
            self.sense()?;
        }
        let has_work = self.robot_has_work();
        let moved = self.advance_robot(now, dt)?;
        if has_work && !moved {
            self.idle += dt;
        }
        self.tick += 1;
        let after = self.time();
        self.update_operator(after)?;
        self.refresh_tasks();
        let t = self.cell.time();
        self.cell.intrusions_mut().prune(t);
        if self.all_done() {
            self.finished_at = Some(after);
            self.note(after, "all tasks done");
            if let Some(rec) = self.recorder.take() {
                rec.finish()?;
            }
        }
        Ok(self.finished_at.is_some())
    }

    /// Flushes a recording of a run that did not finish.
    pub fn finish_recording(&mut self) -> Result<(), SessionError> {
        match self.recorder.take() {
            Some(rec) => rec.finish(),
            None => Ok(()),
        }
    }

    fn apply_buttons(&mut self, now: f64) -> Result<(), SessionError> {
        let due = self.buttons.partition_point(|e| e.time <= now + 1e-9);
        let events: Vec<ButtonEvent> = self.buttons.drain(..due).collect();
        for ev in events {
            match self.state.handle_button(&ev) {
                ButtonEffect::None => {}
                ButtonEffect::Started => self.note(now, "GO: robot resumes"),
                ButtonEffect::Stopped => self.note(now, "STOP pressed"),
                ButtonEffect::Confirm(ids) => {
                    let confirmed = self.monitor.confirm_regions(&ids, &self.last_frame)?;
                    self.state.confirmed();
                    self.note(now, format!("CONFIRM: regions {ids:?} accepted"));
                    self.frame_confirms.extend_from_slice(&ids);
                    self.confirm_acks.push(confirmed);
                }
                ButtonEffect::GuideEnded => self.end_guide(now)?,
                ButtonEffect::Warning(w) => self.note(now, w),
            }
        }
        Ok(())
    }

    fn sense(&mut self) -> Result<(), SessionError> {
        // The robot zone spans the previous pose too, so pixels the arm has
        // just left are absorbed rather than seen as a change.
        let current = self.cell.robot_control_points();
        let mut points = current.points().to_vec();
        if let Some(prev) = self.prev_robot.replace(current.points().to_vec()) {
            points.extend(prev);
        }
        let robot = ControlPointSet::new(ControlPointLabel::Robot, points)?;
        let mut objects = self.cell.carried_control_points();
        if let Some(corridor) = self.corridor()? {
            objects.push(corridor);
        }
        let inputs = (robot, objects);
        if self.zone_inputs.as_ref() != Some(&inputs) {
            self.zones = Some(build_zones(&inputs.0, &inputs.1, &self.config.zones, &self.cam)?);
            self.zone_inputs = Some(inputs);
        }
        let prims = self.cell.primitives();
        if prims != self.last_prims {
            let (resting, moving): (Vec<ScenePrimitive>, Vec<ScenePrimitive>) =
                prims.iter().cloned().partition(|p| p.tag == PrimitiveTag::Static);
            if resting != self.static_layer.0 {
                let image = self.renderer.render(&resting);
                self.static_layer = (resting, image);
            }
            self.last_frame = self.renderer.render_over(&self.static_layer.1, &moving);
            self.last_prims = prims;
        }
        self.frame_index += 1;
        self.last_frame.frame_index = self.frame_index;
        let zones = self.zones.as_ref().expect("built above");
        let report = self.monitor.evaluate_frame(&self.last_frame, zones)?;
        if self.options.mode == Mode::Ar {
            let before = self.state.phase;
            self.state.apply_report(&report);
            if self.state.phase != before {
                let msg = match self.state.phase {
                    Phase::Halted => "HALT: change in the danger zone".to_string(),
                    Phase::AwaitingConfirmation => format!("awaiting confirmation of {:?}", self.state.blocking),
                    p => format!("phase {p:?}"),
                };
                self.note(self.time(), msg);
            }
        }
        let line = report.log_line();
        if let Some(rec) = &mut self.recorder {
            let (robot, objects) = self.zone_inputs.as_ref().expect("set above");
            let ann = FrameAnnotation::new(
                self.frame_index,
                robot,
                objects,
                std::mem::take(&mut self.frame_confirms),
            );
            rec.frame(&self.last_frame, &ann, &line)?;
        }
        self.frame_confirms.clear();
        self.log.push(line);
        self.last_report = Some(report);
        Ok(())
    }

    /// Box around the operator's arms while guiding; it joins the robot
    /// zone so the arms are not taken for an intrusion.
    fn corridor(&self) -> Result<Option<ControlPointSet>, SessionError> {
        let Some(g) = self.guide else { return Ok(None) };
        let cfg = self
            .scenario
            .task(g.task)
            .and_then(|t| t.guide.as_ref())
            .expect("guide task");
        let (lo, hi) = (vec3(cfg.corridor_min), vec3(cfg.corridor_max));
        let pose = RigidTransform::from_translation((lo + hi) * 0.5);
        let mut set = ControlPointSet::from_box(&pose, &((hi - lo) * 0.5));
        set = ControlPointSet::new(ControlPointLabel::Object, set.points().to_vec())?;
        Ok(Some(set))
    }

    fn node_done(&self, node: Node) -> bool {
        match node {
            Node::Task(id) => self.tasks.get(&id) == Some(&TaskStatus::Done),
            Node::Segment(i) => self.segments_done[i],
        }
    }

    fn deps_done(&self, node: Node) -> bool {
        self.scenario
            .dependencies(node, self.options.mode)
            .into_iter()
            .all(|d| self.node_done(d))
    }

    fn next_ready_segment(&self) -> Option<usize> {
        (0..self.scenario.segments.len()).find(|&i| {
            !self.segments_done[i]
                && self.scenario.segment_runs(i, self.options.mode)
                && self.active.is_none_or(|a| a.index != i)
                && self.deps_done(Node::Segment(i))
        })
    }

    /// A shared task whose guided part can begin.
    fn ready_guide_task(&self) -> Option<u8> {
        if self.options.mode != Mode::Ar {
            return None;
        }
        self.scenario
            .tasks
            .iter()
            .filter(|t| t.owner == Owner::Both && t.guide.is_some())
            .find(|t| self.tasks[&t.id] == TaskStatus::Waiting && self.deps_done(Node::Task(t.id)))
            .map(|t| t.id)
    }

    /// A task the operator can start by hand.
    fn ready_human_task(&self) -> Option<u8> {
        let mode = self.options.mode;
        self.scenario
            .tasks
            .iter()
            .filter(|t| t.owner == Owner::Human || (t.owner == Owner::Both && mode == Mode::Baseline))
            .find(|t| self.tasks[&t.id] == TaskStatus::Waiting && self.deps_done(Node::Task(t.id)))
            .map(|t| t.id)
    }

    fn robot_has_work(&self) -> bool {
        self.active.is_some()
            || self.guide.is_some()
            || self.next_ready_segment().is_some()
            || self.ready_guide_task().is_some()
    }

    fn all_done(&self) -> bool {
        self.active.is_none()
            && self.guide.is_none()
            && self.tasks.values().all(|s| *s == TaskStatus::Done)
            && (0..self.segments_done.len())
                .all(|i| self.segments_done[i] || !self.scenario.segment_runs(i, self.options.mode))
    }

    fn refresh_tasks(&mut self) {
        let mode = self.options.mode;
        for t in &self.scenario.tasks {
            if t.owner != Owner::Robot || self.tasks[&t.id] == TaskStatus::Done {
                continue;
            }
            let segs: Vec<usize> = t
                .segments
                .iter()
                .filter_map(|n| self.scenario.segment_index(n))
                .filter(|&i| self.scenario.segment_runs(i, mode))
                .collect();
            if segs.iter().all(|&i| self.segments_done[i]) {
                self.tasks.insert(t.id, TaskStatus::Done);
            } else if segs
                .iter()
                .any(|&i| self.segments_done[i] || self.active.is_some_and(|a| a.index == i))
            {
                self.tasks.insert(t.id, TaskStatus::Active);
            }
        }
        if let Some((&id, _)) = self.tasks.iter().find(|(_, s)| **s != TaskStatus::Done) {
            self.state.current_task = id;
        }
    }

    fn trigger(&mut self, anchor: Option<Node>, now: f64) -> Result<(), SessionError> {
        let mode = self.options.mode;
        for (x, a) in self.scenario.intrusions.iter().zip(&self.anchors) {
            if *a != anchor || !x.modes.contains(&mode) {
                continue;
            }
            let keys: Vec<_> = x.keys.iter().map(|k| (k.t, vec3(k.elbow), vec3(k.hand))).collect();
            self.cell
                .intrusions_mut()
                .push(IntrusionEvent::forearm(now + x.offset, &keys)?);
        }
        Ok(())
    }

    fn begin_leg(&mut self) -> Result<(), SessionError> {
        let a = self.active.expect("segment running");
        let leg = &self.scenario.segments[a.index].legs[a.leg];
        let target = self.scenario.pose(&leg.to)?.to_vec();
        let qs = [self.cell.q().to_vec(), target];
        let traj = Trajectory::timed(&qs, self.scenario.robot.joint_speed, self.scenario.robot.min_leg)?;
        self.cell.set_trajectory(traj)?;
        Ok(())
    }

    fn start_guide(&mut self, task: u8, now: f64) -> Result<(), SessionError> {
        let cfg = self
            .scenario
            .task(task)
            .and_then(|t| t.guide.clone())
            .expect("guide task");
        let target = self.scenario.pose(&cfg.to)?.to_vec();
        let traj = Trajectory::new(vec![
            Waypoint {
                q: self.cell.q().to_vec(),
                t: 0.0,
            },
            Waypoint {
                q: target,
                t: cfg.duration,
            },
        ])?;
        self.cell.set_trajectory(traj)?;
        self.state.phase = Phase::ForceGuide;
        self.guide = Some(GuideRun { task, finished: false });
        self.tasks.insert(task, TaskStatus::Active);
        self.trigger(Some(Node::Task(task)), now)?;
        self.note(
            now,
            format!("task {task}: force mode, waiting for the operator to guide"),
        );
        Ok(())
    }

    fn end_guide(&mut self, now: f64) -> Result<(), SessionError> {
        let Some(g) = self.guide.take() else { return Ok(()) };
        if !g.finished {
            self.cell.clear_trajectory();
            let cfg = self
                .scenario
                .task(g.task)
                .and_then(|t| t.guide.as_ref())
                .expect("guide task");
            if self.cell.object(&cfg.release).is_some_and(|o| o.is_grasped()) {
                self.cell.release(&cfg.release.clone())?;
            }
        }
        self.tasks.insert(g.task, TaskStatus::Done);
        self.note(now, format!("task {}: force mode ended", g.task));
        Ok(())
    }

    fn motion_enabled(&self, now: f64) -> bool {
        match self.options.mode {
            Mode::Ar => match self.guide {
                Some(g) if !g.finished => {
                    self.state.phase == Phase::ForceGuide
                        && matches!(self.hands, Hands::Guiding { since, .. } if now >= since)
                }
                Some(_) => false,
                None => self.state.phase == Phase::RobotRunning && self.active.is_some(),
            },
            Mode::Baseline => {
                self.active.is_some()
                    && self.state.motion_allowed()
                    && self.state.enable_held
                    && self.operator.distance_at(now) >= self.config.baseline.separation
            }
        }
    }

    fn advance_robot(&mut self, now: f64, dt: f64) -> Result<bool, SessionError> {
        if self.active.is_none() && self.guide.is_none() {
            if let Some(task) = self.ready_guide_task() {
                if self.state.phase == Phase::RobotRunning {
                    self.start_guide(task, now)?;
                }
            } else if let Some(i) = self.next_ready_segment() {
                self.active = Some(ActiveSegment { index: i, leg: 0 });
                self.begin_leg()?;
                self.trigger(Some(Node::Segment(i)), now)?;
                self.note(now, format!("segment {} ready", self.scenario.segments[i].name));
            }
        }
        let enabled = self.motion_enabled(now);
        let moved = self.cell.step(dt, enabled)?;
        if moved {
            self.check_motion(now, dt)?;
        }
        let end = now + dt;
        if let Some(mut a) = self.active {
            if self.cell.motion_done() {
                let leg = self.scenario.segments[a.index].legs[a.leg].clone();
                if let Some(name) = &leg.grasp {
                    self.cell.grasp(name)?;
                }
                if let Some(name) = &leg.release {
                    self.cell.release(name)?;
                }
                a.leg += 1;
                if a.leg < self.scenario.segments[a.index].legs.len() {
                    self.active = Some(a);
                    self.begin_leg()?;
                } else {
                    self.segments_done[a.index] = true;
                    self.active = None;
                    self.note(end, format!("segment {} done", self.scenario.segments[a.index].name));
                }
            }
        }
        if let Some(g) = &mut self.guide {
            if !g.finished && self.cell.motion_done() {
                g.finished = true;
                let task = g.task;
                let cfg = self
                    .scenario
                    .task(task)
                    .and_then(|t| t.guide.as_ref())
                    .expect("guide task");
                let name = cfg.release.clone();
                self.cell.release(&name)?;
                self.note(end, format!("task {task}: part guided into place"));
            }
        }
        Ok(moved)
    }

    fn check_motion(&self, now: f64, dt: f64) -> Result<(), SessionError> {
        let fail = |what: String| Err(SessionError::Invariant { time: now, what });
        if !self.state.motion_allowed() {
            return fail(format!("robot moved while {:?}", self.state.phase));
        }
        if self.options.mode == Mode::Baseline {
            let sep = self.config.baseline.separation;
            let d = self.operator.distance_at(now).min(self.operator.distance_at(now + dt));
            if !self.state.enable_held || d < sep {
                return fail(format!("robot moved with the operator {d:.2} m away"));
            }
        }
        Ok(())
    }

    fn arm_keys(&self, work_at: [f64; 3], side: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let p = self.operator.params();
        let work = vec3(work_at) + Vector3::new(0.0, side * p.hand_spacing, 0.0);
        let rest = Vector3::new(p.rest_x, work.y, work.z);
        let reach = Vector3::new(crate::simcell::FOREARM_LENGTH, 0.0, 0.0);
        (work, rest, reach)
    }

    /// Both forearms move along `(t, fraction of the way to the work)`.
    fn push_arms(&mut self, start: f64, work_at: [f64; 3], profile: &[(f64, f64)]) -> Result<(), SessionError> {
        for side in [-1.0, 1.0] {
            let (work, rest, reach) = self.arm_keys(work_at, side);
            let keys: Vec<_> = profile
                .iter()
                .map(|&(t, s)| {
                    let hand = rest + (work - rest) * s;
                    (t, hand - reach, hand)
                })
                .collect();
            self.cell.intrusions_mut().push(IntrusionEvent::forearm(start, &keys)?);
        }
        Ok(())
    }

    fn begin_work(&mut self, task: u8, now: f64) -> Result<(), SessionError> {
        let t = self.scenario.task(task).expect("known task");
        let (work_at, nominal) = match (&t.manual, t.owner) {
            (Some(m), Owner::Both) => (m.work_at, m.duration),
            _ => (t.work_at.expect("validated"), t.duration),
        };
        let d = self.operator.work_duration(nominal);
        let reach = self.operator.params().reach_time.min(0.25 * d);
        self.push_arms(now, work_at, &[(0.0, 0.0), (reach, 1.0), (d - reach, 1.0), (d, 0.0)])?;
        self.tasks.insert(task, TaskStatus::Active);
        self.trigger(Some(Node::Task(task)), now)?;
        self.hands = Hands::Working {
            task,
            parts_at: now + d - reach,
            done_at: now + d,
            parts_added: false,
        };
        self.note(now, format!("task {task}: operator starts ({d:.1} s)"));
        Ok(())
    }

    fn add_parts(&mut self, task: u8) -> Result<(), SessionError> {
        let t = self.scenario.task(task).expect("known task").clone();
        for part in &t.parts {
            self.cell
                .add_object(&part.name, part.shape, part.pose.to_transform()?)?;
        }
        if let (Some(m), Owner::Both) = (&t.manual, t.owner) {
            if self.cell.object(&m.place.name).is_some() {
                self.cell.remove_object(&m.place.name)?;
            }
            self.cell
                .add_object(&m.place.name, m.place.shape, m.place.pose.to_transform()?)?;
        }
        Ok(())
    }

    fn update_operator(&mut self, now: f64) -> Result<(), SessionError> {
        let presses = self.options.operator_buttons;
        match self.hands {
            Hands::Free => self.choose_next(now),
            Hands::Starting { task, at } if now >= at => self.begin_work(task, now)?,
            Hands::Working {
                task,
                parts_at,
                done_at,
                parts_added,
            } => {
                if !parts_added && now >= parts_at {
                    self.add_parts(task)?;
                    self.hands = Hands::Working {
                        task,
                        parts_at,
                        done_at,
                        parts_added: true,
                    };
                }
                if now >= done_at {
                    self.tasks.insert(task, TaskStatus::Done);
                    self.hands = Hands::Free;
                    self.note(now, format!("task {task}: done"));
                }
            }
            Hands::Leaving { at } if now >= at => {
                let until = self.operator.walk_to(self.config.baseline.remote_distance, now);
                self.hands = Hands::WalkingOut { until };
            }
            Hands::WalkingOut { until } if now >= until => {
                if presses {
                    self.queue_button(ButtonEvent::press(Button::Enable, now));
                }
                self.hands = Hands::Free;
            }
            Hands::Entering { task, at } if now >= at => {
                if presses {
                    self.queue_button(ButtonEvent::release(Button::Enable, now));
                }
                let until = self.operator.walk_to(self.operator.station_distance(), now);
                self.hands = Hands::WalkingIn { task, until };
            }
            Hands::WalkingIn { task, until } if now >= until => self.begin_work(task, now)?,
            Hands::GuideStarting { at } if now >= at => {
                let work_at = self
                    .guide
                    .and_then(|g| self.scenario.task(g.task))
                    .and_then(|t| t.guide.as_ref())
                    .map(|g| g.work_at);
                match work_at {
                    Some(w) => {
                        let reach = self.operator.params().reach_time;
                        self.push_arms(now, w, &[(0.0, 0.0), (reach, 1.0), (OPEN_ENDED, 1.0)])?;
                        self.hands = Hands::Guiding {
                            since: now + reach,
                            arms_start: now,
                        };
                    }
                    None => self.hands = Hands::Free,
                }
            }
            Hands::Guiding { arms_start, .. } if self.guide.is_none_or(|g| g.finished) => {
                let work_at = self.arm_work_point(arms_start);
                self.cell
                    .intrusions_mut()
                    .retain(|e| e.start != arms_start || e.end() < arms_start + OPEN_ENDED);
                let reach = self.operator.params().reach_time;
                if let Some(w) = work_at {
                    self.push_arms(now, w, &[(0.0, 1.0), (reach, 0.0)])?;
                }
                self.hands = Hands::Withdrawing { until: now + reach };
            }
            Hands::Withdrawing { until } if now >= until => self.hands = Hands::Free,
            _ => {}
        }
        if self.options.mode == Mode::Ar && presses {
            self.update_prompt(now);
        }
        Ok(())
    }

    /// Center between the hands of the open-ended arm pair started at
    /// `arms_start`.
    fn arm_work_point(&self, arms_start: f64) -> Option<[f64; 3]> {
        let hands: Vec<Vector3<f64>> = self
            .cell
            .intrusions()
            .events()
            .iter()
            .filter(|e| e.start == arms_start && e.end() >= arms_start + OPEN_ENDED)
            .map(|e| {
                let pose = e.pose_at(e.end());
                pose.apply(&Vector3::new(0.0, 0.0, crate::simcell::FOREARM_LENGTH))
            })
            .collect();
        (!hands.is_empty()).then(|| {
            let c = hands.iter().sum::<Vector3<f64>>() / hands.len() as f64;
            [c.x, c.y, c.z]
        })
    }

    fn choose_next(&mut self, now: f64) {
        let task = self.ready_human_task();
        match self.options.mode {
            Mode::Ar => {
                if let Some(task) = task {
                    let at = now + self.operator.reaction_latency();
                    self.hands = Hands::Starting { task, at };
                } else if self.guide.is_some_and(|g| !g.finished) && self.state.phase == Phase::ForceGuide {
                    let at = now + self.operator.reaction_latency();
                    self.hands = Hands::GuideStarting { at };
                }
            }
            Mode::Baseline => {
                if self.operator.is_walking(now) {
                    return;
                }
                let inside = self.operator.distance_at(now) < self.config.baseline.separation;
                match task {
                    Some(task) if inside => {
                        let at = now + self.operator.reaction_latency();
                        self.hands = Hands::Starting { task, at };
                    }
                    Some(task) => {
                        let at = now + self.operator.reaction_latency();
                        self.hands = Hands::Entering { task, at };
                    }
                    None if inside && self.robot_has_work() => {
                        let at = now + self.operator.reaction_latency();
                        self.hands = Hands::Leaving { at };
                    }
                    None => {}
                }
            }
        }
    }

    fn desired_prompt(&self) -> Option<Button> {
        match self.state.phase {
            Phase::Idle if self.robot_has_work() => Some(Button::Go),
            Phase::Halted if self.last_report.as_ref().is_some_and(|r| !r.is_halt()) => Some(Button::Go),
            Phase::AwaitingConfirmation => Some(Button::Confirm),
            Phase::ForceGuide if self.guide.is_some_and(|g| g.finished) && self.hands == Hands::Free => {
                Some(Button::Go)
            }
            _ => None,
        }
    }

    /// The operator answers a prompt one reaction time after it appears by
    /// holding ENABLE and tapping the requested button.
    fn update_prompt(&mut self, now: f64) {
        match (self.prompt, self.desired_prompt()) {
            (Some((b, at)), Some(want)) if b == want => {
                if now >= at {
                    for ev in [
                        ButtonEvent::press(Button::Enable, now),
                        ButtonEvent::press(b, now),
                        ButtonEvent::release(b, now),
                        ButtonEvent::release(Button::Enable, now),
                    ] {
                        self.queue_button(ev);
                    }
                    self.prompt = None;
                }
            }
            (_, Some(want)) => self.prompt = Some((want, now + self.operator.reaction_latency())),
            (_, None) => self.prompt = None,
        }
    }

    /// Console view of the current frame.
    pub fn snapshot(&self, with_fence: bool) -> Snapshot {
        let verts = |p: &Polygon2D| p.vertices.iter().map(|v: &Point2<f64>| [v.x, v.y]).collect::<Vec<_>>();
        let boundary = self.zones.as_ref().and_then(|z| danger_boundary(z).ok());
        let fence = match (&boundary, with_fence) {
            (Some(b), true) => build_fence_mesh(b, &self.config.zones, &self.cam).ok(),
            _ => None,
        };
        let phase = self.state.phase;
        Snapshot {
            schema_version: SCHEMA_VERSION,
            frame_index: self.frame_index,
            time: self.time(),
            phase,
            current_task: self.state.current_task,
            status_text: self.state.status_text(),
            buttons: ButtonStates {
                enable_held: self.state.enable_held,
                go_enabled: matches!(phase, Phase::Idle | Phase::Halted | Phase::ForceGuide),
                confirm_enabled: phase == Phase::AwaitingConfirmation,
            },
            danger_boundary: boundary.as_ref().map(verts).unwrap_or_default(),
            robot_outline: self
                .zones
                .as_ref()
                .and_then(|z| mask_outline(z.robot()))
                .as_ref()
                .map(verts)
                .unwrap_or_default(),
            pending: self
                .monitor
                .ledger()
                .unverified()
                .map(|r| PendingOutline {
                    id: r.id,
                    outline: mask_outline(&r.mask).as_ref().map(verts).unwrap_or_default(),
                })
                .collect(),
            fence,
        }
    }
}
