use serde::{Deserialize, Serialize};

use crate::monitor::{FrameReport, RegionId, SafetyVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Ar,
    Baseline,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ar" => Ok(Mode::Ar),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode {other:?}, expected ar or baseline")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ar => "ar",
            Mode::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    RobotRunning,
    Halted,
    AwaitingConfirmation,
    ForceGuide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Button {
    Go,
    Stop,
    Confirm,
    Enable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Press,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButtonEvent {
    pub button: Button,
    pub edge: Edge,
    pub time: f64,
}

impl ButtonEvent {
    pub fn press(button: Button, time: f64) -> Self {
        Self {
            button,
            edge: Edge::Press,
            time,
        }
    }

    pub fn release(button: Button, time: f64) -> Self {
        Self {
            button,
            edge: Edge::Release,
            time,
        }
    }
}

/// What a button event asks of the rest of the session.
#[derive(Debug, Clone, PartialEq)]
pub enum ButtonEffect {
    None,
    Started,
    Stopped,
    /// Confirm these regions with the monitor, then call
    /// [`SessionState::confirmed`].
    Confirm(Vec<RegionId>),
    /// GO in force mode: the operator hands control back to the robot.
    GuideEnded,
    Warning(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub mode: Mode,
    pub phase: Phase,
    /// Phase to return to when leaving Halted or AwaitingConfirmation.
    pub resume_to: Phase,
    pub current_task: u8,
    pub pending: Vec<RegionId>,
    pub blocking: Vec<RegionId>,
    pub enable_held: bool,
    pub halts: u32,
    pub confirmations: u32,
}

impl SessionState {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            phase: Phase::Idle,
            resume_to: Phase::RobotRunning,
            current_task: 1,
            pending: Vec::new(),
            blocking: Vec::new(),
            enable_held: false,
            halts: 0,
            confirmations: 0,
        }
    }

    /// Robot motion is allowed in these phases only.
    pub fn motion_allowed(&self) -> bool {
        matches!(self.phase, Phase::RobotRunning | Phase::ForceGuide)
    }

    fn resumable(phase: Phase) -> Phase {
        match phase {
            Phase::ForceGuide => Phase::ForceGuide,
            _ => Phase::RobotRunning,
        }
    }

    pub fn halt(&mut self) {
        if self.phase != Phase::Halted {
            self.resume_to = Self::resumable(self.phase);
            self.phase = Phase::Halted;
            self.blocking.clear();
            self.halts += 1;
        }
    }

    pub fn handle_button(&mut self, event: &ButtonEvent) -> ButtonEffect {
        match (event.button, event.edge) {
            (Button::Enable, edge) => {
                self.enable_held = edge == Edge::Press;
                ButtonEffect::None
            }
            (Button::Stop, Edge::Press) => {
                self.halt();
                ButtonEffect::Stopped
            }
            (Button::Go, Edge::Press) => {
                if !self.enable_held {
                    return ButtonEffect::Warning("GO ignored: hold ENABLE".into());
                }
                match self.phase {
                    Phase::Idle | Phase::Halted => {
                        self.phase = self.resume_to;
                        ButtonEffect::Started
                    }
                    Phase::ForceGuide => {
                        self.phase = Phase::RobotRunning;
                        ButtonEffect::GuideEnded
                    }
                    other => ButtonEffect::Warning(format!("GO ignored in {other:?}")),
                }
            }
            (Button::Confirm, Edge::Press) => {
                if !self.enable_held {
                    return ButtonEffect::Warning("CONFIRM ignored: hold ENABLE".into());
                }
                if self.phase == Phase::AwaitingConfirmation {
                    ButtonEffect::Confirm(self.blocking.clone())
                } else {
                    ButtonEffect::Warning(format!("CONFIRM ignored in {:?}", self.phase))
                }
            }
            (_, Edge::Release) => ButtonEffect::None,
        }
    }

    /// The monitor accepted a confirmation covering the blocking regions.
    pub fn confirmed(&mut self) {
        if self.phase == Phase::AwaitingConfirmation {
            self.phase = self.resume_to;
            self.blocking.clear();
            self.confirmations += 1;
        }
    }

    /// Applies one frame's verdicts. A halt takes effect from any phase; a
    /// confirmation request only stops a robot that is allowed to move.
    pub fn apply_report(&mut self, report: &FrameReport) {
        self.pending = report.pending.clone();
        if report.is_halt() {
            self.halt();
            return;
        }
        for verdict in &report.verdicts {
            if let SafetyVerdict::AwaitConfirmation { ids } = verdict {
                match self.phase {
                    Phase::RobotRunning | Phase::ForceGuide => {
                        self.resume_to = self.phase;
                        self.phase = Phase::AwaitingConfirmation;
                        self.blocking = ids.clone();
                    }
                    Phase::AwaitingConfirmation => self.blocking = ids.clone(),
                    Phase::Idle | Phase::Halted => {}
                }
            }
        }
    }

    /// Short operator-facing status line.
    pub fn status_text(&self) -> String {
        match self.phase {
            Phase::Idle => "ready".into(),
            Phase::RobotRunning => format!("robot running, task {}", self.current_task),
            Phase::Halted => "HALT: change in the danger zone. Hold ENABLE and press GO to resume".into(),
            Phase::AwaitingConfirmation => format!(
                "changed regions {:?} block the robot. Hold ENABLE and press CONFIRM",
                self.blocking
            ),
            Phase::ForceGuide => "force mode: guide the shaft into place, then ENABLE+GO".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zones::BinaryMask;

    fn press(b: Button) -> ButtonEvent {
        ButtonEvent::press(b, 0.0)
    }

    fn report(verdicts: Vec<SafetyVerdict>) -> FrameReport {
        FrameReport {
            frame_index: 1,
            verdicts,
            clusters: Vec::new(),
            pending: vec![3],
        }
    }

    #[test]
    fn go_needs_enable() {
        let mut s = SessionState::new(Mode::Ar);
        assert!(matches!(s.handle_button(&press(Button::Go)), ButtonEffect::Warning(_)));
        assert_eq!(s.phase, Phase::Idle);
        s.handle_button(&press(Button::Enable));
        assert_eq!(s.handle_button(&press(Button::Go)), ButtonEffect::Started);
        assert_eq!(s.phase, Phase::RobotRunning);
    }

    #[test]
    fn stop_needs_nothing_and_go_resumes() {
        let mut s = SessionState::new(Mode::Ar);
        s.phase = Phase::RobotRunning;
        assert_eq!(s.handle_button(&press(Button::Stop)), ButtonEffect::Stopped);
        assert_eq!((s.phase, s.halts), (Phase::Halted, 1));
        s.handle_button(&press(Button::Go));
        assert_eq!(s.phase, Phase::Halted);
        s.handle_button(&press(Button::Enable));
        s.handle_button(&ButtonEvent::release(Button::Enable, 0.1));
        s.handle_button(&press(Button::Go));
        assert_eq!(s.phase, Phase::Halted);
        s.handle_button(&press(Button::Enable));
        s.handle_button(&press(Button::Go));
        assert_eq!(s.phase, Phase::RobotRunning);
    }

    #[test]
    fn halt_from_every_phase_and_force_guide_resumes() {
        for phase in [
            Phase::Idle,
            Phase::RobotRunning,
            Phase::AwaitingConfirmation,
            Phase::ForceGuide,
            Phase::Halted,
        ] {
            let mut s = SessionState::new(Mode::Ar);
            s.phase = phase;
            s.apply_report(&report(vec![SafetyVerdict::Halt { clusters: vec![0] }]));
            assert_eq!(s.phase, Phase::Halted);
        }
        let mut s = SessionState::new(Mode::Ar);
        s.phase = Phase::ForceGuide;
        s.apply_report(&report(vec![SafetyVerdict::Halt { clusters: vec![0] }]));
        s.enable_held = true;
        s.handle_button(&press(Button::Go));
        assert_eq!(s.phase, Phase::ForceGuide);
        assert_eq!(s.handle_button(&press(Button::Go)), ButtonEffect::GuideEnded);
        assert_eq!(s.phase, Phase::RobotRunning);
    }

    #[test]
    fn await_then_confirm() {
        let mut s = SessionState::new(Mode::Ar);
        s.phase = Phase::RobotRunning;
        s.apply_report(&report(vec![
            SafetyVerdict::UpdateModel {
                pixels: BinaryMask::new(1, 1),
            },
            SafetyVerdict::AwaitConfirmation { ids: vec![3] },
        ]));
        assert_eq!(s.phase, Phase::AwaitingConfirmation);
        assert!(!s.motion_allowed());
        assert!(matches!(
            s.handle_button(&press(Button::Confirm)),
            ButtonEffect::Warning(_)
        ));
        s.handle_button(&press(Button::Enable));
        assert_eq!(s.handle_button(&press(Button::Confirm)), ButtonEffect::Confirm(vec![3]));
        s.confirmed();
        assert_eq!((s.phase, s.confirmations), (Phase::RobotRunning, 1));
    }

    #[test]
    fn await_ignored_when_robot_is_not_moving() {
        let mut s = SessionState::new(Mode::Ar);
        s.apply_report(&report(vec![SafetyVerdict::AwaitConfirmation { ids: vec![3] }]));
        assert_eq!(s.phase, Phase::Idle);
        assert_eq!(s.status_text(), "ready");
    }
}
