//! Recording a run as a depth stream with per-frame annotations, and
//! replaying it through a fresh monitor.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::RunConfig;
use super::state::Mode;
use super::SessionError;
use crate::geometry::{make_synthetic_camera, DepthImage};
use crate::monitor::{RegionId, SafetyMonitor, VerdictLogLine};
use crate::simcell::{DepthStreamReader, DepthStreamWriter};
use crate::zones::{build_zones, ControlPointLabel, ControlPointSet};

/// First line of the annotations file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub mode: Mode,
    pub seed: u64,
    pub scenario: String,
    pub config: RunConfig,
}

/// Zone inputs and operator confirmations behind one recorded frame.
/// Confirmations were applied against the previous frame before this one
/// was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub frame: u64,
    pub robot: Vec<[f64; 3]>,
    pub objects: Vec<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub confirm: Vec<RegionId>,
}

impl FrameAnnotation {
    pub fn new(frame: u64, robot: &ControlPointSet, objects: &[ControlPointSet], confirm: Vec<RegionId>) -> Self {
        let pts = |s: &ControlPointSet| s.points().iter().map(|p| [p.x, p.y, p.z]).collect();
        Self {
            frame,
            robot: pts(robot),
            objects: objects.iter().map(pts).collect(),
            confirm,
        }
    }

    fn sets(&self) -> Result<(ControlPointSet, Vec<ControlPointSet>), SessionError> {
        let set =
            |label, raw: &[[f64; 3]]| ControlPointSet::new(label, raw.iter().map(|p| Vector3::from(*p)).collect());
        let robot = set(ControlPointLabel::Robot, &self.robot)?;
        let objects = self
            .objects
            .iter()
            .map(|o| set(ControlPointLabel::Object, o))
            .collect::<Result<_, _>>()?;
        Ok((robot, objects))
    }
}

fn with_suffix(stream: &Path, suffix: &str) -> PathBuf {
    let mut s = stream.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn annotations_path(stream: &Path) -> PathBuf {
    with_suffix(stream, ".annotations.jsonl")
}

pub fn verdicts_path(stream: &Path) -> PathBuf {
    with_suffix(stream, ".verdicts.log")
}

pub(crate) struct Recorder {
    stream: DepthStreamWriter<BufWriter<File>>,
    annotations: BufWriter<File>,
    verdicts: BufWriter<File>,
}

impl Recorder {
    /// Creates the three files and writes the initial model as frame 0.
    pub fn create(path: &Path, header: &RecordHeader, model: &DepthImage) -> Result<Self, SessionError> {
        let out = BufWriter::new(File::create(path)?);
        let mut stream = DepthStreamWriter::new(out, model.width(), model.height())?;
        stream.write_frame(model)?;
        let mut annotations = BufWriter::new(File::create(annotations_path(path))?);
        serde_json::to_writer(&mut annotations, header).map_err(|e| SessionError::Recording(e.to_string()))?;
        writeln!(annotations)?;
        let verdicts = BufWriter::new(File::create(verdicts_path(path))?);
        Ok(Self {
            stream,
            annotations,
            verdicts,
        })
    }

    pub fn frame(
        &mut self,
        frame: &DepthImage,
        annotation: &FrameAnnotation,
        line: &VerdictLogLine,
    ) -> Result<(), SessionError> {
        self.stream.write_frame(frame)?;
        serde_json::to_writer(&mut self.annotations, annotation).map_err(|e| SessionError::Recording(e.to_string()))?;
        writeln!(self.annotations)?;
        writeln!(self.verdicts, "{line}")?;
        Ok(())
    }

    pub fn finish(self) -> Result<(), SessionError> {
        self.stream.finish()?.flush()?;
        self.annotations.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        self.verdicts.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub header: RecordHeader,
    /// Parameters that differ from the ones the stream was recorded with.
    pub param_diffs: Vec<String>,
    pub lines: Vec<VerdictLogLine>,
}

/// A replay that stopped early; `lines` holds the frames evaluated so far.
#[derive(Debug, Error)]
#[error("replay stopped after {} frames: {source}", lines.len())]
pub struct ReplayError {
    pub lines: Vec<VerdictLogLine>,
    #[source]
    pub source: SessionError,
}

fn param_diffs(recorded: &RunConfig, used: &RunConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut cmp = |name: &str, a: String, b: String| {
        if a != b {
            out.push(format!("{name}: recorded {a}, replayed {b}"));
        }
    };
    cmp("camera", format!("{:?}", recorded.camera), format!("{:?}", used.camera));
    cmp("zones", format!("{:?}", recorded.zones), format!("{:?}", used.zones));
    cmp(
        "monitor",
        format!("{:?}", recorded.monitor),
        format!("{:?}", used.monitor),
    );
    out
}

/// Re-evaluates a recorded stream. `config` overrides the recorded camera,
/// zone and monitor parameters; any difference is reported. With changed
/// parameters the region ids drift, so a recorded CONFIRM confirms whatever
/// the replayed monitor is blocking on at that frame.
pub fn replay<R: Read>(stream: R, annotations: &str, config: Option<&RunConfig>) -> Result<ReplayOutput, ReplayError> {
    let mut lines = Vec::new();
    let fail = |lines: Vec<VerdictLogLine>, source: SessionError| ReplayError { lines, source };
    let mut text = annotations.lines().filter(|l| !l.trim().is_empty());
    let header: RecordHeader = match text.next().map(serde_json::from_str) {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(fail(lines, SessionError::Recording(format!("bad header: {e}")))),
        None => return Err(fail(lines, SessionError::Recording("empty annotations".into()))),
    };
    let cfg = config.cloned().unwrap_or_else(|| header.config.clone());
    let param_diffs = param_diffs(&header.config, &cfg);

    let result = (|| -> Result<(), SessionError> {
        let cam = make_synthetic_camera(&cfg.camera)?;
        let mut reader = DepthStreamReader::new(stream)?;
        if (reader.width(), reader.height()) != (cam.width(), cam.height()) {
            return Err(SessionError::Recording(format!(
                "stream is {}x{}, camera is {}x{}",
                reader.width(),
                reader.height(),
                cam.width(),
                cam.height()
            )));
        }
        let model = reader
            .next_frame()
            .ok_or_else(|| SessionError::Recording("stream has no model frame".into()))??;
        let mut monitor = SafetyMonitor::new(model.clone(), cfg.monitor)?;
        let mut previous = model;
        let mut blocking: Vec<RegionId> = Vec::new();
        for raw in text {
            let ann: FrameAnnotation =
                serde_json::from_str(raw).map_err(|e| SessionError::Recording(format!("bad annotation: {e}")))?;
            let mut frame = reader
                .next_frame()
                .ok_or_else(|| SessionError::Recording(format!("no frame for annotation {}", ann.frame)))??;
            frame.frame_index = ann.frame;
            if !ann.confirm.is_empty() {
                let ids = if param_diffs.is_empty() {
                    &ann.confirm
                } else {
                    &blocking
                };
                if !ids.is_empty() {
                    monitor.confirm_regions(ids, &previous)?;
                }
            }
            let (robot, objects) = ann.sets()?;
            let zones = build_zones(&robot, &objects, &cfg.zones, &cam)?;
            let report = monitor.evaluate_frame(&frame, &zones)?;
            blocking = report.awaiting().map(<[RegionId]>::to_vec).unwrap_or_default();
            lines.push(report.log_line());
            previous = frame;
        }
        Ok(())
    })();
    match result {
        Ok(()) => Ok(ReplayOutput {
            header,
            param_diffs,
            lines,
        }),
        Err(source) => Err(fail(lines, source)),
    }
}
