//! Per-frame safety monitoring against the stored workspace depth model.
//!
//! Each frame is differenced against the model and the changed pixels are
//! clustered to reject sensor noise. The danger zone is tested first over
//! every surviving cluster: any hit halts the robot and nothing else happens
//! that frame. Otherwise robot-zone changes are written into the model and
//! human-zone changes become pending regions, which block the robot once its
//! zone reaches them until an operator confirms them.

mod cluster;
mod ledger;
mod log;

pub use cluster::{cluster_changes, neighborhood, ChangeCluster, ZoneHits};
pub use ledger::{PendingRegion, RegionId, RegionLedger, RegionStatus};
pub use log::{VerdictKind, VerdictLogLine};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::DepthImage;
use crate::zones::{BinaryMask, Zone, ZonePartition};

/// Fraction of a pending region's pixels that must still differ from the
/// model for the region to carry over to the next frame.
pub const REGION_PERSISTENCE: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("dimension mismatch: {what} is {got:?}, expected {expected:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (u32, u32),
        got: (u32, u32),
    },
    #[error("unknown pending region {0}")]
    UnknownRegion(RegionId),
    #[error("invalid monitor parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorParams {
    /// Depth change, in meters, that counts as a change.
    pub tau: f64,
    /// Clustering neighborhood radius in pixels.
    pub epsilon: f64,
    /// Clusters smaller than this are treated as sensor noise.
    pub min_cluster_size: usize,
}

impl Default for MonitorParams {
    fn default() -> Self {
        Self {
            tau: 0.05,
            epsilon: 1.5,
            min_cluster_size: 8,
        }
    }
}

impl MonitorParams {
    pub fn validate(&self) -> Result<(), MonitorError> {
        let ok = self.tau > 0.0 && self.tau.is_finite();
        if ok && self.epsilon >= 1.0 && self.epsilon.is_finite() && self.min_cluster_size >= 1 {
            Ok(())
        } else {
            Err(MonitorError::InvalidParams(format!("{self:?}")))
        }
    }
}

/// Sets every pixel where both images have a return and their depths differ
/// by at least `tau`.
pub fn detect_changes(model: &DepthImage, frame: &DepthImage, tau: f64) -> Result<BinaryMask, MonitorError> {
    if !model.same_shape(frame) {
        return Err(MonitorError::DimensionMismatch {
            what: "frame",
            expected: (model.width(), model.height()),
            got: (frame.width(), frame.height()),
        });
    }
    let (a, b) = (model.as_slice(), frame.as_slice());
    Ok(BinaryMask::from_word_fn(model.width(), model.height(), |base, n| {
        let (a, b) = (&a[base..base + n], &b[base..base + n]);
        if a == b {
            return 0;
        }
        a.iter().zip(b).enumerate().fold(0u64, |bits, (k, (&x, &y))| {
            let changed = x > 0.0 && y > 0.0 && (f64::from(x) - f64::from(y)).abs() >= tau;
            bits | u64::from(changed) << k
        })
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SafetyVerdict {
    /// A change reached the danger zone. Indices into the frame's clusters.
    Halt { clusters: Vec<usize> },
    /// Robot-zone pixels copied from the frame into the model.
    UpdateModel { pixels: BinaryMask },
    /// Clusters touching the human zone, and the pending regions now held.
    RecordHumanChange {
        clusters: Vec<usize>,
        regions: Vec<RegionId>,
    },
    /// Unconfirmed regions overlapped by the robot's zones.
    AwaitConfirmation { ids: Vec<RegionId> },
}

impl SafetyVerdict {
    pub fn kind(&self) -> VerdictKind {
        match self {
            SafetyVerdict::Halt { .. } => VerdictKind::Halt,
            SafetyVerdict::UpdateModel { .. } => VerdictKind::Update,
            SafetyVerdict::RecordHumanChange { .. } => VerdictKind::Record,
            SafetyVerdict::AwaitConfirmation { .. } => VerdictKind::Await,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameReport {
    pub frame_index: u64,
    /// Halt, when present, is the only verdict.
    pub verdicts: Vec<SafetyVerdict>,
    pub clusters: Vec<ChangeCluster>,
    pub pending: Vec<RegionId>,
}

impl FrameReport {
    pub fn is_halt(&self) -> bool {
        matches!(self.verdicts.first(), Some(SafetyVerdict::Halt { .. }))
    }

    pub fn awaiting(&self) -> Option<&[RegionId]> {
        self.verdicts.iter().find_map(|v| match v {
            SafetyVerdict::AwaitConfirmation { ids } => Some(ids.as_slice()),
            _ => None,
        })
    }

    pub fn log_line(&self) -> VerdictLogLine {
        let verdict = self
            .verdicts
            .iter()
            .map(SafetyVerdict::kind)
            .max()
            .unwrap_or(VerdictKind::None);
        VerdictLogLine {
            frame: self.frame_index,
            verdict,
            clusters: self.clusters.len(),
            pending: self.pending.clone(),
        }
    }
}

/// Owns the workspace model and the pending-region ledger of one session.
#[derive(Debug, Clone)]
pub struct SafetyMonitor {
    params: MonitorParams,
    model: DepthImage,
    ledger: RegionLedger,
}

impl SafetyMonitor {
    pub fn new(model: DepthImage, params: MonitorParams) -> Result<Self, MonitorError> {
        params.validate()?;
        Ok(Self {
            params,
            model,
            ledger: RegionLedger::default(),
        })
    }

    pub fn params(&self) -> &MonitorParams {
        &self.params
    }

    pub fn model(&self) -> &DepthImage {
        &self.model
    }

    pub fn ledger(&self) -> &RegionLedger {
        &self.ledger
    }

    fn check_shape(&self, frame: &DepthImage, zones: &ZonePartition) -> Result<(), MonitorError> {
        let expected = (self.model.width(), self.model.height());
        if !self.model.same_shape(frame) {
            return Err(MonitorError::DimensionMismatch {
                what: "frame",
                expected,
                got: (frame.width(), frame.height()),
            });
        }
        if (zones.width(), zones.height()) != expected {
            return Err(MonitorError::DimensionMismatch {
                what: "zone partition",
                expected,
                got: (zones.width(), zones.height()),
            });
        }
        Ok(())
    }

    /// Runs the zone-conditioned decision for one frame.
    pub fn evaluate_frame(&mut self, frame: &DepthImage, zones: &ZonePartition) -> Result<FrameReport, MonitorError> {
        self.check_shape(frame, zones)?;
        let changes = detect_changes(&self.model, frame, self.params.tau)?;
        let mut clusters = cluster_changes(&changes, &self.params);

        // Regions recorded earlier that are still visible explain their own
        // pixels wherever the zones have since moved.
        let mut explained = BinaryMask::new(frame.width(), frame.height());
        let mut survivors = Vec::new();
        for r in self.ledger.unverified() {
            let still = r.mask.intersection_count(&changes) as f64;
            if still >= REGION_PERSISTENCE * r.mask.count_ones() as f64 {
                explained.or_assign(&r.mask).expect("region masks match the frame");
                survivors.push(r.id);
            }
        }

        // Danger test over every clustered pixel before anything else.
        let mut halting = Vec::new();
        for (ci, cluster) in clusters.iter_mut().enumerate() {
            let mut hits = ZoneHits::default();
            let mut unexplained_danger = false;
            for &i in cluster.indices() {
                match zones.zone_at_index(i) {
                    Zone::Danger => {
                        hits.in_danger = true;
                        unexplained_danger |= !explained.get_index(i);
                    }
                    Zone::Robot => hits.in_robot = true,
                    Zone::Human => hits.in_human = true,
                }
            }
            cluster.zone_hits = hits;
            if unexplained_danger {
                halting.push(ci);
            }
        }
        if !halting.is_empty() {
            return Ok(FrameReport {
                frame_index: frame.frame_index,
                verdicts: vec![SafetyVerdict::Halt { clusters: halting }],
                pending: self.ledger.unverified_ids(),
                clusters,
            });
        }

        let mut verdicts = Vec::new();
        let mut absorbed = BinaryMask::new(frame.width(), frame.height());
        let mut human_clusters = Vec::new();
        let mut fresh = Vec::new();
        for (ci, cluster) in clusters.iter().enumerate() {
            let mut human_pixels = Vec::new();
            for &i in cluster.indices() {
                if explained.get_index(i) {
                    continue;
                }
                match zones.zone_at_index(i) {
                    Zone::Robot => absorbed.set_index(i, true),
                    Zone::Human => human_pixels.push(i),
                    Zone::Danger => unreachable!("danger pixels halted above"),
                }
            }
            if cluster.zone_hits.in_human {
                human_clusters.push(ci);
            }
            if human_pixels.len() >= self.params.min_cluster_size {
                let mut mask = BinaryMask::new(frame.width(), frame.height());
                human_pixels.iter().for_each(|&i| mask.set_index(i, true));
                fresh.push(mask);
            }
        }

        if !absorbed.is_empty() {
            let model = self.model.as_mut_slice();
            for i in absorbed.iter_indices() {
                model[i] = frame.as_slice()[i];
            }
            verdicts.push(SafetyVerdict::UpdateModel { pixels: absorbed });
        }

        self.ledger.rebuild(&survivors, fresh, frame.frame_index);
        if !human_clusters.is_empty() {
            verdicts.push(SafetyVerdict::RecordHumanChange {
                clusters: human_clusters,
                regions: self.ledger.unverified_ids(),
            });
        }

        let reach = zones.robot_or_danger();
        let blocking: Vec<RegionId> = self
            .ledger
            .unverified()
            .filter(|r| r.mask.intersects(&reach))
            .map(|r| r.id)
            .collect();
        if !blocking.is_empty() {
            verdicts.push(SafetyVerdict::AwaitConfirmation { ids: blocking });
        }

        Ok(FrameReport {
            frame_index: frame.frame_index,
            verdicts,
            clusters,
            pending: self.ledger.unverified_ids(),
        })
    }

    /// Copies the pixels of the listed regions from `frame` into the model
    /// and marks them confirmed. Fails without side effects if any id is
    /// unknown; ids that are already confirmed are skipped.
    pub fn confirm_regions(&mut self, ids: &[RegionId], frame: &DepthImage) -> Result<Vec<RegionId>, MonitorError> {
        if !self.model.same_shape(frame) {
            return Err(MonitorError::DimensionMismatch {
                what: "frame",
                expected: (self.model.width(), self.model.height()),
                got: (frame.width(), frame.height()),
            });
        }
        if let Some(&missing) = ids.iter().find(|id| self.ledger.get(**id).is_none()) {
            return Err(MonitorError::UnknownRegion(missing));
        }
        let mut confirmed = Vec::new();
        for &id in ids {
            let region = self.ledger.get_mut(id).expect("checked above");
            if region.status == RegionStatus::Confirmed {
                continue;
            }
            region.status = RegionStatus::Confirmed;
            let model = self.model.as_mut_slice();
            for i in region.mask.iter_indices() {
                model[i] = frame.as_slice()[i];
            }
            confirmed.push(id);
        }
        Ok(confirmed)
    }
}
