use serde::{Deserialize, Serialize};

use crate::zones::BinaryMask;

pub type RegionId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionStatus {
    Unverified,
    Confirmed,
}

/// A human-zone change the model has not absorbed yet.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingRegion {
    pub id: RegionId,
    pub mask: BinaryMask,
    pub created_frame: u64,
    pub status: RegionStatus,
}

/// Pending regions of one session. Ids are assigned in increasing order and
/// never reused.
#[derive(Debug, Clone, Default)]
pub struct RegionLedger {
    regions: Vec<PendingRegion>,
    next_id: RegionId,
}

impl RegionLedger {
    pub fn regions(&self) -> &[PendingRegion] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn get(&self, id: RegionId) -> Option<&PendingRegion> {
        self.regions.iter().find(|r| r.id == id)
    }

    pub(crate) fn get_mut(&mut self, id: RegionId) -> Option<&mut PendingRegion> {
        self.regions.iter_mut().find(|r| r.id == id)
    }

    pub fn unverified(&self) -> impl Iterator<Item = &PendingRegion> {
        self.regions.iter().filter(|r| r.status == RegionStatus::Unverified)
    }

    pub fn unverified_ids(&self) -> Vec<RegionId> {
        self.unverified().map(|r| r.id).collect()
    }

    /// Keeps only the `survivors` and appends one new region per mask in
    /// `fresh`. Confirmed regions are dropped.
    pub(crate) fn rebuild(&mut self, survivors: &[RegionId], fresh: Vec<BinaryMask>, frame: u64) {
        self.regions.retain(|r| survivors.contains(&r.id));
        for mask in fresh {
            self.regions.push(PendingRegion {
                id: self.next_id,
                mask,
                created_frame: frame,
                status: RegionStatus::Unverified,
            });
            self.next_id += 1;
        }
    }
}
