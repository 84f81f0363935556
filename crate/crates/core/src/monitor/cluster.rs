use serde::{Deserialize, Serialize};

use super::MonitorParams;
use crate::zones::BinaryMask;

/// Which zones a cluster touches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneHits {
    pub in_danger: bool,
    pub in_robot: bool,
    pub in_human: bool,
}

/// An ε-connected group of changed pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeCluster {
    /// Row-major linear pixel indices, ascending.
    indices: Vec<usize>,
    width: u32,
    pub zone_hits: ZoneHits,
}

impl ChangeCluster {
    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.indices.iter().map(move |&i| ((i % w) as u32, (i / w) as u32))
    }

    pub fn to_mask(&self, height: u32) -> BinaryMask {
        let mut m = BinaryMask::new(self.width, height);
        for &i in &self.indices {
            m.set_index(i, true);
        }
        m
    }
}

/// Pixel offsets within Euclidean distance `epsilon`, excluding the origin.
pub fn neighborhood(epsilon: f64) -> Vec<(i32, i32)> {
    let reach = epsilon.floor() as i32;
    let eps2 = epsilon * epsilon;
    let mut offsets = Vec::new();
    for dv in -reach..=reach {
        for du in -reach..=reach {
            if (du, dv) != (0, 0) && f64::from(du * du + dv * dv) <= eps2 {
                offsets.push((du, dv));
            }
        }
    }
    offsets
}

/// Horizontal run of set pixels `u0..=u1` in row `v`.
#[derive(Debug, Clone, Copy)]
struct Run {
    v: u32,
    u0: u32,
    u1: u32,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Splits the set bits of `mask` into ε-connected components and drops
/// components smaller than `min_cluster_size`. Clusters are ordered by their
/// first pixel in row-major order.
///
/// Works on horizontal runs: two runs within `reach` rows of each other
/// join when their spans, widened by the horizontal slack ε allows at that
/// row offset, overlap.
pub fn cluster_changes(mask: &BinaryMask, params: &MonitorParams) -> Vec<ChangeCluster> {
    let w = mask.width() as usize;
    let mut runs: Vec<Run> = Vec::new();
    for i in mask.iter_indices() {
        let (u, v) = ((i % w) as u32, (i / w) as u32);
        match runs.last_mut() {
            Some(r) if r.v == v && r.u1 + 1 == u => r.u1 = u,
            _ => runs.push(Run { v, u0: u, u1: u }),
        }
    }
    if runs.is_empty() {
        return Vec::new();
    }

    // First run of every row, plus a sentinel.
    let h = mask.height() as usize;
    let mut row_start = vec![0usize; h + 1];
    for r in &runs {
        row_start[r.v as usize + 1] += 1;
    }
    for v in 0..h {
        row_start[v + 1] += row_start[v];
    }

    let reach = params.epsilon.floor() as u32;
    let eps2 = params.epsilon * params.epsilon;
    let slack: Vec<u32> = (0..=reach)
        .map(|dv| (eps2 - f64::from(dv * dv)).max(0.0).sqrt().floor() as u32)
        .collect();
    let mut parent: Vec<usize> = (0..runs.len()).collect();
    for (a, ra) in runs.iter().enumerate() {
        for dv in 0..=reach {
            let v = ra.v + dv;
            if v as usize >= h {
                break;
            }
            let du = slack[dv as usize];
            let lo = ra.u0.saturating_sub(du);
            let hi = ra.u1 + du;
            let candidates = if dv == 0 {
                a + 1..row_start[v as usize + 1]
            } else {
                row_start[v as usize]..row_start[v as usize + 1]
            };
            for b in candidates {
                let rb = runs[b];
                if rb.u0 > hi {
                    break;
                }
                if rb.u1 >= lo {
                    let (x, y) = (find(&mut parent, a), find(&mut parent, b));
                    if x != y {
                        parent[x.max(y)] = x.min(y);
                    }
                }
            }
        }
    }

    // Roots are the lowest run index of their component, so visiting runs
    // in order lists clusters by first pixel and their pixels ascending.
    let mut slot = vec![usize::MAX; runs.len()];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (k, r) in runs.iter().enumerate() {
        let root = find(&mut parent, k);
        if slot[root] == usize::MAX {
            slot[root] = members.len();
            members.push(Vec::new());
        }
        let base = r.v as usize * w;
        members[slot[root]].extend(base + r.u0 as usize..=base + r.u1 as usize);
    }
    members
        .into_iter()
        .filter(|m| m.len() >= params.min_cluster_size)
        .map(|indices| ChangeCluster {
            indices,
            width: mask.width(),
            zone_hits: ZoneHits::default(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(min: usize) -> MonitorParams {
        MonitorParams {
            min_cluster_size: min,
            ..MonitorParams::default()
        }
    }

    #[test]
    fn isolated_pixel_is_noise() {
        let mut m = BinaryMask::new(16, 16);
        m.set(5, 5, true);
        assert!(cluster_changes(&m, &params(8)).is_empty());
        assert_eq!(cluster_changes(&m, &params(1)).len(), 1);
    }

    #[test]
    fn solid_block_is_one_cluster() {
        let m = BinaryMask::from_fn(32, 32, |u, v| (10..20).contains(&u) && (3..13).contains(&v));
        let c = cluster_changes(&m, &params(8));
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].size(), 100);
    }

    #[test]
    fn diagonal_pixels_connect_at_default_epsilon() {
        let m = BinaryMask::from_fn(8, 8, |u, v| u == v);
        assert_eq!(cluster_changes(&m, &params(1)).len(), 1);
        let four_connected = MonitorParams {
            epsilon: 1.0,
            min_cluster_size: 1,
            ..MonitorParams::default()
        };
        assert_eq!(cluster_changes(&m, &four_connected).len(), 8);
    }

    #[test]
    fn neighborhood_sizes() {
        assert_eq!(neighborhood(1.0).len(), 4);
        assert_eq!(neighborhood(1.5).len(), 8);
        assert_eq!(neighborhood(2.0).len(), 12);
    }
}
