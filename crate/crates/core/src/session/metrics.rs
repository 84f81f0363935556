use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::state::Mode;

pub const METRICS_CSV_HEADER: &str = "run_id,mode,total_time_s,robot_idle_time_s,halts,confirmations";

/// Outcome of one completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub mode: Mode,
    pub total_time_s: f64,
    /// Time the robot had work it was not allowed to do.
    pub robot_idle_time_s: f64,
    pub halts: u32,
    pub confirmations: u32,
}

impl RunMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.3},{:.3},{},{}",
            self.run_id, self.mode, self.total_time_s, self.robot_idle_time_s, self.halts, self.confirmations
        )
    }
}

pub fn write_metrics_csv<W: Write>(mut out: W, rows: &[RunMetrics]) -> io::Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
