use std::fmt;
use std::str::FromStr;

use super::RegionId;

/// Single verdict token of a log line. The ordering is the priority used
/// when a frame produced several verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VerdictKind {
    None,
    Update,
    Record,
    Await,
    Halt,
}

impl VerdictKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictKind::None => "NONE",
            VerdictKind::Update => "UPDATE",
            VerdictKind::Record => "RECORD",
            VerdictKind::Await => "AWAIT",
            VerdictKind::Halt => "HALT",
        }
    }
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VerdictKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "NONE" => VerdictKind::None,
            "UPDATE" => VerdictKind::Update,
            "RECORD" => VerdictKind::Record,
            "AWAIT" => VerdictKind::Await,
            "HALT" => VerdictKind::Halt,
            other => return Err(format!("unknown verdict {other:?}")),
        })
    }
}

/// `frame=<n> verdict=<KIND> clusters=<k> pending=<id,id,...>`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictLogLine {
    pub frame: u64,
    pub verdict: VerdictKind,
    pub clusters: usize,
    pub pending: Vec<RegionId>,
}

impl fmt::Display for VerdictLogLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pending: Vec<String> = self.pending.iter().map(ToString::to_string).collect();
        write!(
            f,
            "frame={} verdict={} clusters={} pending={}",
            self.frame,
            self.verdict,
            self.clusters,
            pending.join(",")
        )
    }
}

impl FromStr for VerdictLogLine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut fields = s.trim().split(' ');
        let mut take = |key: &str| -> Result<&str, String> {
            fields
                .next()
                .and_then(|f| f.strip_prefix(key)?.strip_prefix('='))
                .ok_or_else(|| format!("expected {key}= in {s:?}"))
        };
        let frame = take("frame")?.parse().map_err(|e| format!("frame: {e}"))?;
        let verdict = take("verdict")?.parse()?;
        let clusters = take("clusters")?.parse().map_err(|e| format!("clusters: {e}"))?;
        let pending_raw = take("pending")?;
        let pending = if pending_raw.is_empty() {
            Vec::new()
        } else {
            pending_raw
                .split(',')
                .map(|t| t.parse().map_err(|e| format!("pending: {e}")))
                .collect::<Result<_, _>>()?
        };
        if fields.next().is_some() {
            return Err(format!("trailing fields in {s:?}"));
        }
        Ok(VerdictLogLine {
            frame,
            verdict,
            clusters,
            pending,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let line = VerdictLogLine {
            frame: 12,
            verdict: VerdictKind::Await,
            clusters: 3,
            pending: vec![0, 4],
        };
        let text = line.to_string();
        assert_eq!(text, "frame=12 verdict=AWAIT clusters=3 pending=0,4");
        assert_eq!(text.parse::<VerdictLogLine>().unwrap(), line);
        let empty: VerdictLogLine = "frame=0 verdict=NONE clusters=0 pending=".parse().unwrap();
        assert!(empty.pending.is_empty());
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!("frame=1 verdict=STOP clusters=0 pending="
            .parse::<VerdictLogLine>()
            .is_err());
        assert!("frame=1 verdict=HALT".parse::<VerdictLogLine>().is_err());
        assert!("clusters=1 frame=1 verdict=HALT pending="
            .parse::<VerdictLogLine>()
            .is_err());
    }

    #[test]
    fn halt_outranks_everything() {
        assert!(VerdictKind::Halt > VerdictKind::Await);
        assert!(VerdictKind::Await > VerdictKind::Record);
        assert!(VerdictKind::Record > VerdictKind::Update);
        assert!(VerdictKind::Update > VerdictKind::None);
    }
}
