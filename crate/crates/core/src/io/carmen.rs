//! Carmen log reading and writing (`FLASER`, `ODOM`, `PARAM`).

use crate::eval::LineError;
use crate::pose::{Pose2D, Scan, ScanPoint};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarmenConfig {
    /// Angular coverage of one sweep, degrees.
    pub fov_deg: f64,
    /// Bearing of the first reading, degrees; `None` centres the sweep on
    /// the heading.
    pub start_deg: Option<f64>,
}

impl Default for CarmenConfig {
    fn default() -> Self {
        Self {
            fov_deg: 180.0,
            start_deg: None,
        }
    }
}

impl CarmenConfig {
    pub fn start_rad(&self) -> f64 {
        self.start_deg.unwrap_or(-self.fov_deg / 2.0).to_radians()
    }

    /// Bearing of reading `k` out of `n`; readings are spaced `fov / n`.
    pub fn bearing(&self, k: usize, n: usize) -> f64 {
        self.start_rad() + k as f64 * self.fov_deg.to_radians() / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    Laser,
    Odometry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub kind: EntryKind,
    /// Empty for odometry-only entries.
    pub scan: Scan,
    pub odom_pose: Pose2D,
    pub timestamp: f64,
}

impl LogEntry {
    pub fn laser(scan: Scan, odom_pose: Pose2D) -> Self {
        let timestamp = scan.timestamp;
        Self {
            kind: EntryKind::Laser,
            scan,
            odom_pose,
            timestamp,
        }
    }

    pub fn odometry(odom_pose: Pose2D, timestamp: f64) -> Self {
        Self {
            kind: EntryKind::Odometry,
            scan: Scan::new(Vec::new(), timestamp),
            odom_pose,
            timestamp,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CarmenError {
    #[error("log contains no laser entries ({} malformed lines)", .0.len())]
    NoLaserEntries(Vec<LineError>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLog {
    pub entries: Vec<LogEntry>,
    pub diagnostics: Vec<LineError>,
    /// Field of view in effect after `PARAM` lines.
    pub config: CarmenConfig,
}

impl ParsedLog {
    pub fn laser_entries(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(|e| e.kind == EntryKind::Laser)
    }
}

fn numbers(fields: &[&str]) -> Result<Vec<f64>, String> {
    fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|_| format!("not a number: {f:?}")))
        .collect()
}

fn parse_flaser(fields: &[&str], cfg: &CarmenConfig) -> Result<LogEntry, String> {
    let n: usize = fields
        .first()
        .ok_or("missing reading count")?
        .parse()
        .map_err(|_| format!("bad reading count {:?}", fields[0]))?;
    // n ranges, laser pose, odometry pose, timestamp, host, log timestamp
    if fields.len() < 1 + n + 7 {
        return Err(format!("expected {} readings plus 7 pose/time fields, found {} fields", n, fields.len() - 1));
    }
    let ranges = numbers(&fields[1..1 + n])?;
    let tail = numbers(&fields[1 + n..1 + n + 7])?;
    let points = ranges
        .iter()
        .enumerate()
        .map(|(k, &r)| ScanPoint::new(r, cfg.bearing(k, n)))
        .collect();
    let odom = Pose2D::new(tail[3], tail[4], tail[5]);
    Ok(LogEntry::laser(Scan::new(points, tail[6]), odom))
}

fn parse_odom(fields: &[&str]) -> Result<LogEntry, String> {
    // x y θ tv rv accel timestamp host log_timestamp
    if fields.len() < 7 {
        return Err(format!("expected at least 7 fields, found {}", fields.len()));
    }
    let v = numbers(&fields[..7])?;
    Ok(LogEntry::odometry(Pose2D::new(v[0], v[1], v[2]), v[6]))
}

/// Parses a Carmen log. Unknown line types are skipped; malformed known
/// lines become diagnostics. `PARAM laser_front_laser_fov` and
/// `PARAM laser_front_laser_start` override `cfg` for later lines.
pub fn parse_carmen(text: &str, cfg: &CarmenConfig) -> Result<ParsedLog, CarmenError> {
    let mut cfg = *cfg;
    let mut entries = Vec::new();
    let mut diagnostics = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let Some((&tag, rest)) = fields.split_first() else {
            continue;
        };
        let parsed = match tag {
            "FLASER" => parse_flaser(rest, &cfg).map(Some),
            "ODOM" => parse_odom(rest).map(Some),
            "PARAM" => match rest {
                ["laser_front_laser_fov", v, ..] => v.parse().map(|v| cfg.fov_deg = v).map(|_| None).map_err(|_| format!("bad fov {v:?}")),
                ["laser_front_laser_start", v, ..] => {
                    v.parse().map(|v| cfg.start_deg = Some(v)).map(|_| None).map_err(|_| format!("bad start angle {v:?}"))
                }
                _ => Ok(None),
            },
            _ => Ok(None),
        };
        match parsed {
            Ok(Some(e)) => entries.push(e),
            Ok(None) => {}
            Err(message) => diagnostics.push(LineError { line: n + 1, message }),
        }
    }
    if !entries.iter().any(|e| e.kind == EntryKind::Laser) {
        return Err(CarmenError::NoLaserEntries(diagnostics));
    }
    Ok(ParsedLog {
        entries,
        diagnostics,
        config: cfg,
    })
}

/// Writes entries back as `FLASER`/`ODOM` lines, preceded by `PARAM` lines
/// describing `cfg`. The laser pose field repeats the odometry pose.
pub fn serialize_carmen(entries: &[LogEntry], cfg: &CarmenConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "PARAM laser_front_laser_fov {} corrslam 0", cfg.fov_deg);
    if let Some(start) = cfg.start_deg {
        let _ = writeln!(s, "PARAM laser_front_laser_start {start} corrslam 0");
    }
    for e in entries {
        let p = e.odom_pose;
        match e.kind {
            EntryKind::Laser => {
                let _ = write!(s, "FLASER {}", e.scan.len());
                for pt in &e.scan.points {
                    let _ = write!(s, " {:.4}", pt.range);
                }
                let _ = writeln!(
                    s,
                    " {x:.6} {y:.6} {t:.6} {x:.6} {y:.6} {t:.6} {ts:.6} corrslam {ts:.6}",
                    x = p.x,
                    y = p.y,
                    t = p.theta,
                    ts = e.timestamp
                );
            }
            EntryKind::Odometry => {
                let _ = writeln!(
                    s,
                    "ODOM {:.6} {:.6} {:.6} 0 0 0 {ts:.6} corrslam {ts:.6}",
                    p.x,
                    p.y,
                    p.theta,
                    ts = e.timestamp
                );
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flaser_example() {
        let log = parse_carmen("FLASER 3 1.0 2.0 3.0 0 0 0 0 0 0 5.0 h 5.0", &CarmenConfig::default()).unwrap();
        let e = &log.entries[0];
        assert_eq!(e.kind, EntryKind::Laser);
        assert_eq!(e.scan.points.iter().map(|p| p.range).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(e.odom_pose, Pose2D::identity());
        assert_eq!(e.timestamp, 5.0);
        assert!((e.scan.points[0].angle + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn odom_example() {
        let text = "ODOM 1 2 0.5 0 0 0 7.0 h 7.0\nFLASER 1 1.0 0 0 0 0 0 0 8.0 h 8.0\n";
        let log = parse_carmen(text, &CarmenConfig::default()).unwrap();
        assert_eq!(log.entries[0].kind, EntryKind::Odometry);
        assert_eq!(log.entries[0].odom_pose, Pose2D::new(1.0, 2.0, 0.5));
        assert_eq!(log.entries[0].timestamp, 7.0);
    }

    #[test]
    fn unknown_lines_skipped_and_bad_lines_reported() {
        let text = "# header\nROBOTLASER1 whatever\nFLASER 2 1.0\nFLASER 1 1.0 0 0 0 0 0 0 1.0 h 1.0\n";
        let log = parse_carmen(text, &CarmenConfig::default()).unwrap();
        assert_eq!(log.entries.len(), 1);
        assert_eq!(log.diagnostics.len(), 1);
        assert_eq!(log.diagnostics[0].line, 3);
    }

    #[test]
    fn no_laser_entries_is_fatal() {
        assert!(matches!(
            parse_carmen("ODOM 1 2 0.5 0 0 0 7.0 h 7.0", &CarmenConfig::default()),
            Err(CarmenError::NoLaserEntries(_))
        ));
    }

    #[test]
    fn param_sets_field_of_view() {
        let text = "PARAM laser_front_laser_fov 360 h 0\nFLASER 4 1 1 1 1 0 0 0 0 0 0 1.0 h 1.0\n";
        let log = parse_carmen(text, &CarmenConfig::default()).unwrap();
        let angles: Vec<f64> = log.entries[0].scan.points.iter().map(|p| p.angle).collect();
        let pi = std::f64::consts::PI;
        for (a, b) in angles.iter().zip([-pi, -pi / 2.0, 0.0, pi / 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(log.config.fov_deg, 360.0);
    }

    #[test]
    fn round_trip_within_printed_precision() {
        let cfg = CarmenConfig::default();
        let entries = vec![
            LogEntry::odometry(Pose2D::new(0.123456, -2.5, 0.75), 0.5),
            LogEntry::laser(
                Scan::new((0..5).map(|k| ScanPoint::new(1.0 + k as f64 * 0.3333, cfg.bearing(k, 5))).collect(), 1.25),
                Pose2D::new(1.0, 2.0, -0.3),
            ),
        ];
        let back = parse_carmen(&serialize_carmen(&entries, &cfg), &cfg).unwrap();
        assert_eq!(back.entries.len(), 2);
        for (a, b) in entries.iter().zip(&back.entries) {
            assert_eq!(a.kind, b.kind);
            assert!((a.timestamp - b.timestamp).abs() < 1e-6);
            assert!((a.odom_pose.x - b.odom_pose.x).abs() < 1e-6);
            assert!((a.odom_pose.theta - b.odom_pose.theta).abs() < 1e-6);
            for (p, q) in a.scan.points.iter().zip(&b.scan.points) {
                assert!((p.range - q.range).abs() < 1e-4);
                assert!((p.angle - q.angle).abs() < 1e-12);
            }
        }
    }
}
