//! Relation-based relative pose error and the relations file format.

use crate::pose::{normalize_angle, relative, Pose2D};
use std::fmt::{self, Write as _};
use thiserror::Error;

/// Default tolerance when associating a relation timestamp with a pose.
pub const DEFAULT_TIME_TOLERANCE: f64 = 0.1;

/// Ground-truth relative motion between the poses at `t_i` and `t_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relation {
    pub t_i: f64,
    pub t_j: f64,
    pub delta_gt: Pose2D,
}

impl Relation {
    pub fn new(t_i: f64, t_j: f64, delta_gt: Pose2D) -> Self {
        Self { t_i, t_j, delta_gt }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub t_i: f64,
    pub t_j: f64,
    pub trans: f64,
    pub rot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub eps_trans: f64,
    pub eps_rot: f64,
    pub eps_trans_sq: f64,
    pub eps_rot_sq: f64,
    pub residuals: Vec<Residual>,
    /// Relations that contributed.
    pub count: usize,
    /// Relations whose timestamps had no pose within tolerance.
    pub skipped: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no relation could be matched to the trajectory")]
    NoResolvableRelations,
    #[error("relations file has no valid relations ({} malformed lines)", .0.len())]
    NoValidRelations(Vec<LineError>),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Timestamped trajectory sorted by time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<Pose2D>,
}

impl Trajectory {
    pub fn new(mut samples: Vec<(f64, Pose2D)>) -> Self {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (stamps, poses) = samples.into_iter().unzip();
        Self { stamps, poses }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, Pose2D)> + '_ {
        self.stamps.iter().copied().zip(self.poses.iter().copied())
    }

    /// Pose with the closest timestamp, if it is within `tolerance`.
    pub fn nearest(&self, t: f64, tolerance: f64) -> Option<Pose2D> {
        let k = self.stamps.partition_point(|&s| s < t);
        [k.checked_sub(1), (k < self.stamps.len()).then_some(k)]
            .into_iter()
            .flatten()
            .map(|i| ((self.stamps[i] - t).abs(), i))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .filter(|&(d, _)| d <= tolerance)
            .map(|(_, i)| self.poses[i])
    }

    /// Applies `g ⊕ ξ` to every pose.
    pub fn transformed(&self, g: &Pose2D) -> Self {
        Self {
            stamps: self.stamps.clone(),
            poses: self.poses.iter().map(|p| g.compose(p)).collect(),
        }
    }

    /// "t x y θ" lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (t, p) in self.iter() {
            let _ = writeln!(s, "{t:.6} {:.9} {:.9} {:.9}", p.x, p.y, p.theta);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, LineError> {
        let mut samples = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = parse_numbers(line).map_err(|message| LineError { line: n + 1, message })?;
            if v.len() != 4 {
                return Err(LineError {
                    line: n + 1,
                    message: format!("expected 4 fields, found {}", v.len()),
                });
            }
            samples.push((v[0], Pose2D::new(v[1], v[2], v[3])));
        }
        Ok(Self::new(samples))
    }
}

impl FromIterator<(f64, Pose2D)> for Trajectory {
    fn from_iter<I: IntoIterator<Item = (f64, Pose2D)>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Translational and rotational size of a residual; the angle is wrapped
/// before taking its magnitude.
pub fn trans_rot(delta: &Pose2D) -> (f64, f64) {
    (delta.translation_norm(), normalize_angle(delta.theta).abs())
}

pub fn evaluate(trajectory: &Trajectory, relations: &[Relation]) -> Result<ErrorReport, EvalError> {
    evaluate_with_tolerance(trajectory, relations, DEFAULT_TIME_TOLERANCE)
}

/// Mean translational and rotational residuals (and their squares) over
/// the relations whose endpoints resolve to trajectory poses.
pub fn evaluate_with_tolerance(
    trajectory: &Trajectory,
    relations: &[Relation],
    tolerance: f64,
) -> Result<ErrorReport, EvalError> {
    let mut residuals = Vec::with_capacity(relations.len());
    let mut skipped = 0;
    for rel in relations {
        match (trajectory.nearest(rel.t_i, tolerance), trajectory.nearest(rel.t_j, tolerance)) {
            (Some(xi), Some(xj)) => {
                let est = relative(&xj, &xi);
                let (trans, rot) = trans_rot(&relative(&est, &rel.delta_gt));
                residuals.push(Residual {
                    t_i: rel.t_i,
                    t_j: rel.t_j,
                    trans,
                    rot,
                });
            }
            _ => skipped += 1,
        }
    }
    if residuals.is_empty() {
        return Err(EvalError::NoResolvableRelations);
    }
    let n = residuals.len() as f64;
    let mean = |f: &dyn Fn(&Residual) -> f64| residuals.iter().map(f).sum::<f64>() / n;
    Ok(ErrorReport {
        eps_trans: mean(&|r| r.trans),
        eps_rot: mean(&|r| r.rot),
        eps_trans_sq: mean(&|r| r.trans * r.trans),
        eps_rot_sq: mean(&|r| r.rot * r.rot),
        count: residuals.len(),
        skipped,
        residuals,
    })
}

fn parse_numbers(line: &str) -> Result<Vec<f64>, String> {
    line.split_whitespace()
        .map(|f| f.parse::<f64>().map_err(|_| format!("not a number: {f:?}")))
        .collect()
}

/// Parses relation lines. Accepts "t_i t_j dx dy dθ" and the 8-column
/// Radish form "t_i t_j x y z roll pitch yaw" (z, roll, pitch ignored).
/// Returns the valid relations plus the diagnostics of malformed lines.
pub fn parse_relations_lenient(text: &str) -> (Vec<Relation>, Vec<LineError>) {
    let mut rels = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| LineError { line: n + 1, message };
        let v = match parse_numbers(line) {
            Ok(v) => v,
            Err(e) => {
                errors.push(err(e));
                continue;
            }
        };
        let delta = match v.len() {
            5 => Pose2D::new(v[2], v[3], v[4]),
            8 => Pose2D::new(v[2], v[3], v[7]),
            k => {
                errors.push(err(format!("expected 5 or 8 fields, found {k}")));
                continue;
            }
        };
        if !(v[0] < v[1]) {
            errors.push(err(format!("t_i {} is not before t_j {}", v[0], v[1])));
            continue;
        }
        rels.push(Relation::new(v[0], v[1], delta));
    }
    (rels, errors)
}

/// Like [`parse_relations_lenient`] but fails when nothing valid was found
/// and at least one line was malformed. A file with only comments parses
/// to an empty list.
pub fn parse_relations(text: &str) -> Result<(Vec<Relation>, Vec<LineError>), EvalError> {
    let (rels, errors) = parse_relations_lenient(text);
    if rels.is_empty() && !errors.is_empty() {
        return Err(EvalError::NoValidRelations(errors));
    }
    Ok((rels, errors))
}

pub fn serialize_relations(relations: &[Relation]) -> String {
    let mut s = String::new();
    for r in relations {
        let _ = writeln!(
            s,
            "{:?} {:?} {:?} {:?} {:?}",
            r.t_i, r.t_j, r.delta_gt.x, r.delta_gt.y, r.delta_gt.theta
        );
    }
    s
}

impl ErrorReport {
    pub fn trans_std(&self) -> f64 {
        (self.eps_trans_sq - self.eps_trans * self.eps_trans).max(0.0).sqrt()
    }

    pub fn rot_std(&self) -> f64 {
        (self.eps_rot_sq - self.eps_rot * self.eps_rot).max(0.0).sqrt()
    }

    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        format!(
            "eps_trans={:.9}\neps_rot={:.9}\neps_trans_sq={:.9}\neps_rot_sq={:.9}\nrelations={}\nskipped={}\n",
            self.eps_trans, self.eps_rot, self.eps_trans_sq, self.eps_rot_sq, self.count, self.skipped
        )
    }
}

impl fmt::Display for ErrorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14}{:>12}{:>12}{:>14}", "", "mean", "std", "mean square")?;
        writeln!(
            f,
            "{:<14}{:>12.4}{:>12.4}{:>14.6}",
            "trans [m]",
            self.eps_trans,
            self.trans_std(),
            self.eps_trans_sq
        )?;
        writeln!(
            f,
            "{:<14}{:>12.4}{:>12.4}{:>14.6}",
            "rot [rad]",
            self.eps_rot,
            self.rot_std(),
            self.eps_rot_sq
        )?;
        writeln!(f, "relations: {} used, {} skipped", self.count, self.skipped)
    }
}
