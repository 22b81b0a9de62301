//! Line-segment worlds, a ray-cast LiDAR and scripted trajectories with
//! seeded sensor and odometry noise.

use super::carmen::{CarmenConfig, LogEntry};
use crate::eval::{Relation, Trajectory};
use crate::pose::{relative, Pose2D, Scan, ScanPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Segment {
    pub fn new(a: (f64, f64), b: (f64, f64)) -> Self {
        Self { a, b }
    }

    /// Distance along the unit ray from `o` with direction `d`, if it hits.
    fn intersect(&self, o: (f64, f64), d: (f64, f64)) -> Option<f64> {
        let e = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let denom = d.0 * e.1 - d.1 * e.0;
        if denom.abs() < 1e-12 {
            return None;
        }
        let w = (self.a.0 - o.0, self.a.1 - o.1);
        let t = (w.0 * e.1 - w.1 * e.0) / denom;
        let u = (w.0 * d.1 - w.1 * d.0) / denom;
        (t > 1e-9 && (-1e-12..=1.0 + 1e-12).contains(&u)).then_some(t)
    }
}

/// Closed axis-aligned rectangle as four segments.
pub fn rectangle(min: (f64, f64), max: (f64, f64)) -> [Segment; 4] {
    [
        Segment::new(min, (max.0, min.1)),
        Segment::new((max.0, min.1), max),
        Segment::new(max, (min.0, max.1)),
        Segment::new((min.0, max.1), min),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarModel {
    pub max_range: f64,
    pub beams: usize,
    pub fov_deg: f64,
    pub range_noise_std: f64,
}

impl LidarModel {
    pub fn carmen_config(&self) -> CarmenConfig {
        CarmenConfig {
            fov_deg: self.fov_deg,
            start_deg: None,
        }
    }
}

/// Per-step odometry error: Gaussian terms proportional to the motion plus
/// a deterministic heading bias per meter travelled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdometryNoise {
    pub trans_per_m: f64,
    pub rot_per_rad: f64,
    pub rot_per_m: f64,
    pub rot_bias_per_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub segments: Vec<Segment>,
    pub lidar: LidarModel,
    pub trajectory: Vec<Pose2D>,
    /// Seconds between poses.
    pub dt: f64,
    pub odometry: OdometryNoise,
    /// Index gaps at which ground-truth relations are emitted.
    pub relation_gaps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub log: Vec<LogEntry>,
    pub carmen: CarmenConfig,
    pub ground_truth: Trajectory,
    pub relations: Vec<Relation>,
}

impl SyntheticWorld {
    /// Noise-free range along bearing `angle` (sensor frame) from `pose`;
    /// 0 when nothing is within range.
    pub fn cast(&self, pose: &Pose2D, angle: f64) -> f64 {
        let a = pose.theta + angle;
        let d = (a.cos(), a.sin());
        self.segments
            .iter()
            .filter_map(|s| s.intersect((pose.x, pose.y), d))
            .filter(|&t| t <= self.lidar.max_range)
            .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))))
            .unwrap_or(0.0)
    }

    pub fn scan_at(&self, pose: &Pose2D, timestamp: f64, rng: &mut impl Rng) -> Scan {
        let carmen = self.lidar.carmen_config();
        let noise = Normal::new(0.0, self.lidar.range_noise_std.max(0.0)).expect("finite std");
        let points = (0..self.lidar.beams)
            .map(|k| {
                let angle = carmen.bearing(k, self.lidar.beams);
                let r = self.cast(pose, angle);
                let r = if r > 0.0 && self.lidar.range_noise_std > 0.0 {
                    (r + noise.sample(rng)).max(1e-3)
                } else {
                    r
                };
                ScanPoint::new(r, angle)
            })
            .collect();
        Scan::new(points, timestamp)
    }
}

fn gaussian(rng: &mut impl Rng, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("finite std").sample(rng)
    } else {
        0.0
    }
}

/// Ray-casts every scripted pose and integrates noisy odometry. Identical
/// worlds and seeds give identical output.
pub fn simulate(world: &SyntheticWorld, seed: u64) -> SimOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut odom = world.trajectory.first().copied().unwrap_or_default();
    let mut log = Vec::with_capacity(world.trajectory.len());
    let mut stamps = Vec::with_capacity(world.trajectory.len());
    let n = &world.odometry;
    for (k, pose) in world.trajectory.iter().enumerate() {
        let t = k as f64 * world.dt;
        if k > 0 {
            let d = relative(pose, &world.trajectory[k - 1]);
            let dist = d.translation_norm();
            let noisy = Pose2D::new(
                d.x + gaussian(&mut rng, n.trans_per_m * dist),
                d.y + gaussian(&mut rng, n.trans_per_m * dist),
                d.theta + gaussian(&mut rng, n.rot_per_rad * d.theta.abs() + n.rot_per_m * dist) + n.rot_bias_per_m * dist,
            );
            odom = odom.compose(&noisy);
        }
        log.push(LogEntry::laser(world.scan_at(pose, t, &mut rng), odom));
        stamps.push((t, *pose));
    }
    let mut relations = Vec::new();
    for &gap in world.relation_gaps.iter().filter(|&&g| g > 0) {
        for k in 0..stamps.len().saturating_sub(gap) {
            let (ti, pi) = stamps[k];
            let (tj, pj) = stamps[k + gap];
            relations.push(Relation::new(ti, tj, relative(&pj, &pi)));
        }
    }
    SimOutput {
        log,
        carmen: world.lidar.carmen_config(),
        ground_truth: Trajectory::new(stamps),
        relations,
    }
}

/// Poses every `step` meters along a square loop of half-size `half`
/// around `center` whose corners are rounded with `radius`, driven
/// counter-clockwise from the middle of the bottom side.
pub fn rounded_square_path(center: (f64, f64), half: f64, radius: f64, step: f64, laps: f64) -> Vec<Pose2D> {
    let straight = 2.0 * (half - radius);
    let arc = FRAC_PI_2 * radius;
    let side = straight + arc;
    let total = 4.0 * side * laps;
    let count = (total / step).round() as usize;
    (0..count)
        .map(|k| {
            // arc length measured from the start of the first straight
            let s = (k as f64 * step + straight / 2.0).rem_euclid(4.0 * side);
            let q = (s / side).floor();
            let r = s - q * side;
            let (lx, ly, lt) = if r < straight {
                (r - straight / 2.0, -half, 0.0)
            } else {
                let phi = (r - straight) / radius;
                (straight / 2.0 + radius * phi.sin(), -half + radius * (1.0 - phi.cos()), phi)
            };
            let rot = Pose2D::new(center.0, center.1, q * FRAC_PI_2);
            rot.compose(&Pose2D::new(lx, ly, lt))
        })
        .collect()
}

fn box_from_wall(along: (f64, f64), wall: f64, depth: f64, horizontal: bool) -> [Segment; 4] {
    let (lo, hi) = (along.0.min(along.1), along.0.max(along.1));
    let (a, b) = (wall.min(wall + depth), wall.max(wall + depth));
    if horizontal {
        rectangle((lo, a), (hi, b))
    } else {
        rectangle((a, lo), (b, hi))
    }
}

/// Square corridor loop: outer walls on `[-1.5, 10.5]²`, an inner block on
/// `[1.5, 7.5]²`, irregular boxes along both walls. The robot drives the
/// corridor centre twice (about 400 scans) with drifting odometry.
pub fn loop_corridor() -> SyntheticWorld {
    let mut segments = Vec::new();
    segments.extend(rectangle((-1.5, -1.5), (10.5, 10.5)));
    segments.extend(rectangle((1.5, 1.5), (7.5, 7.5)));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_100b);
    // (wall coordinate, sign pointing into the corridor, horizontal, extent)
    let walls = [
        (-1.5, 1.0, true, (-1.5, 10.5)),
        (10.5, -1.0, true, (-1.5, 10.5)),
        (-1.5, 1.0, false, (-1.5, 10.5)),
        (10.5, -1.0, false, (-1.5, 10.5)),
        (1.5, -1.0, true, (1.5, 7.5)),
        (7.5, 1.0, true, (1.5, 7.5)),
        (1.5, -1.0, false, (1.5, 7.5)),
        (7.5, 1.0, false, (1.5, 7.5)),
    ];
    for (wall, sign, horizontal, (from, to)) in walls {
        let mut s = from + rng.random_range(0.3..1.2);
        while s < to - 0.6 {
            let len = rng.random_range(0.15..0.6);
            let depth = sign * rng.random_range(0.1..0.45);
            segments.extend(box_from_wall((s, s + len), wall, depth, horizontal));
            s += len + rng.random_range(0.5..2.2);
        }
    }
    SyntheticWorld {
        segments,
        lidar: LidarModel {
            max_range: 8.0,
            beams: 360,
            fov_deg: 360.0,
            range_noise_std: 0.01,
        },
        trajectory: rounded_square_path((4.5, 4.5), 4.5, 1.5, 0.17, 2.0),
        dt: 0.2,
        odometry: OdometryNoise {
            trans_per_m: 0.05,
            rot_per_rad: 0.05,
            rot_per_m: 0.01,
            rot_bias_per_m: 0.01,
        },
        relation_gaps: vec![1, 10],
    }
}

/// Straight 2.4 m wide corridor with pillars of similar size at irregular
/// spacing on both walls, driven in 0.5 m jumps along its axis.
pub fn jump_corridor() -> SyntheticWorld {
    let length = 40.0;
    let mut segments = vec![
        Segment::new((0.0, -1.2), (length, -1.2)),
        Segment::new((0.0, 1.2), (length, 1.2)),
        Segment::new((0.0, -1.2), (0.0, 1.2)),
        Segment::new((length, -1.2), (length, 1.2)),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0441d0e);
    for (wall, sign) in [(-1.2, 1.0), (1.2, -1.0)] {
        let mut s = rng.random_range(0.3..1.0);
        while s < length - 0.5 {
            let len = rng.random_range(0.15..0.25);
            let depth = sign * rng.random_range(0.12..0.18);
            segments.extend(box_from_wall((s, s + len), wall, depth, true));
            s += len + rng.random_range(0.5..1.3);
        }
    }
    let trajectory = (0..60).map(|k| Pose2D::new(2.0 + 0.5 * k as f64, 0.0, 0.0)).collect();
    SyntheticWorld {
        segments,
        lidar: LidarModel {
            max_range: 6.0,
            beams: 360,
            fov_deg: 360.0,
            range_noise_std: 0.01,
        },
        trajectory,
        dt: 0.2,
        odometry: OdometryNoise::default(),
        relation_gaps: vec![1, 10],
    }
}

/// Scene names accepted by the `simulate` subcommand.
pub const SCENES: [&str; 2] = ["loop", "corridor"];

pub fn scene(name: &str) -> Option<SyntheticWorld> {
    match name {
        "loop" => Some(loop_corridor()),
        "corridor" => Some(jump_corridor()),
        _ => None,
    }
}

/// Angle between consecutive beams.
pub fn beam_spacing(lidar: &LidarModel) -> f64 {
    lidar.fov_deg.to_radians() / lidar.beams as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;
    use crate::io::carmen::{parse_carmen, serialize_carmen};
    use std::f64::consts::PI;

    fn wall_world() -> SyntheticWorld {
        SyntheticWorld {
            segments: vec![Segment::new((5.0, -10.0), (5.0, 10.0))],
            lidar: LidarModel {
                max_range: 20.0,
                beams: 360,
                fov_deg: 360.0,
                range_noise_std: 0.0,
            },
            trajectory: vec![Pose2D::identity()],
            dt: 1.0,
            odometry: OdometryNoise::default(),
            relation_gaps: vec![],
        }
    }

    #[test]
    fn wall_ahead_reads_its_distance() {
        let w = wall_world();
        assert_eq!(w.cast(&Pose2D::identity(), 0.0), 5.0);
        let out = simulate(&w, 1);
        let forward = out.log[0].scan.points.iter().find(|p| p.angle.abs() < 1e-12).unwrap();
        assert!((forward.range - 5.0).abs() < 1e-12);
        assert_eq!(w.cast(&Pose2D::identity(), PI), 0.0);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let w = loop_corridor();
        let a = serialize_carmen(&simulate(&w, 3).log, &w.lidar.carmen_config());
        let b = serialize_carmen(&simulate(&w, 3).log, &w.lidar.carmen_config());
        let c = serialize_carmen(&simulate(&w, 4).log, &w.lidar.carmen_config());
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ground_truth_satisfies_relations() {
        let out = simulate(&loop_corridor(), 5);
        let rep = evaluate(&out.ground_truth, &out.relations).unwrap();
        assert!(rep.eps_trans < 1e-12 && rep.eps_rot < 1e-12);
        assert_eq!(rep.skipped, 0);
    }

    #[test]
    fn loop_path_is_closed_and_smooth() {
        let w = loop_corridor();
        let t = &w.trajectory;
        assert!((380..=420).contains(&t.len()), "{}", t.len());
        for p in t.windows(2) {
            let d = relative(&p[1], &p[0]);
            assert!((d.translation_norm() - 0.17).abs() < 0.01);
            assert!(d.theta.abs() < 0.15);
        }
        for p in t {
            for s in &w.segments {
                let d = point_segment_distance((p.x, p.y), s);
                assert!(d > 0.9, "pose {p:?} too close to {s:?}");
            }
        }
    }

    fn point_segment_distance(p: (f64, f64), s: &Segment) -> f64 {
        let e = (s.b.0 - s.a.0, s.b.1 - s.a.1);
        let l2 = e.0 * e.0 + e.1 * e.1;
        let u = (((p.0 - s.a.0) * e.0 + (p.1 - s.a.1) * e.1) / l2).clamp(0.0, 1.0);
        (p.0 - s.a.0 - u * e.0).hypot(p.1 - s.a.1 - u * e.1)
    }

    #[test]
    fn log_round_trips_through_carmen_text() {
        let w = jump_corridor();
        let out = simulate(&w, 8);
        let text = serialize_carmen(&out.log, &out.carmen);
        let back = parse_carmen(&text, &CarmenConfig::default()).unwrap();
        assert_eq!(back.entries.len(), out.log.len());
        for (a, b) in out.log.iter().zip(&back.entries) {
            for (p, q) in a.scan.points.iter().zip(&b.scan.points) {
                assert!((p.angle - q.angle).abs() < 1e-12);
                assert!((p.range - q.range).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn noise_free_odometry_matches_ground_truth() {
        let mut w = loop_corridor();
        w.odometry = OdometryNoise::default();
        let out = simulate(&w, 1);
        for (e, (_, gt)) in out.log.iter().zip(out.ground_truth.iter()) {
            assert!((e.odom_pose.x - gt.x).abs() < 1e-9 && (e.odom_pose.y - gt.y).abs() < 1e-9);
        }
    }
}
