#![allow(dead_code)]

use corrslam::csm::packet::{encode_query, to_bytes, QueryPacket};
use corrslam::csm::{FixedScan, SearchWindow, ThetaPart};
use corrslam::grid::{ByteMap, QuantizedMap};
use corrslam::pose::{Pose2D, Scan, ScanPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn window(wx: u32, wy: u32, wtheta: u32, w: u32) -> SearchWindow {
    SearchWindow {
        wx,
        wy,
        wtheta,
        r: 0.05,
        dtheta: 0.02,
        w,
        theta_part: ThetaPart::Full,
    }
}

/// Map of uniform 6-bit noise with a few bright walls, so that scores
/// have real structure and ties stay possible.
pub fn random_map(rng: &mut ChaCha8Rng, width: usize, height: usize) -> QuantizedMap {
    let mut cells: Vec<u8> = (0..width * height).map(|_| rng.random_range(0..24)).collect();
    for _ in 0..3 {
        let vertical = rng.random_bool(0.5);
        let at = rng.random_range(0..if vertical { width } else { height });
        for k in 0..if vertical { height } else { width } {
            let idx = if vertical { k * width + at } else { at * width + k };
            cells[idx] = rng.random_range(48..64);
        }
    }
    QuantizedMap::new(width, height, 0.05, (0.0, 0.0), cells).expect("valid map")
}

pub fn random_scan(rng: &mut ChaCha8Rng, n: usize, max_range: f64) -> Scan {
    Scan::new(
        (0..n)
            .map(|_| ScanPoint::new(rng.random_range(0.1..max_range), rng.random_range(-3.1..3.1)))
            .collect(),
        0.0,
    )
}

/// One instance of the matcher property: a map of at most 64×64, at most
/// 64 points and a window of at most (16, 16, 8) steps.
pub struct Instance {
    pub map: QuantizedMap,
    pub scan: FixedScan,
    pub xi0: Pose2D,
    pub window: SearchWindow,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let (w, h) = (rng.random_range(8..=64), rng.random_range(8..=64));
    let map = random_map(rng, w, h);
    let n = rng.random_range(1..=64);
    let scan = random_scan(rng, n, 1.5);
    let xi0 = Pose2D::new(
        rng.random_range(0.0..w as f64 * 0.05),
        rng.random_range(0.0..h as f64 * 0.05),
        rng.random_range(-3.0..3.0),
    );
    let window = window(4 * rng.random_range(0..=4), 4 * rng.random_range(0..=4), rng.random_range(0..=8), 8);
    Instance {
        map,
        scan: FixedScan::from_scan(&scan),
        xi0,
        window,
    }
}

fn byte_map(rng: &mut ChaCha8Rng, width: usize, height: usize) -> ByteMap {
    ByteMap {
        width,
        height,
        cells: random_map(rng, width, height).cells().iter().map(|&v| (v << 2) | rng.random_range(0..4)).collect(),
    }
}

fn scan_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f32, f32)> {
    (0..n)
        .map(|_| (rng.random_range(0.1f32..2.5), rng.random_range(-3.1f32..3.1)))
        .collect()
}

/// The golden query stream: a full load, map reuse, scan reuse, both, and
/// a full-size scan. Map bytes carry random low bits that ingest drops.
pub fn golden_queries() -> Vec<QueryPacket> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x601d);
    let mut q = |reuse_map: bool, reuse_scan: bool, dims: (usize, usize), n: usize, win: (u16, u16, u16), xi0: Pose2D| {
        QueryPacket {
            reuse_map,
            reuse_scan,
            wx: win.0,
            wy: win.1,
            wtheta: win.2,
            block: 8,
            resolution: 0.05,
            dtheta: 0.02,
            origin: (-0.4, 0.25),
            xi0,
            map: (!reuse_map).then(|| byte_map(&mut rng, dims.0, dims.1)),
            scan: (!reuse_scan).then(|| scan_pairs(&mut rng, n)),
        }
    };
    vec![
        q(false, false, (40, 36), 48, (8, 8, 4), Pose2D::new(0.6, 1.1, 0.3)),
        q(true, false, (0, 0), 30, (4, 8, 6), Pose2D::new(0.9, 0.7, -1.2)),
        q(false, true, (64, 64), 0, (12, 4, 2), Pose2D::new(1.2, 1.5, 2.0)),
        q(true, true, (0, 0), 0, (4, 0, 8), Pose2D::new(1.0, 1.4, 2.1)),
        q(false, false, (96, 80), 512, (16, 16, 3), Pose2D::new(2.4, 2.0, 0.0)),
    ]
}

pub fn golden_query_bytes() -> Vec<u8> {
    let mut packets = Vec::new();
    for q in golden_queries() {
        packets.extend(encode_query(&q).expect("golden query encodes"));
    }
    to_bytes(&packets)
}
