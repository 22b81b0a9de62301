//! 64-bit little-endian packet stream between host and matcher.
//!
//! A query is laid out as
//!
//! | packet | content |
//! |---|---|
//! | 0 | flags: bit 0 reuse map, bit 1 reuse scan, all other bits zero |
//! | 1 | map width (u16), map height (u16), point count (u16), block size (u8), reserved (u8) |
//! | 2 | `w_x`, `w_y`, `w_θ` (u16 each), reserved (u16) |
//! | 3–9 | f64 bits of resolution, `δθ`, origin x, origin y, `ξ⁰` x, y, θ |
//! | … | `⌈width·height/8⌉` map packets, eight 8-bit cells each, unless map reuse |
//! | … | one packet per point, f32 range in the low half and f32 angle in the high half, unless scan reuse |
//!
//! A result is a single packet: `n_x*`, `n_y*`, `n_θ*` as i16 and the score
//! as u16, from the least significant end. A query file (`.csmq`) is any
//! number of queries back to back, and a result file (`.csmr`) the matching
//! run of result packets.

use super::engine::MatchQuery;
use super::window::{MatchResult, SearchWindow, ThetaPart};
use super::{CsmError, FixedScan};
use crate::grid::{ByteMap, QuantizedMap, MAX_MAP_CELLS_PER_SIDE};
use crate::pose::{Pose2D, MAX_SCAN_POINTS};

pub const PACKET_BYTES: usize = 8;
const HEADER_PACKETS: usize = 10;

const FLAG_REUSE_MAP: u64 = 1;
const FLAG_REUSE_SCAN: u64 = 2;

/// Everything carried by one query on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPacket {
    pub reuse_map: bool,
    pub reuse_scan: bool,
    pub wx: u16,
    pub wy: u16,
    pub wtheta: u16,
    pub block: u8,
    pub resolution: f64,
    pub dtheta: f64,
    pub origin: (f64, f64),
    pub xi0: Pose2D,
    /// 8-bit cells; `None` when the map is reused.
    pub map: Option<ByteMap>,
    /// `(range, angle)` pairs; `None` when the scan is reused.
    pub scan: Option<Vec<(f32, f32)>>,
}

/// The fields of a result packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResultPacket {
    pub nx: i16,
    pub ny: i16,
    pub ntheta: i16,
    pub score: u16,
}

impl From<&MatchResult> for ResultPacket {
    fn from(r: &MatchResult) -> Self {
        ResultPacket {
            nx: r.best_steps.0 as i16,
            ny: r.best_steps.1 as i16,
            ntheta: r.best_steps.2 as i16,
            score: r.score.min(u16::MAX as u32) as u16,
        }
    }
}

impl QueryPacket {
    pub fn window(&self) -> SearchWindow {
        SearchWindow {
            wx: self.wx as u32,
            wy: self.wy as u32,
            wtheta: self.wtheta as u32,
            r: self.resolution,
            dtheta: self.dtheta,
            w: self.block as u32,
            theta_part: ThetaPart::Full,
        }
    }

    /// Builds the wire form of a query. The map goes out as `v << 2` of its
    /// 6-bit cells, which ingests back to the same values.
    pub fn from_query(q: &MatchQuery, geometry_if_reused: Option<(f64, (f64, f64))>) -> Result<Self, CsmError> {
        let (resolution, origin) = match (&q.map, geometry_if_reused) {
            (Some(m), _) => (m.resolution(), m.origin()),
            (None, Some(g)) => g,
            (None, None) => (q.window.r, (0.0, 0.0)),
        };
        let narrow = |v: u32, name: &str| {
            u16::try_from(v).map_err(|_| CsmError::WindowTooLarge(format!("{name} = {v} does not fit in 16 bits")))
        };
        Ok(QueryPacket {
            reuse_map: q.map.is_none(),
            reuse_scan: q.scan.is_none(),
            wx: narrow(q.window.wx, "wx")?,
            wy: narrow(q.window.wy, "wy")?,
            wtheta: narrow(q.window.wtheta, "wtheta")?,
            block: u8::try_from(q.window.w).map_err(|_| CsmError::UnsupportedBlock(q.window.w))?,
            resolution,
            dtheta: q.window.dtheta,
            origin,
            xi0: q.xi0,
            map: q.map.as_ref().map(QuantizedMap::to_bytes),
            scan: q
                .scan
                .as_ref()
                .map(|s| s.points().iter().map(|&(r, a)| (r.to_f64() as f32, a.to_f64() as f32)).collect()),
        })
    }

    /// The query as the engine sees it after ingesting the packets.
    pub fn to_query(&self) -> Result<MatchQuery, CsmError> {
        let map = match &self.map {
            Some(bytes) => Some(QuantizedMap::ingest(bytes, self.resolution, self.origin)?),
            None => None,
        };
        Ok(MatchQuery {
            map,
            scan: self.scan.as_ref().map(|pts| FixedScan::from_f32_pairs(pts.iter().copied())),
            xi0: self.xi0,
            window: self.window(),
        })
    }
}

/// Eight consecutive map bytes per packet, zero padded at the end.
pub fn encode_map(map: &ByteMap) -> Vec<u64> {
    map.cells
        .chunks(PACKET_BYTES)
        .map(|chunk| {
            let mut b = [0u8; PACKET_BYTES];
            b[..chunk.len()].copy_from_slice(chunk);
            u64::from_le_bytes(b)
        })
        .collect()
}

pub fn decode_map(packets: &[u64], width: usize, height: usize) -> Result<ByteMap, CsmError> {
    let n = width * height;
    if packets.len() != n.div_ceil(PACKET_BYTES) {
        return Err(CsmError::MalformedPacket(format!(
            "{} map packets for a {width}x{height} map",
            packets.len()
        )));
    }
    let mut cells: Vec<u8> = packets.iter().flat_map(|p| p.to_le_bytes()).collect();
    cells.truncate(n);
    Ok(ByteMap { width, height, cells })
}

pub fn encode_scan_point(range: f32, angle: f32) -> u64 {
    range.to_bits() as u64 | (angle.to_bits() as u64) << 32
}

pub fn decode_scan_point(packet: u64) -> (f32, f32) {
    (f32::from_bits(packet as u32), f32::from_bits((packet >> 32) as u32))
}

pub fn encode_result(r: &ResultPacket) -> u64 {
    (r.nx as u16 as u64) | (r.ny as u16 as u64) << 16 | (r.ntheta as u16 as u64) << 32 | (r.score as u64) << 48
}

pub fn decode_result(p: u64) -> ResultPacket {
    ResultPacket {
        nx: p as u16 as i16,
        ny: (p >> 16) as u16 as i16,
        ntheta: (p >> 32) as u16 as i16,
        score: (p >> 48) as u16,
    }
}

pub fn encode_query(q: &QueryPacket) -> Result<Vec<u64>, CsmError> {
    let (width, height) = q.map.as_ref().map_or((0, 0), |m| (m.width, m.height));
    if width > MAX_MAP_CELLS_PER_SIDE || height > MAX_MAP_CELLS_PER_SIDE {
        return Err(CsmError::Grid(crate::grid::GridError::WindowTooLarge {
            width,
            height,
            max: MAX_MAP_CELLS_PER_SIDE,
        }));
    }
    if let Some(m) = &q.map {
        if m.cells.len() != width * height {
            return Err(CsmError::Grid(crate::grid::GridError::ShapeMismatch {
                got: m.cells.len(),
                expected: width * height,
            }));
        }
    }
    let points = q.scan.as_ref().map_or(0, Vec::len);
    if points > MAX_SCAN_POINTS {
        return Err(CsmError::ScanTooLong(points));
    }
    if q.map.is_some() == q.reuse_map || q.scan.is_some() == q.reuse_scan {
        return Err(CsmError::MalformedPacket("reuse flags disagree with the payload".into()));
    }
    let mut out = Vec::with_capacity(HEADER_PACKETS + width * height / 8 + 1 + points);
    out.push(if q.reuse_map { FLAG_REUSE_MAP } else { 0 } | if q.reuse_scan { FLAG_REUSE_SCAN } else { 0 });
    out.push(width as u64 | (height as u64) << 16 | (points as u64) << 32 | (q.block as u64) << 48);
    out.push(q.wx as u64 | (q.wy as u64) << 16 | (q.wtheta as u64) << 32);
    for v in [q.resolution, q.dtheta, q.origin.0, q.origin.1, q.xi0.x, q.xi0.y, q.xi0.theta] {
        out.push(v.to_bits());
    }
    if let Some(m) = &q.map {
        out.extend(encode_map(m));
    }
    if let Some(s) = &q.scan {
        out.extend(s.iter().map(|&(r, a)| encode_scan_point(r, a)));
    }
    Ok(out)
}

/// Decodes one query from the front of `packets`, returning it and the
/// number of packets consumed.
pub fn decode_query(packets: &[u64]) -> Result<(QueryPacket, usize), CsmError> {
    let truncated = || CsmError::MalformedPacket("stream ends inside a query".into());
    let header = packets.get(..HEADER_PACKETS).ok_or_else(truncated)?;
    let flags = header[0];
    if flags & !(FLAG_REUSE_MAP | FLAG_REUSE_SCAN) != 0 {
        return Err(CsmError::MalformedPacket(format!("undefined flag bits in {flags:#x}")));
    }
    let reuse_map = flags & FLAG_REUSE_MAP != 0;
    let reuse_scan = flags & FLAG_REUSE_SCAN != 0;
    let sizes = header[1];
    if sizes >> 56 != 0 {
        return Err(CsmError::MalformedPacket("reserved size bits set".into()));
    }
    let width = (sizes & 0xffff) as usize;
    let height = (sizes >> 16 & 0xffff) as usize;
    let points = (sizes >> 32 & 0xffff) as usize;
    let block = (sizes >> 48 & 0xff) as u8;
    if width > MAX_MAP_CELLS_PER_SIDE || height > MAX_MAP_CELLS_PER_SIDE {
        return Err(CsmError::MalformedPacket(format!("map of {width}x{height} cells exceeds the buffer")));
    }
    if points > MAX_SCAN_POINTS {
        return Err(CsmError::MalformedPacket(format!("{points} points exceed the scan buffer")));
    }
    let win = header[2];
    if win >> 48 != 0 {
        return Err(CsmError::MalformedPacket("reserved window bits set".into()));
    }
    let reg = |k: usize| f64::from_bits(header[3 + k]);
    let mut at = HEADER_PACKETS;
    let map = if reuse_map {
        None
    } else {
        let n = (width * height).div_ceil(PACKET_BYTES);
        let body = packets.get(at..at + n).ok_or_else(truncated)?;
        at += n;
        Some(decode_map(body, width, height)?)
    };
    let scan = if reuse_scan {
        None
    } else {
        let body = packets.get(at..at + points).ok_or_else(truncated)?;
        at += points;
        Some(body.iter().map(|&p| decode_scan_point(p)).collect())
    };
    Ok((
        QueryPacket {
            reuse_map,
            reuse_scan,
            wx: win as u16,
            wy: (win >> 16) as u16,
            wtheta: (win >> 32) as u16,
            block,
            resolution: reg(0),
            dtheta: reg(1),
            origin: (reg(2), reg(3)),
            xi0: Pose2D {
                x: reg(4),
                y: reg(5),
                theta: reg(6),
            },
            map,
            scan,
        },
        at,
    ))
}

pub fn decode_query_stream(packets: &[u64]) -> Result<Vec<QueryPacket>, CsmError> {
    let mut out = Vec::new();
    let mut rest = packets;
    while !rest.is_empty() {
        let (q, used) = decode_query(rest)?;
        out.push(q);
        rest = &rest[used..];
    }
    Ok(out)
}

pub fn to_bytes(packets: &[u64]) -> Vec<u8> {
    packets.iter().flat_map(|p| p.to_le_bytes()).collect()
}

pub fn from_bytes(bytes: &[u8]) -> Result<Vec<u64>, CsmError> {
    if bytes.len() % PACKET_BYTES != 0 {
        return Err(CsmError::MalformedPacket(format!(
            "{} bytes is not a whole number of packets",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(PACKET_BYTES)
        .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of eight")))
        .collect())
}
