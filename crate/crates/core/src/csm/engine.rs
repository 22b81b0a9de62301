use super::discretize::FixedScan;
use super::matcher::{match_optimized, match_oracle, match_reference, PreparedMap};
use super::packet::{self, QueryPacket, ResultPacket};
use super::window::{MatchResult, SearchWindow, HARDWARE_BLOCK};
use super::CsmError;
use crate::grid::QuantizedMap;
use crate::pose::{Pose2D, MAX_SCAN_POINTS};

/// Which matcher an engine runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    Reference,
    #[default]
    Optimized,
    Oracle,
}

/// One query. A `None` map or scan asks the engine to reuse what it holds.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchQuery {
    pub map: Option<QuantizedMap>,
    pub scan: Option<FixedScan>,
    pub xi0: Pose2D,
    pub window: SearchWindow,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub map_loads: u64,
    pub scan_loads: u64,
    pub coarse_builds: u64,
    pub queries: u64,
    pub score_evals: u64,
}

/// A single matcher core: caches one map (with its coarse maps) and one
/// scan between queries.
#[derive(Debug, Clone)]
pub struct CsmEngine {
    block: u32,
    algorithm: Algorithm,
    map: Option<PreparedMap>,
    scan: Option<FixedScan>,
    stats: EngineStats,
}

impl Default for CsmEngine {
    fn default() -> Self {
        Self::new(Algorithm::default())
    }
}

impl CsmEngine {
    pub fn new(algorithm: Algorithm) -> Self {
        Self::with_block(algorithm, HARDWARE_BLOCK)
    }

    pub fn with_block(algorithm: Algorithm, block: u32) -> Self {
        Self {
            block,
            algorithm,
            map: None,
            scan: None,
            stats: EngineStats::default(),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    pub fn block(&self) -> u32 {
        self.block
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = EngineStats::default();
    }

    pub fn loaded_map(&self) -> Option<&QuantizedMap> {
        self.map.as_ref().map(|m| &m.fine)
    }

    pub fn load_map(&mut self, map: QuantizedMap) -> Result<(), CsmError> {
        let prepared = PreparedMap::new(map, self.block)?;
        self.stats.map_loads += 1;
        self.stats.coarse_builds += 1;
        self.map = Some(prepared);
        Ok(())
    }

    pub fn load_scan(&mut self, scan: FixedScan) -> Result<(), CsmError> {
        if scan.len() > MAX_SCAN_POINTS {
            return Err(CsmError::ScanTooLong(scan.len()));
        }
        self.stats.scan_loads += 1;
        self.scan = Some(scan);
        Ok(())
    }

    /// Matches the cached scan against the cached map.
    pub fn run(&mut self, xi0: &Pose2D, window: &SearchWindow) -> Result<MatchResult, CsmError> {
        let map = self.map.as_ref().ok_or(CsmError::ReuseWithoutLoad("map"))?;
        let scan = self.scan.as_ref().ok_or(CsmError::ReuseWithoutLoad("scan"))?;
        let result = match self.algorithm {
            Algorithm::Reference => match_reference(map, scan, xi0, window)?,
            Algorithm::Optimized => match_optimized(map, scan, xi0, window)?,
            Algorithm::Oracle => match_oracle(&map.fine, scan, xi0, window)?,
        };
        self.stats.queries += 1;
        self.stats.score_evals += result.num_score_evals;
        Ok(result)
    }

    pub fn submit(&mut self, query: MatchQuery) -> Result<MatchResult, CsmError> {
        if query.map.is_none() && self.map.is_none() {
            return Err(CsmError::ReuseWithoutLoad("map"));
        }
        if query.scan.is_none() && self.scan.is_none() {
            return Err(CsmError::ReuseWithoutLoad("scan"));
        }
        if let Some(m) = query.map {
            self.load_map(m)?;
        }
        if let Some(s) = query.scan {
            self.load_scan(s)?;
        }
        self.run(&query.xi0, &query.window)
    }

    /// Many scans against one map; the map is loaded once.
    pub fn match_scans_against_map(
        &mut self,
        map: QuantizedMap,
        scans: &[(FixedScan, Pose2D)],
        window: &SearchWindow,
    ) -> Result<Vec<MatchResult>, CsmError> {
        self.load_map(map)?;
        scans
            .iter()
            .map(|(scan, xi0)| {
                self.load_scan(scan.clone())?;
                self.run(xi0, window)
            })
            .collect()
    }

    /// One scan against many maps; the scan is loaded once.
    pub fn match_scan_against_maps(
        &mut self,
        maps: Vec<(QuantizedMap, Pose2D)>,
        scan: FixedScan,
        window: &SearchWindow,
    ) -> Result<Vec<MatchResult>, CsmError> {
        self.load_scan(scan)?;
        maps.into_iter()
            .map(|(map, xi0)| {
                self.load_map(map)?;
                self.run(&xi0, window)
            })
            .collect()
    }

    /// Runs every query in a packet stream and returns the result packets.
    pub fn run_packets(&mut self, packets: &[u64]) -> Result<Vec<u64>, CsmError> {
        let queries = packet::decode_query_stream(packets)?;
        queries
            .iter()
            .map(|q: &QueryPacket| {
                let r = self.submit(q.to_query()?)?;
                Ok(packet::encode_result(&ResultPacket::from(&r)))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{Scan, ScanPoint};

    fn map() -> QuantizedMap {
        let cells = (0..40 * 40).map(|k| ((k * 37) % 64) as u8).collect();
        QuantizedMap::new(40, 40, 0.05, (0.0, 0.0), cells).unwrap()
    }

    fn scan(shift: f64) -> FixedScan {
        FixedScan::from_scan(&Scan::new(
            (0..30).map(|k| ScanPoint::new(0.3 + 0.02 * k as f64 + shift, 0.2 * k as f64)).collect(),
            0.0,
        ))
    }

    fn window() -> SearchWindow {
        SearchWindow::from_metric(0.2, 0.2, 0.05, 0.05, 0.01, 8)
    }

    fn xi0() -> Pose2D {
        Pose2D::new(1.0, 1.0, 0.0)
    }

    #[test]
    fn reuse_on_fresh_engine_fails() {
        let mut e = CsmEngine::default();
        let q = MatchQuery {
            map: None,
            scan: Some(scan(0.0)),
            xi0: xi0(),
            window: window(),
        };
        assert_eq!(e.submit(q).unwrap_err(), CsmError::ReuseWithoutLoad("map"));
        let q = MatchQuery {
            map: Some(map()),
            scan: None,
            xi0: xi0(),
            window: window(),
        };
        assert_eq!(e.submit(q).unwrap_err(), CsmError::ReuseWithoutLoad("scan"));
    }

    #[test]
    fn map_reuse_builds_coarse_once() {
        let mut e = CsmEngine::default();
        let first = e
            .submit(MatchQuery {
                map: Some(map()),
                scan: Some(scan(0.0)),
                xi0: xi0(),
                window: window(),
            })
            .unwrap();
        let second = e
            .submit(MatchQuery {
                map: None,
                scan: Some(scan(0.0)),
                xi0: xi0(),
                window: window(),
            })
            .unwrap();
        assert_eq!(first, second);
        assert_eq!(e.stats().coarse_builds, 1);
        assert_eq!(e.stats().queries, 2);
    }

    #[test]
    fn one_map_many_scans() {
        let scans: Vec<_> = (0..16).map(|k| (scan(0.01 * k as f64), xi0())).collect();
        let mut e = CsmEngine::default();
        let batch = e.match_scans_against_map(map(), &scans, &window()).unwrap();
        assert_eq!(e.stats().coarse_builds, 1);
        for ((s, p), r) in scans.iter().zip(&batch) {
            let mut fresh = CsmEngine::default();
            let single = fresh
                .submit(MatchQuery {
                    map: Some(map()),
                    scan: Some(s.clone()),
                    xi0: *p,
                    window: window(),
                })
                .unwrap();
            assert_eq!(&single, r);
        }
    }

    #[test]
    fn one_scan_many_maps() {
        let maps: Vec<_> = (0..4)
            .map(|k| (map().map_values(|v| (v + k) % 64).unwrap(), xi0()))
            .collect();
        let mut e = CsmEngine::default();
        let out = e.match_scan_against_maps(maps, scan(0.0), &window()).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(e.stats().scan_loads, 1);
        assert_eq!(e.stats().map_loads, 4);
    }

    #[test]
    fn packet_run_matches_direct_submit() {
        let q = MatchQuery {
            map: Some(map()),
            scan: Some(scan(0.0)),
            xi0: xi0(),
            window: window(),
        };
        let wire = packet::encode_query(&QueryPacket::from_query(&q, None).unwrap()).unwrap();
        let reuse = MatchQuery {
            map: None,
            scan: None,
            ..q.clone()
        };
        let wire2 = packet::encode_query(&QueryPacket::from_query(&reuse, Some((0.05, (0.0, 0.0)))).unwrap()).unwrap();
        let mut e = CsmEngine::default();
        let out = e.run_packets(&[wire, wire2].concat()).unwrap();
        let direct = CsmEngine::default().submit(q).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0], out[1]);
        assert_eq!(packet::decode_result(out[0]), ResultPacket::from(&direct));
        assert_eq!(e.stats().coarse_builds, 1);
    }
}
