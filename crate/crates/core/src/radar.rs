//! Wi-Fi association and trip reconstruction.
//!
//! Each pseudonym chain is tied to the Wi-Fi identifier whose probe stream,
//! heard by the same antenna over the same time window, best resembles the
//! chain's DSRC stream. Chains sharing an identifier across zones form a trip.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linker::PseudonymChain;
use crate::trace::{AntennaId, RadioObservation, WifiId};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RssiSeries {
    /// `(timestamp, rssi)`, strictly increasing in time.
    pub points: Vec<(f64, f64)>,
}

impl RssiSeries {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("RSSI series must not be empty".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Domain("RSSI series timestamps must strictly increase".into()));
        }
        Ok(RssiSeries { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub ts_of_max: f64,
    pub ts_of_min: f64,
}

impl SeriesStats {
    fn indexes(&self) -> [f64; 7] {
        [
            self.mean,
            self.std,
            self.median,
            self.max,
            self.min,
            self.ts_of_max,
            self.ts_of_min,
        ]
    }
}

/// Population statistics; extremes tie to the earliest timestamp.
pub fn series_stats(series: &RssiSeries) -> Result<SeriesStats> {
    let pts = &series.points;
    if pts.is_empty() {
        return Err(Error::Domain("statistics of an empty RSSI series".into()));
    }
    let n = pts.len() as f64;
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let var = pts.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = series.values();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    let (mut imax, mut imin) = (0, 0);
    for (i, p) in pts.iter().enumerate() {
        if p.1 > pts[imax].1 {
            imax = i;
        }
        if p.1 < pts[imin].1 {
            imin = i;
        }
    }
    Ok(SeriesStats {
        mean,
        std: var.sqrt(),
        median,
        min: pts[imin].1,
        max: pts[imax].1,
        ts_of_max: pts[imax].0,
        ts_of_min: pts[imin].0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricWeights {
    pub w_mean: f64,
    pub w_std: f64,
    pub w_median: f64,
    pub w_max: f64,
    pub w_min: f64,
    pub w_ts_max: f64,
    pub w_ts_min: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights {
            w_mean: 0.1,
            w_std: 0.3,
            w_median: 0.1,
            w_max: 0.05,
            w_min: 0.05,
            w_ts_max: 0.2,
            w_ts_min: 0.2,
        }
    }
}

impl MetricWeights {
    /// Weights in index order: mean, std, median, max, min, ts_max, ts_min.
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.w_mean,
            self.w_std,
            self.w_median,
            self.w_max,
            self.w_min,
            self.w_ts_max,
            self.w_ts_min,
        ]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("radar.weights must be non-negative".into()));
        }
        if (self.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "radar.weights must sum to 1 (got {})",
                self.sum()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Count,
    Statistical,
    Pearson,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Count, Metric::Statistical, Metric::Pearson];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Count => "count",
            Metric::Statistical => "statistical",
            Metric::Pearson => "pearson",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}` (valid: count, statistical, pearson)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    pub metric: Metric,
    pub weights: MetricWeights,
    /// Seconds added on both sides of a chain's window when collecting probes.
    pub slack: f64,
    /// Min–max normalize statistical differences across candidates.
    pub normalize: bool,
}

impl Default for RadarConfig {
    fn default() -> Self {
        RadarConfig {
            metric: Metric::Pearson,
            weights: MetricWeights::default(),
            slack: 1.0,
            normalize: true,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.slack >= 0.0) || !self.slack.is_finite() {
            return Err(Error::Config(format!(
                "radar.slack must be non-negative (got {})",
                self.slack
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainAssociation {
    pub zone: AntennaId,
    pub chain_id: usize,
    pub first_seen: f64,
    pub wifi_id: Option<WifiId>,
    pub score: f64,
    /// Size of the candidate set the choice was made from.
    pub candidates: usize,
}

impl ChainAssociation {
    fn for_chain(chain: &PseudonymChain, candidates: usize, pick: Option<(WifiId, f64)>) -> Self {
        let (wifi_id, score) = match pick {
            Some((w, s)) => (Some(w), s),
            None => (None, f64::NAN),
        };
        ChainAssociation {
            zone: chain.zone,
            chain_id: chain.id,
            first_seen: chain.first_seen,
            wifi_id,
            score,
            candidates,
        }
    }
}

fn in_window(chain: &PseudonymChain, t: f64, slack: f64) -> bool {
    t >= chain.first_seen - slack && t <= chain.last_seen + slack
}

/// Identifiers heard by the chain's antenna within its slack-padded window.
pub fn candidate_ids(chain: &PseudonymChain, zone_probes: &[RadioObservation], slack: f64) -> BTreeSet<WifiId> {
    candidate_series(chain, zone_probes, slack).into_keys().collect()
}

/// Probe RSSI series per identifier over the chain's window. `zone_probes`
/// must be sorted by timestamp.
pub fn candidate_series(
    chain: &PseudonymChain,
    zone_probes: &[RadioObservation],
    slack: f64,
) -> BTreeMap<WifiId, RssiSeries> {
    let mut out: BTreeMap<WifiId, RssiSeries> = BTreeMap::new();
    let start = zone_probes.partition_point(|o| o.timestamp() < chain.first_seen - slack);
    for o in &zone_probes[start..] {
        if o.timestamp() > chain.last_seen + slack {
            break;
        }
        if o.antenna_id != chain.zone {
            continue;
        }
        let Some(p) = o.as_probe() else { continue };
        if !in_window(chain, p.timestamp, slack) {
            continue;
        }
        let series = out.entry(p.wifi_id.clone()).or_default();
        if series.points.last().is_none_or(|last| last.0 < p.timestamp) {
            series.points.push((p.timestamp, o.rssi));
        }
    }
    out
}

/// DSRC RSSI of the chain, one point per BSM.
pub fn chain_series(chain: &PseudonymChain) -> RssiSeries {
    RssiSeries {
        points: chain.messages.iter().map(|m| (m.bsm.timestamp, m.rssi)).collect(),
    }
}

/// Identifier whose probe count is closest to `bsm_count · expected_ratio`.
pub fn find_match_count(
    chain: &PseudonymChain,
    candidates: &BTreeMap<WifiId, RssiSeries>,
    expected_ratio: f64,
) -> ChainAssociation {
    let expected = chain.bsm_count() as f64 * expected_ratio;
    let mut best: Option<(WifiId, f64)> = None;
    for (id, s) in candidates {
        let diff = (s.len() as f64 - expected).abs();
        if best.as_ref().is_none_or(|(_, b)| diff < *b) {
            best = Some((id.clone(), diff));
        }
    }
    ChainAssociation::for_chain(chain, candidates.len(), best)
}

fn rebased(series: &RssiSeries, offset_db: f64) -> RssiSeries {
    let t0 = series.points.first().map_or(0.0, |p| p.0);
    RssiSeries {
        points: series.points.iter().map(|(t, r)| (t - t0, r + offset_db)).collect(),
    }
}

/// Per-candidate absolute index differences against the chain, after
/// re-basing every series to its own start and lifting candidate RSSI by
/// `power_offset_db`.
pub fn index_differences(
    chain: &PseudonymChain,
    candidates: &BTreeMap<WifiId, RssiSeries>,
    power_offset_db: f64,
) -> Result<Vec<(WifiId, [f64; 7])>> {
    let reference = series_stats(&rebased(&chain_series(chain), 0.0))?.indexes();
    candidates
        .iter()
        .map(|(id, s)| {
            let stats = series_stats(&rebased(s, power_offset_db))?.indexes();
            let mut d = [0.0; 7];
            for i in 0..7 {
                d[i] = (reference[i] - stats[i]).abs();
            }
            Ok((id.clone(), d))
        })
        .collect()
}

/// Weighted index-difference score per candidate, lower is better.
pub fn statistical_scores(diffs: &[(WifiId, [f64; 7])], weights: &MetricWeights, normalize: bool) -> Vec<f64> {
    let w = weights.as_array();
    let mut lo = [f64::INFINITY; 7];
    let mut hi = [f64::NEG_INFINITY; 7];
    for (_, d) in diffs {
        for i in 0..7 {
            lo[i] = lo[i].min(d[i]);
            hi[i] = hi[i].max(d[i]);
        }
    }
    diffs
        .iter()
        .map(|(_, d)| {
            (0..7)
                .map(|i| {
                    let v = if !normalize {
                        d[i]
                    } else if hi[i] > lo[i] {
                        (d[i] - lo[i]) / (hi[i] - lo[i])
                    } else {
                        0.0
                    };
                    w[i] * v
                })
                .sum()
        })
        .collect()
}

/// Identifier minimizing the weighted statistical distance. Ties go to the
/// smaller raw mean difference, then the smaller MAC.
pub fn find_match_statistical(
    chain: &PseudonymChain,
    candidates: &BTreeMap<WifiId, RssiSeries>,
    weights: &MetricWeights,
    power_offset_db: f64,
    normalize: bool,
) -> Result<ChainAssociation> {
    if chain.messages.is_empty() {
        return Err(Error::Domain("chain without BSMs".into()));
    }
    let diffs = index_differences(chain, candidates, power_offset_db)?;
    let scores = statistical_scores(&diffs, weights, normalize);
    let mut best: Option<usize> = None;
    for i in 0..diffs.len() {
        let better = match best {
            None => true,
            Some(b) => scores[i] < scores[b] || (scores[i] == scores[b] && diffs[i].1[0] < diffs[b].1[0]),
        };
        if better {
            best = Some(i);
        }
    }
    Ok(ChainAssociation::for_chain(
        chain,
        candidates.len(),
        best.map(|i| (diffs[i].0.clone(), scores[i])),
    ))
}

/// Resamples the series at `n` evenly spaced instants of its own time span,
/// endpoints included, by linear interpolation.
pub fn interpolate_to(series: &RssiSeries, n: usize) -> Result<Vec<f64>> {
    let pts = &series.points;
    if pts.len() < 2 {
        return Err(Error::Domain(format!(
            "interpolation needs at least 2 points (got {})",
            pts.len()
        )));
    }
    if n < 2 {
        return Err(Error::Domain(format!("interpolation target must be at least 2 (got {n})")));
    }
    let (t0, t1) = (pts[0].0, pts[pts.len() - 1].0);
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        if k == 0 {
            out.push(pts[0].1);
            continue;
        }
        if k == n - 1 {
            out.push(pts[pts.len() - 1].1);
            continue;
        }
        let t = t0 + (t1 - t0) * k as f64 / (n - 1) as f64;
        while seg + 2 < pts.len() && pts[seg + 1].0 <= t {
            seg += 1;
        }
        let (a, b) = (pts[seg], pts[seg + 1]);
        let frac = ((t - a.0) / (b.0 - a.0)).clamp(0.0, 1.0);
        out.push(a.1 + (b.1 - a.1) * frac);
    }
    Ok(out)
}

/// Sample Pearson correlation; 0 when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "pearson length mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Domain("pearson needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Identifier whose interpolated probe RSSI correlates best with the chain.
pub fn find_match_pearson(
    chain: &PseudonymChain,
    candidates: &BTreeMap<WifiId, RssiSeries>,
) -> Result<ChainAssociation> {
    let reference = chain_series(chain);
    if reference.len() < 2 {
        return Ok(ChainAssociation::for_chain(chain, candidates.len(), None));
    }
    let usable: Vec<(&WifiId, &RssiSeries)> = candidates.iter().filter(|(_, s)| s.len() >= 2).collect();
    let n = usable
        .iter()
        .map(|(_, s)| s.len())
        .chain(std::iter::once(reference.len()))
        .max()
        .unwrap_or(2);
    let dsrc = interpolate_to(&reference, n)?;
    let mut best: Option<(WifiId, f64)> = None;
    for (id, s) in usable {
        let r = pearson(&interpolate_to(s, n)?, &dsrc)?;
        if best.as_ref().is_none_or(|(_, b)| r > *b) {
            best = Some((id.clone(), r));
        }
    }
    Ok(ChainAssociation::for_chain(chain, candidates.len(), best))
}

/// Phase 2 over every chain: associate each with a Wi-Fi identifier.
pub fn associate(
    chains: &[PseudonymChain],
    probes: &[RadioObservation],
    config: &RadarConfig,
    expected_ratio: f64,
    power_offset_db: f64,
) -> Result<Vec<ChainAssociation>> {
    let mut by_zone: BTreeMap<AntennaId, Vec<RadioObservation>> = BTreeMap::new();
    for o in probes.iter().filter(|o| o.as_probe().is_some()) {
        by_zone.entry(o.antenna_id).or_default().push(o.clone());
    }
    let empty = Vec::new();
    chains
        .iter()
        .map(|c| {
            let zone_probes = by_zone.get(&c.zone).unwrap_or(&empty);
            let cands = candidate_series(c, zone_probes, config.slack);
            match config.metric {
                Metric::Count => Ok(find_match_count(c, &cands, expected_ratio)),
                Metric::Statistical => {
                    find_match_statistical(c, &cands, &config.weights, power_offset_db, config.normalize)
                }
                Metric::Pearson => find_match_pearson(c, &cands),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub zone: AntennaId,
    pub chain_id: usize,
    pub first_seen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripReconstruction {
    pub wifi_id: WifiId,
    /// Ordered by `first_seen`.
    pub visits: Vec<Visit>,
}

/// Groups associated chains by identifier; unassociated chains are dropped.
pub fn reconstruct_trips(associations: &[ChainAssociation]) -> Vec<TripReconstruction> {
    let mut by_id: BTreeMap<&WifiId, Vec<Visit>> = BTreeMap::new();
    for a in associations {
        if let Some(w) = &a.wifi_id {
            by_id.entry(w).or_default().push(Visit {
                zone: a.zone,
                chain_id: a.chain_id,
                first_seen: a.first_seen,
            });
        }
    }
    by_id
        .into_iter()
        .map(|(w, mut visits)| {
            visits.sort_by(|a, b| {
                a.first_seen
                    .total_cmp(&b.first_seen)
                    .then(a.zone.cmp(&b.zone))
                    .then(a.chain_id.cmp(&b.chain_id))
            });
            visits.dedup();
            TripReconstruction {
                wifi_id: w.clone(),
                visits,
            }
        })
        .collect()
}

pub const ASSOCIATION_HEADER: [&str; 4] = ["zone", "chain_id", "mac", "score"];

/// Writes `zone,chain_id,mac,score`; unassociated chains leave mac and score empty.
pub fn write_associations(associations: &[ChainAssociation], destination: &Path) -> Result<()> {
    let file = std::fs::File::create(destination).map_err(|e| Error::io(destination, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let io = |e: csv::Error| Error::io(destination, std::io::Error::other(e));
    w.write_record(ASSOCIATION_HEADER).map_err(io)?;
    for a in associations {
        let (mac, score) = match &a.wifi_id {
            Some(id) => (id.mac.to_string(), a.score.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([a.zone.to_string(), a.chain_id.to_string(), mac, score])
            .map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| Error::io(destination, std::io::Error::other(e.to_string())))?
        .flush()
        .map_err(|e| Error::io(destination, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linker::ChainMessage;
    use crate::trace::{BsmRecord, MacAddr, Payload, Point, ProbeRecord, Pseudonym};
    use proptest::prelude::*;

    fn wid(n: u64) -> WifiId {
        WifiId::new(MacAddr::from_u64(0x0200_0000_0000 + n), format!("v{n}")).unwrap()
    }

    fn chain_from(points: &[(f64, f64)]) -> PseudonymChain {
        let messages: Vec<ChainMessage> = points
            .iter()
            .map(|&(t, rssi)| ChainMessage {
                bsm: BsmRecord {
                    pseudonym: Pseudonym(1),
                    timestamp: t,
                    position: Point::new(0.0, 0.0),
                    speed: 0.0,
                    heading: 0.0,
                    acceleration: 0.0,
                },
                rssi,
            })
            .collect();
        PseudonymChain {
            zone: 0,
            id: 0,
            pseudonyms: vec![Pseudonym(1)],
            first_seen: points[0].0,
            last_seen: points[points.len() - 1].0,
            messages,
        }
    }

    fn probe(id: u64, t: f64, rssi: f64) -> RadioObservation {
        RadioObservation {
            antenna_id: 0,
            payload: Payload::Probe(ProbeRecord {
                wifi_id: wid(id),
                timestamp: t,
            }),
            rssi,
        }
    }

    fn series(points: &[(f64, f64)]) -> RssiSeries {
        RssiSeries::new(points.to_vec()).unwrap()
    }

    fn flat_series(n: usize) -> RssiSeries {
        series(&(0..n).map(|i| (i as f64 * 0.1, -70.0)).collect::<Vec<_>>())
    }

    #[test]
    fn stats_examples() {
        let s = series_stats(&series(&[(0.0, -50.0), (1.0, -50.0)])).unwrap();
        assert_eq!((s.mean, s.std, s.ts_of_max, s.ts_of_min), (-50.0, 0.0, 0.0, 0.0));
        let s = series_stats(&series(&[(0.0, -60.0), (1.0, -40.0)])).unwrap();
        assert_eq!((s.mean, s.std, s.median, s.ts_of_max, s.ts_of_min), (-50.0, 10.0, -50.0, 1.0, 0.0));
        let s = series_stats(&series(&[(3.0, -71.0)])).unwrap();
        assert_eq!((s.mean, s.median, s.min, s.max, s.std), (-71.0, -71.0, -71.0, -71.0, 0.0));
        assert!(matches!(series_stats(&RssiSeries::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn weights_sum_to_one() {
        assert_eq!(MetricWeights::default().sum(), 1.0);
    }

    #[test]
    fn candidate_window() {
        let chain = chain_from(&[(10.0, -60.0), (40.0, -60.0)]);
        assert!(candidate_ids(&chain, &[], 1.0).is_empty());
        let probes = [probe(3, 8.9, -70.0), probe(1, 40.5, -70.0), probe(2, 41.5, -70.0)];
        assert_eq!(candidate_ids(&chain, &probes, 1.0), BTreeSet::from([wid(1)]));
    }

    #[test]
    fn count_examples() {
        let chain = chain_from(&(0..30).map(|i| (i as f64, -60.0)).collect::<Vec<_>>());
        let c = BTreeMap::from([(wid(1), flat_series(300)), (wid(2), flat_series(150))]);
        let a = find_match_count(&chain, &c, 10.0);
        assert_eq!((a.wifi_id, a.score), (Some(wid(1)), 0.0));
        let c = BTreeMap::from([(wid(5), flat_series(2))]);
        assert_eq!(find_match_count(&chain, &c, 10.0).wifi_id, Some(wid(5)));
        let c = BTreeMap::from([(wid(8), flat_series(305)), (wid(7), flat_series(295))]);
        assert_eq!(find_match_count(&chain, &c, 10.0).wifi_id, Some(wid(7)));
        assert_eq!(find_match_count(&chain, &BTreeMap::new(), 10.0).wifi_id, None);
    }

    #[test]
    fn statistical_identical_candidate_wins() {
        let pts = [(5.0, -60.0), (6.0, -55.0), (7.0, -58.0), (8.0, -65.0)];
        let chain = chain_from(&pts);
        // Same shape 3 dB lower as sent at Wi-Fi power, shifted in time.
        let twin: Vec<_> = pts.iter().map(|(t, r)| (t + 0.05, r - 3.0)).collect();
        let c = BTreeMap::from([
            (wid(2), series(&twin)),
            (wid(1), series(&[(5.0, -80.0), (6.0, -81.0), (9.0, -79.0)])),
        ]);
        let a = find_match_statistical(&chain, &c, &MetricWeights::default(), 3.0, true).unwrap();
        assert_eq!((a.wifi_id, a.score), (Some(wid(2)), 0.0));
        let single = BTreeMap::from([(wid(1), series(&[(5.0, -80.0)]))]);
        let a = find_match_statistical(&chain, &single, &MetricWeights::default(), 3.0, true).unwrap();
        assert_eq!((a.wifi_id, a.score), (Some(wid(1)), 0.0));
    }

    /// Spreadsheet-style oracle: stats, differences, normalization and
    /// weights written out longhand for three candidates.
    #[test]
    fn statistical_matches_brute_force() {
        let chain = chain_from(&[(0.0, -60.0), (1.0, -50.0), (2.0, -55.0)]);
        let cands = [
            vec![(0.0, -66.0), (1.0, -52.0), (2.0, -59.0)],
            vec![(0.0, -50.0), (1.0, -70.0)],
            vec![(0.0, -61.0), (0.5, -62.0), (1.0, -50.0), (3.0, -58.0)],
        ];
        let map: BTreeMap<_, _> = cands.iter().enumerate().map(|(i, c)| (wid(i as u64), series(c))).collect();

        fn longhand(p: &[(f64, f64)], off: f64) -> [f64; 7] {
            let t0 = p[0].0;
            let v: Vec<f64> = p.iter().map(|x| x.1 + off).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
            let mut s = v.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = if s.len() % 2 == 1 { s[s.len() / 2] } else { (s[s.len() / 2 - 1] + s[s.len() / 2]) / 2.0 };
            let max = s[s.len() - 1];
            let min = s[0];
            let tmax = p[v.iter().position(|x| *x == max).unwrap()].0 - t0;
            let tmin = p[v.iter().position(|x| *x == min).unwrap()].0 - t0;
            [mean, std, median, max, min, tmax, tmin]
        }
        let reference = longhand(&[(0.0, -60.0), (1.0, -50.0), (2.0, -55.0)], 0.0);
        let diffs: Vec<[f64; 7]> = cands
            .iter()
            .map(|c| {
                let s = longhand(c, 3.0);
                std::array::from_fn(|i| (reference[i] - s[i]).abs())
            })
            .collect();
        let w = [0.1, 0.3, 0.1, 0.05, 0.05, 0.2, 0.2];
        let scores: Vec<f64> = diffs
            .iter()
            .map(|d| {
                (0..7)
                    .map(|i| {
                        let col: Vec<f64> = diffs.iter().map(|x| x[i]).collect();
                        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        w[i] * if hi > lo { (d[i] - lo) / (hi - lo) } else { 0.0 }
                    })
                    .sum()
            })
            .collect();
        let want = (0..3).min_by(|a, b| scores[*a].partial_cmp(&scores[*b]).unwrap()).unwrap();
        let got = find_match_statistical(&chain, &map, &MetricWeights::default(), 3.0, true).unwrap();
        assert_eq!(got.wifi_id, Some(wid(want as u64)));
        assert!((got.score - scores[want]).abs() < 1e-12);
    }

    #[test]
    fn interpolation_examples() {
        assert_eq!(interpolate_to(&series(&[(0.0, 0.0), (1.0, 10.0)]), 3).unwrap(), vec![0.0, 5.0, 10.0]);
        let s = series(&[(0.0, -60.0), (1.0, -40.0), (4.0, -70.0)]);
        let v = interpolate_to(&s, 5).unwrap();
        for (a, b) in v.iter().zip([-60.0, -40.0, -50.0, -60.0, -70.0]) {
            assert!((a - b).abs() < 1e-12, "{v:?}");
        }
        let u = series(&[(0.0, 1.0), (2.0, 7.0), (4.0, -3.0), (6.0, 2.0)]);
        assert_eq!(interpolate_to(&u, 4).unwrap(), vec![1.0, 7.0, -3.0, 2.0]);
        assert!(matches!(interpolate_to(&series(&[(0.0, 1.0)]), 3), Err(Error::Domain(_))));
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn pearson_match_examples() {
        let pts = [(0.0, -70.0), (1.0, -60.0), (2.0, -50.0), (3.0, -62.0)];
        let chain = chain_from(&pts);
        let shifted: Vec<_> = pts.iter().map(|(t, r)| (*t, r - 7.0)).collect();
        let c = BTreeMap::from([(wid(1), flat_series(4)), (wid(2), series(&shifted))]);
        let a = find_match_pearson(&chain, &c).unwrap();
        assert_eq!(a.wifi_id, Some(wid(2)));
        assert!((a.score - 1.0).abs() < 1e-12);

        let negated: Vec<_> = pts.iter().map(|(t, r)| (*t, -r - 130.0)).collect();
        let c = BTreeMap::from([(wid(3), series(&negated)), (wid(4), flat_series(4))]);
        let a = find_match_pearson(&chain, &c).unwrap();
        assert_eq!((a.wifi_id, a.score), (Some(wid(4)), 0.0));

        let c = BTreeMap::from([(wid(3), series(&[(0.0, -50.0)]))]);
        assert_eq!(find_match_pearson(&chain, &c).unwrap().wifi_id, None);
    }

    #[test]
    fn trips_group_by_id() {
        let mk = |zone, id, t, w: Option<WifiId>| ChainAssociation {
            zone,
            chain_id: id,
            first_seen: t,
            wifi_id: w,
            score: 0.0,
            candidates: 1,
        };
        let trips = reconstruct_trips(&[
            mk(2, 0, 300.0, Some(wid(1))),
            mk(0, 4, 10.0, Some(wid(1))),
            mk(1, 1, 150.0, Some(wid(1))),
            mk(1, 2, 160.0, None),
        ]);
        assert_eq!(trips.len(), 1);
        let zones: Vec<u32> = trips[0].visits.iter().map(|v| v.zone).collect();
        assert_eq!(zones, vec![0, 1, 2]);
    }

    fn arb_series(len: std::ops::Range<usize>) -> impl Strategy<Value = RssiSeries> {
        prop::collection::vec((0.01f64..2.0, -95.0f64..-20.0), len).prop_map(|v| {
            let mut t = 0.0;
            RssiSeries {
                points: v
                    .into_iter()
                    .map(|(dt, r)| {
                        t += dt;
                        (t, r)
                    })
                    .collect(),
            }
        })
    }

    proptest! {
        #[test]
        fn pearson_is_bounded(x in prop::collection::vec(-100.0f64..100.0, 2..40), seed in any::<u64>()) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * ((seed >> (i % 60)) & 3) as f64 - i as f64).collect();
            let r = pearson(&x, &y).unwrap();
            prop_assert!(r.abs() <= 1.0);
        }

        #[test]
        fn interpolation_keeps_endpoints(s in arb_series(2..30), n in 2usize..100) {
            let v = interpolate_to(&s, n).unwrap();
            prop_assert_eq!(v.len(), n);
            prop_assert_eq!(v[0], s.points[0].1);
            prop_assert_eq!(v[n - 1], s.points[s.len() - 1].1);
        }

        #[test]
        fn stats_are_ordered(s in arb_series(1..30)) {
            let st = series_stats(&s).unwrap();
            prop_assert!(st.min <= st.median && st.median <= st.max && st.std >= 0.0);
        }
    }
}
