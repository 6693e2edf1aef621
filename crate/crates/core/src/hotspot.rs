//! Per-segment speeding summaries and the hotspot layer.
//!
//! Each matched fix contributes `max(0, (speed - limit) / limit)` to its
//! segment. Segments keep a count, a compensated sum and a histogram over the
//! six speeding levels; segments with enough fixes become hotspots.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::features::{bin_level, point_speeding, N_LEVELS};
use crate::roadnet::{line_geometry, MatchedPoint, RoadNetwork};

/// Minimum fixes for a segment to count as a hotspot.
pub const DEFAULT_MIN_POINTS: u64 = 1000;

const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HotspotStatistic {
    #[default]
    Mean,
    /// 85th percentile, linear interpolation between order statistics.
    P85,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HotspotConfig {
    pub min_points: u64,
    pub statistic: HotspotStatistic,
}

impl Default for HotspotConfig {
    fn default() -> Self {
        HotspotConfig {
            min_points: DEFAULT_MIN_POINTS,
            statistic: HotspotStatistic::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub segment_id: Arc<str>,
    pub point_count: u64,
    pub mean_speeding_prop: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p85_speeding_prop: Option<f64>,
    /// Share of fixes per speeding level; sums to 1.
    pub bin_shares: [f64; N_LEVELS],
}

impl SegmentStats {
    /// Level holding the most fixes, lowest on ties.
    pub fn dominant_bin(&self) -> usize {
        let mut best = 0;
        for (k, s) in self.bin_shares.iter().enumerate() {
            if *s > self.bin_shares[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HotspotReport {
    pub segments: Vec<SegmentStats>,
    pub skipped_unmatched: u64,
    pub total_points: u64,
}

/// Neumaier running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Default)]
struct SegmentAcc {
    count: u64,
    sum: CompensatedSum,
    bins: [u64; N_LEVELS],
    values: Vec<f64>,
}

/// Streaming accumulator; partial accumulators merge by segment id.
#[derive(Debug, Clone, Default)]
pub struct HotspotAggregator {
    keep_values: bool,
    segments: BTreeMap<Arc<str>, SegmentAcc>,
    skipped: u64,
    total: u64,
}

impl HotspotAggregator {
    pub fn new(statistic: HotspotStatistic) -> Self {
        HotspotAggregator {
            keep_values: statistic == HotspotStatistic::P85,
            ..HotspotAggregator::default()
        }
    }

    /// Adds one fix's speeding proportion (already floored at 0).
    pub fn add(&mut self, segment_id: &Arc<str>, prop: f64) -> Result<()> {
        let level = bin_level(prop)?.index();
        let acc = self.segments.entry(segment_id.clone()).or_default();
        acc.count += 1;
        acc.sum.add(prop);
        acc.bins[level] += 1;
        if self.keep_values {
            acc.values.push(prop);
        }
        self.total += 1;
        Ok(())
    }

    pub fn add_point(&mut self, p: &MatchedPoint) -> Result<()> {
        match (&p.matched.segment_id, &p.attrs) {
            (Some(id), Some(attrs)) => {
                let y = point_speeding(p.point.speed, attrs.speed_limit)?.max(0.0);
                self.add(id, y)
            }
            _ => {
                self.skipped += 1;
                self.total += 1;
                Ok(())
            }
        }
    }

    pub fn merge(&mut self, other: HotspotAggregator) {
        self.skipped += other.skipped;
        self.total += other.total;
        for (id, o) in other.segments {
            let acc = self.segments.entry(id).or_default();
            acc.count += o.count;
            acc.sum.merge(o.sum);
            for (a, b) in acc.bins.iter_mut().zip(o.bins) {
                *a += b;
            }
            acc.values.extend(o.values);
        }
    }

    pub fn finish(self) -> HotspotReport {
        let keep = self.keep_values;
        let segments = self
            .segments
            .into_iter()
            .map(|(segment_id, mut acc)| {
                let n = acc.count as f64;
                let mut bin_shares = [0.0; N_LEVELS];
                for (s, c) in bin_shares.iter_mut().zip(acc.bins) {
                    *s = c as f64 / n;
                }
                let p85_speeding_prop = keep.then(|| {
                    acc.values.sort_by(f64::total_cmp);
                    percentile(&acc.values, 0.85)
                });
                SegmentStats {
                    segment_id,
                    point_count: acc.count,
                    mean_speeding_prop: acc.sum.value() / n,
                    p85_speeding_prop,
                    bin_shares,
                }
            })
            .collect();
        HotspotReport {
            segments,
            skipped_unmatched: self.skipped,
            total_points: self.total,
        }
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Aggregates matched fixes by segment. Work is split into fixed chunks and
/// merged in order, so results do not depend on the thread count.
pub fn aggregate_segments(points: &[MatchedPoint], statistic: HotspotStatistic) -> Result<HotspotReport> {
    let parts: Vec<HotspotAggregator> = points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut agg = HotspotAggregator::new(statistic);
            for p in chunk {
                agg.add_point(p)?;
            }
            Ok(agg)
        })
        .collect::<Result<_>>()?;
    let mut all = HotspotAggregator::new(statistic);
    for p in parts {
        all.merge(p);
    }
    Ok(all.finish())
}

/// Keeps segments with at least `min_points` fixes.
pub fn filter_hotspots(stats: &[SegmentStats], min_points: u64) -> Vec<SegmentStats> {
    stats.iter().filter(|s| s.point_count >= min_points).cloned().collect()
}

/// LineString FeatureCollection ordered by segment id.
pub fn hotspots_geojson(stats: &[SegmentStats], network: &RoadNetwork) -> Result<Value> {
    let by_id: BTreeMap<&str, usize> = network
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| (&*s.segment_id, i))
        .collect();
    let mut sorted: Vec<&SegmentStats> = stats.iter().collect();
    sorted.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
    let mut features = Vec::with_capacity(sorted.len());
    for s in sorted {
        let i = *by_id
            .get(&*s.segment_id)
            .ok_or_else(|| Error::UnknownSegment(s.segment_id.to_string()))?;
        let mut props = Map::new();
        props.insert("segment_id".into(), Value::from(&*s.segment_id));
        props.insert("point_count".into(), Value::from(s.point_count));
        props.insert("mean_speeding_prop".into(), Value::from(s.mean_speeding_prop));
        if let Some(p) = s.p85_speeding_prop {
            props.insert("p85_speeding_prop".into(), Value::from(p));
        }
        props.insert("dominant_bin".into(), Value::from(s.dominant_bin()));
        for (k, share) in s.bin_shares.iter().enumerate() {
            props.insert(format!("share_level_{k}"), Value::from(*share));
        }
        features.push(json!({
            "type": "Feature",
            "geometry": line_geometry(&network.segments[i].polyline),
            "properties": props,
        }));
    }
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

pub fn write_hotspots_geojson<W: Write>(w: W, stats: &[SegmentStats], network: &RoadNetwork) -> Result<()> {
    let doc = hotspots_geojson(stats, network)?;
    serde_json::to_writer_pretty(w, &doc)?;
    Ok(())
}

pub fn write_hotspots_csv<W: Write>(w: W, stats: &[SegmentStats]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["segment_id", "point_count", "mean_speeding_prop", "p85_speeding_prop", "dominant_bin"]
        .map(String::from)
        .to_vec();
    header.extend((0..N_LEVELS).map(|k| format!("share_level_{k}")));
    out.write_record(&header)?;
    let mut sorted: Vec<&SegmentStats> = stats.iter().collect();
    sorted.sort_by(|a, b| a.segment_id.cmp(&b.segment_id));
    for s in sorted {
        let mut rec = vec![
            s.segment_id.to_string(),
            s.point_count.to_string(),
            s.mean_speeding_prop.to_string(),
            s.p85_speeding_prop.map(|v| v.to_string()).unwrap_or_default(),
            s.dominant_bin().to_string(),
        ];
        rec.extend(s.bin_shares.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;
    use crate::ingest::GpsPoint;
    use crate::roadnet::{ContextClass, LandUse, PointMatch, RoadSegment, SegmentAttrs};
    use proptest::prelude::*;
    use smallvec::SmallVec;

    fn point(seg: Option<&str>, speed: f64, limit: f64) -> MatchedPoint {
        MatchedPoint {
            point: GpsPoint {
                journey_id: "j".into(),
                point_id: "p".into(),
                timestamp: 0,
                lat: 28.7,
                lon: -81.3,
                speed,
                heading: 0.0,
                postal_code: None,
            },
            matched: PointMatch {
                segment_id: seg.map(Arc::from),
                perpendicular_distance_m: 1.0,
                heading_deviation_deg: 0.0,
                nearest_signalized_m: f64::INFINITY,
                nearest_unsignalized_m: f64::INFINITY,
                signalized_nearby: SmallVec::new(),
            },
            attrs: seg.map(|_| SegmentAttrs {
                speed_limit: limit,
                context_class: ContextClass::C3C,
                land_use: LandUse::Commercial,
            }),
        }
    }

    fn segment(id: &str) -> RoadSegment {
        RoadSegment {
            segment_id: Arc::from(id),
            polyline: vec![LatLon::new(28.7, -81.3), LatLon::new(28.7, -81.29)],
            speed_limit: 40.0,
            context_class: ContextClass::C3C,
            land_use: LandUse::Commercial,
            functional_class: None,
            extra_attributes: BTreeMap::new(),
        }
    }

    fn stats(id: &str, n: u64) -> SegmentStats {
        SegmentStats {
            segment_id: Arc::from(id),
            point_count: n,
            mean_speeding_prop: 0.1,
            p85_speeding_prop: None,
            bin_shares: [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn single_segment_constant_speeding() {
        let pts: Vec<_> = (0..10).map(|_| point(Some("a"), 52.0, 40.0)).collect();
        let r = aggregate_segments(&pts, HotspotStatistic::Mean).unwrap();
        assert_eq!(r.segments.len(), 1);
        let s = &r.segments[0];
        assert_eq!(s.point_count, 10);
        assert!((s.mean_speeding_prop - 0.3).abs() < 1e-15);
        assert_eq!(s.bin_shares, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.dominant_bin(), 2);
    }

    #[test]
    fn partition_and_skips() {
        let mut pts = vec![point(Some("a"), 30.0, 40.0); 3];
        pts.extend(vec![point(Some("b"), 48.0, 40.0); 5]);
        pts.push(point(None, 50.0, 40.0));
        let r = aggregate_segments(&pts, HotspotStatistic::Mean).unwrap();
        assert_eq!(r.segments.iter().map(|s| s.point_count).collect::<Vec<_>>(), [3, 5]);
        // below the limit floors at zero
        assert_eq!(r.segments[0].mean_speeding_prop, 0.0);
        assert_eq!(r.segments[0].bin_shares[0], 1.0);
        assert_eq!(r.skipped_unmatched, 1);
        assert_eq!(r.total_points, 9);
    }

    #[test]
    fn p85_interpolates() {
        let pts: Vec<_> = (0..11).map(|i| point(Some("a"), 40.0 + 4.0 * i as f64, 40.0)).collect();
        let r = aggregate_segments(&pts, HotspotStatistic::P85).unwrap();
        // order statistic 8.5 of 0.0, 0.1, ..., 1.0
        assert!((r.segments[0].p85_speeding_prop.unwrap() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn threshold_boundary() {
        let s = [stats("a", 999), stats("b", 1000), stats("c", 5000)];
        let kept: Vec<_> = filter_hotspots(&s, DEFAULT_MIN_POINTS).into_iter().map(|s| s.segment_id).collect();
        assert_eq!(kept, [Arc::from("b"), Arc::from("c")]);
        assert_eq!(filter_hotspots(&s, 0), s.to_vec());
    }

    #[test]
    fn geojson_layer() {
        let net = RoadNetwork {
            segments: vec![segment("b"), segment("a")],
            intersections: Vec::new(),
        };
        let doc = hotspots_geojson(&[stats("b", 1200), stats("a", 1000)], &net).unwrap();
        let f = doc["features"].as_array().unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f[0]["properties"]["segment_id"], "a");
        assert_eq!(f[0]["geometry"]["type"], "LineString");
        assert_eq!(f[1]["properties"]["point_count"], 1200);
        assert_eq!(f[1]["properties"]["dominant_bin"], 1);

        let empty = hotspots_geojson(&[], &net).unwrap();
        assert_eq!(empty["features"].as_array().unwrap().len(), 0);
        assert!(matches!(hotspots_geojson(&[stats("zz", 1)], &net), Err(Error::UnknownSegment(_))));

        let mut buf = Vec::new();
        write_hotspots_csv(&mut buf, &[stats("b", 1200), stats("a", 1000)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("a,1000,0.1,,1,0,1,"));
    }

    proptest! {
        #[test]
        fn order_independent(
            raw in prop::collection::vec((0usize..4, 0.0f64..120.0, prop::bool::weighted(0.9)), 1..400),
            seed in any::<u64>(),
        ) {
            let ids = ["s0", "s1", "s2", "s3"];
            let pts: Vec<_> = raw.iter().map(|(s, v, m)| point(m.then_some(ids[*s]), *v, 35.0)).collect();
            let mut shuffled = pts.clone();
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = aggregate_segments(&pts, HotspotStatistic::P85).unwrap();
            let b = aggregate_segments(&shuffled, HotspotStatistic::P85).unwrap();
            prop_assert_eq!(a.skipped_unmatched, b.skipped_unmatched);
            let counted: u64 = a.segments.iter().map(|s| s.point_count).sum::<u64>() + a.skipped_unmatched;
            prop_assert_eq!(counted, pts.len() as u64);
            for (x, y) in a.segments.iter().zip(&b.segments) {
                prop_assert_eq!(&x.segment_id, &y.segment_id);
                prop_assert_eq!(x.point_count, y.point_count);
                prop_assert_eq!(x.bin_shares, y.bin_shares);
                prop_assert!((x.mean_speeding_prop - y.mean_speeding_prop).abs() <= 1e-12);
                prop_assert_eq!(x.p85_speeding_prop, y.p85_speeding_prop);
                prop_assert!((x.bin_shares.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }
}
