//! Raw point parsing, journey grouping and journey cleaning.
//!
//! Parsing never aborts on a bad record: the record is skipped and noted in a
//! [`RejectReport`]. Only an unreadable stream is fatal.

use std::collections::{HashMap, HashSet};
use std::hash::{Hash, Hasher};
use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{distance_m, LatLon, MPH_TO_MPS};

/// One telemetry sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub journey_id: String,
    pub point_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
    /// Miles per hour.
    pub speed: f64,
    /// Compass degrees in [0, 360).
    pub heading: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub postal_code: Option<String>,
}

impl GpsPoint {
    pub fn location(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    /// Field-level validity: coordinates in range, speed and heading finite
    /// and in their domains.
    pub fn check(&self) -> Result<(), RejectReason> {
        if self.journey_id.is_empty() {
            return Err(RejectReason::MissingField);
        }
        if !self.location().is_valid() {
            return Err(RejectReason::BadCoordinate);
        }
        if !self.speed.is_finite() || self.speed < 0.0 {
            return Err(RejectReason::BadSpeed);
        }
        if !self.heading.is_finite() || !(0.0..360.0).contains(&self.heading) {
            return Err(RejectReason::BadHeading);
        }
        Ok(())
    }
}

/// Why a single input record was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MissingField,
    Unparsable,
    BadCoordinate,
    BadSpeed,
    BadHeading,
    BadTimestamp,
    /// Point arrived after its journey was already flushed by the streaming grouper.
    LatePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Ndjson,
}

/// Maps logical fields onto input column (or JSON key) names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub journey_id: String,
    pub point_id: String,
    pub timestamp: String,
    pub lat: String,
    pub lon: String,
    pub speed: String,
    pub heading: String,
    pub postal_code: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            journey_id: "journeyId".into(),
            point_id: "dataPointId".into(),
            timestamp: "timestamp".into(),
            lat: "latitude".into(),
            lon: "longitude".into(),
            speed: "speed".into(),
            heading: "heading".into(),
            postal_code: "postalCode".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaConfig {
    pub format: InputFormat,
    pub columns: ColumnMap,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            format: InputFormat::Csv,
            columns: ColumnMap::default(),
        }
    }
}

const MAX_LISTED_REJECTS: usize = 100;

/// Sidecar report of refused records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectReport {
    pub records_read: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub by_reason: Vec<(RejectReason, u64)>,
    /// First offending line numbers (1-based, header is line 1 for CSV).
    pub first_rejected_lines: Vec<u64>,
}

impl RejectReport {
    fn reject(&mut self, line: u64, reason: RejectReason) {
        self.rejected += 1;
        match self.by_reason.iter_mut().find(|(r, _)| *r == reason) {
            Some((_, n)) => *n += 1,
            None => self.by_reason.push((reason, 1)),
        }
        if self.first_rejected_lines.len() < MAX_LISTED_REJECTS {
            self.first_rejected_lines.push(line);
        }
    }

    pub fn merge(&mut self, other: &RejectReport) {
        self.records_read += other.records_read;
        self.accepted += other.accepted;
        for &(reason, n) in &other.by_reason {
            match self.by_reason.iter_mut().find(|(r, _)| *r == reason) {
                Some((_, m)) => *m += n,
                None => self.by_reason.push((reason, n)),
            }
        }
        self.rejected += other.rejected;
        for &l in &other.first_rejected_lines {
            if self.first_rejected_lines.len() < MAX_LISTED_REJECTS {
                self.first_rejected_lines.push(l);
            }
        }
    }
}

/// Streaming point parser. Yields `Err` only for fatal stream errors.
pub struct PointReader<R: Read> {
    inner: Inner<R>,
    report: RejectReport,
}

enum Inner<R: Read> {
    Csv {
        reader: csv::Reader<R>,
        record: csv::StringRecord,
        idx: CsvIndex,
    },
    Ndjson {
        reader: std::io::BufReader<R>,
        line: String,
        line_no: u64,
        columns: ColumnMap,
    },
}

struct CsvIndex {
    journey_id: usize,
    point_id: usize,
    timestamp: usize,
    lat: usize,
    lon: usize,
    speed: usize,
    heading: usize,
    postal_code: Option<usize>,
}

/// Starts parsing `input` according to `schema`.
///
/// Fails immediately if a CSV header lacks a required column.
pub fn parse_points<R: Read>(input: R, schema: &SchemaConfig) -> Result<PointReader<R>> {
    let inner = match schema.format {
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .flexible(true)
                .has_headers(true)
                .from_reader(input);
            let headers = reader.headers()?.clone();
            let find = |name: &str| -> Result<usize> {
                headers
                    .iter()
                    .position(|h| h.trim() == name)
                    .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
            };
            let c = &schema.columns;
            let idx = CsvIndex {
                journey_id: find(&c.journey_id)?,
                point_id: find(&c.point_id)?,
                timestamp: find(&c.timestamp)?,
                lat: find(&c.lat)?,
                lon: find(&c.lon)?,
                speed: find(&c.speed)?,
                heading: find(&c.heading)?,
                postal_code: find(&c.postal_code).ok(),
            };
            Inner::Csv {
                reader,
                record: csv::StringRecord::new(),
                idx,
            }
        }
        InputFormat::Ndjson => Inner::Ndjson {
            reader: std::io::BufReader::new(input),
            line: String::new(),
            line_no: 0,
            columns: schema.columns.clone(),
        },
    };
    Ok(PointReader {
        inner,
        report: RejectReport::default(),
    })
}

impl<R: Read> PointReader<R> {
    pub fn report(&self) -> &RejectReport {
        &self.report
    }

    pub fn into_report(self) -> RejectReport {
        self.report
    }
}

impl<R: Read> Iterator for PointReader<R> {
    type Item = Result<GpsPoint>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let (line, parsed) = match &mut self.inner {
                Inner::Csv {
                    reader,
                    record,
                    idx,
                } => match reader.read_record(record) {
                    Ok(false) => return None,
                    Ok(true) => {
                        let line = record.position().map_or(0, |p| p.line());
                        (line, point_from_csv(record, idx))
                    }
                    Err(e) => match e.kind() {
                        csv::ErrorKind::Io(_) => return Some(Err(e.into())),
                        _ => {
                            let line = e.position().map_or(0, |p| p.line());
                            (line, Err(RejectReason::Unparsable))
                        }
                    },
                },
                Inner::Ndjson {
                    reader,
                    line,
                    line_no,
                    columns,
                } => {
                    line.clear();
                    match reader.read_line(line) {
                        Ok(0) => return None,
                        Ok(_) => {}
                        Err(e) => return Some(Err(e.into())),
                    }
                    *line_no += 1;
                    if line.trim().is_empty() {
                        continue;
                    }
                    (*line_no, point_from_json(line, columns))
                }
            };
            self.report.records_read += 1;
            match parsed.and_then(|p| p.check().map(|()| p)) {
                Ok(p) => {
                    self.report.accepted += 1;
                    return Some(Ok(p));
                }
                Err(reason) => self.report.reject(line, reason),
            }
        }
    }
}

fn parse_f64(s: &str, reason: RejectReason) -> Result<f64, RejectReason> {
    let s = s.trim();
    if s.is_empty() {
        return Err(RejectReason::MissingField);
    }
    s.parse::<f64>().map_err(|_| reason)
}

fn parse_timestamp(s: &str) -> Result<i64, RejectReason> {
    let s = s.trim();
    if s.is_empty() {
        return Err(RejectReason::MissingField);
    }
    s.parse::<i64>().map_err(|_| RejectReason::BadTimestamp)
}

fn point_from_csv(rec: &csv::StringRecord, idx: &CsvIndex) -> Result<GpsPoint, RejectReason> {
    let field = |i: usize| rec.get(i).ok_or(RejectReason::MissingField);
    Ok(GpsPoint {
        journey_id: field(idx.journey_id)?.trim().to_owned(),
        point_id: field(idx.point_id)?.trim().to_owned(),
        timestamp: parse_timestamp(field(idx.timestamp)?)?,
        lat: parse_f64(field(idx.lat)?, RejectReason::BadCoordinate)?,
        lon: parse_f64(field(idx.lon)?, RejectReason::BadCoordinate)?,
        speed: parse_f64(field(idx.speed)?, RejectReason::BadSpeed)?,
        heading: parse_f64(field(idx.heading)?, RejectReason::BadHeading)?,
        postal_code: idx
            .postal_code
            .and_then(|i| rec.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned),
    })
}

fn point_from_json(line: &str, cols: &ColumnMap) -> Result<GpsPoint, RejectReason> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|_| RejectReason::Unparsable)?;
    let obj = value.as_object().ok_or(RejectReason::Unparsable)?;
    let text = |key: &str| -> Result<String, RejectReason> {
        match obj.get(key) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
            _ => Err(RejectReason::MissingField),
        }
    };
    let num = |key: &str, reason| -> Result<f64, RejectReason> {
        match obj.get(key) {
            Some(serde_json::Value::Number(n)) => n.as_f64().ok_or(reason),
            Some(serde_json::Value::String(s)) => parse_f64(s, reason),
            _ => Err(RejectReason::MissingField),
        }
    };
    let timestamp = match obj.get(&cols.timestamp) {
        Some(serde_json::Value::Number(n)) => n.as_i64().ok_or(RejectReason::BadTimestamp)?,
        Some(serde_json::Value::String(s)) => parse_timestamp(s)?,
        _ => return Err(RejectReason::MissingField),
    };
    Ok(GpsPoint {
        journey_id: text(&cols.journey_id)?,
        point_id: text(&cols.point_id)?,
        timestamp,
        lat: num(&cols.lat, RejectReason::BadCoordinate)?,
        lon: num(&cols.lon, RejectReason::BadCoordinate)?,
        speed: num(&cols.speed, RejectReason::BadSpeed)?,
        heading: num(&cols.heading, RejectReason::BadHeading)?,
        postal_code: text(&cols.postal_code).ok(),
    })
}

/// A time-ordered run of points from one ignition cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Journey {
    pub journey_id: String,
    pub points: Vec<GpsPoint>,
}

impl Journey {
    pub fn start_time(&self) -> i64 {
        self.points.first().map_or(0, |p| p.timestamp)
    }

    pub fn end_time(&self) -> i64 {
        self.points.last().map_or(0, |p| p.timestamp)
    }

    pub fn duration_s(&self) -> i64 {
        self.end_time() - self.start_time()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupConfig {
    /// Split a journey where consecutive fixes are further apart than this.
    pub gap_split_s: i64,
    /// Streaming grouper: a journey is closed once this many records pass
    /// without a point for it.
    pub flush_window: usize,
}

impl Default for GroupConfig {
    fn default() -> Self {
        GroupConfig {
            gap_split_s: 600,
            flush_window: 50_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStats {
    pub points_in: u64,
    pub duplicates_collapsed: u64,
    pub late_points: u64,
    /// Fragments with fewer than two points after dedup and gap splitting.
    pub fragments_dropped: u64,
    pub points_in_dropped_fragments: u64,
    pub journeys_out: u64,
}

/// Groups an in-memory point set into journeys.
///
/// Output is ordered by first timestamp, then journey id.
pub fn group_journeys(
    points: impl IntoIterator<Item = GpsPoint>,
    cfg: &GroupConfig,
) -> (Vec<Journey>, GroupStats) {
    let mut stats = GroupStats::default();
    let mut order: Vec<String> = Vec::new();
    let mut buckets: HashMap<String, Vec<GpsPoint>> = HashMap::new();
    for p in points {
        stats.points_in += 1;
        match buckets.get_mut(&p.journey_id) {
            Some(v) => v.push(p),
            None => {
                order.push(p.journey_id.clone());
                buckets.insert(p.journey_id.clone(), vec![p]);
            }
        }
    }
    let mut out = Vec::new();
    for id in order {
        let pts = buckets.remove(&id).unwrap_or_default();
        finish_journey(id, pts, cfg, &mut stats, &mut out);
    }
    sort_journeys(&mut out);
    (out, stats)
}

fn sort_journeys(js: &mut [Journey]) {
    js.sort_by(|a, b| {
        a.start_time()
            .cmp(&b.start_time())
            .then_with(|| a.journey_id.cmp(&b.journey_id))
    });
}

/// Sorts, deduplicates (keep first) and gap-splits one journey's points.
fn finish_journey(
    id: String,
    mut pts: Vec<GpsPoint>,
    cfg: &GroupConfig,
    stats: &mut GroupStats,
    out: &mut Vec<Journey>,
) {
    // stable: among equal timestamps the first-seen record stays first
    pts.sort_by_key(|p| p.timestamp);
    let before = pts.len();
    pts.dedup_by(|later, earlier| later.timestamp == earlier.timestamp);
    stats.duplicates_collapsed += (before - pts.len()) as u64;

    let mut pieces: Vec<Vec<GpsPoint>> = Vec::new();
    let mut current: Vec<GpsPoint> = Vec::new();
    for p in pts {
        if let Some(last) = current.last() {
            if p.timestamp - last.timestamp > cfg.gap_split_s {
                pieces.push(std::mem::take(&mut current));
            }
        }
        current.push(p);
    }
    if !current.is_empty() {
        pieces.push(current);
    }

    let split = pieces.len() > 1;
    for (k, piece) in pieces.into_iter().enumerate() {
        if piece.len() < 2 {
            stats.fragments_dropped += 1;
            stats.points_in_dropped_fragments += piece.len() as u64;
            continue;
        }
        let journey_id = if split {
            format!("{id}#{k}")
        } else {
            id.clone()
        };
        stats.journeys_out += 1;
        out.push(Journey {
            journey_id,
            points: piece,
        });
    }
}

/// Bounded-memory grouper for streams in which each journey's records are
/// clustered (any order within the cluster).
///
/// A journey is emitted once `flush_window` records pass without a point for
/// it. Points arriving after their journey was flushed are refused as
/// [`RejectReason::LatePoint`].
pub struct JourneyGrouper {
    cfg: GroupConfig,
    open: HashMap<String, (u64, Vec<GpsPoint>)>,
    flushed: HashSet<u64>,
    seen: u64,
    last_sweep: u64,
    stats: GroupStats,
}

impl JourneyGrouper {
    pub fn new(cfg: GroupConfig) -> Self {
        JourneyGrouper {
            cfg,
            open: HashMap::new(),
            flushed: HashSet::new(),
            seen: 0,
            last_sweep: 0,
            stats: GroupStats::default(),
        }
    }

    /// Adds a point; completed journeys are appended to `out` in
    /// (first timestamp, id) order within each flush.
    pub fn push(&mut self, p: GpsPoint, out: &mut Vec<Journey>) {
        self.seen += 1;
        self.stats.points_in += 1;
        if let Some((last, pts)) = self.open.get_mut(&p.journey_id) {
            *last = self.seen;
            pts.push(p);
        } else if self.flushed.contains(&id_hash(&p.journey_id)) {
            self.stats.late_points += 1;
        } else {
            self.open.insert(p.journey_id.clone(), (self.seen, vec![p]));
        }
        let window = self.cfg.flush_window.max(1) as u64;
        if self.seen - self.last_sweep >= window {
            self.last_sweep = self.seen;
            let horizon = self.seen.saturating_sub(window);
            let mut closed: Vec<String> = self
                .open
                .iter()
                .filter(|(_, (last, _))| *last <= horizon)
                .map(|(k, _)| k.clone())
                .collect();
            closed.sort();
            self.emit(closed, out);
        }
    }

    /// Flushes every open journey.
    pub fn finish(&mut self, out: &mut Vec<Journey>) {
        let mut all: Vec<String> = self.open.keys().cloned().collect();
        all.sort();
        self.emit(all, out);
    }

    fn emit(&mut self, ids: Vec<String>, out: &mut Vec<Journey>) {
        let start = out.len();
        for id in ids {
            if let Some((_, pts)) = self.open.remove(&id) {
                self.flushed.insert(id_hash(&id));
                finish_journey(id, pts, &self.cfg, &mut self.stats, out);
            }
        }
        sort_journeys(&mut out[start..]);
    }

    pub fn stats(&self) -> &GroupStats {
        &self.stats
    }

    pub fn open_journeys(&self) -> usize {
        self.open.len()
    }
}

fn id_hash(id: &str) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    id.hash(&mut h);
    h.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub min_points: usize,
    pub min_duration_s: i64,
    /// Points implying a faster speed-over-ground from the last kept fix are dropped.
    pub max_implied_speed_mph: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            min_points: 5,
            min_duration_s: 30,
            max_implied_speed_mph: 250.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JourneyRejectReason {
    TooFewPoints,
    TooShort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JourneyRejection {
    pub journey_id: String,
    pub reason: JourneyRejectReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub journey: Journey,
    pub teleports_dropped: usize,
}

/// Drops teleport fixes, then applies the point-count and duration gates.
pub fn validate_journey(
    journey: Journey,
    cfg: &ValidationConfig,
) -> Result<Validated, JourneyRejection> {
    let max_mps = cfg.max_implied_speed_mph * MPH_TO_MPS;
    let Journey { journey_id, points } = journey;
    let n_in = points.len();
    let mut kept: Vec<GpsPoint> = Vec::with_capacity(n_in);
    for p in points {
        if let Some(prev) = kept.last() {
            let dt = (p.timestamp - prev.timestamp) as f64;
            let d = distance_m(prev.location(), p.location());
            if d > max_mps * dt {
                continue;
            }
        }
        kept.push(p);
    }
    let teleports_dropped = n_in - kept.len();
    let journey = Journey {
        journey_id,
        points: kept,
    };
    if journey.points.len() < cfg.min_points.max(2) {
        return Err(JourneyRejection {
            journey_id: journey.journey_id,
            reason: JourneyRejectReason::TooFewPoints,
        });
    }
    if journey.duration_s() < cfg.min_duration_s {
        return Err(JourneyRejection {
            journey_id: journey.journey_id,
            reason: JourneyRejectReason::TooShort,
        });
    }
    Ok(Validated {
        journey,
        teleports_dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LocalFrame;

    pub(crate) fn pt(journey: &str, t: i64, lat: f64, lon: f64) -> GpsPoint {
        GpsPoint {
            journey_id: journey.into(),
            point_id: format!("{journey}-{t}"),
            timestamp: t,
            lat,
            lon,
            speed: 30.0,
            heading: 90.0,
            postal_code: None,
        }
    }

    const HEADER: &str = "journeyId,dataPointId,timestamp,latitude,longitude,speed,heading,postalCode\n";

    #[test]
    fn valid_line_is_identity() {
        let data = format!("{HEADER}j1,p1,1600000000,28.7,-81.3,42.5,181.25,32771\n");
        let mut r = parse_points(data.as_bytes(), &SchemaConfig::default()).unwrap();
        let p = r.next().unwrap().unwrap();
        assert_eq!(
            p,
            GpsPoint {
                journey_id: "j1".into(),
                point_id: "p1".into(),
                timestamp: 1_600_000_000,
                lat: 28.7,
                lon: -81.3,
                speed: 42.5,
                heading: 181.25,
                postal_code: Some("32771".into()),
            }
        );
        assert!(r.next().is_none());
        assert_eq!(r.report().rejected, 0);
    }

    #[test]
    fn out_of_range_latitude_is_rejected() {
        let data = format!(
            "{HEADER}j1,p1,1600000000,91,-81.3,42.5,10,\nj1,p2,1600000003,28.7,-81.3,42.5,10,\n"
        );
        let mut r = parse_points(data.as_bytes(), &SchemaConfig::default()).unwrap();
        let pts: Vec<_> = r.by_ref().map(Result::unwrap).collect();
        assert_eq!(pts.len(), 1);
        let rep = r.report();
        assert_eq!(rep.rejected, 1);
        assert_eq!(rep.first_rejected_lines, vec![2]);
        assert_eq!(rep.by_reason, vec![(RejectReason::BadCoordinate, 1)]);
    }

    #[test]
    fn malformed_lines_do_not_abort() {
        let data = format!(
            "{HEADER}garbage\nj1,p1,abc,28.7,-81.3,1,1,\nj1,p2,5,28.7,-81.3,-1,1,\nj1,p3,5,28.7,-81.3,1,360,\nj1,p4,6,28.7,-81.3,1,359.9,\n"
        );
        let mut r = parse_points(data.as_bytes(), &SchemaConfig::default()).unwrap();
        let n = r.by_ref().filter_map(|x| x.ok()).count();
        assert_eq!(n, 1);
        assert_eq!(r.report().rejected, 4);
        assert_eq!(r.report().first_rejected_lines, vec![2, 3, 4, 5]);
    }

    #[test]
    fn missing_header_column_is_fatal() {
        let data = "journeyId,timestamp\n";
        assert!(matches!(
            parse_points(data.as_bytes(), &SchemaConfig::default()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn ndjson_with_remapped_columns() {
        let schema = SchemaConfig {
            format: InputFormat::Ndjson,
            columns: ColumnMap {
                timestamp: "ts".into(),
                ..ColumnMap::default()
            },
        };
        let data = r#"{"journeyId":"a","dataPointId":"1","ts":10,"latitude":1.0,"longitude":2.0,"speed":3.0,"heading":4.0}
not json
{"journeyId":"a","dataPointId":"2","ts":"13","latitude":"1.0","longitude":2.0,"speed":3.0,"heading":4.0}
"#;
        let mut r = parse_points(data.as_bytes(), &schema).unwrap();
        let pts: Vec<_> = r.by_ref().map(Result::unwrap).collect();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].timestamp, 13);
        assert_eq!(r.report().first_rejected_lines, vec![2]);
    }

    #[test]
    fn grouping_sorts_shuffled_points() {
        let ts = [12, 3, 9, 0, 6];
        let pts: Vec<_> = ts.iter().map(|&t| pt("a", t, 28.7, -81.3)).collect();
        let (js, _) = group_journeys(pts, &GroupConfig::default());
        assert_eq!(js.len(), 1);
        let got: Vec<_> = js[0].points.iter().map(|p| p.timestamp).collect();
        assert_eq!(got, vec![0, 3, 6, 9, 12]);
    }

    #[test]
    fn grouping_splits_on_long_gap() {
        let ts = [0, 3, 6, 706, 709, 712];
        let pts: Vec<_> = ts.iter().map(|&t| pt("a", t, 28.7, -81.3)).collect();
        let (js, _) = group_journeys(pts, &GroupConfig::default());
        assert_eq!(js.len(), 2);
        assert_eq!(js[0].journey_id, "a#0");
        assert_eq!(js[1].journey_id, "a#1");
        assert_eq!(js[1].start_time(), 706);
    }

    #[test]
    fn grouping_partitions_interleaved_ids() {
        let mut pts = Vec::new();
        for t in 0..6 {
            pts.push(pt("a", t * 3, 28.7, -81.3));
            pts.push(pt("b", t * 3 + 1, 28.7, -81.3));
        }
        let (js, stats) = group_journeys(pts, &GroupConfig::default());
        assert_eq!(js.len(), 2);
        assert!(js[0].points.iter().all(|p| p.journey_id == "a"));
        assert!(js[1].points.iter().all(|p| p.journey_id == "b"));
        assert_eq!(stats.journeys_out, 2);
    }

    #[test]
    fn duplicate_timestamps_keep_first() {
        let mut a = pt("a", 3, 28.7, -81.3);
        a.point_id = "first".into();
        let mut b = pt("a", 3, 28.7, -81.3);
        b.point_id = "second".into();
        let (js, stats) = group_journeys(vec![pt("a", 6, 28.7, -81.3), a, b], &GroupConfig::default());
        assert_eq!(js[0].points[0].point_id, "first");
        assert_eq!(stats.duplicates_collapsed, 1);
    }

    #[test]
    fn single_point_journeys_are_dropped() {
        let (js, stats) = group_journeys(vec![pt("a", 0, 0.0, 0.0)], &GroupConfig::default());
        assert!(js.is_empty());
        assert_eq!(stats.fragments_dropped, 1);
    }

    #[test]
    fn streaming_matches_in_memory_set() {
        let mut pts = Vec::new();
        for j in 0..20 {
            for t in (0..10).rev() {
                pts.push(pt(&format!("j{j:02}"), 1000 * j + t * 3, 28.7, -81.3));
            }
        }
        let (mem, _) = group_journeys(pts.clone(), &GroupConfig::default());
        let mut g = JourneyGrouper::new(GroupConfig {
            flush_window: 15,
            ..GroupConfig::default()
        });
        let mut out = Vec::new();
        for p in pts {
            g.push(p, &mut out);
        }
        g.finish(&mut out);
        assert_eq!(out, mem);
        assert_eq!(g.stats().late_points, 0);
    }

    #[test]
    fn too_few_points_rejected() {
        let j = Journey {
            journey_id: "a".into(),
            points: (0..3).map(|t| pt("a", t * 20, 28.7, -81.3)).collect(),
        };
        let err = validate_journey(j, &ValidationConfig::default()).unwrap_err();
        assert_eq!(err.reason, JourneyRejectReason::TooFewPoints);
    }

    #[test]
    fn teleport_point_is_dropped() {
        let f = LocalFrame::at(crate::geo::LatLon::new(28.7, -81.3));
        let at = |t: i64, east: f64| {
            let ll = f.unproject(east, 0.0);
            pt("a", t, ll.lat, ll.lon)
        };
        // 5 km in 3 s is 6000 km/h
        let pts = vec![
            at(0, 0.0),
            at(3, 40.0),
            at(6, 5040.0),
            at(9, 80.0),
            at(12, 120.0),
            at(15, 160.0),
            at(40, 400.0),
        ];
        let j = Journey {
            journey_id: "a".into(),
            points: pts,
        };
        let v = validate_journey(j, &ValidationConfig::default()).unwrap();
        assert_eq!(v.teleports_dropped, 1);
        assert!(v.journey.points.iter().all(|p| p.timestamp != 6));
    }

    #[test]
    fn clean_journey_unchanged() {
        let f = LocalFrame::at(crate::geo::LatLon::new(28.7, -81.3));
        let pts: Vec<_> = (0..100)
            .map(|i| {
                let ll = f.unproject(i as f64 * 20.0, 0.0);
                pt("a", i * 3, ll.lat, ll.lon)
            })
            .collect();
        let j = Journey {
            journey_id: "a".into(),
            points: pts,
        };
        let v = validate_journey(j.clone(), &ValidationConfig::default()).unwrap();
        assert_eq!(v.journey, j);
        assert_eq!(v.teleports_dropped, 0);
    }
}
