use std::sync::Arc;

use rayon::prelude::*;
use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::{ContextClass, LandUse, RoadNetwork};
use crate::error::{Error, Result};
use crate::geo::{
    distance_m, project_onto_polyline, undirected_heading_difference, LatLon, PolylineProjection,
    METERS_PER_DEGREE,
};
use crate::ingest::{GpsPoint, Journey};

type SegmentEntry = GeomWithData<Rectangle<[f64; 2]>, u32>;
type IntersectionEntry = GeomWithData<[f64; 2], u32>;

/// Immutable spatial index over a [`RoadNetwork`]; cheap to share across threads.
pub struct NetworkIndex {
    network: RoadNetwork,
    segments: RTree<SegmentEntry>,
    intersections: RTree<IntersectionEntry>,
}

impl NetworkIndex {
    pub fn build(network: RoadNetwork) -> Result<Self> {
        if network.segments.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        let seg_entries = network
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
                for v in &s.polyline {
                    lo = [lo[0].min(v.lon), lo[1].min(v.lat)];
                    hi = [hi[0].max(v.lon), hi[1].max(v.lat)];
                }
                GeomWithData::new(Rectangle::from_corners(lo, hi), i as u32)
            })
            .collect();
        let int_entries = network
            .intersections
            .iter()
            .enumerate()
            .map(|(i, x)| GeomWithData::new([x.location.lon, x.location.lat], i as u32))
            .collect();
        Ok(NetworkIndex {
            segments: RTree::bulk_load(seg_entries),
            intersections: RTree::bulk_load(int_entries),
            network,
        })
    }

    pub fn network(&self) -> &RoadNetwork {
        &self.network
    }

    pub fn segment_position(&self, id: &str) -> Option<usize> {
        self.network.segments.iter().position(|s| &*s.segment_id == id)
    }

    fn envelope(p: LatLon, radius_m: f64) -> AABB<[f64; 2]> {
        let dlat = radius_m / METERS_PER_DEGREE + 1e-9;
        let dlon = radius_m / (METERS_PER_DEGREE * p.lat.to_radians().cos().max(1e-6)) + 1e-9;
        AABB::from_corners([p.lon - dlon, p.lat - dlat], [p.lon + dlon, p.lat + dlat])
    }

    /// Every segment whose distance to `p` is at most `radius_m`, ordered by
    /// position in the network.
    pub fn segments_within(&self, p: LatLon, radius_m: f64) -> Vec<(usize, PolylineProjection)> {
        let mut out: Vec<_> = self
            .segments
            .locate_in_envelope_intersecting(Self::envelope(p, radius_m))
            .filter_map(|e| {
                let i = e.data as usize;
                project_onto_polyline(p, &self.network.segments[i].polyline)
                    .filter(|proj| proj.distance_m <= radius_m)
                    .map(|proj| (i, proj))
            })
            .collect();
        out.sort_by_key(|(i, _)| *i);
        out
    }

    /// Every intersection within `radius_m` of `p`, with its distance, ordered by position.
    pub fn intersections_within(&self, p: LatLon, radius_m: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<_> = self
            .intersections
            .locate_in_envelope(Self::envelope(p, radius_m))
            .filter_map(|e| {
                let i = e.data as usize;
                let d = distance_m(p, self.network.intersections[i].location);
                (d <= radius_m).then_some((i, d))
            })
            .collect();
        out.sort_by_key(|(i, _)| *i);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchParams {
    pub match_radius_m: f64,
    pub heading_tol_deg: f64,
    pub intersection_radius_m: f64,
    /// Journeys with a smaller matched fraction are flagged `low_coverage`.
    pub min_coverage: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            match_radius_m: 30.0,
            heading_tol_deg: 45.0,
            intersection_radius_m: 50.0,
            min_coverage: 0.5,
        }
    }
}

/// Outcome of matching one fix. Distances are `f64::INFINITY` when nothing
/// lies within the query radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMatch {
    pub segment_id: Option<Arc<str>>,
    #[serde(with = "inf_as_null")]
    pub perpendicular_distance_m: f64,
    /// Difference between heading and the undirected local bearing, in [0, 90].
    pub heading_deviation_deg: f64,
    #[serde(with = "inf_as_null")]
    pub nearest_signalized_m: f64,
    #[serde(with = "inf_as_null")]
    pub nearest_unsignalized_m: f64,
    /// Ids of signalized intersections within the intersection radius.
    #[serde(default, skip_serializing_if = "SmallVec::is_empty")]
    pub signalized_nearby: SmallVec<[Arc<str>; 1]>,
}

impl PointMatch {
    fn unmatched() -> Self {
        PointMatch {
            segment_id: None,
            perpendicular_distance_m: f64::INFINITY,
            heading_deviation_deg: 0.0,
            nearest_signalized_m: f64::INFINITY,
            nearest_unsignalized_m: f64::INFINITY,
            signalized_nearby: SmallVec::new(),
        }
    }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Matches one fix to the nearest heading-compatible segment.
///
/// Candidates are segments within `match_radius_m`. Among those whose local
/// bearing is within `heading_tol_deg` of the heading (either direction of
/// travel), the closest wins; ties go to the smaller heading deviation, then
/// the lexicographically smaller id. With no compatible candidate the plain
/// nearest segment is used.
pub fn match_point(p: LatLon, heading: f64, index: &NetworkIndex, params: &MatchParams) -> PointMatch {
    match_point_at(p, heading, index, params).0
}

fn match_point_at(
    p: LatLon,
    heading: f64,
    index: &NetworkIndex,
    params: &MatchParams,
) -> (PointMatch, Option<usize>) {
    let mut m = PointMatch::unmatched();
    let segs = &index.network.segments;
    let scored: Vec<(usize, f64, f64)> = index
        .segments_within(p, params.match_radius_m)
        .into_iter()
        .map(|(i, proj)| {
            (
                i,
                proj.distance_m,
                undirected_heading_difference(heading, proj.bearing_deg),
            )
        })
        .collect();
    let better = |a: &(usize, f64, f64), b: &(usize, f64, f64)| {
        a.1.total_cmp(&b.1)
            .then(a.2.total_cmp(&b.2))
            .then_with(|| segs[a.0].segment_id.cmp(&segs[b.0].segment_id))
    };
    let chosen = scored
        .iter()
        .filter(|c| c.2 <= params.heading_tol_deg)
        .min_by(|a, b| better(a, b))
        .or_else(|| scored.iter().min_by(|a, b| better(a, b)));
    let position = chosen.map(|c| c.0);
    if let Some(&(i, d, dev)) = chosen {
        m.segment_id = Some(segs[i].segment_id.clone());
        m.perpendicular_distance_m = d;
        m.heading_deviation_deg = dev;
    }
    for (i, d) in index.intersections_within(p, params.intersection_radius_m) {
        let x = &index.network.intersections[i];
        if x.signalized {
            m.nearest_signalized_m = m.nearest_signalized_m.min(d);
            m.signalized_nearby.push(x.intersection_id.clone());
        } else {
            m.nearest_unsignalized_m = m.nearest_unsignalized_m.min(d);
        }
    }
    (m, position)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentAttrs {
    pub speed_limit: f64,
    pub context_class: ContextClass,
    pub land_use: LandUse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPoint {
    pub point: GpsPoint,
    pub matched: PointMatch,
    pub attrs: Option<SegmentAttrs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedJourney {
    pub journey_id: String,
    pub points: Vec<MatchedPoint>,
    /// Matched fraction of points.
    pub coverage: f64,
    pub low_coverage: bool,
}

impl MatchedJourney {
    pub fn start_time(&self) -> i64 {
        self.points.first().map_or(0, |p| p.point.timestamp)
    }
}

/// Matches every point of a journey and attaches its segment attributes.
pub fn enrich_journey(journey: Journey, index: &NetworkIndex, params: &MatchParams) -> MatchedJourney {
    let Journey { journey_id, points } = journey;
    let n = points.len();
    let mut matched_count = 0usize;
    let points: Vec<MatchedPoint> = points
        .into_iter()
        .map(|point| {
            let (matched, position) = match_point_at(point.location(), point.heading, index, params);
            let attrs = position.map(|i| {
                let s = &index.network.segments[i];
                SegmentAttrs {
                    speed_limit: s.speed_limit,
                    context_class: s.context_class,
                    land_use: s.land_use,
                }
            });
            if attrs.is_some() {
                matched_count += 1;
            }
            MatchedPoint {
                point,
                matched,
                attrs,
            }
        })
        .collect();
    let coverage = if n == 0 { 0.0 } else { matched_count as f64 / n as f64 };
    MatchedJourney {
        journey_id,
        points,
        coverage,
        low_coverage: coverage < params.min_coverage,
    }
}

impl NetworkIndex {
    /// Matches many journeys in parallel; output order follows input order.
    pub fn enrich_all(&self, journeys: Vec<Journey>, params: &MatchParams) -> Vec<MatchedJourney> {
        journeys
            .into_par_iter()
            .map(|j| enrich_journey(j, self, params))
            .collect()
    }
}
