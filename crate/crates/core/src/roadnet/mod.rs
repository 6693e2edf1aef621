//! Road attribute layer: segments, intersections, and their GeoJSON profile.

mod index;

pub use index::{enrich_journey, match_point, MatchParams, MatchedJourney, MatchedPoint, NetworkIndex, PointMatch, SegmentAttrs};

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::geo::LatLon;

/// Roadway context classification. Strings outside the modelled set map to `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextClass {
    C1,
    C2,
    C3C,
    C3R,
    C4,
    #[serde(rename = "OTHER")]
    Other,
}

impl ContextClass {
    pub const MODELLED: [ContextClass; 5] = [
        ContextClass::C1,
        ContextClass::C2,
        ContextClass::C3C,
        ContextClass::C3R,
        ContextClass::C4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextClass::C1 => "C1",
            ContextClass::C2 => "C2",
            ContextClass::C3C => "C3C",
            ContextClass::C3R => "C3R",
            ContextClass::C4 => "C4",
            ContextClass::Other => "OTHER",
        }
    }
}

impl FromStr for ContextClass {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "C1" => ContextClass::C1,
            "C2" => ContextClass::C2,
            "C3C" => ContextClass::C3C,
            "C3R" => ContextClass::C3R,
            "C4" => ContextClass::C4,
            "OTHER" => ContextClass::Other,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for ContextClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LandUse {
    Residential,
    Commercial,
    Industrial,
    Institutional,
    Other,
}

impl LandUse {
    pub const MODELLED: [LandUse; 4] = [
        LandUse::Residential,
        LandUse::Commercial,
        LandUse::Industrial,
        LandUse::Institutional,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LandUse::Residential => "RESIDENTIAL",
            LandUse::Commercial => "COMMERCIAL",
            LandUse::Industrial => "INDUSTRIAL",
            LandUse::Institutional => "INSTITUTIONAL",
            LandUse::Other => "OTHER",
        }
    }
}

impl FromStr for LandUse {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "RESIDENTIAL" => LandUse::Residential,
            "COMMERCIAL" => LandUse::Commercial,
            "INDUSTRIAL" => LandUse::Industrial,
            "INSTITUTIONAL" => LandUse::Institutional,
            "OTHER" => LandUse::Other,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for LandUse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub segment_id: Arc<str>,
    pub polyline: Vec<LatLon>,
    /// mph, > 0
    pub speed_limit: f64,
    pub context_class: ContextClass,
    pub land_use: LandUse,
    pub functional_class: Option<String>,
    /// Pass-through properties (lanes, median width, ...). Never used as features.
    pub extra_attributes: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub intersection_id: Arc<str>,
    pub location: LatLon,
    pub signalized: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadNetwork {
    pub segments: Vec<RoadSegment>,
    pub intersections: Vec<Intersection>,
}

/// Property names used when reading a network file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSchema {
    pub segment_id: String,
    pub speed_limit: String,
    pub context_class: String,
    pub land_use: String,
    pub functional_class: String,
    pub intersection_id: String,
    pub signalized: String,
}

impl Default for NetworkSchema {
    fn default() -> Self {
        NetworkSchema {
            segment_id: "segment_id".into(),
            speed_limit: "speed_limit".into(),
            context_class: "context_class".into(),
            land_use: "land_use".into(),
            functional_class: "functional_class".into(),
            intersection_id: "intersection_id".into(),
            signalized: "signalized".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub features_read: usize,
    pub segments: usize,
    pub intersections: usize,
    pub rejected_missing_speed_limit: usize,
    pub rejected_missing_signalized: usize,
    pub unknown_context_class: usize,
    pub unknown_land_use: usize,
}

/// Reads a GeoJSON FeatureCollection into segments and intersections.
pub fn load_network<R: Read>(input: R, schema: &NetworkSchema) -> Result<(RoadNetwork, LoadReport)> {
    let doc: Value = serde_json::from_reader(input)?;
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Schema("network file is not a FeatureCollection".into()))?;

    let mut net = RoadNetwork::default();
    let mut report = LoadReport::default();
    let empty = Map::new();
    for (i, feature) in features.iter().enumerate() {
        report.features_read += 1;
        let geometry = feature.get("geometry").ok_or_else(|| Error::Geometry {
            feature: i,
            reason: "missing geometry".into(),
        })?;
        let props = feature
            .get("properties")
            .and_then(Value::as_object)
            .unwrap_or(&empty);
        let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("");
        let coords = geometry.get("coordinates");
        let feature_id = props
            .get(&schema.segment_id)
            .or_else(|| props.get(&schema.intersection_id))
            .or_else(|| feature.get("id"))
            .map(id_text);
        match kind {
            "LineString" => {
                let polyline = parse_line(coords, i)?;
                let Some(speed_limit) = props
                    .get(&schema.speed_limit)
                    .and_then(Value::as_f64)
                    .filter(|v| v.is_finite() && *v > 0.0)
                else {
                    report.rejected_missing_speed_limit += 1;
                    continue;
                };
                let context_class = match props.get(&schema.context_class).and_then(Value::as_str) {
                    Some(s) => s.parse().unwrap_or_else(|()| {
                        report.unknown_context_class += 1;
                        ContextClass::Other
                    }),
                    None => {
                        report.unknown_context_class += 1;
                        ContextClass::Other
                    }
                };
                let land_use = match props.get(&schema.land_use).and_then(Value::as_str) {
                    Some(s) => s.parse().unwrap_or_else(|()| {
                        report.unknown_land_use += 1;
                        LandUse::Other
                    }),
                    None => {
                        report.unknown_land_use += 1;
                        LandUse::Other
                    }
                };
                let known = [
                    &schema.segment_id,
                    &schema.speed_limit,
                    &schema.context_class,
                    &schema.land_use,
                    &schema.functional_class,
                ];
                let extra_attributes = props
                    .iter()
                    .filter(|(k, _)| !known.contains(k))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect();
                net.segments.push(RoadSegment {
                    segment_id: feature_id.unwrap_or_else(|| format!("seg-{i}")).into(),
                    polyline,
                    speed_limit,
                    context_class,
                    land_use,
                    functional_class: props.get(&schema.functional_class).map(id_text),
                    extra_attributes,
                });
                report.segments += 1;
            }
            "Point" => {
                let location = parse_position(coords, i)?;
                let Some(signalized) = props.get(&schema.signalized).and_then(Value::as_bool) else {
                    report.rejected_missing_signalized += 1;
                    continue;
                };
                net.intersections.push(Intersection {
                    intersection_id: feature_id.unwrap_or_else(|| format!("int-{i}")).into(),
                    location,
                    signalized,
                });
                report.intersections += 1;
            }
            other => {
                return Err(Error::Geometry {
                    feature: i,
                    reason: format!("unsupported geometry type `{other}`"),
                })
            }
        }
    }
    if report.unknown_context_class + report.unknown_land_use > 0 {
        log::warn!(
            "{} segments with unknown context class, {} with unknown land use; mapped to OTHER",
            report.unknown_context_class,
            report.unknown_land_use
        );
    }
    Ok((net, report))
}

fn id_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_position(v: Option<&Value>, feature: usize) -> Result<LatLon> {
    let bad = |reason: &str| Error::Geometry {
        feature,
        reason: reason.into(),
    };
    let arr = v.and_then(Value::as_array).ok_or_else(|| bad("position is not an array"))?;
    if arr.len() < 2 {
        return Err(bad("position needs two coordinates"));
    }
    let lon = arr[0].as_f64().ok_or_else(|| bad("non-numeric longitude"))?;
    let lat = arr[1].as_f64().ok_or_else(|| bad("non-numeric latitude"))?;
    let p = LatLon::new(lat, lon);
    if !p.is_valid() {
        return Err(bad("coordinate outside WGS84 range"));
    }
    Ok(p)
}

fn parse_line(v: Option<&Value>, feature: usize) -> Result<Vec<LatLon>> {
    let arr = v.and_then(Value::as_array).ok_or_else(|| Error::Geometry {
        feature,
        reason: "LineString coordinates are not an array".into(),
    })?;
    if arr.len() < 2 {
        return Err(Error::Geometry {
            feature,
            reason: "LineString needs at least two vertices".into(),
        });
    }
    arr.iter().map(|p| parse_position(Some(p), feature)).collect()
}

/// Serializes a network back into the GeoJSON profile it is read from.
pub fn network_to_geojson(net: &RoadNetwork, schema: &NetworkSchema) -> Value {
    let mut features = Vec::with_capacity(net.segments.len() + net.intersections.len());
    for s in &net.segments {
        let mut props = Map::new();
        props.insert(schema.segment_id.clone(), Value::from(&*s.segment_id));
        props.insert(schema.speed_limit.clone(), Value::from(s.speed_limit));
        props.insert(schema.context_class.clone(), Value::from(s.context_class.as_str()));
        props.insert(schema.land_use.clone(), Value::from(s.land_use.as_str()));
        if let Some(fc) = &s.functional_class {
            props.insert(schema.functional_class.clone(), Value::from(fc.as_str()));
        }
        for (k, v) in &s.extra_attributes {
            props.insert(k.clone(), v.clone());
        }
        features.push(serde_json::json!({
            "type": "Feature",
            "geometry": line_geometry(&s.polyline),
            "properties": props,
        }));
    }
    for x in &net.intersections {
        let mut props = Map::new();
        props.insert(schema.intersection_id.clone(), Value::from(&*x.intersection_id));
        props.insert(schema.signalized.clone(), Value::from(x.signalized));
        features.push(serde_json::json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [x.location.lon, x.location.lat]},
            "properties": props,
        }));
    }
    serde_json::json!({"type": "FeatureCollection", "features": features})
}

pub fn line_geometry(line: &[LatLon]) -> Value {
    let coords: Vec<Value> = line
        .iter()
        .map(|p| serde_json::json!([p.lon, p.lat]))
        .collect();
    serde_json::json!({"type": "LineString", "coordinates": coords})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Result<(RoadNetwork, LoadReport)> {
        load_network(s.as_bytes(), &NetworkSchema::default())
    }

    #[test]
    fn linestring_becomes_segment() {
        let (net, rep) = load(
            r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[-81.3,28.7],[-81.29,28.7]]},
             "properties":{"segment_id":"s1","speed_limit":45,"context_class":"C3C","land_use":"Commercial","lanes":4}}]}"#,
        )
        .unwrap();
        assert_eq!(rep.segments, 1);
        let s = &net.segments[0];
        assert_eq!(&*s.segment_id, "s1");
        assert_eq!(s.speed_limit, 45.0);
        assert_eq!(s.context_class, ContextClass::C3C);
        assert_eq!(s.land_use, LandUse::Commercial);
        assert_eq!(s.extra_attributes["lanes"], Value::from(4));
    }

    #[test]
    fn point_becomes_intersection() {
        let (net, _) = load(
            r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"Point","coordinates":[-81.3,28.7]},
             "properties":{"intersection_id":"x1","signalized":true}}]}"#,
        )
        .unwrap();
        assert_eq!(net.intersections.len(), 1);
        assert!(net.intersections[0].signalized);
        assert_eq!(net.intersections[0].location, LatLon::new(28.7, -81.3));
    }

    #[test]
    fn unknown_context_maps_to_other() {
        let (net, rep) = load(
            r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[-81.3,28.7],[-81.29,28.7]]},
             "properties":{"speed_limit":45,"context_class":"C2T","land_use":"Residential"}}]}"#,
        )
        .unwrap();
        assert_eq!(net.segments[0].context_class, ContextClass::Other);
        assert_eq!(rep.unknown_context_class, 1);
        assert_eq!(&*net.segments[0].segment_id, "seg-0");
    }

    #[test]
    fn missing_speed_limit_rejects_feature_only() {
        let (net, rep) = load(
            r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[-81.3,28.7],[-81.29,28.7]]},
             "properties":{"context_class":"C4","land_use":"Residential"}},
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[-81.3,28.7],[-81.29,28.7]]},
             "properties":{"speed_limit":30,"context_class":"C4","land_use":"Residential"}}]}"#,
        )
        .unwrap();
        assert_eq!(net.segments.len(), 1);
        assert_eq!(rep.rejected_missing_speed_limit, 1);
    }

    #[test]
    fn malformed_geometry_is_fatal() {
        let err = load(
            r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[-81.3,28.7]]},
             "properties":{"speed_limit":30}}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Geometry { feature: 0, .. }));
    }

    #[test]
    fn geojson_round_trip() {
        let src = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[-81.3,28.7],[-81.29,28.71]]},
             "properties":{"segment_id":"a","speed_limit":35,"context_class":"C3R","land_use":"Industrial","functional_class":"minor arterial"}},
            {"type":"Feature","geometry":{"type":"Point","coordinates":[-81.3,28.7]},
             "properties":{"intersection_id":"x","signalized":false}}]}"#;
        let (net, _) = load(src).unwrap();
        let text = network_to_geojson(&net, &NetworkSchema::default()).to_string();
        let (back, _) = load(&text).unwrap();
        assert_eq!(back, net);
    }
}
