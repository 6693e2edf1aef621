//! Planar geometry on a local equirectangular projection.
//!
//! Every distance in the crate is measured in a tangent frame centred on the
//! query point: `x = Δlon · cos(lat_ref) · k`, `y = Δlat · k`, with `k` the
//! meridional metres-per-degree. At county scale the error against a
//! geodesic is well below GPS noise.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Metres per degree of latitude on the sphere above.
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// mph → m/s, exact by definition of the mile.
pub const MPH_TO_MPS: f64 = 0.44704;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Tangent-plane frame anchored at a reference point.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    origin: LatLon,
    x_scale: f64,
}

impl LocalFrame {
    pub fn at(origin: LatLon) -> Self {
        LocalFrame {
            origin,
            x_scale: origin.lat.to_radians().cos() * METERS_PER_DEGREE,
        }
    }

    /// Projects to (east, north) metres relative to the origin.
    #[inline]
    pub fn project(&self, p: LatLon) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.x_scale,
            (p.lat - self.origin.lat) * METERS_PER_DEGREE,
        )
    }

    /// Inverse of [`LocalFrame::project`].
    pub fn unproject(&self, east: f64, north: f64) -> LatLon {
        LatLon {
            lat: self.origin.lat + north / METERS_PER_DEGREE,
            lon: self.origin.lon + east / self.x_scale,
        }
    }
}

/// Distance between two points, in metres.
pub fn distance_m(a: LatLon, b: LatLon) -> f64 {
    let (x, y) = LocalFrame::at(a).project(b);
    x.hypot(y)
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineProjection {
    pub distance_m: f64,
    /// Index of the closest piece (vertex `i` to `i + 1`).
    pub piece: usize,
    /// Compass bearing of that piece, degrees in [0, 360).
    pub bearing_deg: f64,
}

/// Perpendicular distance from `p` to `line` and the bearing of the closest
/// piece. Returns `None` for polylines with fewer than two vertices.
pub fn project_onto_polyline(p: LatLon, line: &[LatLon]) -> Option<PolylineProjection> {
    if line.len() < 2 {
        return None;
    }
    let frame = LocalFrame::at(p);
    let mut best: Option<PolylineProjection> = None;
    let mut prev = frame.project(line[0]);
    for (i, v) in line[1..].iter().enumerate() {
        let next = frame.project(*v);
        let d = point_segment_distance((0.0, 0.0), prev, next);
        if best.is_none_or(|b| d < b.distance_m) {
            best = Some(PolylineProjection {
                distance_m: d,
                piece: i,
                bearing_deg: bearing_of(prev, next),
            });
        }
        prev = next;
    }
    best
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    (p.0 - cx).hypot(p.1 - cy)
}

/// Compass bearing (0 = north, 90 = east) of the vector `a → b` in a local frame.
pub fn bearing_of(a: (f64, f64), b: (f64, f64)) -> f64 {
    normalize_heading((b.0 - a.0).atan2(b.1 - a.1).to_degrees())
}

/// Maps any finite angle into [0, 360).
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Maps an angle difference into (-180, 180].
pub fn wrap180(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Absolute angular difference, in [0, 180].
pub fn heading_difference(a: f64, b: f64) -> f64 {
    wrap180(a - b).abs()
}

/// Difference between a heading and an undirected line bearing, in [0, 90].
pub fn undirected_heading_difference(heading: f64, bearing: f64) -> f64 {
    let d = heading_difference(heading, bearing);
    d.min(180.0 - d)
}
