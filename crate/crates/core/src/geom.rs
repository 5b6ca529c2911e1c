//! Planar geometry primitives: local projection, bearings, and
//! point-to-polyline projection.
//!
//! All distance math is Euclidean on a local equirectangular plane centered
//! on the dataset; headings are degrees clockwise from north (0 = north,
//! 90 = east).

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// A position on the local planar projection, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Euclidean distance to another point, meters.
    pub fn dist(&self, other: GeoPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing from this point to another, degrees clockwise from north
    /// in `[0, 360)`. Coincident points yield 0.
    pub fn bearing_to(&self, other: GeoPoint) -> f64 {
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        if dx == 0.0 && dy == 0.0 {
            return 0.0;
        }
        dx.atan2(dy).to_degrees().rem_euclid(360.0)
    }
}

/// Equirectangular projection centered on a reference latitude/longitude.
///
/// Exactly invertible, which keeps the WGS84 round trip well under the
/// 0.5 m budget at city scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lat0_deg: f64,
    pub lon0_deg: f64,
    cos_lat0: f64,
}

impl Projection {
    pub fn centered(lat0_deg: f64, lon0_deg: f64) -> Self {
        Self {
            lat0_deg,
            lon0_deg,
            cos_lat0: lat0_deg.to_radians().cos(),
        }
    }

    pub fn to_planar(&self, lat_deg: f64, lon_deg: f64) -> GeoPoint {
        let x = (lon_deg - self.lon0_deg).to_radians() * self.cos_lat0 * EARTH_RADIUS_M;
        let y = (lat_deg - self.lat0_deg).to_radians() * EARTH_RADIUS_M;
        GeoPoint::new(x, y)
    }

    /// Inverse projection; returns `(lat_deg, lon_deg)`.
    pub fn to_wgs84(&self, p: GeoPoint) -> (f64, f64) {
        let lat = self.lat0_deg + (p.y / EARTH_RADIUS_M).to_degrees();
        let lon = self.lon0_deg + (p.x / (EARTH_RADIUS_M * self.cos_lat0)).to_degrees();
        (lat, lon)
    }
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineProjection {
    /// Closest point on the polyline (clamped to its extent).
    pub point: GeoPoint,
    /// Distance from the query point to `point`, meters.
    pub distance: f64,
    /// Arc-length position of `point` along the polyline, meters from the
    /// first vertex.
    pub arc_offset: f64,
}

/// Total length of a polyline, meters.
pub fn polyline_length(poly: &[GeoPoint]) -> f64 {
    poly.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Closest point of `poly` to `p`, clamped to the polyline extent.
/// Among equidistant sub-segments the one earliest in arc length wins.
///
/// Panics if `poly` has fewer than 2 vertices.
pub fn project_to_polyline(poly: &[GeoPoint], p: GeoPoint) -> PolylineProjection {
    assert!(poly.len() >= 2, "polyline needs at least 2 vertices");
    let mut best = PolylineProjection {
        point: poly[0],
        distance: f64::INFINITY,
        arc_offset: 0.0,
    };
    let mut offset = 0.0;
    for w in poly.windows(2) {
        let (a, b) = (w[0], w[1]);
        let seg_len = a.dist(b);
        let t = if seg_len > 0.0 {
            (((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / (seg_len * seg_len))
                .clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = GeoPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        let d = p.dist(q);
        if d < best.distance {
            best = PolylineProjection {
                point: q,
                distance: d,
                arc_offset: offset + t * seg_len,
            };
        }
        offset += seg_len;
    }
    best
}

/// The point at arc-length `offset` along `poly`, clamped to its extent.
pub fn point_at_offset(poly: &[GeoPoint], offset: f64) -> GeoPoint {
    assert!(poly.len() >= 2, "polyline needs at least 2 vertices");
    if offset <= 0.0 {
        return poly[0];
    }
    let mut remaining = offset;
    for w in poly.windows(2) {
        let (a, b) = (w[0], w[1]);
        let seg_len = a.dist(b);
        if remaining <= seg_len && seg_len > 0.0 {
            let t = remaining / seg_len;
            return GeoPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        }
        remaining -= seg_len;
    }
    *poly.last().unwrap()
}

/// Split `poly` at arc-length `offset`, returning the two halves. Both
/// halves contain the split point; vertices are never reordered.
pub fn split_polyline(poly: &[GeoPoint], offset: f64) -> (Vec<GeoPoint>, Vec<GeoPoint>) {
    assert!(poly.len() >= 2, "polyline needs at least 2 vertices");
    let split = point_at_offset(poly, offset);
    let mut first = Vec::new();
    let mut acc = 0.0;
    let mut cut_index = poly.len() - 1;
    for (i, w) in poly.windows(2).enumerate() {
        first.push(w[0]);
        let seg_len = w[0].dist(w[1]);
        if acc + seg_len >= offset {
            cut_index = i + 1;
            break;
        }
        acc += seg_len;
    }
    first.push(split);
    let mut second = vec![split];
    second.extend_from_slice(&poly[cut_index..]);
    (first, second)
}
