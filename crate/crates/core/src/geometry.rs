//! Great-circle distances, polygons and the local planar approximations used
//! for point-to-parcel distances and trajectory projection.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Length of one degree of arc on the mean-radius sphere (about 111,195 m).
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// A WGS84 position in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    /// Offsets this position by `east_m`/`north_m` meters using the
    /// equirectangular approximation at this latitude.
    pub fn offset_m(&self, east_m: f64, north_m: f64) -> LatLon {
        let cos_lat = self.lat.to_radians().cos();
        LatLon {
            lat: self.lat + north_m / METERS_PER_DEGREE,
            lon: self.lon + east_m / (METERS_PER_DEGREE * cos_lat),
        }
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let d_phi = (b.lat - a.lat).to_radians();
    let d_lambda = (b.lon - a.lon).to_radians();

    let h = (d_phi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (d_lambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Local equirectangular frame: meters east/north of `origin`.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    origin: LatLon,
    meters_per_lon: f64,
}

impl LocalFrame {
    pub fn new(origin: LatLon) -> Self {
        Self {
            origin,
            meters_per_lon: METERS_PER_DEGREE * origin.lat.to_radians().cos(),
        }
    }

    pub fn origin(&self) -> LatLon {
        self.origin
    }

    pub fn project(&self, p: LatLon) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.meters_per_lon,
            (p.lat - self.origin.lat) * METERS_PER_DEGREE,
        )
    }

    /// Degrees of longitude and latitude spanned by `meters` in this frame.
    pub fn degree_span(&self, meters: f64) -> (f64, f64) {
        let dlon = if self.meters_per_lon > 1e-9 {
            meters / self.meters_per_lon
        } else {
            360.0
        };
        (dlon, meters / METERS_PER_DEGREE)
    }
}

/// Axis-aligned bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

/// A polygon with an exterior ring and optional holes. Rings are stored open
/// (the closing vertex is not repeated).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    exterior: Vec<LatLon>,
    holes: Vec<Vec<LatLon>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PolygonError {
    #[error("ring has fewer than three distinct vertices")]
    TooFewVertices,
    #[error("ring has zero area")]
    ZeroArea,
    #[error("ring is self-intersecting")]
    SelfIntersecting,
    #[error("vertex outside WGS84 bounds")]
    BadCoordinate,
}

impl Polygon {
    /// Builds a validated polygon. Rings may be given closed or open.
    pub fn new(exterior: Vec<LatLon>, holes: Vec<Vec<LatLon>>) -> Result<Self, PolygonError> {
        let exterior = open_ring(exterior);
        validate_ring(&exterior)?;
        let holes = holes
            .into_iter()
            .map(|h| {
                let h = open_ring(h);
                validate_ring(&h).map(|_| h)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { exterior, holes })
    }

    /// Axis-aligned rectangle, convenient for grids and tests.
    pub fn rectangle(min: LatLon, max: LatLon) -> Self {
        Self {
            exterior: vec![
                LatLon::new(min.lat, min.lon),
                LatLon::new(min.lat, max.lon),
                LatLon::new(max.lat, max.lon),
                LatLon::new(max.lat, min.lon),
            ],
            holes: Vec::new(),
        }
    }

    pub fn exterior(&self) -> &[LatLon] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<LatLon>] {
        &self.holes
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox {
            min_lon: f64::INFINITY,
            min_lat: f64::INFINITY,
            max_lon: f64::NEG_INFINITY,
            max_lat: f64::NEG_INFINITY,
        };
        for p in &self.exterior {
            b.min_lon = b.min_lon.min(p.lon);
            b.min_lat = b.min_lat.min(p.lat);
            b.max_lon = b.max_lon.max(p.lon);
            b.max_lat = b.max_lat.max(p.lat);
        }
        b
    }

    /// Vertex centroid of the exterior ring.
    pub fn vertex_centroid(&self) -> LatLon {
        let n = self.exterior.len() as f64;
        let (lat, lon) = self
            .exterior
            .iter()
            .fold((0.0, 0.0), |(a, o), p| (a + p.lat, o + p.lon));
        LatLon::new(lat / n, lon / n)
    }

    /// Point-in-polygon by ray casting; points inside a hole are outside.
    pub fn contains(&self, p: LatLon) -> bool {
        ring_contains(&self.exterior, p) && !self.holes.iter().any(|h| ring_contains(h, p))
    }

    /// Distance in meters from `p` to the polygon: zero when contained,
    /// otherwise the distance to the nearest boundary point, evaluated in a
    /// local planar frame centered on `p`.
    pub fn distance_m(&self, p: LatLon) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let frame = LocalFrame::new(p);
        std::iter::once(&self.exterior)
            .chain(self.holes.iter())
            .map(|ring| ring_distance(ring, &frame))
            .fold(f64::INFINITY, f64::min)
    }

    /// Closed rings as `[lon, lat]` pairs, the GeoJSON coordinate layout.
    pub fn to_geojson_rings(&self) -> Vec<Vec<[f64; 2]>> {
        std::iter::once(&self.exterior)
            .chain(self.holes.iter())
            .map(|ring| {
                ring.iter()
                    .chain(ring.first())
                    .map(|p| [p.lon, p.lat])
                    .collect()
            })
            .collect()
    }
}

fn open_ring(mut ring: Vec<LatLon>) -> Vec<LatLon> {
    while ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring.dedup();
    ring
}

fn validate_ring(ring: &[LatLon]) -> Result<(), PolygonError> {
    if ring.iter().any(|p| !p.is_valid()) {
        return Err(PolygonError::BadCoordinate);
    }
    if ring.len() < 3 {
        return Err(PolygonError::TooFewVertices);
    }
    let area2: f64 = (0..ring.len())
        .map(|i| {
            let a = ring[i];
            let b = ring[(i + 1) % ring.len()];
            a.lon * b.lat - b.lon * a.lat
        })
        .sum();
    if area2.abs() < 1e-18 {
        return Err(PolygonError::ZeroArea);
    }
    let n = ring.len();
    for i in 0..n {
        let (a1, a2) = (ring[i], ring[(i + 1) % n]);
        for j in (i + 1)..n {
            // adjacent edges share a vertex by construction
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (b1, b2) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return Err(PolygonError::SelfIntersecting);
            }
        }
    }
    Ok(())
}

fn orient(a: LatLon, b: LatLon, c: LatLon) -> f64 {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn on_segment(a: LatLon, b: LatLon, p: LatLon) -> bool {
    p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}

fn segments_intersect(p1: LatLon, p2: LatLon, q1: LatLon, q2: LatLon) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn ring_contains(ring: &[LatLon], p: LatLon) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
            if p.lon < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn ring_distance(ring: &[LatLon], frame: &LocalFrame) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let a = frame.project(ring[i]);
            let b = frame.project(ring[(i + 1) % n]);
            origin_to_segment(a, b)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Distance from the origin to segment `ab` in the plane.
fn origin_to_segment(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (-(a.0 * dx + a.1 * dy) / len2).clamp(0.0, 1.0)
    };
    let (x, y) = (a.0 + t * dx, a.1 + t * dy);
    x.hypot(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn haversine_identity_is_zero() {
        let a = LatLon::new(41.88, -87.63);
        assert_eq!(haversine(a, a), 0.0);
    }

    #[test]
    fn haversine_one_degree_on_equator() {
        // arc length R * pi / 180
        let d = haversine(LatLon::new(0.0, 0.0), LatLon::new(0.0, 1.0));
        assert_abs_diff_eq!(d, 111_194.926_644_558_74, epsilon = 1e-6);
        assert_abs_diff_eq!(d, 111_195.0, epsilon = 1.0);
    }

    #[test]
    fn haversine_antipodal() {
        let d = haversine(LatLon::new(0.0, 0.0), LatLon::new(0.0, 180.0));
        assert_abs_diff_eq!(d, std::f64::consts::PI * EARTH_RADIUS_M, epsilon = 1e-6);
        assert_abs_diff_eq!(d, 20_015_087.0, epsilon = 10.0);
    }

    fn arb_point() -> impl Strategy<Value = LatLon> {
        (-89.0f64..89.0, -179.0f64..179.0).prop_map(|(lat, lon)| LatLon::new(lat, lon))
    }

    proptest! {
        #[test]
        fn haversine_symmetric_and_triangle(a in arb_point(), b in arb_point(), c in arb_point()) {
            let ab = haversine(a, b);
            prop_assert!((ab - haversine(b, a)).abs() <= 1e-6);
            prop_assert!(haversine(a, c) <= ab + haversine(b, c) + 1e-6);
        }
    }

    #[test]
    fn rectangle_contains_and_distance() {
        let poly = Polygon::rectangle(LatLon::new(0.0, 0.0), LatLon::new(0.01, 0.01));
        assert!(poly.contains(LatLon::new(0.005, 0.005)));
        assert_eq!(poly.distance_m(LatLon::new(0.005, 0.005)), 0.0);
        // 0.001 degree east of the eastern edge on the equator
        let d = poly.distance_m(LatLon::new(0.005, 0.011));
        assert_abs_diff_eq!(d, 0.001 * METERS_PER_DEGREE, epsilon = 1e-6);
    }

    #[test]
    fn hole_is_outside() {
        let outer = vec![
            LatLon::new(0.0, 0.0),
            LatLon::new(0.0, 0.03),
            LatLon::new(0.03, 0.03),
            LatLon::new(0.03, 0.0),
            LatLon::new(0.0, 0.0),
        ];
        let hole = vec![
            LatLon::new(0.01, 0.01),
            LatLon::new(0.01, 0.02),
            LatLon::new(0.02, 0.02),
            LatLon::new(0.02, 0.01),
        ];
        let poly = Polygon::new(outer, vec![hole]).unwrap();
        let center = LatLon::new(0.015, 0.015);
        assert!(!poly.contains(center));
        assert_abs_diff_eq!(poly.distance_m(center), 0.005 * METERS_PER_DEGREE, epsilon = 1e-3);
        assert!(poly.contains(LatLon::new(0.005, 0.005)));
    }

    #[test]
    fn bow_tie_rejected() {
        let ring = vec![
            LatLon::new(0.0, 0.0),
            LatLon::new(2.0, 2.0),
            LatLon::new(2.0, 0.0),
            LatLon::new(0.0, 1.0),
        ];
        assert_eq!(Polygon::new(ring, vec![]), Err(PolygonError::SelfIntersecting));
        // a symmetric bow tie has zero signed area and is caught earlier
        let symmetric = vec![
            LatLon::new(0.0, 0.0),
            LatLon::new(1.0, 1.0),
            LatLon::new(1.0, 0.0),
            LatLon::new(0.0, 1.0),
        ];
        assert!(Polygon::new(symmetric, vec![]).is_err());
    }

    #[test]
    fn degenerate_rings_rejected() {
        let two = vec![LatLon::new(0.0, 0.0), LatLon::new(1.0, 1.0), LatLon::new(0.0, 0.0)];
        assert_eq!(Polygon::new(two, vec![]), Err(PolygonError::TooFewVertices));
        let flat = vec![LatLon::new(0.0, 0.0), LatLon::new(1.0, 1.0), LatLon::new(2.0, 2.0)];
        assert_eq!(Polygon::new(flat, vec![]), Err(PolygonError::ZeroArea));
    }
}
