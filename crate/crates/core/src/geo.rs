//! Geodesic primitives, geofence containment and geohash encoding.
//!
//! Distances are great-circle on a sphere of radius 6 371 000 m; the
//! localization fences in play are 50–150 m wide, where the spherical
//! approximation error is negligible. Geofence boundaries count as
//! inside so trigger semantics are deterministic under replay.

use serde::{Deserialize, Serialize};

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("geohash precision {0} outside [1, 12]")]
    PrecisionOutOfRange(usize),
    #[error("invalid geohash character {0:?}")]
    InvalidGeohashChar(char),
    #[error("invalid geofence: {0}")]
    InvalidFence(String),
}

/// A WGS-84 coordinate in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) || !lat.is_finite() {
            return Err(GeoError::LatitudeOutOfRange(lat));
        }
        if !(-180.0..=180.0).contains(&lon) || !lon.is_finite() {
            return Err(GeoError::LongitudeOutOfRange(lon));
        }
        Ok(GeoPoint { lat, lon })
    }
}

/// Great-circle distance in meters between two points.
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Project `p` onto the local tangent plane centered at `origin`
/// (equirectangular; x east, y north, meters).
pub fn tangent_plane(origin: GeoPoint, p: GeoPoint) -> (f64, f64) {
    let x = (p.lon - origin.lon).to_radians() * origin.lat.to_radians().cos() * EARTH_RADIUS_M;
    let y = (p.lat - origin.lat).to_radians() * EARTH_RADIUS_M;
    (x, y)
}

/// Inverse of [`tangent_plane`]: local (x east, y north) meters back to a
/// coordinate near `origin`.
pub fn from_tangent_plane(origin: GeoPoint, x: f64, y: f64) -> GeoPoint {
    let lat = origin.lat + (y / EARTH_RADIUS_M).to_degrees();
    let lon = origin.lon + (x / (EARTH_RADIUS_M * origin.lat.to_radians().cos())).to_degrees();
    GeoPoint { lat, lon }
}

/// A virtual spatial border. Containment gates question triggers and
/// claim validity; the boundary is inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geofence {
    Circle {
        center: GeoPoint,
        radius_m: f64,
    },
    Ellipse {
        center: GeoPoint,
        semi_major_m: f64,
        semi_minor_m: f64,
        /// Degrees clockwise from north, in [0, 360).
        orientation_deg: f64,
    },
}

impl Geofence {
    pub fn circle(center: GeoPoint, radius_m: f64) -> Result<Self, GeoError> {
        if radius_m.is_nan() || radius_m <= 0.0 {
            return Err(GeoError::InvalidFence(format!(
                "radius {radius_m} must be > 0"
            )));
        }
        Ok(Geofence::Circle { center, radius_m })
    }

    pub fn ellipse(
        center: GeoPoint,
        semi_major_m: f64,
        semi_minor_m: f64,
        orientation_deg: f64,
    ) -> Result<Self, GeoError> {
        if semi_minor_m.is_nan()
            || semi_major_m.is_nan()
            || semi_minor_m <= 0.0
            || semi_major_m < semi_minor_m
        {
            return Err(GeoError::InvalidFence(format!(
                "require semi_major {semi_major_m} >= semi_minor {semi_minor_m} > 0"
            )));
        }
        if !(0.0..360.0).contains(&orientation_deg) {
            return Err(GeoError::InvalidFence(format!(
                "orientation {orientation_deg} outside [0, 360)"
            )));
        }
        Ok(Geofence::Ellipse {
            center,
            semi_major_m,
            semi_minor_m,
            orientation_deg,
        })
    }

    pub fn center(&self) -> GeoPoint {
        match *self {
            Geofence::Circle { center, .. } => center,
            Geofence::Ellipse { center, .. } => center,
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        match *self {
            Geofence::Circle { center, radius_m } => Geofence::circle(center, radius_m).map(|_| ()),
            Geofence::Ellipse {
                center,
                semi_major_m,
                semi_minor_m,
                orientation_deg,
            } => Geofence::ellipse(center, semi_major_m, semi_minor_m, orientation_deg).map(|_| ()),
        }
    }
}

/// Boundary-inclusive containment test.
///
/// Circles compare the great-circle distance against the radius. Ellipses
/// project onto the local tangent plane about the center and rotate by
/// minus the orientation before the normalized quadratic test.
pub fn inside_geofence(p: GeoPoint, fence: &Geofence) -> bool {
    match *fence {
        Geofence::Circle { center, radius_m } => haversine_distance(p, center) <= radius_m,
        Geofence::Ellipse {
            center,
            semi_major_m,
            semi_minor_m,
            orientation_deg,
        } => {
            let (x, y) = tangent_plane(center, p);
            // Major axis points `orientation_deg` clockwise from north.
            let theta = orientation_deg.to_radians();
            let u = x * theta.sin() + y * theta.cos();
            let v = x * theta.cos() - y * theta.sin();
            (u / semi_major_m).powi(2) + (v / semi_minor_m).powi(2) <= 1.0
        }
    }
}

const GEOHASH_BASE32: &[u8] = b"0123456789bcdefghjkmnpqrstuvwxyz";

/// A base-32 geohash cell identifier. Longer codes nest inside shorter
/// prefixes of the same point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geohash(String);

impl Geohash {
    pub fn code(&self) -> &str {
        &self.0
    }

    pub fn precision(&self) -> usize {
        self.0.len()
    }
}

impl std::fmt::Display for Geohash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Encode a point at `precision` characters (1..=12).
pub fn geohash_encode(p: GeoPoint, precision: usize) -> Result<Geohash, GeoError> {
    if !(1..=12).contains(&precision) {
        return Err(GeoError::PrecisionOutOfRange(precision));
    }
    let mut lat_range = (-90.0f64, 90.0f64);
    let mut lon_range = (-180.0f64, 180.0f64);
    let mut code = String::with_capacity(precision);
    let mut bits = 0usize;
    let mut chunk = 0u8;
    let mut even_bit = true; // longitude first
    while code.len() < precision {
        let range = if even_bit {
            &mut lon_range
        } else {
            &mut lat_range
        };
        let value = if even_bit { p.lon } else { p.lat };
        let mid = (range.0 + range.1) / 2.0;
        chunk <<= 1;
        if value >= mid {
            chunk |= 1;
            range.0 = mid;
        } else {
            range.1 = mid;
        }
        even_bit = !even_bit;
        bits += 1;
        if bits == 5 {
            code.push(GEOHASH_BASE32[chunk as usize] as char);
            bits = 0;
            chunk = 0;
        }
    }
    Ok(Geohash(code))
}

/// Decode to the center of the cell.
pub fn geohash_decode(hash: &Geohash) -> Result<GeoPoint, GeoError> {
    let mut lat_range = (-90.0f64, 90.0f64);
    let mut lon_range = (-180.0f64, 180.0f64);
    let mut even_bit = true;
    for c in hash.0.chars() {
        let idx = GEOHASH_BASE32
            .iter()
            .position(|&b| b as char == c)
            .ok_or(GeoError::InvalidGeohashChar(c))? as u8;
        for shift in (0..5).rev() {
            let bit = (idx >> shift) & 1;
            let range = if even_bit {
                &mut lon_range
            } else {
                &mut lat_range
            };
            let mid = (range.0 + range.1) / 2.0;
            if bit == 1 {
                range.0 = mid;
            } else {
                range.1 = mid;
            }
            even_bit = !even_bit;
        }
    }
    Ok(GeoPoint {
        lat: (lat_range.0 + lat_range.1) / 2.0,
        lon: (lon_range.0 + lon_range.1) / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    /// Independent reference: interleave lat/lon bisection bits exactly as
    /// the published algorithm tables do, without the chunked encoder above.
    fn reference_geohash(point: GeoPoint, precision: usize) -> String {
        let total_bits = precision * 5;
        let mut bits = Vec::with_capacity(total_bits);
        let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
        let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
        for i in 0..total_bits {
            if i % 2 == 0 {
                let mid = (lon_lo + lon_hi) / 2.0;
                if point.lon >= mid {
                    bits.push(1u8);
                    lon_lo = mid;
                } else {
                    bits.push(0u8);
                    lon_hi = mid;
                }
            } else {
                let mid = (lat_lo + lat_hi) / 2.0;
                if point.lat >= mid {
                    bits.push(1u8);
                    lat_lo = mid;
                } else {
                    bits.push(0u8);
                    lat_hi = mid;
                }
            }
        }
        bits.chunks(5)
            .map(|c| GEOHASH_BASE32[c.iter().fold(0usize, |acc, b| acc * 2 + *b as usize)] as char)
            .collect()
    }

    #[test]
    fn distance_identity_and_symmetry() {
        let a = p(47.3769, 8.5417);
        let b = p(47.3782, 8.5404);
        assert_eq!(haversine_distance(a, a), 0.0);
        assert_eq!(haversine_distance(a, b), haversine_distance(b, a));
    }

    #[test]
    fn one_degree_of_longitude_at_equator() {
        // Oracle: arc length of one degree on the sphere,
        // R * pi / 180 = 111_194.92664455873 m.
        let d = haversine_distance(p(0.0, 0.0), p(0.0, 1.0));
        assert!((d - 111_194.92664455873).abs() < 1e-6, "got {d}");
    }

    #[test]
    fn circle_containment_boundary_inclusive() {
        let center = p(47.3769, 8.5417);
        let fence = Geofence::circle(center, 100.0).unwrap();
        assert!(inside_geofence(center, &fence));
        // A point at exactly the radius (constructed on the tangent plane).
        let on_boundary = from_tangent_plane(center, 0.0, 100.0);
        let d = haversine_distance(center, on_boundary);
        assert!(inside_geofence(on_boundary, &fence) == (d <= 100.0));
        // 150 m north of a 100 m circle is outside (oracle: haversine).
        let north = from_tangent_plane(center, 0.0, 150.0);
        assert!(haversine_distance(center, north) > 100.0);
        assert!(!inside_geofence(north, &fence));
    }

    #[test]
    fn ellipse_respects_orientation() {
        let center = p(47.0, 8.0);
        // Major axis east-west (orientation 90 deg from north).
        let fence = Geofence::ellipse(center, 200.0, 50.0, 90.0).unwrap();
        let east = from_tangent_plane(center, 150.0, 0.0);
        let north = from_tangent_plane(center, 0.0, 150.0);
        assert!(inside_geofence(east, &fence));
        assert!(!inside_geofence(north, &fence));
    }

    #[test]
    fn geohash_known_cell_and_equator_origin() {
        // Oracle: reference bit-interleaving implementation.
        let origin = p(0.0, 0.0);
        let g = geohash_encode(origin, 1).unwrap();
        assert_eq!(g.code(), "s");
        assert_eq!(reference_geohash(origin, 1), "s");
        let zurich = p(47.3769, 8.5417);
        for precision in [1usize, 5, 9, 12] {
            let ours = geohash_encode(zurich, precision).unwrap();
            assert_eq!(ours.code(), reference_geohash(zurich, precision));
        }
    }

    #[test]
    fn geohash_neighbors_share_coarse_cell() {
        // Two points one meter apart share the ~4.9 km precision-5 cell
        // (verified co-located by the reference implementation).
        let a = p(47.376900, 8.541700);
        let b = from_tangent_plane(a, 1.0, 0.0);
        let ga = geohash_encode(a, 5).unwrap();
        let gb = geohash_encode(b, 5).unwrap();
        assert_eq!(ga, gb);
        assert_eq!(reference_geohash(a, 5), reference_geohash(b, 5));
    }

    #[test]
    fn geohash_decode_reencode_idempotent() {
        for precision in 1..=12usize {
            let g = geohash_encode(p(-33.8675, 151.2070), precision).unwrap();
            let center = geohash_decode(&g).unwrap();
            assert_eq!(geohash_encode(center, precision).unwrap(), g);
        }
    }

    #[test]
    fn precision_bounds_rejected() {
        assert_eq!(
            geohash_encode(p(0.0, 0.0), 0),
            Err(GeoError::PrecisionOutOfRange(0))
        );
        assert_eq!(
            geohash_encode(p(0.0, 0.0), 13),
            Err(GeoError::PrecisionOutOfRange(13))
        );
    }

    #[test]
    fn invalid_coordinates_rejected() {
        assert!(GeoPoint::new(90.1, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn metric_axioms(
            lat1 in -80.0f64..80.0, lon1 in -179.0f64..179.0,
            lat2 in -80.0f64..80.0, lon2 in -179.0f64..179.0,
            lat3 in -80.0f64..80.0, lon3 in -179.0f64..179.0,
        ) {
            let a = p(lat1, lon1);
            let b = p(lat2, lon2);
            let c = p(lat3, lon3);
            let ab = haversine_distance(a, b);
            let bc = haversine_distance(b, c);
            let ac = haversine_distance(a, c);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - haversine_distance(b, a)).abs() <= 1e-6 * ab.max(1.0));
            prop_assert!(ac <= ab + bc + 1e-6 * (ab + bc).max(1.0));
        }

        #[test]
        fn degenerate_ellipse_matches_circle(
            lat in -60.0f64..60.0, lon in -170.0f64..170.0,
            radius in 10.0f64..500.0,
            dx in -600.0f64..600.0, dy in -600.0f64..600.0,
            orientation in 0.0f64..359.9,
        ) {
            let center = p(lat, lon);
            let probe = from_tangent_plane(center, dx, dy);
            let circle = Geofence::circle(center, radius).unwrap();
            let ellipse = Geofence::ellipse(center, radius, radius, orientation).unwrap();
            // Skip points within a millimeter of the boundary where the two
            // formulations legitimately disagree in the last float bits.
            let d = haversine_distance(center, probe);
            prop_assume!((d - radius).abs() > 1e-3);
            prop_assert_eq!(inside_geofence(probe, &circle), inside_geofence(probe, &ellipse));
        }

        #[test]
        fn geohash_prefix_nesting(
            lat in -90.0f64..90.0, lon in -180.0f64..180.0,
            precision in 1usize..12,
        ) {
            let point = p(lat, lon);
            let coarse = geohash_encode(point, precision).unwrap();
            let fine = geohash_encode(point, precision + 1).unwrap();
            prop_assert!(fine.code().starts_with(coarse.code()));
        }
    }
}
