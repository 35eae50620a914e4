use serde::{Deserialize, Serialize};

/// Mean Earth radius used for every distance in the crate.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Degrees of latitude per meter along a meridian on the sphere above.
pub const METERS_PER_DEGREE: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        self.lat.is_finite()
            && self.lon.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
    }

    /// Great-circle distance in meters (haversine).
    pub fn distance_m(&self, other: &GeoPoint) -> f64 {
        let (phi1, phi2) = (self.lat.to_radians(), other.lat.to_radians());
        let dphi = phi2 - phi1;
        let dlambda = (other.lon - self.lon).to_radians();
        let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
    }

    /// Point displaced by `north_m` / `east_m` meters on a local tangent plane.
    pub fn offset_m(&self, north_m: f64, east_m: f64) -> GeoPoint {
        let dlat = north_m / METERS_PER_DEGREE;
        let dlon = east_m / (METERS_PER_DEGREE * self.lat.to_radians().cos());
        GeoPoint::new(self.lat + dlat, self.lon + dlon)
    }

    fn lerp(&self, other: &GeoPoint, t: f64) -> GeoPoint {
        GeoPoint::new(
            self.lat + (other.lat - self.lat) * t,
            self.lon + (other.lon - self.lon) * t,
        )
    }
}

/// Sum of great-circle segment lengths. A single point has length zero.
pub fn polyline_length(points: &[GeoPoint]) -> f64 {
    points.windows(2).map(|w| w[0].distance_m(&w[1])).sum()
}

/// Point at `dist_m` meters along the polyline, clamped to its endpoints.
pub fn point_along(points: &[GeoPoint], dist_m: f64) -> GeoPoint {
    let mut remaining = dist_m.max(0.0);
    for w in points.windows(2) {
        let seg = w[0].distance_m(&w[1]);
        if remaining <= seg {
            if seg == 0.0 {
                return w[0];
            }
            return w[0].lerp(&w[1], remaining / seg);
        }
        remaining -= seg;
    }
    *points.last().expect("polyline has at least one point")
}
