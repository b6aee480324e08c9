//! Great-circle distance on a spherical Earth.

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Haversine distance in kilometres between two `(lat, lon)` points given in
/// degrees.
pub fn haversine(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    // rounding can push h a hair above 1 for antipodes
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Chord-length route: unit vectors in R^3, d = 2R asin(|p - q| / 2).
    fn chord_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
        let unit = |(lat, lon): (f64, f64)| {
            let (lat, lon) = (lat.to_radians(), lon.to_radians());
            [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
        };
        let (p, q) = (unit(a), unit(b));
        let chord = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
        2.0 * EARTH_RADIUS_KM * (chord / 2.0).min(1.0).asin()
    }

    #[test]
    fn identity_and_equator_arc() {
        assert_eq!(haversine((0.0, 0.0), (0.0, 0.0)), 0.0);
        let arc = std::f64::consts::PI * EARTH_RADIUS_KM / 180.0;
        assert!((haversine((0.0, 0.0), (0.0, 1.0)) - arc).abs() < 1e-9);
        assert!((haversine((0.0, 0.0), (0.0, 1.0)) - 111.1949).abs() < 1e-3);
    }

    #[test]
    fn new_york_to_tokyo_matches_chord_route() {
        let nyc = (40.7128, -74.0060);
        let tyo = (35.6762, 139.6503);
        let d = haversine(nyc, tyo);
        assert!((d - chord_distance(nyc, tyo)).abs() < 0.1);
        assert!((d - 10_851.732_8).abs() < 1e-3, "{d}");
    }

    #[test]
    fn antipodes_are_finite() {
        // asin is ill-conditioned at 1, so exact antipodes lose ~1e-8 relative
        let d = haversine((10.0, 20.0), (-10.0, -160.0));
        assert!(d.is_finite());
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-3);
    }

    fn coord() -> impl Strategy<Value = (f64, f64)> {
        (-90.0f64..=90.0, -180.0f64..=180.0)
    }

    proptest! {
        #[test]
        fn metric_axioms(a in coord(), b in coord(), c in coord()) {
            let ab = haversine(a, b);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - haversine(b, a)).abs() < 1e-9);
            prop_assert!(ab <= haversine(a, c) + haversine(c, b) + 1e-9);
            prop_assert!((ab - chord_distance(a, b)).abs() < 1e-3);
        }
    }
}
