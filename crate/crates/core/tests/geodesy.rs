use proptest::prelude::*;
use snapdop::geodesy::{self, EcefVector, GeodeticPosition, WGS84_A};
use snapdop::orbits::SatStateEcef;

fn position() -> impl Strategy<Value = GeodeticPosition> {
    (-90.0f64..=90.0, -180.0f64..180.0, -1_000.0f64..2.0e6).prop_map(|(latitude_deg, longitude_deg, altitude_m)| {
        GeodeticPosition { latitude_deg, longitude_deg, altitude_m }
    })
}

fn unit() -> impl Strategy<Value = EcefVector> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-3)
        .prop_map(|(x, y, z)| EcefVector::new(x, y, z).normalized())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn geodetic_round_trip(p in position()) {
        let x = p.to_ecef();
        let back = geodesy::ecef_to_geodetic(x).unwrap();
        prop_assert!(back.to_ecef().distance(x) < 1e-6);
        prop_assert!((back.altitude_m - p.altitude_m).abs() < 1e-6);
        if p.latitude_deg.abs() < 89.999 {
            let dlon = geodesy::wrap_longitude(back.longitude_deg - p.longitude_deg);
            prop_assert!(dlon.abs() < 1e-9);
        }
    }

    #[test]
    fn range_rate_sign_follows_motion(rx in position(), dir in unit(), speed in -8_000.0f64..8_000.0, dist in 5e5f64..3e6) {
        let rx_pos = rx.to_ecef();
        let perp = dir.cross(EcefVector::new(0.3, -0.2, 0.9)).normalized();
        let sat = SatStateEcef { time: 0.0, position: rx_pos + dir * dist, velocity: dir * speed + perp * 3_000.0 };
        let rr = geodesy::range_rate(&sat, rx_pos, EcefVector::ZERO).unwrap();
        prop_assert!((rr - speed).abs() < 1e-6 * speed.abs().max(1.0));
    }

    #[test]
    fn range_rate_matches_straight_line_difference(rx in position(), dir in unit(), v in unit(), speed in 1.0f64..8_000.0) {
        let rx_pos = rx.to_ecef();
        let p0 = rx_pos + dir * 1.5e6;
        let vel = v * speed;
        let sat = SatStateEcef { time: 0.0, position: p0, velocity: vel };
        let h = 0.25;
        let range = |t: f64| (p0 + vel * t).distance(rx_pos);
        let fd = (range(-2.0 * h) - 8.0 * range(-h) + 8.0 * range(h) - range(2.0 * h)) / (12.0 * h);
        prop_assert!((geodesy::range_rate(&sat, rx_pos, EcefVector::ZERO).unwrap() - fd).abs() < 1e-3);
    }

    #[test]
    fn moving_receiver_equals_relative_velocity(dir in unit(), vs in unit(), vr in unit()) {
        let rx = EcefVector::new(WGS84_A, 0.0, 0.0);
        let sat = SatStateEcef { time: 0.0, position: rx + dir * 1e6, velocity: vs * 7_000.0 };
        let moving = geodesy::range_rate(&sat, rx, vr * 30.0).unwrap();
        let relative = SatStateEcef { velocity: vs * 7_000.0 - vr * 30.0, ..sat };
        let still = geodesy::range_rate(&relative, rx, EcefVector::ZERO).unwrap();
        prop_assert!((moving - still).abs() < 1e-9);
    }

    #[test]
    fn elevation_is_bounded(rx in position(), dir in unit(), dist in 1e3f64..5e7) {
        let e = geodesy::elevation_angle(rx.to_ecef() + dir * dist, &rx);
        prop_assert!((-90.0..=90.0).contains(&e));
    }

    #[test]
    fn horizontal_error_of_vertical_offset_is_zero(p in position(), dh in -1e4f64..1e4) {
        let q = GeodeticPosition { altitude_m: p.altitude_m + dh, ..p };
        prop_assert!(geodesy::horizontal_error(&q, &p) < 1e-6);
        prop_assert!((geodesy::vertical_error(&q, &p) - dh).abs() < 1e-6);
    }
}

#[test]
fn degenerate_center_is_rejected() {
    assert!(geodesy::ecef_to_geodetic(EcefVector::ZERO).is_err());
}

#[test]
fn coincident_satellite_is_rejected() {
    let rx = EcefVector::new(WGS84_A, 0.0, 0.0);
    let sat = SatStateEcef { time: 0.0, position: rx, velocity: EcefVector::new(0.0, 7e3, 0.0) };
    assert!(geodesy::range_rate(&sat, rx, EcefVector::ZERO).is_err());
}
