use proptest::prelude::*;
use snapdop::doppler_model::{self, predict_doppler, StateVector};
use snapdop::geodesy::{EcefVector, GeodeticPosition, WGS84_A};
use snapdop::orbits::SatStateEcef;

fn sat() -> impl Strategy<Value = SatStateEcef> {
    (-7e6f64..7e6, -7e6f64..7e6, -7e6f64..7e6, -7.5e3f64..7.5e3, -7.5e3f64..7.5e3, -7.5e3f64..7.5e3)
        .prop_filter("outside the Earth", |(x, y, z, ..)| (x * x + y * y + z * z).sqrt() > WGS84_A + 2e5)
        .prop_map(|(x, y, z, vx, vy, vz)| SatStateEcef {
            time: 0.0,
            position: EcefVector::new(x, y, z),
            velocity: EcefVector::new(vx, vy, vz),
        })
}

fn state() -> impl Strategy<Value = StateVector> {
    (-80.0f64..80.0, -180.0f64..180.0, 0.0f64..2000.0, -5e3f64..5e3, -1.0f64..1.0).prop_map(|(lat, lon, alt, f, fd)| {
        StateVector {
            clock_offset_hz: f,
            clock_drift_hz_s: fd,
            ..StateVector::from_position(&GeodeticPosition { latitude_deg: lat, longitude_deg: lon, altitude_m: alt }, 1.7e9)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn clock_offset_enters_linearly(s in sat(), st in state(), a in -1e4f64..1e4, dt in -3000.0f64..3000.0) {
        let t = st.reference_epoch + dt;
        let f0 = predict_doppler(&s, &st, 1.626e9, t).unwrap();
        let shifted = StateVector { clock_offset_hz: st.clock_offset_hz + a, ..st };
        let f1 = predict_doppler(&s, &shifted, 1.626e9, t).unwrap();
        prop_assert!((f1 - f0 - a).abs() <= 1e-9 * (1.0 + f0.abs() + a.abs()));
    }

    #[test]
    fn clock_drift_enters_linearly(s in sat(), st in state(), b in -1.0f64..1.0, dt in -3000.0f64..3000.0) {
        let t = st.reference_epoch + dt;
        let f0 = predict_doppler(&s, &st, 1.626e9, t).unwrap();
        let shifted = StateVector { clock_drift_hz_s: st.clock_drift_hz_s + b, ..st };
        let f1 = predict_doppler(&s, &shifted, 1.626e9, t).unwrap();
        prop_assert!((f1 - f0 - b * dt).abs() <= 1e-9 * (1.0 + f0.abs()));
    }

    #[test]
    fn reversing_velocity_negates_geometry(s in sat(), st in state()) {
        let rx = st.position().to_ecef();
        let g = doppler_model::geometric_doppler(&s, rx, 1.626e9).unwrap();
        let rev = SatStateEcef { velocity: s.velocity * -1.0, ..s };
        let h = doppler_model::geometric_doppler(&rev, rx, 1.626e9).unwrap();
        prop_assert!((g + h).abs() <= 1e-9 * (1.0 + g.abs()));
        let t = st.reference_epoch + 10.0;
        let sum = predict_doppler(&s, &st, 1.626e9, t).unwrap() + predict_doppler(&rev, &st, 1.626e9, t).unwrap();
        prop_assert!((sum - 2.0 * st.clock_at(t)).abs() <= 1e-6 * (1.0 + g.abs()));
    }

    #[test]
    fn rmse_is_scale_equivariant(v in proptest::collection::vec(-1e3f64..1e3, 1..50), k in 0.0f64..100.0) {
        let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
        let a = doppler_model::doppler_rmse(&v).unwrap();
        let b = doppler_model::doppler_rmse(&scaled).unwrap();
        prop_assert!((b - k * a).abs() <= 1e-9 * (1.0 + b));
    }
}
