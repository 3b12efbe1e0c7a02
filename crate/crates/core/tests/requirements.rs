use proptest::prelude::*;
use skylink::requirements::{check_compliance, ComplianceMetrics, ProfileSet, BUILTIN_PROFILES};

#[test]
fn shipped_profiles_round_trip() {
    let first = ProfileSet::parse(BUILTIN_PROFILES).unwrap();
    let again = ProfileSet::parse(&first.to_toml()).unwrap();
    assert_eq!(first, again);
    assert_eq!(first.to_toml(), again.to_toml());
}

fn metrics(reliability: f64, error: f64, latency: f64, speed: f64, alt: (f64, f64)) -> ComplianceMetrics {
    ComplianceMetrics {
        delivery_rate: reliability,
        cmd_latency_ms: vec![latency],
        h_error_m: vec![error],
        v_error_m: vec![error],
        max_speed_kmh: speed,
        min_altitude_m: alt.0,
        max_altitude_m: alt.1,
        ..ComplianceMetrics::perfect(alt.0)
    }
}

proptest! {
    #[test]
    fn worse_metrics_never_pass_more(
        rel in 0.99f64..1.0, drel in 0.0f64..0.01,
        err in 0.0f64..5.0, derr in 0.0f64..5.0,
        lat in 0.0f64..200.0, dlat in 0.0f64..200.0,
        speed in 0.0f64..200.0, dspeed in 0.0f64..100.0,
        lo in 0.0f64..200.0, span in 0.0f64..200.0, dalt in 0.0f64..100.0,
        lenient in any::<bool>(),
    ) {
        let good = metrics(rel, err, lat, speed, (lo, lo + span));
        let bad = metrics(rel - drel, err + derr, lat + dlat, speed + dspeed, ((lo - dalt).max(0.0), lo + span + dalt));
        let set = ProfileSet::builtin();
        for name in set.names() {
            let p = set.get(&name).unwrap();
            let (a, b) = (check_compliance(&good, p, lenient), check_compliance(&bad, p, lenient));
            prop_assert!(a.pass || !b.pass, "{} flipped to pass", name);
            for f in a.failed() {
                prop_assert!(b.failed().contains(&f), "{}: {} recovered", name, f);
            }
        }
    }
}
