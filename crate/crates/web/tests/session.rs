use feedertune_web::{DemoError, Session};

fn session() -> Session {
    Session::new(r#"{"n_primary_buses": 40, "n_transformers": 8, "seed": 3}"#).unwrap()
}

#[test]
fn overview_counts_the_feeder() {
    let s = session();
    let o = s.overview();
    assert_eq!(o.loads, 24);
    assert_eq!(o.das.len(), 24);
    assert!(o.metered_loads < o.loads);
    let json = serde_json::to_value(&o).unwrap();
    assert!(json["das"][0]["p_kw"].is_number());
}

#[test]
fn one_hour_round_trips_through_the_power_flow() {
    let s = session();
    let v = s.estimate_hour(18).unwrap();
    assert_eq!(v.status, "Optimal");
    assert!(v.head_residual_kw.abs() < 1e-3 && v.head_residual_kvar.abs() < 1e-3);
    assert!(v.max_abs_v_error_pu < 1e-4);
    assert_eq!(v.categories.len(), 12);
    assert!(v.profile.windows(2).all(|w| w[0].distance <= w[1].distance));
    assert!(v.profile.iter().any(|p| p.measured_pu.is_some()));
    // noise-free readings are matched at the metered buses
    for p in v.profile.iter().filter(|p| p.measured_pu.is_some()) {
        assert!((p.estimate_pu - p.measured_pu.unwrap()).abs() < 1e-5, "{}", p.bus);
    }
    assert!(!v.unmetered.is_empty());
    assert!(matches!(s.estimate_hour(24), Err(DemoError::NoHour(24))));
}

#[test]
fn day_view_matches_the_das_series() {
    let s = session();
    let d = s.solve_day().unwrap();
    assert!(d.failed_hours.is_empty());
    assert_eq!(d.hourly.len(), 24);
    for (e, m) in d.estimated_head.iter().zip(&d.das) {
        assert_eq!(e.hour, m.hour);
        assert!((e.p_kw - m.p_kw).abs() < 1e-3, "hour {}", e.hour);
    }
    assert!(d.summary.contains("category powers"));
}

#[test]
fn bad_options_are_reported() {
    assert!(matches!(Session::new("{"), Err(DemoError::Options(_))));
    assert!(matches!(Session::new(r#"{"bogus": 1}"#), Err(DemoError::Options(_))));
    assert!(matches!(Session::new(r#"{"n_primary_buses": 5000}"#), Err(DemoError::TooLarge(5000))));
    assert!(matches!(Session::new(r#"{"n_primary_buses": 40, "pv_fraction": 3.0}"#), Err(DemoError::Synth(_))));
}
