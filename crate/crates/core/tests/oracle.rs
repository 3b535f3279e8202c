mod common;

use feedertune::ivkernel::{self, Injections, IvLayout, PowerPair};
use feedertune::netmodel::{NetworkModel, Phase, TopologyDocument};
use feedertune::oracle::{
    read_monitors, read_profiles, solve_timeseries, write_monitors, write_profiles, HourInput, HourProfile, PfOptions, PowerFlow,
    PowerFlowError, SourceSpec,
};

fn two_bus(r_ohm: f64, x_ohm: f64) -> NetworkModel {
    // 1 kV and 1 MVA make ohms and per unit coincide
    let text = format!(
        r#"{{
          "base_mva": 1.0,
          "buses": [
            {{"id": "sub", "kind": "substation", "phases": ["a"], "base_kv": 1.0}},
            {{"id": "head", "kind": "feeder_head", "phases": ["a"], "base_kv": 1.0}}
          ],
          "lines": [{{"id": "src", "from": "sub", "to": "head", "phases": ["a"], "r_ohm": [[{r_ohm}]], "x_ohm": [[{x_ohm}]]}}],
          "loads": [{{"id": "L", "bus": "head", "phases": ["a"]}}]
        }}"#
    );
    NetworkModel::from_json(&text).unwrap()
}

fn small_injections(net: &NetworkModel, scale: f64) -> Injections {
    let loads = net
        .loads
        .iter()
        .enumerate()
        .map(|(l, load)| {
            load.phases
                .iter()
                .enumerate()
                .map(|(k, _)| PowerPair { p: scale * (0.004 + 0.001 * (l + k) as f64), q: scale * (0.0015 + 0.0004 * k as f64) })
                .collect()
        })
        .collect();
    let pvs = net.pvs.iter().map(|pv| vec![scale * 0.002; pv.phases.len()]).collect();
    Injections { loads, pvs }
}

#[test]
fn two_bus_matches_closed_form_quadratic() {
    let (r, x, p, q, vs) = (0.01, 0.02, 0.5, 0.1, 1.0);
    let net = two_bus(r, x);
    let pf = PowerFlow::new(&net);
    let inj = Injections { loads: vec![vec![PowerPair { p, q }]], pvs: vec![] };
    let src = SourceSpec { v_mag: [vs, 1.0, 1.0], angle_deg: [0.0, -120.0, 120.0] };
    let sol = pf.solve(&inj, &src, &PfOptions { tol: 1e-12, max_iter: 50 }).unwrap();
    assert!(sol.converged);

    // |V|^4 + |V|^2 (2(RP + XQ) - Vs^2) + (R^2 + X^2)(P^2 + Q^2) = 0, high-voltage root
    let b = 2.0 * (r * p + x * q) - vs * vs;
    let c = (r * r + x * x) * (p * p + q * q);
    let v2 = (-b + (b * b - 4.0 * c).sqrt()) / 2.0;
    let expected = v2.sqrt();
    let layout = pf.layout();
    let head = layout.bus_phase(&net, net.feeder_head, Phase::A).unwrap();
    let got = sol.v_mag(layout, head);
    assert!((got - expected).abs() <= 1e-10, "{got} vs {expected}");
}

#[test]
fn zero_load_reproduces_source_in_one_step() {
    let mut doc: TopologyDocument = serde_json::from_str(common::SMALL_FEEDER).unwrap();
    doc.capacitors.clear();
    for l in doc.lines.iter_mut() {
        l.ysh_us.clear();
    }
    for t in doc.transformers.iter_mut() {
        t.no_load_loss_kw = 0.0;
    }
    let net = NetworkModel::from_document(&doc).unwrap();
    let pf = PowerFlow::new(&net);
    let src = SourceSpec { v_mag: [1.02, 1.01, 0.99], angle_deg: [0.5, -119.0, 121.0] };
    let sol = pf.solve(&small_injections(&net, 0.0), &src, &PfOptions::default()).unwrap();
    assert!(sol.converged);
    assert_eq!(sol.iterations, 1);
    let layout = pf.layout();
    for bp in 0..layout.n_bus_phases() {
        let (_, phase) = layout.bus_phase_of(bp);
        let (re, im) = sol.voltage(layout, bp);
        let (sr, si) = src.phasor(phase);
        assert!((re - sr).abs() < 1e-12 && (im - si).abs() < 1e-12);
    }
    for c in ivkernel::Category::ALL {
        let pq = sol.powers.totals.get(c);
        assert!(pq.p.abs() < 1e-12 && pq.q.abs() < 1e-12, "{c:?}");
    }
}

#[test]
fn loaded_feeder_converges_and_conserves_power() {
    let net = common::small_feeder();
    let pf = PowerFlow::new(&net);
    let sol = pf.solve(&small_injections(&net, 1.0), &SourceSpec::balanced(1.03), &PfOptions::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.iterations <= 10, "{} iterations", sol.iterations);
    assert!(sol.max_residual <= 1e-8);

    let imbalance = sol.powers.totals.imbalance();
    assert!(imbalance.p.abs() <= 1e-8 && imbalance.q.abs() <= 1e-8, "{imbalance:?}");

    // shared-kernel consistency: linear rows re-evaluated independently
    let layout = IvLayout::new(&net);
    let mut r = vec![0.0; layout.n_linear_rows()];
    ivkernel::linear_residuals(&net, &layout, &sol.x, &mut r);
    assert!(r.iter().all(|v| v.abs() <= 1e-8));

    let t = sol.powers.totals;
    assert!(t.source.p < 0.0 && t.pvs.p < 0.0 && t.capacitors.q < 0.0);
    assert!(t.loads.p > 0.0 && t.lines.p > 0.0 && t.transformers.p > 0.0);
}

#[test]
fn zero_scaled_loads_repeat_exactly() {
    let net = common::small_feeder();
    let pf = PowerFlow::new(&net);
    let src = SourceSpec::balanced(1.0);
    let a = pf.solve(&small_injections(&net, 0.0), &src, &PfOptions::default()).unwrap();
    let b = pf.solve(&small_injections(&net, 0.0), &src, &PfOptions::default()).unwrap();
    assert_eq!(a.x, b.x);
}

#[test]
fn unfed_phase_is_reported_as_singular() {
    let mut doc: TopologyDocument = serde_json::from_str(common::SMALL_FEEDER).unwrap();
    // m1 gains a phase b that nothing feeds
    let m1 = doc.buses.iter_mut().find(|b| b.id == "m1").unwrap();
    m1.phases = vec![Phase::A, Phase::B];
    let net = NetworkModel::from_document(&doc).unwrap();
    let pf = PowerFlow::new(&net);
    let err = pf.solve(&small_injections(&net, 1.0), &SourceSpec::balanced(1.0), &PfOptions::default()).unwrap_err();
    match err {
        PowerFlowError::Singular { bus, .. } => assert_eq!(bus, "m1"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn timeseries_isolates_a_diverging_hour() {
    let net = common::small_feeder();
    let pf = PowerFlow::new(&net);
    let hours: Vec<HourInput> = (0..24)
        .map(|h| HourInput {
            hour: h,
            injections: small_injections(&net, if h == 13 { 5000.0 } else { 1.0 }),
            source: SourceSpec::balanced(1.0),
        })
        .collect();
    let out = solve_timeseries(&pf, &hours, &PfOptions::default());
    assert_eq!(out.len(), 24);
    for (h, r) in out.iter().enumerate() {
        let sol = r.as_ref().unwrap();
        assert_eq!(sol.converged, h != 13, "hour {h}");
    }
    let first = out[0].as_ref().unwrap();
    for r in &out[1..] {
        let s = r.as_ref().unwrap();
        if s.converged {
            assert_eq!(s.x, first.x);
        }
    }
}

#[test]
fn profiles_and_monitors_round_trip() {
    let net = common::small_feeder();
    let pf = PowerFlow::new(&net);
    let hours: Vec<HourProfile> = (0..3)
        .map(|h| HourProfile {
            hour: h,
            injections: small_injections(&net, 1.0 + h as f64 / 3.0),
            src_vmag: [1.01, 1.02 + h as f64 * 1e-3, 0.99],
        })
        .collect();
    let text = write_profiles(&net, &hours);
    assert!(text.starts_with("element_id,kind,hour,value_pu\n"));
    assert!(text.contains("L2.b,load_q,0,"));
    assert!(text.contains("sub,src_vmag_c,2,0.99"));
    let back = read_profiles(&net, &text).unwrap();
    assert_eq!(back, hours);

    let sol = pf.solve(&hours[0].injections, &SourceSpec::balanced(1.0), &PfOptions::default()).unwrap();
    let mon = pf.monitors(&sol, 0);
    // feeder head plus every load bus, per phase: head 3 + m1 1 + n1 3 + n2 2
    assert_eq!(mon.len(), 9);
    assert_eq!(mon[0].bus, "head");
    let head_p: f64 = mon.iter().filter(|m| m.bus == "head").map(|m| m.p_kw).sum();
    assert!((head_p + sol.powers.totals.source.p * 1000.0).abs() < 1e-9);
    let text = write_monitors(&mon);
    assert!(text.starts_with("hour,bus,phase,v_mag_pu,v_ang_deg,p_kw,q_kvar\n"));
    assert_eq!(read_monitors(&text).unwrap(), mon);
}

#[test]
fn missing_profile_value_names_element_and_hour() {
    let net = common::small_feeder();
    let hours = vec![HourProfile { hour: 4, injections: small_injections(&net, 1.0), src_vmag: [1.0; 3] }];
    let text = write_profiles(&net, &hours);
    let trimmed: String = text.lines().filter(|l| !l.starts_with("P1.a")).map(|l| format!("{l}\n")).collect();
    let err = read_profiles(&net, &trimmed).unwrap_err().to_string();
    assert!(err.contains("P1.a") && err.contains("hour 4"), "{err}");
}
