use feedertune::ingest::Channel;
use feedertune::oracle::{PfOptions, PowerFlow};
use feedertune::synth::*;

fn small(seed: u64) -> SynthConfig {
    SynthConfig { n_primary_buses: 60, n_transformers: 12, loads_per_transformer: 3, seed, ..SynthConfig::default() }
}

#[test]
fn same_seed_writes_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = SynthConfig { noise_sigma_v_pu: 0.002, noise_sigma_e_kwh: 0.01, ..small(5) };
    generate(&cfg).unwrap().write_to(a.path()).unwrap();
    generate(&cfg).unwrap().write_to(b.path()).unwrap();
    for f in ["topology.json", "ami_energy.csv", "ami_voltage.csv", "das.csv", "ground_truth.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let other = generate(&small(6)).unwrap();
    assert_ne!(other.topology, generate(&small(5)).unwrap().topology);
}

#[test]
fn default_feeder_has_requested_size() {
    let out = generate(&SynthConfig::default()).unwrap();
    let net = &out.network;
    assert_eq!(net.buses.len(), 500);
    assert_eq!(net.loads.len(), 150);
    assert_eq!(net.transformers.len(), 50);
    assert_eq!(net.pvs.len(), 45);
    assert_eq!(net.loads.iter().filter(|l| l.metered).count(), 135);
    assert_eq!(net.loads.iter().filter(|l| l.has_voltage_meter).count(), 105);
    assert_eq!(out.truth.hours.len(), 24);
    assert_eq!(out.das.len(), 24);
    assert_eq!(out.truth.load_scale, 1.0);
    for h in &out.truth.hours {
        assert!(h.max_residual <= 1e-10);
    }
}

#[test]
fn true_power_factors_lie_in_the_drawn_range() {
    let out = generate(&small(2)).unwrap();
    for h in &out.truth.hours {
        for l in &h.loads {
            let (p, q) = (l.p_kw[0], l.q_kvar[0]);
            let pf = p / p.hypot(q);
            assert!((0.88 - 1e-12..=0.98 + 1e-12).contains(&pf), "{pf}");
        }
    }
}

#[test]
fn spring_day_reverses_flow_at_midday() {
    let cfg = SynthConfig { day_shape: DayShape::SpringMaxGen, pv_fraction: 0.4, ..small(3) };
    let out = generate(&cfg).unwrap();
    let p: Vec<f64> = out.das.iter().map(|d| d.p_total_kw).collect();
    assert!(p[10..=14].iter().any(|&v| v < 0.0), "{p:?}");
    assert!(p[0] > 0.0 && p[19] > 0.0);

    let summer = generate(&SynthConfig { pv_fraction: 0.4, ..small(3) }).unwrap();
    let evening = summer.das.iter().max_by(|a, b| a.p_total_kw.total_cmp(&b.p_total_kw)).unwrap();
    assert!((17..=20).contains(&evening.hour));
}

#[test]
fn truth_conserves_power_through_the_power_flow() {
    let out = generate(&small(4)).unwrap();
    let net = &out.network;
    let pf = PowerFlow::new(net);
    let opts = PfOptions { tol: 1e-10, max_iter: 30 };
    for h in &out.truth.hours {
        let inj = out.truth.injections(net, h.hour).unwrap();
        let sol = pf.solve(&inj, &h.source, &opts).unwrap();
        let t = sol.powers.totals;
        assert!(t.imbalance().p.abs() < 1e-8 && t.imbalance().q.abs() < 1e-8);
        // loads + losses − PV = feeder-head P, in kW
        let kw = 1000.0 * net.base_mva;
        let lhs = (t.loads.p + t.lines.p + t.transformers.p + t.pvs.p) * kw;
        let das = out.das.iter().find(|d| d.hour == h.hour).unwrap();
        assert!((lhs - das.p_total_kw).abs() < 1e-8 * kw, "hour {}: {lhs} vs {}", h.hour, das.p_total_kw);
    }
}

#[test]
fn noise_has_the_configured_spread() {
    let sigma_v = 0.004;
    let sigma_e = 0.02;
    let clean = generate(&small(8)).unwrap();
    let noisy = generate(&SynthConfig { noise_sigma_v_pu: sigma_v, noise_sigma_e_kwh: sigma_e, ..small(8) }).unwrap();
    assert_eq!(clean.truth, GroundTruth { config: clean.truth.config.clone(), ..noisy.truth.clone() });

    let dv: Vec<f64> = clean.voltage.iter().zip(&noisy.voltage).map(|(a, b)| b.v_mag_pu - a.v_mag_pu).collect();
    let sd = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    assert!(dv.len() > 500);
    assert!((sd(&dv) / sigma_v - 1.0).abs() < 0.1, "{}", sd(&dv));

    // delivered intervals far from the zero clip
    let de: Vec<f64> = clean
        .energy
        .iter()
        .zip(&noisy.energy)
        .filter(|(a, _)| a.channel == Channel::Delivered && a.energy_kwh > 0.3)
        .map(|(a, b)| b.energy_kwh - a.energy_kwh)
        .collect();
    assert!(de.len() > 500);
    assert!((sd(&de) / sigma_e - 1.0).abs() < 0.1, "{}", sd(&de));
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        SynthConfig { pv_fraction: 1.5, ..small(1) },
        SynthConfig { load_peak_kw_range: (5.0, 2.0), ..small(1) },
        SynthConfig { noise_sigma_v_pu: -0.1, ..small(1) },
        SynthConfig { interval_minutes: 30, ..small(1) },
        SynthConfig { n_transformers: 0, ..small(1) },
    ] {
        assert!(matches!(generate(&cfg), Err(SynthError::Config(_))));
    }
}

#[test]
fn overload_is_scaled_down_until_it_converges() {
    let heavy = SynthConfig { load_peak_kw_range: (100.0, 150.0), ..small(9) };
    let out = generate(&heavy).unwrap();
    assert!((out.truth.load_scale - 0.7f64.powi(3)).abs() < 1e-12);

    let hopeless = SynthConfig { load_peak_kw_range: (2000.0, 3000.0), ..small(9) };
    assert!(matches!(generate(&hopeless), Err(SynthError::NonConvergent { attempts: 5, .. })));
}
