mod common;

use feedertune::estimator::{Estimator, EstimatorOptions};
use feedertune::ingest::build_measurement_set;
use feedertune::ivkernel::{Category, Injections, PowerPair};
use feedertune::netmodel::NetworkModel;
use feedertune::oracle::*;
use feedertune::report::*;
use feedertune::synth::{generate, DayShape, SynthConfig, SynthOutput};

const OPTS: PfOptions = PfOptions { tol: 1e-11, max_iter: 30 };

fn small_feeder_injections(net: &NetworkModel) -> Injections {
    let loads = net.loads.iter().map(|l| l.phases.iter().map(|_| PowerPair { p: 0.005, q: 0.002 }).collect()).collect();
    let pvs = net.pvs.iter().map(|pv| vec![0.002; pv.phases.len()]).collect();
    Injections { loads, pvs }
}

fn pf_state(net: &NetworkModel, hour: u32, inj: &Injections) -> StateSummary {
    let pf = PowerFlow::new(net);
    let sol = pf.solve(inj, &SourceSpec::balanced(1.03), &OPTS).unwrap();
    StateSummary::from_power_flow(net, pf.layout(), hour, &sol, inj)
}

fn row(c: &HourComparison, cat: Category, q: Quantity) -> &CategoryRow {
    c.category_table.iter().find(|r| r.category == cat && r.quantity == q).unwrap()
}

#[test]
fn identical_states_compare_to_zero_and_swapping_negates() {
    let net = common::small_feeder();
    let inj = small_feeder_injections(&net);
    let a = pf_state(&net, 3, &inj);
    let c = compare_states(&net, &a, &a).unwrap();
    assert_eq!(c.category_table.len(), 12);
    assert!(c.category_table.iter().all(|r| r.difference_kw == 0.0 && r.error == 0.0));
    assert_eq!(c.max_abs_v_error_pu, 0.0);

    let mut bumped = inj.clone();
    bumped.loads[0][0].p += 0.001;
    let b = pf_state(&net, 3, &bumped);
    let ab = compare_states(&net, &a, &b).unwrap();
    let ba = compare_states(&net, &b, &a).unwrap();
    for (x, y) in ab.category_table.iter().zip(&ba.category_table) {
        assert_eq!(x.difference_kw, -y.difference_kw);
    }
    for (x, y) in ab.bus_errors.iter().zip(&ba.bus_errors) {
        assert_eq!(x.difference_pu, -y.difference_pu);
    }
    assert!(ab.max_abs_v_error_pu > 0.0);
    assert_eq!(ab.max_abs_v_error_pu, ba.max_abs_v_error_pu);

    let other_hour = pf_state(&net, 4, &inj);
    assert!(matches!(compare_states(&net, &a, &other_hour), Err(ReportError::HourMismatch(3, 4))));
}

#[test]
fn rms_of_a_uniform_one_percent_bias_is_one_percent() {
    let y = [1.0, 1.02, 0.98, 1.05];
    let m: Vec<f64> = y.iter().map(|v| 1.01 * v).collect();
    let r = rms_daily(&m, &y).unwrap();
    assert_eq!(r.mode, ErrorMode::Percent);
    assert!((r.value - 1.0).abs() < 1e-12);

    let scaled = |k: f64| -> Vec<f64> { y.iter().map(|v| k * v).collect() };
    let big = rms_daily(&scaled(7.0).iter().map(|v| 1.01 * v).collect::<Vec<_>>(), &scaled(7.0)).unwrap();
    assert!((big.value - r.value).abs() < 1e-12);

    let zero = rms_daily(&[0.5, 1.0], &[0.0, 1.0]).unwrap();
    assert_eq!(zero.mode, ErrorMode::Absolute);
    assert!((zero.value - (0.25f64 / 2.0).sqrt()).abs() < 1e-15);

    assert!(matches!(rms_daily(&[1.0], &[1.0, 2.0]), Err(ReportError::LengthMismatch(1, 2))));
    assert!(matches!(rms_daily(&[], &[]), Err(ReportError::Empty)));
}

#[test]
fn extra_load_reactive_power_shows_up_in_the_q_rows() {
    let net = common::small_feeder();
    let inj = small_feeder_injections(&net);
    let base = pf_state(&net, 0, &inj);
    let mut more = inj.clone();
    let l3 = net.load_index("L3").unwrap();
    more.loads[l3][0].q += 1.0 / (1000.0 * net.base_mva);
    let perturbed = pf_state(&net, 0, &more);
    let c = compare_states(&net, &perturbed, &base).unwrap();

    assert!((row(&c, Category::Loads, Quantity::Q).difference_kw - 1.0).abs() < 1e-9);
    assert_eq!(row(&c, Category::Loads, Quantity::P).difference_kw, 0.0);
    assert_eq!(row(&c, Category::Pvs, Quantity::P).difference_kw, 0.0);
    let head_q = -row(&c, Category::Source, Quantity::Q).difference_kw;
    assert!((head_q - 1.0).abs() < 0.05, "{head_q}");
    for cat in [Category::Lines, Category::Transformers, Category::Capacitors] {
        for q in [Quantity::P, Quantity::Q] {
            assert!(row(&c, cat, q).difference_kw.abs() < 0.05, "{cat:?} {q:?}");
        }
    }
}

fn small_synth(cfg: SynthConfig) -> SynthOutput {
    generate(&SynthConfig { n_primary_buses: 60, n_transformers: 12, loads_per_transformer: 3, ..cfg }).unwrap()
}

/// Profiles and power-flow states of the synthetic truth itself.
fn truth_states(out: &SynthOutput) -> (Vec<HourProfile>, Vec<StateSummary>) {
    let net = &out.network;
    let pf = PowerFlow::new(net);
    let mut profiles = Vec::new();
    let mut states = Vec::new();
    for h in &out.truth.hours {
        let injections = out.truth.injections(net, h.hour).unwrap();
        let sol = pf.solve(&injections, &h.source, &OPTS).unwrap();
        states.push(StateSummary::from_power_flow(net, pf.layout(), h.hour, &sol, &injections));
        profiles.push(HourProfile { hour: h.hour, injections, src_vmag: h.source.v_mag });
    }
    (profiles, states)
}

#[test]
fn without_pv_net_load_is_gross_plus_losses() {
    let out = small_synth(SynthConfig { pv_fraction: 0.0, seed: 21, ..Default::default() });
    let (profiles, states) = truth_states(&out);
    let fc = feeder_characteristics(&out.network, &profiles, &states).unwrap();
    assert_eq!(fc.hourly.len(), 24);
    for (h, das) in fc.hourly.iter().zip(&out.das) {
        assert_eq!(h.pv_kw, 0.0);
        assert!((h.net_load_kw - (h.gross_load_kw + h.losses_kw)).abs() < 1e-12);
        assert!(h.losses_kw > 0.0);
        // the feeder head also carries the capacitor, which has no active part
        assert!((h.net_load_kw - das.p_total_kw).abs() < 1e-6, "hour {}", h.hour);
    }
    for pf in &fc.load_power_factors {
        assert!((0.88 - 1e-9..=0.98 + 1e-9).contains(&pf.power_factor));
    }
}

#[test]
fn spring_midday_exports_and_flattens_the_voltage_profile() {
    let out = small_synth(SynthConfig { day_shape: DayShape::SpringMaxGen, pv_fraction: 0.5, seed: 3, ..Default::default() });
    let (profiles, states) = truth_states(&out);
    let fc = feeder_characteristics(&out.network, &profiles, &states).unwrap();
    let min = fc.hourly.iter().min_by(|a, b| a.net_load_kw.total_cmp(&b.net_load_kw)).unwrap();
    assert!(min.net_load_kw < 0.0);
    assert!((10..=14).contains(&min.hour), "{}", min.hour);
    let noon = fc.voltage_slope(min.hour).unwrap();
    let evening = fc.voltage_slope(19).unwrap();
    assert!(evening < 0.0 && noon.abs() < 0.25 * evening.abs(), "{noon} {evening}");

    let csv = fc.to_csv();
    assert!(csv.starts_with("section,hour,element,phase,distance,value\n"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("net_load_kw,")).count(), 24);
}

#[test]
fn estimated_day_report_is_consistent_and_reproducible() {
    let out = small_synth(SynthConfig { seed: 17, ..Default::default() });
    let net = &out.network;
    let hours: Vec<u32> = (0..24).collect();
    let ms = build_measurement_set(net, &out.energy, &out.voltage, &out.das, &hours).unwrap();
    let est = Estimator::new(net);
    let day = est.solve_day(&ms, &EstimatorOptions::default());
    assert!(day.failures().is_empty(), "{:?}", day.failures());

    let build = || {
        let profiles = read_profiles(net, &day.profiles_csv(net)).unwrap();
        let subs = read_substation(&day.substation_csv()).unwrap();
        let vm: Vec<(u32, [f64; 3])> = profiles.iter().map(|p| (p.hour, p.src_vmag)).collect();
        let sched = source_schedule(&vm, &subs, AngleMode::PerHour).unwrap();
        let pf = PowerFlow::new(net);
        let oracle: Vec<StateSummary> = profiles
            .iter()
            .zip(&sched)
            .map(|(p, (_, src))| {
                let sol = pf.solve(&p.injections, src, &OPTS).unwrap();
                StateSummary::from_power_flow(net, pf.layout(), p.hour, &sol, &p.injections)
            })
            .collect();
        let estimates: Vec<StateSummary> = day.optimal().iter().map(|s| StateSummary::from_estimate(net, est.layout(), s)).collect();
        build_report(ReportInputs {
            net,
            measurements: &ms.hours,
            voltage_readings: &out.voltage,
            profiles: &profiles,
            estimates: &estimates,
            oracle: &oracle,
            failed_hours: day.failures(),
        })
        .unwrap()
    };
    let a = build();
    let b = build();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.summary(), b.summary());

    let das_peak = out.das.iter().max_by(|x, y| x.p_total_kw.total_cmp(&y.p_total_kw)).unwrap().hour;
    assert_eq!(a.table_hour, das_peak);
    assert_eq!(a.hours.len(), 24);
    assert!(a.max_abs_v_error_pu < 1e-4);
    assert!(a.feeder_head_rms.p.value < 1e-4 && a.feeder_head_rms.q.value < 1e-4);
    assert_eq!(a.rms_per_meter.len(), net.loads.iter().filter(|l| l.has_voltage_meter).count());
    assert!(a.median_meter_rms().unwrap() < 0.01);
    let parsed: ComparisonReport = serde_json::from_str(&a.to_json()).unwrap();
    assert_eq!(parsed.table_hour, a.table_hour);
    assert_eq!(a.category_table_csv().lines().count(), 13);
}
