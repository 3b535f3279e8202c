//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use feedertune::estimator::{pf_q_bounds, DayResult, Estimator, EstimatorOptions};
use feedertune::ingest::*;
use feedertune::ivkernel::{branch_end_currents, element_powers, line_flow_residual, Injections, IvLayout, PowerPair};
use feedertune::netmodel::{Branch, BranchKind, NetworkModel, Phase, PhaseMatrix, PhaseSet};
use feedertune::nlp::NlpProblem;
use feedertune::oracle::*;
use feedertune::report::*;
use feedertune::synth::{generate, SynthConfig, SynthOutput};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

const PF: PfOptions = PfOptions { tol: 1e-10, max_iter: 30 };

/// A 500-bus day run through estimator and power flow.
struct DayRun {
    out: SynthOutput,
    day: DayResult,
    peak: u32,
    estimates: Vec<StateSummary>,
    oracle: Vec<StateSummary>,
    peak_snapshot_time: Duration,
}

fn day_run(sigma_v: f64) -> DayRun {
    let cfg = SynthConfig { noise_sigma_v_pu: sigma_v, ..SynthConfig::default() };
    let out = generate(&cfg).expect("default feeder generates");
    let net = &out.network;
    let hours: Vec<u32> = (0..24).collect();
    let ms = build_measurement_set(net, &out.energy, &out.voltage, &out.das, &hours).expect("synthetic files ingest");
    let est = Estimator::new(net);
    let opts = EstimatorOptions::default();
    let day = est.solve_day(&ms, &opts);

    let profiles = read_profiles(net, &day.profiles_csv(net)).expect("profiles parse");
    let subs = read_substation(&day.substation_csv()).expect("substation parses");
    let peak = peak_hour(&subs).expect("at least one hour");
    let vm: Vec<(u32, [f64; 3])> = profiles.iter().map(|p| (p.hour, p.src_vmag)).collect();
    let sched = source_schedule(&vm, &subs, AngleMode::PerHour).expect("angles for every hour");
    let pf = PowerFlow::new(net);
    let oracle = profiles
        .iter()
        .zip(&sched)
        .filter_map(|(p, (_, src))| {
            let sol = pf.solve(&p.injections, src, &PF).ok()?;
            Some(StateSummary::from_power_flow(net, pf.layout(), p.hour, &sol, &p.injections))
        })
        .collect();
    let estimates = day.optimal().iter().map(|s| StateSummary::from_estimate(net, est.layout(), s)).collect();

    let meas = ms.hour(peak).expect("peak hour measured");
    let t = Instant::now();
    let prob = est.problem(meas, &opts).expect("peak problem builds");
    let _ = est.solve_snapshot(&prob, &opts);
    let peak_snapshot_time = t.elapsed();
    DayRun { out, day, peak, estimates, oracle, peak_snapshot_time }
}

fn criterion_1(run: &DayRun) -> Outcome {
    let net = &run.out.network;
    let e = run.estimates.iter().find(|s| s.hour == run.peak).ok_or("peak hour not estimated")?;
    let o = run.oracle.iter().find(|s| s.hour == run.peak).ok_or("peak hour not re-solved")?;
    let c = compare_states(net, e, o).map_err(|e| e.to_string())?;
    let worst = c.max_category_percent();
    for r in &c.category_table {
        match r.mode {
            ErrorMode::Percent => ensure(r.error.abs() <= 0.2, || format!("{} {:?}: {:.4}%", r.category.name(), r.quantity, r.error))?,
            ErrorMode::Absolute => ensure(r.error.abs() <= 1e-6, || format!("{} {:?}: {:.3e} kW", r.category.name(), r.quantity, r.error))?,
        }
    }
    let secs = run.peak_snapshot_time.as_secs_f64();
    ensure(secs <= 60.0, || format!("snapshot took {secs:.1} s"))?;
    Ok(format!("peak hour {}, worst category {worst:.2e}%, snapshot {secs:.2} s", run.peak))
}

fn criterion_2(run: &DayRun) -> Outcome {
    let net = &run.out.network;
    ensure(run.oracle.len() == 24 && run.estimates.len() == 24, || {
        format!("{} estimates, {} re-solves", run.estimates.len(), run.oracle.len())
    })?;
    let mut worst: f64 = 0.0;
    for (e, o) in run.estimates.iter().zip(&run.oracle) {
        worst = worst.max(compare_states(net, e, o).map_err(|e| e.to_string())?.max_abs_v_error_pu);
    }
    ensure(worst <= 1e-4, || format!("max |V| difference {worst:.3e} pu"))?;
    Ok(format!("max |V| difference {worst:.2e} pu over 24 h"))
}

fn meter_stats(run: &DayRun) -> (usize, f64, f64, f64) {
    let rms = meter_rms(&run.out.network, &run.oracle, &run.out.voltage);
    let mut v: Vec<f64> = rms.iter().map(|m| m.rms.value).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    (n, mean, median, v[n - 1])
}

fn criterion_3(run: &DayRun) -> Outcome {
    ensure(run.day.failures().is_empty(), || format!("failed hours {:?}", run.day.failures()))?;
    let worst_head = run.day.optimal().iter().map(|s| s.head_residual.p.abs().max(s.head_residual.q.abs())).fold(0.0, f64::max);
    ensure(worst_head <= 1e-6, || format!("feeder-head residual {worst_head:.3e} pu"))?;
    let (n, mean, _, max) = meter_stats(run);
    ensure(n == 105, || format!("{n} voltage meters"))?;
    ensure(mean <= 0.5, || format!("mean meter RMS {mean:.4}%"))?;
    ensure(max <= 1.4, || format!("worst meter RMS {max:.4}%"))?;
    Ok(format!("head residual {worst_head:.1e} pu, meter RMS mean {mean:.4}% max {max:.4}%"))
}

fn criterion_4(run: &DayRun) -> Outcome {
    let failures = run.day.failures();
    ensure(failures.is_empty(), || format!("failed hours {failures:?}"))?;
    let (_, _, median, max) = meter_stats(run);
    let limit = 3.0 * 0.002 * 100.0 / 1.0;
    ensure(median <= limit, || format!("median meter RMS {median:.4}% > {limit}%"))?;
    Ok(format!("no failures, median meter RMS {median:.4}% (limit {limit}%), max {max:.4}%"))
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize, diag: f64, off: f64) -> PhaseMatrix {
    let mut m = PhaseMatrix::zeros(n);
    for i in 0..n {
        m.set(i, i, rng.random_range(0.1..1.0) * diag);
        for j in 0..i {
            let v = rng.random_range(-1.0..1.0) * off;
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

fn phasors(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<C> {
    (0..n).map(|_| C::from_polar(rng.random_range(0.8..1.2) * scale, rng.random_range(-3.2..3.2))).collect()
}

fn flat(v: &[C]) -> Vec<f64> {
    v.iter().flat_map(|c| [c.re, c.im]).collect()
}

fn segment_gap(rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.random_range(1..=3);
    let transformer = rng.random_bool(0.3);
    let br = Branch {
        id: "seg".into(),
        kind: if transformer { BranchKind::Transformer } else { BranchKind::Line },
        element: 0,
        from: 0,
        to: 1,
        phases: PhaseSet::from_phases(&Phase::ALL[..n]),
        r: random_symmetric(rng, n, 0.05, 0.02),
        x: random_symmetric(rng, n, 0.1, 0.04),
        b: if transformer { PhaseMatrix::zeros(n) } else { random_symmetric(rng, n, 1e-3, 3e-4) },
        ratio: if transformer { rng.random_range(0.95..1.05) } else { 1.0 },
        no_load_loss: 0.0,
    };
    let (vi, vj, cur) = (phasors(rng, n, 1.0), phasors(rng, n, 1.0), phasors(rng, n, 0.3));
    let half_b = |p: usize, v: &[C]| (0..n).map(|k| C::new(0.0, 0.5 * br.b.get(p, k)) * v[k]).sum::<C>();
    let series: Vec<C> = (0..n).map(|p| cur[p] - half_b(p, &vi)).collect();
    let drop = |phi: usize| (0..n).map(|p| C::new(br.r.get(phi, p), br.x.get(phi, p)) * series[p]).sum::<C>();
    let want: Vec<C> = (0..n).map(|phi| drop(phi) - (vi[phi] / br.ratio - vj[phi])).collect();
    let want_from: Vec<C> = cur.iter().map(|c| c / br.ratio).collect();
    let want_to: Vec<C> = (0..n).map(|p| -series[p] + half_b(p, &vj)).collect();

    let got = line_flow_residual(&br, &flat(&vi), &flat(&vj), &flat(&cur)).expect("phase counts agree");
    let (fe, te) = branch_end_currents(&br, &flat(&vi), &flat(&vj), &flat(&cur)).expect("phase counts agree");
    [(got, want), (fe, want_from), (te, want_to)]
        .iter()
        .flat_map(|(g, w)| g.iter().zip(flat(w)).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

fn state_power_gap(net: &NetworkModel, layout: &IvLayout, rng: &mut ChaCha8Rng) -> f64 {
    let pu = net.per_unit();
    let x: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let inj = Injections {
        loads: net
            .loads
            .iter()
            .map(|l| (0..l.phases.len()).map(|_| PowerPair { p: rng.random_range(0.0..0.01), q: rng.random_range(0.0..0.005) }).collect())
            .collect(),
        pvs: net.pvs.iter().map(|p| (0..p.phases.len()).map(|_| rng.random_range(0.0..0.01)).collect()).collect(),
    };
    let got = element_powers(net, layout, &x, &inj);
    let volt = |bus: usize, ph: Phase| {
        let bp = layout.bus_phase(net, bus, ph).expect("phase exists");
        C::new(x[layout.v_re(bp)], x[layout.v_im(bp)])
    };
    let mut gap: f64 = 0.0;
    let mut diff = |a: f64, b: f64| gap = gap.max((a - b).abs() / (1.0 + b.abs()));
    let (mut lines, mut xfmr, mut source) = (C::default(), C::default(), C::default());
    for (k, br) in pu.branches.iter().enumerate() {
        let phases = br.phases.to_vec();
        let n = phases.len();
        let vi: Vec<C> = phases.iter().map(|&p| volt(br.from, p)).collect();
        let vj: Vec<C> = phases.iter().map(|&p| volt(br.to, p)).collect();
        let cur: Vec<C> = layout.branch_phase_range(k).map(|kk| C::new(x[layout.i_re(kk)], x[layout.i_im(kk)])).collect();
        let half_b = |p: usize, v: &[C]| (0..n).map(|q| C::new(0.0, 0.5 * br.b.get(p, q)) * v[q]).sum::<C>();
        let (mut loss, mut recv) = (C::new(br.no_load_loss * n as f64, 0.0), C::default());
        for p in 0..n {
            let s_send = vi[p] * (cur[p] / br.ratio).conj();
            let s_recv = vj[p] * (cur[p] - half_b(p, &vi) - half_b(p, &vj)).conj();
            loss += s_send - s_recv;
            recv += s_recv;
        }
        diff(got.branch_loss[k].p, loss.re);
        diff(got.branch_loss[k].q, loss.im);
        match br.kind {
            BranchKind::Source => source -= recv,
            BranchKind::Line => lines += loss,
            BranchKind::Transformer => xfmr += loss,
        }
    }
    let mut cap_q = 0.0;
    for (c, cap) in net.capacitors.iter().enumerate() {
        for (pos, ph) in cap.phases.iter().enumerate() {
            cap_q -= pu.cap_b[c][pos] * volt(cap.bus, ph).norm_sqr();
        }
    }
    let t = got.totals;
    diff(t.lines.p, lines.re);
    diff(t.lines.q, lines.im);
    diff(t.transformers.p, xfmr.re);
    diff(t.transformers.q, xfmr.im);
    diff(t.source.p, source.re);
    diff(t.source.q, source.im);
    diff(t.capacitors.q, cap_q);
    diff(t.loads.p, inj.loads.iter().flatten().map(|pq| pq.p).sum());
    diff(t.loads.q, inj.loads.iter().flatten().map(|pq| pq.q).sum());
    diff(t.pvs.p, -inj.pvs.iter().flatten().sum::<f64>());
    gap
}

fn dense_jacobian(prob: &dyn NlpProblem, x: &[f64]) -> Vec<Vec<f64>> {
    let (rows, cols) = prob.jacobian_structure();
    let mut vals = vec![0.0; rows.len()];
    prob.jacobian_values(x, &mut vals);
    let mut jac = vec![vec![0.0; prob.num_vars()]; prob.num_constraints()];
    for ((&r, &c), v) in rows.iter().zip(&cols).zip(&vals) {
        jac[r][c] += v;
    }
    jac
}

fn jacobian_gap(prob: &dyn NlpProblem, x: &[f64]) -> f64 {
    let (n, m) = (prob.num_vars(), prob.num_constraints());
    let jac = dense_jacobian(prob, x);
    let scale = jac.iter().flatten().fold(1.0f64, |s, v| s.max(v.abs()));
    let h = 1e-6;
    let (mut gp, mut gm) = (vec![0.0; m], vec![0.0; m]);
    let mut xp = x.to_vec();
    let mut gap: f64 = 0.0;
    for c in 0..n {
        xp[c] = x[c] + h;
        prob.constraints(&xp, &mut gp);
        xp[c] = x[c] - h;
        prob.constraints(&xp, &mut gm);
        xp[c] = x[c];
        for r in 0..m {
            gap = gap.max((jac[r][c] - (gp[r] - gm[r]) / (2.0 * h)).abs());
        }
    }
    gap / scale
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let seg = (0..1000).map(|_| segment_gap(&mut rng)).fold(0.0, f64::max);
    ensure(seg <= 1e-12, || format!("segment residual gap {seg:.2e}"))?;

    let net = common::small_feeder();
    let layout = IvLayout::new(&net);
    let st = (0..1000).map(|_| state_power_gap(&net, &layout, &mut rng)).fold(0.0, f64::max);
    ensure(st <= 1e-12, || format!("element power gap {st:.2e}"))?;

    let (inj, _, sol) = common::solved_truth(&net, 1.0);
    let est = Estimator::new(&net);
    let meas = common::measure(&net, est.layout(), &inj, &sol, 0);
    let prob = est.problem(&meas, &EstimatorOptions::default()).map_err(|e| e.to_string())?;
    let mut x0 = vec![0.0; prob.num_vars()];
    prob.initial_point(&mut x0);
    let mut jac: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = x0.iter().map(|v| v + rng.random_range(-0.2..0.2) * v.abs().max(0.05)).collect();
        jac = jac.max(jacobian_gap(&prob, &x));
    }
    ensure(jac <= 1e-6, || format!("Jacobian relative error {jac:.2e}"))?;
    Ok(format!("segments {seg:.1e}, element powers {st:.1e}, Jacobian {jac:.1e}"))
}

fn two_bus_gap() -> Result<f64, String> {
    let (r, x, p, q) = (0.01, 0.02, 0.5, 0.1);
    let text = format!(
        r#"{{"base_mva": 1.0,
            "buses": [{{"id": "sub", "kind": "substation", "phases": ["a"], "base_kv": 1.0}},
                      {{"id": "head", "kind": "feeder_head", "phases": ["a"], "base_kv": 1.0}}],
            "lines": [{{"id": "src", "from": "sub", "to": "head", "phases": ["a"], "r_ohm": [[{r}]], "x_ohm": [[{x}]]}}],
            "loads": [{{"id": "L", "bus": "head", "phases": ["a"]}}]}}"#
    );
    let net = NetworkModel::from_json(&text).map_err(|e| e.to_string())?;
    let pf = PowerFlow::new(&net);
    let inj = Injections { loads: vec![vec![PowerPair { p, q }]], pvs: vec![] };
    let sol = pf.solve(&inj, &SourceSpec::balanced(1.0), &PfOptions { tol: 1e-12, max_iter: 50 }).map_err(|e| e.to_string())?;
    let b = 2.0 * (r * p + x * q) - 1.0;
    let c = (r * r + x * x) * (p * p + q * q);
    let want = ((-b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt();
    let head = pf.layout().bus_phase(&net, net.feeder_head, Phase::A).ok_or("head phase a")?;
    Ok((sol.v_mag(pf.layout(), head) - want).abs())
}

fn criterion_6() -> Outcome {
    let gap = two_bus_gap()?;
    ensure(gap <= 1e-10, || format!("2-bus |V| off by {gap:.2e}"))?;
    let mut worst_iter = 0;
    let mut worst_imbalance: f64 = 0.0;
    let mut sizes = Vec::new();
    for (primary, transformers, seed) in [(58, 10, 31), (148, 25, 32), (298, 50, 33), (598, 100, 34)] {
        let out = generate(&SynthConfig { n_primary_buses: primary, n_transformers: transformers, seed, ..SynthConfig::default() })
            .map_err(|e| e.to_string())?;
        let net = &out.network;
        sizes.push(net.buses.len());
        let pf = PowerFlow::new(net);
        for h in &out.truth.hours {
            let inj = out.truth.injections(net, h.hour).ok_or("truth hour")?;
            let sol = pf.solve(&inj, &h.source, &PF).map_err(|e| e.to_string())?;
            worst_iter = worst_iter.max(sol.iterations);
            let imb = sol.powers.totals.imbalance();
            worst_imbalance = worst_imbalance.max(imb.p.abs()).max(imb.q.abs());
        }
    }
    ensure(*sizes.last().unwrap() <= 1000, || format!("largest feeder has {} buses", sizes.last().unwrap()))?;
    ensure(worst_iter <= 10, || format!("{worst_iter} Newton iterations"))?;
    ensure(worst_imbalance <= 1e-8, || format!("power imbalance {worst_imbalance:.2e} pu"))?;
    Ok(format!("2-bus {gap:.1e} pu, buses {sizes:?}: at most {worst_iter} iterations, imbalance {worst_imbalance:.1e} pu"))
}

fn criterion_7() -> Outcome {
    for ((d, r, pv), want) in [((2.0, 0.0, 0.0), 2.0), ((0.5, 1.2, 3.0), 2.3), ((0.0, 0.8, 0.8), 0.0)] {
        let g = gross_load(d, r, pv).map_err(|e| e.to_string())?;
        ensure((g.kw - want).abs() < 1e-12 && !g.anomalous, || format!("gross_load({d}, {r}, {pv}) = {}", g.kw))?;
    }
    let key = ("L1".to_string(), Channel::Delivered);
    let record = |minute: u32, minutes: u32, kwh: f64| MeterEnergyRecord {
        meter_id: "L1".into(),
        bus: "m1".into(),
        channel: Channel::Delivered,
        interval_start: format_interval_start("2024-07-15", 9, minute),
        interval_minutes: minutes,
        energy_kwh: kwh,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let e: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..3.0)).collect();
        let quarters: Vec<_> = (0..4).map(|k| record(15 * k, 15, e[k as usize])).collect();
        let q = derive_hourly_power(&quarters, 9).map_err(|e| e.to_string())?[&key];
        let h = derive_hourly_power(&[record(0, 60, e.iter().sum())], 9).map_err(|e| e.to_string())?[&key];
        match (q, h) {
            (HourlyPower::Kw(a), HourlyPower::Kw(b)) => ensure((a - b).abs() <= 1e-12 * (1.0 + b), || format!("{a} vs {b}"))?,
            other => return Err(format!("aggregation gave {other:?}")),
        }
    }

    let out = generate(&SynthConfig { n_primary_buses: 40, n_transformers: 10, seed: 12, ..SynthConfig::default() })
        .map_err(|e| e.to_string())?;
    let net = &out.network;
    let victim = net.metered_loads().next().ok_or("no metered load")?;
    let id = net.loads[victim].id.clone();
    let mut energy = out.energy.clone();
    energy.retain(|r| !(r.meter_id == id && r.channel == Channel::Delivered && r.interval_start.ends_with("05:15:00")));
    let hours: Vec<u32> = (0..24).collect();
    let set = build_measurement_set(net, &energy, &out.voltage, &out.das, &hours).map_err(|e| e.to_string())?;
    for h in &set.hours {
        let mut all: Vec<usize> = h.metered().chain(h.unmetered()).collect();
        all.sort_unstable();
        ensure(all == (0..net.loads.len()).collect::<Vec<_>>(), || format!("hour {} is not a partition", h.hour))?;
        ensure(h.metered().count() + h.unmetered().count() == net.loads.len(), || "overlap".into())?;
        let demoted = h.gross_load_kw[victim].is_none();
        ensure(demoted == (h.hour == 5), || format!("load {id} demotion wrong at hour {}", h.hour))?;
    }
    Ok("gross load, 15/60-min aggregation, gap demotion and partition exact".into())
}

fn criterion_8() -> Outcome {
    let net = common::small_feeder();
    let (inj, _, sol) = common::solved_truth(&net, 1.0);
    let est = Estimator::new(&net);
    let mut meas = common::measure(&net, est.layout(), &inj, &sol, 0);
    meas.feeder_head.v_mag_phase_a_pu = 1.01;
    meas.gross_load_kw[2] = Some(vec![5.0]);
    let prob = est.problem(&meas, &EstimatorOptions::default()).map_err(|e| e.to_string())?;
    let table = prob.bounds_report();
    let (q_lo, q_hi) = (0.0, 5.0 * (1.0f64 / 0.81 - 1.0).sqrt());
    let cases: [(&str, f64, f64); 10] = [
        ("feeder_head.a |V|^2", 1.01 * 1.01, 1.01 * 1.01),
        ("feeder_head.b |V|^2", (0.8 * 1.01f64).powi(2), (1.2 * 1.01f64).powi(2)),
        ("feeder_head.c |V|^2", (0.8 * 1.01f64).powi(2), (1.2 * 1.01f64).powi(2)),
        ("substation.a |V|", 0.75 * 1.01, 1.25 * 1.01),
        ("substation.b |V|", 0.75 * 1.01, 1.25 * 1.01),
        ("substation.c |V|", 0.75 * 1.01, 1.25 * 1.01),
        ("substation.a angle_deg", -3.0, 3.0),
        ("substation.b angle_deg", -123.0, -117.0),
        ("substation.c angle_deg", 117.0, 123.0),
        ("load L3.c q_kvar", q_lo, q_hi),
    ];
    let lib = pf_q_bounds(5.0, 0.9, 1.0);
    ensure((lib.0 - q_lo).abs() < 1e-12 && (lib.1 - q_hi).abs() < 1e-12, || format!("power-factor bounds {lib:?}"))?;
    for (name, lo, hi) in cases {
        let b = table.iter().find(|b| b.name == name).ok_or_else(|| format!("no bound `{name}`"))?;
        ensure((b.lower - lo).abs() < 1e-12 && (b.upper - hi).abs() < 1e-12, || {
            format!("{name}: [{}, {}] expected [{lo}, {hi}]", b.lower, b.upper)
        })?;
    }
    Ok("10 of 10 spot cases match".into())
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_feedertune")).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    ensure(o.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn pipeline(dir: &Path) -> Result<(), String> {
    std::fs::write(
        dir.join("options.json"),
        r#"{"n_primary_buses": 60, "n_transformers": 12, "noise_sigma_v_pu": 0.002, "noise_sigma_e_kwh": 0.01}"#,
    )
    .map_err(|e| e.to_string())?;
    cli(dir, &["synth", "--options", "options.json", "--seed", "42", "--out", "data"])?;
    let common = ["--topology", "data/topology.json", "--measurements", "data", "--out", "run"];
    for cmd in ["estimate", "pf", "compare", "report"] {
        let mut args = vec![cmd];
        args.extend(common);
        cli(dir, &args)?;
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let mut compared = 0;
    for sub in ["data", "run"] {
        let mut names: Vec<_> = std::fs::read_dir(a.path().join(sub))
            .map_err(|e| e.to_string())?
            .map(|e| e.map(|e| e.file_name()).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        names.sort();
        for name in names {
            let x = std::fs::read(a.path().join(sub).join(&name)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.path().join(sub).join(&name)).map_err(|e| format!("{name:?}: {e}"))?;
            ensure(x == y, || format!("{sub}/{} differs", name.to_string_lossy()))?;
            compared += 1;
        }
    }
    ensure(compared >= 15, || format!("only {compared} files written"))?;
    Ok(format!("{compared} files byte-identical across two runs"))
}

fn main() {
    let clean = day_run(0.0);
    let noisy = day_run(0.002);
    let results: Vec<(&str, Outcome)> = vec![
        ("estimator and power flow agree by category at the peak hour", criterion_1(&clean)),
        ("estimator and power flow agree on every bus voltage", criterion_2(&clean)),
        ("clean round trip recovers the AMI voltages", criterion_3(&clean)),
        ("noisy voltages keep the median meter error bounded", criterion_4(&noisy)),
        ("kernel matches complex arithmetic and finite differences", criterion_5()),
        ("power flow: closed form, conservation, flat-start convergence", criterion_6()),
        ("gross load and measurement partition", criterion_7()),
        ("generated bounds equal hand-computed values", criterion_8()),
        ("identical inputs give byte-identical exports", criterion_9()),
    ];
    let mut failed = 0;
    for (k, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(detail) => println!("PASS {} {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", k + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
