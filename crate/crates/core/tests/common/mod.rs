#![allow(dead_code)]

use feedertune::ingest::{FeederHeadRecord, HourMeasurements, VoltageMeasurement};
use feedertune::ivkernel::{Injections, IvLayout, PowerPair};
use feedertune::netmodel::{pu_to_kw, NetworkModel};
use feedertune::oracle::{PfOptions, PowerFlow, PowerFlowSolution, SourceSpec};

/// Small unbalanced feeder: 3-phase trunk, a two-phase lateral, a
/// single-phase service transformer, a capacitor bank and a PV unit.
pub const SMALL_FEEDER: &str = r#"{
  "base_mva": 1.0,
  "buses": [
    {"id": "sub",  "kind": "substation",  "phases": ["a","b","c"], "base_kv": 7.2},
    {"id": "head", "kind": "feeder_head", "phases": ["a","b","c"], "base_kv": 7.2},
    {"id": "n1",   "kind": "primary",     "phases": ["a","b","c"], "base_kv": 7.2},
    {"id": "n2",   "kind": "primary",     "phases": ["a","c"],     "base_kv": 7.2},
    {"id": "s1",   "kind": "secondary",   "phases": ["a"],         "base_kv": 0.24},
    {"id": "m1",   "kind": "load",        "phases": ["a"],         "base_kv": 0.24}
  ],
  "lines": [
    {"id": "src", "from": "sub", "to": "head", "phases": ["a","b","c"],
     "r_ohm": [[0.30,0.10,0.10],[0.10,0.30,0.10],[0.10,0.10,0.30]],
     "x_ohm": [[1.20,0.40,0.40],[0.40,1.20,0.40],[0.40,0.40,1.20]]},
    {"id": "l1", "from": "head", "to": "n1", "phases": ["a","b","c"],
     "r_ohm": [[0.35,0.16,0.15],[0.16,0.34,0.15],[0.15,0.15,0.36]],
     "x_ohm": [[0.82,0.38,0.33],[0.38,0.84,0.30],[0.33,0.30,0.83]],
     "ysh_us": [[6.0,-1.9,-1.2],[-1.9,5.7,-0.8],[-1.2,-0.8,5.5]]},
    {"id": "l2", "from": "n1", "to": "n2", "phases": ["c","a"],
     "r_ohm": [[0.51,0.18],[0.18,0.50]],
     "x_ohm": [[0.97,0.35],[0.35,0.95]],
     "ysh_us": [[4.0,-1.0],[-1.0,4.1]]},
    {"id": "d1", "from": "s1", "to": "m1", "phases": ["a"],
     "r_ohm": [[0.021]], "x_ohm": [[0.012]]}
  ],
  "transformers": [
    {"id": "t1", "from": "n2", "to": "s1", "phases": ["a"],
     "r_ohm": [[0.011]], "x_ohm": [[0.026]], "no_load_loss_kw": 0.12, "turns_ratio": 1.0}
  ],
  "capacitors": [
    {"id": "c1", "bus": "n1", "phases": ["a","b","c"], "b_us_per_phase": [1.6, 1.6, 1.6]}
  ],
  "loads": [
    {"id": "L1", "bus": "m1", "phases": ["a"], "metered": true, "has_voltage_meter": true, "pf_min": 0.85, "pf_max": 1.0},
    {"id": "L2", "bus": "n1", "phases": ["a","b","c"], "metered": false, "pf_min": 0.85, "pf_max": 1.0},
    {"id": "L3", "bus": "n2", "phases": ["c"], "metered": true, "pf_min": 0.9, "pf_max": 1.0}
  ],
  "pvs": [
    {"id": "P1", "bus": "m1", "phases": ["a"], "rated_kw": 6.0}
  ]
}"#;

pub fn small_feeder() -> NetworkModel {
    NetworkModel::from_json(SMALL_FEEDER).expect("fixture is valid")
}

/// True operating point of the small feeder, per unit.
pub fn truth(net: &NetworkModel, scale: f64) -> (Injections, SourceSpec) {
    let pf = [0.93, 0.9, 0.96, 0.88, 0.95];
    let mut k = 0;
    let loads = net
        .loads
        .iter()
        .map(|load| {
            load.phases
                .iter()
                .map(|_| {
                    let p = scale * (0.004 + 0.0012 * k as f64);
                    let q = p * (1.0 / (pf[k % 5] * pf[k % 5]) - 1.0f64).sqrt();
                    k += 1;
                    PowerPair { p, q }
                })
                .collect()
        })
        .collect();
    let pvs = net.pvs.iter().map(|pv| vec![0.003; pv.phases.len()]).collect();
    let source = SourceSpec { v_mag: [1.03, 1.025, 1.035], angle_deg: [0.0, -120.8, 121.1] };
    (Injections { loads, pvs }, source)
}

/// Noise-free measurements of a solved state, every load metered except
/// those declared unmetered, voltage readings at every load bus.
pub fn measure(net: &NetworkModel, layout: &IvLayout, inj: &Injections, sol: &PowerFlowSolution, hour: u32) -> HourMeasurements {
    let kw = |pu: f64| pu_to_kw(pu, net.base_mva);
    let gross_load_kw =
        net.loads.iter().enumerate().map(|(l, load)| load.metered.then(|| inj.loads[l].iter().map(|pq| kw(pq.p)).collect())).collect();
    let pv_kw = inj.pvs.iter().map(|v| v.iter().map(|&p| kw(p)).collect()).collect();
    let mut voltages = Vec::new();
    let mut buses: Vec<usize> = net.loads.iter().map(|l| l.bus).collect();
    buses.sort_unstable();
    buses.dedup();
    for b in buses {
        for bp in layout.bus_phase_range(b) {
            let (_, phase) = layout.bus_phase_of(bp);
            voltages.push(VoltageMeasurement { bus: b, phase, v_mag_pu: sol.v_mag(layout, bp) });
        }
    }
    let head_a = layout.bus_phase_range(net.feeder_head).start;
    let (mut p, mut q) = (0.0, 0.0);
    for s in &sol.powers.source {
        p += s.p;
        q += s.q;
    }
    HourMeasurements {
        hour,
        gross_load_kw,
        pv_kw,
        voltages,
        feeder_head: FeederHeadRecord { hour, p_total_kw: kw(p), q_total_kvar: kw(q), v_mag_phase_a_pu: sol.v_mag(layout, head_a) },
        anomalies: vec![],
    }
}

pub fn solved_truth(net: &NetworkModel, scale: f64) -> (Injections, SourceSpec, PowerFlowSolution) {
    let (inj, src) = truth(net, scale);
    let pf = PowerFlow::new(net);
    let sol = pf.solve(&inj, &src, &PfOptions { tol: 1e-12, max_iter: 50 }).unwrap();
    assert!(sol.converged);
    (inj, src, sol)
}
