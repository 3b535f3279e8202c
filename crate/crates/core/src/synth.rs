//! Synthetic radial feeders with service transformers and secondaries, a
//! day of ground-truth operating points solved by the power flow, and the
//! AMI/DAS files a utility would hold for them.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{format_interval_start, Channel, FeederHeadRecord, MeterEnergyRecord, VoltageRecord};
use crate::ivkernel::{Injections, PowerPair};
use crate::netmodel::schema::{BusDoc, CapacitorDoc, LineDoc, LoadDoc, PvDoc, TransformerDoc};
use crate::netmodel::{kw_to_pu, pu_to_kw, BusKind, NetworkError, NetworkModel, Phase, TopologyDocument};
use crate::oracle::{solve_timeseries, HourInput, PfOptions, PowerFlow, SourceSpec};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("ground truth did not converge in {attempts} attempts with scaled-down loads (hour {hour})")]
    NonConvergent { attempts: usize, hour: u32 },
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayShape {
    /// Evening-peaked demand on a hot day, moderate PV.
    SummerPeak,
    /// Mild demand with strong midday PV.
    SpringMaxGen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_primary_buses: usize,
    pub n_transformers: usize,
    pub loads_per_transformer: usize,
    pub pv_fraction: f64,
    pub metered_fraction: f64,
    pub voltage_meter_fraction: f64,
    pub load_peak_kw_range: (f64, f64),
    pub day_shape: DayShape,
    pub noise_sigma_v_pu: f64,
    pub noise_sigma_e_kwh: f64,
    pub seed: u64,
    /// 15 or 60.
    pub interval_minutes: u32,
    /// Study day written into the energy timestamps.
    pub date: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_primary_buses: 298,
            n_transformers: 50,
            loads_per_transformer: 3,
            pv_fraction: 0.3,
            metered_fraction: 0.9,
            voltage_meter_fraction: 0.7,
            load_peak_kw_range: (3.0, 7.0),
            day_shape: DayShape::SummerPeak,
            noise_sigma_v_pu: 0.0,
            noise_sigma_e_kwh: 0.0,
            seed: 1,
            interval_minutes: 15,
            date: "2024-07-15".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.into()));
        for (name, f) in [
            ("pv_fraction", self.pv_fraction),
            ("metered_fraction", self.metered_fraction),
            ("voltage_meter_fraction", self.voltage_meter_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.n_primary_buses == 0 || self.n_transformers == 0 || self.loads_per_transformer == 0 {
            return bad("bus, transformer and load counts must be positive");
        }
        let (lo, hi) = self.load_peak_kw_range;
        if !(lo > 0.0 && hi >= lo) {
            return bad("load_peak_kw_range must be positive and ordered");
        }
        if !(self.noise_sigma_v_pu >= 0.0 && self.noise_sigma_e_kwh >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if self.interval_minutes != 15 && self.interval_minutes != 60 {
            return bad("interval_minutes must be 15 or 60");
        }
        if chrono::NaiveDate::parse_from_str(&self.date, "%Y-%m-%d").is_err() {
            return bad("date must be YYYY-MM-DD");
        }
        Ok(())
    }

    pub fn n_loads(&self) -> usize {
        self.n_transformers * self.loads_per_transformer
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLoad {
    pub id: String,
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPv {
    pub id: String,
    pub p_kw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthVoltage {
    pub bus: String,
    pub phase: Phase,
    pub v_mag_pu: f64,
    pub v_ang_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthHour {
    pub hour: u32,
    pub loads: Vec<TruthLoad>,
    pub pvs: Vec<TruthPv>,
    pub source: SourceSpec,
    pub voltages: Vec<TruthVoltage>,
    pub feeder_head_p_kw: f64,
    pub feeder_head_q_kvar: f64,
    pub iterations: usize,
    pub max_residual: f64,
}

/// Hourly true states. Written as `ground_truth.json` for test harnesses;
/// the estimator never reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    /// Load multiplier applied after convergence retries (1 when none).
    pub load_scale: f64,
    pub hours: Vec<TruthHour>,
}

impl GroundTruth {
    /// Loads and PV of one hour, per unit, in network order.
    pub fn injections(&self, net: &NetworkModel, hour: u32) -> Option<Injections> {
        let h = self.hours.iter().find(|h| h.hour == hour)?;
        let pu = |kw: f64| kw_to_pu(kw, net.base_mva);
        Some(Injections {
            loads: h
                .loads
                .iter()
                .map(|l| l.p_kw.iter().zip(&l.q_kvar).map(|(&p, &q)| PowerPair { p: pu(p), q: pu(q) }).collect())
                .collect(),
            pvs: h.pvs.iter().map(|v| v.p_kw.iter().map(|&p| pu(p)).collect()).collect(),
        })
    }

    pub fn hour(&self, hour: u32) -> Option<&TruthHour> {
        self.hours.iter().find(|h| h.hour == hour)
    }
}

/// Everything [`generate`] produces.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub topology: TopologyDocument,
    pub network: NetworkModel,
    pub truth: GroundTruth,
    pub energy: Vec<MeterEnergyRecord>,
    pub voltage: Vec<VoltageRecord>,
    pub das: Vec<FeederHeadRecord>,
}

impl SynthOutput {
    /// Writes `topology.json`, `ami_energy.csv`, `ami_voltage.csv`,
    /// `das.csv` and `ground_truth.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| SynthError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let files = [
            ("topology.json", self.topology.to_json()),
            ("ami_energy.csv", crate::ingest::write_energy_csv(&self.energy)),
            ("ami_voltage.csv", crate::ingest::write_voltage_csv(&self.voltage)),
            ("das.csv", crate::ingest::write_das_csv(&self.das)),
            ("ground_truth.json", serde_json::to_string_pretty(&self.truth).expect("ground truth serializes")),
        ];
        for (name, text) in files {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(io(&p))?;
        }
        Ok(())
    }
}

// Per-mile impedances of common overhead and underground configurations
// (ohm/mile, microsiemens/mile), phases a, b, c.
const OH_R: [[f64; 3]; 3] = [[0.3465, 0.1560, 0.1580], [0.1560, 0.3375, 0.1535], [0.1580, 0.1535, 0.3414]];
const OH_X: [[f64; 3]; 3] = [[1.0179, 0.5017, 0.4236], [0.5017, 1.0478, 0.3849], [0.4236, 0.3849, 1.0348]];
const OH_B: [[f64; 3]; 3] = [[6.2998, -1.9958, -1.2595], [-1.9958, 5.9597, -0.7417], [-1.2595, -0.7417, 5.6386]];
const UG_R: [[f64; 3]; 3] = [[0.7982, 0.3192, 0.2849], [0.3192, 0.7891, 0.3192], [0.2849, 0.3192, 0.7982]];
const UG_X: [[f64; 3]; 3] = [[0.4463, 0.0328, -0.0143], [0.0328, 0.4041, 0.0328], [-0.0143, 0.0328, 0.4463]];
const UG_B: [[f64; 3]; 3] = [[96.8897, 0.0, 0.0], [0.0, 96.8897, 0.0], [0.0, 0.0, 96.8897]];
const LATERAL_R: f64 = 1.3292;
const LATERAL_X: f64 = 1.3475;
const LATERAL_B: f64 = 4.5193;

const PRIMARY_KV: f64 = 7.2;
const SECONDARY_KV: f64 = 0.24;

const SUMMER_LOAD: [f64; 24] = [
    0.45, 0.40, 0.37, 0.35, 0.35, 0.38, 0.45, 0.50, 0.52, 0.55, 0.60, 0.66, 0.72, 0.78, 0.84, 0.90, 0.96, 1.00, 0.98, 0.92, 0.82, 0.70,
    0.58, 0.50,
];
const SPRING_LOAD: [f64; 24] = [
    0.35, 0.32, 0.30, 0.29, 0.30, 0.34, 0.42, 0.48, 0.45, 0.40, 0.37, 0.36, 0.36, 0.37, 0.39, 0.43, 0.50, 0.58, 0.64, 0.66, 0.62, 0.55,
    0.46, 0.40,
];

fn solar(shape: DayShape, hour: u32) -> f64 {
    let (rise, set, peak) = match shape {
        DayShape::SummerPeak => (5.5, 19.5, 0.85),
        DayShape::SpringMaxGen => (6.0, 18.5, 1.0),
    };
    let t = hour as f64 + 0.5;
    if t <= rise || t >= set {
        0.0
    } else {
        peak * (std::f64::consts::PI * (t - rise) / (set - rise)).sin()
    }
}

fn sub_matrix(m: &[[f64; 3]; 3], phases: &[Phase], scale: f64) -> Vec<Vec<f64>> {
    phases.iter().map(|a| phases.iter().map(|b| m[a.index()][b.index()] * scale).collect()).collect()
}

/// Samples exactly `round(frac·n)` distinct indices.
fn pick(rng: &mut ChaCha8Rng, n: usize, frac: f64) -> Vec<bool> {
    let k = ((frac * n as f64).round() as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut out = vec![false; n];
    for &i in &idx[..k] {
        out[i] = true;
    }
    out
}

struct Premise {
    peak_kw: f64,
    pf: f64,
    phase: Phase,
}

fn build_topology(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (TopologyDocument, Vec<Premise>, Vec<f64>) {
    let abc = vec![Phase::A, Phase::B, Phase::C];
    let mut buses = vec![
        BusDoc { id: "sub".into(), kind: BusKind::Substation, phases: abc.clone(), base_kv: PRIMARY_KV },
        BusDoc { id: "head".into(), kind: BusKind::FeederHead, phases: abc.clone(), base_kv: PRIMARY_KV },
    ];
    let mut lines = vec![LineDoc {
        id: "src".into(),
        from: "sub".into(),
        to: "head".into(),
        phases: abc.clone(),
        r_ohm: vec![vec![0.30, 0.10, 0.10], vec![0.10, 0.30, 0.10], vec![0.10, 0.10, 0.30]],
        x_ohm: vec![vec![1.20, 0.40, 0.40], vec![0.40, 1.20, 0.40], vec![0.40, 0.40, 1.20]],
        ysh_us: vec![],
    }];

    // primary: a branching three-phase trunk, then laterals
    let n = cfg.n_primary_buses;
    let n_trunk = ((0.4 * n as f64).round() as usize).clamp(1, n);
    // (bus id, phases) of primary buses; index 0 is the feeder head
    let mut primary: Vec<(String, Vec<Phase>)> = vec![("head".into(), abc.clone())];
    let mut trunk: Vec<usize> = vec![0];
    let mut laterals: Vec<usize> = Vec::new();
    for i in 0..n {
        let id = format!("p{:03}", i + 1);
        let (parent, phases, underground, miles) = if i < n_trunk {
            let back = trunk.len().min(4);
            let parent = trunk[trunk.len() - 1 - rng.random_range(0..back)];
            (parent, abc.clone(), rng.random::<f64>() < 0.2, rng.random_range(0.08..0.22))
        } else {
            let extend = !laterals.is_empty() && rng.random::<f64>() < 0.55;
            let parent = if extend {
                laterals[laterals.len() - 1 - rng.random_range(0..laterals.len().min(3))]
            } else {
                trunk[rng.random_range(1.max(trunk.len() / 5)..trunk.len().max(2)).min(trunk.len() - 1)]
            };
            let pp = &primary[parent].1;
            let phases = if pp.len() == 3 && rng.random::<f64>() < 0.25 {
                let skip = rng.random_range(0..3);
                pp.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, p)| *p).collect()
            } else if pp.len() > 1 {
                vec![pp[rng.random_range(0..pp.len())]]
            } else {
                pp.clone()
            };
            (parent, phases, false, rng.random_range(0.03..0.12))
        };
        let (r, x, b) = if phases.len() == 1 {
            (vec![vec![LATERAL_R * miles]], vec![vec![LATERAL_X * miles]], vec![vec![LATERAL_B * miles]])
        } else if underground {
            (sub_matrix(&UG_R, &phases, miles), sub_matrix(&UG_X, &phases, miles), sub_matrix(&UG_B, &phases, miles))
        } else {
            (sub_matrix(&OH_R, &phases, miles), sub_matrix(&OH_X, &phases, miles), sub_matrix(&OH_B, &phases, miles))
        };
        lines.push(LineDoc {
            id: format!("ln{:03}", i + 1),
            from: primary[parent].0.clone(),
            to: id.clone(),
            phases: phases.clone(),
            r_ohm: r,
            x_ohm: x,
            ysh_us: b,
        });
        buses.push(BusDoc { id: id.clone(), kind: BusKind::Primary, phases: phases.clone(), base_kv: PRIMARY_KV });
        if i < n_trunk {
            trunk.push(primary.len());
        } else {
            laterals.push(primary.len());
        }
        primary.push((id, phases));
    }

    // one 3 × 50 kvar bank two thirds down the trunk
    let cap_bus = trunk[(2 * trunk.len() / 3).max(1).min(trunk.len() - 1)];
    let b_us = 50e3 / (PRIMARY_KV * 1e3).powi(2) * 1e6;
    let capacitors =
        vec![CapacitorDoc { id: "cap1".into(), bus: primary[cap_bus].0.clone(), phases: abc.clone(), b_us_per_phase: vec![b_us; 3] }];

    // service transformers, secondaries and premises
    let mut transformers = Vec::new();
    let mut loads = Vec::new();
    let mut pvs = Vec::new();
    let mut premises = Vec::new();
    let n_loads = cfg.n_loads();
    let has_pv = pick(rng, n_loads, cfg.pv_fraction);
    let metered = pick(rng, n_loads, cfg.metered_fraction);
    let v_meter = pick(rng, n_loads, cfg.voltage_meter_fraction);
    let mut pv_rated = vec![0.0; n_loads];
    let zb_sec = SECONDARY_KV * SECONDARY_KV; // ohms on a 1 MVA base
    for t in 0..cfg.n_transformers {
        let host = 1 + rng.random_range(0..n);
        let (host_id, host_phases) = primary[host].clone();
        let phase = host_phases[rng.random_range(0..host_phases.len())];
        let kva = [25.0, 37.5, 50.0][rng.random_range(0..3)];
        let z_own = zb_sec * 1000.0 / kva;
        let sec = format!("x{:03}", t + 1);
        buses.push(BusDoc { id: sec.clone(), kind: BusKind::Secondary, phases: vec![phase], base_kv: SECONDARY_KV });
        transformers.push(TransformerDoc {
            id: format!("t{:03}", t + 1),
            from: host_id,
            to: sec.clone(),
            phases: vec![phase],
            r_ohm: vec![vec![0.011 * z_own]],
            x_ohm: vec![vec![0.022 * z_own]],
            no_load_loss_kw: 0.0025 * kva,
            turns_ratio: 1.0,
        });
        for k in 0..cfg.loads_per_transformer {
            let l = t * cfg.loads_per_transformer + k;
            let m = format!("m{:03}", l + 1);
            buses.push(BusDoc { id: m.clone(), kind: BusKind::Load, phases: vec![phase], base_kv: SECONDARY_KV });
            let feet = rng.random_range(50.0..200.0);
            lines.push(LineDoc {
                id: format!("sv{:03}", l + 1),
                from: sec.clone(),
                to: m.clone(),
                phases: vec![phase],
                r_ohm: vec![vec![0.194 * feet / 1000.0 * 2.0]],
                x_ohm: vec![vec![0.0635 * feet / 1000.0 * 2.0]],
                ysh_us: vec![],
            });
            let id = format!("ld{:03}", l + 1);
            loads.push(LoadDoc {
                id: id.clone(),
                bus: m.clone(),
                phases: vec![phase],
                metered: metered[l],
                has_voltage_meter: v_meter[l],
                pf_min: crate::netmodel::schema::DEFAULT_PF_MIN,
                pf_max: crate::netmodel::schema::DEFAULT_PF_MAX,
            });
            let (lo, hi) = cfg.load_peak_kw_range;
            premises.push(Premise { peak_kw: rng.random_range(lo..=hi), pf: rng.random_range(0.88..=0.98), phase });
            if has_pv[l] {
                let rated = [4.0, 5.0, 6.0, 7.5][rng.random_range(0..4)];
                pv_rated[l] = rated;
                pvs.push(PvDoc { id: format!("pv{:03}", l + 1), bus: m, phases: vec![phase], rated_kw: rated });
            }
        }
    }
    (TopologyDocument { base_mva: 1.0, buses, lines, transformers, capacitors, loads, pvs }, premises, pv_rated)
}

/// Generates a feeder, its true day and the measurement files.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let mut topo_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut day_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed_0001));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed_0002));

    let (topology, premises, pv_rated) = build_topology(cfg, &mut topo_rng);
    let network = NetworkModel::from_document(&topology)?;

    // hourly shapes: one jitter per premise-hour, one source pattern
    let shape = match cfg.day_shape {
        DayShape::SummerPeak => SUMMER_LOAD,
        DayShape::SpringMaxGen => SPRING_LOAD,
    };
    let jitter = Normal::new(0.0, 0.1).expect("valid sigma");
    let load_factor: Vec<[f64; 24]> =
        premises.iter().map(|_| std::array::from_fn(|h| (shape[h] * (1.0 + jitter.sample(&mut day_rng))).max(0.15 * shape[h]))).collect();
    let v_base: [f64; 3] = std::array::from_fn(|_| day_rng.random_range(1.02..1.04));
    let angle = [0.0, -120.0 + day_rng.random_range(-1.0..1.0), 120.0 + day_rng.random_range(-1.0..1.0)];
    let sources: Vec<SourceSpec> = (0..24u32)
        .map(|h| {
            let swing = 0.004 * (2.0 * std::f64::consts::PI * (h as f64 - 4.0) / 24.0).sin();
            SourceSpec { v_mag: std::array::from_fn(|k| v_base[k] - swing), angle_deg: angle }
        })
        .collect();

    let pf = PowerFlow::new(&network);
    let opts = PfOptions { tol: 1e-10, max_iter: 50 };
    let mva = network.base_mva;
    let pv_index: Vec<usize> = (0..premises.len()).filter(|&l| pv_rated[l] > 0.0).collect();

    let mut scale = 1.0;
    let mut attempts = 0;
    let (inputs, solutions) = loop {
        attempts += 1;
        let inputs: Vec<HourInput> = (0..24u32)
            .map(|h| {
                let loads = premises
                    .iter()
                    .enumerate()
                    .map(|(l, prem)| {
                        let p = scale * prem.peak_kw * load_factor[l][h as usize];
                        let q = p * (1.0 / (prem.pf * prem.pf) - 1.0).sqrt();
                        vec![PowerPair { p: kw_to_pu(p, mva), q: kw_to_pu(q, mva) }]
                    })
                    .collect();
                let pvs = pv_index.iter().map(|&l| vec![kw_to_pu(pv_rated[l] * solar(cfg.day_shape, h), mva)]).collect();
                HourInput { hour: h, injections: Injections { loads, pvs }, source: sources[h as usize] }
            })
            .collect();
        let results = solve_timeseries(&pf, &inputs, &opts);
        let failed = results.iter().position(|r| !matches!(r, Ok(s) if s.converged));
        match failed {
            None => break (inputs, results.into_iter().map(|r| r.unwrap()).collect::<Vec<_>>()),
            Some(h) if attempts >= 5 => return Err(SynthError::NonConvergent { attempts, hour: h as u32 }),
            Some(_) => scale *= 0.7,
        }
    };

    let lay = pf.layout();
    let kw = |pu: f64| pu_to_kw(pu, mva);
    let mut hours = Vec::with_capacity(24);
    let mut das = Vec::with_capacity(24);
    for (input, sol) in inputs.iter().zip(&solutions) {
        let (mut p_head, mut q_head) = (0.0, 0.0);
        for s in &sol.powers.source {
            p_head += kw(s.p);
            q_head += kw(s.q);
        }
        let voltages = (0..lay.n_bus_phases())
            .map(|bp| {
                let (bus, phase) = lay.bus_phase_of(bp);
                let (re, im) = lay.voltage(&sol.x, bp);
                TruthVoltage { bus: network.buses[bus].id.clone(), phase, v_mag_pu: re.hypot(im), v_ang_deg: im.atan2(re).to_degrees() }
            })
            .collect();
        let head_a = lay.bus_phase(&network, network.feeder_head, Phase::A).expect("head has phase a");
        das.push(FeederHeadRecord { hour: input.hour, p_total_kw: p_head, q_total_kvar: q_head, v_mag_phase_a_pu: sol.v_mag(lay, head_a) });
        hours.push(TruthHour {
            hour: input.hour,
            loads: network
                .loads
                .iter()
                .zip(&input.injections.loads)
                .map(|(l, v)| TruthLoad {
                    id: l.id.clone(),
                    p_kw: v.iter().map(|pq| kw(pq.p)).collect(),
                    q_kvar: v.iter().map(|pq| kw(pq.q)).collect(),
                })
                .collect(),
            pvs: network
                .pvs
                .iter()
                .zip(&input.injections.pvs)
                .map(|(p, v)| TruthPv { id: p.id.clone(), p_kw: v.iter().map(|&x| kw(x)).collect() })
                .collect(),
            source: input.source,
            voltages,
            feeder_head_p_kw: p_head,
            feeder_head_q_kvar: q_head,
            iterations: sol.iterations,
            max_residual: sol.max_residual,
        });
    }
    let truth = GroundTruth { config: cfg.clone(), load_scale: scale, hours };

    let (energy, voltage) = measurements(cfg, &network, &truth, &premises, &mut noise_rng);
    Ok(SynthOutput { topology, network, truth, energy, voltage, das })
}

fn measurements(
    cfg: &SynthConfig,
    net: &NetworkModel,
    truth: &GroundTruth,
    premises: &[Premise],
    rng: &mut ChaCha8Rng,
) -> (Vec<MeterEnergyRecord>, Vec<VoltageRecord>) {
    let e_noise = (cfg.noise_sigma_e_kwh > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma_e_kwh).expect("valid sigma"));
    let v_noise = (cfg.noise_sigma_v_pu > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma_v_pu).expect("valid sigma"));
    let per_hour = (60 / cfg.interval_minutes) as usize;
    let dt = cfg.interval_minutes as f64 / 60.0;
    let pv_at: Vec<Option<usize>> = net.loads.iter().map(|l| net.pvs.iter().position(|p| p.bus == l.bus)).collect();

    let mut energy = Vec::new();
    let push = |energy: &mut Vec<MeterEnergyRecord>, rng: &mut ChaCha8Rng, meter: &str, bus: &str, channel, hour: u32, kw: f64| {
        for k in 0..per_hour {
            let mut e = kw * dt;
            if let Some(n) = &e_noise {
                e = (e + n.sample(rng)).max(0.0);
            }
            energy.push(MeterEnergyRecord {
                meter_id: meter.to_string(),
                bus: bus.to_string(),
                channel,
                interval_start: format_interval_start(&cfg.date, hour, (k as u32) * cfg.interval_minutes),
                interval_minutes: cfg.interval_minutes,
                energy_kwh: e,
            });
        }
    };
    let mut voltage = Vec::new();
    for h in &truth.hours {
        for (l, load) in net.loads.iter().enumerate() {
            let bus = &net.buses[load.bus].id;
            let gross: f64 = h.loads[l].p_kw.iter().sum();
            let pv_kw = pv_at[l].map(|k| h.pvs[k].p_kw.iter().sum::<f64>()).unwrap_or(0.0);
            if let Some(k) = pv_at[l] {
                push(&mut energy, rng, &net.pvs[k].id, bus, Channel::PvProduction, h.hour, pv_kw);
            }
            if load.metered {
                let net_kw = gross - pv_kw;
                push(&mut energy, rng, &load.id, bus, Channel::Delivered, h.hour, net_kw.max(0.0));
                if pv_at[l].is_some() {
                    push(&mut energy, rng, &load.id, bus, Channel::Received, h.hour, (-net_kw).max(0.0));
                }
            }
            if load.has_voltage_meter {
                let phase = premises[l].phase;
                let v = h.voltages.iter().find(|v| v.bus == *bus && v.phase == phase).map(|v| v.v_mag_pu).expect("load bus voltage solved");
                let noise = v_noise.as_ref().map(|n| n.sample(rng)).unwrap_or(0.0);
                voltage.push(VoltageRecord { meter_id: load.id.clone(), bus: bus.clone(), phase, hour: h.hour, v_mag_pu: v + noise });
            }
        }
    }
    (energy, voltage)
}
