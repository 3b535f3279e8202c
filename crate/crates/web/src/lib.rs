//! Browser front end for the feedertune pipeline.
//!
//! [`Session`] holds one synthetic feeder with its measurement files and
//! runs the estimator and the power-flow check on demand. The
//! `wasm-bindgen` wrapper [`Demo`] exposes it to JavaScript with JSON
//! strings as the exchange format; everything else is plain Rust so the
//! crate builds and tests natively.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;
use wasm_bindgen::prelude::*;

use feedertune::estimator::{Estimator, EstimatorOptions};
use feedertune::ingest::{build_measurement_set, IngestError, MeasurementSet};
use feedertune::netmodel::{pu_to_kw, Phase};
use feedertune::oracle::{PfOptions, PowerFlow};
use feedertune::report::{build_report, compare_states, CategoryRow, HourTotals, ReportError, ReportInputs, StateSummary};
use feedertune::synth::{generate, SynthConfig, SynthError, SynthOutput};

/// Largest feeder the page accepts; the browser build is single threaded.
pub const MAX_PRIMARY_BUSES: usize = 200;

const PF: PfOptions = PfOptions { tol: 1e-10, max_iter: 30 };

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("invalid options: {0}")]
    Options(#[from] serde_json::Error),
    #[error("at most {MAX_PRIMARY_BUSES} primary buses in the browser, got {0}")]
    TooLarge(usize),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("hour {0} is outside the day")]
    NoHour(u32),
    #[error("hour {hour}: {reason}")]
    Solve { hour: u32, reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct HeadPoint {
    pub hour: u32,
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Overview {
    pub buses: usize,
    pub loads: usize,
    pub metered_loads: usize,
    pub voltage_meters: usize,
    pub pv_units: usize,
    pub das: Vec<HeadPoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileSample {
    pub bus: String,
    pub phase: Phase,
    pub distance: f64,
    pub estimate_pu: f64,
    pub power_flow_pu: f64,
    pub truth_pu: Option<f64>,
    pub measured_pu: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnmeteredLoad {
    pub load: String,
    pub estimate_kw: f64,
    pub truth_kw: f64,
    pub estimate_kvar: f64,
    pub truth_kvar: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HourView {
    pub hour: u32,
    pub status: String,
    pub iterations: usize,
    pub head_residual_kw: f64,
    pub head_residual_kvar: f64,
    pub categories: Vec<CategoryRow>,
    pub max_abs_v_error_pu: f64,
    pub profile: Vec<ProfileSample>,
    pub unmetered: Vec<UnmeteredLoad>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DayView {
    pub failed_hours: BTreeMap<u32, String>,
    pub hourly: Vec<HourTotals>,
    pub estimated_head: Vec<HeadPoint>,
    pub das: Vec<HeadPoint>,
    pub max_abs_v_error_pu: f64,
    pub median_meter_rms_percent: Option<f64>,
    pub summary: String,
}

/// One synthetic feeder and its ingested measurements.
pub struct Session {
    out: SynthOutput,
    meas: MeasurementSet,
    distance: Vec<f64>,
}

impl Session {
    /// Builds a feeder from synthesis options given as JSON (`{}` for the
    /// defaults of the demo).
    pub fn new(options_json: &str) -> Result<Self, DemoError> {
        let mut cfg: SynthConfig = serde_json::from_str(options_json)?;
        if options_json.trim() == "{}" {
            cfg = SynthConfig { n_primary_buses: 80, n_transformers: 15, ..cfg };
        }
        if cfg.n_primary_buses > MAX_PRIMARY_BUSES {
            return Err(DemoError::TooLarge(cfg.n_primary_buses));
        }
        let out = generate(&cfg)?;
        let hours: Vec<u32> = (0..24).collect();
        let meas = build_measurement_set(&out.network, &out.energy, &out.voltage, &out.das, &hours)?;
        let distance = out.network.electrical_distance();
        Ok(Self { out, meas, distance })
    }

    pub fn overview(&self) -> Overview {
        let net = &self.out.network;
        Overview {
            buses: net.buses.len(),
            loads: net.loads.len(),
            metered_loads: net.metered_loads().count(),
            voltage_meters: net.loads.iter().filter(|l| l.has_voltage_meter).count(),
            pv_units: net.pvs.len(),
            das: self.das(),
        }
    }

    fn das(&self) -> Vec<HeadPoint> {
        self.out.das.iter().map(|d| HeadPoint { hour: d.hour, p_kw: d.p_total_kw, q_kvar: d.q_total_kvar }).collect()
    }

    /// Estimates one hour, re-solves it with the power flow and lines the
    /// result up against the measurements and the synthetic truth.
    pub fn estimate_hour(&self, hour: u32) -> Result<HourView, DemoError> {
        let net = &self.out.network;
        let meas = self.meas.hour(hour).ok_or(DemoError::NoHour(hour))?;
        let truth = self.out.truth.hour(hour).ok_or(DemoError::NoHour(hour))?;
        let est = Estimator::new(net);
        let opts = EstimatorOptions::default();
        let prob = est.problem(meas, &opts).map_err(|e| DemoError::Solve { hour, reason: e.to_string() })?;
        let sol = est.solve_snapshot(&prob, &opts);
        if !sol.is_optimal() {
            return Err(DemoError::Solve {
                hour,
                reason: format!("{:?} ({})", sol.status, sol.worst_constraint.clone().unwrap_or_default()),
            });
        }
        let pf = PowerFlow::new(net);
        let re = pf.solve(&sol.injections, &sol.source, &PF).map_err(|e| DemoError::Solve { hour, reason: e.to_string() })?;
        let e_state = StateSummary::from_estimate(net, est.layout(), &sol);
        let o_state = StateSummary::from_power_flow(net, pf.layout(), hour, &re, &sol.injections);
        let cmp = compare_states(net, &e_state, &o_state)?;

        let measured: BTreeMap<(usize, Phase), f64> = meas.voltages.iter().map(|v| ((v.bus, v.phase), v.v_mag_pu)).collect();
        let true_v: BTreeMap<(&str, Phase), f64> = truth.voltages.iter().map(|v| ((v.bus.as_str(), v.phase), v.v_mag_pu)).collect();
        let mut profile: Vec<ProfileSample> = e_state
            .voltages
            .iter()
            .zip(&o_state.voltages)
            .map(|(e, o)| {
                let bus = net.buses[e.bus].id.clone();
                ProfileSample {
                    truth_pu: true_v.get(&(bus.as_str(), e.phase)).copied(),
                    measured_pu: measured.get(&(e.bus, e.phase)).copied(),
                    bus,
                    phase: e.phase,
                    distance: self.distance[e.bus],
                    estimate_pu: e.v_mag_pu,
                    power_flow_pu: o.v_mag_pu,
                }
            })
            .collect();
        profile.sort_by(|a, b| a.distance.total_cmp(&b.distance));

        let kw = |pu: f64| pu_to_kw(pu, net.base_mva);
        let unmetered = meas
            .unmetered()
            .map(|l| UnmeteredLoad {
                load: net.loads[l].id.clone(),
                estimate_kw: sol.injections.loads[l].iter().map(|pq| kw(pq.p)).sum(),
                truth_kw: truth.loads[l].p_kw.iter().sum(),
                estimate_kvar: sol.injections.loads[l].iter().map(|pq| kw(pq.q)).sum(),
                truth_kvar: truth.loads[l].q_kvar.iter().sum(),
            })
            .collect();
        Ok(HourView {
            hour,
            status: format!("{:?}", sol.status),
            iterations: sol.iterations,
            head_residual_kw: kw(sol.head_residual.p),
            head_residual_kvar: kw(sol.head_residual.q),
            categories: cmp.category_table,
            max_abs_v_error_pu: cmp.max_abs_v_error_pu,
            profile,
            unmetered,
        })
    }

    /// Runs the whole day and builds the validation report.
    pub fn solve_day(&self) -> Result<DayView, DemoError> {
        let net = &self.out.network;
        let est = Estimator::new(net);
        let day = est.solve_day(&self.meas, &EstimatorOptions::default());
        let optimal = day.optimal();
        let pf = PowerFlow::new(net);
        let mut estimates = Vec::with_capacity(optimal.len());
        let mut oracle = Vec::with_capacity(optimal.len());
        let mut profiles = Vec::with_capacity(optimal.len());
        for s in &optimal {
            let re = pf.solve(&s.injections, &s.source, &PF).map_err(|e| DemoError::Solve { hour: s.hour, reason: e.to_string() })?;
            estimates.push(StateSummary::from_estimate(net, est.layout(), s));
            oracle.push(StateSummary::from_power_flow(net, pf.layout(), s.hour, &re, &s.injections));
            profiles.push(s.profile());
        }
        let report = build_report(ReportInputs {
            net,
            measurements: &self.meas.hours,
            voltage_readings: &self.out.voltage,
            profiles: &profiles,
            estimates: &estimates,
            oracle: &oracle,
            failed_hours: day.failures(),
        })?;
        let estimated_head = estimates
            .iter()
            .map(|s| {
                let h = s.head_power_kw();
                HeadPoint { hour: s.hour, p_kw: h.p, q_kvar: h.q }
            })
            .collect();
        Ok(DayView {
            median_meter_rms_percent: report.median_meter_rms(),
            summary: report.summary(),
            failed_hours: report.failed_hours,
            hourly: report.characteristics.hourly,
            estimated_head,
            das: self.das(),
            max_abs_v_error_pu: report.max_abs_v_error_pu,
        })
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("view types serialize")
}

/// JavaScript handle on a [`Session`]. Methods return JSON text.
#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(options_json: &str) -> Result<Demo, JsError> {
        Session::new(options_json).map(|inner| Demo { inner }).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn overview(&self) -> String {
        to_json(&self.inner.overview())
    }

    #[wasm_bindgen(js_name = estimateHour)]
    pub fn estimate_hour(&self, hour: u32) -> Result<String, JsError> {
        self.inner.estimate_hour(hour).map(|v| to_json(&v)).map_err(|e| JsError::new(&e.to_string()))
    }

    #[wasm_bindgen(js_name = solveDay)]
    pub fn solve_day(&self) -> Result<String, JsError> {
        self.inner.solve_day().map(|v| to_json(&v)).map_err(|e| JsError::new(&e.to_string()))
    }
}
