//! Hourly model enhancement as an AC optimal power flow in rectangular IV
//! form.
//!
//! Each snapshot minimizes the squared-magnitude mismatch against the AMI
//! voltage readings
//!
//! ```text
//! Σ_{(i,φ) metered} (Vr² + Vi² − |V̂|²)²
//! ```
//!
//! subject to the network equations of [`crate::ivkernel`], bilinear power
//! balance at every bus-phase, constant-capacitance capacitor output, three
//! independent polar sources at the substation, the DAS feeder-head totals
//! and the voltage, angle and power-factor limits built by [`bounds`].

pub mod bounds;
mod problem;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{HourMeasurements, MeasurementSet};
use crate::ivkernel::{Injections, IvLayout, PowerPair};
use crate::netmodel::{pu_to_kw, NetworkModel, Phase};
use crate::nlp::{self, IpmOptions, IpmStatus, WarmStart};
use crate::oracle::{HourProfile, SourceSpec, SubstationRecord};
use crate::sparse::Triplets;

pub use bounds::{angle_bounds_deg, head_voltage_sq_bounds, pf_q_bounds, q_ratio, substation_vmag_bounds, NamedBound};
pub use problem::SnapshotProblem;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("measurements do not match the network: {0}")]
    Input(String),
    #[error("invalid estimator options: {0}")]
    Options(String),
}

/// Solver and modeling options, readable from a JSON options file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    pub tol_kkt: f64,
    pub tol_feas: f64,
    pub max_iter: usize,
    /// Start each hour from the previous hour's solution.
    pub warm_start: bool,
    /// Upper bound of unmetered load active power, kW per load.
    pub p_cap_kw: f64,
    /// When set, override the power-factor limits of every load.
    pub pf_min: Option<f64>,
    pub pf_max: Option<f64>,
    /// Relative band of feeder-head phase b/c magnitude about the phase-a reading.
    pub band_feeder_head: f64,
    /// Relative band of substation source magnitude about the phase-a reading.
    pub band_substation: f64,
    /// Substation angle deviation from the balanced set, degrees.
    pub band_angle_deg: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-6,
            tol_feas: 1e-6,
            max_iter: 200,
            warm_start: false,
            p_cap_kw: 15.0,
            pf_min: None,
            pf_max: None,
            band_feeder_head: 0.20,
            band_substation: 0.25,
            band_angle_deg: 3.0,
        }
    }
}

impl EstimatorOptions {
    pub fn from_json(text: &str) -> Result<Self, EstimateError> {
        let o: Self = serde_json::from_str(text).map_err(|e| EstimateError::Options(e.to_string()))?;
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |m: &str| Err(EstimateError::Options(m.to_string()));
        if !(self.tol_kkt > 0.0 && self.tol_feas > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if !(self.p_cap_kw > 0.0) {
            return bad("p_cap_kw must be positive");
        }
        for pf in [self.pf_min, self.pf_max].into_iter().flatten() {
            if !(pf > 0.0 && pf <= 1.0) {
                return bad("power factors must lie in (0, 1]");
            }
        }
        if let (Some(lo), Some(hi)) = (self.pf_min, self.pf_max) {
            if lo > hi {
                return bad("pf_min exceeds pf_max");
            }
        }
        if !(self.band_feeder_head > 0.0 && self.band_feeder_head < 1.0)
            || !(self.band_substation > 0.0 && self.band_substation < 1.0)
            || !(self.band_angle_deg > 0.0 && self.band_angle_deg < 60.0)
        {
            return bad("bands must be positive (and below 1, or 60 degrees)");
        }
        Ok(())
    }

    fn ipm(&self) -> IpmOptions {
        IpmOptions {
            tol_kkt: self.tol_kkt,
            // barrier forces must stay well below the voltage-fit gradients
            tol_compl: 1e-3 * self.tol_kkt,
            tol_feas: self.tol_feas,
            max_iter: self.max_iter,
            ..IpmOptions::default()
        }
    }
}

/// Result of one hourly estimate. Powers are per unit unless the field name
/// carries a unit.
#[derive(Debug, Clone)]
pub struct SnapshotSolution {
    pub hour: u32,
    pub status: IpmStatus,
    /// IV state in [`IvLayout`] order.
    pub iv: Vec<f64>,
    /// Estimated (unmetered) or measured (metered) load P, estimated load Q,
    /// and the PV production used.
    pub injections: Injections,
    /// Per capacitor, per phase reactive output.
    pub capacitor_q: Vec<Vec<f64>>,
    /// Per substation phase: magnitude, angle and source output.
    pub substation: Vec<SubstationRecord>,
    pub source: SourceSpec,
    pub objective: f64,
    pub kkt_residual: f64,
    pub constraint_residual_inf: f64,
    /// Feeder-head total mismatch (computed − measured), per unit.
    pub head_residual: PowerPair,
    pub iterations: usize,
    pub worst_constraint: Option<String>,
    x: Vec<f64>,
    warm: WarmStart,
}

impl SnapshotSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == IpmStatus::Optimal
    }

    /// Voltage magnitude at a bus-phase slot.
    pub fn v_mag(&self, layout: &IvLayout, bp: usize) -> f64 {
        let (re, im) = layout.voltage(&self.iv, bp);
        re.hypot(im)
    }

    /// Profile row block consumed by the power flow.
    pub fn profile(&self) -> HourProfile {
        HourProfile { hour: self.hour, injections: self.injections.clone(), src_vmag: self.source.v_mag }
    }
}

/// Per-network estimator state: the IV layout and the constant Jacobian of
/// the network rows, shared by every hour.
#[derive(Debug, Clone)]
pub struct Estimator<'a> {
    net: &'a NetworkModel,
    layout: IvLayout,
    linear: Triplets,
}

impl<'a> Estimator<'a> {
    pub fn new(net: &'a NetworkModel) -> Self {
        let layout = IvLayout::new(net);
        let mut linear = Triplets::default();
        crate::ivkernel::linear_jacobian(net, &layout, 0, &mut linear);
        Self { net, layout, linear }
    }

    pub fn layout(&self) -> &IvLayout {
        &self.layout
    }

    pub fn network(&self) -> &NetworkModel {
        self.net
    }

    /// Binds one hour of measurements: variables, bounds and initial point.
    pub fn problem(&self, meas: &HourMeasurements, opts: &EstimatorOptions) -> Result<SnapshotProblem<'_>, EstimateError> {
        SnapshotProblem::new(self.net, &self.layout, &self.linear, meas, opts)
    }

    pub fn solve_snapshot(&self, prob: &SnapshotProblem<'_>, opts: &EstimatorOptions) -> SnapshotSolution {
        self.run(prob, opts, None)
    }

    fn run(&self, prob: &SnapshotProblem<'_>, opts: &EstimatorOptions, warm: Option<&WarmStart>) -> SnapshotSolution {
        let res = nlp::solve(prob, &opts.ipm(), warm);
        let worst = res.worst_constraint.map(|r| nlp::NlpProblem::constraint_name(prob, r));
        let warm_next = res.warm_start();
        prob.solution(res.x, res.status, res.objective, res.dual_inf, res.primal_inf, res.iterations, worst, warm_next)
    }

    /// Solves every hour of a measurement set. With `warm_start` the hours
    /// run in order, each starting from the previous result when the
    /// problem shapes agree; otherwise they are independent.
    pub fn solve_day(&self, meas: &MeasurementSet, opts: &EstimatorOptions) -> DayResult {
        let run_cold = |h: &HourMeasurements| -> Result<SnapshotSolution, EstimateError> {
            let p = self.problem(h, opts)?;
            Ok(self.run(&p, opts, None))
        };
        let results: Vec<Result<SnapshotSolution, EstimateError>> = if opts.warm_start {
            let mut out: Vec<Result<SnapshotSolution, EstimateError>> = Vec::with_capacity(meas.hours.len());
            for h in &meas.hours {
                let prev = out.iter().rev().find_map(|r| r.as_ref().ok().filter(|s| s.is_optimal()));
                let r = match prev {
                    Some(prev) => self.problem(h, opts).map(|p| {
                        if p.accepts_start(&prev.x, &prev.warm) {
                            let p = p.with_start(prev.x.clone());
                            let mut ws = prev.warm.clone();
                            ws.mu = 1e-4;
                            self.run(&p, opts, Some(&ws))
                        } else {
                            self.run(&p, opts, None)
                        }
                    }),
                    None => run_cold(h),
                };
                out.push(r);
            }
            out
        } else {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                meas.hours.par_iter().map(run_cold).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                meas.hours.iter().map(run_cold).collect()
            }
        };
        DayResult { hours: meas.hours.iter().map(|h| h.hour).zip(results).collect() }
    }
}

/// Per-hour outcomes of [`Estimator::solve_day`].
#[derive(Debug)]
pub struct DayResult {
    pub hours: Vec<(u32, Result<SnapshotSolution, EstimateError>)>,
}

impl DayResult {
    /// Solutions with an optimal status, in hour order.
    pub fn optimal(&self) -> Vec<&SnapshotSolution> {
        self.hours.iter().filter_map(|(_, r)| r.as_ref().ok()).filter(|s| s.is_optimal()).collect()
    }

    /// Hours without an optimal solution, with a reason.
    pub fn failures(&self) -> BTreeMap<u32, String> {
        let mut out = BTreeMap::new();
        for (h, r) in &self.hours {
            match r {
                Err(e) => {
                    out.insert(*h, e.to_string());
                }
                Ok(s) if !s.is_optimal() => {
                    let worst = s.worst_constraint.clone().unwrap_or_else(|| "n/a".into());
                    out.insert(*h, format!("{:?} (worst constraint: {worst})", s.status));
                }
                _ => {}
            }
        }
        out
    }

    /// `profiles.csv` for the optimal hours.
    pub fn profiles_csv(&self, net: &NetworkModel) -> String {
        let profiles: Vec<HourProfile> = self.optimal().iter().map(|s| s.profile()).collect();
        crate::oracle::write_profiles(net, &profiles)
    }

    /// `substation.csv` for the optimal hours.
    pub fn substation_csv(&self) -> String {
        let rows: Vec<SubstationRecord> = self.optimal().iter().flat_map(|s| s.substation.iter().cloned()).collect();
        crate::oracle::write_substation(&rows)
    }
}

pub(crate) fn substation_record(hour: u32, phase: Phase, v: (f64, f64), pq: PowerPair, base_mva: f64) -> SubstationRecord {
    SubstationRecord {
        hour,
        phase,
        v_mag_pu: v.0.hypot(v.1),
        v_ang_deg: v.1.atan2(v.0).to_degrees(),
        p_kw: pu_to_kw(pq.p, base_mva),
        q_kvar: pu_to_kw(pq.q, base_mva),
    }
}
