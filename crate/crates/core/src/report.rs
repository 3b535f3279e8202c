//! Validation artifacts: element-category power reconciliation between the
//! estimate and the power-flow re-solve, per-bus voltage differences, daily
//! RMS metrics against the measurements and feeder characteristics.
//!
//! Percent errors on power categories divide by the power-flow value; voltage
//! and feeder-head RMS errors divide by the measured value. Entries whose
//! denominator is zero are reported as absolute errors with a flag.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::SnapshotSolution;
use crate::ingest::{HourMeasurements, VoltageRecord};
use crate::ivkernel::{element_powers, Category, CategoryTotals, Injections, IvLayout, PowerPair};
use crate::netmodel::{pu_to_kw, NetworkModel, Phase};
use crate::oracle::{HourProfile, PowerFlowSolution};

pub const DENOMINATOR_NOTE: &str =
    "power-category percent errors use the power-flow value as denominator; voltage and feeder-head RMS errors use the measured value";

/// Denominators below this magnitude switch an entry to absolute mode.
const ZERO_DENOMINATOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("states belong to different hours ({0} vs {1})")]
    HourMismatch(u32, u32),
    #[error("states do not describe the same network: {0}")]
    NetworkMismatch(String),
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("no {what} for hour {hour}")]
    MissingHour { what: &'static str, hour: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    Percent,
    /// The denominator was zero; the value is an absolute error in the
    /// quantity's own unit.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusVoltage {
    pub bus: usize,
    pub phase: Phase,
    pub v_mag_pu: f64,
    pub v_ang_deg: f64,
}

/// What the comparison needs from a solved state: category totals in kW /
/// kvar and every bus-phase voltage. Built from either an estimate or a
/// power-flow solution, and serializable so the CLI can compare files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub hour: u32,
    pub totals_kw: CategoryTotals,
    pub voltages: Vec<BusVoltage>,
}

impl StateSummary {
    pub fn from_iv(net: &NetworkModel, layout: &IvLayout, hour: u32, iv: &[f64], inj: &Injections) -> Self {
        let t = element_powers(net, layout, iv, inj).totals;
        let kw = |pq: PowerPair| PowerPair { p: pu_to_kw(pq.p, net.base_mva), q: pu_to_kw(pq.q, net.base_mva) };
        let totals_kw = CategoryTotals {
            source: kw(t.source),
            lines: kw(t.lines),
            capacitors: kw(t.capacitors),
            loads: kw(t.loads),
            transformers: kw(t.transformers),
            pvs: kw(t.pvs),
        };
        let voltages = (0..layout.n_bus_phases())
            .map(|bp| {
                let (bus, phase) = layout.bus_phase_of(bp);
                let (re, im) = layout.voltage(iv, bp);
                BusVoltage { bus, phase, v_mag_pu: re.hypot(im), v_ang_deg: im.atan2(re).to_degrees() }
            })
            .collect();
        Self { hour, totals_kw, voltages }
    }

    pub fn from_estimate(net: &NetworkModel, layout: &IvLayout, sol: &SnapshotSolution) -> Self {
        Self::from_iv(net, layout, sol.hour, &sol.iv, &sol.injections)
    }

    pub fn from_power_flow(net: &NetworkModel, layout: &IvLayout, hour: u32, sol: &PowerFlowSolution, inj: &Injections) -> Self {
        Self::from_iv(net, layout, hour, &sol.x, inj)
    }

    /// Total active and reactive power entering the feeder from the source.
    pub fn head_power_kw(&self) -> PowerPair {
        PowerPair { p: -self.totals_kw.source.p, q: -self.totals_kw.source.q }
    }

    pub fn v_mag(&self, bus: usize, phase: Phase) -> Option<f64> {
        self.voltages.iter().find(|v| v.bus == bus && v.phase == phase).map(|v| v.v_mag_pu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    P,
    Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: Category,
    pub quantity: Quantity,
    pub estimator_kw: f64,
    pub oracle_kw: f64,
    /// estimator − oracle
    pub difference_kw: f64,
    /// Percent of |oracle|, or the absolute difference when the oracle value is zero.
    pub error: f64,
    pub mode: ErrorMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusVoltageError {
    pub hour: u32,
    pub bus: String,
    pub phase: Phase,
    pub estimator_pu: f64,
    pub oracle_pu: f64,
    /// estimator − oracle
    pub difference_pu: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourComparison {
    pub hour: u32,
    pub category_table: Vec<CategoryRow>,
    pub bus_errors: Vec<BusVoltageError>,
    pub max_abs_v_error_pu: f64,
}

impl HourComparison {
    /// Largest category error in percent mode.
    pub fn max_category_percent(&self) -> f64 {
        self.category_table.iter().filter(|r| r.mode == ErrorMode::Percent).map(|r| r.error.abs()).fold(0.0, f64::max)
    }
}

/// Compares two states of the same network and hour. Swapping the
/// arguments negates every difference column.
pub fn compare_states(net: &NetworkModel, est: &StateSummary, oracle: &StateSummary) -> Result<HourComparison, ReportError> {
    if est.hour != oracle.hour {
        return Err(ReportError::HourMismatch(est.hour, oracle.hour));
    }
    if est.voltages.len() != oracle.voltages.len() {
        return Err(ReportError::NetworkMismatch(format!("{} vs {} bus-phases", est.voltages.len(), oracle.voltages.len())));
    }
    let mut table = Vec::with_capacity(12);
    for c in Category::ALL {
        let (e, o) = (est.totals_kw.get(c), oracle.totals_kw.get(c));
        for (quantity, ev, ov) in [(Quantity::P, e.p, o.p), (Quantity::Q, e.q, o.q)] {
            let (error, mode) = relative(ev, ov);
            table.push(CategoryRow { category: c, quantity, estimator_kw: ev, oracle_kw: ov, difference_kw: ev - ov, error, mode });
        }
    }
    let mut bus_errors = Vec::with_capacity(est.voltages.len());
    let mut worst: f64 = 0.0;
    for (a, b) in est.voltages.iter().zip(&oracle.voltages) {
        if a.bus != b.bus || a.phase != b.phase || a.bus >= net.buses.len() {
            return Err(ReportError::NetworkMismatch(format!("bus-phase order differs at bus {}", a.bus)));
        }
        let d = a.v_mag_pu - b.v_mag_pu;
        worst = worst.max(d.abs());
        bus_errors.push(BusVoltageError {
            hour: est.hour,
            bus: net.buses[a.bus].id.clone(),
            phase: a.phase,
            estimator_pu: a.v_mag_pu,
            oracle_pu: b.v_mag_pu,
            difference_pu: d,
            percent: if b.v_mag_pu.abs() > ZERO_DENOMINATOR { 100.0 * d / b.v_mag_pu } else { d },
        });
    }
    Ok(HourComparison { hour: est.hour, category_table: table, bus_errors, max_abs_v_error_pu: worst })
}

fn relative(value: f64, reference: f64) -> (f64, ErrorMode) {
    if reference.abs() > ZERO_DENOMINATOR {
        (100.0 * (value - reference) / reference.abs(), ErrorMode::Percent)
    } else {
        (value - reference, ErrorMode::Absolute)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsValue {
    pub value: f64,
    pub mode: ErrorMode,
}

/// Daily RMS error of a modeled series against a measured one,
/// `sqrt(mean(((m − y)/y)²))·100`. If any measured sample is zero the whole
/// series falls back to the absolute RMS `sqrt(mean((m − y)²))`.
pub fn rms_daily(model: &[f64], measured: &[f64]) -> Result<RmsValue, ReportError> {
    if model.len() != measured.len() {
        return Err(ReportError::LengthMismatch(model.len(), measured.len()));
    }
    if model.is_empty() {
        return Err(ReportError::Empty);
    }
    let n = model.len() as f64;
    if measured.iter().any(|y| y.abs() <= ZERO_DENOMINATOR) {
        let s: f64 = model.iter().zip(measured).map(|(m, y)| (m - y).powi(2)).sum();
        return Ok(RmsValue { value: (s / n).sqrt(), mode: ErrorMode::Absolute });
    }
    let s: f64 = model.iter().zip(measured).map(|(m, y)| ((m - y) / y).powi(2)).sum();
    Ok(RmsValue { value: 100.0 * (s / n).sqrt(), mode: ErrorMode::Percent })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterRms {
    pub meter_id: String,
    pub bus: String,
    pub phase: Phase,
    pub hours: usize,
    pub rms: RmsValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeederHeadRms {
    pub p: RmsValue,
    pub q: RmsValue,
}

/// Per-meter voltage RMS of modeled states (typically the power-flow
/// re-solve) against the AMI readings. Meters are keyed by meter id; the
/// hours used are those present in both the readings and the states.
pub fn meter_rms(net: &NetworkModel, states: &[StateSummary], readings: &[VoltageRecord]) -> Vec<MeterRms> {
    let by_hour: BTreeMap<u32, &StateSummary> = states.iter().map(|s| (s.hour, s)).collect();
    type Series = (Vec<f64>, Vec<f64>);
    let mut series: BTreeMap<(&str, &str, Phase), Series> = BTreeMap::new();
    for r in readings {
        let (Some(state), Some(bus)) = (by_hour.get(&r.hour), net.bus_index(&r.bus)) else {
            continue;
        };
        let Some(v) = state.v_mag(bus, r.phase) else {
            continue;
        };
        let e = series.entry((r.meter_id.as_str(), r.bus.as_str(), r.phase)).or_default();
        e.0.push(v);
        e.1.push(r.v_mag_pu);
    }
    series
        .into_iter()
        .filter_map(|((meter, bus, phase), (m, y))| {
            rms_daily(&m, &y).ok().map(|rms| MeterRms { meter_id: meter.to_string(), bus: bus.to_string(), phase, hours: m.len(), rms })
        })
        .collect()
}

/// Estimated feeder-head totals against the DAS series.
pub fn feeder_head_rms(estimates: &[StateSummary], meas: &[HourMeasurements]) -> Result<FeederHeadRms, ReportError> {
    let mut m = (Vec::new(), Vec::new());
    let mut y = (Vec::new(), Vec::new());
    for s in estimates {
        let h = meas.iter().find(|h| h.hour == s.hour).ok_or(ReportError::MissingHour { what: "DAS record", hour: s.hour })?;
        let head = s.head_power_kw();
        m.0.push(head.p);
        m.1.push(head.q);
        y.0.push(h.feeder_head.p_total_kw);
        y.1.push(h.feeder_head.q_total_kvar);
    }
    Ok(FeederHeadRms { p: rms_daily(&m.0, &y.0)?, q: rms_daily(&m.1, &y.1)? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourTotals {
    pub hour: u32,
    pub gross_load_kw: f64,
    pub pv_kw: f64,
    pub losses_kw: f64,
    /// gross − PV + losses
    pub net_load_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub hour: u32,
    pub bus: String,
    pub phase: Phase,
    /// Shortest-path series resistance from the substation, per unit.
    pub distance: f64,
    pub v_mag_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPowerFactor {
    pub load: String,
    pub phase: Phase,
    /// Daily energy-weighted power factor, `ΣP / sqrt((ΣP)² + (ΣQ)²)`.
    pub power_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederCharacteristics {
    pub hourly: Vec<HourTotals>,
    pub voltage_profile: Vec<ProfilePoint>,
    pub load_power_factors: Vec<LoadPowerFactor>,
}

impl FeederCharacteristics {
    /// Least-squares slope of |V| against distance for one hour.
    pub fn voltage_slope(&self, hour: u32) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.voltage_profile.iter().filter(|p| p.hour == hour).map(|p| (p.distance, p.v_mag_pu)).collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,hour,element,phase,distance,value\n");
        for h in &self.hourly {
            for (name, v) in
                [("gross_load_kw", h.gross_load_kw), ("pv_kw", h.pv_kw), ("losses_kw", h.losses_kw), ("net_load_kw", h.net_load_kw)]
            {
                let _ = writeln!(out, "{name},{},feeder,,,{v}", h.hour);
            }
        }
        for p in &self.voltage_profile {
            let _ = writeln!(out, "v_mag_pu,{},{},{},{},{}", p.hour, p.bus, p.phase, p.distance, p.v_mag_pu);
        }
        for l in &self.load_power_factors {
            let _ = writeln!(out, "power_factor,,{},{},,{}", l.load, l.phase, l.power_factor);
        }
        out
    }
}

/// Gross and net load per hour, the voltage profile along the feeder and
/// per-load power factors, from the estimated profiles and their states.
pub fn feeder_characteristics(
    net: &NetworkModel,
    profiles: &[HourProfile],
    states: &[StateSummary],
) -> Result<FeederCharacteristics, ReportError> {
    let kw = |pu: f64| pu_to_kw(pu, net.base_mva);
    let distance = net.electrical_distance();
    let mut hourly = Vec::with_capacity(profiles.len());
    let mut voltage_profile = Vec::new();
    let mut energy: Vec<Vec<PowerPair>> = net.loads.iter().map(|l| vec![PowerPair::default(); l.phases.len()]).collect();
    for prof in profiles {
        let state = states.iter().find(|s| s.hour == prof.hour).ok_or(ReportError::MissingHour { what: "state", hour: prof.hour })?;
        let gross: f64 = prof.injections.loads.iter().flatten().map(|pq| kw(pq.p)).sum();
        let pv: f64 = prof.injections.pvs.iter().flatten().map(|&p| kw(p)).sum();
        let losses = state.totals_kw.lines.p + state.totals_kw.transformers.p;
        hourly.push(HourTotals { hour: prof.hour, gross_load_kw: gross, pv_kw: pv, losses_kw: losses, net_load_kw: gross - pv + losses });
        let mut pts: Vec<ProfilePoint> = state
            .voltages
            .iter()
            .map(|v| ProfilePoint {
                hour: prof.hour,
                bus: net.buses[v.bus].id.clone(),
                phase: v.phase,
                distance: distance[v.bus],
                v_mag_pu: v.v_mag_pu,
            })
            .collect();
        pts.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.bus.cmp(&b.bus)).then(a.phase.cmp(&b.phase)));
        voltage_profile.extend(pts);
        for (acc, l) in energy.iter_mut().zip(&prof.injections.loads) {
            for (a, pq) in acc.iter_mut().zip(l) {
                *a += *pq;
            }
        }
    }
    let load_power_factors = net
        .loads
        .iter()
        .zip(&energy)
        .flat_map(|(l, e)| {
            l.phases.iter().zip(e).map(move |(phase, pq)| LoadPowerFactor {
                load: l.id.clone(),
                phase,
                power_factor: if pq.p.hypot(pq.q) > 0.0 { pq.p / pq.p.hypot(pq.q) } else { 1.0 },
            })
        })
        .collect();
    Ok(FeederCharacteristics { hourly, voltage_profile, load_power_factors })
}

/// The full report written by `feedertune report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub note: String,
    /// Hour of the headline category table (largest head active power).
    pub table_hour: u32,
    pub category_table: Vec<CategoryRow>,
    pub hours: Vec<HourComparison>,
    pub max_abs_v_error_pu: f64,
    pub rms_per_meter: Vec<MeterRms>,
    pub feeder_head_rms: FeederHeadRms,
    pub characteristics: FeederCharacteristics,
    /// Hours without an estimate, with the reason.
    pub failed_hours: BTreeMap<u32, String>,
}

/// Inputs of [`build_report`]; all per-hour slices are matched by hour.
pub struct ReportInputs<'a> {
    pub net: &'a NetworkModel,
    pub measurements: &'a [HourMeasurements],
    pub voltage_readings: &'a [VoltageRecord],
    pub profiles: &'a [HourProfile],
    pub estimates: &'a [StateSummary],
    pub oracle: &'a [StateSummary],
    pub failed_hours: BTreeMap<u32, String>,
}

pub fn build_report(inp: ReportInputs<'_>) -> Result<ComparisonReport, ReportError> {
    let mut hours = Vec::with_capacity(inp.estimates.len());
    for e in inp.estimates {
        let o = inp.oracle.iter().find(|o| o.hour == e.hour).ok_or(ReportError::MissingHour { what: "power-flow state", hour: e.hour })?;
        hours.push(compare_states(inp.net, e, o)?);
    }
    let table_hour = inp
        .estimates
        .iter()
        .max_by(|a, b| a.head_power_kw().p.total_cmp(&b.head_power_kw().p).then(b.hour.cmp(&a.hour)))
        .map(|s| s.hour)
        .ok_or(ReportError::Empty)?;
    let category_table = hours.iter().find(|h| h.hour == table_hour).map(|h| h.category_table.clone()).unwrap_or_default();
    let max_abs_v_error_pu = hours.iter().map(|h| h.max_abs_v_error_pu).fold(0.0, f64::max);
    Ok(ComparisonReport {
        note: DENOMINATOR_NOTE.to_string(),
        table_hour,
        category_table,
        max_abs_v_error_pu,
        rms_per_meter: meter_rms(inp.net, inp.oracle, inp.voltage_readings),
        feeder_head_rms: feeder_head_rms(inp.estimates, inp.measurements)?,
        characteristics: feeder_characteristics(inp.net, inp.profiles, inp.estimates)?,
        failed_hours: inp.failed_hours,
        hours,
    })
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn category_table_csv(&self) -> String {
        category_csv(&self.category_table)
    }

    /// Per-meter daily voltage RMS.
    pub fn v_rms_csv(&self) -> String {
        let mut out = String::from("meter_id,bus,phase,hours,rms,mode\n");
        for m in &self.rms_per_meter {
            let _ = writeln!(out, "{},{},{},{},{},{}", m.meter_id, m.bus, m.phase, m.hours, m.rms.value, mode_str(m.rms.mode));
        }
        out
    }

    pub fn median_meter_rms(&self) -> Option<f64> {
        median(self.rms_per_meter.iter().filter(|m| m.rms.mode == ErrorMode::Percent).map(|m| m.rms.value).collect())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "feeder model validation report");
        let _ = writeln!(s, "({})", self.note);
        let _ = writeln!(s);
        let _ = writeln!(s, "category powers at hour {} (kW / kvar)", self.table_hour);
        let _ = writeln!(s, "{:<14}{:>3}{:>14}{:>14}{:>12}", "category", "", "estimate", "power flow", "error");
        for r in &self.category_table {
            let err = match r.mode {
                ErrorMode::Percent => format!("{:.2e}%", r.error),
                ErrorMode::Absolute => format!("{:.3e} abs", r.error),
            };
            let _ = writeln!(
                s,
                "{:<14}{:>3}{:>14.3}{:>14.3}{:>12}",
                r.category.name(),
                format!("{:?}", r.quantity),
                r.estimator_kw,
                r.oracle_kw,
                err
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "hours compared: {}", self.hours.len());
        let _ = writeln!(s, "max |V| difference estimate vs power flow: {:.3e} pu", self.max_abs_v_error_pu);
        let fmt = |r: &RmsValue| match r.mode {
            ErrorMode::Percent => format!("{:.4}%", r.value),
            ErrorMode::Absolute => format!("{:.4} (absolute)", r.value),
        };
        let _ = writeln!(s, "feeder-head RMS vs DAS: P {}, Q {}", fmt(&self.feeder_head_rms.p), fmt(&self.feeder_head_rms.q));
        let pct: Vec<f64> = self.rms_per_meter.iter().filter(|m| m.rms.mode == ErrorMode::Percent).map(|m| m.rms.value).collect();
        if let Some(med) = median(pct.clone()) {
            let mean = pct.iter().sum::<f64>() / pct.len() as f64;
            let max = pct.iter().copied().fold(0.0, f64::max);
            let _ = writeln!(s, "voltage meters: {} (RMS mean {:.4}%, median {:.4}%, max {:.4}%)", pct.len(), mean, med, max);
        }
        if !self.failed_hours.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "hours without an estimate:");
            for (h, why) in &self.failed_hours {
                let _ = writeln!(s, "  {h:>2}: {why}");
            }
        }
        s
    }
}

pub fn category_csv(rows: &[CategoryRow]) -> String {
    let mut out = String::from("category,quantity,estimator_kw,oracle_kw,difference_kw,error,mode\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:?},{},{},{},{},{}",
            r.category.name(),
            r.quantity,
            r.estimator_kw,
            r.oracle_kw,
            r.difference_kw,
            r.error,
            mode_str(r.mode)
        );
    }
    out
}

pub fn bus_errors_csv(hours: &[HourComparison]) -> String {
    let mut out = String::from("hour,bus,phase,estimator_pu,oracle_pu,difference_pu,percent\n");
    for h in hours {
        for e in &h.bus_errors {
            let _ = writeln!(out, "{},{},{},{},{},{},{}", e.hour, e.bus, e.phase, e.estimator_pu, e.oracle_pu, e.difference_pu, e.percent);
        }
    }
    out
}

fn mode_str(m: ErrorMode) -> &'static str {
    match m {
        ErrorMode::Percent => "percent",
        ErrorMode::Absolute => "absolute",
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
