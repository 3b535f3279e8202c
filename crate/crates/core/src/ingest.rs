//! AMI and DAS ingestion: interval energy to hourly power, gross load, and
//! per-hour binding of measurements to network elements.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netmodel::{NetworkModel, Phase};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: {source}")]
    Csv {
        file: &'static str,
        #[source]
        source: csv::Error,
    },
    #[error("{file}, record {record}: {reason}")]
    Invalid { file: &'static str, record: usize, reason: String },
    #[error("meter `{meter}` references unknown element or bus `{bus}`")]
    UnknownMeter { meter: String, bus: String },
    #[error("duplicate {what} for meter `{meter}` at hour {hour}")]
    Duplicate { what: &'static str, meter: String, hour: u32 },
    #[error("meter `{meter}` mixes {a}- and {b}-minute intervals in hour {hour}")]
    MixedIntervals { meter: String, hour: u32, a: u32, b: u32 },
    #[error("no feeder-head record for hour {0}")]
    MissingFeederHead(u32),
    #[error("duplicate feeder-head record for hour {0}")]
    DuplicateFeederHead(u32),
    #[error("energy records span more than one day ({0} and {1})")]
    MultipleDays(String, String),
    #[error("non-finite input to gross load")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Delivered,
    Received,
    PvProduction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterEnergyRecord {
    pub meter_id: String,
    pub bus: String,
    pub channel: Channel,
    /// ISO-8601 local timestamp without zone, e.g. `2024-07-15T13:15:00`.
    pub interval_start: String,
    pub interval_minutes: u32,
    pub energy_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageRecord {
    pub meter_id: String,
    pub bus: String,
    pub phase: Phase,
    pub hour: u32,
    pub v_mag_pu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeederHeadRecord {
    pub hour: u32,
    pub p_total_kw: f64,
    pub q_total_kvar: f64,
    pub v_mag_phase_a_pu: f64,
}

const TIMESTAMP: &str = "%Y-%m-%dT%H:%M:%S";

fn parse_start(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
}

/// Formats a study-day timestamp the way [`parse_energy_csv`] expects it.
pub fn format_interval_start(date: &str, hour: u32, minute: u32) -> String {
    format!("{date}T{hour:02}:{minute:02}:00")
}

fn read_csv<T: for<'de> Deserialize<'de>>(file: &'static str, text: &str) -> Result<Vec<T>, IngestError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|source| IngestError::Csv { file, source })
}

fn write_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

pub fn parse_energy_csv(text: &str) -> Result<Vec<MeterEnergyRecord>, IngestError> {
    let rows: Vec<MeterEnergyRecord> = read_csv("ami_energy.csv", text)?;
    for (k, r) in rows.iter().enumerate() {
        let invalid = |reason: String| IngestError::Invalid { file: "ami_energy.csv", record: k + 1, reason };
        if !(r.energy_kwh >= 0.0) || !r.energy_kwh.is_finite() {
            return Err(invalid(format!("energy_kwh must be a finite value >= 0, got {}", r.energy_kwh)));
        }
        if r.interval_minutes != 15 && r.interval_minutes != 60 {
            return Err(invalid(format!("interval_minutes must be 15 or 60, got {}", r.interval_minutes)));
        }
        let Some(t) = parse_start(&r.interval_start) else {
            return Err(invalid(format!("unreadable timestamp `{}`", r.interval_start)));
        };
        if t.minute() % r.interval_minutes != 0 || t.second() != 0 {
            return Err(invalid(format!("interval start `{}` is not aligned", r.interval_start)));
        }
    }
    Ok(rows)
}

pub fn parse_voltage_csv(text: &str) -> Result<Vec<VoltageRecord>, IngestError> {
    let rows: Vec<VoltageRecord> = read_csv("ami_voltage.csv", text)?;
    for (k, r) in rows.iter().enumerate() {
        if r.hour > 23 || !r.v_mag_pu.is_finite() || r.v_mag_pu <= 0.0 {
            return Err(IngestError::Invalid {
                file: "ami_voltage.csv",
                record: k + 1,
                reason: format!("hour {} / v_mag_pu {} out of range", r.hour, r.v_mag_pu),
            });
        }
    }
    Ok(rows)
}

pub fn parse_das_csv(text: &str) -> Result<Vec<FeederHeadRecord>, IngestError> {
    let rows: Vec<FeederHeadRecord> = read_csv("das.csv", text)?;
    for (k, r) in rows.iter().enumerate() {
        let finite = r.p_total_kw.is_finite() && r.q_total_kvar.is_finite() && r.v_mag_phase_a_pu.is_finite();
        if r.hour > 23 || !finite || r.v_mag_phase_a_pu <= 0.0 {
            return Err(IngestError::Invalid {
                file: "das.csv",
                record: k + 1,
                reason: "hour must be 0-23 and values finite with a positive voltage".into(),
            });
        }
    }
    Ok(rows)
}

pub fn write_energy_csv(rows: &[MeterEnergyRecord]) -> String {
    write_csv(rows)
}

pub fn write_voltage_csv(rows: &[VoltageRecord]) -> String {
    write_csv(rows)
}

pub fn write_das_csv(rows: &[FeederHeadRecord]) -> String {
    write_csv(rows)
}

/// Average power of one meter channel over one hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HourlyPower {
    Kw(f64),
    /// Some intervals of the hour are absent.
    Missing,
}

/// Hourly kW per (meter, channel) from the interval records that start in `hour`.
pub fn derive_hourly_power(records: &[MeterEnergyRecord], hour: u32) -> Result<BTreeMap<(String, Channel), HourlyPower>, IngestError> {
    struct Acc {
        minutes: u32,
        energy: f64,
        seen: BTreeSet<u32>,
    }
    let mut acc: BTreeMap<(String, Channel), Acc> = BTreeMap::new();
    for r in records {
        let Some(t) = parse_start(&r.interval_start) else { continue };
        if t.hour() != hour {
            continue;
        }
        let key = (r.meter_id.clone(), r.channel);
        let a = acc.entry(key).or_insert(Acc { minutes: r.interval_minutes, energy: 0.0, seen: BTreeSet::new() });
        if a.minutes != r.interval_minutes {
            return Err(IngestError::MixedIntervals { meter: r.meter_id.clone(), hour, a: a.minutes, b: r.interval_minutes });
        }
        if !a.seen.insert(t.minute()) {
            return Err(IngestError::Duplicate { what: "energy interval", meter: r.meter_id.clone(), hour });
        }
        a.energy += r.energy_kwh;
    }
    Ok(acc
        .into_iter()
        .map(|(k, a)| {
            let needed = (60 / a.minutes) as usize;
            let v = if a.seen.len() == needed { HourlyPower::Kw(a.energy) } else { HourlyPower::Missing };
            (k, v)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrossLoad {
    pub kw: f64,
    /// Negative gross load: retained, but suspicious.
    pub anomalous: bool,
}

/// Gross household demand `d = P_D − P_R + P_PV`.
pub fn gross_load(p_delivered_kw: f64, p_received_kw: f64, p_pv_kw: f64) -> Result<GrossLoad, IngestError> {
    if !(p_delivered_kw.is_finite() && p_received_kw.is_finite() && p_pv_kw.is_finite()) {
        return Err(IngestError::NonFinite);
    }
    let kw = p_delivered_kw - p_received_kw + p_pv_kw;
    Ok(GrossLoad { kw, anomalous: kw < 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageMeasurement {
    pub bus: usize,
    pub phase: Phase,
    pub v_mag_pu: f64,
}

/// Measurements bound to the network for one hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourMeasurements {
    pub hour: u32,
    /// Per load: per-phase gross load in kW when the load is power-metered
    /// this hour (member of the metered set), `None` otherwise.
    pub gross_load_kw: Vec<Option<Vec<f64>>>,
    /// Per PV: per-phase production in kW.
    pub pv_kw: Vec<Vec<f64>>,
    /// One entry per metered (bus, phase), sorted.
    pub voltages: Vec<VoltageMeasurement>,
    pub feeder_head: FeederHeadRecord,
    pub anomalies: Vec<String>,
}

impl HourMeasurements {
    pub fn metered(&self) -> impl Iterator<Item = usize> + '_ {
        self.gross_load_kw.iter().enumerate().filter(|(_, g)| g.is_some()).map(|(l, _)| l)
    }

    pub fn unmetered(&self) -> impl Iterator<Item = usize> + '_ {
        self.gross_load_kw.iter().enumerate().filter(|(_, g)| g.is_none()).map(|(l, _)| l)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub hours: Vec<HourMeasurements>,
}

impl MeasurementSet {
    pub fn hour(&self, hour: u32) -> Option<&HourMeasurements> {
        self.hours.iter().find(|h| h.hour == hour)
    }

    /// Summary view with element ids, for JSON output.
    pub fn to_json(&self, net: &NetworkModel) -> serde_json::Value {
        let hours: Vec<serde_json::Value> = self
            .hours
            .iter()
            .map(|h| {
                let metered: BTreeMap<&str, &Vec<f64>> =
                    h.gross_load_kw.iter().enumerate().filter_map(|(l, g)| g.as_ref().map(|g| (net.loads[l].id.as_str(), g))).collect();
                let unmetered: Vec<&str> = h.unmetered().map(|l| net.loads[l].id.as_str()).collect();
                let pv: BTreeMap<&str, &Vec<f64>> = net.pvs.iter().zip(&h.pv_kw).map(|(p, v)| (p.id.as_str(), v)).collect();
                let volts: Vec<serde_json::Value> = h
                    .voltages
                    .iter()
                    .map(|v| serde_json::json!({"bus": net.buses[v.bus].id, "phase": v.phase, "v_mag_pu": v.v_mag_pu}))
                    .collect();
                serde_json::json!({
                    "hour": h.hour,
                    "gross_load_kw": metered,
                    "unmetered": unmetered,
                    "pv_kw": pv,
                    "voltages": volts,
                    "feeder_head": h.feeder_head,
                    "anomalies": h.anomalies,
                })
            })
            .collect();
        serde_json::json!({ "hours": hours })
    }
}

/// Binds AMI energy, AMI voltage and DAS records to the network for the
/// selected hours.
///
/// Load meters use the load id and PV meters the PV id. A load counts as
/// power-metered in an hour when it is declared metered and every channel
/// its premise reports (delivered, and received / PV production when present
/// at all) is complete for that hour; otherwise it is handled as unmetered
/// for that hour. PV production is credited to the lowest-index load at the
/// PV's bus.
pub fn build_measurement_set(
    net: &NetworkModel,
    energy: &[MeterEnergyRecord],
    voltage: &[VoltageRecord],
    das: &[FeederHeadRecord],
    hours: &[u32],
) -> Result<MeasurementSet, IngestError> {
    let load_ids: HashMap<&str, usize> = net.loads.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();
    let pv_ids: HashMap<&str, usize> = net.pvs.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();

    let mut date: Option<chrono::NaiveDate> = None;
    let mut channels: BTreeSet<(String, Channel)> = BTreeSet::new();
    for r in energy {
        let bus = match r.channel {
            Channel::PvProduction => pv_ids.get(r.meter_id.as_str()).map(|&k| net.pvs[k].bus),
            _ => load_ids.get(r.meter_id.as_str()).map(|&k| net.loads[k].bus),
        };
        match bus {
            Some(b) if net.buses[b].id == r.bus => {}
            _ => return Err(IngestError::UnknownMeter { meter: r.meter_id.clone(), bus: r.bus.clone() }),
        }
        if let Some(t) = parse_start(&r.interval_start) {
            match date {
                None => date = Some(t.date()),
                Some(d) if d != t.date() => return Err(IngestError::MultipleDays(d.to_string(), t.date().to_string())),
                _ => {}
            }
        }
        channels.insert((r.meter_id.clone(), r.channel));
    }
    for r in voltage {
        let ok = load_ids.get(r.meter_id.as_str()).map(|&k| net.buses[net.loads[k].bus].id == r.bus).unwrap_or(false);
        if !ok {
            return Err(IngestError::UnknownMeter { meter: r.meter_id.clone(), bus: r.bus.clone() });
        }
    }

    let mut das_by_hour: BTreeMap<u32, FeederHeadRecord> = BTreeMap::new();
    for r in das {
        if das_by_hour.insert(r.hour, *r).is_some() {
            return Err(IngestError::DuplicateFeederHead(r.hour));
        }
    }

    // PV units credited to a premise
    let mut pv_of_load: Vec<Vec<usize>> = vec![Vec::new(); net.loads.len()];
    for (k, pv) in net.pvs.iter().enumerate() {
        if let Some(l) = net.loads.iter().position(|l| l.bus == pv.bus) {
            pv_of_load[l].push(k);
        }
    }

    let mut out = Vec::with_capacity(hours.len());
    for &hour in hours {
        let feeder_head = *das_by_hour.get(&hour).ok_or(IngestError::MissingFeederHead(hour))?;
        let power = derive_hourly_power(energy, hour)?;
        let lookup = |meter: &str, ch: Channel| -> Option<HourlyPower> {
            if channels.contains(&(meter.to_string(), ch)) {
                Some(power.get(&(meter.to_string(), ch)).copied().unwrap_or(HourlyPower::Missing))
            } else {
                None
            }
        };
        let mut anomalies = Vec::new();

        let mut pv_kw = Vec::with_capacity(net.pvs.len());
        let mut pv_missing = vec![false; net.pvs.len()];
        for (k, pv) in net.pvs.iter().enumerate() {
            let total = match lookup(&pv.id, Channel::PvProduction) {
                Some(HourlyPower::Kw(v)) => v,
                Some(HourlyPower::Missing) | None => {
                    pv_missing[k] = true;
                    anomalies.push(format!("PV `{}` has no complete production data; taken as 0 kW", pv.id));
                    0.0
                }
            };
            let n = pv.phases.len() as f64;
            pv_kw.push(vec![total / n; pv.phases.len()]);
        }

        let mut gross = Vec::with_capacity(net.loads.len());
        for (l, load) in net.loads.iter().enumerate() {
            if !load.metered {
                gross.push(None);
                continue;
            }
            let delivered = lookup(&load.id, Channel::Delivered);
            let received = lookup(&load.id, Channel::Received);
            let d = match delivered {
                Some(HourlyPower::Kw(v)) => Some(v),
                _ => None,
            };
            let r = match received {
                Some(HourlyPower::Kw(v)) => Some(v),
                None => Some(0.0),
                Some(HourlyPower::Missing) => None,
            };
            let pv_ok = pv_of_load[l].iter().all(|&k| !pv_missing[k]);
            match (d, r, pv_ok) {
                (Some(d), Some(r), true) => {
                    let pv: f64 = pv_of_load[l].iter().map(|&k| pv_kw[k].iter().sum::<f64>()).sum();
                    let g = gross_load(d, r, pv)?;
                    if g.anomalous {
                        anomalies.push(format!("load `{}` has negative gross load {:.3} kW", load.id, g.kw));
                    }
                    let n = load.phases.len() as f64;
                    gross.push(Some(vec![g.kw / n; load.phases.len()]));
                }
                _ => gross.push(None),
            }
        }

        let mut seen: BTreeSet<(String, Phase)> = BTreeSet::new();
        let mut volts: BTreeMap<(usize, Phase), (f64, usize)> = BTreeMap::new();
        for r in voltage.iter().filter(|r| r.hour == hour) {
            if !seen.insert((r.meter_id.clone(), r.phase)) {
                return Err(IngestError::Duplicate { what: "voltage reading", meter: r.meter_id.clone(), hour });
            }
            let bus = net.loads[load_ids[r.meter_id.as_str()]].bus;
            if !net.buses[bus].phases.contains(r.phase) {
                return Err(IngestError::UnknownMeter { meter: r.meter_id.clone(), bus: format!("{}.{}", r.bus, r.phase) });
            }
            if !(0.5..1.5).contains(&r.v_mag_pu) {
                anomalies.push(format!("meter `{}` voltage {} pu outside sanity band; dropped", r.meter_id, r.v_mag_pu));
                continue;
            }
            let e = volts.entry((bus, r.phase)).or_insert((0.0, 0));
            e.0 += r.v_mag_pu;
            e.1 += 1;
        }
        let voltages =
            volts.into_iter().map(|((bus, phase), (sum, n))| VoltageMeasurement { bus, phase, v_mag_pu: sum / n as f64 }).collect();

        out.push(HourMeasurements { hour, gross_load_kw: gross, pv_kw, voltages, feeder_head, anomalies });
    }
    Ok(MeasurementSet { hours: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps() {
        let t = parse_start("2024-07-15T13:15:00").unwrap();
        assert_eq!((t.hour(), t.minute()), (13, 15));
        assert!(parse_start("13:15").is_none());
        assert_eq!(format_interval_start("2024-07-15", 7, 45), "2024-07-15T07:45:00");
    }
}
