//! CSV exchange between the estimator and the power flow: hourly element
//! profiles, per-phase substation results and monitor output.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ivkernel::{Injections, PowerPair};
use crate::netmodel::{NetworkModel, Phase};

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("missing value for {element} at hour {hour}")]
    Missing { element: String, hour: u32 },
    #[error("duplicate value for {element} at hour {hour}")]
    Duplicate { element: String, hour: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ProfileKind {
    LoadP,
    LoadQ,
    PvP,
    SrcVmagA,
    SrcVmagB,
    SrcVmagC,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileRow {
    element_id: String,
    kind: ProfileKind,
    hour: u32,
    value_pu: f64,
}

/// One hour of fully specified operating point, per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct HourProfile {
    pub hour: u32,
    pub injections: Injections,
    /// Source voltage magnitude per phase (a, b, c).
    pub src_vmag: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstationRecord {
    pub hour: u32,
    pub phase: Phase,
    pub v_mag_pu: f64,
    pub v_ang_deg: f64,
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub hour: u32,
    pub bus: String,
    pub phase: Phase,
    pub v_mag_pu: f64,
    pub v_ang_deg: f64,
    pub p_kw: f64,
    pub q_kvar: f64,
}

fn phase_element(id: &str, phase: Phase) -> String {
    format!("{id}.{phase}")
}

fn write_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8")
}

fn read_rows<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, ProfileError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(ProfileError::from)).collect()
}

/// `profiles.csv`: one row per load phase (P and Q), PV phase and source
/// phase magnitude, hour-major.
pub fn write_profiles(net: &NetworkModel, hours: &[HourProfile]) -> String {
    let mut rows = Vec::new();
    let src = &net.buses[net.substation].id;
    for h in hours {
        for (l, load) in net.loads.iter().enumerate() {
            for (pos, ph) in load.phases.iter().enumerate() {
                let id = phase_element(&load.id, ph);
                let pq = h.injections.loads[l][pos];
                rows.push(ProfileRow { element_id: id.clone(), kind: ProfileKind::LoadP, hour: h.hour, value_pu: pq.p });
                rows.push(ProfileRow { element_id: id, kind: ProfileKind::LoadQ, hour: h.hour, value_pu: pq.q });
            }
        }
        for (k, pv) in net.pvs.iter().enumerate() {
            for (pos, ph) in pv.phases.iter().enumerate() {
                rows.push(ProfileRow {
                    element_id: phase_element(&pv.id, ph),
                    kind: ProfileKind::PvP,
                    hour: h.hour,
                    value_pu: h.injections.pvs[k][pos],
                });
            }
        }
        for (kind, v) in [ProfileKind::SrcVmagA, ProfileKind::SrcVmagB, ProfileKind::SrcVmagC].into_iter().zip(h.src_vmag) {
            rows.push(ProfileRow { element_id: src.clone(), kind, hour: h.hour, value_pu: v });
        }
    }
    write_rows(rows)
}

pub fn read_profiles(net: &NetworkModel, text: &str) -> Result<Vec<HourProfile>, ProfileError> {
    let rows: Vec<ProfileRow> = read_rows(text)?;
    // element id -> is a load phase
    let mut index: HashMap<String, bool> = HashMap::new();
    for load in &net.loads {
        for ph in load.phases.iter() {
            index.insert(phase_element(&load.id, ph), true);
        }
    }
    for pv in &net.pvs {
        for ph in pv.phases.iter() {
            index.insert(phase_element(&pv.id, ph), false);
        }
    }
    let src = &net.buses[net.substation].id;

    let mut by_hour: BTreeMap<u32, HashMap<(ProfileKind, String), f64>> = BTreeMap::new();
    for row in rows {
        let known = match row.kind {
            ProfileKind::SrcVmagA | ProfileKind::SrcVmagB | ProfileKind::SrcVmagC => &row.element_id == src,
            ProfileKind::LoadP | ProfileKind::LoadQ => index.get(&row.element_id) == Some(&true),
            ProfileKind::PvP => index.get(&row.element_id) == Some(&false),
        };
        if !known {
            return Err(ProfileError::UnknownElement(row.element_id));
        }
        let entry = by_hour.entry(row.hour).or_default();
        let key = (row.kind, row.element_id);
        if entry.contains_key(&key) {
            return Err(ProfileError::Duplicate { element: format!("{} {:?}", key.1, key.0), hour: row.hour });
        }
        entry.insert(key, row.value_pu);
    }

    let mut out = Vec::with_capacity(by_hour.len());
    for (hour, values) in by_hour {
        let get = |kind: ProfileKind, id: &str| {
            values.get(&(kind, id.to_string())).copied().ok_or_else(|| ProfileError::Missing { element: id.to_string(), hour })
        };
        let mut loads = Vec::with_capacity(net.loads.len());
        for load in &net.loads {
            let mut v = Vec::with_capacity(load.phases.len());
            for ph in load.phases.iter() {
                let id = phase_element(&load.id, ph);
                v.push(PowerPair { p: get(ProfileKind::LoadP, &id)?, q: get(ProfileKind::LoadQ, &id)? });
            }
            loads.push(v);
        }
        let mut pvs = Vec::with_capacity(net.pvs.len());
        for pv in &net.pvs {
            let v: Result<Vec<f64>, _> = pv.phases.iter().map(|ph| get(ProfileKind::PvP, &phase_element(&pv.id, ph))).collect();
            pvs.push(v?);
        }
        let src_vmag = [get(ProfileKind::SrcVmagA, src)?, get(ProfileKind::SrcVmagB, src)?, get(ProfileKind::SrcVmagC, src)?];
        out.push(HourProfile { hour, injections: Injections { loads, pvs }, src_vmag });
    }
    Ok(out)
}

pub fn write_substation(records: &[SubstationRecord]) -> String {
    write_rows(records)
}

pub fn read_substation(text: &str) -> Result<Vec<SubstationRecord>, ProfileError> {
    read_rows(text)
}

pub fn write_monitors(records: &[MonitorRecord]) -> String {
    write_rows(records)
}

pub fn read_monitors(text: &str) -> Result<Vec<MonitorRecord>, ProfileError> {
    read_rows(text)
}
