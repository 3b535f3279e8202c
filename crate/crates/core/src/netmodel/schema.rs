//! Serde mirror of the topology JSON document. Field names follow the file
//! format; validation happens when the document is turned into a
//! [`NetworkModel`](super::NetworkModel).

use serde::{Deserialize, Serialize};

use super::{BusKind, Phase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDocument {
    pub base_mva: f64,
    pub buses: Vec<BusDoc>,
    #[serde(default)]
    pub lines: Vec<LineDoc>,
    #[serde(default)]
    pub transformers: Vec<TransformerDoc>,
    #[serde(default)]
    pub capacitors: Vec<CapacitorDoc>,
    #[serde(default)]
    pub loads: Vec<LoadDoc>,
    #[serde(default)]
    pub pvs: Vec<PvDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusDoc {
    pub id: String,
    pub kind: BusKind,
    pub phases: Vec<Phase>,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineDoc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: Vec<Phase>,
    pub r_ohm: Vec<Vec<f64>>,
    pub x_ohm: Vec<Vec<f64>>,
    /// Total shunt susceptance in microsiemens; omitted means no charging.
    #[serde(default)]
    pub ysh_us: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerDoc {
    pub id: String,
    pub from: String,
    pub to: String,
    pub phases: Vec<Phase>,
    /// Series resistance referred to the secondary (`to`) side.
    pub r_ohm: Vec<Vec<f64>>,
    pub x_ohm: Vec<Vec<f64>>,
    #[serde(default)]
    pub no_load_loss_kw: f64,
    #[serde(default = "unit_ratio")]
    pub turns_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitorDoc {
    pub id: String,
    pub bus: String,
    pub phases: Vec<Phase>,
    pub b_us_per_phase: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadDoc {
    pub id: String,
    pub bus: String,
    pub phases: Vec<Phase>,
    #[serde(default)]
    pub metered: bool,
    #[serde(default)]
    pub has_voltage_meter: bool,
    #[serde(default = "default_pf_min")]
    pub pf_min: f64,
    #[serde(default = "default_pf_max")]
    pub pf_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvDoc {
    pub id: String,
    pub bus: String,
    pub phases: Vec<Phase>,
    pub rated_kw: f64,
}

fn unit_ratio() -> f64 {
    1.0
}

pub const DEFAULT_PF_MIN: f64 = 0.85;
pub const DEFAULT_PF_MAX: f64 = 1.0;

fn default_pf_min() -> f64 {
    DEFAULT_PF_MIN
}

fn default_pf_max() -> f64 {
    DEFAULT_PF_MAX
}

impl TopologyDocument {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology document serializes")
    }
}
