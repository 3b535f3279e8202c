//! Immutable three-phase feeder model: buses, multiphase branches with
//! phase-coupled impedance matrices, capacitors, loads and PV units.

mod perunit;
pub mod schema;

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use perunit::{kw_to_pu, ohm_to_pu, pu_to_kw, pu_to_ohm, to_per_unit, z_base, Branch, BranchKind, PerUnitNetwork};
pub use schema::TopologyDocument;

use schema::{BusDoc, CapacitorDoc, LineDoc, LoadDoc, PvDoc, TransformerDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Nominal angle of a balanced positive-sequence set, in degrees.
    pub fn nominal_angle_deg(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -120.0,
            Phase::C => 120.0,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s.trim() {
            "a" | "A" => Some(Phase::A),
            "b" | "B" => Some(Phase::B),
            "c" | "C" => Some(Phase::C),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Nonempty subset of {a, b, c}, always iterated in a, b, c order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhaseSet(u8);

impl PhaseSet {
    pub const ABC: PhaseSet = PhaseSet(0b111);

    pub fn from_phases(phases: &[Phase]) -> Self {
        PhaseSet(phases.iter().fold(0, |m, p| m | (1 << p.index())))
    }

    pub fn single(p: Phase) -> Self {
        PhaseSet(1 << p.index())
    }

    pub fn contains(self, p: Phase) -> bool {
        self.0 & (1 << p.index()) != 0
    }

    pub fn is_subset_of(self, other: PhaseSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Phase> {
        Phase::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Position of `p` within this set's a, b, c ordering.
    pub fn position(self, p: Phase) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        Some((self.0 & ((1 << p.index()) - 1)).count_ones() as usize)
    }

    pub fn to_vec(self) -> Vec<Phase> {
        self.iter().collect()
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.iter() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Substation,
    FeederHead,
    Primary,
    Secondary,
    Load,
}

/// Square real matrix over a phase set, row-major in a, b, c order.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl PhaseMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Self { dim, data: rows.iter().flatten().copied().collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { dim: self.dim, data: self.data.iter().map(|v| v * k).collect() }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim.max(1)).map(|c| c.to_vec()).take(self.dim).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| {
            (0..i).all(|j| {
                let (a, b) = (self.get(i, j), self.get(j, i));
                (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
            })
        })
    }
}

/// True when R + jX is numerically nonsingular.
pub fn series_impedance_invertible(r: &PhaseMatrix, x: &PhaseMatrix) -> bool {
    let n = r.dim();
    if n == 0 {
        return false;
    }
    let mut a: Vec<(f64, f64)> = (0..n * n).map(|k| (r.data[k], x.data[k])).collect();
    let scale = a.iter().map(|(re, im)| re.hypot(*im)).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return false;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                let mi = a[i * n + col].0.hypot(a[i * n + col].1);
                let mj = a[j * n + col].0.hypot(a[j * n + col].1);
                mi.total_cmp(&mj)
            })
            .unwrap();
        let (pr, pi) = a[piv * n + col];
        let mag2 = pr * pr + pi * pi;
        if mag2.sqrt() <= 1e-12 * scale {
            return false;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
        }
        for row in col + 1..n {
            let (er, ei) = a[row * n + col];
            // factor = e / p
            let fr = (er * pr + ei * pi) / mag2;
            let fi = (ei * pr - er * pi) / mag2;
            for k in col..n {
                let (cr, ci) = a[col * n + k];
                let t = &mut a[row * n + k];
                t.0 -= fr * cr - fi * ci;
                t.1 -= fr * ci + fi * cr;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub kind: BusKind,
    pub phases: PhaseSet,
    /// Line-to-neutral kilovolts.
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSegment {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub phases: PhaseSet,
    pub r_ohm: PhaseMatrix,
    pub x_ohm: PhaseMatrix,
    /// Total charging susceptance in microsiemens; half is applied at each end.
    pub ysh_us: PhaseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerBranch {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub phases: PhaseSet,
    pub r_ohm: PhaseMatrix,
    pub x_ohm: PhaseMatrix,
    /// Per-phase no-load loss, withdrawn at the primary-side bus.
    pub no_load_loss_kw: f64,
    pub turns_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitorBank {
    pub id: String,
    pub bus: usize,
    pub phases: PhaseSet,
    /// Per-phase susceptance in microsiemens.
    pub b_us: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadPoint {
    pub id: String,
    pub bus: usize,
    pub phases: PhaseSet,
    pub metered: bool,
    pub has_voltage_meter: bool,
    pub pf_min: f64,
    pub pf_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvUnit {
    pub id: String,
    pub bus: usize,
    pub phases: PhaseSet,
    pub rated_kw: f64,
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("element `{element}` references missing bus `{bus}`")]
    DanglingReference { element: String, bus: String },
    #[error("bus `{0}` is not connected to the substation")]
    Disconnected(String),
    #[error("element `{0}` has a singular series impedance")]
    SingularImpedance(String),
    #[error("element `{element}` uses phases {phases} not present at bus `{bus}`")]
    PhaseMismatch { element: String, bus: String, phases: String },
    #[error("element `{element}`: {reason}")]
    InvalidElement { element: String, reason: String },
    #[error("{0}")]
    Structure(String),
    #[error("invalid topology json: {0}")]
    Json(#[from] serde_json::Error),
}

/// The feeder: immutable after [`NetworkModel::from_document`].
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<LineSegment>,
    pub transformers: Vec<TransformerBranch>,
    pub capacitors: Vec<CapacitorBank>,
    pub loads: Vec<LoadPoint>,
    pub pvs: Vec<PvUnit>,
    pub substation: usize,
    pub feeder_head: usize,
    /// Index into `lines` of the substation → feeder-head source impedance.
    pub source_line: usize,
    /// δ(i): neighbouring buses of each bus, sorted.
    pub adjacency: Vec<Vec<usize>>,
    bus_index: HashMap<String, usize>,
    pu: PerUnitNetwork,
}

fn phase_set(element: &str, phases: &[Phase]) -> Result<PhaseSet, NetworkError> {
    let set = PhaseSet::from_phases(phases);
    if set.is_empty() || set.len() != phases.len() {
        return Err(NetworkError::InvalidElement {
            element: element.to_string(),
            reason: "phase list must be nonempty without repeats".into(),
        });
    }
    Ok(set)
}

/// Reorders a document matrix (given over `phases` in document order) into
/// canonical a, b, c order.
fn canonical_matrix(element: &str, field: &str, phases: &[Phase], rows: &[Vec<f64>]) -> Result<PhaseMatrix, NetworkError> {
    let n = phases.len();
    let bad = |reason: String| NetworkError::InvalidElement { element: element.to_string(), reason };
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(bad(format!("{field} must be {n}x{n}")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad(format!("{field} has non-finite entries")));
    }
    let set = PhaseSet::from_phases(phases);
    let mut m = PhaseMatrix::zeros(n);
    for (i, pi) in phases.iter().enumerate() {
        for (j, pj) in phases.iter().enumerate() {
            m.set(set.position(*pi).unwrap(), set.position(*pj).unwrap(), rows[i][j]);
        }
    }
    if !m.is_symmetric() {
        return Err(bad(format!("{field} must be symmetric")));
    }
    Ok(m)
}

fn canonical_vector(phases: &[Phase], values: &[f64]) -> Vec<f64> {
    let set = PhaseSet::from_phases(phases);
    let mut out = vec![0.0; values.len()];
    for (p, v) in phases.iter().zip(values) {
        out[set.position(*p).unwrap()] = *v;
    }
    out
}

struct Resolver<'a> {
    index: &'a HashMap<String, usize>,
    buses: &'a [Bus],
}

impl Resolver<'_> {
    fn bus(&self, element: &str, bus: &str, phases: PhaseSet) -> Result<usize, NetworkError> {
        let &b =
            self.index.get(bus).ok_or_else(|| NetworkError::DanglingReference { element: element.to_string(), bus: bus.to_string() })?;
        if !phases.is_subset_of(self.buses[b].phases) {
            return Err(NetworkError::PhaseMismatch { element: element.to_string(), bus: bus.to_string(), phases: phases.to_string() });
        }
        Ok(b)
    }
}

fn invalid(element: &str, reason: impl Into<String>) -> NetworkError {
    NetworkError::InvalidElement { element: element.to_string(), reason: reason.into() }
}

impl NetworkModel {
    /// Parses and validates a topology JSON document.
    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        Self::from_document(&TopologyDocument::from_json(text)?)
    }

    pub fn from_document(doc: &TopologyDocument) -> Result<Self, NetworkError> {
        if !(doc.base_mva > 0.0) || !doc.base_mva.is_finite() {
            return Err(NetworkError::Structure(format!("base_mva must be positive, got {}", doc.base_mva)));
        }

        let mut buses = Vec::with_capacity(doc.buses.len());
        let mut bus_index = HashMap::with_capacity(doc.buses.len());
        for BusDoc { id, kind, phases, base_kv } in &doc.buses {
            if bus_index.insert(id.clone(), buses.len()).is_some() {
                return Err(NetworkError::DuplicateId(id.clone()));
            }
            if !(*base_kv > 0.0) || !base_kv.is_finite() {
                return Err(invalid(id, format!("base_kv must be positive, got {base_kv}")));
            }
            buses.push(Bus { id: id.clone(), kind: *kind, phases: phase_set(id, phases)?, base_kv: *base_kv });
        }

        // buses live in their own namespace; elements share one
        let mut element_ids: HashSet<&str> = HashSet::new();
        for id in doc
            .lines
            .iter()
            .map(|e| e.id.as_str())
            .chain(doc.transformers.iter().map(|e| e.id.as_str()))
            .chain(doc.capacitors.iter().map(|e| e.id.as_str()))
            .chain(doc.loads.iter().map(|e| e.id.as_str()))
            .chain(doc.pvs.iter().map(|e| e.id.as_str()))
        {
            if !element_ids.insert(id) {
                return Err(NetworkError::DuplicateId(id.to_string()));
            }
        }

        let res = Resolver { index: &bus_index, buses: &buses };

        let mut lines = Vec::with_capacity(doc.lines.len());
        for LineDoc { id, from, to, phases, r_ohm, x_ohm, ysh_us } in &doc.lines {
            let set = phase_set(id, phases)?;
            let from = res.bus(id, from, set)?;
            let to = res.bus(id, to, set)?;
            if from == to {
                return Err(invalid(id, "branch endpoints coincide"));
            }
            let r = canonical_matrix(id, "r_ohm", phases, r_ohm)?;
            let x = canonical_matrix(id, "x_ohm", phases, x_ohm)?;
            let y = if ysh_us.is_empty() { PhaseMatrix::zeros(set.len()) } else { canonical_matrix(id, "ysh_us", phases, ysh_us)? };
            if (0..y.dim()).any(|k| y.get(k, k) < 0.0) {
                return Err(invalid(id, "shunt susceptance must be capacitive (nonnegative diagonal)"));
            }
            if !series_impedance_invertible(&r, &x) {
                return Err(NetworkError::SingularImpedance(id.clone()));
            }
            lines.push(LineSegment { id: id.clone(), from, to, phases: set, r_ohm: r, x_ohm: x, ysh_us: y });
        }

        let mut transformers = Vec::with_capacity(doc.transformers.len());
        for TransformerDoc { id, from, to, phases, r_ohm, x_ohm, no_load_loss_kw, turns_ratio } in &doc.transformers {
            let set = phase_set(id, phases)?;
            let from = res.bus(id, from, set)?;
            let to = res.bus(id, to, set)?;
            if from == to {
                return Err(invalid(id, "branch endpoints coincide"));
            }
            if !(*no_load_loss_kw >= 0.0) || !no_load_loss_kw.is_finite() {
                return Err(invalid(id, "no_load_loss_kw must be >= 0"));
            }
            if !(*turns_ratio > 0.0) || !turns_ratio.is_finite() {
                return Err(invalid(id, "turns_ratio must be > 0"));
            }
            let r = canonical_matrix(id, "r_ohm", phases, r_ohm)?;
            let x = canonical_matrix(id, "x_ohm", phases, x_ohm)?;
            if !series_impedance_invertible(&r, &x) {
                return Err(NetworkError::SingularImpedance(id.clone()));
            }
            transformers.push(TransformerBranch {
                id: id.clone(),
                from,
                to,
                phases: set,
                r_ohm: r,
                x_ohm: x,
                no_load_loss_kw: *no_load_loss_kw,
                turns_ratio: *turns_ratio,
            });
        }

        let mut capacitors = Vec::with_capacity(doc.capacitors.len());
        for CapacitorDoc { id, bus, phases, b_us_per_phase } in &doc.capacitors {
            let set = phase_set(id, phases)?;
            let bus = res.bus(id, bus, set)?;
            if b_us_per_phase.len() != set.len() {
                return Err(invalid(id, "b_us_per_phase length must match phases"));
            }
            if b_us_per_phase.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
                return Err(invalid(id, "capacitor susceptance must be >= 0"));
            }
            capacitors.push(CapacitorBank { id: id.clone(), bus, phases: set, b_us: canonical_vector(phases, b_us_per_phase) });
        }

        let mut loads = Vec::with_capacity(doc.loads.len());
        for LoadDoc { id, bus, phases, metered, has_voltage_meter, pf_min, pf_max } in &doc.loads {
            let set = phase_set(id, phases)?;
            let bus = res.bus(id, bus, set)?;
            if !(*pf_min > 0.0 && pf_min <= pf_max && *pf_max <= 1.0) {
                return Err(invalid(id, format!("power factor bounds need 0 < pf_min <= pf_max <= 1, got {pf_min}..{pf_max}")));
            }
            loads.push(LoadPoint {
                id: id.clone(),
                bus,
                phases: set,
                metered: *metered,
                has_voltage_meter: *has_voltage_meter,
                pf_min: *pf_min,
                pf_max: *pf_max,
            });
        }

        let mut pvs = Vec::with_capacity(doc.pvs.len());
        for PvDoc { id, bus, phases, rated_kw } in &doc.pvs {
            let set = phase_set(id, phases)?;
            let bus = res.bus(id, bus, set)?;
            if !(*rated_kw > 0.0) || !rated_kw.is_finite() {
                return Err(invalid(id, "rated_kw must be > 0"));
            }
            pvs.push(PvUnit { id: id.clone(), bus, phases: set, rated_kw: *rated_kw });
        }

        let of_kind = |k: BusKind| buses.iter().enumerate().filter(move |(_, b)| b.kind == k).map(|(i, _)| i);
        let subs: Vec<usize> = of_kind(BusKind::Substation).collect();
        let heads: Vec<usize> = of_kind(BusKind::FeederHead).collect();
        if subs.len() != 1 || heads.len() != 1 {
            return Err(NetworkError::Structure(format!(
                "a feeder needs exactly one substation and one feeder_head bus (found {} and {})",
                subs.len(),
                heads.len()
            )));
        }
        let (substation, feeder_head) = (subs[0], heads[0]);

        let source: Vec<usize> = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| (l.from == substation && l.to == feeder_head) || (l.from == feeder_head && l.to == substation))
            .map(|(i, _)| i)
            .collect();
        if source.len() != 1 {
            return Err(NetworkError::Structure(
                "exactly one line must join the substation and feeder-head buses (source impedance)".into(),
            ));
        }
        let source_line = source[0];
        if lines[source_line].from != substation {
            return Err(invalid(&lines[source_line].id, "source impedance must run from the substation to the feeder head"));
        }
        if !lines[source_line].ysh_us.is_zero() {
            return Err(invalid(&lines[source_line].id, "source impedance must carry no shunt capacitance"));
        }
        let sub_branches = lines.iter().filter(|l| l.from == substation || l.to == substation).count()
            + transformers.iter().filter(|t| t.from == substation || t.to == substation).count();
        if sub_branches != 1 {
            return Err(NetworkError::Structure("the substation bus may only connect to the source impedance".into()));
        }

        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); buses.len()];
        for (f, t) in lines.iter().map(|l| (l.from, l.to)).chain(transformers.iter().map(|t| (t.from, t.to))) {
            adjacency[f].push(t);
            adjacency[t].push(f);
        }
        for a in adjacency.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }

        let mut seen = vec![false; buses.len()];
        let mut queue = VecDeque::from([substation]);
        seen[substation] = true;
        while let Some(b) = queue.pop_front() {
            for &n in &adjacency[b] {
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if let Some(b) = seen.iter().position(|s| !s) {
            return Err(NetworkError::Disconnected(buses[b].id.clone()));
        }

        let mut model = NetworkModel {
            base_mva: doc.base_mva,
            buses,
            lines,
            transformers,
            capacitors,
            loads,
            pvs,
            substation,
            feeder_head,
            source_line,
            adjacency,
            bus_index,
            pu: PerUnitNetwork::default(),
        };
        model.pu = to_per_unit(&model)?;
        Ok(model)
    }

    /// Writes the model back to its document form (canonical phase order).
    pub fn to_document(&self) -> TopologyDocument {
        let bid = |b: usize| self.buses[b].id.clone();
        TopologyDocument {
            base_mva: self.base_mva,
            buses: self
                .buses
                .iter()
                .map(|b| BusDoc { id: b.id.clone(), kind: b.kind, phases: b.phases.to_vec(), base_kv: b.base_kv })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineDoc {
                    id: l.id.clone(),
                    from: bid(l.from),
                    to: bid(l.to),
                    phases: l.phases.to_vec(),
                    r_ohm: l.r_ohm.to_rows(),
                    x_ohm: l.x_ohm.to_rows(),
                    ysh_us: l.ysh_us.to_rows(),
                })
                .collect(),
            transformers: self
                .transformers
                .iter()
                .map(|t| TransformerDoc {
                    id: t.id.clone(),
                    from: bid(t.from),
                    to: bid(t.to),
                    phases: t.phases.to_vec(),
                    r_ohm: t.r_ohm.to_rows(),
                    x_ohm: t.x_ohm.to_rows(),
                    no_load_loss_kw: t.no_load_loss_kw,
                    turns_ratio: t.turns_ratio,
                })
                .collect(),
            capacitors: self
                .capacitors
                .iter()
                .map(|c| CapacitorDoc { id: c.id.clone(), bus: bid(c.bus), phases: c.phases.to_vec(), b_us_per_phase: c.b_us.clone() })
                .collect(),
            loads: self
                .loads
                .iter()
                .map(|l| LoadDoc {
                    id: l.id.clone(),
                    bus: bid(l.bus),
                    phases: l.phases.to_vec(),
                    metered: l.metered,
                    has_voltage_meter: l.has_voltage_meter,
                    pf_min: l.pf_min,
                    pf_max: l.pf_max,
                })
                .collect(),
            pvs: self
                .pvs
                .iter()
                .map(|p| PvDoc { id: p.id.clone(), bus: bid(p.bus), phases: p.phases.to_vec(), rated_kw: p.rated_kw })
                .collect(),
        }
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.bus_index.get(id).copied()
    }

    pub fn per_unit(&self) -> &PerUnitNetwork {
        &self.pu
    }

    pub fn load_index(&self, id: &str) -> Option<usize> {
        self.loads.iter().position(|l| l.id == id)
    }

    pub fn pv_index(&self, id: &str) -> Option<usize> {
        self.pvs.iter().position(|p| p.id == id)
    }

    /// Loads declared with a billing meter (Ω_AMI_D candidates).
    pub fn metered_loads(&self) -> impl Iterator<Item = usize> + '_ {
        self.loads.iter().enumerate().filter(|(_, l)| l.metered).map(|(i, _)| i)
    }

    /// Shortest-path distance from the substation, using each branch's mean
    /// per-unit self resistance as its length. The topology file carries no
    /// conductor lengths, and resistance is proportional to length for a
    /// given conductor type.
    pub fn electrical_distance(&self) -> Vec<f64> {
        let n = self.buses.len();
        let mut w: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let branch_r = |r: &PhaseMatrix| (0..r.dim()).map(|k| r.get(k, k)).sum::<f64>() / r.dim() as f64;
        for l in &self.lines {
            let zb = z_base(self.buses[l.from].base_kv, self.base_mva);
            let d = branch_r(&l.r_ohm) / zb;
            w[l.from].push((l.to, d));
            w[l.to].push((l.from, d));
        }
        for t in &self.transformers {
            let zb = z_base(self.buses[t.to].base_kv, self.base_mva);
            let d = branch_r(&t.r_ohm) / zb;
            w[t.from].push((t.to, d));
            w[t.to].push((t.from, d));
        }
        dijkstra(&w, self.substation)
    }
}

fn dijkstra(w: &[Vec<(usize, f64)>], src: usize) -> Vec<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    struct Key(f64);
    impl PartialEq for Key {
        fn eq(&self, o: &Self) -> bool {
            self.cmp(o).is_eq()
        }
    }
    impl Eq for Key {}
    impl PartialOrd for Key {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Key {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&o.0)
        }
    }
    let mut dist = vec![f64::INFINITY; w.len()];
    dist[src] = 0.0;
    let mut heap = BinaryHeap::from([Reverse((Key(0.0), src))]);
    while let Some(Reverse((Key(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, c) in &w[u] {
            let nd = d + c;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((Key(nd), v)));
            }
        }
    }
    dist
}
