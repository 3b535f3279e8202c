//! Per-unit view of a [`NetworkModel`] on a per-phase MVA base.
//!
//! Lines are normalized on their from-bus base, transformers on their
//! secondary (`to`) base, so an off-nominal ratio is the only thing left of
//! the turns ratio once both sides are expressed in per unit.

use super::{NetworkError, NetworkModel, PhaseMatrix, PhaseSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    /// Substation to feeder-head Thevenin impedance.
    Source,
    Line,
    Transformer,
}

/// A series branch in per unit, shared by lines, transformers and the
/// source impedance.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub kind: BranchKind,
    /// Index into `lines` or `transformers` depending on `kind`.
    pub element: usize,
    pub from: usize,
    pub to: usize,
    pub phases: PhaseSet,
    pub r: PhaseMatrix,
    pub x: PhaseMatrix,
    /// Total shunt susceptance; zero for transformers and the source.
    pub b: PhaseMatrix,
    /// Off-nominal ratio; 1 for lines.
    pub ratio: f64,
    /// Per-phase no-load loss in per unit, charged at `from`.
    pub no_load_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerUnitNetwork {
    pub base_mva: f64,
    /// Impedance base of every bus, ohms.
    pub z_base: Vec<f64>,
    /// Lines in document order (source impedance included), then transformers.
    pub branches: Vec<Branch>,
    /// Per capacitor, per phase susceptance.
    pub cap_b: Vec<Vec<f64>>,
    pub source_branch: usize,
}

#[inline]
pub fn z_base(base_kv_ln: f64, base_mva: f64) -> f64 {
    base_kv_ln * base_kv_ln / base_mva
}

#[inline]
pub fn ohm_to_pu(z_ohm: f64, base_kv_ln: f64, base_mva: f64) -> f64 {
    z_ohm / z_base(base_kv_ln, base_mva)
}

#[inline]
pub fn pu_to_ohm(z_pu: f64, base_kv_ln: f64, base_mva: f64) -> f64 {
    z_pu * z_base(base_kv_ln, base_mva)
}

#[inline]
pub fn kw_to_pu(kw: f64, base_mva: f64) -> f64 {
    kw / (1000.0 * base_mva)
}

#[inline]
pub fn pu_to_kw(pu: f64, base_mva: f64) -> f64 {
    pu * 1000.0 * base_mva
}

pub fn to_per_unit(net: &NetworkModel) -> Result<PerUnitNetwork, NetworkError> {
    let mva = net.base_mva;
    if !(mva > 0.0) {
        return Err(NetworkError::Structure(format!("base_mva must be positive, got {mva}")));
    }
    let mut z = Vec::with_capacity(net.buses.len());
    for b in &net.buses {
        if !(b.base_kv > 0.0) {
            return Err(NetworkError::InvalidElement {
                element: b.id.clone(),
                reason: format!("base_kv must be positive, got {}", b.base_kv),
            });
        }
        z.push(z_base(b.base_kv, mva));
    }

    let mut branches = Vec::with_capacity(net.lines.len() + net.transformers.len());
    for (k, l) in net.lines.iter().enumerate() {
        let zb = z[l.from];
        branches.push(Branch {
            id: l.id.clone(),
            kind: if k == net.source_line { BranchKind::Source } else { BranchKind::Line },
            element: k,
            from: l.from,
            to: l.to,
            phases: l.phases,
            r: l.r_ohm.scaled(1.0 / zb),
            x: l.x_ohm.scaled(1.0 / zb),
            b: l.ysh_us.scaled(1e-6 * zb),
            ratio: 1.0,
            no_load_loss: 0.0,
        });
    }
    for (k, t) in net.transformers.iter().enumerate() {
        let zb = z[t.to];
        branches.push(Branch {
            id: t.id.clone(),
            kind: BranchKind::Transformer,
            element: k,
            from: t.from,
            to: t.to,
            phases: t.phases,
            r: t.r_ohm.scaled(1.0 / zb),
            x: t.x_ohm.scaled(1.0 / zb),
            b: PhaseMatrix::zeros(t.phases.len()),
            ratio: t.turns_ratio,
            no_load_loss: kw_to_pu(t.no_load_loss_kw, mva),
        });
    }
    let cap_b = net.capacitors.iter().map(|c| c.b_us.iter().map(|b| b * 1e-6 * z[c.bus]).collect()).collect();

    Ok(PerUnitNetwork { base_mva: mva, z_base: z, branches, cap_b, source_branch: net.source_line })
}
