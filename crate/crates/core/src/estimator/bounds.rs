//! Limits of the hourly estimate.

use serde::Serialize;

use crate::netmodel::Phase;

/// A bound attached to a named variable or constraint, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedBound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// Squared-magnitude limits at the feeder head. Phase a is pinned to the
/// DAS reading; the other phases may deviate by `band` in magnitude.
pub fn head_voltage_sq_bounds(v_hat_a: f64, band: f64, phase: Phase) -> (f64, f64) {
    match phase {
        Phase::A => (v_hat_a * v_hat_a, v_hat_a * v_hat_a),
        _ => {
            let lo = (1.0 - band) * v_hat_a;
            let hi = (1.0 + band) * v_hat_a;
            (lo * lo, hi * hi)
        }
    }
}

pub fn substation_vmag_bounds(v_hat_a: f64, band: f64) -> (f64, f64) {
    ((1.0 - band) * v_hat_a, (1.0 + band) * v_hat_a)
}

pub fn angle_bounds_deg(phase: Phase, band_deg: f64) -> (f64, f64) {
    let a = phase.nominal_angle_deg();
    (a - band_deg, a + band_deg)
}

/// `sqrt(1/pf² − 1)`: reactive-to-active ratio at power factor `pf`.
pub fn q_ratio(pf: f64) -> f64 {
    (1.0 / (pf * pf) - 1.0).max(0.0).sqrt()
}

/// Reactive power range of a load drawing `p`, between the ratios at
/// `pf_max` and `pf_min` (inductive only).
pub fn pf_q_bounds(p: f64, pf_min: f64, pf_max: f64) -> (f64, f64) {
    let a = p * q_ratio(pf_max);
    let b = p * q_ratio(pf_min);
    (a.min(b), a.max(b))
}
