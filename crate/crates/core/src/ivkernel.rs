//! Rectangular current–voltage network equations.
//!
//! Both the estimator and the Newton power flow evaluate the network through
//! this module: the state vector layout, the line-flow and current-injection
//! residuals (linear), the bus power coupling (bilinear), capacitor output and
//! the per-element power bookkeeping used for reconciliation.
//!
//! Complex quantities are carried as interleaved `(re, im)` pairs; a branch
//! with phases {a, c} has current slice `[I_a.re, I_a.im, I_c.re, I_c.im]`.

use std::ops::Range;

use thiserror::Error;

use crate::netmodel::{Branch, BranchKind, NetworkModel, Phase};
use crate::sparse::Triplets;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("branch `{branch}` expects {expected} values, got {got}")]
    DimensionMismatch { branch: String, expected: usize, got: usize },
}

/// Index map for the IV state vector
/// `[V (2 per bus-phase) | I_branch (2 per branch-phase) | I_inj (2 per bus-phase)]`.
#[derive(Debug, Clone)]
pub struct IvLayout {
    bus_start: Vec<usize>,
    bus_phases: Vec<(usize, Phase)>,
    branch_start: Vec<usize>,
    branch_phases: Vec<(usize, Phase)>,
    /// Per bus: (branch index, bus is the `from` end).
    incident: Vec<Vec<(usize, bool)>>,
}

impl IvLayout {
    pub fn new(net: &NetworkModel) -> Self {
        let mut bus_start = Vec::with_capacity(net.buses.len() + 1);
        let mut bus_phases = Vec::new();
        for (b, bus) in net.buses.iter().enumerate() {
            bus_start.push(bus_phases.len());
            bus_phases.extend(bus.phases.iter().map(|p| (b, p)));
        }
        bus_start.push(bus_phases.len());

        let branches = &net.per_unit().branches;
        let mut branch_start = Vec::with_capacity(branches.len() + 1);
        let mut branch_phases = Vec::new();
        let mut incident = vec![Vec::new(); net.buses.len()];
        for (k, br) in branches.iter().enumerate() {
            branch_start.push(branch_phases.len());
            branch_phases.extend(br.phases.iter().map(|p| (k, p)));
            incident[br.from].push((k, true));
            incident[br.to].push((k, false));
        }
        branch_start.push(branch_phases.len());

        Self { bus_start, bus_phases, branch_start, branch_phases, incident }
    }

    pub fn n_bus_phases(&self) -> usize {
        self.bus_phases.len()
    }

    pub fn n_branch_phases(&self) -> usize {
        self.branch_phases.len()
    }

    /// Length of the IV state vector.
    pub fn len(&self) -> usize {
        4 * self.n_bus_phases() + 2 * self.n_branch_phases()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bus-phase slot of (bus, phase), if the bus carries that phase.
    pub fn bus_phase(&self, net: &NetworkModel, bus: usize, phase: Phase) -> Option<usize> {
        net.buses[bus].phases.position(phase).map(|k| self.bus_start[bus] + k)
    }

    pub fn bus_phase_range(&self, bus: usize) -> Range<usize> {
        self.bus_start[bus]..self.bus_start[bus + 1]
    }

    pub fn bus_phase_of(&self, bp: usize) -> (usize, Phase) {
        self.bus_phases[bp]
    }

    pub fn branch_phase_range(&self, branch: usize) -> Range<usize> {
        self.branch_start[branch]..self.branch_start[branch + 1]
    }

    pub fn branch_phase_of(&self, k: usize) -> (usize, Phase) {
        self.branch_phases[k]
    }

    pub fn incident(&self, bus: usize) -> &[(usize, bool)] {
        &self.incident[bus]
    }

    #[inline]
    pub fn v_re(&self, bp: usize) -> usize {
        2 * bp
    }
    #[inline]
    pub fn v_im(&self, bp: usize) -> usize {
        2 * bp + 1
    }
    #[inline]
    pub fn i_re(&self, k: usize) -> usize {
        2 * self.bus_phases.len() + 2 * k
    }
    #[inline]
    pub fn i_im(&self, k: usize) -> usize {
        self.i_re(k) + 1
    }
    #[inline]
    pub fn inj_re(&self, bp: usize) -> usize {
        2 * self.bus_phases.len() + 2 * self.branch_phases.len() + 2 * bp
    }
    #[inline]
    pub fn inj_im(&self, bp: usize) -> usize {
        self.inj_re(bp) + 1
    }

    /// Slot of the voltage at `bus` on the phase stored at position `pos` of branch `k`.
    #[inline]
    pub fn branch_end_bp(&self, net: &NetworkModel, k: usize, bus: usize, pos: usize) -> usize {
        let phase = self.branch_phases[self.branch_start[k] + pos].1;
        self.bus_phase(net, bus, phase).expect("branch phases validated against buses")
    }

    /// Rows used by [`linear_residuals`]: line flow then current injection.
    pub fn n_linear_rows(&self) -> usize {
        2 * self.n_branch_phases() + 2 * self.n_bus_phases()
    }

    pub fn line_flow_row(&self, k: usize) -> usize {
        2 * k
    }

    pub fn injection_row(&self, bp: usize) -> usize {
        2 * self.n_branch_phases() + 2 * bp
    }

    /// Flat start: 1 pu at nominal phase angles, zero currents.
    pub fn flat_start(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        for (bp, &(_, ph)) in self.bus_phases.iter().enumerate() {
            let a = ph.nominal_angle_deg().to_radians();
            x[2 * bp] = a.cos();
            x[2 * bp + 1] = a.sin();
        }
        x
    }

    pub fn voltage(&self, x: &[f64], bp: usize) -> (f64, f64) {
        (x[2 * bp], x[2 * bp + 1])
    }

    pub fn injection(&self, x: &[f64], bp: usize) -> (f64, f64) {
        let r = self.inj_re(bp);
        (x[r], x[r + 1])
    }

    fn gather_branch(&self, net: &NetworkModel, k: usize, x: &[f64]) -> BranchVectors {
        let br = &net.per_unit().branches[k];
        let n = br.phases.len();
        let mut out = BranchVectors::new(n);
        for pos in 0..n {
            let ph = self.branch_phases[self.branch_start[k] + pos].1;
            let bf = self.bus_phase(net, br.from, ph).unwrap();
            let bt = self.bus_phase(net, br.to, ph).unwrap();
            let kk = self.branch_start[k] + pos;
            out.v_from[2 * pos] = x[2 * bf];
            out.v_from[2 * pos + 1] = x[2 * bf + 1];
            out.v_to[2 * pos] = x[2 * bt];
            out.v_to[2 * pos + 1] = x[2 * bt + 1];
            out.current[2 * pos] = x[self.i_re(kk)];
            out.current[2 * pos + 1] = x[self.i_im(kk)];
        }
        out
    }
}

struct BranchVectors {
    v_from: Vec<f64>,
    v_to: Vec<f64>,
    current: Vec<f64>,
}

impl BranchVectors {
    fn new(n: usize) -> Self {
        Self { v_from: vec![0.0; 2 * n], v_to: vec![0.0; 2 * n], current: vec![0.0; 2 * n] }
    }
}

fn check_dims(br: &Branch, slices: &[&[f64]]) -> Result<usize, KernelError> {
    let n = br.phases.len();
    for s in slices {
        if s.len() != 2 * n {
            return Err(KernelError::DimensionMismatch { branch: br.id.clone(), expected: 2 * n, got: s.len() });
        }
    }
    Ok(n)
}

/// Line-flow residual of one branch, `2·|phases|` values.
///
/// For each phase φ the real row is
/// `Σp R[φ,p](I_p.re + ½Σk B[p,k] Vi_k.im) − Σp X[φ,p](I_p.im − ½Σk B[p,k] Vi_k.re) − (Vi_φ.re/t − Vj_φ.re)`
/// and the imaginary row is the matching expression with R and X swapped in
/// role. `I` is the sending-end current (shunt charging included), scaled by
/// the off-nominal ratio `t` for transformers.
pub fn line_flow_residual(br: &Branch, v_from: &[f64], v_to: &[f64], current: &[f64]) -> Result<Vec<f64>, KernelError> {
    let n = check_dims(br, &[v_from, v_to, current])?;
    let mut out = vec![0.0; 2 * n];
    line_flow_into(br, v_from, v_to, current, &mut out);
    Ok(out)
}

fn line_flow_into(br: &Branch, vf: &[f64], vt: &[f64], cur: &[f64], out: &mut [f64]) {
    let n = br.phases.len();
    // series current on each phase: I − j(B/2)Vi
    let mut s_re = [0.0; 3];
    let mut s_im = [0.0; 3];
    for p in 0..n {
        let mut bv_re = 0.0;
        let mut bv_im = 0.0;
        for k in 0..n {
            let b = br.b.get(p, k);
            bv_re += b * vf[2 * k];
            bv_im += b * vf[2 * k + 1];
        }
        s_re[p] = cur[2 * p] + 0.5 * bv_im;
        s_im[p] = cur[2 * p + 1] - 0.5 * bv_re;
    }
    let t = br.ratio;
    for phi in 0..n {
        let mut re = 0.0;
        let mut im = 0.0;
        for p in 0..n {
            let r = br.r.get(phi, p);
            let x = br.x.get(phi, p);
            re += r * s_re[p] - x * s_im[p];
            im += r * s_im[p] + x * s_re[p];
        }
        out[2 * phi] = re - (vf[2 * phi] / t - vt[2 * phi]);
        out[2 * phi + 1] = im - (vf[2 * phi + 1] / t - vt[2 * phi + 1]);
    }
}

/// Constant partial derivatives of [`line_flow_residual`], each `2n × 2n`
/// row-major over interleaved (re, im) components.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFlowJacobian {
    pub dim: usize,
    pub wrt_current: Vec<f64>,
    pub wrt_v_from: Vec<f64>,
    pub wrt_v_to: Vec<f64>,
}

pub fn line_flow_jacobian(br: &Branch) -> LineFlowJacobian {
    let n = br.phases.len();
    let d = 2 * n;
    let mut jc = vec![0.0; d * d];
    let mut jf = vec![0.0; d * d];
    let mut jt = vec![0.0; d * d];
    for phi in 0..n {
        let (re, im) = (2 * phi, 2 * phi + 1);
        for p in 0..n {
            let r = br.r.get(phi, p);
            let x = br.x.get(phi, p);
            jc[re * d + 2 * p] = r;
            jc[re * d + 2 * p + 1] = -x;
            jc[im * d + 2 * p] = x;
            jc[im * d + 2 * p + 1] = r;
        }
        for k in 0..n {
            // ½ (R B)[φ,k] and ½ (X B)[φ,k]
            let (mut rb, mut xb) = (0.0, 0.0);
            for p in 0..n {
                rb += br.r.get(phi, p) * br.b.get(p, k);
                xb += br.x.get(phi, p) * br.b.get(p, k);
            }
            jf[re * d + 2 * k] += 0.5 * xb;
            jf[re * d + 2 * k + 1] += 0.5 * rb;
            jf[im * d + 2 * k] += -0.5 * rb;
            jf[im * d + 2 * k + 1] += 0.5 * xb;
        }
        jf[re * d + re] -= 1.0 / br.ratio;
        jf[im * d + im] -= 1.0 / br.ratio;
        jt[re * d + re] = 1.0;
        jt[im * d + im] = 1.0;
    }
    LineFlowJacobian { dim: d, wrt_current: jc, wrt_v_from: jf, wrt_v_to: jt }
}

/// Currents leaving each end bus into the branch: `(from_end, to_end)`.
///
/// The from end carries `I/t`; the to end carries `−(I − j½B·Vi) + j½B·Vj`,
/// so the two differ by the shunt charging drawn at both ends.
pub fn branch_end_currents(br: &Branch, v_from: &[f64], v_to: &[f64], current: &[f64]) -> Result<(Vec<f64>, Vec<f64>), KernelError> {
    let n = check_dims(br, &[v_from, v_to, current])?;
    let mut from_end = vec![0.0; 2 * n];
    let mut to_end = vec![0.0; 2 * n];
    for p in 0..n {
        from_end[2 * p] = current[2 * p] / br.ratio;
        from_end[2 * p + 1] = current[2 * p + 1] / br.ratio;
        let (mut sr, mut si) = (0.0, 0.0);
        for k in 0..n {
            let b = br.b.get(p, k);
            sr += b * (v_from[2 * k] + v_to[2 * k]);
            si += b * (v_from[2 * k + 1] + v_to[2 * k + 1]);
        }
        // j·½B·(Vi + Vj) = (−½ B·Σim, ½ B·Σre)
        to_end[2 * p] = -current[2 * p] - 0.5 * si;
        to_end[2 * p + 1] = -current[2 * p + 1] + 0.5 * sr;
    }
    Ok((from_end, to_end))
}

/// Injected current minus the sum of branch-end currents leaving the bus,
/// for the bus-phase `bp`.
pub fn injection_residual(net: &NetworkModel, layout: &IvLayout, x: &[f64], bp: usize) -> (f64, f64) {
    let (bus, phase) = layout.bus_phase_of(bp);
    let (mut re, mut im) = layout.injection(x, bp);
    for &(k, is_from) in layout.incident(bus) {
        let br = &net.per_unit().branches[k];
        let Some(pos) = br.phases.position(phase) else { continue };
        let v = layout.gather_branch(net, k, x);
        let (fe, te) = branch_end_currents(br, &v.v_from, &v.v_to, &v.current).expect("layout dims");
        let e = if is_from { fe } else { te };
        re -= e[2 * pos];
        im -= e[2 * pos + 1];
    }
    (re, im)
}

/// Per bus-phase terms of the power balance, in per unit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BalanceTerms {
    /// Substation output (only at the substation bus).
    pub p_gen: f64,
    pub q_gen: f64,
    /// Transformer no-load loss charged at this bus.
    pub p_no_load: f64,
    /// Unmetered load active power.
    pub p_unmetered: f64,
    /// Metered gross load.
    pub p_metered: f64,
    pub p_pv: f64,
    pub q_cap: f64,
    /// Reactive power of all loads.
    pub q_load: f64,
}

impl BalanceTerms {
    pub fn p_net(&self) -> f64 {
        self.p_gen - self.p_no_load - self.p_unmetered + self.p_pv - self.p_metered
    }

    pub fn q_net(&self) -> f64 {
        self.q_gen + self.q_cap - self.q_load
    }
}

/// Active and reactive power balance residuals at one bus-phase:
/// specified net injection minus `V·conj(I_inj)` split as
/// `P = Vr·Ir + Vi·Ii`, `Q = Vi·Ir − Vr·Ii`.
pub fn power_balance_residual(terms: &BalanceTerms, v: (f64, f64), inj: (f64, f64)) -> (f64, f64) {
    let (p, q) = bus_power(v, inj);
    (terms.p_net() - p, terms.q_net() - q)
}

#[inline]
pub fn bus_power(v: (f64, f64), i: (f64, f64)) -> (f64, f64) {
    (v.0 * i.0 + v.1 * i.1, v.1 * i.0 - v.0 * i.1)
}

/// Constant-capacitance reactive output `B·|V|²`.
#[inline]
pub fn capacitor_q(b: f64, v: (f64, f64)) -> f64 {
    b * (v.0 * v.0 + v.1 * v.1)
}

/// Residuals of all line-flow and injection rows (see [`IvLayout::n_linear_rows`]).
pub fn linear_residuals(net: &NetworkModel, layout: &IvLayout, x: &[f64], out: &mut [f64]) {
    let branches = &net.per_unit().branches;
    let mut inj = vec![0.0; 2 * layout.n_bus_phases()];
    for bp in 0..layout.n_bus_phases() {
        let (re, im) = layout.injection(x, bp);
        inj[2 * bp] = re;
        inj[2 * bp + 1] = im;
    }
    for (k, br) in branches.iter().enumerate() {
        let v = layout.gather_branch(net, k, x);
        let start = layout.branch_start[k];
        let n = br.phases.len();
        line_flow_into(br, &v.v_from, &v.v_to, &v.current, &mut out[2 * start..2 * (start + n)]);
        let (fe, te) = branch_end_currents(br, &v.v_from, &v.v_to, &v.current).expect("layout dims");
        for pos in 0..n {
            let bf = layout.branch_end_bp(net, k, br.from, pos);
            let bt = layout.branch_end_bp(net, k, br.to, pos);
            inj[2 * bf] -= fe[2 * pos];
            inj[2 * bf + 1] -= fe[2 * pos + 1];
            inj[2 * bt] -= te[2 * pos];
            inj[2 * bt + 1] -= te[2 * pos + 1];
        }
    }
    let off = 2 * layout.n_branch_phases();
    out[off..off + inj.len()].copy_from_slice(&inj);
}

/// Constant Jacobian of [`linear_residuals`], emitted with a row offset.
pub fn linear_jacobian(net: &NetworkModel, layout: &IvLayout, row0: usize, t: &mut Triplets) {
    let branches = &net.per_unit().branches;
    for (k, br) in branches.iter().enumerate() {
        let n = br.phases.len();
        let start = layout.branch_start[k];
        let jac = line_flow_jacobian(br);
        let d = jac.dim;
        let vf_col = |c: usize| {
            let bp = layout.branch_end_bp(net, k, br.from, c / 2);
            2 * bp + c % 2
        };
        let vt_col = |c: usize| {
            let bp = layout.branch_end_bp(net, k, br.to, c / 2);
            2 * bp + c % 2
        };
        let i_col = |c: usize| layout.i_re(start + c / 2) + c % 2;
        for r in 0..d {
            let row = row0 + 2 * start + r;
            for c in 0..d {
                let a = jac.wrt_current[r * d + c];
                if a != 0.0 {
                    t.push(row, i_col(c), a);
                }
                let a = jac.wrt_v_from[r * d + c];
                if a != 0.0 {
                    t.push(row, vf_col(c), a);
                }
                let a = jac.wrt_v_to[r * d + c];
                if a != 0.0 {
                    t.push(row, vt_col(c), a);
                }
            }
        }
        // injection rows: I_inj − Σ end currents
        for pos in 0..n {
            let bf = layout.branch_end_bp(net, k, br.from, pos);
            let bt = layout.branch_end_bp(net, k, br.to, pos);
            let (rf, rt) = (row0 + layout.injection_row(bf), row0 + layout.injection_row(bt));
            let kk = start + pos;
            t.push(rf, layout.i_re(kk), -1.0 / br.ratio);
            t.push(rf + 1, layout.i_im(kk), -1.0 / br.ratio);
            t.push(rt, layout.i_re(kk), 1.0);
            t.push(rt + 1, layout.i_im(kk), 1.0);
            // to-end charging: re −= −½ Σ B·(Vi+Vj).im, im −= ½ Σ B·(Vi+Vj).re
            for q in 0..n {
                let b = br.b.get(pos, q);
                if b == 0.0 {
                    continue;
                }
                let qf = layout.branch_end_bp(net, k, br.from, q);
                let qt = layout.branch_end_bp(net, k, br.to, q);
                for bus_bp in [qf, qt] {
                    t.push(rt, 2 * bus_bp + 1, 0.5 * b);
                    t.push(rt + 1, 2 * bus_bp, -0.5 * b);
                }
            }
        }
    }
    for bp in 0..layout.n_bus_phases() {
        let r = row0 + layout.injection_row(bp);
        t.push(r, layout.inj_re(bp), 1.0);
        t.push(r + 1, layout.inj_im(bp), 1.0);
    }
}

/// (P, Q) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerPair {
    pub p: f64,
    pub q: f64,
}

impl std::ops::AddAssign for PowerPair {
    fn add_assign(&mut self, o: Self) {
        self.p += o.p;
        self.q += o.q;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Source,
    Lines,
    Capacitors,
    Loads,
    Transformers,
    Pvs,
}

impl Category {
    pub const ALL: [Category; 6] =
        [Category::Source, Category::Lines, Category::Capacitors, Category::Loads, Category::Transformers, Category::Pvs];

    pub fn name(self) -> &'static str {
        match self {
            Category::Source => "source",
            Category::Lines => "lines",
            Category::Capacitors => "capacitors",
            Category::Loads => "loads",
            Category::Transformers => "transformers",
            Category::Pvs => "pvs",
        }
    }
}

/// Consumption-positive totals per element category; production (source,
/// PV, capacitor Q) is negative. A converged state sums to zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CategoryTotals {
    pub source: PowerPair,
    pub lines: PowerPair,
    pub capacitors: PowerPair,
    pub loads: PowerPair,
    pub transformers: PowerPair,
    pub pvs: PowerPair,
}

impl CategoryTotals {
    pub fn get(&self, c: Category) -> PowerPair {
        match c {
            Category::Source => self.source,
            Category::Lines => self.lines,
            Category::Capacitors => self.capacitors,
            Category::Loads => self.loads,
            Category::Transformers => self.transformers,
            Category::Pvs => self.pvs,
        }
    }

    /// Sum over all categories (conservation residual).
    pub fn imbalance(&self) -> PowerPair {
        let mut s = PowerPair::default();
        for c in Category::ALL {
            s += self.get(c);
        }
        s
    }
}

/// Load and PV operating point that accompanies an IV state.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    /// Per load, per phase (in the load's phase order) consumption.
    pub loads: Vec<Vec<PowerPair>>,
    /// Per PV, per phase active production.
    pub pvs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementPowers {
    /// Per branch, `S_sending − S_receiving` summed over phases (plus the
    /// no-load loss for transformers).
    pub branch_loss: Vec<PowerPair>,
    /// Per capacitor, reactive production summed over phases.
    pub capacitor_q: Vec<f64>,
    /// Per source-impedance phase, power delivered into the feeder head.
    pub source: Vec<PowerPair>,
    pub totals: CategoryTotals,
}

/// Element-by-element power accounting on a power-flow state.
pub fn element_powers(net: &NetworkModel, layout: &IvLayout, x: &[f64], inj: &Injections) -> ElementPowers {
    let pu = net.per_unit();
    let mut totals = CategoryTotals::default();
    let mut branch_loss = Vec::with_capacity(pu.branches.len());
    let mut source = Vec::new();
    for (k, br) in pu.branches.iter().enumerate() {
        let v = layout.gather_branch(net, k, x);
        let (fe, te) = branch_end_currents(br, &v.v_from, &v.v_to, &v.current).expect("layout dims");
        let mut loss = PowerPair::default();
        for p in 0..br.phases.len() {
            let (ps, qs) = bus_power((v.v_from[2 * p], v.v_from[2 * p + 1]), (fe[2 * p], fe[2 * p + 1]));
            // receiving end delivers −V·conj(to_end current)
            let (pr, qr) = bus_power((v.v_to[2 * p], v.v_to[2 * p + 1]), (te[2 * p], te[2 * p + 1]));
            loss += PowerPair { p: ps + pr, q: qs + qr };
            if br.kind == BranchKind::Source {
                source.push(PowerPair { p: -pr, q: -qr });
            }
        }
        if br.kind == BranchKind::Transformer {
            loss.p += br.no_load_loss * br.phases.len() as f64;
        }
        match br.kind {
            BranchKind::Source => {
                for s in &source {
                    totals.source.p -= s.p;
                    totals.source.q -= s.q;
                }
            }
            BranchKind::Line => totals.lines += loss,
            BranchKind::Transformer => totals.transformers += loss,
        }
        branch_loss.push(loss);
    }

    let mut cap_q = Vec::with_capacity(net.capacitors.len());
    for (c, cap) in net.capacitors.iter().enumerate() {
        let mut q = 0.0;
        for (pos, ph) in cap.phases.iter().enumerate() {
            let bp = layout.bus_phase(net, cap.bus, ph).unwrap();
            q += capacitor_q(pu.cap_b[c][pos], layout.voltage(x, bp));
        }
        totals.capacitors.q -= q;
        cap_q.push(q);
    }
    for l in &inj.loads {
        for pq in l {
            totals.loads += *pq;
        }
    }
    for pv in &inj.pvs {
        for p in pv {
            totals.pvs.p -= p;
        }
    }
    ElementPowers { branch_loss, capacitor_q: cap_q, source, totals }
}

/// Fixed per bus-phase injections implied by an operating point: specified
/// net P and Q (without capacitors) and the capacitor susceptance, which
/// contributes `B·|V|²`.
#[derive(Debug, Clone, Default)]
pub struct BusPhaseSpec {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub cap_b: Vec<f64>,
}

impl BusPhaseSpec {
    pub fn from_injections(net: &NetworkModel, layout: &IvLayout, inj: &Injections) -> Self {
        let n = layout.n_bus_phases();
        let mut spec = BusPhaseSpec { p: vec![0.0; n], q: vec![0.0; n], cap_b: vec![0.0; n] };
        for (l, load) in net.loads.iter().enumerate() {
            for (pos, ph) in load.phases.iter().enumerate() {
                let bp = layout.bus_phase(net, load.bus, ph).unwrap();
                spec.p[bp] -= inj.loads[l][pos].p;
                spec.q[bp] -= inj.loads[l][pos].q;
            }
        }
        for (k, pv) in net.pvs.iter().enumerate() {
            for (pos, ph) in pv.phases.iter().enumerate() {
                let bp = layout.bus_phase(net, pv.bus, ph).unwrap();
                spec.p[bp] += inj.pvs[k][pos];
            }
        }
        for br in &net.per_unit().branches {
            if br.kind == BranchKind::Transformer {
                for ph in br.phases.iter() {
                    let bp = layout.bus_phase(net, br.from, ph).unwrap();
                    spec.p[bp] -= br.no_load_loss;
                }
            }
        }
        for (c, cap) in net.capacitors.iter().enumerate() {
            for (pos, ph) in cap.phases.iter().enumerate() {
                let bp = layout.bus_phase(net, cap.bus, ph).unwrap();
                spec.cap_b[bp] += net.per_unit().cap_b[c][pos];
            }
        }
        spec
    }
}
