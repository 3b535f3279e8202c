use crate::ingest::HourMeasurements;
use crate::ivkernel::{Injections, IvLayout, PowerPair};
use crate::netmodel::{kw_to_pu, BranchKind, NetworkModel, Phase};
use crate::nlp::{IpmStatus, NlpProblem, WarmStart};
use crate::oracle::SourceSpec;
use crate::sparse::Triplets;

use super::bounds::{angle_bounds_deg, head_voltage_sq_bounds, pf_q_bounds, q_ratio, substation_vmag_bounds, NamedBound};
use super::{substation_record, EstimateError, EstimatorOptions, SnapshotSolution};

const INIT_UNMETERED_KW: f64 = 5.0;
const INIT_PF: f64 = 0.9;

#[derive(Debug, Clone)]
struct LoadPhase {
    load: usize,
    pos: usize,
    bp: usize,
    /// Metered gross load (pu) or the column of the unmetered P variable.
    p: LoadP,
    q_col: usize,
    k_min: f64,
    k_max: f64,
}

#[derive(Debug, Clone, Copy)]
enum LoadP {
    Metered(f64),
    Unmetered { col: usize, pf_row: usize },
}

#[derive(Debug, Clone)]
struct CapPhase {
    cap: usize,
    pos: usize,
    bp: usize,
    b: f64,
    col: usize,
}

#[derive(Debug, Clone)]
struct SourcePhase {
    phase: Phase,
    bp: usize,
    pg: usize,
    qg: usize,
    mag: usize,
    ang: usize,
}

#[derive(Debug, Clone)]
struct HeadPhase {
    phase: Phase,
    /// Feeder-head bus-phase slot.
    bp: usize,
    /// Source-branch phase slot (current column via the layout).
    branch_phase: usize,
    mag_row: usize,
}

/// One hourly estimation instance.
#[derive(Debug, Clone)]
pub struct SnapshotProblem<'a> {
    net: &'a NetworkModel,
    layout: &'a IvLayout,
    linear: &'a Triplets,
    hour: u32,
    opts: EstimatorOptions,

    n_vars: usize,
    n_rows: usize,
    loads: Vec<LoadPhase>,
    caps: Vec<CapPhase>,
    sources: Vec<SourcePhase>,
    heads: Vec<HeadPhase>,

    /// Fixed part of the active balance per bus-phase.
    p_const: Vec<f64>,
    pv: Vec<Vec<f64>>,
    /// (bus-phase slot, squared measured magnitude).
    v_meas: Vec<(usize, f64)>,
    p_head: f64,
    q_head: f64,
    v_head_a: f64,

    r_bal: usize,
    r_cap: usize,
    r_polar: usize,
    r_head: usize,
    r_angle_ref: Option<usize>,
    r_pf: usize,

    start: Option<Vec<f64>>,
}

impl<'a> SnapshotProblem<'a> {
    pub(super) fn new(
        net: &'a NetworkModel,
        layout: &'a IvLayout,
        linear: &'a Triplets,
        meas: &HourMeasurements,
        opts: &EstimatorOptions,
    ) -> Result<Self, EstimateError> {
        opts.validate()?;
        check_measurements(net, layout, meas)?;
        let mva = net.base_mva;
        let nbp = layout.n_bus_phases();
        let n_iv = layout.len();

        // columns
        let mut col = n_iv;
        let mut loads = Vec::new();
        for (l, load) in net.loads.iter().enumerate() {
            let pf_min = opts.pf_min.unwrap_or(load.pf_min);
            let pf_max = opts.pf_max.unwrap_or(load.pf_max).max(pf_min);
            for (pos, ph) in load.phases.iter().enumerate() {
                let bp = layout.bus_phase(net, load.bus, ph).expect("validated load phases");
                let p = match &meas.gross_load_kw[l] {
                    Some(d) => LoadP::Metered(kw_to_pu(d[pos], mva)),
                    None => {
                        let c = col;
                        col += 1;
                        LoadP::Unmetered { col: c, pf_row: 0 }
                    }
                };
                loads.push(LoadPhase { load: l, pos, bp, p, q_col: 0, k_min: q_ratio(pf_max), k_max: q_ratio(pf_min) });
            }
        }
        for lp in loads.iter_mut() {
            lp.q_col = col;
            col += 1;
        }
        let pu = net.per_unit();
        let mut caps = Vec::new();
        for (c, cap) in net.capacitors.iter().enumerate() {
            for (pos, ph) in cap.phases.iter().enumerate() {
                caps.push(CapPhase { cap: c, pos, bp: layout.bus_phase(net, cap.bus, ph).unwrap(), b: pu.cap_b[c][pos], col });
                col += 1;
            }
        }
        let mut sources = Vec::new();
        for bp in layout.bus_phase_range(net.substation) {
            let (_, phase) = layout.bus_phase_of(bp);
            sources.push(SourcePhase { phase, bp, pg: col, qg: col + 1, mag: col + 2, ang: col + 3 });
            col += 4;
        }
        let n_vars = col;

        // rows
        let r_bal = layout.n_linear_rows();
        let r_cap = r_bal + 2 * nbp;
        let r_polar = r_cap + caps.len();
        let r_head = r_polar + 2 * sources.len();
        let mut row = r_head + 2;
        let src_branch = pu.source_branch;
        let mut heads = Vec::new();
        for (pos, phase) in pu.branches[src_branch].phases.iter().enumerate() {
            heads.push(HeadPhase {
                phase,
                bp: layout.branch_end_bp(net, src_branch, net.feeder_head, pos),
                branch_phase: layout.branch_phase_range(src_branch).start + pos,
                mag_row: row,
            });
            row += 1;
        }
        let r_angle_ref = if sources.iter().any(|s| s.phase == Phase::A) {
            row += 1;
            Some(row - 1)
        } else {
            None
        };
        let r_pf = row;
        for lp in loads.iter_mut() {
            if let LoadP::Unmetered { pf_row, .. } = &mut lp.p {
                *pf_row = row;
                row += 2;
            }
        }
        let n_rows = row;

        // parameters
        let mut p_const = vec![0.0; nbp];
        for lp in &loads {
            if let LoadP::Metered(d) = lp.p {
                p_const[lp.bp] -= d;
            }
        }
        let mut pv = Vec::with_capacity(net.pvs.len());
        for (k, unit) in net.pvs.iter().enumerate() {
            let v: Vec<f64> = meas.pv_kw[k].iter().map(|&kw| kw_to_pu(kw, mva)).collect();
            for (pos, ph) in unit.phases.iter().enumerate() {
                let bp = layout.bus_phase(net, unit.bus, ph).unwrap();
                p_const[bp] += v[pos];
            }
            pv.push(v);
        }
        for br in &pu.branches {
            if br.kind == BranchKind::Transformer {
                for ph in br.phases.iter() {
                    let bp = layout.bus_phase(net, br.from, ph).unwrap();
                    p_const[bp] -= br.no_load_loss;
                }
            }
        }
        let v_meas = meas
            .voltages
            .iter()
            .map(|v| {
                let bp = layout.bus_phase(net, v.bus, v.phase).unwrap();
                (bp, v.v_mag_pu * v.v_mag_pu)
            })
            .collect();

        Ok(Self {
            net,
            layout,
            linear,
            hour: meas.hour,
            opts: opts.clone(),
            n_vars,
            n_rows,
            loads,
            caps,
            sources,
            heads,
            p_const,
            pv,
            v_meas,
            p_head: kw_to_pu(meas.feeder_head.p_total_kw, mva),
            q_head: kw_to_pu(meas.feeder_head.q_total_kvar, mva),
            v_head_a: meas.feeder_head.v_mag_phase_a_pu,
            r_bal,
            r_cap,
            r_polar,
            r_head,
            r_angle_ref,
            r_pf,
            start: None,
        })
    }

    pub fn hour(&self) -> u32 {
        self.hour
    }

    /// Number of unmetered load phases with an active-power variable.
    pub fn n_unmetered_phases(&self) -> usize {
        self.loads.iter().filter(|l| matches!(l.p, LoadP::Unmetered { .. })).count()
    }

    /// Replaces the default initial point.
    pub fn with_start(mut self, x: Vec<f64>) -> Self {
        assert_eq!(x.len(), self.n_vars, "start vector length");
        self.start = Some(x);
        self
    }

    pub(super) fn accepts_start(&self, x: &[f64], warm: &WarmStart) -> bool {
        x.len() == self.n_vars && warm.lambda.len() == self.n_rows
    }

    /// Every finite, non-network bound of the instance in physical units:
    /// feeder-head squared magnitudes, substation magnitudes and angles
    /// (degrees), load P (kW) and Q (kvar) ranges, and the power-factor
    /// ratios applied to unmetered loads.
    pub fn bounds_report(&self) -> Vec<NamedBound> {
        let net = self.net;
        let kw = 1000.0 * net.base_mva;
        let mut out = Vec::new();
        for h in &self.heads {
            let (lower, upper) = head_voltage_sq_bounds(self.v_head_a, self.opts.band_feeder_head, h.phase);
            out.push(NamedBound { name: format!("feeder_head.{} |V|^2", h.phase), lower, upper });
        }
        for s in &self.sources {
            let (lower, upper) = substation_vmag_bounds(self.v_head_a, self.opts.band_substation);
            out.push(NamedBound { name: format!("substation.{} |V|", s.phase), lower, upper });
            let (lower, upper) = angle_bounds_deg(s.phase, self.opts.band_angle_deg);
            out.push(NamedBound { name: format!("substation.{} angle_deg", s.phase), lower, upper });
        }
        for lp in &self.loads {
            let load = &net.loads[lp.load];
            let ph = load.phases.to_vec()[lp.pos];
            match lp.p {
                LoadP::Metered(d) => {
                    let (lo, hi) = pf_q_bounds(d, self.pf_min_of(lp), self.pf_max_of(lp));
                    out.push(NamedBound { name: format!("load {}.{} q_kvar", load.id, ph), lower: lo * kw, upper: hi * kw });
                }
                LoadP::Unmetered { .. } => {
                    out.push(NamedBound { name: format!("load {}.{} p_kw", load.id, ph), lower: 0.0, upper: self.opts.p_cap_kw });
                    out.push(NamedBound { name: format!("load {}.{} q/p", load.id, ph), lower: lp.k_min, upper: lp.k_max });
                }
            }
        }
        out
    }

    fn pf_min_of(&self, lp: &LoadPhase) -> f64 {
        self.opts.pf_min.unwrap_or(self.net.loads[lp.load].pf_min)
    }

    fn pf_max_of(&self, lp: &LoadPhase) -> f64 {
        self.opts.pf_max.unwrap_or(self.net.loads[lp.load].pf_max).max(self.pf_min_of(lp))
    }

    fn source_current(&self, h: &HeadPhase) -> (usize, usize) {
        (self.layout.i_re(h.branch_phase), self.layout.i_im(h.branch_phase))
    }

    /// Jacobian entries in a value-independent order.
    fn jacobian_entries(&self, x: &[f64], mut emit: impl FnMut(usize, usize, f64)) {
        let lay = self.layout;
        for k in 0..self.linear.len() {
            emit(self.linear.rows[k], self.linear.cols[k], self.linear.vals[k]);
        }
        for bp in 0..lay.n_bus_phases() {
            let (rp, rq) = (self.r_bal + 2 * bp, self.r_bal + 2 * bp + 1);
            let (cvr, cvi, cir, cii) = (lay.v_re(bp), lay.v_im(bp), lay.inj_re(bp), lay.inj_im(bp));
            let (vr, vi) = (x[cvr], x[cvi]);
            let (ir, ii) = (x[cir], x[cii]);
            emit(rp, cvr, -ir);
            emit(rp, cvi, -ii);
            emit(rp, cir, -vr);
            emit(rp, cii, -vi);
            emit(rq, cvr, ii);
            emit(rq, cvi, -ir);
            emit(rq, cir, -vi);
            emit(rq, cii, vr);
        }
        for lp in &self.loads {
            let (rp, rq) = (self.r_bal + 2 * lp.bp, self.r_bal + 2 * lp.bp + 1);
            if let LoadP::Unmetered { col, pf_row } = lp.p {
                emit(rp, col, -1.0);
                emit(pf_row, lp.q_col, 1.0);
                emit(pf_row, col, -lp.k_min);
                emit(pf_row + 1, lp.q_col, 1.0);
                emit(pf_row + 1, col, -lp.k_max);
            }
            emit(rq, lp.q_col, -1.0);
        }
        for (j, c) in self.caps.iter().enumerate() {
            let r = self.r_cap + j;
            emit(self.r_bal + 2 * c.bp + 1, c.col, 1.0);
            emit(r, c.col, 1.0);
            emit(r, lay.v_re(c.bp), -2.0 * c.b * x[lay.v_re(c.bp)]);
            emit(r, lay.v_im(c.bp), -2.0 * c.b * x[lay.v_im(c.bp)]);
        }
        for (s, src) in self.sources.iter().enumerate() {
            emit(self.r_bal + 2 * src.bp, src.pg, 1.0);
            emit(self.r_bal + 2 * src.bp + 1, src.qg, 1.0);
            let (m, th) = (x[src.mag], x[src.ang]);
            let (sin, cos) = th.sin_cos();
            let r = self.r_polar + 2 * s;
            emit(r, lay.v_re(src.bp), 1.0);
            emit(r, src.mag, -cos);
            emit(r, src.ang, m * sin);
            emit(r + 1, lay.v_im(src.bp), 1.0);
            emit(r + 1, src.mag, -sin);
            emit(r + 1, src.ang, -m * cos);
            if src.phase == Phase::A {
                if let Some(ra) = self.r_angle_ref {
                    emit(ra, src.ang, 1.0);
                }
            }
        }
        for h in &self.heads {
            let (cvr, cvi) = (lay.v_re(h.bp), lay.v_im(h.bp));
            let (cir, cii) = self.source_current(h);
            let (vr, vi, ir, ii) = (x[cvr], x[cvi], x[cir], x[cii]);
            let (rp, rq) = (self.r_head, self.r_head + 1);
            emit(rp, cvr, ir);
            emit(rp, cvi, ii);
            emit(rp, cir, vr);
            emit(rp, cii, vi);
            emit(rq, cvr, -ii);
            emit(rq, cvi, ir);
            emit(rq, cir, vi);
            emit(rq, cii, -vr);
            emit(h.mag_row, cvr, 2.0 * vr);
            emit(h.mag_row, cvi, 2.0 * vi);
        }
    }

    /// Lower-triangle Hessian entries in a value-independent order.
    fn hessian_entries(&self, x: &[f64], sigma: f64, lambda: &[f64], mut emit: impl FnMut(usize, usize, f64)) {
        let lay = self.layout;
        for &(bp, target) in &self.v_meas {
            let (cvr, cvi) = (lay.v_re(bp), lay.v_im(bp));
            let (vr, vi) = (x[cvr], x[cvi]);
            let r = vr * vr + vi * vi - target;
            emit(cvr, cvr, sigma * (4.0 * r + 8.0 * vr * vr));
            emit(cvi, cvr, sigma * 8.0 * vr * vi);
            emit(cvi, cvi, sigma * (4.0 * r + 8.0 * vi * vi));
        }
        for bp in 0..lay.n_bus_phases() {
            let (lp, lq) = (lambda[self.r_bal + 2 * bp], lambda[self.r_bal + 2 * bp + 1]);
            let (cvr, cvi, cir, cii) = (lay.v_re(bp), lay.v_im(bp), lay.inj_re(bp), lay.inj_im(bp));
            emit(cir, cvr, -lp);
            emit(cii, cvi, -lp);
            emit(cir, cvi, -lq);
            emit(cii, cvr, lq);
        }
        for (j, c) in self.caps.iter().enumerate() {
            let l = lambda[self.r_cap + j];
            emit(lay.v_re(c.bp), lay.v_re(c.bp), -2.0 * c.b * l);
            emit(lay.v_im(c.bp), lay.v_im(c.bp), -2.0 * c.b * l);
        }
        for (s, src) in self.sources.iter().enumerate() {
            let (l1, l2) = (lambda[self.r_polar + 2 * s], lambda[self.r_polar + 2 * s + 1]);
            let (m, th) = (x[src.mag], x[src.ang]);
            let (sin, cos) = th.sin_cos();
            emit(src.ang, src.mag, l1 * sin - l2 * cos);
            emit(src.ang, src.ang, l1 * m * cos + l2 * m * sin);
        }
        let (lhp, lhq) = (lambda[self.r_head], lambda[self.r_head + 1]);
        for h in &self.heads {
            let (cvr, cvi) = (lay.v_re(h.bp), lay.v_im(h.bp));
            let (cir, cii) = self.source_current(h);
            emit(cir, cvr, lhp);
            emit(cii, cvi, lhp);
            emit(cir, cvi, lhq);
            emit(cii, cvr, -lhq);
            let l = lambda[h.mag_row];
            emit(cvr, cvr, 2.0 * l);
            emit(cvi, cvi, 2.0 * l);
        }
    }

    fn default_start(&self, x: &mut [f64]) {
        let lay = self.layout;
        let mva = self.net.base_mva;
        let iv = lay.flat_start();
        x[..iv.len()].copy_from_slice(&iv);
        let ratio = q_ratio(INIT_PF);
        for lp in &self.loads {
            let p = match lp.p {
                LoadP::Metered(d) => d,
                LoadP::Unmetered { col, .. } => {
                    let p = kw_to_pu(INIT_UNMETERED_KW.min(self.opts.p_cap_kw), mva);
                    x[col] = p;
                    p
                }
            };
            x[lp.q_col] = p * ratio;
        }
        for c in &self.caps {
            x[c.col] = c.b;
        }
        let n_src = self.sources.len().max(1) as f64;
        for src in &self.sources {
            let th = src.phase.nominal_angle_deg().to_radians();
            x[src.pg] = self.p_head / n_src;
            x[src.qg] = self.q_head / n_src;
            x[src.mag] = self.v_head_a;
            x[src.ang] = th;
            x[lay.v_re(src.bp)] = self.v_head_a * th.cos();
            x[lay.v_im(src.bp)] = self.v_head_a * th.sin();
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(super) fn solution(
        &self,
        x: Vec<f64>,
        status: IpmStatus,
        objective: f64,
        kkt_residual: f64,
        _primal: f64,
        iterations: usize,
        worst_constraint: Option<String>,
        warm: WarmStart,
    ) -> SnapshotSolution {
        let net = self.net;
        let lay = self.layout;
        let mut loads: Vec<Vec<PowerPair>> = net.loads.iter().map(|l| vec![PowerPair::default(); l.phases.len()]).collect();
        for lp in &self.loads {
            let p = match lp.p {
                LoadP::Metered(d) => d,
                LoadP::Unmetered { col, .. } => x[col],
            };
            loads[lp.load][lp.pos] = PowerPair { p, q: x[lp.q_col] };
        }
        let mut capacitor_q: Vec<Vec<f64>> = net.capacitors.iter().map(|c| vec![0.0; c.phases.len()]).collect();
        for c in &self.caps {
            capacitor_q[c.cap][c.pos] = x[c.col];
        }
        let mut source = SourceSpec::balanced(self.v_head_a);
        let mut substation = Vec::new();
        for src in &self.sources {
            let k = src.phase.index();
            source.v_mag[k] = x[src.mag];
            source.angle_deg[k] = x[src.ang].to_degrees();
            substation.push(substation_record(
                self.hour,
                src.phase,
                lay.voltage(&x, src.bp),
                PowerPair { p: x[src.pg], q: x[src.qg] },
                net.base_mva,
            ));
        }

        let mut g = vec![0.0; self.n_rows];
        self.constraints(&x, &mut g);
        let (mut lo, mut hi) = (vec![0.0; self.n_rows], vec![0.0; self.n_rows]);
        self.constraint_bounds(&mut lo, &mut hi);
        let mut viol: f64 = 0.0;
        for i in 0..self.n_rows {
            viol = viol.max(lo[i] - g[i]).max(g[i] - hi[i]);
        }
        let head_residual = PowerPair { p: g[self.r_head] - self.p_head, q: g[self.r_head + 1] - self.q_head };

        SnapshotSolution {
            hour: self.hour,
            status,
            iv: x[..lay.len()].to_vec(),
            injections: Injections { loads, pvs: self.pv.clone() },
            capacitor_q,
            substation,
            source,
            objective,
            kkt_residual,
            constraint_residual_inf: viol,
            head_residual,
            iterations,
            worst_constraint,
            x,
            warm,
        }
    }
}

fn check_measurements(net: &NetworkModel, layout: &IvLayout, meas: &HourMeasurements) -> Result<(), EstimateError> {
    let bad = |m: String| Err(EstimateError::Input(m));
    if meas.gross_load_kw.len() != net.loads.len() {
        return bad(format!("{} load entries for {} loads", meas.gross_load_kw.len(), net.loads.len()));
    }
    for (l, g) in meas.gross_load_kw.iter().enumerate() {
        if let Some(g) = g {
            if g.len() != net.loads[l].phases.len() || g.iter().any(|v| !v.is_finite()) {
                return bad(format!("load `{}` needs one finite value per phase", net.loads[l].id));
            }
        }
    }
    if meas.pv_kw.len() != net.pvs.len() {
        return bad(format!("{} PV entries for {} PV units", meas.pv_kw.len(), net.pvs.len()));
    }
    for (k, v) in meas.pv_kw.iter().enumerate() {
        if v.len() != net.pvs[k].phases.len() || v.iter().any(|p| !p.is_finite()) {
            return bad(format!("PV `{}` needs one finite value per phase", net.pvs[k].id));
        }
    }
    for v in &meas.voltages {
        if v.bus >= net.buses.len() || layout.bus_phase(net, v.bus, v.phase).is_none() {
            return bad(format!("voltage reading at bus index {} phase {} does not exist", v.bus, v.phase));
        }
    }
    let fh = &meas.feeder_head;
    if !(fh.v_mag_phase_a_pu > 0.0) || !fh.p_total_kw.is_finite() || !fh.q_total_kvar.is_finite() {
        return bad(format!("feeder-head record of hour {} is not usable", fh.hour));
    }
    if !net.buses[net.feeder_head].phases.contains(Phase::A) {
        return bad("the feeder head carries no phase a".into());
    }
    Ok(())
}

impl NlpProblem for SnapshotProblem<'_> {
    fn num_vars(&self) -> usize {
        self.n_vars
    }

    fn num_constraints(&self) -> usize {
        self.n_rows
    }

    fn var_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.fill(f64::NEG_INFINITY);
        upper.fill(f64::INFINITY);
        let mva = self.net.base_mva;
        for lp in &self.loads {
            match lp.p {
                LoadP::Metered(d) => {
                    let (lo, hi) = pf_q_bounds(d, self.pf_min_of(lp), self.pf_max_of(lp));
                    lower[lp.q_col] = lo;
                    upper[lp.q_col] = hi;
                }
                LoadP::Unmetered { col, .. } => {
                    lower[col] = 0.0;
                    upper[col] = kw_to_pu(self.opts.p_cap_kw, mva);
                }
            }
        }
        let (mlo, mhi) = substation_vmag_bounds(self.v_head_a, self.opts.band_substation);
        for src in &self.sources {
            lower[src.mag] = mlo;
            upper[src.mag] = mhi;
            let (alo, ahi) = angle_bounds_deg(src.phase, self.opts.band_angle_deg);
            lower[src.ang] = alo.to_radians();
            upper[src.ang] = ahi.to_radians();
        }
    }

    fn constraint_bounds(&self, lower: &mut [f64], upper: &mut [f64]) {
        lower.fill(0.0);
        upper.fill(0.0);
        lower[self.r_head] = self.p_head;
        upper[self.r_head] = self.p_head;
        lower[self.r_head + 1] = self.q_head;
        upper[self.r_head + 1] = self.q_head;
        for h in &self.heads {
            let (lo, hi) = head_voltage_sq_bounds(self.v_head_a, self.opts.band_feeder_head, h.phase);
            lower[h.mag_row] = lo;
            upper[h.mag_row] = hi;
        }
        for lp in &self.loads {
            if let LoadP::Unmetered { pf_row, .. } = lp.p {
                upper[pf_row] = f64::INFINITY;
                lower[pf_row + 1] = f64::NEG_INFINITY;
            }
        }
    }

    fn initial_point(&self, x: &mut [f64]) {
        match &self.start {
            Some(s) => x.copy_from_slice(s),
            None => self.default_start(x),
        }
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.v_meas
            .iter()
            .map(|&(bp, target)| {
                let (vr, vi) = self.layout.voltage(x, bp);
                let r = vr * vr + vi * vi - target;
                r * r
            })
            .sum()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        for &(bp, target) in &self.v_meas {
            let (vr, vi) = self.layout.voltage(x, bp);
            let r = vr * vr + vi * vi - target;
            grad[self.layout.v_re(bp)] += 4.0 * r * vr;
            grad[self.layout.v_im(bp)] += 4.0 * r * vi;
        }
    }

    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        let lay = self.layout;
        crate::ivkernel::linear_residuals(self.net, lay, x, &mut g[..lay.n_linear_rows()]);
        for bp in 0..lay.n_bus_phases() {
            let (p, q) = crate::ivkernel::bus_power(lay.voltage(x, bp), lay.injection(x, bp));
            g[self.r_bal + 2 * bp] = self.p_const[bp] - p;
            g[self.r_bal + 2 * bp + 1] = -q;
        }
        for lp in &self.loads {
            if let LoadP::Unmetered { col, pf_row } = lp.p {
                g[self.r_bal + 2 * lp.bp] -= x[col];
                g[pf_row] = x[lp.q_col] - lp.k_min * x[col];
                g[pf_row + 1] = x[lp.q_col] - lp.k_max * x[col];
            }
            g[self.r_bal + 2 * lp.bp + 1] -= x[lp.q_col];
        }
        for (j, c) in self.caps.iter().enumerate() {
            g[self.r_bal + 2 * c.bp + 1] += x[c.col];
            g[self.r_cap + j] = x[c.col] - crate::ivkernel::capacitor_q(c.b, lay.voltage(x, c.bp));
        }
        for (s, src) in self.sources.iter().enumerate() {
            g[self.r_bal + 2 * src.bp] += x[src.pg];
            g[self.r_bal + 2 * src.bp + 1] += x[src.qg];
            let (vr, vi) = lay.voltage(x, src.bp);
            let (sin, cos) = x[src.ang].sin_cos();
            g[self.r_polar + 2 * s] = vr - x[src.mag] * cos;
            g[self.r_polar + 2 * s + 1] = vi - x[src.mag] * sin;
            if src.phase == Phase::A {
                if let Some(ra) = self.r_angle_ref {
                    g[ra] = x[src.ang];
                }
            }
        }
        let (mut ph, mut qh) = (0.0, 0.0);
        for h in &self.heads {
            let v = lay.voltage(x, h.bp);
            let (cir, cii) = self.source_current(h);
            let (p, q) = crate::ivkernel::bus_power(v, (x[cir], x[cii]));
            ph += p;
            qh += q;
            g[h.mag_row] = v.0 * v.0 + v.1 * v.1;
        }
        g[self.r_head] = ph;
        g[self.r_head + 1] = qh;
    }

    fn jacobian_structure(&self) -> (Vec<usize>, Vec<usize>) {
        let x = vec![0.0; self.n_vars];
        let (mut r, mut c) = (Vec::new(), Vec::new());
        self.jacobian_entries(&x, |i, j, _| {
            r.push(i);
            c.push(j);
        });
        (r, c)
    }

    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.jacobian_entries(x, |_, _, v| {
            vals[k] = v;
            k += 1;
        });
    }

    fn hessian_structure(&self) -> (Vec<usize>, Vec<usize>) {
        let x = vec![0.0; self.n_vars];
        let lambda = vec![0.0; self.n_rows];
        let (mut r, mut c) = (Vec::new(), Vec::new());
        self.hessian_entries(&x, 1.0, &lambda, |i, j, _| {
            r.push(i);
            c.push(j);
        });
        (r, c)
    }

    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        let mut k = 0;
        self.hessian_entries(x, obj_factor, lambda, |_, _, v| {
            vals[k] = v;
            k += 1;
        });
    }

    fn constraint_name(&self, row: usize) -> String {
        let net = self.net;
        let lay = self.layout;
        let bus_phase = |bp: usize| {
            let (b, ph) = lay.bus_phase_of(bp);
            format!("{}.{}", net.buses[b].id, ph)
        };
        if row < 2 * lay.n_branch_phases() {
            let (k, ph) = lay.branch_phase_of(row / 2);
            return format!("line flow {}.{}", net.per_unit().branches[k].id, ph);
        }
        if row < self.r_bal {
            return format!("current injection {}", bus_phase((row - 2 * lay.n_branch_phases()) / 2));
        }
        if row < self.r_cap {
            let kind = if (row - self.r_bal).is_multiple_of(2) { "active" } else { "reactive" };
            return format!("{kind} power balance {}", bus_phase((row - self.r_bal) / 2));
        }
        if row < self.r_polar {
            let c = &self.caps[row - self.r_cap];
            return format!("capacitor {} output", net.capacitors[c.cap].id);
        }
        if row < self.r_head {
            return format!("substation source {}", self.sources[(row - self.r_polar) / 2].phase);
        }
        if row == self.r_head {
            return "feeder-head active power total".into();
        }
        if row == self.r_head + 1 {
            return "feeder-head reactive power total".into();
        }
        if let Some(h) = self.heads.iter().find(|h| h.mag_row == row) {
            return format!("feeder-head voltage magnitude phase {}", h.phase);
        }
        if Some(row) == self.r_angle_ref {
            return "substation phase-a angle reference".into();
        }
        if row >= self.r_pf {
            if let Some(lp) =
                self.loads.iter().find(|lp| matches!(lp.p, LoadP::Unmetered { pf_row, .. } if row == pf_row || row == pf_row + 1))
            {
                return format!("power factor limit of load {}", net.loads[lp.load].id);
            }
        }
        format!("constraint {row}")
    }
}
