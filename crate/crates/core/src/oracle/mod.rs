//! Newton–Raphson unbalanced power flow on the rectangular IV equations.
//!
//! The unknowns are the full IV state (bus voltages, sending-end branch
//! currents and bus injection currents). The equations are the linear
//! line-flow and injection rows from [`crate::ivkernel`], constant-PQ power
//! balance rows at every bus-phase except the substation, and voltage-fixing
//! rows at the substation, where three independent single-phase sources sit
//! behind the source impedance.

mod profiles;

use std::collections::VecDeque;

use thiserror::Error;

use crate::ivkernel::{self, BusPhaseSpec, ElementPowers, Injections, IvLayout};
use crate::netmodel::{NetworkModel, Phase};
use crate::sparse::{min_degree_order, CscPattern, SparseLu, Triplets};

pub use profiles::{
    read_monitors, read_profiles, read_substation, write_monitors, write_profiles, write_substation, HourProfile, MonitorRecord,
    ProfileError, SubstationRecord,
};

/// Per-phase voltage of the ideal sources behind the source impedance,
/// indexed by [`Phase::index`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceSpec {
    pub v_mag: [f64; 3],
    pub angle_deg: [f64; 3],
}

impl SourceSpec {
    pub fn balanced(v_mag: f64) -> Self {
        Self { v_mag: [v_mag; 3], angle_deg: Phase::ALL.map(Phase::nominal_angle_deg) }
    }

    pub fn phasor(&self, phase: Phase) -> (f64, f64) {
        let k = phase.index();
        let a = self.angle_deg[k].to_radians();
        (self.v_mag[k] * a.cos(), self.v_mag[k] * a.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfOptions {
    /// Infinity-norm residual tolerance, per unit.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PowerFlowError {
    #[error("singular power-flow Jacobian at bus `{bus}` phase {phase}")]
    Singular { bus: String, phase: Phase },
    #[error("operating point does not match the network: {0}")]
    Input(String),
    #[error("hour {hour}: {source}")]
    Hour {
        hour: u32,
        #[source]
        source: Box<PowerFlowError>,
    },
}

#[derive(Debug, Clone)]
pub struct PowerFlowSolution {
    /// IV state in [`IvLayout`] order.
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: f64,
    pub powers: ElementPowers,
}

impl PowerFlowSolution {
    pub fn voltage(&self, layout: &IvLayout, bp: usize) -> (f64, f64) {
        layout.voltage(&self.x, bp)
    }

    pub fn v_mag(&self, layout: &IvLayout, bp: usize) -> f64 {
        let (re, im) = layout.voltage(&self.x, bp);
        re.hypot(im)
    }
}

/// Reusable power-flow engine for one network: the layout, the constant
/// linear Jacobian block and the fill-reducing order are built once and
/// shared by every snapshot.
#[derive(Debug, Clone)]
pub struct PowerFlow<'a> {
    net: &'a NetworkModel,
    layout: IvLayout,
    /// New row index of every original equation row.
    row_map: Vec<usize>,
    linear: Triplets,
    col_order: Vec<usize>,
}

/// Equation rows after the linear block: two per bus-phase (balance or,
/// at the substation, voltage fixing).
fn balance_row(layout: &IvLayout, bp: usize) -> usize {
    layout.n_linear_rows() + 2 * bp
}

impl<'a> PowerFlow<'a> {
    pub fn new(net: &'a NetworkModel) -> Self {
        let layout = IvLayout::new(net);
        let row_map = diagonal_matching(net, &layout);
        let mut linear = Triplets::default();
        ivkernel::linear_jacobian(net, &layout, 0, &mut linear);
        for r in linear.rows.iter_mut() {
            *r = row_map[*r];
        }
        let mut pf = Self { net, layout, row_map, linear, col_order: Vec::new() };
        let x = pf.layout.flat_start();
        let spec = BusPhaseSpec {
            p: vec![0.0; pf.layout.n_bus_phases()],
            q: vec![0.0; pf.layout.n_bus_phases()],
            cap_b: vec![0.0; pf.layout.n_bus_phases()],
        };
        let t = pf.jacobian(&x, &spec);
        let n = pf.layout.len();
        let pattern = CscPattern::new(n, n, &t.rows, &t.cols);
        pf.col_order = min_degree_order(pattern.matrix.symmetric_adjacency());
        pf
    }

    pub fn layout(&self) -> &IvLayout {
        &self.layout
    }

    pub fn network(&self) -> &NetworkModel {
        self.net
    }

    fn check(&self, inj: &Injections) -> Result<(), PowerFlowError> {
        if inj.loads.len() != self.net.loads.len() || inj.pvs.len() != self.net.pvs.len() {
            return Err(PowerFlowError::Input(format!(
                "expected {} loads and {} PVs, got {} and {}",
                self.net.loads.len(),
                self.net.pvs.len(),
                inj.loads.len(),
                inj.pvs.len()
            )));
        }
        for (l, load) in self.net.loads.iter().enumerate() {
            if inj.loads[l].len() != load.phases.len() {
                return Err(PowerFlowError::Input(format!("load `{}` needs one value per phase", load.id)));
            }
        }
        for (k, pv) in self.net.pvs.iter().enumerate() {
            if inj.pvs[k].len() != pv.phases.len() {
                return Err(PowerFlowError::Input(format!("PV `{}` needs one value per phase", pv.id)));
            }
        }
        Ok(())
    }

    /// Full residual vector in original row order.
    pub fn residuals(&self, x: &[f64], spec: &BusPhaseSpec, source: &SourceSpec, out: &mut [f64]) {
        let lay = &self.layout;
        ivkernel::linear_residuals(self.net, lay, x, &mut out[..lay.n_linear_rows()]);
        for bp in 0..lay.n_bus_phases() {
            let (bus, phase) = lay.bus_phase_of(bp);
            let r = balance_row(lay, bp);
            let v = lay.voltage(x, bp);
            if bus == self.net.substation {
                let s = source.phasor(phase);
                out[r] = v.0 - s.0;
                out[r + 1] = v.1 - s.1;
            } else {
                let i = lay.injection(x, bp);
                let (p, q) = ivkernel::bus_power(v, i);
                out[r] = spec.p[bp] - p;
                out[r + 1] = spec.q[bp] + ivkernel::capacitor_q(spec.cap_b[bp], v) - q;
            }
        }
    }

    /// Jacobian triplets in permuted row order. The sequence of entries is
    /// the same for every state, so one [`CscPattern`] serves all iterations.
    fn jacobian(&self, x: &[f64], spec: &BusPhaseSpec) -> Triplets {
        let lay = &self.layout;
        let mut t = Triplets::with_capacity(self.linear.len() + 8 * lay.n_bus_phases());
        t.rows.extend_from_slice(&self.linear.rows);
        t.cols.extend_from_slice(&self.linear.cols);
        t.vals.extend_from_slice(&self.linear.vals);
        for bp in 0..lay.n_bus_phases() {
            let (bus, _) = lay.bus_phase_of(bp);
            let rp = self.row_map[balance_row(lay, bp)];
            let rq = self.row_map[balance_row(lay, bp) + 1];
            let (vr, vi) = (lay.v_re(bp), lay.v_im(bp));
            if bus == self.net.substation {
                t.push(rp, vr, 1.0);
                t.push(rq, vi, 1.0);
                continue;
            }
            let (ir, ii) = (lay.inj_re(bp), lay.inj_im(bp));
            let (v_re, v_im) = lay.voltage(x, bp);
            let (i_re, i_im) = lay.injection(x, bp);
            let b2 = 2.0 * spec.cap_b[bp];
            // p = spec − (Vr Ir + Vi Ii)
            t.push(rp, vr, -i_re);
            t.push(rp, vi, -i_im);
            t.push(rp, ir, -v_re);
            t.push(rp, ii, -v_im);
            // q = spec + B|V|² − (Vi Ir − Vr Ii)
            t.push(rq, vr, b2 * v_re + i_im);
            t.push(rq, vi, b2 * v_im - i_re);
            t.push(rq, ir, -v_im);
            t.push(rq, ii, v_re);
        }
        t
    }

    /// Initial iterate: flat start with the substation at its source phasors.
    pub fn initial_state(&self, source: &SourceSpec) -> Vec<f64> {
        let mut x = self.layout.flat_start();
        for bp in self.layout.bus_phase_range(self.net.substation) {
            let (_, phase) = self.layout.bus_phase_of(bp);
            let (re, im) = source.phasor(phase);
            x[2 * bp] = re;
            x[2 * bp + 1] = im;
        }
        x
    }

    pub fn solve(&self, inj: &Injections, source: &SourceSpec, opts: &PfOptions) -> Result<PowerFlowSolution, PowerFlowError> {
        self.check(inj)?;
        let lay = &self.layout;
        let spec = BusPhaseSpec::from_injections(self.net, lay, inj);
        let n = lay.len();
        let mut x = self.initial_state(source);
        let mut f = vec![0.0; n];
        let mut pattern: Option<CscPattern> = None;
        let mut iterations = 0;
        let mut converged = false;
        let mut max_residual;

        loop {
            self.residuals(&x, &spec, source, &mut f);
            max_residual = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !max_residual.is_finite() {
                break;
            }
            if max_residual <= opts.tol {
                converged = true;
                break;
            }
            if iterations == opts.max_iter {
                break;
            }
            let t = self.jacobian(&x, &spec);
            let pat = pattern.get_or_insert_with(|| CscPattern::new(n, n, &t.rows, &t.cols));
            pat.fill(&t.vals);
            let lu = SparseLu::factor(&pat.matrix, &self.col_order, 0.1).map_err(|e| self.singular_at(e.column))?;
            let mut rhs = vec![0.0; n];
            for (r, v) in f.iter().enumerate() {
                rhs[self.row_map[r]] = -v;
            }
            let dx = lu.solve_refined(&pat.matrix, &rhs, 1);

            let mut alpha = 1.0;
            let mut trial = vec![0.0; n];
            for _ in 0..=10 {
                for k in 0..n {
                    trial[k] = x[k] + alpha * dx[k];
                }
                let v_min = (0..lay.n_bus_phases())
                    .map(|bp| {
                        let (re, im) = lay.voltage(&trial, bp);
                        re.hypot(im)
                    })
                    .fold(f64::INFINITY, f64::min);
                if v_min >= 0.4 {
                    break;
                }
                alpha *= 0.5;
            }
            std::mem::swap(&mut x, &mut trial);
            iterations += 1;
        }

        let powers = ivkernel::element_powers(self.net, lay, &x, inj);
        Ok(PowerFlowSolution { x, converged, iterations, max_residual, powers })
    }

    fn singular_at(&self, column: usize) -> PowerFlowError {
        let lay = &self.layout;
        let nbp = lay.n_bus_phases();
        let nbr = lay.n_branch_phases();
        let bp = if column < 2 * nbp {
            column / 2
        } else if column < 2 * nbp + 2 * nbr {
            let (k, phase) = lay.branch_phase_of((column - 2 * nbp) / 2);
            let from = self.net.per_unit().branches[k].from;
            lay.bus_phase(self.net, from, phase).unwrap()
        } else {
            (column - 2 * nbp - 2 * nbr) / 2
        };
        let (bus, phase) = lay.bus_phase_of(bp);
        PowerFlowError::Singular { bus: self.net.buses[bus].id.clone(), phase }
    }

    /// Monitor records at the feeder head (power entering from the source)
    /// and at every load bus (net power drawn), per phase.
    pub fn monitors(&self, sol: &PowerFlowSolution, hour: u32) -> Vec<MonitorRecord> {
        let lay = &self.layout;
        let net = self.net;
        let mut buses: Vec<usize> = vec![net.feeder_head];
        let mut load_buses: Vec<usize> = net.loads.iter().map(|l| l.bus).collect();
        load_buses.sort_unstable();
        load_buses.dedup();
        buses.extend(load_buses.into_iter().filter(|&b| b != net.feeder_head));

        let kw = 1000.0 * net.base_mva;
        let mut out = Vec::new();
        for bus in buses {
            for bp in lay.bus_phase_range(bus) {
                let (_, phase) = lay.bus_phase_of(bp);
                let (re, im) = lay.voltage(&sol.x, bp);
                let (p, q) = if bus == net.feeder_head {
                    let pos = net.lines[net.source_line].phases.position(phase);
                    pos.map(|k| (sol.powers.source[k].p, sol.powers.source[k].q)).unwrap_or((0.0, 0.0))
                } else {
                    let (p, q) = ivkernel::bus_power((re, im), lay.injection(&sol.x, bp));
                    (-p, -q)
                };
                out.push(MonitorRecord {
                    hour,
                    bus: net.buses[bus].id.clone(),
                    phase,
                    v_mag_pu: re.hypot(im),
                    v_ang_deg: im.atan2(re).to_degrees(),
                    p_kw: p * kw,
                    q_kvar: q * kw,
                });
            }
        }
        out
    }
}

/// One hour of operating point for [`solve_timeseries`].
#[derive(Debug, Clone, PartialEq)]
pub struct HourInput {
    pub hour: u32,
    pub injections: Injections,
    pub source: SourceSpec,
}

/// Independent snapshot solves for every hour; a failing hour does not
/// affect the others.
pub fn solve_timeseries(pf: &PowerFlow, hours: &[HourInput], opts: &PfOptions) -> Vec<Result<PowerFlowSolution, PowerFlowError>> {
    let run =
        |h: &HourInput| pf.solve(&h.injections, &h.source, opts).map_err(|e| PowerFlowError::Hour { hour: h.hour, source: Box::new(e) });
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        hours.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        hours.iter().map(run).collect()
    }
}

/// How the oracle sets source angles over a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleMode {
    /// Angles of one reference hour held for the whole day.
    Constant {
        reference_hour: u32,
    },
    PerHour,
}

/// Builds per-hour source specs from hourly magnitudes and estimated
/// substation records.
pub fn source_schedule(
    vmag: &[(u32, [f64; 3])],
    substation: &[SubstationRecord],
    mode: AngleMode,
) -> Result<Vec<(u32, SourceSpec)>, ProfileError> {
    let angles_at = |hour: u32| -> Result<[f64; 3], ProfileError> {
        let mut a = [f64::NAN; 3];
        for r in substation.iter().filter(|r| r.hour == hour) {
            a[r.phase.index()] = r.v_ang_deg;
        }
        if let Some(k) = a.iter().position(|v| v.is_nan()) {
            return Err(ProfileError::Missing { element: format!("substation phase {}", Phase::ALL[k]), hour });
        }
        Ok(a)
    };
    let mut out = Vec::with_capacity(vmag.len());
    for &(hour, v) in vmag {
        let angle_deg = match mode {
            AngleMode::Constant { reference_hour } => angles_at(reference_hour)?,
            AngleMode::PerHour => angles_at(hour)?,
        };
        out.push((hour, SourceSpec { v_mag: v, angle_deg }));
    }
    Ok(out)
}

/// The hour with the largest total substation active power.
pub fn peak_hour(substation: &[SubstationRecord]) -> Option<u32> {
    let mut totals: std::collections::BTreeMap<u32, f64> = Default::default();
    for r in substation {
        *totals.entry(r.hour).or_default() += r.p_kw;
    }
    totals.into_iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0))).map(|(h, _)| h)
}

/// Pairs every equation row with a state column so that the Jacobian has a
/// structurally nonzero, well-scaled diagonal, which lets the LU keep the
/// symmetric fill-reducing order. Returns the new index of each row.
///
/// On the BFS tree from the substation: the line-flow rows of a tree branch
/// go to the voltage of its child bus, the injection rows of a bus go to the
/// current of its parent branch, balance rows go to the injection current
/// and the substation fixing rows to the substation voltage. Line-flow rows
/// of loop-closing branches take their own current. Anything left over is
/// paired in index order.
fn diagonal_matching(net: &NetworkModel, lay: &IvLayout) -> Vec<usize> {
    let n = lay.len();
    let mut row_to_col = vec![usize::MAX; n];
    let mut col_used = vec![false; n];
    let mut assign = |row: usize, col: usize, row_to_col: &mut Vec<usize>| {
        if row_to_col[row] == usize::MAX && !col_used[col] {
            row_to_col[row] = col;
            col_used[col] = true;
        }
    };

    let branches = &net.per_unit().branches;
    let mut parent = vec![usize::MAX; net.buses.len()];
    let mut tree = vec![false; branches.len()];
    let mut seen = vec![false; net.buses.len()];
    seen[net.substation] = true;
    let mut queue = VecDeque::from([net.substation]);
    while let Some(b) = queue.pop_front() {
        for &(k, is_from) in lay.incident(b) {
            let other = if is_from { branches[k].to } else { branches[k].from };
            if !seen[other] {
                seen[other] = true;
                parent[other] = k;
                tree[k] = true;
                queue.push_back(other);
            }
        }
    }

    for (k, br) in branches.iter().enumerate() {
        let range = lay.branch_phase_range(k);
        for (pos, kk) in range.enumerate() {
            let lf = lay.line_flow_row(kk);
            if tree[k] {
                let child = if parent[br.to] == k { br.to } else { br.from };
                let bp = lay.branch_end_bp(net, k, child, pos);
                assign(lf, lay.v_re(bp), &mut row_to_col);
                assign(lf + 1, lay.v_im(bp), &mut row_to_col);
            } else {
                assign(lf, lay.i_re(kk), &mut row_to_col);
                assign(lf + 1, lay.i_im(kk), &mut row_to_col);
            }
        }
    }
    for bp in 0..lay.n_bus_phases() {
        let (bus, phase) = lay.bus_phase_of(bp);
        let inj = lay.injection_row(bp);
        let bal = balance_row(lay, bp);
        if bus == net.substation {
            assign(bal, lay.v_re(bp), &mut row_to_col);
            assign(bal + 1, lay.v_im(bp), &mut row_to_col);
            assign(inj, lay.inj_re(bp), &mut row_to_col);
            assign(inj + 1, lay.inj_im(bp), &mut row_to_col);
            continue;
        }
        assign(bal, lay.inj_re(bp), &mut row_to_col);
        assign(bal + 1, lay.inj_im(bp), &mut row_to_col);
        let k = parent[bus];
        if k != usize::MAX {
            if let Some(pos) = branches[k].phases.position(phase) {
                let kk = lay.branch_phase_range(k).start + pos;
                assign(inj, lay.i_re(kk), &mut row_to_col);
                assign(inj + 1, lay.i_im(kk), &mut row_to_col);
            }
        }
    }

    let mut free_cols = (0..n).filter(|&c| !col_used[c]);
    for c in row_to_col.iter_mut() {
        if *c == usize::MAX {
            *c = free_cols.next().expect("square system");
        }
    }
    row_to_col
}
