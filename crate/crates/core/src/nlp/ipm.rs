use log::debug;

use super::NlpProblem;
use crate::sparse::{min_degree_order, paired_min_degree_order, weighted_matching, CscPattern, SparseLu};

#[derive(Debug, Clone, PartialEq)]
pub struct IpmOptions {
    /// Stationarity tolerance, unscaled.
    pub tol_kkt: f64,
    /// Complementarity tolerance (largest slack·multiplier product).
    pub tol_compl: f64,
    /// Constraint violation tolerance (infinity norm).
    pub tol_feas: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Relative distance an initial point is moved inside its bounds.
    pub bound_push: f64,
    /// Relative relaxation applied to every finite bound.
    pub bound_relax: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self { tol_kkt: 1e-6, tol_compl: 1e-6, tol_feas: 1e-6, max_iter: 200, mu_init: 0.1, bound_push: 1e-2, bound_relax: 1e-8 }
    }
}

/// Multipliers and barrier parameter carried over from a related solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub lambda: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpmStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Infinity norm of the constraint violation.
    pub primal_inf: f64,
    /// Infinity norm of the Lagrangian gradient.
    pub dual_inf: f64,
    pub compl_inf: f64,
    pub mu: f64,
    /// Row with the largest violation when the solve did not succeed.
    pub worst_constraint: Option<usize>,
}

impl IpmResult {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart { lambda: self.lambda.clone(), z_lower: self.z_lower.clone(), z_upper: self.z_upper.clone(), mu: self.mu }
    }
}

// Filter line search and barrier update constants (Wächter & Biegler).
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const TAU_MIN: f64 = 0.99;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const DELTA: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const ETA_PHI: f64 = 1e-8;
const GAMMA_ALPHA: f64 = 0.05;
const KAPPA_SOC: f64 = 0.99;
const MAX_SOC: usize = 4;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const CURVATURE_KAPPA: f64 = 1e-10;
const PIVOT_TOL: f64 = 0.01;

struct Kkt {
    pattern: CscPattern,
    order: Vec<usize>,
    /// preferred pivot row of each elimination step
    pivot_rows: Vec<usize>,
    vals: Vec<f64>,
}

struct Solver<'a, P: NlpProblem + ?Sized> {
    prob: &'a P,
    n: usize,
    m: usize,
    /// total primal size: x then one slack per inequality row
    nw: usize,
    ineq: Vec<usize>,
    /// slack slot of each row, usize::MAX for equalities
    slack_of: Vec<usize>,
    g_lo: Vec<f64>,
    w_lo: Vec<f64>,
    w_hi: Vec<f64>,
    jac_rows: Vec<usize>,
    jac_cols: Vec<usize>,
    hess_rows: Vec<usize>,
    hess_cols: Vec<usize>,
    kkt: Kkt,
    delta_w_last: f64,
}

/// Point data shared by the iteration.
#[derive(Clone)]
struct Point {
    w: Vec<f64>,
    f: f64,
    grad: Vec<f64>,
    jac: Vec<f64>,
    /// h = g(x) − g_L (equality) or g(x) − s (inequality)
    h: Vec<f64>,
}

impl<'a, P: NlpProblem + ?Sized> Solver<'a, P> {
    fn new(prob: &'a P, opts: &'a IpmOptions) -> Self {
        let n = prob.num_vars();
        let m = prob.num_constraints();
        let mut x_lo = vec![f64::NEG_INFINITY; n];
        let mut x_hi = vec![f64::INFINITY; n];
        prob.var_bounds(&mut x_lo, &mut x_hi);
        let mut g_lo = vec![f64::NEG_INFINITY; m];
        let mut g_hi = vec![f64::INFINITY; m];
        prob.constraint_bounds(&mut g_lo, &mut g_hi);

        let mut ineq = Vec::new();
        let mut slack_of = vec![usize::MAX; m];
        for i in 0..m {
            if g_lo[i] != g_hi[i] {
                slack_of[i] = ineq.len();
                ineq.push(i);
            }
        }
        let nw = n + ineq.len();
        let relax = |v: f64, sign: f64| {
            if v.is_finite() {
                v + sign * opts.bound_relax * v.abs().max(1.0)
            } else {
                v
            }
        };
        let mut w_lo: Vec<f64> = x_lo.iter().map(|&v| relax(v, -1.0)).collect();
        let mut w_hi: Vec<f64> = x_hi.iter().map(|&v| relax(v, 1.0)).collect();
        for &i in &ineq {
            w_lo.push(relax(g_lo[i], -1.0));
            w_hi.push(relax(g_hi[i], 1.0));
        }

        let (jac_rows, jac_cols) = prob.jacobian_structure();
        let (hess_rows, hess_cols) = prob.hessian_structure();
        let kkt = Self::kkt_structure(n, m, nw, &ineq, &jac_rows, &jac_cols, &hess_rows, &hess_cols);
        Self { prob, n, m, nw, ineq, slack_of, g_lo, w_lo, w_hi, jac_rows, jac_cols, hess_rows, hess_cols, kkt, delta_w_last: 0.0 }
    }

    #[allow(clippy::too_many_arguments)]
    fn kkt_structure(n: usize, m: usize, nw: usize, ineq: &[usize], jr: &[usize], jc: &[usize], hr: &[usize], hc: &[usize]) -> Kkt {
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        for (&r, &c) in hr.iter().zip(hc) {
            rows.push(r);
            cols.push(c);
            if r != c {
                rows.push(c);
                cols.push(r);
            }
        }
        for k in 0..nw {
            rows.push(k);
            cols.push(k);
        }
        for (&r, &c) in jr.iter().zip(jc) {
            rows.push(nw + r);
            cols.push(c);
            rows.push(c);
            cols.push(nw + r);
        }
        for (j, &i) in ineq.iter().enumerate() {
            rows.push(nw + i);
            cols.push(n + j);
            rows.push(n + j);
            cols.push(nw + i);
        }
        for i in 0..m {
            rows.push(nw + i);
            cols.push(nw + i);
        }
        let dim = nw + m;
        let pattern = CscPattern::new(dim, dim, &rows, &cols);
        let order = min_degree_order(pattern.matrix.symmetric_adjacency());
        let nvals = rows.len();
        Kkt { pattern, pivot_rows: order.clone(), order, vals: vec![0.0; nvals] }
    }

    /// Pairs every constraint row with a primal variable of large Jacobian
    /// entry and orders the KKT matrix by blocks, so that rows with a zero
    /// diagonal pivot on their partner instead of wrecking the ordering.
    fn choose_pivots(&mut self, jac: &[f64]) {
        let mut entries: Vec<(usize, usize, f64)> =
            self.jac_rows.iter().zip(&self.jac_cols).zip(jac).map(|((&r, &c), &v)| (r, c, v)).collect();
        for (j, &i) in self.ineq.iter().enumerate() {
            entries.push((i, self.n + j, 1.0));
        }
        let matching = weighted_matching(self.m, self.nw, &entries, 1e-3);
        let pairs: Vec<(usize, usize)> = matching.iter().enumerate().filter_map(|(i, c)| c.map(|c| (c, self.nw + i))).collect();
        let (order, pivot_rows) = paired_min_degree_order(&self.kkt.pattern.matrix.symmetric_adjacency(), &pairs);
        self.kkt.order = order;
        self.kkt.pivot_rows = pivot_rows;
    }

    fn evaluate(&self, w: Vec<f64>) -> Option<Point> {
        let x = &w[..self.n];
        let f = self.prob.objective(x);
        let mut grad = vec![0.0; self.n];
        self.prob.gradient(x, &mut grad);
        let mut g = vec![0.0; self.m];
        self.prob.constraints(x, &mut g);
        let mut jac = vec![0.0; self.jac_rows.len()];
        self.prob.jacobian_values(x, &mut jac);
        let h = self.residual(&w, &g);
        let finite = f.is_finite() && grad.iter().chain(&g).chain(&jac).all(|v| v.is_finite());
        finite.then_some(Point { w, f, grad, jac, h })
    }

    /// Objective and constraint values only, for line-search trials.
    fn evaluate_trial(&self, w: &[f64]) -> Option<(f64, Vec<f64>)> {
        let x = &w[..self.n];
        let f = self.prob.objective(x);
        let mut g = vec![0.0; self.m];
        self.prob.constraints(x, &mut g);
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let h = self.residual(w, &g);
        Some((f, h))
    }

    fn residual(&self, w: &[f64], g: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| match self.slack_of[i] {
                usize::MAX => g[i] - self.g_lo[i],
                j => g[i] - w[self.n + j],
            })
            .collect()
    }

    fn barrier(&self, f: f64, w: &[f64], mu: f64) -> f64 {
        let mut phi = f;
        for k in 0..self.nw {
            if self.w_lo[k].is_finite() {
                phi -= mu * (w[k] - self.w_lo[k]).ln();
            }
            if self.w_hi[k].is_finite() {
                phi -= mu * (self.w_hi[k] - w[k]).ln();
            }
        }
        phi
    }

    /// ∇f + Jᵀλ over the full primal vector (slack columns carry −λ).
    fn lagrangian_gradient(&self, p: &Point, lambda: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.nw];
        r[..self.n].copy_from_slice(&p.grad);
        for (k, (&row, &col)) in self.jac_rows.iter().zip(&self.jac_cols).enumerate() {
            r[col] += p.jac[k] * lambda[row];
        }
        for (j, &i) in self.ineq.iter().enumerate() {
            r[self.n + j] -= lambda[i];
        }
        r
    }

    fn assemble(&mut self, hess: &[f64], p: &Point, sigma: &[f64], dw: f64, dc: f64) {
        let v = &mut self.kkt.vals;
        let mut t = 0;
        for (k, (&r, &c)) in self.hess_rows.iter().zip(&self.hess_cols).enumerate() {
            v[t] = hess[k];
            t += 1;
            if r != c {
                v[t] = hess[k];
                t += 1;
            }
        }
        for s in sigma {
            v[t] = s + dw;
            t += 1;
        }
        for &a in &p.jac {
            v[t] = a;
            v[t + 1] = a;
            t += 2;
        }
        for _ in &self.ineq {
            v[t] = -1.0;
            v[t + 1] = -1.0;
            t += 2;
        }
        for _ in 0..self.m {
            v[t] = -dc;
            t += 1;
        }
        self.kkt.pattern.fill(&self.kkt.vals);
    }

    fn factor(&self) -> Option<SparseLu> {
        SparseLu::factor_with_pivots(&self.kkt.pattern.matrix, &self.kkt.order, &self.kkt.pivot_rows, PIVOT_TOL).ok()
    }

    fn kkt_solve(&self, lu: &SparseLu, rhs: &[f64]) -> Vec<f64> {
        lu.solve_refined(&self.kkt.pattern.matrix, rhs, 2)
    }

    /// tᵀ (H + Σ + δ_w I) t
    fn curvature(&self, hess: &[f64], sigma: &[f64], dw: f64, t: &[f64]) -> f64 {
        let mut c = 0.0;
        for (k, (&r, &col)) in self.hess_rows.iter().zip(&self.hess_cols).enumerate() {
            let v = hess[k] * t[r] * t[col];
            c += if r == col { v } else { 2.0 * v };
        }
        for k in 0..self.nw {
            c += (sigma[k] + dw) * t[k] * t[k];
        }
        c
    }

    fn fraction_to_boundary(&self, w: &[f64], d: &[f64], tau: f64) -> f64 {
        let mut alpha: f64 = 1.0;
        for k in 0..self.nw {
            if d[k] < 0.0 && self.w_lo[k].is_finite() {
                alpha = alpha.min(tau * (self.w_lo[k] - w[k]) / d[k]);
            }
            if d[k] > 0.0 && self.w_hi[k].is_finite() {
                alpha = alpha.min(tau * (self.w_hi[k] - w[k]) / d[k]);
            }
        }
        alpha.max(0.0)
    }

    fn push_inside(&self, w: &mut [f64], range: std::ops::Range<usize>, push: f64) {
        for k in range {
            let (lo, hi) = (self.w_lo[k], self.w_hi[k]);
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => {
                    let pl = (push * lo.abs().max(1.0)).min(push * (hi - lo));
                    let pu = (push * hi.abs().max(1.0)).min(push * (hi - lo));
                    w[k] = w[k].clamp(lo + pl, hi - pu);
                }
                (true, false) => w[k] = w[k].max(lo + push * lo.abs().max(1.0)),
                (false, true) => w[k] = w[k].min(hi - push * hi.abs().max(1.0)),
                (false, false) => {}
            }
        }
    }

    /// Least-squares multipliers: min ‖∇f − z_L + z_U + Jᵀλ‖.
    fn least_squares_lambda(&mut self, p: &Point, z_lo: &[f64], z_hi: &[f64]) -> Vec<f64> {
        let hess0 = vec![0.0; self.hess_rows.len()];
        let ones = vec![1.0; self.nw];
        self.assemble(&hess0, p, &ones, 0.0, 0.0);
        let Some(lu) = self.factor() else {
            return vec![0.0; self.m];
        };
        let zero = vec![0.0; self.m];
        let mut rhs = vec![0.0; self.nw + self.m];
        let r = self.lagrangian_gradient(p, &zero);
        for k in 0..self.nw {
            rhs[k] = -(r[k] - z_lo[k] + z_hi[k]);
        }
        let sol = self.kkt_solve(&lu, &rhs);
        let lambda = sol[self.nw..].to_vec();
        if lambda.iter().any(|v| !v.is_finite() || v.abs() > 1e3) {
            vec![0.0; self.m]
        } else {
            lambda
        }
    }

    fn sigma(&self, w: &[f64], z_lo: &[f64], z_hi: &[f64]) -> Vec<f64> {
        (0..self.nw)
            .map(|k| {
                let mut s = 0.0;
                if self.w_lo[k].is_finite() {
                    s += z_lo[k] / (w[k] - self.w_lo[k]);
                }
                if self.w_hi[k].is_finite() {
                    s += z_hi[k] / (self.w_hi[k] - w[k]);
                }
                s
            })
            .collect()
    }

    fn barrier_gradient(&self, p: &Point, mu: f64) -> Vec<f64> {
        let mut g = vec![0.0; self.nw];
        g[..self.n].copy_from_slice(&p.grad);
        for k in 0..self.nw {
            if self.w_lo[k].is_finite() {
                g[k] -= mu / (p.w[k] - self.w_lo[k]);
            }
            if self.w_hi[k].is_finite() {
                g[k] += mu / (self.w_hi[k] - p.w[k]);
            }
        }
        g
    }
}

struct Errors {
    primal: f64,
    dual: f64,
    compl: f64,
    /// scaled optimality error of the barrier problem at the current μ
    barrier: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Solves an [`NlpProblem`] with a primal-dual interior-point method using a
/// filter line search.
pub fn solve<P: NlpProblem + ?Sized>(prob: &P, opts: &IpmOptions, warm: Option<&WarmStart>) -> IpmResult {
    let mut s = Solver::new(prob, opts);
    let (n, m, nw) = (s.n, s.m, s.nw);

    let mut w = vec![0.0; nw];
    prob.initial_point(&mut w[..n]);
    s.push_inside(&mut w, 0..n, opts.bound_push);
    {
        let mut g = vec![0.0; m];
        prob.constraints(&w[..n], &mut g);
        for (j, &i) in s.ineq.iter().enumerate() {
            w[n + j] = g[i];
        }
        s.push_inside(&mut w, n..nw, opts.bound_push);
    }

    let mut mu = warm.map_or(opts.mu_init, |ws| ws.mu.max(opts.tol_kkt.min(opts.tol_compl) / 10.0));
    let mut z_lo = vec![0.0; nw];
    let mut z_hi = vec![0.0; nw];
    for k in 0..nw {
        if s.w_lo[k].is_finite() {
            z_lo[k] = 1.0;
        }
        if s.w_hi[k].is_finite() {
            z_hi[k] = 1.0;
        }
    }
    if let Some(ws) = warm {
        for k in 0..n.min(ws.z_lower.len()) {
            if s.w_lo[k].is_finite() {
                z_lo[k] = ws.z_lower[k].max(mu / (w[k] - s.w_lo[k]));
            }
            if s.w_hi[k].is_finite() {
                z_hi[k] = ws.z_upper[k].max(mu / (s.w_hi[k] - w[k]));
            }
        }
        for k in n..nw {
            if s.w_lo[k].is_finite() {
                z_lo[k] = mu / (w[k] - s.w_lo[k]);
            }
            if s.w_hi[k].is_finite() {
                z_hi[k] = mu / (s.w_hi[k] - w[k]);
            }
        }
    }

    let Some(mut pt) = s.evaluate(w) else {
        return failure(&s, IpmStatus::NumericalFailure, vec![0.0; n], 0, mu);
    };
    s.choose_pivots(&pt.jac);
    let mut lambda = match warm {
        Some(ws) if ws.lambda.len() == m => ws.lambda.clone(),
        _ => s.least_squares_lambda(&pt, &z_lo, &z_hi),
    };

    let theta0 = one_norm(&pt.h);
    let theta_max = 1e4 * theta0.max(1.0);
    let theta_min = 1e-4 * theta0.max(1.0);
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut tau = TAU_MIN.max(1.0 - mu);
    let mut iter = 0;

    let errors = |s: &Solver<P>, pt: &Point, lambda: &[f64], z_lo: &[f64], z_hi: &[f64], mu: f64| -> Errors {
        let mut r = s.lagrangian_gradient(pt, lambda);
        for k in 0..nw {
            r[k] += z_hi[k] - z_lo[k];
        }
        let mut compl: f64 = 0.0;
        let mut compl_mu: f64 = 0.0;
        for k in 0..nw {
            if s.w_lo[k].is_finite() {
                let c = (pt.w[k] - s.w_lo[k]) * z_lo[k];
                compl = compl.max(c.abs());
                compl_mu = compl_mu.max((c - mu).abs());
            }
            if s.w_hi[k].is_finite() {
                let c = (s.w_hi[k] - pt.w[k]) * z_hi[k];
                compl = compl.max(c.abs());
                compl_mu = compl_mu.max((c - mu).abs());
            }
        }
        let z_sum = one_norm(z_lo) + one_norm(z_hi);
        let s_d = (S_MAX.max((one_norm(lambda) + z_sum) / (m + 2 * nw).max(1) as f64)) / S_MAX;
        let s_c = (S_MAX.max(z_sum / (2 * nw).max(1) as f64)) / S_MAX;
        let dual = inf_norm(&r);
        let primal = inf_norm(&pt.h);
        Errors { primal, dual, compl, barrier: (dual / s_d).max(primal).max(compl_mu / s_c) }
    };

    loop {
        let e = errors(&s, &pt, &lambda, &z_lo, &z_hi, mu);
        debug!("iter {iter:3} f={:.6e} inf_pr={:.2e} inf_du={:.2e} compl={:.2e} mu={:.1e}", pt.f, e.primal, e.dual, e.compl, mu);
        if e.primal <= opts.tol_feas && e.dual <= opts.tol_kkt && e.compl <= opts.tol_compl {
            return finish(&s, IpmStatus::Optimal, &pt, lambda, &z_lo, &z_hi, iter, &e, mu);
        }
        if iter >= opts.max_iter {
            return finish(&s, IpmStatus::IterationLimit, &pt, lambda, &z_lo, &z_hi, iter, &e, mu);
        }

        // barrier parameter update
        loop {
            let e = errors(&s, &pt, &lambda, &z_lo, &z_hi, mu);
            let floor = opts.tol_kkt.min(opts.tol_feas).min(opts.tol_compl) / 10.0;
            if e.barrier > KAPPA_EPS * mu || mu <= floor {
                break;
            }
            mu = floor.max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
            tau = TAU_MIN.max(1.0 - mu);
            filter.clear();
        }

        let mut hess = vec![0.0; s.hess_rows.len()];
        prob.hessian_values(&pt.w[..n], 1.0, &lambda, &mut hess);
        let sigma = s.sigma(&pt.w, &z_lo, &z_hi);
        let bgrad = s.barrier_gradient(&pt, mu);
        let lag = {
            let mut r = s.lagrangian_gradient(&pt, &lambda);
            for k in 0..nw {
                r[k] += bgrad[k] - if k < n { pt.grad[k] } else { 0.0 };
            }
            r
        };

        // factorization with inertia-free regularization
        let mut dw_reg = 0.0;
        let mut dc_reg = 0.0;
        let step = loop {
            s.assemble(&hess, &pt, &sigma, dw_reg, dc_reg);
            let lu = match s.factor() {
                Some(lu) => lu,
                None => {
                    if dc_reg == 0.0 {
                        dc_reg = 1e-8 * mu.powf(0.25);
                    } else {
                        dw_reg = increase_delta(dw_reg, s.delta_w_last);
                    }
                    if dw_reg > 1e40 {
                        return finish(&s, IpmStatus::NumericalFailure, &pt, lambda, &z_lo, &z_hi, iter, &e, mu);
                    }
                    continue;
                }
            };
            let mut rhs = vec![0.0; nw + m];
            for k in 0..nw {
                rhs[k] = -lag[k];
            }
            for i in 0..m {
                rhs[nw + i] = -pt.h[i];
            }
            let d = s.kkt_solve(&lu, &rhs);
            if d.iter().any(|v| !v.is_finite()) {
                dw_reg = increase_delta(dw_reg, s.delta_w_last);
                if dw_reg > 1e40 {
                    return finish(&s, IpmStatus::NumericalFailure, &pt, lambda, &z_lo, &z_hi, iter, &e, mu);
                }
                continue;
            }
            // tangential component: remove the normal step that only restores feasibility
            let mut rhs_n = vec![0.0; nw + m];
            rhs_n[nw..].copy_from_slice(&rhs[nw..]);
            let nstep = s.kkt_solve(&lu, &rhs_n);
            let t: Vec<f64> = (0..nw).map(|k| d[k] - nstep[k]).collect();
            let tt: f64 = t.iter().map(|v| v * v).sum();
            let curv = s.curvature(&hess, &sigma, dw_reg, &t);
            if curv >= CURVATURE_KAPPA * tt || tt == 0.0 {
                if dw_reg > 0.0 {
                    s.delta_w_last = dw_reg;
                }
                break (lu, d);
            }
            dw_reg = increase_delta(dw_reg, s.delta_w_last);
            if dw_reg > 1e40 {
                return finish(&s, IpmStatus::NumericalFailure, &pt, lambda, &z_lo, &z_hi, iter, &e, mu);
            }
        };
        let (lu, d) = step;
        let dw = &d[..nw];
        let dl = &d[nw..];

        let mut dz_lo = vec![0.0; nw];
        let mut dz_hi = vec![0.0; nw];
        for k in 0..nw {
            if s.w_lo[k].is_finite() {
                let sl = pt.w[k] - s.w_lo[k];
                dz_lo[k] = (mu - z_lo[k] * sl - z_lo[k] * dw[k]) / sl;
            }
            if s.w_hi[k].is_finite() {
                let su = s.w_hi[k] - pt.w[k];
                dz_hi[k] = (mu - z_hi[k] * su + z_hi[k] * dw[k]) / su;
            }
        }

        // filter line search
        let theta = one_norm(&pt.h);
        let phi = s.barrier(pt.f, &pt.w, mu);
        let gphi_d: f64 = bgrad.iter().zip(dw).map(|(a, b)| a * b).sum();
        let alpha_max = s.fraction_to_boundary(&pt.w, dw, tau);
        let alpha_min = if gphi_d < 0.0 {
            GAMMA_ALPHA
                * GAMMA_THETA.min(GAMMA_PHI * theta / -gphi_d).min(if theta <= theta_min {
                    DELTA * theta.powf(S_THETA) / (-gphi_d).powf(S_PHI)
                } else {
                    f64::INFINITY
                })
        } else {
            GAMMA_ALPHA * GAMMA_THETA
        };
        let tiny = (0..nw).all(|k| dw[k].abs() / (1.0 + pt.w[k].abs()) < 10.0 * f64::EPSILON);

        let acceptable = |alpha: f64, theta_t: f64, phi_t: f64, filter: &[(f64, f64)]| -> Option<bool> {
            if !(theta_t <= theta_max) || !phi_t.is_finite() {
                return None;
            }
            if filter.iter().any(|&(tf, pf)| theta_t >= tf && phi_t >= pf) {
                return None;
            }
            let switching = gphi_d < 0.0 && alpha * (-gphi_d).powf(S_PHI) > DELTA * theta.powf(S_THETA);
            if theta <= theta_min && switching {
                (phi_t <= phi + ETA_PHI * alpha * gphi_d).then_some(true)
            } else {
                (theta_t <= (1.0 - GAMMA_THETA) * theta || phi_t <= phi - GAMMA_PHI * theta).then_some(false)
            }
        };

        let mut alpha = alpha_max;
        let mut accepted: Option<(Vec<f64>, bool, f64)> = None;
        if tiny {
            let wt: Vec<f64> = (0..nw).map(|k| pt.w[k] + alpha * dw[k]).collect();
            accepted = Some((wt, true, alpha));
        }
        let mut first = true;
        while accepted.is_none() && alpha >= alpha_min {
            let wt: Vec<f64> = (0..nw).map(|k| pt.w[k] + alpha * dw[k]).collect();
            if let Some((f_t, h_t)) = s.evaluate_trial(&wt) {
                let theta_t = one_norm(&h_t);
                let phi_t = s.barrier(f_t, &wt, mu);
                if let Some(ftype) = acceptable(alpha, theta_t, phi_t, &filter) {
                    accepted = Some((wt, ftype, alpha));
                    break;
                }
                if first && theta_t >= theta {
                    // second-order correction
                    let mut c_soc: Vec<f64> = (0..m).map(|i| alpha * pt.h[i] + h_t[i]).collect();
                    let mut theta_old = theta;
                    let mut theta_soc = theta_t;
                    for _ in 0..MAX_SOC {
                        if theta_soc > KAPPA_SOC * theta_old && theta_old != theta {
                            break;
                        }
                        let mut rhs = vec![0.0; nw + m];
                        for k in 0..nw {
                            rhs[k] = -lag[k];
                        }
                        for i in 0..m {
                            rhs[nw + i] = -c_soc[i];
                        }
                        let dsoc = s.kkt_solve(&lu, &rhs);
                        let a_soc = s.fraction_to_boundary(&pt.w, &dsoc[..nw], tau);
                        let ws: Vec<f64> = (0..nw).map(|k| pt.w[k] + a_soc * dsoc[k]).collect();
                        let Some((f_s, h_s)) = s.evaluate_trial(&ws) else { break };
                        let th = one_norm(&h_s);
                        let ph = s.barrier(f_s, &ws, mu);
                        if let Some(ftype) = acceptable(alpha, th, ph, &filter) {
                            accepted = Some((ws, ftype, alpha));
                            break;
                        }
                        theta_old = theta_soc;
                        theta_soc = th;
                        for i in 0..m {
                            c_soc[i] = a_soc * c_soc[i] + h_s[i];
                        }
                    }
                    if accepted.is_some() {
                        break;
                    }
                }
            }
            first = false;
            alpha *= 0.5;
        }

        let (w_new, ftype, alpha) = match accepted {
            Some(a) => a,
            None => {
                debug!("iter {iter}: entering feasibility restoration");
                filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
                match restoration(&mut s, &pt, &z_lo, &z_hi, mu, tau, &filter, theta_max) {
                    Some(w_r) => {
                        let Some(p_r) = s.evaluate(w_r) else {
                            return finish(&s, IpmStatus::NumericalFailure, &pt, lambda, &z_lo, &z_hi, iter, &e, mu);
                        };
                        pt = p_r;
                        for k in 0..nw {
                            if s.w_lo[k].is_finite() {
                                z_lo[k] = z_lo[k].min(KAPPA_SIGMA * mu / (pt.w[k] - s.w_lo[k]));
                            }
                            if s.w_hi[k].is_finite() {
                                z_hi[k] = z_hi[k].min(KAPPA_SIGMA * mu / (s.w_hi[k] - pt.w[k]));
                            }
                        }
                        lambda = s.least_squares_lambda(&pt, &z_lo, &z_hi);
                        iter += 1;
                        continue;
                    }
                    None => {
                        return finish(&s, IpmStatus::Infeasible, &pt, lambda, &z_lo, &z_hi, iter, &e, mu);
                    }
                }
            }
        };

        if !ftype {
            filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
        }
        let alpha_z = {
            let mut a: f64 = 1.0;
            for k in 0..nw {
                if dz_lo[k] < 0.0 {
                    a = a.min(-tau * z_lo[k] / dz_lo[k]);
                }
                if dz_hi[k] < 0.0 {
                    a = a.min(-tau * z_hi[k] / dz_hi[k]);
                }
            }
            a
        };
        for i in 0..m {
            lambda[i] += alpha * dl[i];
        }
        let Some(p_new) = s.evaluate(w_new) else {
            return finish(&s, IpmStatus::NumericalFailure, &pt, lambda, &z_lo, &z_hi, iter, &e, mu);
        };
        pt = p_new;
        for k in 0..nw {
            if s.w_lo[k].is_finite() {
                let sl = pt.w[k] - s.w_lo[k];
                z_lo[k] = (z_lo[k] + alpha_z * dz_lo[k]).clamp(mu / (KAPPA_SIGMA * sl), KAPPA_SIGMA * mu / sl);
            }
            if s.w_hi[k].is_finite() {
                let su = s.w_hi[k] - pt.w[k];
                z_hi[k] = (z_hi[k] + alpha_z * dz_hi[k]).clamp(mu / (KAPPA_SIGMA * su), KAPPA_SIGMA * mu / su);
            }
        }
        iter += 1;
    }
}

fn increase_delta(current: f64, last: f64) -> f64 {
    if current == 0.0 {
        if last == 0.0 {
            1e-4
        } else {
            (last / 3.0).max(1e-20)
        }
    } else if last == 0.0 {
        100.0 * current
    } else {
        8.0 * current
    }
}

/// Minimizes the constraint violation from `pt` with damped normal steps
/// until the violation has dropped enough to be acceptable to the filter.
#[allow(clippy::too_many_arguments)]
fn restoration<P: NlpProblem + ?Sized>(
    s: &mut Solver<P>,
    pt: &Point,
    z_lo: &[f64],
    z_hi: &[f64],
    mu: f64,
    tau: f64,
    filter: &[(f64, f64)],
    theta_max: f64,
) -> Option<Vec<f64>> {
    let nw = s.nw;
    let m = s.m;
    let theta_entry = one_norm(&pt.h);
    let mut cur = pt.clone();
    let hess0 = vec![0.0; s.hess_rows.len()];
    for _ in 0..50 {
        let sigma: Vec<f64> = s.sigma(&cur.w, z_lo, z_hi).iter().map(|v| v + 1e-6).collect();
        s.assemble(&hess0, &cur, &sigma, 0.0, 1e-10);
        let lu = s.factor()?;
        let mut rhs = vec![0.0; nw + m];
        for i in 0..m {
            rhs[nw + i] = -cur.h[i];
        }
        let d = s.kkt_solve(&lu, &rhs);
        let theta = one_norm(&cur.h);
        let mut alpha = s.fraction_to_boundary(&cur.w, &d[..nw], tau);
        let mut next = None;
        while alpha > 1e-12 {
            let wt: Vec<f64> = (0..nw).map(|k| cur.w[k] + alpha * d[k]).collect();
            if let Some(p) = s.evaluate(wt) {
                if one_norm(&p.h) < theta {
                    next = Some(p);
                    break;
                }
            }
            alpha *= 0.5;
        }
        cur = next?;
        let theta_t = one_norm(&cur.h);
        let phi_t = s.barrier(cur.f, &cur.w, mu);
        let in_filter = filter.iter().any(|&(tf, pf)| theta_t >= tf && phi_t >= pf);
        if theta_t <= 0.9 * theta_entry && theta_t <= theta_max && !in_filter {
            return Some(cur.w);
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn finish<P: NlpProblem + ?Sized>(
    s: &Solver<P>,
    status: IpmStatus,
    pt: &Point,
    lambda: Vec<f64>,
    z_lo: &[f64],
    z_hi: &[f64],
    iterations: usize,
    e: &Errors,
    mu: f64,
) -> IpmResult {
    let worst =
        if status == IpmStatus::Optimal || s.m == 0 { None } else { (0..s.m).max_by(|&a, &b| pt.h[a].abs().total_cmp(&pt.h[b].abs())) };
    IpmResult {
        status,
        x: pt.w[..s.n].to_vec(),
        lambda,
        z_lower: z_lo[..s.n].to_vec(),
        z_upper: z_hi[..s.n].to_vec(),
        objective: pt.f,
        iterations,
        primal_inf: e.primal,
        dual_inf: e.dual,
        compl_inf: e.compl,
        mu,
        worst_constraint: worst,
    }
}

fn failure<P: NlpProblem + ?Sized>(s: &Solver<P>, status: IpmStatus, x: Vec<f64>, iterations: usize, mu: f64) -> IpmResult {
    IpmResult {
        status,
        x,
        lambda: vec![0.0; s.m],
        z_lower: vec![0.0; s.n],
        z_upper: vec![0.0; s.n],
        objective: f64::NAN,
        iterations,
        primal_inf: f64::INFINITY,
        dual_inf: f64::INFINITY,
        compl_inf: f64::INFINITY,
        mu,
        worst_constraint: None,
    }
}
