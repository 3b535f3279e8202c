//! Sparse nonlinear programming: the problem interface and a primal-dual
//! interior-point solver.
//!
//! Problems have the form
//!
//! ```text
//! min f(x)   s.t.   g_L <= g(x) <= g_U,   x_L <= x <= x_U
//! ```
//!
//! with rows where `g_L == g_U` treated as equalities. Infinite bounds are
//! given as `f64::INFINITY` / `f64::NEG_INFINITY`.

mod ipm;

pub use ipm::{solve, IpmOptions, IpmResult, IpmStatus, WarmStart};

/// Callbacks describing a sparse NLP. Jacobian and Hessian structures are
/// queried once; value callbacks must fill entries in the same order.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_constraints(&self) -> usize;

    fn var_bounds(&self, lower: &mut [f64], upper: &mut [f64]);
    fn constraint_bounds(&self, lower: &mut [f64], upper: &mut [f64]);
    fn initial_point(&self, x: &mut [f64]);

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], g: &mut [f64]);

    /// (row, col) of every Jacobian entry.
    fn jacobian_structure(&self) -> (Vec<usize>, Vec<usize>);
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]);

    /// (row, col) with `row >= col` of every entry of the Lagrangian Hessian.
    /// Repeated positions are summed.
    fn hessian_structure(&self) -> (Vec<usize>, Vec<usize>);
    /// `obj_factor · ∇²f + Σ lambda_i ∇²g_i`, lower triangle.
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]);

    fn constraint_name(&self, row: usize) -> String {
        format!("constraint {row}")
    }
}
