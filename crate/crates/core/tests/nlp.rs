use feedertune::nlp::{solve, IpmOptions, IpmStatus, NlpProblem};

/// Hock–Schittkowski problem 71.
struct Hs071;

impl NlpProblem for Hs071 {
    fn num_vars(&self) -> usize {
        4
    }
    fn num_constraints(&self) -> usize {
        2
    }
    fn var_bounds(&self, lo: &mut [f64], hi: &mut [f64]) {
        lo.fill(1.0);
        hi.fill(5.0);
    }
    fn constraint_bounds(&self, lo: &mut [f64], hi: &mut [f64]) {
        lo[0] = 25.0;
        hi[0] = f64::INFINITY;
        lo[1] = 40.0;
        hi[1] = 40.0;
    }
    fn initial_point(&self, x: &mut [f64]) {
        x.copy_from_slice(&[1.0, 5.0, 5.0, 1.0]);
    }
    fn objective(&self, x: &[f64]) -> f64 {
        x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = x[3] * (2.0 * x[0] + x[1] + x[2]);
        g[1] = x[0] * x[3];
        g[2] = x[0] * x[3] + 1.0;
        g[3] = x[0] * (x[0] + x[1] + x[2]);
    }
    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        g[0] = x.iter().product();
        g[1] = x.iter().map(|v| v * v).sum();
    }
    fn jacobian_structure(&self) -> (Vec<usize>, Vec<usize>) {
        (vec![0, 0, 0, 0, 1, 1, 1, 1], vec![0, 1, 2, 3, 0, 1, 2, 3])
    }
    fn jacobian_values(&self, x: &[f64], v: &mut [f64]) {
        v[0] = x[1] * x[2] * x[3];
        v[1] = x[0] * x[2] * x[3];
        v[2] = x[0] * x[1] * x[3];
        v[3] = x[0] * x[1] * x[2];
        for k in 0..4 {
            v[4 + k] = 2.0 * x[k];
        }
    }
    fn hessian_structure(&self) -> (Vec<usize>, Vec<usize>) {
        let mut r = Vec::new();
        let mut c = Vec::new();
        for i in 0..4 {
            for j in 0..=i {
                r.push(i);
                c.push(j);
            }
        }
        (r, c)
    }
    fn hessian_values(&self, x: &[f64], s: f64, l: &[f64], v: &mut [f64]) {
        // order: (0,0) (1,0) (1,1) (2,0) (2,1) (2,2) (3,0) (3,1) (3,2) (3,3)
        v[0] = s * 2.0 * x[3] + l[1] * 2.0;
        v[1] = s * x[3] + l[0] * x[2] * x[3];
        v[2] = l[1] * 2.0;
        v[3] = s * x[3] + l[0] * x[1] * x[3];
        v[4] = l[0] * x[0] * x[3];
        v[5] = l[1] * 2.0;
        v[6] = s * (2.0 * x[0] + x[1] + x[2]) + l[0] * x[1] * x[2];
        v[7] = s * x[0] + l[0] * x[0] * x[2];
        v[8] = s * x[0] + l[0] * x[0] * x[1];
        v[9] = l[1] * 2.0;
    }
}

#[test]
fn hs071_reaches_known_optimum() {
    let r = solve(&Hs071, &IpmOptions::default(), None);
    assert_eq!(r.status, IpmStatus::Optimal);
    assert!((r.objective - 17.014017145).abs() < 1e-5, "{}", r.objective);
    let expected = [1.0, 4.742999, 3.821151, 1.379408];
    for (a, b) in r.x.iter().zip(expected) {
        assert!((a - b).abs() < 1e-4, "{:?}", r.x);
    }
    assert!(r.iterations < 30);
}

/// min ½‖x‖²  s.t.  A x = b, with A = [[1, 1, 0], [0, 1, 1]], b = [1, 2].
struct MinNorm;

impl NlpProblem for MinNorm {
    fn num_vars(&self) -> usize {
        3
    }
    fn num_constraints(&self) -> usize {
        2
    }
    fn var_bounds(&self, lo: &mut [f64], hi: &mut [f64]) {
        lo.fill(f64::NEG_INFINITY);
        hi.fill(f64::INFINITY);
    }
    fn constraint_bounds(&self, lo: &mut [f64], hi: &mut [f64]) {
        lo.copy_from_slice(&[1.0, 2.0]);
        hi.copy_from_slice(&[1.0, 2.0]);
    }
    fn initial_point(&self, x: &mut [f64]) {
        x.fill(0.0);
    }
    fn objective(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g.copy_from_slice(x);
    }
    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        g[0] = x[0] + x[1];
        g[1] = x[1] + x[2];
    }
    fn jacobian_structure(&self) -> (Vec<usize>, Vec<usize>) {
        (vec![0, 0, 1, 1], vec![0, 1, 1, 2])
    }
    fn jacobian_values(&self, _: &[f64], v: &mut [f64]) {
        v.fill(1.0);
    }
    fn hessian_structure(&self) -> (Vec<usize>, Vec<usize>) {
        (vec![0, 1, 2], vec![0, 1, 2])
    }
    fn hessian_values(&self, _: &[f64], s: f64, _: &[f64], v: &mut [f64]) {
        v.fill(s);
    }
}

#[test]
fn equality_qp_matches_normal_equations() {
    // x = Aᵀ (A Aᵀ)⁻¹ b with A Aᵀ = [[2, 1], [1, 2]]
    let (a, b, c, d) = (2.0, 1.0, 1.0, 2.0);
    let det: f64 = a * d - b * c;
    let y = [(d * 1.0 - b * 2.0) / det, (-c * 1.0 + a * 2.0) / det];
    let expected = [y[0], y[0] + y[1], y[1]];
    let r = solve(&MinNorm, &IpmOptions::default(), None);
    assert_eq!(r.status, IpmStatus::Optimal);
    for (u, v) in r.x.iter().zip(expected) {
        assert!((u - v).abs() < 1e-9);
    }
    // multipliers satisfy x + Aᵀλ = 0
    assert!((r.x[0] + r.lambda[0]).abs() < 1e-9);
}

struct Rosenbrock;

impl NlpProblem for Rosenbrock {
    fn num_vars(&self) -> usize {
        2
    }
    fn num_constraints(&self) -> usize {
        0
    }
    fn var_bounds(&self, lo: &mut [f64], hi: &mut [f64]) {
        lo.fill(f64::NEG_INFINITY);
        hi.fill(f64::INFINITY);
    }
    fn constraint_bounds(&self, _: &mut [f64], _: &mut [f64]) {}
    fn initial_point(&self, x: &mut [f64]) {
        x.copy_from_slice(&[-1.2, 1.0]);
    }
    fn objective(&self, x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
        g[1] = 200.0 * (x[1] - x[0] * x[0]);
    }
    fn constraints(&self, _: &[f64], _: &mut [f64]) {}
    fn jacobian_structure(&self) -> (Vec<usize>, Vec<usize>) {
        (vec![], vec![])
    }
    fn jacobian_values(&self, _: &[f64], _: &mut [f64]) {}
    fn hessian_structure(&self) -> (Vec<usize>, Vec<usize>) {
        (vec![0, 1, 1], vec![0, 0, 1])
    }
    fn hessian_values(&self, x: &[f64], s: f64, _: &[f64], v: &mut [f64]) {
        v[0] = s * (2.0 - 400.0 * (x[1] - 3.0 * x[0] * x[0]));
        v[1] = s * (-400.0 * x[0]);
        v[2] = s * 200.0;
    }
}

#[test]
fn nonconvex_unconstrained_rosenbrock() {
    let r = solve(&Rosenbrock, &IpmOptions { tol_kkt: 1e-9, ..Default::default() }, None);
    assert_eq!(r.status, IpmStatus::Optimal);
    assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
}

/// x + y = −3 with x, y ∈ [0, 5] has no feasible point.
struct Infeasible;

impl NlpProblem for Infeasible {
    fn num_vars(&self) -> usize {
        2
    }
    fn num_constraints(&self) -> usize {
        1
    }
    fn var_bounds(&self, lo: &mut [f64], hi: &mut [f64]) {
        lo.fill(0.0);
        hi.fill(5.0);
    }
    fn constraint_bounds(&self, lo: &mut [f64], hi: &mut [f64]) {
        lo[0] = -3.0;
        hi[0] = -3.0;
    }
    fn initial_point(&self, x: &mut [f64]) {
        x.fill(1.0);
    }
    fn objective(&self, x: &[f64]) -> f64 {
        x[0] * x[0] + x[1] * x[1]
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = 2.0 * x[0];
        g[1] = 2.0 * x[1];
    }
    fn constraints(&self, x: &[f64], g: &mut [f64]) {
        g[0] = x[0] + x[1];
    }
    fn jacobian_structure(&self) -> (Vec<usize>, Vec<usize>) {
        (vec![0, 0], vec![0, 1])
    }
    fn jacobian_values(&self, _: &[f64], v: &mut [f64]) {
        v.fill(1.0);
    }
    fn hessian_structure(&self) -> (Vec<usize>, Vec<usize>) {
        (vec![0, 1], vec![0, 1])
    }
    fn hessian_values(&self, _: &[f64], s: f64, _: &[f64], v: &mut [f64]) {
        v.fill(2.0 * s);
    }
    fn constraint_name(&self, _: usize) -> String {
        "sum".into()
    }
}

#[test]
fn infeasible_problem_is_flagged() {
    let r = solve(&Infeasible, &IpmOptions::default(), None);
    assert_ne!(r.status, IpmStatus::Optimal);
    assert_eq!(r.worst_constraint, Some(0));
}

#[test]
fn warm_start_from_solution_is_quick() {
    let cold = solve(&Hs071, &IpmOptions::default(), None);
    let ws = cold.warm_start();
    struct Shifted;
    impl NlpProblem for Shifted {
        fn num_vars(&self) -> usize {
            4
        }
        fn num_constraints(&self) -> usize {
            2
        }
        fn var_bounds(&self, lo: &mut [f64], hi: &mut [f64]) {
            Hs071.var_bounds(lo, hi)
        }
        fn constraint_bounds(&self, lo: &mut [f64], hi: &mut [f64]) {
            Hs071.constraint_bounds(lo, hi)
        }
        fn initial_point(&self, x: &mut [f64]) {
            x.copy_from_slice(&[1.0, 4.743, 3.8211, 1.3794]);
        }
        fn objective(&self, x: &[f64]) -> f64 {
            Hs071.objective(x)
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            Hs071.gradient(x, g)
        }
        fn constraints(&self, x: &[f64], g: &mut [f64]) {
            Hs071.constraints(x, g)
        }
        fn jacobian_structure(&self) -> (Vec<usize>, Vec<usize>) {
            Hs071.jacobian_structure()
        }
        fn jacobian_values(&self, x: &[f64], v: &mut [f64]) {
            Hs071.jacobian_values(x, v)
        }
        fn hessian_structure(&self) -> (Vec<usize>, Vec<usize>) {
            Hs071.hessian_structure()
        }
        fn hessian_values(&self, x: &[f64], s: f64, l: &[f64], v: &mut [f64]) {
            Hs071.hessian_values(x, s, l, v)
        }
    }
    let opts = IpmOptions { bound_push: 1e-6, ..Default::default() };
    let warm = solve(&Shifted, &opts, Some(&ws));
    assert_eq!(warm.status, IpmStatus::Optimal);
    assert!(warm.iterations < cold.iterations, "{} vs {}", warm.iterations, cold.iterations);
}
