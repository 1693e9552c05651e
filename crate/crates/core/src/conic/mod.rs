//! Small standard-form semidefinite programming layer.
//!
//! Problems are assembled with [`ProblemBuilder`] from affine scalar
//! ([`LinExpr`]) and symmetric-matrix ([`MatExpr`]) expressions and solved by
//! a deterministic log-barrier interior-point method tuned for the handful of
//! tiny dense blocks that the power-allocation programs produce.
//!
//! ```
//! use nalgebra::DMatrix;
//! use uav_isac::conic::{solve, MatExpr, ProblemBuilder, Status};
//!
//! // min tr(X) s.t. X ⪰ I₂
//! let mut b = ProblemBuilder::new();
//! let x = b.symmetric("X", 2);
//! b.psd("X - I", x.expr() - MatExpr::identity(2));
//! b.minimize(x.expr().trace());
//! let report = solve(&b.build().unwrap(), 1e-8);
//! assert_eq!(report.status, Status::Optimal);
//! assert!((report.optimum - 2.0).abs() < 1e-6);
//! ```

mod barrier;
mod expr;
pub mod sdpa;

use nalgebra::DMatrix;

pub use expr::{sum, Block, ConicProblem, LinExpr, Linear, Lmi, MatExpr, ProblemBuilder, SymVar, Var};

/// Default tolerance on the relative duality gap and residuals.
pub const DEFAULT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    NumericalFailure,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::NumericalFailure => "numerical-failure",
        })
    }
}

/// Optimality residuals of a returned point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    /// Largest PSD, inequality or equality violation (absolute).
    pub primal: f64,
    /// Largest stationarity error of the Lagrangian, relative to the scaled
    /// objective.
    pub dual: f64,
    /// Duality-gap bound relative to `1 + |optimum|`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: Status,
    /// Objective value (NaN unless optimal).
    pub optimum: f64,
    /// One value per variable, in creation order.
    pub assignment: Vec<f64>,
    pub residuals: Residuals,
    /// Newton steps taken across both phases.
    pub iterations: usize,
    pub message: String,
    /// Dual matrices `Z_b ⪰ 0`, one per LMI, when optimal.
    pub lmi_duals: Vec<DMatrix<f64>>,
}

impl SolveReport {
    pub fn value(&self, var: Var) -> f64 {
        self.assignment[var.index()]
    }

    pub fn eval(&self, e: &LinExpr) -> f64 {
        e.eval(&self.assignment)
    }

    pub fn eval_matrix(&self, e: &MatExpr) -> DMatrix<f64> {
        e.eval(&self.assignment)
    }

    pub fn matrix(&self, var: &SymVar) -> DMatrix<f64> {
        var.value(&self.assignment)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative duality-gap target.
    pub tol: f64,
    /// Cap on Newton steps across both phases.
    pub max_iterations: usize,
    /// Cap on Newton steps per centering.
    pub max_centering_steps: usize,
    /// Factor by which the barrier weight grows between centerings.
    pub barrier_growth: f64,
    /// Safeguard bound on every scaled variable.
    pub box_radius: f64,
    /// Minimal uniform slack, in scaled units, accepted as strict
    /// feasibility by phase I.
    pub interior_margin: f64,
    pub equilibration_passes: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iterations: 5000,
            max_centering_steps: 200,
            barrier_growth: 8.0,
            box_radius: 1e7,
            interior_margin: 1e-9,
            equilibration_passes: 4,
        }
    }
}

/// Solves `problem` to relative gap `tol` with default settings otherwise.
pub fn solve(problem: &ConicProblem, tol: f64) -> SolveReport {
    solve_with(
        problem,
        &SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_with(problem: &ConicProblem, options: &SolverOptions) -> SolveReport {
    barrier::solve(problem, options)
}

/// Epigraph of `tr(J⁻¹)`: adds a symmetric `T` with `[[T, I], [I, J]] ⪰ 0`
/// and returns `tr(T)`, which equals `tr(J⁻¹)` at the optimum for `J ≻ 0`.
pub fn trace_inverse_epigraph(builder: &mut ProblemBuilder, j: &MatExpr) -> LinExpr {
    let n = j.dim();
    let t = builder.symmetric("T", n);
    let lmi = MatExpr::blocks(&[
        vec![Block::Expr(t.expr()), Block::Const(DMatrix::identity(n, n))],
        vec![Block::Const(DMatrix::identity(n, n)), Block::Expr(j.clone())],
    ])
    .expect("square blocks of equal size");
    builder.psd("trace-inverse epigraph", lmi);
    t.expr().trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    #[test]
    fn trace_of_matrix_above_identity() {
        let mut b = ProblemBuilder::new();
        let x = b.symmetric("X", 2);
        b.psd("X - I", x.expr() - MatExpr::identity(2));
        b.minimize(x.expr().trace());
        let r = solve(&b.build().unwrap(), 1e-9);
        assert_eq!(r.status, Status::Optimal, "{}", r.message);
        assert_relative_eq!(r.optimum, 2.0, epsilon = 1e-7);
        assert_relative_eq!(r.matrix(&x), DMatrix::identity(2, 2), epsilon = 1e-6);
        assert!(r.residuals.gap <= 1e-9);
    }

    #[test]
    fn determinant_lmi() {
        let mut b = ProblemBuilder::new();
        let x = b.scalar("x");
        let lmi = MatExpr::scaled_matrix(x, &DMatrix::identity(2, 2))
            + MatExpr::constant(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        b.psd("[[x,1],[1,x]]", lmi);
        b.minimize(x);
        let r = solve(&b.build().unwrap(), 1e-9);
        assert_eq!(r.status, Status::Optimal, "{}", r.message);
        assert_relative_eq!(r.optimum, 1.0, epsilon = 1e-7);
        // Complementarity: ⟨Z, F⟩ ≈ 0.
        let f = r.eval_matrix(&b_lmi(&r));
        assert!(r.lmi_duals[0].dot(&f).abs() < 1e-6);
    }

    fn b_lmi(r: &SolveReport) -> MatExpr {
        let x = r.assignment[0];
        MatExpr::constant(DMatrix::from_row_slice(2, 2, &[x, 1.0, 1.0, x]))
    }

    #[test]
    fn infeasible_problem_is_reported() {
        let mut b = ProblemBuilder::new();
        let x = b.scalar("x");
        b.ge("x >= 2", x, 2.0);
        b.le("x <= 1", x, 1.0);
        b.minimize(x);
        let r = solve(&b.build().unwrap(), 1e-8);
        assert_eq!(r.status, Status::Infeasible);
        assert!(
            r.message.contains("x >= 2") && r.message.contains("x <= 1"),
            "{}",
            r.message
        );
    }

    #[test]
    fn infeasible_lmi_is_reported() {
        // X ⪰ I and tr(X) ≤ 1 cannot hold together.
        let mut b = ProblemBuilder::new();
        let x = b.symmetric("X", 2);
        b.psd("X - I", x.expr() - MatExpr::identity(2));
        b.le("tr X <= 1", x.expr().trace(), 1.0);
        b.minimize(x.expr().trace());
        let r = solve(&b.build().unwrap(), 1e-8);
        assert_eq!(r.status, Status::Infeasible, "{}", r.message);
    }

    #[test]
    fn unbounded_problem_fails_numerically() {
        let mut b = ProblemBuilder::new();
        let x = b.scalar("x");
        b.le("x <= 1", x, 1.0);
        b.minimize(x);
        let r = solve(&b.build().unwrap(), 1e-8);
        assert_eq!(r.status, Status::NumericalFailure);
    }

    #[test]
    fn equalities_are_eliminated() {
        // min x + 2y s.t. x + y = 1, x, y ≥ 0 → x = 1, y = 0.
        let mut b = ProblemBuilder::new();
        let x = b.nonneg("x");
        let y = b.nonneg("y");
        b.eq("x + y = 1", x + y, 1.0);
        b.minimize(x + 2.0 * y);
        let r = solve(&b.build().unwrap(), 1e-9);
        assert_eq!(r.status, Status::Optimal, "{}", r.message);
        assert_relative_eq!(r.optimum, 1.0, epsilon = 1e-7);
        assert_relative_eq!(r.value(x), 1.0, epsilon = 1e-7);
        assert!(r.residuals.primal < 1e-12);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut b = ProblemBuilder::new();
        let x = b.scalar("x");
        b.eq("x = 1", x, 1.0);
        b.eq("x = 2", x, 2.0);
        b.minimize(x);
        assert_eq!(solve(&b.build().unwrap(), 1e-8).status, Status::Infeasible);
    }

    fn epigraph_value(j: DMatrix<f64>) -> f64 {
        let mut b = ProblemBuilder::new();
        let obj = trace_inverse_epigraph(&mut b, &MatExpr::constant(j));
        b.minimize(obj);
        let r = solve(&b.build().unwrap(), 1e-9);
        assert_eq!(r.status, Status::Optimal, "{}", r.message);
        r.optimum
    }

    #[test]
    fn epigraph_examples() {
        assert_relative_eq!(epigraph_value(DMatrix::identity(3, 3)), 3.0, max_relative = 1e-7);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 4.0]));
        assert_relative_eq!(epigraph_value(d), 1.75, max_relative = 1e-7);

        // J = pI with 1 ≤ p ≤ 2: optimum drives p to 2.
        let mut b = ProblemBuilder::new();
        let p = b.scalar("p");
        b.ge("p >= 1", p, 1.0);
        b.le("p <= 2", p, 2.0);
        let obj = trace_inverse_epigraph(&mut b, &MatExpr::scaled_matrix(p, &DMatrix::identity(3, 3)));
        b.minimize(obj);
        let r = solve(&b.build().unwrap(), 1e-9);
        assert_relative_eq!(r.value(p), 2.0, epsilon = 1e-6);
        assert_relative_eq!(r.optimum, 1.5, max_relative = 1e-7);
    }

    #[test]
    fn solver_is_deterministic() {
        let build = || {
            let mut b = ProblemBuilder::new();
            let x = b.symmetric("X", 3);
            let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 1.5]);
            b.psd("X - C", x.expr() - MatExpr::constant(c));
            b.minimize(x.expr().trace() + x.expr().entry(0, 1));
            b.build().unwrap()
        };
        let a = solve(&build(), 1e-8);
        let b = solve(&build(), 1e-8);
        assert_eq!(a, b);
    }

    fn random_spd(seed: [f64; 6]) -> DMatrix<f64> {
        let l = DMatrix::from_row_slice(
            3,
            3,
            &[seed[0], 0.0, 0.0, seed[1], seed[2], 0.0, seed[3], seed[4], seed[5]],
        );
        &l * l.transpose() + DMatrix::identity(3, 3) * 0.1
    }

    /// Brute-force LP oracle over the vertices of a 2-D polytope.
    fn vertex_optimum(rows: &[(f64, f64, f64)], c: (f64, f64)) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..rows.len() {
            for j in (i + 1)..rows.len() {
                let (a1, b1, h1) = rows[i];
                let (a2, b2, h2) = rows[j];
                let det = a1 * b2 - a2 * b1;
                if det.abs() < 1e-9 {
                    continue;
                }
                // a x + b y + h = 0 on both rows.
                let x = (-h1 * b2 + h2 * b1) / det;
                let y = (-a1 * h2 + a2 * h1) / det;
                if rows.iter().all(|(a, b, h)| a * x + b * y + h >= -1e-9) {
                    let v = c.0 * x + c.1 * y;
                    best = Some(best.map_or(v, |bv: f64| bv.min(v)));
                }
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn epigraph_is_tight(seed in proptest::array::uniform6(-2.0..2.0f64)) {
            let j = random_spd(seed);
            let expected = j.clone().try_inverse().unwrap().trace();
            let got = epigraph_value(j);
            prop_assert!(((got - expected) / expected).abs() < 1e-6);
        }

        #[test]
        fn small_lps_match_vertex_enumeration(
            normals in proptest::collection::vec((0.0..std::f64::consts::TAU, 0.5..3.0f64), 3..7),
            angle in 0.0..std::f64::consts::TAU,
        ) {
            // Half-planes tangent to circles around the origin always contain
            // it, and the box keeps the polytope bounded.
            let mut rows: Vec<(f64, f64, f64)> = normals
                .iter()
                .map(|(phi, r)| (-phi.cos(), -phi.sin(), *r))
                .collect();
            rows.extend([(1.0, 0.0, 5.0), (-1.0, 0.0, 5.0), (0.0, 1.0, 5.0), (0.0, -1.0, 5.0)]);
            let c = (angle.cos(), angle.sin());
            let mut b = ProblemBuilder::new();
            let x = b.scalar("x");
            let y = b.scalar("y");
            for (i, (a, bb, h)) in rows.iter().enumerate() {
                b.psd(format!("row {i}"), MatExpr::scalar(*a * x + *bb * y + *h));
            }
            b.minimize(c.0 * x + c.1 * y);
            let r = solve(&b.build().unwrap(), 1e-10);
            prop_assert_eq!(r.status, Status::Optimal);
            let oracle = vertex_optimum(&rows, c).unwrap();
            prop_assert!((r.optimum - oracle).abs() < 1e-7 * (1.0 + oracle.abs()));
        }
    }

    #[test]
    fn schur_lmi_with_vector_block() {
        // min t s.t. [[I, v], [vᵀ, t]] ⪰ 0  ⇒  t = ‖v‖².
        let v = Vector3::new(1.0, -2.0, 0.5);
        let mut b = ProblemBuilder::new();
        let t = b.scalar("t");
        let col = DMatrix::from_column_slice(3, 1, v.as_slice());
        let lmi = MatExpr::blocks(&[
            vec![Block::Const(DMatrix::identity(3, 3)), Block::Const(col.clone())],
            vec![Block::Const(col.transpose()), Block::Expr(MatExpr::scalar(t))],
        ])
        .unwrap();
        b.psd("schur", lmi);
        b.minimize(t);
        let r = solve(&b.build().unwrap(), 1e-10);
        assert_relative_eq!(r.optimum, v.norm_squared(), max_relative = 1e-8);
    }
}
