//! Gaussian LSE `Δu ~ N(0, J_p⁻¹)` with outage probability `P_out`.
//!
//! With `η = ln(1/P_out)` the Bernstein-type inequality for Gaussian
//! quadratic forms makes the outage at most `P_out` whenever
//!
//! ```text
//! tr(J⁻¹) + √(2η) ω + η ϱ − γ_k P_c,k + d_k² ≤ 0
//! ‖J⁻¹‖_F² + 2 r_kᵀ J⁻¹ r_k ≤ ω²
//! ϱ I − J⁻¹ ⪰ 0
//! ```
//!
//! The last two are expanded to first order in `J` around the previous
//! iterate `J₀`, and `ω²` around `ω₀`, giving a convex program per
//! iteration.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::conic::{self, Block, LinExpr, MatExpr, ProblemBuilder, Status, Var};
use crate::error::{Error, Result};
use crate::fisher::trace_inverse;
use crate::geometry::Scenario;
use crate::linalg::{max_eigenvalue3, to_dmatrix3};

use super::{
    backtrack, converged, gamma, status_of, subproblem_error, AllocationFailure, AllocationOutcome, AllocationResult,
    AllocatorConfig, Auxiliary, IterationRecord, IterationTrace, Linearization, PowerAllocation, RobustnessModel,
    Setup, StopReason,
};

fn eta(p_out: f64) -> f64 {
    (1.0 / p_out).ln()
}

/// `ω* = √(‖J⁻¹‖_F² + 2 rᵀ J⁻¹ r)`, the tight value of the norm slack.
pub fn exact_omega(fim: &Matrix3<f64>, offset: &Vector3<f64>) -> Result<f64> {
    let inv = fim
        .try_inverse()
        .ok_or_else(|| Error::Numerical("information matrix is singular".into()))?;
    Ok((inv.norm_squared() + 2.0 * offset.dot(&(inv * offset))).sqrt())
}

/// Smallest `P_c,k` meeting the Bernstein condition at a fixed `J`.
pub fn bernstein_exact_comm(
    scenario: &Scenario,
    k: usize,
    rate_floor: f64,
    fim: &Matrix3<f64>,
    p_out: f64,
) -> Result<f64> {
    let r = scenario.offset(k);
    let e = eta(p_out);
    let tr = trace_inverse(fim)?;
    let inv = fim.try_inverse().expect("checked by trace_inverse");
    let lam_max = max_eigenvalue3(&inv);
    let omega = exact_omega(fim, &r)?;
    Ok((tr + (2.0 * e).sqrt() * omega + e * lam_max + r.norm_squared()) / gamma(scenario, k, rate_floor))
}

/// Adds the Bernstein conditions for UAV `k` at a fixed information matrix.
/// `omega` and `rho` are the slack variables; `ϱ I − J⁻¹ ⪰ 0` is written in
/// its Schur form.
#[allow(clippy::too_many_arguments)]
pub fn bernstein_constraints(
    builder: &mut ProblemBuilder,
    scenario: &Scenario,
    k: usize,
    rate_floor: f64,
    comm: &LinExpr,
    fim: &Matrix3<f64>,
    omega: Var,
    rho: Var,
    p_out: f64,
) -> Result<()> {
    RobustnessModel::Gaussian { p_out }.validate()?;
    let r = scenario.offset(k);
    let e = eta(p_out);
    let tr = trace_inverse(fim)?;
    let g = gamma(scenario, k, rate_floor);
    builder.le(
        format!("Bernstein rate UAV {k}"),
        LinExpr::constant(tr + r.norm_squared()) + (2.0 * e).sqrt() * omega + e * rho - comm.clone() * g,
        0.0,
    );
    builder.ge(format!("Bernstein norm UAV {k}"), omega, exact_omega(fim, &r)?);
    let id = DMatrix::identity(3, 3);
    builder.psd(
        format!("Bernstein spectral UAV {k}"),
        MatExpr::blocks(&[
            vec![Block::Expr(MatExpr::scaled_matrix(rho, &id)), Block::Const(id.clone())],
            vec![Block::Const(id), Block::Const(to_dmatrix3(fim))],
        ])?,
    );
    Ok(())
}

/// First-order pieces of the Bernstein conditions around `(J₀, ω₀)`.
#[derive(Debug, Clone)]
pub struct ScaTerms {
    /// `tr(J₀⁻²) − 2 tr(J₀⁻³ ΔJ)`.
    pub f1: LinExpr,
    /// Expansion of `J⁻¹`. Symmetric for [`Linearization::Frechet`].
    pub inverse: MatExpr,
    /// `2 ω₀ ω − ω₀²`.
    pub f2: LinExpr,
}

/// Linearizes `‖J⁻¹‖_F²`, `J⁻¹` and `ω²` around `(J₀, ω₀)`, with
/// `ΔJ = J − J₀`.
pub fn sca_linearize(
    j0: &Matrix3<f64>,
    fim: &MatExpr,
    omega: &LinExpr,
    omega0: f64,
    linearization: Linearization,
) -> Result<ScaTerms> {
    let inv = j0
        .try_inverse()
        .ok_or_else(|| Error::Numerical("linearization point is singular".into()))?;
    let inv = to_dmatrix3(&inv);
    let inv2 = &inv * &inv;
    let inv3 = &inv2 * &inv;
    let delta = fim.clone() - MatExpr::constant(to_dmatrix3(j0));
    let f1 = LinExpr::constant(inv2.trace()) - delta.dot(&inv3) * 2.0;
    let first = match linearization {
        Linearization::Frechet => delta.sandwich(&inv, &inv),
        Linearization::OneSided => delta.sandwich(&inv2, &DMatrix::identity(3, 3)),
    };
    let inverse = MatExpr::constant(inv) - first;
    let f2 = omega.clone() * (2.0 * omega0) - omega0 * omega0;
    Ok(ScaTerms { f1, inverse, f2 })
}

/// Bernstein-inequality SCA allocator for Gaussian LSE.
///
/// Each subproblem solution is re-certified with the exact Bernstein
/// condition: the communication powers are recomputed from the exact
/// condition at the new `J_p` and the step from the previous sensing powers
/// is halved until the budget holds and `tr(J_p⁻¹)` does not increase. The
/// next expansion point `ω₀` is the tight norm slack at the accepted iterate.
pub fn solve_bisca(scenario: &Scenario, config: &AllocatorConfig, p_out: f64) -> AllocationResult {
    RobustnessModel::Gaussian { p_out }.validate()?;
    let setup = Setup::new(scenario, config)?;
    let kk = setup.k;
    let e = eta(p_out);
    let certify = |ps: &[f64]| -> Option<(Vec<f64>, Vec<f64>)> {
        let j = setup.fim(ps);
        let mut pc = Vec::with_capacity(kk);
        let mut om = Vec::with_capacity(kk);
        for k in 0..kk {
            pc.push(bernstein_exact_comm(scenario, k, config.rate_floor, &j, p_out).ok()?);
            om.push(exact_omega(&j, &setup.offset[k]).ok()?);
        }
        Some((pc, om))
    };

    let mut sensing = setup.initial.clone();
    let mut objective = setup.crb(&sensing).map_err(AllocationFailure::from)?;
    let (mut comm, mut omega0) = certify(&sensing)
        .ok_or_else(|| AllocationFailure::from(Error::Numerical("initial information matrix is singular".into())))?;
    let mut feasible = sensing.iter().chain(&comm).sum::<f64>() <= setup.total_power;
    let mut trace = IterationTrace::new();
    let mut last_feasible = feasible.then(|| PowerAllocation {
        sensing: sensing.clone(),
        comm: comm.clone(),
    });

    for n in 1..=config.max_iters {
        let fail = |error: Error, last: &Option<PowerAllocation>, trace: &IterationTrace| AllocationFailure {
            error,
            last_feasible: last.clone(),
            trace: trace.clone(),
        };
        let j0 = setup.fim(&sensing);
        let mut b = ProblemBuilder::new();
        let ps: Vec<Var> = (0..kk).map(|i| b.nonneg(format!("P_s[{i}]"))).collect();
        let pc: Vec<Var> = (0..kk).map(|i| b.scalar(format!("P_c[{i}]"))).collect();
        let om: Vec<Var> = (0..kk).map(|i| b.nonneg(format!("omega[{i}]"))).collect();
        let rho = b.nonneg("rho");
        let j = setup.fim_expr(&ps);
        let tr = conic::trace_inverse_epigraph(&mut b, &j);
        let mut inverse = None;
        for k in 0..kk {
            let terms = sca_linearize(&j0, &j, &om[k].into(), omega0[k], config.linearization)
                .map_err(|e| fail(e, &last_feasible, &trace))?;
            let r = to_dmatrix3_col(&setup.offset[k]);
            b.le(
                format!("Bernstein rate UAV {k}"),
                tr.clone() + (2.0 * e).sqrt() * om[k] + e * rho - setup.gamma[k] * pc[k] + setup.dist2[k],
                0.0,
            );
            b.le(
                format!("Bernstein norm UAV {k}"),
                terms.f1 + terms.inverse.dot(&(&r * r.transpose())) * 2.0 - terms.f2,
                0.0,
            );
            inverse.get_or_insert(terms.inverse);
        }
        let inverse = inverse.expect("at least one UAV").symmetrize();
        b.psd(
            "Bernstein spectral",
            MatExpr::scaled_matrix(rho, &DMatrix::identity(3, 3)) - inverse,
        );
        b.le(
            "power budget",
            conic::sum(ps.iter().chain(&pc).copied()),
            setup.total_power,
        );
        b.minimize(tr);
        let problem = b.build().map_err(|e| fail(e, &last_feasible, &trace))?;
        let report = setup.solve(&problem);
        let statuses = vec![status_of("SCA subproblem", &report)];

        let previous = objective;
        let stall = match report.status {
            Status::Optimal => {
                let candidate: Vec<f64> = ps.iter().map(|v| report.value(*v).max(0.0)).collect();
                let bound = if feasible { previous } else { f64::INFINITY };
                match backtrack(&setup, &sensing, bound, &candidate, certify) {
                    Some(acc) => {
                        sensing = acc.sensing;
                        objective = acc.objective;
                        (comm, omega0) = acc.certificate;
                        feasible = true;
                        let rho = max_eigenvalue3(&setup.fim(&sensing).try_inverse().expect("certified"));
                        trace.records.push(IterationRecord {
                            iteration: n,
                            objective,
                            sensing: sensing.clone(),
                            comm: comm.clone(),
                            auxiliary: Auxiliary::Bernstein {
                                omega: omega0.clone(),
                                rho,
                            },
                            subproblems: statuses.clone(),
                            step: acc.theta,
                        });
                        last_feasible = Some(PowerAllocation {
                            sensing: sensing.clone(),
                            comm: comm.clone(),
                        });
                        None
                    }
                    None => Some("no step toward the SCA solution passes the exact check".to_string()),
                }
            }
            Status::Infeasible => Some(format!("SCA subproblem: {}", report.message)),
            Status::NumericalFailure => {
                return Err(fail(
                    subproblem_error("SCA subproblem", &report),
                    &last_feasible,
                    &trace,
                ))
            }
        };
        if let Some(reason) = stall {
            if !feasible {
                return Err(fail(
                    Error::BudgetInfeasible(format!(
                        "no allocation meets the outage constraint within {:.6e} W ({reason})",
                        setup.total_power
                    )),
                    &last_feasible,
                    &trace,
                ));
            }
            if trace.records.is_empty() {
                // The starting point is feasible; report it as the result.
                trace.records.push(IterationRecord {
                    iteration: n,
                    objective,
                    sensing: sensing.clone(),
                    comm: comm.clone(),
                    auxiliary: Auxiliary::Bernstein {
                        omega: omega0.clone(),
                        rho: max_eigenvalue3(&j0.try_inverse().expect("certified")),
                    },
                    subproblems: statuses,
                    step: 0.0,
                });
            }
            trace.stop = StopReason::Stalled(reason);
            break;
        }
        if converged(previous, objective, config.tolerance) {
            trace.stop = StopReason::Converged;
            break;
        }
    }

    Ok(AllocationOutcome {
        allocation: last_feasible.expect("feasible after the first accepted step"),
        crb: objective,
        trace,
    })
}

fn to_dmatrix3_col(v: &Vector3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 1, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocators::solve_nonrobust;
    use crate::geometry::reference_scenario as triangle;
    use approx::assert_relative_eq;

    fn j_sample() -> Matrix3<f64> {
        Matrix3::new(2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 0.8)
    }

    #[test]
    fn fixed_j_program_matches_closed_form() {
        let s = triangle();
        let j = j_sample();
        let mut b = ProblemBuilder::new();
        let pc = b.scalar("pc");
        let om = b.scalar("omega");
        let rho = b.scalar("rho");
        bernstein_constraints(&mut b, &s, 2, 8.0, &pc.into(), &j, om, rho, 0.05).unwrap();
        b.minimize(pc);
        let r = conic::solve(&b.build().unwrap(), 1e-10);
        assert_eq!(r.status, Status::Optimal, "{}", r.message);
        let want = bernstein_exact_comm(&s, 2, 8.0, &j, 0.05).unwrap();
        assert_relative_eq!(r.value(pc), want, max_relative = 1e-8);
        let inv = j.try_inverse().unwrap();
        assert_relative_eq!(r.value(rho), max_eigenvalue3(&inv), max_relative = 1e-5);
    }

    #[test]
    fn f1_matches_finite_difference() {
        let j0 = j_sample();
        let dir = Matrix3::new(0.4, -0.2, 0.1, -0.2, 0.3, 0.05, 0.1, 0.05, -0.25);
        let mut b = ProblemBuilder::new();
        let t = b.scalar("t");
        let om = b.scalar("omega");
        let fim = MatExpr::constant(to_dmatrix3(&j0)) + MatExpr::term(t, to_dmatrix3(&dir));
        let terms = sca_linearize(&j0, &fim, &om.into(), 3.0, Linearization::Frechet).unwrap();
        let f = |x: f64| {
            let inv = (j0 + dir * x).try_inverse().unwrap();
            (inv * inv).trace()
        };
        let h = 1e-5;
        let fd = (f(h) - f(-h)) / (2.0 * h);
        let slope = terms.f1.coefficient(t);
        assert_relative_eq!(slope, fd, max_relative = 1e-7);
        assert_relative_eq!(terms.f1.constant_part(), f(0.0), max_relative = 1e-12);

        // Fréchet expansion of J⁻¹ has the finite-difference slope and is symmetric.
        let inv = |x: f64| (j0 + dir * x).try_inverse().unwrap();
        let fd = (inv(h) - inv(-h)) / (2.0 * h);
        let slope = terms.inverse.eval(&[1.0, 0.0]) - terms.inverse.eval(&[0.0, 0.0]);
        assert!((slope - to_dmatrix3(&fd)).amax() < 1e-7);
        assert!(terms.inverse.asymmetry() < 1e-12);

        // ω² expansion: tangent at ω₀.
        assert_relative_eq!(terms.f2.eval(&[0.0, 3.0]), 9.0);
        assert_relative_eq!(terms.f2.coefficient(om), 6.0);
    }

    #[test]
    fn one_sided_differs_off_symmetric() {
        let j0 = j_sample();
        let dir = Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut b = ProblemBuilder::new();
        let t = b.scalar("t");
        let om = b.scalar("omega");
        let fim = MatExpr::constant(to_dmatrix3(&j0)) + MatExpr::term(t, to_dmatrix3(&dir));
        let a = sca_linearize(&j0, &fim, &om.into(), 1.0, Linearization::Frechet).unwrap();
        let b2 = sca_linearize(&j0, &fim, &om.into(), 1.0, Linearization::OneSided).unwrap();
        assert_eq!(a.f1, b2.f1);
        assert!(b2.inverse.asymmetry() > 1e-3);
    }

    #[test]
    fn allocation_is_certified_and_monotone() {
        let s = triangle();
        let cfg = AllocatorConfig::new(8.0, 6.0);
        let out = solve_bisca(&s, &cfg, 0.05).unwrap();
        let obj = out.trace.objectives();
        for w in obj.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(out.allocation.total() <= 6.0 * (1.0 + 1e-9));
        let j = Setup::new(&s, &cfg).unwrap().fim(&out.allocation.sensing);
        for k in 0..3 {
            let need = bernstein_exact_comm(&s, k, 8.0, &j, 0.05).unwrap();
            assert_relative_eq!(out.allocation.comm[k], need, max_relative = 1e-12);
        }
        let nr = solve_nonrobust(&s, &cfg).unwrap();
        assert!(out.allocation.total_comm() > nr.allocation.total_comm());
        assert!(out.crb >= nr.crb * (1.0 - 1e-9));
    }
}
