//! Ellipsoidal LSE: `Δuᵀ J_p Δu ≤ δ`.
//!
//! The worst-case rate constraint is `‖û + Δu − p_k‖² ≤ γ_k P_c,k` for every
//! `Δu` in the ellipsoid. By the S-procedure it holds iff some `λ_k ≥ 0`
//! makes
//!
//! ```text
//! λ_k [[J_p, 0], [0, −δ]] − [[I, r_k], [r_kᵀ, d_k² − γ_k P_c,k]] ⪰ 0
//! ```
//!
//! with `r_k = û − p_k`. The product `λ_k J_p` is bilinear, so the
//! allocator alternates between the communication powers with multipliers
//! (sensing powers fixed) and the sensing powers (multipliers and
//! communication powers fixed).

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};

use crate::conic::{self, Block, LinExpr, MatExpr, ProblemBuilder, Status, Var};
use crate::error::{Error, Result};
use crate::geometry::Scenario;
use crate::linalg::to_dmatrix3;

use super::{
    converged, gamma, status_of, subproblem_error, AllocationFailure, AllocationOutcome, AllocationResult,
    AllocatorConfig, Auxiliary, IterationRecord, IterationTrace, PowerAllocation, RobustnessModel, Setup, StopReason,
};

/// The 4×4 S-procedure matrix for UAV `k`, affine in the supplied
/// expressions. One of `fim` and `multiplier` must be constant.
pub fn ellipsoid_lmi(
    scenario: &Scenario,
    k: usize,
    rate_floor: f64,
    comm: &LinExpr,
    fim: &MatExpr,
    multiplier: &LinExpr,
    delta: f64,
) -> Result<MatExpr> {
    if fim.dim() != 3 {
        return Err(Error::MalformedProblem(format!(
            "information matrix must be 3x3, got {}",
            fim.dim()
        )));
    }
    let fim_constant = fim.terms().next().is_none();
    let mult_constant = multiplier.terms().next().is_none();
    let scaled = if mult_constant {
        fim.clone() * multiplier.constant_part()
    } else if fim_constant {
        MatExpr::scaled_matrix(multiplier, fim.constant_part())
    } else {
        return Err(Error::MalformedProblem(
            "S-procedure term is bilinear: fix either the multiplier or the information matrix".into(),
        ));
    };
    let r = scenario.offset(k);
    let g = gamma(scenario, k, rate_floor);
    let corner = multiplier.clone() * (-delta) - r.norm_squared() + comm.clone() * g;
    let column = DMatrix::from_column_slice(3, 1, (-r).as_slice());
    MatExpr::blocks(&[
        vec![Block::Expr(scaled - MatExpr::identity(3)), Block::Const(column.clone())],
        vec![Block::Const(column.transpose()), Block::Expr(MatExpr::scalar(corner))],
    ])
}

/// Smallest `P_c,k` satisfying the S-procedure LMI for a fixed `J`, with the
/// optimal multiplier. Computed from the eigen-decomposition of `J` by
/// solving the scalar stationarity condition in `λ` by bisection.
pub fn ellipsoid_exact_comm(
    scenario: &Scenario,
    k: usize,
    rate_floor: f64,
    fim: &Matrix3<f64>,
    delta: f64,
) -> (f64, f64) {
    let eig = SymmetricEigen::new(*fim);
    let r = eig.eigenvectors.transpose() * scenario.offset(k);
    let mu = eig.eigenvalues;
    let lo0 = 1.0 / mu.min();
    // h(λ) = λδ + Σ r̃ᵢ²/(λμᵢ − 1) is convex on λ > 1/μ_min.
    let h = |l: f64| l * delta + (0..3).map(|i| r[i] * r[i] / (l * mu[i] - 1.0)).sum::<f64>();
    let dh = |l: f64| {
        delta
            - (0..3)
                .map(|i| r[i] * r[i] * mu[i] / (l * mu[i] - 1.0).powi(2))
                .sum::<f64>()
    };
    let mut hi = 2.0 * lo0;
    while dh(hi) < 0.0 {
        hi = lo0 + 2.0 * (hi - lo0);
    }
    let mut lo = lo0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if dh(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = hi;
    let g = gamma(scenario, k, rate_floor);
    ((r.norm_squared() + h(lambda)) / g, lambda)
}

/// Alternating S-procedure allocator for the ellipsoidal LSE model.
///
/// Each iteration solves the communication subproblem (minimum `Σ P_c`
/// with one multiplier per UAV at the current `J_p`) and then the sensing
/// subproblem (`min tr(J_p⁻¹)` under the remaining budget with the
/// multipliers fixed). The previous sensing powers are always feasible for
/// the sensing subproblem, so the objective never increases; when that
/// subproblem has no strictly feasible point the previous powers are kept
/// and the run stops.
pub fn solve_sao(scenario: &Scenario, config: &AllocatorConfig, delta: f64) -> AllocationResult {
    RobustnessModel::Ellipsoid { delta }.validate()?;
    let setup = Setup::new(scenario, config)?;
    let kk = setup.k;
    let mut sensing = setup.initial.clone();
    let mut objective = setup.crb(&sensing).map_err(AllocationFailure::from)?;
    let mut trace = IterationTrace::new();
    let mut last_feasible: Option<PowerAllocation> = None;

    let fail = |error: Error, last: &Option<PowerAllocation>, trace: &IterationTrace| AllocationFailure {
        error,
        last_feasible: last.clone(),
        trace: trace.clone(),
    };

    for n in 1..=config.max_iters {
        // Communication subproblem.
        let j0m = setup.fim(&sensing);
        let j0 = to_dmatrix3(&j0m);
        // Multipliers grow like δ^(-1/2); each is expressed in units of its
        // closed-form optimum to keep the program well scaled.
        let scale: Vec<f64> = (0..kk)
            .map(|k| ellipsoid_exact_comm(scenario, k, config.rate_floor, &j0m, delta).1)
            .collect();
        let mut b = ProblemBuilder::new();
        let lam: Vec<Var> = (0..kk).map(|i| b.nonneg(format!("lambda[{i}]"))).collect();
        let pc: Vec<Var> = (0..kk).map(|i| b.scalar(format!("P_c[{i}]"))).collect();
        for k in 0..kk {
            let lmi = ellipsoid_lmi(
                scenario,
                k,
                config.rate_floor,
                &pc[k].into(),
                &MatExpr::constant(j0.clone()),
                &(lam[k] * scale[k]),
                delta,
            )
            .map_err(|e| fail(e, &last_feasible, &trace))?;
            b.psd(format!("S-procedure UAV {k}"), lmi);
        }
        b.minimize(conic::sum(pc.iter().copied()));
        let problem = b.build().map_err(|e| fail(e, &last_feasible, &trace))?;
        let comm_report = setup.solve(&problem);
        if !comm_report.is_optimal() {
            return Err(fail(
                subproblem_error("communication subproblem", &comm_report),
                &last_feasible,
                &trace,
            ));
        }
        let comm: Vec<f64> = pc.iter().map(|v| comm_report.value(*v)).collect();
        let multipliers: Vec<f64> = lam.iter().zip(&scale).map(|(v, s)| comm_report.value(*v) * s).collect();
        let budget = setup.total_power - comm.iter().sum::<f64>();
        if budget <= 0.0 {
            return Err(fail(
                Error::BudgetInfeasible(format!(
                    "worst-case rate floor needs {:.6e} W of a {:.6e} W budget",
                    setup.total_power - budget,
                    setup.total_power
                )),
                &last_feasible,
                &trace,
            ));
        }

        // Sensing subproblem.
        let (mut b, ps, j) = setup.sensing_program(budget);
        for k in 0..kk {
            let lmi = ellipsoid_lmi(
                scenario,
                k,
                config.rate_floor,
                &LinExpr::constant(comm[k]),
                &j,
                &LinExpr::constant(multipliers[k]),
                delta,
            )
            .map_err(|e| fail(e, &last_feasible, &trace))?;
            b.psd(format!("S-procedure UAV {k}"), lmi);
        }
        let problem = b.build().map_err(|e| fail(e, &last_feasible, &trace))?;
        let sense_report = setup.solve(&problem);
        let statuses = vec![
            status_of("communication", &comm_report),
            status_of("sensing", &sense_report),
        ];

        let previous = objective;
        let mut step = 0.0;
        let mut stall = None;
        match sense_report.status {
            Status::Optimal => {
                let candidate: Vec<f64> = ps.iter().map(|v| sense_report.value(*v).max(0.0)).collect();
                match setup.crb(&candidate) {
                    Ok(obj) if obj <= previous => {
                        sensing = candidate;
                        objective = obj;
                        step = 1.0;
                    }
                    _ => stall = Some("sensing step did not decrease the objective".to_string()),
                }
            }
            Status::Infeasible => {
                let fits = sensing.iter().sum::<f64>() <= budget * (1.0 + 1e-12);
                if n == 1 && !fits {
                    return Err(fail(
                        Error::BudgetInfeasible(format!(
                            "no sensing allocation fits the {budget:.6e} W left after the worst-case rate floor"
                        )),
                        &last_feasible,
                        &trace,
                    ));
                }
                stall = Some(format!("sensing subproblem: {}", sense_report.message));
            }
            Status::NumericalFailure => {
                return Err(fail(
                    subproblem_error("sensing subproblem", &sense_report),
                    &last_feasible,
                    &trace,
                ))
            }
        }

        let allocation = PowerAllocation {
            sensing: sensing.clone(),
            comm: comm.clone(),
        };
        trace.records.push(IterationRecord {
            iteration: n,
            objective,
            sensing: sensing.clone(),
            comm,
            auxiliary: Auxiliary::Multipliers(multipliers),
            subproblems: statuses,
            step,
        });
        last_feasible = Some(allocation);
        if let Some(reason) = stall {
            trace.stop = StopReason::Stalled(reason);
            break;
        }
        if converged(previous, objective, config.tolerance) {
            trace.stop = StopReason::Converged;
            break;
        }
    }

    let allocation = last_feasible.expect("at least one iteration ran");
    Ok(AllocationOutcome {
        crb: objective,
        allocation,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocators::solve_nonrobust;
    use crate::geometry::reference_scenario as triangle;
    use crate::linalg::min_eigenvalue;
    use approx::assert_relative_eq;

    #[test]
    fn lmi_is_psd_exactly_at_the_closed_form() {
        let s = triangle();
        let setup = Setup::new(&s, &AllocatorConfig::new(8.0, 6.0)).unwrap();
        let j = setup.fim(&[1.0, 0.5, 2.0]);
        for k in 0..3 {
            let (pc, lam) = ellipsoid_exact_comm(&s, k, 8.0, &j, 1.0);
            let m = |p: f64| {
                ellipsoid_lmi(
                    &s,
                    k,
                    8.0,
                    &LinExpr::constant(p),
                    &MatExpr::constant(to_dmatrix3(&j)),
                    &LinExpr::constant(lam),
                    1.0,
                )
                .unwrap()
                .eval(&[])
            };
            assert!(min_eigenvalue(&m(pc * (1.0 + 1e-9))) >= 0.0);
            assert!(min_eigenvalue(&m(pc * (1.0 - 1e-6))) < 0.0);
        }
    }

    #[test]
    fn bilinear_is_rejected() {
        let s = triangle();
        let mut b = ProblemBuilder::new();
        let x = b.scalar("x");
        let l = b.scalar("l");
        let j = MatExpr::scaled_matrix(x, &DMatrix::identity(3, 3));
        let err = ellipsoid_lmi(&s, 0, 8.0, &LinExpr::constant(1.0), &j, &l.into(), 1.0).unwrap_err();
        assert!(matches!(err, Error::MalformedProblem(_)));
    }

    #[test]
    fn comm_step_matches_closed_form() {
        let s = triangle();
        let cfg = AllocatorConfig::new(8.0, 6.0);
        let setup = Setup::new(&s, &cfg).unwrap();
        let j = setup.fim(&[1.0, 1.0, 1.0]);
        let mut b = ProblemBuilder::new();
        let lam = b.nonneg("lambda");
        let pc = b.scalar("pc");
        let lmi = ellipsoid_lmi(
            &s,
            1,
            8.0,
            &pc.into(),
            &MatExpr::constant(to_dmatrix3(&j)),
            &lam.into(),
            0.7,
        )
        .unwrap();
        b.psd("s", lmi);
        b.minimize(pc);
        let r = conic::solve(&b.build().unwrap(), 1e-10);
        let (want, want_lam) = ellipsoid_exact_comm(&s, 1, 8.0, &j, 0.7);
        assert_relative_eq!(r.value(pc), want, max_relative = 1e-7);
        assert_relative_eq!(r.value(lam), want_lam, max_relative = 1e-3);
    }

    #[test]
    fn monotone_and_robust() {
        let s = triangle();
        let cfg = AllocatorConfig::new(8.0, 6.0);
        let out = solve_sao(&s, &cfg, 1.0).unwrap();
        let obj = out.trace.objectives();
        for w in obj.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert!(out.allocation.total() <= 6.0 * (1.0 + 1e-9));
        let setup = Setup::new(&s, &cfg).unwrap();
        let j = setup.fim(&out.allocation.sensing);
        for k in 0..3 {
            let (need, _) = ellipsoid_exact_comm(&s, k, 8.0, &j, 1.0);
            assert!(out.allocation.comm[k] >= need * (1.0 - 1e-7));
        }
        let nr = solve_nonrobust(&s, &cfg).unwrap();
        assert!(out.allocation.total_comm() > nr.allocation.total_comm());
    }

    #[test]
    fn small_delta_approaches_nonrobust() {
        let s = triangle();
        let cfg = AllocatorConfig::new(8.0, 6.0);
        let nr = solve_nonrobust(&s, &cfg).unwrap();
        let out = solve_sao(&s, &cfg, 1e-6).unwrap();
        for k in 0..3 {
            assert_relative_eq!(out.allocation.comm[k], nr.allocation.comm[k], max_relative = 1e-2);
        }
    }
}
