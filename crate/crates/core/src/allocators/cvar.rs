//! Distributionally robust LSE: every distribution with mean zero and
//! covariance `J_p⁻¹`.
//!
//! The rate loss `L(Δu) = ‖r_k + Δu‖² − γ_k P_c,k` is quadratic, so its
//! worst-case CVaR at level `ε` over the moment set is the optimum of
//!
//! ```text
//! min χ + tr(Ω M)/ε   s.t.   M ⪰ 0,   M − [[A, b], [bᵀ, c − χ]] ⪰ 0
//! ```
//!
//! for `L(ξ) = ξᵀAξ + 2bᵀξ + c` and second-moment matrix `Ω`. Requiring the
//! worst-case CVaR at `ε = P_out` to be non-positive bounds the outage by
//! `P_out` for every distribution in the set.
//!
//! In the sensing subproblem `tr(D M)` with `D = diag(J⁻¹, 1)` is expanded to
//! first order in `J` around the current iterate.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::conic::{self, Block, LinExpr, MatExpr, ProblemBuilder, SolverOptions, Status, SymVar, Var};
use crate::error::{Error, Result};
use crate::geometry::Scenario;
use crate::linalg::to_dmatrix3;

use super::{
    backtrack, converged, gamma, status_of, subproblem_error, AllocationFailure, AllocationOutcome, AllocationResult,
    AllocatorConfig, Auxiliary, IterationRecord, IterationTrace, Linearization, PowerAllocation, RobustnessModel,
    Setup, StopReason,
};

/// Quadratic loss `ξᵀAξ + 2bᵀξ + c`.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: LinExpr,
}

/// Adds the worst-case CVaR certificate for `loss` to `builder` and returns
/// `(M, χ, χ + tr(Ω M)/ε)`. Minimizing the returned expression gives the
/// worst-case CVaR over distributions with second-moment matrix
/// `Ω = E[[ξ; 1][ξ; 1]ᵀ]`.
pub fn worst_case_cvar(
    builder: &mut ProblemBuilder,
    label: &str,
    loss: &QuadraticLoss,
    second_moment: &DMatrix<f64>,
    epsilon: f64,
) -> Result<(SymVar, Var, LinExpr)> {
    let n = loss.a.nrows();
    if loss.a.ncols() != n || loss.b.len() != n || second_moment.shape() != (n + 1, n + 1) {
        return Err(Error::MalformedProblem(format!(
            "loss of dimension {n} does not match a {}x{} moment matrix",
            second_moment.nrows(),
            second_moment.ncols()
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidInput(format!(
            "CVaR level must lie in (0, 1), got {epsilon}"
        )));
    }
    let m = builder.symmetric(&format!("M[{label}]"), n + 1);
    let chi = builder.scalar(format!("chi[{label}]"));
    builder.psd(format!("CVaR moment PSD {label}"), m.expr());
    let b = DMatrix::from_column_slice(n, 1, loss.b.as_slice());
    let lifted = MatExpr::blocks(&[
        vec![Block::Const(loss.a.clone()), Block::Const(b.clone())],
        vec![
            Block::Const(b.transpose()),
            Block::Expr(MatExpr::scalar(loss.c.clone() - chi)),
        ],
    ])?;
    builder.psd(format!("CVaR loss cover {label}"), m.expr() - lifted);
    let value = LinExpr::from(chi) + m.expr().dot(second_moment) * (1.0 / epsilon);
    Ok((m, chi, value))
}

fn rate_loss(scenario: &Scenario, k: usize, rate_floor: f64, comm: &LinExpr) -> QuadraticLoss {
    let r = scenario.offset(k);
    QuadraticLoss {
        a: DMatrix::identity(3, 3),
        b: DVector::from_column_slice(r.as_slice()),
        c: LinExpr::constant(r.norm_squared()) - comm.clone() * gamma(scenario, k, rate_floor),
    }
}

/// `diag(J⁻¹, 1)`, the second moment of `[Δu; 1]`.
fn moment_matrix(fim: &Matrix3<f64>) -> Result<DMatrix<f64>> {
    let inv = fim
        .try_inverse()
        .ok_or_else(|| Error::Numerical("information matrix is singular".into()))?;
    let mut d = DMatrix::identity(4, 4);
    d.view_mut((0, 0), (3, 3)).copy_from(&to_dmatrix3(&inv));
    Ok(d)
}

/// Adds the worst-case CVaR rate constraint for UAV `k` at a fixed
/// information matrix and returns its certificate variables `(M, χ)`.
#[allow(clippy::too_many_arguments)]
pub fn cvar_constraints(
    builder: &mut ProblemBuilder,
    scenario: &Scenario,
    k: usize,
    rate_floor: f64,
    comm: &LinExpr,
    fim: &Matrix3<f64>,
    p_out: f64,
) -> Result<(SymVar, Var)> {
    RobustnessModel::ArbitraryMoments { p_out }.validate()?;
    let d = moment_matrix(fim)?;
    let loss = rate_loss(scenario, k, rate_floor, comm);
    let (m, chi, value) = worst_case_cvar(builder, &format!("UAV {k}"), &loss, &d, p_out)?;
    builder.le(format!("CVaR rate UAV {k}"), value, 0.0);
    Ok((m, chi))
}

/// Certified communication power for one UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct CvarComm {
    pub comm: f64,
    pub m: DMatrix<f64>,
    pub chi: f64,
}

/// Smallest `P_c,k` whose worst-case CVaR constraint holds at a fixed `J`.
pub fn cvar_exact_comm(
    scenario: &Scenario,
    k: usize,
    rate_floor: f64,
    fim: &Matrix3<f64>,
    p_out: f64,
    options: &SolverOptions,
) -> Result<CvarComm> {
    let mut b = ProblemBuilder::new();
    let pc = b.scalar("P_c");
    let (m, chi) = cvar_constraints(&mut b, scenario, k, rate_floor, &pc.into(), fim, p_out)?;
    b.minimize(pc);
    let report = conic::solve_with(&b.build()?, options);
    if !report.is_optimal() {
        return Err(subproblem_error(&format!("CVaR communication UAV {k}"), &report));
    }
    Ok(CvarComm {
        comm: report.value(pc),
        m: report.matrix(&m),
        chi: report.value(chi),
    })
}

/// Weight `W` with `tr(D M) ≈ tr(D₀ M) − ⟨ΔJ, W⟩` for `ΔJ = J − J₀`.
fn linear_weight(d0: &DMatrix<f64>, m: &DMatrix<f64>, linearization: Linearization) -> DMatrix<f64> {
    let w = match linearization {
        Linearization::Frechet => d0 * m * d0,
        Linearization::OneSided => {
            let p = d0 * d0 * m;
            (&p + p.transpose()) * 0.5
        }
    };
    w.view((0, 0), (3, 3)).into_owned()
}

type Certificate = (Vec<f64>, (Vec<DMatrix<f64>>, Vec<f64>));

/// Alternating worst-case CVaR allocator.
///
/// The communication step computes the certified minimum `P_c,k` and its
/// `(M_k, χ_k)` at the current `J_p`, one UAV at a time. The sensing step
/// minimizes `tr(J_p⁻¹)` with those certificates fixed and `tr(D M_k)`
/// linearized in `J_p`; its solution is re-certified and the step shortened
/// until the budget holds and the objective does not increase.
pub fn solve_cvarao(scenario: &Scenario, config: &AllocatorConfig, p_out: f64) -> AllocationResult {
    RobustnessModel::ArbitraryMoments { p_out }.validate()?;
    let setup = Setup::new(scenario, config)?;
    let kk = setup.k;
    let certify_err = |ps: &[f64]| -> Result<Certificate> {
        let j = setup.fim(ps);
        let mut pc = Vec::with_capacity(kk);
        let mut ms = Vec::with_capacity(kk);
        let mut chis = Vec::with_capacity(kk);
        for k in 0..kk {
            let c = cvar_exact_comm(scenario, k, config.rate_floor, &j, p_out, &setup.solver)?;
            pc.push(c.comm);
            ms.push(c.m);
            chis.push(c.chi);
        }
        Ok((pc, (ms, chis)))
    };

    let mut sensing = setup.initial.clone();
    let mut objective = setup.crb(&sensing).map_err(AllocationFailure::from)?;
    let (mut comm, (mut ms, mut chis)) = certify_err(&sensing).map_err(AllocationFailure::from)?;
    let mut feasible = sensing.iter().chain(&comm).sum::<f64>() <= setup.total_power;
    let mut trace = IterationTrace::new();
    let mut last_feasible = feasible.then(|| PowerAllocation {
        sensing: sensing.clone(),
        comm: comm.clone(),
    });
    let frozen = setup.fim(&sensing);

    for n in 1..=config.max_iters {
        let fail = |error: Error, last: &Option<PowerAllocation>, trace: &IterationTrace| AllocationFailure {
            error,
            last_feasible: last.clone(),
            trace: trace.clone(),
        };
        let budget = setup.total_power - comm.iter().sum::<f64>();
        let previous = objective;
        let mut statuses = Vec::new();
        let stall = if budget <= 0.0 {
            Some(format!(
                "CVaR rate floor alone needs {:.6e} W",
                setup.total_power - budget
            ))
        } else {
            let j_lin = if config.freeze_moment_point {
                frozen
            } else {
                setup.fim(&sensing)
            };
            let d0 = moment_matrix(&j_lin).map_err(|e| fail(e, &last_feasible, &trace))?;
            let (mut b, ps, j) = setup.sensing_program(budget);
            let delta = j - MatExpr::constant(to_dmatrix3(&j_lin));
            for k in 0..kk {
                let w = linear_weight(&d0, &ms[k], config.linearization);
                let base = chis[k] + d0.component_mul(&ms[k]).sum() / p_out;
                b.le(
                    format!("CVaR rate UAV {k}"),
                    LinExpr::constant(base) - delta.dot(&w) * (1.0 / p_out),
                    0.0,
                );
            }
            let problem = b.build().map_err(|e| fail(e, &last_feasible, &trace))?;
            let report = setup.solve(&problem);
            statuses.push(status_of("sensing", &report));
            match report.status {
                Status::Optimal => {
                    let candidate: Vec<f64> = ps.iter().map(|v| report.value(*v).max(0.0)).collect();
                    let bound = if feasible { previous } else { f64::INFINITY };
                    match backtrack(&setup, &sensing, bound, &candidate, |p| certify_err(p).ok()) {
                        Some(acc) => {
                            sensing = acc.sensing;
                            objective = acc.objective;
                            (comm, (ms, chis)) = acc.certificate;
                            feasible = true;
                            trace.records.push(IterationRecord {
                                iteration: n,
                                objective,
                                sensing: sensing.clone(),
                                comm: comm.clone(),
                                auxiliary: Auxiliary::Cvar {
                                    m: ms.clone(),
                                    chi: chis.clone(),
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
                        None => Some("no step toward the sensing solution passes the exact check".to_string()),
                    }
                }
                Status::Infeasible => Some(format!("sensing subproblem: {}", report.message)),
                Status::NumericalFailure => {
                    return Err(fail(
                        subproblem_error("sensing subproblem", &report),
                        &last_feasible,
                        &trace,
                    ))
                }
            }
        };
        if let Some(reason) = stall {
            if !feasible {
                return Err(fail(
                    Error::BudgetInfeasible(format!(
                        "no allocation meets the CVaR constraint within {:.6e} W ({reason})",
                        setup.total_power
                    )),
                    &last_feasible,
                    &trace,
                ));
            }
            if trace.records.is_empty() {
                trace.records.push(IterationRecord {
                    iteration: n,
                    objective,
                    sensing: sensing.clone(),
                    comm: comm.clone(),
                    auxiliary: Auxiliary::Cvar {
                        m: ms.clone(),
                        chi: chis.clone(),
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
