//! Baseline that trusts the UE estimate.

use crate::conic::{self, ProblemBuilder, Var};
use crate::error::Error;
use crate::geometry::Scenario;

use super::{
    status_of, subproblem_error, AllocationFailure, AllocationOutcome, AllocationResult, AllocatorConfig, Auxiliary,
    IterationRecord, IterationTrace, PowerAllocation, Setup, StopReason,
};

/// `min tr(J_p⁻¹)` subject to `γ_k P_c,k ≥ d_k²`, the power budget and
/// non-negative powers, as one convex program.
///
/// The trace keeps the solver's communication powers; the returned
/// allocation uses the binding value `d_k²/γ_k` for each UAV.
pub fn solve_nonrobust(scenario: &Scenario, config: &AllocatorConfig) -> AllocationResult {
    let setup = Setup::new(scenario, config)?;
    let nominal: Vec<f64> = (0..setup.k).map(|k| setup.nominal_comm(k)).collect();
    let need: f64 = nominal.iter().sum();
    if need >= setup.total_power {
        return Err(Error::BudgetInfeasible(format!(
            "rate floor needs {need:.6e} W of a {:.6e} W budget before any sensing",
            setup.total_power
        ))
        .into());
    }

    let mut b = ProblemBuilder::new();
    let ps: Vec<Var> = (0..setup.k).map(|i| b.nonneg(format!("P_s[{i}]"))).collect();
    let pc: Vec<Var> = (0..setup.k).map(|i| b.scalar(format!("P_c[{i}]"))).collect();
    for (k, p) in pc.iter().enumerate() {
        b.ge(format!("rate floor UAV {k}"), setup.gamma[k] * *p, setup.dist2[k]);
    }
    b.le(
        "power budget",
        conic::sum(ps.iter().chain(&pc).copied()),
        setup.total_power,
    );
    let j = setup.fim_expr(&ps);
    let obj = conic::trace_inverse_epigraph(&mut b, &j);
    b.minimize(obj);
    let problem = b.build().map_err(AllocationFailure::from)?;
    let report = setup.solve(&problem);
    if !report.is_optimal() {
        return Err(subproblem_error("non-robust program", &report).into());
    }

    let sensing: Vec<f64> = ps.iter().map(|v| report.value(*v).max(0.0)).collect();
    let raw_comm: Vec<f64> = pc.iter().map(|v| report.value(*v)).collect();
    let crb = setup.crb(&sensing).map_err(AllocationFailure::from)?;
    let trace = IterationTrace {
        records: vec![IterationRecord {
            iteration: 1,
            objective: crb,
            sensing: sensing.clone(),
            comm: raw_comm,
            auxiliary: Auxiliary::None,
            subproblems: vec![status_of("non-robust program", &report)],
            step: 1.0,
        }],
        stop: StopReason::Direct,
    };
    Ok(AllocationOutcome {
        allocation: PowerAllocation { sensing, comm: nominal },
        trace,
        crb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::reference_scenario as triangle;
    use approx::assert_relative_eq;

    #[test]
    fn binding_rate_and_full_budget() {
        let s = triangle();
        let cfg = AllocatorConfig::new(8.0, 6.0);
        let out = solve_nonrobust(&s, &cfg).unwrap();
        let setup = Setup::new(&s, &cfg).unwrap();
        let raw = &out.trace.records[0].comm;
        for (k, pc) in raw.iter().enumerate() {
            assert_relative_eq!(*pc, setup.nominal_comm(k), max_relative = 1e-6);
        }
        assert_relative_eq!(out.allocation.total(), 6.0, max_relative = 1e-6);
        // Symmetric geometry: equal split of the sensing budget.
        for p in &out.allocation.sensing {
            assert_relative_eq!(*p, out.allocation.sensing[0], max_relative = 1e-5);
        }
    }

    #[test]
    fn budget_too_small() {
        let s = triangle();
        let err = solve_nonrobust(&s, &AllocatorConfig::new(8.0, 1.0)).unwrap_err();
        assert!(matches!(err.error, Error::BudgetInfeasible(_)));
    }
}
