//! Power-allocation schemes.
//!
//! * [`solve_nonrobust`] treats the estimated channel as perfect.
//! * [`solve_sao`] protects the rate over an ellipsoidal LSE set with the
//!   S-procedure, alternating a communication and a sensing subproblem.
//! * [`solve_bisca`] bounds the outage under Gaussian LSE with a
//!   Bernstein-type inequality and successive convex approximation.
//! * [`solve_cvarao`] bounds the worst-case CVaR over all LSE distributions
//!   with given mean and covariance.
//!
//! Every robust scheme minimizes `tr(J_p⁻¹)` and checks each candidate
//! sensing allocation against the exact (not linearized) robust constraint
//! before accepting it, shortening the step toward the previous iterate when
//! needed. This keeps every reported iterate feasible and the objective
//! trace non-increasing.

mod bernstein;
mod cvar;
mod ellipsoid;
mod nonrobust;

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::conic::{self, ConicProblem, MatExpr, ProblemBuilder, SolveReport, SolverOptions, Status, Var};
use crate::error::{Error, Result};
use crate::fisher::{fim_basis, trace_inverse};
use crate::geometry::Scenario;
use crate::linalg::to_dmatrix3;

pub use bernstein::{bernstein_constraints, bernstein_exact_comm, exact_omega, sca_linearize, solve_bisca, ScaTerms};
pub use cvar::{cvar_constraints, cvar_exact_comm, solve_cvarao, worst_case_cvar, CvarComm, QuadraticLoss};
pub use ellipsoid::{ellipsoid_exact_comm, ellipsoid_lmi, solve_sao};
pub use nonrobust::solve_nonrobust;

/// Per-UAV sensing and communication powers (W).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub sensing: Vec<f64>,
    pub comm: Vec<f64>,
}

impl PowerAllocation {
    pub fn total(&self) -> f64 {
        self.sensing.iter().chain(&self.comm).sum()
    }

    pub fn total_sensing(&self) -> f64 {
        self.sensing.iter().sum()
    }

    pub fn total_comm(&self) -> f64 {
        self.comm.iter().sum()
    }
}

/// Model of the location sensing error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RobustnessModel {
    /// `Δuᵀ J_p Δu ≤ δ`.
    Ellipsoid { delta: f64 },
    /// `Δu ~ N(0, J_p⁻¹)` with tolerated outage `P_out`.
    Gaussian { p_out: f64 },
    /// Any distribution with mean 0 and covariance `J_p⁻¹`.
    ArbitraryMoments { p_out: f64 },
}

impl RobustnessModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RobustnessModel::Ellipsoid { delta } if !(delta > 0.0) || !delta.is_finite() => {
                Err(Error::InvalidInput(format!("delta must be positive, got {delta}")))
            }
            RobustnessModel::Gaussian { p_out } | RobustnessModel::ArbitraryMoments { p_out }
                if !(p_out > 0.0 && p_out < 1.0) =>
            {
                Err(Error::InvalidInput(format!("p_out must lie in (0, 1), got {p_out}")))
            }
            _ => Ok(()),
        }
    }
}

/// How the first-order expansions of `J⁻¹`-type terms are grouped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Linearization {
    /// Exact symmetric Fréchet derivative `J₀⁻¹ ΔJ J₀⁻¹`.
    #[default]
    Frechet,
    /// One-sided grouping `J₀⁻² ΔJ`; its symmetric part is used inside LMIs.
    OneSided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorConfig {
    /// Rate floor `R̄` (bits/s/Hz).
    pub rate_floor: f64,
    /// Total power `P_total` (W).
    pub total_power: f64,
    /// Relative decrease of `tr(J_p⁻¹)` below which iterations stop.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Starting sensing powers; `None` gives `P_total/(2K)` to every UAV.
    pub initial_sensing: Option<Vec<f64>>,
    /// Relative gap requested from the conic solver.
    pub solver_tol: f64,
    pub linearization: Linearization,
    /// Keep the CVaR moment matrix at its initial value instead of
    /// rebuilding it every iteration.
    pub freeze_moment_point: bool,
}

impl AllocatorConfig {
    pub fn new(rate_floor: f64, total_power: f64) -> Self {
        Self {
            rate_floor,
            total_power,
            tolerance: 1e-6,
            max_iters: 30,
            initial_sensing: None,
            solver_tol: 1e-9,
            linearization: Linearization::Frechet,
            freeze_moment_point: false,
        }
    }

    fn validate(&self, k: usize) -> Result<Vec<f64>> {
        if !(self.rate_floor > 0.0) || !self.rate_floor.is_finite() {
            return Err(Error::InvalidInput(format!(
                "rate_floor must be positive, got {}",
                self.rate_floor
            )));
        }
        if !(self.total_power > 0.0) || !self.total_power.is_finite() {
            return Err(Error::InvalidInput(format!(
                "total_power must be positive, got {}",
                self.total_power
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "solver_tol must be positive, got {}",
                self.solver_tol
            )));
        }
        let init = match &self.initial_sensing {
            None => vec![self.total_power / (2.0 * k as f64); k],
            Some(v) => {
                if v.len() != k {
                    return Err(Error::InvalidInput(format!(
                        "initial_sensing has {} entries for {k} UAVs",
                        v.len()
                    )));
                }
                if v.iter().any(|p| !(*p > 0.0)) {
                    return Err(Error::InvalidInput("initial_sensing entries must be positive".into()));
                }
                if v.iter().sum::<f64>() >= self.total_power {
                    return Err(Error::InvalidInput("initial_sensing exhausts the power budget".into()));
                }
                v.clone()
            }
        };
        Ok(init)
    }
}

/// Auxiliary variables of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum Auxiliary {
    None,
    /// S-procedure multipliers `λ_k`, one per UAV.
    Multipliers(Vec<f64>),
    /// Bernstein slacks.
    Bernstein {
        omega: Vec<f64>,
        rho: f64,
    },
    /// Worst-case CVaR certificates per UAV.
    Cvar {
        m: Vec<DMatrix<f64>>,
        chi: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemStatus {
    pub name: String,
    pub status: Status,
    pub solver_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `tr(J_p⁻¹)` at the accepted sensing powers (m²).
    pub objective: f64,
    pub sensing: Vec<f64>,
    pub comm: Vec<f64>,
    pub auxiliary: Auxiliary,
    pub subproblems: Vec<SubproblemStatus>,
    /// Fraction of the step toward the subproblem solution that was kept.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    /// Relative decrease fell below the tolerance.
    Converged,
    MaxIterations,
    /// The sensing subproblem had no strictly feasible point or produced no
    /// acceptable step; the previous iterate is final.
    Stalled(String),
    /// Single convex program, no iterations.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
}

impl IterationTrace {
    fn new() -> Self {
        Self {
            records: Vec::new(),
            stop: StopReason::MaxIterations,
        }
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationOutcome {
    pub allocation: PowerAllocation,
    pub trace: IterationTrace,
    /// `tr(J_p⁻¹)` at the returned sensing powers (m²).
    pub crb: f64,
}

/// An allocator error together with the last feasible allocation, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationFailure {
    pub error: Error,
    pub last_feasible: Option<PowerAllocation>,
    pub trace: IterationTrace,
}

impl fmt::Display for AllocationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error)?;
        if !self.trace.records.is_empty() {
            write!(f, " (after {} iterations)", self.trace.records.len())?;
        }
        Ok(())
    }
}

impl std::error::Error for AllocationFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for AllocationFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            last_feasible: None,
            trace: IterationTrace::new(),
        }
    }
}

pub type AllocationResult = std::result::Result<AllocationOutcome, AllocationFailure>;

/// Allocation scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    NonRobust,
    SAo,
    BiSca,
    CvarAo,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::NonRobust, Scheme::SAo, Scheme::BiSca, Scheme::CvarAo];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::NonRobust => "nonrobust",
            Scheme::SAo => "s-ao",
            Scheme::BiSca => "bi-sca",
            Scheme::CvarAo => "cvar-ao",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Scheme::ALL.into_iter().find(|x| x.name() == s)
    }

    /// LSE model the scheme protects against, given both robustness knobs.
    pub fn model(self, delta: f64, p_out: f64) -> Option<RobustnessModel> {
        match self {
            Scheme::NonRobust => None,
            Scheme::SAo => Some(RobustnessModel::Ellipsoid { delta }),
            Scheme::BiSca => Some(RobustnessModel::Gaussian { p_out }),
            Scheme::CvarAo => Some(RobustnessModel::ArbitraryMoments { p_out }),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Runs `scheme` with the robustness parameter it needs.
pub fn allocate(
    scheme: Scheme,
    scenario: &Scenario,
    config: &AllocatorConfig,
    delta: f64,
    p_out: f64,
) -> AllocationResult {
    match scheme {
        Scheme::NonRobust => solve_nonrobust(scenario, config),
        Scheme::SAo => solve_sao(scenario, config, delta),
        Scheme::BiSca => solve_bisca(scenario, config, p_out),
        Scheme::CvarAo => solve_cvarao(scenario, config, p_out),
    }
}

/// `γ_k = λ² |â_kᴴ w_k|² / (16π² N₀ (2^R̄ − 1))`, so that the rate floor holds
/// iff `‖û + Δu − p_k‖² ≤ γ_k P_c`.
pub fn gamma(scenario: &Scenario, k: usize, rate_floor: f64) -> f64 {
    let r = scenario.radio();
    r.wavelength.powi(2) * scenario.beam_gain(k) / (16.0 * PI * PI * r.noise_psd * (2f64.powf(rate_floor) - 1.0))
}

/// Quantities shared by every allocator run.
pub(crate) struct Setup {
    pub k: usize,
    pub basis: Vec<Matrix3<f64>>,
    pub gamma: Vec<f64>,
    pub offset: Vec<Vector3<f64>>,
    pub dist2: Vec<f64>,
    pub initial: Vec<f64>,
    pub total_power: f64,
    pub solver: SolverOptions,
}

impl Setup {
    pub fn new(scenario: &Scenario, config: &AllocatorConfig) -> Result<Self> {
        let k = scenario.uav_count();
        let initial = config.validate(k)?;
        let basis = fim_basis(scenario);
        let probe = basis.iter().fold(Matrix3::zeros(), |a, b| a + b);
        if let Err(e) = trace_inverse(&probe) {
            let detail = match e {
                Error::RankDeficient { null_directions, .. } => format!(
                    "UAV directions leave {} unobservable direction(s) {:?}",
                    null_directions.len(),
                    null_directions
                ),
                other => other.to_string(),
            };
            return Err(Error::GeometryInfeasible(detail));
        }
        let gamma: Vec<f64> = (0..k).map(|i| gamma(scenario, i, config.rate_floor)).collect();
        if let Some(i) = gamma.iter().position(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "UAV {i} has no beamforming gain toward the UE estimate"
            )));
        }
        let offset: Vec<Vector3<f64>> = (0..k).map(|i| scenario.offset(i)).collect();
        let dist2 = offset.iter().map(|r| r.norm_squared()).collect();
        Ok(Self {
            k,
            basis,
            gamma,
            offset,
            dist2,
            initial,
            total_power: config.total_power,
            solver: SolverOptions {
                tol: config.solver_tol,
                ..SolverOptions::default()
            },
        })
    }

    pub fn fim(&self, sensing: &[f64]) -> Matrix3<f64> {
        self.basis
            .iter()
            .zip(sensing)
            .fold(Matrix3::zeros(), |a, (b, p)| a + b * *p)
    }

    pub fn crb(&self, sensing: &[f64]) -> Result<f64> {
        trace_inverse(&self.fim(sensing))
    }

    /// `J(P_s)` as an affine expression in the sensing-power variables.
    pub fn fim_expr(&self, sensing: &[Var]) -> MatExpr {
        self.basis
            .iter()
            .zip(sensing)
            .fold(MatExpr::zeros(3), |a, (b, v)| a + MatExpr::term(*v, to_dmatrix3(b)))
    }

    /// Non-robust power `d_k²/γ_k`.
    pub fn nominal_comm(&self, k: usize) -> f64 {
        self.dist2[k] / self.gamma[k]
    }

    pub fn solve(&self, problem: &ConicProblem) -> SolveReport {
        conic::solve_with(problem, &self.solver)
    }

    /// Sensing subproblem skeleton: `min tr(J⁻¹)` over `P_s ≥ 0` with
    /// `Σ P_s ≤ budget`.
    pub fn sensing_program(&self, budget: f64) -> (ProblemBuilder, Vec<Var>, MatExpr) {
        let mut b = ProblemBuilder::new();
        let ps: Vec<Var> = (0..self.k).map(|i| b.nonneg(format!("P_s[{i}]"))).collect();
        let j = self.fim_expr(&ps);
        let obj = conic::trace_inverse_epigraph(&mut b, &j);
        b.le("sensing budget", conic::sum(ps.iter().copied()), budget);
        b.minimize(obj);
        (b, ps, j)
    }
}

pub(crate) fn status_of(name: impl Into<String>, report: &SolveReport) -> SubproblemStatus {
    SubproblemStatus {
        name: name.into(),
        status: report.status,
        solver_iterations: report.iterations,
    }
}

/// Maps a non-optimal solver report to a domain error.
pub(crate) fn subproblem_error(what: &str, report: &SolveReport) -> Error {
    match report.status {
        Status::Infeasible => Error::SubproblemInfeasible(format!("{what}: {}", report.message)),
        _ => Error::Numerical(format!("{what}: {}", report.message)),
    }
}

/// Outcome of the acceptance test for a candidate sensing allocation.
pub(crate) struct Accepted<T> {
    pub sensing: Vec<f64>,
    pub objective: f64,
    pub theta: f64,
    pub certificate: T,
}

/// Walks from `previous` toward `candidate`, halving the step until the
/// exact certificate fits the budget and the objective does not increase.
/// `certify` returns the certified communication powers and any auxiliary
/// data for a sensing vector, or `None` when it cannot be certified.
pub(crate) fn backtrack<T>(
    setup: &Setup,
    previous: &[f64],
    previous_objective: f64,
    candidate: &[f64],
    mut certify: impl FnMut(&[f64]) -> Option<(Vec<f64>, T)>,
) -> Option<Accepted<(Vec<f64>, T)>> {
    let mut theta = 1.0;
    for _ in 0..40 {
        let ps: Vec<f64> = previous
            .iter()
            .zip(candidate)
            .map(|(a, b)| (a + theta * (b - a)).max(0.0))
            .collect();
        if let Ok(obj) = setup.crb(&ps) {
            if obj <= previous_objective {
                if let Some((pc, aux)) = certify(&ps) {
                    let total: f64 = ps.iter().chain(&pc).sum();
                    if total <= setup.total_power * (1.0 + 1e-12) {
                        return Some(Accepted {
                            sensing: ps,
                            objective: obj,
                            theta,
                            certificate: (pc, aux),
                        });
                    }
                }
            }
        }
        theta *= 0.5;
    }
    None
}

/// Relative-decrease stopping rule.
pub(crate) fn converged(previous: f64, current: f64, tolerance: f64) -> bool {
    previous - current <= tolerance * previous.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::rate;
    use crate::geometry::{upa_layout, Radio, UavSpec, SPEED_OF_LIGHT};
    use approx::assert_relative_eq;

    fn single(noise: f64) -> Scenario {
        let radio = Radio {
            wavelength: 0.1,
            effective_bandwidth: 1e6,
            noise_psd: noise,
            lightspeed: SPEED_OF_LIGHT,
        };
        let uav = UavSpec::new(Vector3::new(0.0, 0.0, 100.0), upa_layout(4, 4, 0.05).unwrap());
        Scenario::new(radio, Vector3::zeros(), vec![uav]).unwrap()
    }

    #[test]
    fn gamma_examples() {
        let s = single(1e-12);
        // 0.1² · 16 / (16 π² · 1e-12 · (2¹ − 1))
        assert_relative_eq!(gamma(&s, 0, 1.0), 1.013_211_836_423_377_8e9, max_relative = 1e-12);
        assert_relative_eq!(gamma(&s, 0, 2.0) * 3.0, gamma(&s, 0, 1.0), max_relative = 1e-12);
    }

    #[test]
    fn gamma_inverts_the_rate() {
        let s = single(1e-10);
        for rbar in [0.5, 1.0, 4.0, 8.0] {
            let pc = 1e4 / gamma(&s, 0, rbar);
            assert_relative_eq!(rate(&s, 0, pc, &Vector3::zeros()).unwrap(), rbar, max_relative = 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = AllocatorConfig::new(8.0, 6.0);
        assert_eq!(c.validate(3).unwrap(), vec![1.0; 3]);
        c.initial_sensing = Some(vec![1.0, 2.0]);
        assert!(c.validate(3).is_err());
        c.initial_sensing = Some(vec![2.0, 2.0, 2.0]);
        assert!(c.validate(3).is_err());
        c.initial_sensing = None;
        c.max_iters = 0;
        assert!(c.validate(3).is_err());
        assert!(AllocatorConfig::new(-1.0, 6.0).validate(3).is_err());
    }

    #[test]
    fn robustness_validation() {
        assert!(RobustnessModel::Ellipsoid { delta: 0.0 }.validate().is_err());
        assert!(RobustnessModel::Gaussian { p_out: 1.0 }.validate().is_err());
        assert!(RobustnessModel::ArbitraryMoments { p_out: 0.1 }.validate().is_ok());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::parse(s.name()), Some(s));
        }
        assert_eq!(Scheme::parse("nope"), None);
    }
}
