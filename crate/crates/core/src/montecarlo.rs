//! LSE samplers and empirical rate-outage estimates.
//!
//! Every sampler is driven by a seeded [`ChaCha8Rng`], so a given
//! `(model, J_p, seed, family, n)` always produces the same batch.
//!
//! ```
//! use nalgebra::Matrix3;
//! use uav_isac::allocators::RobustnessModel;
//! use uav_isac::montecarlo::LseSampler;
//!
//! let j = Matrix3::from_diagonal_element(4.0);
//! let sampler = LseSampler::new(RobustnessModel::Ellipsoid { delta: 1.0 }, j, 7, None).unwrap();
//! let batch = sampler.sample(1000).unwrap();
//! assert!(batch.iter().all(|du| du.dot(&(j * du)) <= 1.0 + 1e-12));
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::allocators::{PowerAllocation, RobustnessModel};
use crate::channel::rate;
use crate::error::{Error, Result};
use crate::geometry::Scenario;
use crate::linalg::{inv_sqrt3, min_eigenvalue, to_dmatrix3};

/// Relative slack below `R̄` still counted as meeting the floor. Absorbs the
/// rounding of `log₂(1 + SNR)` at an exactly binding power.
pub const RATE_TIE: f64 = 1e-12;

/// Distribution family used for the moment-only LSE model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    /// Uniform in an ellipsoid scaled to covariance `J_p⁻¹`.
    UniformEllipsoid,
    /// `S r` with independent ±1 entries in `r` and `S Sᵀ = J_p⁻¹`.
    RademacherMixture,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gaussian, Family::UniformEllipsoid, Family::RademacherMixture];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::UniformEllipsoid => "uniform-ellipsoid",
            Family::RademacherMixture => "rademacher-mixture",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown sampler family {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct LseSampler {
    model: RobustnessModel,
    fim: Matrix3<f64>,
    seed: u64,
    family: Family,
    /// `J_p^{-1/2}`.
    root: Matrix3<f64>,
}

impl LseSampler {
    /// `family` only matters for [`RobustnessModel::ArbitraryMoments`]
    /// (default Gaussian); the other models fix their own distribution.
    pub fn new(model: RobustnessModel, fim: Matrix3<f64>, seed: u64, family: Option<Family>) -> Result<Self> {
        model.validate()?;
        let scale = fim.abs().max();
        if !(min_eigenvalue(&to_dmatrix3(&fim)) > 1e-12 * scale) {
            return Err(Error::InvalidInput(
                "sampler shape J_p must be positive definite".into(),
            ));
        }
        let family = match model {
            RobustnessModel::ArbitraryMoments { .. } => family.unwrap_or(Family::Gaussian),
            _ => Family::Gaussian,
        };
        Ok(Self {
            model,
            fim,
            seed,
            family,
            root: inv_sqrt3(&fim),
        })
    }

    pub fn model(&self) -> RobustnessModel {
        self.model
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn fim(&self) -> &Matrix3<f64> {
        &self.fim
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn sample(&self, n: usize) -> Result<Vec<Vector3<f64>>> {
        if n == 0 {
            return Err(Error::InvalidInput("sample count must be at least 1".into()));
        }
        let mut rng = self.rng(0);
        let out = (0..n)
            .map(|_| match (self.model, self.family) {
                (RobustnessModel::Ellipsoid { delta }, _) => self.root * unit_ball(&mut rng) * delta.sqrt(),
                (RobustnessModel::Gaussian { .. }, _) | (_, Family::Gaussian) => self.root * normal3(&mut rng),
                (_, Family::UniformEllipsoid) => self.root * unit_ball(&mut rng) * 5f64.sqrt(),
                (_, Family::RademacherMixture) => self.root * rademacher3(&mut rng),
            })
            .collect();
        Ok(out)
    }

    /// Points on the ellipsoid surface `ΔuᵀJ_pΔu = δ` (ellipsoid model only).
    pub fn boundary_samples(&self, n: usize) -> Result<Vec<Vector3<f64>>> {
        let RobustnessModel::Ellipsoid { delta } = self.model else {
            return Err(Error::InvalidInput("boundary samples need the ellipsoid model".into()));
        };
        if n == 0 {
            return Err(Error::InvalidInput("sample count must be at least 1".into()));
        }
        let mut rng = self.rng(1);
        Ok((0..n)
            .map(|_| self.root * unit_sphere(&mut rng) * delta.sqrt())
            .collect())
    }
}

fn normal3(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample(StandardNormal))
}

fn unit_sphere(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let z = normal3(rng);
        let n = z.norm();
        if n > 1e-300 {
            return z / n;
        }
    }
}

/// Uniform in the unit ball: Gaussian direction times `U^{1/3}` radius.
fn unit_ball(rng: &mut impl Rng) -> Vector3<f64> {
    let dir = unit_sphere(rng);
    let u: f64 = rng.random();
    dir * u.cbrt()
}

fn rademacher3(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

/// Outage estimate for one UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageEstimate {
    pub violations: usize,
    pub samples: usize,
    pub fraction: f64,
    /// Three binomial standard errors of `fraction`.
    pub half_width: f64,
}

impl OutageEstimate {
    fn new(violations: usize, samples: usize) -> Self {
        let fraction = violations as f64 / samples as f64;
        Self {
            violations,
            samples,
            fraction,
            half_width: 3.0 * binomial_sigma(fraction, samples),
        }
    }
}

/// `√(p(1 − p)/n)`.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Acceptance threshold `P_out + 3√(P_out(1 − P_out)/n)`.
pub fn outage_threshold(p_out: f64, n: usize) -> f64 {
    p_out + 3.0 * binomial_sigma(p_out, n)
}

/// Fraction of `samples` for which each UAV's rate falls below `R̄`.
pub fn empirical_outage(
    scenario: &Scenario,
    allocation: &PowerAllocation,
    samples: &[Vector3<f64>],
    rate_floor: f64,
) -> Result<Vec<OutageEstimate>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("outage needs at least one sample".into()));
    }
    if allocation.comm.len() != scenario.uav_count() {
        return Err(Error::InvalidInput(format!(
            "allocation has {} communication powers for {} UAVs",
            allocation.comm.len(),
            scenario.uav_count()
        )));
    }
    let floor = rate_floor * (1.0 - RATE_TIE);
    (0..scenario.uav_count())
        .map(|k| {
            let pc = allocation.comm[k].max(0.0);
            let mut bad = 0;
            for du in samples {
                if rate(scenario, k, pc, du)? < floor {
                    bad += 1;
                }
            }
            Ok(OutageEstimate::new(bad, samples.len()))
        })
        .collect()
}

/// Smallest rate over `samples` for each UAV.
pub fn worst_rate(scenario: &Scenario, allocation: &PowerAllocation, samples: &[Vector3<f64>]) -> Result<Vec<f64>> {
    (0..scenario.uav_count())
        .map(|k| {
            samples.iter().try_fold(f64::INFINITY, |m, du| {
                Ok(m.min(rate(scenario, k, allocation.comm[k].max(0.0), du)?))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocators::{solve_nonrobust, AllocatorConfig};
    use crate::geometry::reference_scenario as triangle;

    fn shape() -> Matrix3<f64> {
        Matrix3::new(3.0, 0.4, -0.2, 0.4, 1.0, 0.1, -0.2, 0.1, 0.5)
    }

    fn moments(batch: &[Vector3<f64>]) -> (Vector3<f64>, Matrix3<f64>) {
        let n = batch.len() as f64;
        let mean = batch.iter().fold(Vector3::zeros(), |a, b| a + b) / n;
        let cov = batch.iter().fold(Matrix3::zeros(), |a, b| a + b * b.transpose()) / n;
        (mean, cov)
    }

    #[test]
    fn ellipsoid_samples_stay_inside() {
        let j = shape();
        let s = LseSampler::new(RobustnessModel::Ellipsoid { delta: 2.0 }, j, 1, None).unwrap();
        let inside = s.sample(100_000).unwrap();
        assert!(inside.iter().all(|d| d.dot(&(j * d)) <= 2.0 * (1.0 + 1e-12)));
        let edge = s.boundary_samples(1000).unwrap();
        assert!(edge.iter().all(|d| (d.dot(&(j * d)) - 2.0).abs() < 1e-12));
    }

    #[test]
    fn gaussian_covariance() {
        let j = shape();
        let s = LseSampler::new(RobustnessModel::Gaussian { p_out: 0.05 }, j, 3, None).unwrap();
        let (_, cov) = moments(&s.sample(1_000_000).unwrap());
        let inv = j.try_inverse().unwrap();
        assert!((cov - inv).norm() / inv.norm() < 0.05);
    }

    #[test]
    fn moment_families_pass_audit() {
        let j = shape();
        let inv = j.try_inverse().unwrap();
        let n = 1_000_000;
        for fam in Family::ALL {
            let s = LseSampler::new(RobustnessModel::ArbitraryMoments { p_out: 0.1 }, j, 11, Some(fam)).unwrap();
            let (mean, cov) = moments(&s.sample(n).unwrap());
            assert!(
                mean.norm() <= 4.0 * (inv.trace() / n as f64).sqrt(),
                "{fam}: mean {mean:?}"
            );
            assert!((cov - inv).norm() / inv.norm() <= 0.05, "{fam}: cov {cov:?}");
        }
    }

    #[test]
    fn rademacher_covariance_identity() {
        // E[S r rᵀ Sᵀ] = S Sᵀ because E[r rᵀ] = I; enumerate all sign patterns.
        let j = shape();
        let s = inv_sqrt3(&j);
        let mut acc = Matrix3::zeros();
        for bits in 0..8 {
            let r = Vector3::from_fn(|i, _| if bits >> i & 1 == 1 { 1.0 } else { -1.0 });
            acc += s * r * r.transpose() * s.transpose() / 8.0;
        }
        let inv = j.try_inverse().unwrap();
        assert!((acc - inv).amax() < 1e-12);
    }

    #[test]
    fn seeds_are_deterministic() {
        let j = shape();
        let a = LseSampler::new(RobustnessModel::Gaussian { p_out: 0.1 }, j, 42, None).unwrap();
        let b = LseSampler::new(RobustnessModel::Gaussian { p_out: 0.1 }, j, 42, None).unwrap();
        let c = LseSampler::new(RobustnessModel::Gaussian { p_out: 0.1 }, j, 43, None).unwrap();
        assert_eq!(a.sample(100).unwrap(), b.sample(100).unwrap());
        assert_ne!(a.sample(100).unwrap(), c.sample(100).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let singular = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert!(LseSampler::new(RobustnessModel::Gaussian { p_out: 0.1 }, singular, 0, None).is_err());
        let s = LseSampler::new(RobustnessModel::Gaussian { p_out: 0.1 }, shape(), 0, None).unwrap();
        assert!(s.sample(0).is_err());
        assert!(s.boundary_samples(10).is_err());
        assert!("laplace".parse::<Family>().is_err());
        assert_eq!("uniform-ellipsoid".parse::<Family>().unwrap(), Family::UniformEllipsoid);
    }

    #[test]
    fn trivial_outages() {
        let sc = triangle();
        let cfg = AllocatorConfig::new(8.0, 6.0);
        let nr = solve_nonrobust(&sc, &cfg).unwrap();
        let zeros = vec![Vector3::zeros(); 10];
        let out = empirical_outage(&sc, &nr.allocation, &zeros, 8.0).unwrap();
        assert!(out.iter().all(|o| o.fraction == 0.0));
        let off = PowerAllocation {
            sensing: nr.allocation.sensing.clone(),
            comm: vec![0.0; 3],
        };
        let out = empirical_outage(&sc, &off, &zeros, 8.0).unwrap();
        assert!(out.iter().all(|o| o.fraction == 1.0));
        assert!(empirical_outage(&sc, &off, &[], 8.0).is_err());
    }

    #[test]
    fn nonrobust_fails_when_the_ue_moves_away() {
        let sc = triangle();
        let cfg = AllocatorConfig::new(8.0, 6.0);
        let nr = solve_nonrobust(&sc, &cfg).unwrap();
        for k in 0..3 {
            let away = sc.offset(k).normalize() * 0.5;
            let r = rate(&sc, k, nr.allocation.comm[k], &away).unwrap();
            assert!(r < 8.0);
        }
    }
}
