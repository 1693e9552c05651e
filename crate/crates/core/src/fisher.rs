//! ToA-based location Fisher information and the position CRB.
//!
//! Each UAV contributes a rank-one term `c_k P_{s,k} Ψ(θ_k)` where `Ψ = d dᵀ`
//! is the outer product of the unit direction toward the estimated UE. The
//! channel magnitude `|ĥ_kᴴ w_k|²` is taken from the *estimated* channel,
//! since the true one is unknown when powers are allocated.
//!
//! [`fim_appendix_oracle`] rebuilds the same matrix through the full
//! parameter-transform chain (channel-parameter FIM, Jacobian into location
//! coordinates, Schur complement over the nuisance gains) and is kept as an
//! independent check of [`fim`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};

use crate::channel::channel_estimate;
use crate::error::{Error, Result};
use crate::geometry::{Aod, Complex64, Scenario};

/// Reciprocal condition number below which `J_p` is treated as singular.
pub const RCOND_CAP: f64 = 1e-10;

/// Location-related Fisher information `J_p` (1/m²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherInfo {
    pub matrix: Matrix3<f64>,
    /// `tr(J_p⁻¹)` in m², present when `J_p` is well conditioned.
    pub crb: Option<f64>,
}

impl FisherInfo {
    pub fn new(matrix: Matrix3<f64>) -> Self {
        let crb = trace_inverse(&matrix).ok();
        Self { matrix, crb }
    }
}

/// Per-UAV sensing gains for a given sensing power vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingGain {
    /// `c_k = 8π²β² P_{s,k} |α_k|² / (c² N₀)` (1/m²).
    pub coefficients: Vec<f64>,
    /// `α_k = ĥ_kᴴ w_k`.
    pub alphas: Vec<Complex64>,
}

/// `Ψ(θ)`, the outer product of the unit direction with itself.
pub fn psi(aod: &Aod) -> Matrix3<f64> {
    let (se, ce) = aod.elevation.sin_cos();
    let (sa, ca) = aod.azimuth.sin_cos();
    Matrix3::new(
        se * se * ca * ca,
        se * se * sa * ca,
        se * ce * ca,
        se * se * sa * ca,
        se * se * sa * sa,
        se * ce * sa,
        se * ce * ca,
        se * ce * sa,
        ce * ce,
    )
}

fn check_powers(scenario: &Scenario, sensing: &[f64]) -> Result<()> {
    if sensing.len() != scenario.uav_count() {
        return Err(Error::InvalidInput(format!(
            "expected {} sensing powers, got {}",
            scenario.uav_count(),
            sensing.len()
        )));
    }
    if let Some((k, p)) = sensing
        .iter()
        .enumerate()
        .find(|(_, p)| !(**p >= 0.0) || !p.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "sensing power of UAV {k} must be non-negative and finite, got {p}"
        )));
    }
    Ok(())
}

fn alphas(scenario: &Scenario) -> Vec<Complex64> {
    let est = channel_estimate(scenario);
    est.channels
        .iter()
        .zip(scenario.uavs())
        .map(|(h, uav)| h.dotc(&uav.beamformer))
        .collect()
}

/// Sensing gain per watt, `8π²β²|α_k|²/(c²N₀)`.
pub fn unit_gains(scenario: &Scenario) -> Vec<f64> {
    let r = scenario.radio();
    let scale = 8.0 * PI * PI * r.effective_bandwidth.powi(2) / (r.lightspeed.powi(2) * r.noise_psd);
    alphas(scenario).iter().map(|a| scale * a.norm_sqr()).collect()
}

pub fn sensing_gain(scenario: &Scenario, sensing: &[f64]) -> Result<SensingGain> {
    check_powers(scenario, sensing)?;
    let coefficients = unit_gains(scenario).iter().zip(sensing).map(|(g, p)| g * p).collect();
    Ok(SensingGain {
        coefficients,
        alphas: alphas(scenario),
    })
}

/// Unit-power information directions `c_k Ψ(θ_k)` so that
/// `J_p = Σ_k P_{s,k} · basis[k]`.
pub fn fim_basis(scenario: &Scenario) -> Vec<Matrix3<f64>> {
    unit_gains(scenario)
        .iter()
        .enumerate()
        .map(|(k, g)| psi(&scenario.aod(k)) * *g)
        .collect()
}

/// `J_p = Σ_k c_k Ψ(θ_k)`.
pub fn fim(scenario: &Scenario, sensing: &[f64]) -> Result<FisherInfo> {
    check_powers(scenario, sensing)?;
    let j = fim_basis(scenario)
        .iter()
        .zip(sensing)
        .fold(Matrix3::zeros(), |acc, (b, p)| acc + b * *p);
    Ok(FisherInfo::new(j))
}

/// `J_p` through the channel-parameter FIM and the Jacobian transform.
///
/// Parameters are ordered `η = [τ_1, Re α_1, Im α_1, …]` and
/// `η̃ = [u, Re α_1, Im α_1, …]`; the location block is extracted with a
/// Schur complement over the gain parameters.
pub fn fim_appendix_oracle(scenario: &Scenario, sensing: &[f64]) -> Result<Matrix3<f64>> {
    check_powers(scenario, sensing)?;
    let k_count = scenario.uav_count();
    let radio = scenario.radio();
    let alpha = alphas(scenario);
    let n_eta = 3 * k_count;
    let n_tilde = 3 + 2 * k_count;

    let mut j_eta = DMatrix::zeros(n_eta, n_eta);
    for k in 0..k_count {
        let b = 3 * k;
        j_eta[(b, b)] =
            8.0 * PI * PI * sensing[k] * alpha[k].norm_sqr() * radio.effective_bandwidth.powi(2) / radio.noise_psd;
        j_eta[(b + 1, b + 1)] = 2.0 / radio.noise_psd;
        j_eta[(b + 2, b + 2)] = 2.0 / radio.noise_psd;
    }

    let mut upsilon = DMatrix::zeros(n_tilde, n_eta);
    for k in 0..k_count {
        let offset = scenario.offset(k);
        let dtau: Vector3<f64> = offset / (radio.lightspeed * offset.norm());
        // U_k = [∂τ_k/∂u, 0, 0]
        for i in 0..3 {
            upsilon[(i, 3 * k)] = dtau[i];
        }
        // T_k = [[0, 1, 0], [0, 0, 1]]
        upsilon[(3 + 2 * k, 3 * k + 1)] = 1.0;
        upsilon[(4 + 2 * k, 3 * k + 2)] = 1.0;
    }

    let j_tilde = &upsilon * j_eta * upsilon.transpose();
    let a = j_tilde.view((0, 0), (3, 3)).into_owned();
    let b = j_tilde.view((0, 3), (3, 2 * k_count)).into_owned();
    let c = j_tilde.view((3, 3), (2 * k_count, 2 * k_count)).into_owned();
    let c_inv = c
        .try_inverse()
        .ok_or_else(|| Error::Numerical("nuisance block of the FIM is singular".into()))?;
    let schur = a - &b * c_inv * b.transpose();
    Ok(Matrix3::from_fn(|i, j| 0.5 * (schur[(i, j)] + schur[(j, i)])))
}

/// `tr(J⁻¹)`, rejecting singular or ill-conditioned matrices.
pub fn trace_inverse(j: &Matrix3<f64>) -> Result<f64> {
    let s = (j + j.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let top = eig.eigenvalues.max();
    let bottom = eig.eigenvalues.min();
    if !(top > 0.0) || !(bottom / top >= RCOND_CAP) {
        let floor = RCOND_CAP * top.max(0.0);
        let null_directions = (0..3)
            .filter(|&i| !(eig.eigenvalues[i] > floor))
            .map(|i| {
                let v = eig.eigenvectors.column(i);
                [v[0], v[1], v[2]]
            })
            .collect();
        return Err(Error::RankDeficient {
            message: format!(
                "FIM eigenvalues {:?} have reciprocal condition number below {RCOND_CAP:e}",
                eig.eigenvalues.as_slice()
            ),
            null_directions,
        });
    }
    Ok(eig.eigenvalues.iter().map(|l| 1.0 / l).sum())
}

/// Position CRB `tr(J_p⁻¹)` (m²).
pub fn crb(fisher: &FisherInfo) -> Result<f64> {
    trace_inverse(&fisher.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{upa_layout, Radio, UavSpec, SPEED_OF_LIGHT};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn radio() -> Radio {
        Radio {
            wavelength: 0.1,
            effective_bandwidth: 1e6,
            noise_psd: 1e-10,
            lightspeed: SPEED_OF_LIGHT,
        }
    }

    fn scenario(positions: &[Vector3<f64>], rows: usize) -> Scenario {
        let uavs = positions
            .iter()
            .map(|p| UavSpec::new(*p, upa_layout(rows, rows, 0.05).unwrap()))
            .collect();
        Scenario::new(radio(), Vector3::zeros(), uavs).unwrap()
    }

    #[test]
    fn psi_examples() {
        let x = psi(&Aod::new(0.0, PI / 2.0));
        assert_relative_eq!(
            x,
            Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            epsilon = 1e-15
        );
        let z = psi(&Aod::new(0.7, 0.0));
        assert_relative_eq!(
            z,
            Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_power_gives_zero_fim() {
        let s = scenario(&[Vector3::new(100.0, 0.0, 100.0), Vector3::new(0.0, 100.0, 50.0)], 2);
        let f = fim(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(f.matrix, Matrix3::zeros());
        assert!(f.crb.is_none());
        assert_eq!(fim_appendix_oracle(&s, &[0.0, 0.0]).unwrap(), Matrix3::zeros());
    }

    #[test]
    fn single_uav_is_rank_one() {
        let s = scenario(&[Vector3::new(30.0, 40.0, 100.0)], 2);
        let f = fim(&s, &[1.0]).unwrap();
        let eig = SymmetricEigen::new(f.matrix).eigenvalues;
        let top = eig.max();
        assert_eq!(eig.iter().filter(|l| l.abs() > 1e-12 * top).count(), 1);
        match crb(&f) {
            Err(Error::RankDeficient { null_directions, .. }) => {
                assert_eq!(null_directions.len(), 2);
                let d = s.offset(0).normalize();
                for n in null_directions {
                    assert!(Vector3::from(n).dot(&d).abs() < 1e-9);
                }
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn vertical_single_uav_only_fills_zz() {
        let s = scenario(&[Vector3::new(0.0, 0.0, 100.0)], 1);
        let o = fim_appendix_oracle(&s, &[2.0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (2, 2) {
                    assert!(o[(i, j)].abs() < 1e-20 * o[(2, 2)]);
                }
            }
        }
        assert!(o[(2, 2)] > 0.0);
    }

    #[test]
    fn orthogonal_uavs_give_scaled_identity() {
        let d = 100.0;
        let s = scenario(
            &[
                Vector3::new(d, 0.0, 0.0),
                Vector3::new(0.0, d, 0.0),
                Vector3::new(0.0, 0.0, d),
            ],
            1,
        );
        let f = fim(&s, &[1.0, 1.0, 1.0]).unwrap();
        let g = unit_gains(&s)[0];
        assert_relative_eq!(f.matrix, Matrix3::identity() * g, max_relative = 1e-12);
        assert_relative_eq!(f.crb.unwrap(), 3.0 / g, max_relative = 1e-12);
    }

    #[test]
    fn crb_examples() {
        assert_relative_eq!(crb(&FisherInfo::new(Matrix3::identity())).unwrap(), 3.0);
        let d = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 4.0));
        assert_relative_eq!(crb(&FisherInfo::new(d)).unwrap(), 1.75, epsilon = 1e-15);
    }

    #[test]
    fn ill_conditioned_matrix_is_rejected() {
        let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1e-11));
        let err = trace_inverse(&d).unwrap_err();
        match err {
            Error::RankDeficient { null_directions, .. } => {
                assert_eq!(null_directions.len(), 1);
                assert_relative_eq!(null_directions[0][2].abs(), 1.0, epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_power_is_rejected() {
        let s = scenario(&[Vector3::new(0.0, 0.0, 100.0)], 1);
        assert!(fim(&s, &[-1.0]).is_err());
        assert!(fim(&s, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn coplanar_directions_are_singular() {
        // All UAVs in the plane z = 0 with the UE at the origin.
        let s = scenario(
            &[
                Vector3::new(100.0, 0.0, 0.0),
                Vector3::new(0.0, 80.0, 0.0),
                Vector3::new(-60.0, -60.0, 0.0),
            ],
            1,
        );
        assert!(crb(&fim(&s, &[1.0, 1.0, 1.0]).unwrap()).is_err());
        let s = scenario(
            &[
                Vector3::new(100.0, 0.0, 10.0),
                Vector3::new(0.0, 80.0, 0.0),
                Vector3::new(-60.0, -60.0, 0.0),
            ],
            1,
        );
        assert!(crb(&fim(&s, &[1.0, 1.0, 1.0]).unwrap()).is_ok());
    }

    #[test]
    fn sensing_gain_is_linear() {
        let s = scenario(&[Vector3::new(50.0, 0.0, 100.0), Vector3::new(0.0, 50.0, 100.0)], 2);
        let g = sensing_gain(&s, &[1.0, 3.0]).unwrap();
        let u = unit_gains(&s);
        assert_relative_eq!(g.coefficients[0], u[0]);
        assert_relative_eq!(g.coefficients[1], 3.0 * u[1]);
        // Matched beamformer: |α|² = N_t (λ / 4π d)².
        let d = s.offset(0).norm();
        assert_relative_eq!(
            g.alphas[0].norm_sqr(),
            4.0 * (0.1 / (4.0 * PI * d)).powi(2),
            max_relative = 1e-10
        );
    }

    fn direction() -> impl Strategy<Value = Vector3<f64>> {
        (-PI..PI, 0.05..3.1f64, 20.0..300.0f64).prop_map(|(az, el, r)| Aod::new(az, el).direction() * r)
    }

    proptest! {
        #[test]
        fn psi_is_unit_trace_rank_one(az in -PI..PI, el in 0.0..PI) {
            let a = Aod::new(az, el);
            let p = psi(&a);
            let d = a.direction();
            prop_assert!((p.trace() - 1.0).abs() < 1e-12);
            prop_assert!((p - d * d.transpose()).amax() < 1e-12);
            let eig = SymmetricEigen::new(p).eigenvalues;
            prop_assert!(eig.min() > -1e-12);
        }

        #[test]
        fn fim_matches_parameter_chain(a in direction(), b in direction(), c in direction(),
                                      p in proptest::array::uniform3(0.0..5.0f64)) {
            let s = scenario(&[a, b, c], 2);
            let f = fim(&s, &p).unwrap().matrix;
            let o = fim_appendix_oracle(&s, &p).unwrap();
            let scale = f.amax().max(1e-300);
            prop_assert!((f - o).amax() <= 1e-10 * scale);
        }

        #[test]
        fn crb_scales_inversely(a in direction(), b in direction(), c in direction(), t in 0.1..20.0f64) {
            let s = scenario(&[a, b, c], 1);
            let base = fim(&s, &[1.0, 2.0, 0.5]).unwrap();
            let eig = SymmetricEigen::new(base.matrix).eigenvalues;
            // Near-coplanar draws lose digits in the inverse itself.
            prop_assume!(eig.min() > 1e-6 * eig.max());
            let scaled = fim(&s, &[t, 2.0 * t, 0.5 * t]).unwrap();
            let ratio = scaled.crb.unwrap() * t / base.crb.unwrap();
            prop_assert!((ratio - 1.0).abs() < 1e-9);
        }
    }
}
