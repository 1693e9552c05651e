//! Line-of-sight channels built from the estimated UE position, the CSI error
//! induced by a location sensing error (LSE) and the resulting achievable
//! rate.
//!
//! The CSI error keeps the estimated array response fixed and perturbs only
//! the path loss, so the rate can be written either through `ĥ + Δh` or
//! directly through the perturbed distance. Both forms are provided.

use std::f64::consts::PI;

use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Complex64, Scenario};

/// Estimated channels toward `û`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// `ĥ_k` per UAV.
    pub channels: Vec<DVector<Complex64>>,
    /// `d_k = ‖û − p_k‖` (m).
    pub distances: Vec<f64>,
    /// `g_k = |â_kᴴ w_k|²`.
    pub gains: Vec<f64>,
}

fn path_gain(scenario: &Scenario, k: usize) -> Complex64 {
    let radio = scenario.radio();
    Complex64::from_polar(radio.wavelength / (4.0 * PI), scenario.uav(k).phase_shift)
}

fn perturbed_distance(scenario: &Scenario, k: usize, lse: &Vector3<f64>) -> Result<f64> {
    let d = (scenario.offset(k) + lse).norm();
    if !(d > 0.0) {
        return Err(Error::InvalidGeometry(format!("LSE {lse:?} places the UE on UAV {k}")));
    }
    Ok(d)
}

pub fn channel_estimate(scenario: &Scenario) -> ChannelEstimate {
    let k_count = scenario.uav_count();
    let mut channels = Vec::with_capacity(k_count);
    let mut distances = Vec::with_capacity(k_count);
    let mut gains = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let d = scenario.offset(k).norm();
        let a = scenario.estimated_response(k);
        channels.push(a.map(|z| z * path_gain(scenario, k) / d));
        distances.push(d);
        gains.push(scenario.beam_gain(k));
    }
    ChannelEstimate {
        channels,
        distances,
        gains,
    }
}

/// CSI error `Δh_k` caused by the LSE `Δu`.
pub fn channel_error(scenario: &Scenario, k: usize, lse: &Vector3<f64>) -> Result<DVector<Complex64>> {
    let d_true = perturbed_distance(scenario, k, lse)?;
    let d_est = scenario.offset(k).norm();
    let scale = path_gain(scenario, k) * (1.0 / d_true - 1.0 / d_est);
    Ok(scenario.estimated_response(k).map(|z| z * scale))
}

/// Achievable rate (bits/s/Hz) of UAV `k` under LSE `Δu`:
/// `log₂(1 + P_c λ² g_k / (16π² N₀ ‖û + Δu − p_k‖²))`.
pub fn rate(scenario: &Scenario, k: usize, comm_power: f64, lse: &Vector3<f64>) -> Result<f64> {
    if !(comm_power >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "communication power must be non-negative, got {comm_power}"
        )));
    }
    let d = perturbed_distance(scenario, k, lse)?;
    let radio = scenario.radio();
    let snr =
        comm_power * radio.wavelength.powi(2) * scenario.beam_gain(k) / (16.0 * PI * PI * radio.noise_psd * d * d);
    Ok(snr.ln_1p() / std::f64::consts::LN_2)
}

/// Same rate evaluated as `log₂(1 + P_c |(ĥ_k + Δh_k)ᴴ w_k|² / N₀)`.
pub fn rate_from_channel(scenario: &Scenario, k: usize, comm_power: f64, lse: &Vector3<f64>) -> Result<f64> {
    let est = channel_estimate(scenario);
    let h = &est.channels[k] + channel_error(scenario, k, lse)?;
    let response = h.dotc(&scenario.uav(k).beamformer).norm_sqr();
    let snr = comm_power * response / scenario.radio().noise_psd;
    Ok(snr.ln_1p() / std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{upa_layout, Radio, UavSpec, SPEED_OF_LIGHT};
    use approx::assert_relative_eq;
    use nalgebra::Matrix3xX;
    use proptest::prelude::*;

    fn single(noise: f64, phase: f64, height: f64, rows: usize) -> Scenario {
        let radio = Radio {
            wavelength: 0.1,
            effective_bandwidth: 1e6,
            noise_psd: noise,
            lightspeed: SPEED_OF_LIGHT,
        };
        let offsets = if rows == 1 {
            Matrix3xX::zeros(1)
        } else {
            upa_layout(rows, rows, 0.05).unwrap()
        };
        let mut uav = UavSpec::new(Vector3::new(0.0, 0.0, height), offsets);
        uav.phase_shift = phase;
        Scenario::new(radio, Vector3::zeros(), vec![uav]).unwrap()
    }

    #[test]
    fn single_element_channel_is_free_space_gain() {
        let s = single(1e-12, 0.0, 100.0, 1);
        let est = channel_estimate(&s);
        // 0.1 / (4π · 100)
        assert_relative_eq!(est.channels[0][0].re, 7.957_747_154_594_767e-5, epsilon = 1e-18);
        assert!(est.channels[0][0].im.abs() < 1e-20);
        assert_relative_eq!(est.distances[0], 100.0);
        assert_relative_eq!(est.gains[0], 1.0);
    }

    #[test]
    fn phase_pi_negates_channel() {
        let a = channel_estimate(&single(1e-12, 0.0, 100.0, 1));
        let b = channel_estimate(&single(1e-12, PI, 100.0, 1));
        assert_relative_eq!(b.channels[0][0].re, -a.channels[0][0].re, epsilon = 1e-18);
        assert!((b.channels[0][0].im).abs() < 1e-18);
    }

    #[test]
    fn channel_norm_follows_inverse_distance() {
        let near = channel_estimate(&single(1e-12, 0.0, 100.0, 4));
        let far = channel_estimate(&single(1e-12, 0.0, 200.0, 4));
        assert_relative_eq!(near.channels[0].norm(), 2.0 * far.channels[0].norm(), epsilon = 1e-15);
        // ‖ĥ‖ = λ √N_t / (4π d)
        assert_relative_eq!(near.channels[0].norm(), 0.1 * 4.0 / (4.0 * PI * 100.0), epsilon = 1e-15);
    }

    #[test]
    fn zero_lse_gives_zero_error() {
        let s = single(1e-12, 0.4, 100.0, 2);
        let e = channel_error(&s, 0, &Vector3::zeros()).unwrap();
        assert!(e.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn distance_shift_to_110_metres() {
        let s = single(1e-12, 0.0, 100.0, 1);
        // UAV at z = 100 above û = 0; moving the UE to z = -10 makes d = 110.
        let e = channel_error(&s, 0, &Vector3::new(0.0, 0.0, -10.0)).unwrap();
        let expected = 0.1 / (4.0 * PI) * (1.0 / 110.0 - 1.0 / 100.0);
        assert_relative_eq!(e[0].re, expected, epsilon = 1e-18);
        assert_relative_eq!(e[0].re, -7.234_315_595_086_157e-6, epsilon = 1e-15);
        let est = channel_estimate(&s);
        assert!((&est.channels[0] + &e).norm() < est.channels[0].norm());
    }

    #[test]
    fn lse_onto_uav_is_rejected() {
        let s = single(1e-12, 0.0, 100.0, 1);
        assert!(matches!(
            channel_error(&s, 0, &Vector3::new(0.0, 0.0, 100.0)),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(rate(&s, 0, 1.0, &Vector3::new(0.0, 0.0, 100.0)).is_err());
    }

    #[test]
    fn rate_examples() {
        let s = single(1e-12, 0.0, 100.0, 4);
        assert_eq!(rate(&s, 0, 0.0, &Vector3::zeros()).unwrap(), 0.0);
        // SNR = P λ² g / (16 π² N₀ d²) = 1e-3 · 0.16 / (16 π² · 1e-8) ≈ 101.32
        let snr = 1e-3 * 0.01 * 16.0 / (16.0 * PI * PI * 1e-12 * 1e4);
        assert_relative_eq!(snr, 101.321_183_642_337_8, epsilon = 1e-9);
        let r = rate(&s, 0, 1e-3, &Vector3::zeros()).unwrap();
        assert_relative_eq!(r, 6.676_961_048_171_162, epsilon = 1e-10);
        // SNR = 1 is exactly one bit.
        let p_unit = 16.0 * PI * PI * 1e-12 * 1e4 / (0.01 * 16.0);
        assert_relative_eq!(rate(&s, 0, p_unit, &Vector3::zeros()).unwrap(), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn both_rate_forms_agree(dx in -30.0..30.0f64, dy in -30.0..30.0f64, dz in -30.0..30.0f64,
                                 p in 1e-6..10.0f64, phase in -PI..PI) {
            let s = single(1e-12, phase, 100.0, 3);
            let lse = Vector3::new(dx, dy, dz);
            let a = rate(&s, 0, p, &lse).unwrap();
            let b = rate_from_channel(&s, 0, p, &lse).unwrap();
            prop_assert!(((a - b) / a).abs() < 1e-9);
        }

        #[test]
        fn rate_is_monotone(p in 1e-6..10.0f64, extra in 1e-3..5.0f64, push in 0.1..20.0f64) {
            let s = single(1e-12, 0.0, 100.0, 2);
            let zero = Vector3::zeros();
            prop_assert!(rate(&s, 0, p + extra, &zero).unwrap() > rate(&s, 0, p, &zero).unwrap());
            // Pushing the UE away from the UAV (downward) lowers the rate.
            let farther = Vector3::new(0.0, 0.0, -push);
            prop_assert!(rate(&s, 0, p, &farther).unwrap() < rate(&s, 0, p, &zero).unwrap());
        }
    }
}
