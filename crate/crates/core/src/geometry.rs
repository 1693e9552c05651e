//! Positions, angles of departure, wavevectors and planar-array responses.
//!
//! Everything downstream (channels, Fisher information, the robust rate
//! constraints) is driven by the immutable [`Scenario`] built here. A
//! scenario holds the UAV positions and antenna layouts, the estimated UE
//! position and the radio constants. Beamformers default to the conjugate
//! match toward the estimated UE, `w_k = â_k / √N_t`.

use std::f64::consts::PI;

use nalgebra::{Complex, DVector, Matrix3xX, Vector3};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Angle of departure from a UAV toward the UE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aod {
    /// Azimuth in (−π, π].
    pub azimuth: f64,
    /// Elevation (polar angle from +z) in [0, π].
    pub elevation: f64,
}

impl Aod {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }
    }

    /// Unit direction `[sin el cos az, sin el sin az, cos el]`.
    pub fn direction(&self) -> Vector3<f64> {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        Vector3::new(se * ca, se * sa, ce)
    }
}

/// Angle of departure from `source` toward `target`.
///
/// The azimuth is `atan2(Δy, Δx)` and is defined as 0 for a vertical link
/// where both horizontal deltas vanish.
pub fn aod(source: &Vector3<f64>, target: &Vector3<f64>) -> Result<Aod> {
    let delta = target - source;
    let norm = delta.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "source {source:?} and target {target:?} coincide"
        )));
    }
    let elevation = (delta.z / norm).clamp(-1.0, 1.0).acos();
    let azimuth = if delta.x == 0.0 && delta.y == 0.0 {
        0.0
    } else {
        let a = delta.y.atan2(delta.x);
        if a <= -PI {
            PI
        } else {
            a
        }
    };
    Ok(Aod { azimuth, elevation })
}

/// Wavevector `κ(θ) = (2π/λ) d(θ)`.
pub fn wavevector(aod: &Aod, wavelength: f64) -> Vector3<f64> {
    aod.direction() * (2.0 * PI / wavelength)
}

/// Planar-array response `a_m = exp(j q_mᵀ κ(θ))` for element offsets `q_m`
/// stored as the columns of `offsets`.
pub fn array_response(offsets: &Matrix3xX<f64>, aod: &Aod, wavelength: f64) -> DVector<Complex64> {
    let kappa = wavevector(aod, wavelength);
    DVector::from_iterator(
        offsets.ncols(),
        offsets.column_iter().map(|q| Complex64::from_polar(1.0, q.dot(&kappa))),
    )
}

/// Element offsets of a `rows × cols` uniform planar array in the horizontal
/// plane, centred at the origin. Rows run along x, columns along y.
pub fn upa_layout(rows: usize, cols: usize, spacing: f64) -> Result<Matrix3xX<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput(format!(
            "array must have at least one row and column, got {rows}x{cols}"
        )));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidInput(format!(
            "array spacing must be positive, got {spacing}"
        )));
    }
    let cx = (rows as f64 - 1.0) / 2.0;
    let cy = (cols as f64 - 1.0) / 2.0;
    let mut m = Matrix3xX::zeros(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let col = r * cols + c;
            m[(0, col)] = (r as f64 - cx) * spacing;
            m[(1, col)] = (c as f64 - cy) * spacing;
        }
    }
    Ok(m)
}

/// Radio constants shared by every link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radio {
    /// Carrier wavelength λ (m).
    pub wavelength: f64,
    /// Effective (RMS) bandwidth β of the sensing pilot (Hz).
    pub effective_bandwidth: f64,
    /// Noise power spectral density N₀ (W/Hz).
    pub noise_psd: f64,
    /// Propagation speed c (m/s).
    pub lightspeed: f64,
}

impl Radio {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("effective_bandwidth", self.effective_bandwidth),
            ("noise_psd", self.noise_psd),
            ("lightspeed", self.lightspeed),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Input description of one UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct UavSpec {
    pub position: Vector3<f64>,
    /// Element positions relative to `position`, one column per element.
    pub antenna_offsets: Matrix3xX<f64>,
    /// Phase ψ_k of the complex channel gain (radians).
    pub phase_shift: f64,
    /// Unit-norm transmit beamformer; `None` selects `â_k/√N_t`.
    pub beamformer: Option<DVector<Complex64>>,
}

impl UavSpec {
    pub fn new(position: Vector3<f64>, antenna_offsets: Matrix3xX<f64>) -> Self {
        Self {
            position,
            antenna_offsets,
            phase_shift: 0.0,
            beamformer: None,
        }
    }
}

/// One UAV of a validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Uav {
    pub position: Vector3<f64>,
    pub antenna_offsets: Matrix3xX<f64>,
    pub phase_shift: f64,
    pub beamformer: DVector<Complex64>,
}

impl Uav {
    pub fn antenna_count(&self) -> usize {
        self.antenna_offsets.ncols()
    }
}

/// Immutable world description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    uavs: Vec<Uav>,
    ue_estimate: Vector3<f64>,
    radio: Radio,
}

impl Scenario {
    pub fn new(radio: Radio, ue_estimate: Vector3<f64>, uavs: Vec<UavSpec>) -> Result<Self> {
        radio.validate()?;
        if uavs.is_empty() {
            return Err(Error::InvalidInput("scenario needs at least one UAV".into()));
        }
        let mut built = Vec::with_capacity(uavs.len());
        for (k, spec) in uavs.into_iter().enumerate() {
            if spec.antenna_offsets.ncols() == 0 {
                return Err(Error::InvalidInput(format!("UAV {k} has no antenna elements")));
            }
            let theta =
                aod(&spec.position, &ue_estimate).map_err(|e| Error::InvalidGeometry(format!("UAV {k}: {e}")))?;
            let beamformer = match spec.beamformer {
                Some(w) => {
                    if w.len() != spec.antenna_offsets.ncols() {
                        return Err(Error::InvalidInput(format!(
                            "UAV {k}: beamformer length {} does not match {} elements",
                            w.len(),
                            spec.antenna_offsets.ncols()
                        )));
                    }
                    let n = w.norm();
                    if (n - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidInput(format!(
                            "UAV {k}: beamformer must have unit norm, got {n}"
                        )));
                    }
                    w
                }
                None => {
                    let a = array_response(&spec.antenna_offsets, &theta, radio.wavelength);
                    let n = (a.len() as f64).sqrt();
                    a.unscale(n)
                }
            };
            built.push(Uav {
                position: spec.position,
                antenna_offsets: spec.antenna_offsets,
                phase_shift: spec.phase_shift,
                beamformer,
            });
        }
        Ok(Self {
            uavs: built,
            ue_estimate,
            radio,
        })
    }

    pub fn uav_count(&self) -> usize {
        self.uavs.len()
    }

    pub fn uavs(&self) -> &[Uav] {
        &self.uavs
    }

    pub fn uav(&self, k: usize) -> &Uav {
        &self.uavs[k]
    }

    pub fn ue_estimate(&self) -> &Vector3<f64> {
        &self.ue_estimate
    }

    pub fn radio(&self) -> &Radio {
        &self.radio
    }

    /// `û − p_k`.
    pub fn offset(&self, k: usize) -> Vector3<f64> {
        self.ue_estimate - self.uavs[k].position
    }

    /// Angle of departure from UAV `k` toward the estimated UE.
    pub fn aod(&self, k: usize) -> Aod {
        // Coincidence was rejected at construction.
        aod(&self.uavs[k].position, &self.ue_estimate).expect("validated geometry")
    }

    /// Array response of UAV `k` toward the estimated UE.
    pub fn estimated_response(&self, k: usize) -> DVector<Complex64> {
        array_response(&self.uavs[k].antenna_offsets, &self.aod(k), self.radio.wavelength)
    }

    /// Beamforming gain `|â_kᴴ w_k|²`.
    pub fn beam_gain(&self, k: usize) -> f64 {
        let a = self.estimated_response(k);
        a.dotc(&self.uavs[k].beamformer).norm_sqr()
    }
}

/// Repository reference setup: three UAVs at 100 m altitude on a 100 m
/// radius triangle around the UE estimate at the origin, each with a 4×4
/// half-wavelength UPA, λ = 0.1 m, β = 1 MHz, N₀ = 1e−10 W/Hz.
pub fn reference_scenario() -> Scenario {
    let radio = Radio {
        wavelength: 0.1,
        effective_bandwidth: 1e6,
        noise_psd: 1e-10,
        lightspeed: SPEED_OF_LIGHT,
    };
    let offsets = upa_layout(4, 4, 0.05).expect("valid layout");
    let uavs = (0..3)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / 3.0;
            UavSpec::new(
                Vector3::new(100.0 * phi.cos(), 100.0 * phi.sin(), 100.0),
                offsets.clone(),
            )
        })
        .collect();
    Scenario::new(radio, Vector3::zeros(), uavs).expect("valid reference geometry")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn vertical_link_has_zero_azimuth() {
        let a = aod(&Vector3::new(0.0, 0.0, 100.0), &Vector3::zeros()).unwrap();
        assert_eq!(a.azimuth, 0.0);
        assert_relative_eq!(a.elevation, PI);
    }

    #[test]
    fn horizontal_link_along_x() {
        let a = aod(&Vector3::new(0.0, 0.0, 50.0), &Vector3::new(100.0, 0.0, 50.0)).unwrap();
        assert_eq!(a.azimuth, 0.0);
        assert_relative_eq!(a.elevation, PI / 2.0);
    }

    #[test]
    fn diagonal_link() {
        let a = aod(&Vector3::new(0.0, 0.0, 100.0), &Vector3::new(50.0, 50.0, 0.0)).unwrap();
        assert_relative_eq!(a.azimuth, PI / 4.0, epsilon = 1e-15);
        // arccos(-100 / sqrt(15000))
        assert_relative_eq!(a.elevation, 2.526_112_944_919_405_7, epsilon = 1e-12);
    }

    #[test]
    fn negative_zero_deltas_still_vertical() {
        let a = aod(&Vector3::new(-0.0, -0.0, 10.0), &Vector3::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(a.azimuth, 0.0);
        let b = aod(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(0.0, -0.0, 0.0)).unwrap();
        assert_eq!(b.azimuth, PI);
    }

    #[test]
    fn coincident_points_are_rejected() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!(matches!(aod(&p, &p), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn wavevector_examples() {
        let k = wavevector(&Aod::new(0.0, PI / 2.0), 0.1);
        assert_relative_eq!(k, Vector3::new(62.831_853_071_795_86, 0.0, 0.0), epsilon = 1e-12);
        let k = wavevector(&Aod::new(1.3, 0.0), 0.7);
        assert_relative_eq!(k, Vector3::new(0.0, 0.0, 2.0 * PI / 0.7), epsilon = 1e-12);
        let k = wavevector(&Aod::new(PI / 2.0, PI / 2.0), 1.0);
        assert_relative_eq!(k, Vector3::new(0.0, 2.0 * PI, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn array_response_examples() {
        let single = Matrix3xX::zeros(1);
        let a = array_response(&single, &Aod::new(0.3, 0.4), 0.1);
        assert_eq!(a[0], Complex64::new(1.0, 0.0));

        let lambda = 0.1;
        let pair = Matrix3xX::from_columns(&[Vector3::zeros(), Vector3::new(lambda / 2.0, 0.0, 0.0)]);
        let a = array_response(&pair, &Aod::new(0.0, PI / 2.0), lambda);
        assert_relative_eq!(a[0].re, 1.0);
        assert_relative_eq!(a[1].re, -1.0, epsilon = 1e-12);
        assert!(a[1].im.abs() < 1e-12);

        // qᵀκ = 2π for every element: all ones.
        let wrap = Matrix3xX::from_columns(&[Vector3::new(lambda, 0.0, 0.0), Vector3::new(0.0, 0.0, 0.0)]);
        let a = array_response(&wrap, &Aod::new(0.0, PI / 2.0), lambda);
        for z in a.iter() {
            assert_relative_eq!(z.re, 1.0, epsilon = 1e-12);
            assert!(z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn upa_examples() {
        assert_eq!(upa_layout(1, 1, 0.05).unwrap(), Matrix3xX::zeros(1));
        let two = upa_layout(2, 1, 0.05).unwrap();
        assert_relative_eq!(two[(0, 0)], -0.025);
        assert_relative_eq!(two[(0, 1)], 0.025);
        assert_eq!(two.row(1).amax(), 0.0);
        assert_eq!(two.row(2).amax(), 0.0);

        let lambda = 0.1;
        let grid = upa_layout(4, 4, lambda / 2.0).unwrap();
        assert_eq!(grid.ncols(), 16);
        let mut min = f64::INFINITY;
        for i in 0..16 {
            for j in (i + 1)..16 {
                min = min.min((grid.column(i) - grid.column(j)).norm());
            }
        }
        assert_relative_eq!(min, lambda / 2.0, epsilon = 1e-15);
        let centroid: Vector3<f64> = grid.column_sum() / 16.0;
        assert!(centroid.norm() < 1e-15);
    }

    #[test]
    fn upa_rejects_bad_shapes() {
        assert!(upa_layout(0, 3, 0.1).is_err());
        assert!(upa_layout(2, 3, 0.0).is_err());
    }

    #[test]
    fn default_beamformer_is_matched() {
        let radio = Radio {
            wavelength: 0.1,
            effective_bandwidth: 1e6,
            noise_psd: 1e-10,
            lightspeed: SPEED_OF_LIGHT,
        };
        let uav = UavSpec::new(Vector3::new(30.0, -20.0, 100.0), upa_layout(4, 4, 0.05).unwrap());
        let s = Scenario::new(radio, Vector3::zeros(), vec![uav]).unwrap();
        assert_relative_eq!(s.uav(0).beamformer.norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.beam_gain(0), 16.0, epsilon = 1e-10);
    }

    #[test]
    fn scenario_rejects_ue_on_uav() {
        let radio = Radio {
            wavelength: 0.1,
            effective_bandwidth: 1e6,
            noise_psd: 1e-10,
            lightspeed: SPEED_OF_LIGHT,
        };
        let uav = UavSpec::new(Vector3::zeros(), upa_layout(1, 1, 0.05).unwrap());
        assert!(matches!(
            Scenario::new(radio, Vector3::zeros(), vec![uav]),
            Err(Error::InvalidGeometry(_))
        ));
    }

    fn point() -> impl Strategy<Value = Vector3<f64>> {
        (-500.0..500.0f64, -500.0..500.0f64, -500.0..500.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn aod_reconstructs_unit_direction(s in point(), t in point()) {
            prop_assume!((t - s).norm() > 1e-6);
            let a = aod(&s, &t).unwrap();
            prop_assert!(a.azimuth > -PI && a.azimuth <= PI);
            prop_assert!((0.0..=PI).contains(&a.elevation));
            let d = a.direction();
            let expected = (t - s).normalize();
            prop_assert!((d - expected).norm() < 1e-12);
        }

        #[test]
        fn wavevector_norm_is_two_pi_over_lambda(az in -PI..PI, el in 0.0..PI, lambda in 1e-3..10.0f64) {
            let k = wavevector(&Aod::new(az, el), lambda);
            let expected = 2.0 * PI / lambda;
            prop_assert!(((k.norm() - expected) / expected).abs() < 1e-12);
        }

        #[test]
        fn array_response_has_unit_modulus(az in -PI..PI, el in 0.0..PI, rows in 1usize..5, cols in 1usize..5) {
            let q = upa_layout(rows, cols, 0.05).unwrap();
            let a = array_response(&q, &Aod::new(az, el), 0.1);
            for z in a.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
            prop_assert!((a.norm_squared() - (rows * cols) as f64).abs() < 1e-9);
        }
    }
}
