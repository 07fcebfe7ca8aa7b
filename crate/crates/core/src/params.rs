//! Physical inputs of the rotating-frame Hamiltonian and the quantities
//! derived from its static part.
//!
//! Internally every frequency is angular, in rad/μs, and time is in μs.
//! User-facing values are quoted as "frequency/2π in MHz", which is the
//! convention of every number in the literature on this system, so the
//! constructors below take MHz and multiply by 2π.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default spectral decay rate, 1/T₂ with T₂ = 4 μs.
pub const DEFAULT_GAMMA: f64 = 0.25;

/// Resonance detuning ratio above which a configuration is flagged.
pub const DETUNING_WARN_THRESHOLD: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("modulation frequency must be positive and finite, got {0}")]
    ModFreq(f64),
    #[error("spectral decay rate must be non-negative and finite, got {0}")]
    Gamma(f64),
    #[error("drive amplitude must be non-negative and finite, got {0}")]
    Amplitude(f64),
    #[error("delta_x and delta_z are both zero: mixing angle undefined")]
    ZeroSplitting,
    #[error("non-finite parameter `{0}`")]
    NonFinite(&'static str),
}

/// The five physical drive inputs plus the phenomenological decay rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Transverse splitting Δx, rad/μs.
    pub delta_x: f64,
    /// Detuning Δz, rad/μs.
    pub delta_z: f64,
    /// Low-frequency drive amplitude A, rad/μs.
    pub amp: f64,
    /// Low-frequency drive angular frequency ω, rad/μs.
    pub mod_freq: f64,
    /// Initial drive phase ψ, radians.
    pub phase: f64,
    /// Spectral decay rate γ, 1/μs.
    pub gamma: f64,
}

impl DriveParams {
    /// Builds parameters from angular frequencies (rad/μs).
    pub fn new(
        delta_x: f64,
        delta_z: f64,
        amp: f64,
        mod_freq: f64,
        phase: f64,
        gamma: f64,
    ) -> Result<Self, ParamError> {
        let p = DriveParams {
            delta_x,
            delta_z,
            amp,
            mod_freq,
            phase,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from "frequency/2π in MHz" values. `phase_deg` is in
    /// degrees, `gamma` in 1/μs.
    pub fn from_mhz(
        delta_x_mhz: f64,
        delta_z_mhz: f64,
        amp_mhz: f64,
        mod_freq_mhz: f64,
        phase_deg: f64,
        gamma: f64,
    ) -> Result<Self, ParamError> {
        Self::new(
            TAU * delta_x_mhz,
            TAU * delta_z_mhz,
            TAU * amp_mhz,
            TAU * mod_freq_mhz,
            phase_deg.to_radians(),
            gamma,
        )
    }

    /// The parameter set of the reference NV-centre configuration:
    /// ω/2π = 5.22 MHz, Δx/2π = 10 MHz, Δz/2π = 3 MHz, ψ = 0, A = 0.
    pub fn reference() -> Self {
        Self::from_mhz(10.0, 3.0, 0.0, 5.22, 0.0, DEFAULT_GAMMA).expect("reference parameters are valid")
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, v) in [
            ("delta_x", self.delta_x),
            ("delta_z", self.delta_z),
            ("phase", self.phase),
        ] {
            if !v.is_finite() {
                return Err(ParamError::NonFinite(name));
            }
        }
        if !(self.mod_freq.is_finite() && self.mod_freq > 0.0) {
            return Err(ParamError::ModFreq(self.mod_freq));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(ParamError::Gamma(self.gamma));
        }
        if !(self.amp.is_finite() && self.amp >= 0.0) {
            return Err(ParamError::Amplitude(self.amp));
        }
        if self.delta_x == 0.0 && self.delta_z == 0.0 {
            return Err(ParamError::ZeroSplitting);
        }
        Ok(())
    }

    pub fn with_amp(self, amp: f64) -> Self {
        DriveParams { amp, ..self }
    }

    pub fn with_phase(self, phase: f64) -> Self {
        DriveParams { phase, ..self }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        DriveParams { gamma, ..self }
    }

    pub fn delta_x_mhz(&self) -> f64 {
        self.delta_x / TAU
    }

    pub fn delta_z_mhz(&self) -> f64 {
        self.delta_z / TAU
    }

    pub fn amp_mhz(&self) -> f64 {
        self.amp / TAU
    }

    pub fn mod_freq_mhz(&self) -> f64 {
        self.mod_freq / TAU
    }

    pub fn phase_deg(&self) -> f64 {
        self.phase.to_degrees()
    }

    /// A/ω.
    pub fn amp_over_omega(&self) -> f64 {
        self.amp / self.mod_freq
    }
}

/// Quantities that follow from diagonalising the static part of the
/// Hamiltonian (rotation about y by θ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedFrame {
    /// ω₀ = √(Δz² + Δx²), rad/μs.
    pub omega0: f64,
    pub sin_theta: f64,
    pub cos_theta: f64,
    /// Modulation index a = 2A sinθ/ω.
    pub mod_index: f64,
    /// g/ε = A cosθ/ω.
    pub coupling_ratio: f64,
}

impl DerivedFrame {
    pub fn theta(&self) -> f64 {
        self.sin_theta.atan2(self.cos_theta)
    }

    /// sin 2θ.
    pub fn sin_2theta(&self) -> f64 {
        2.0 * self.sin_theta * self.cos_theta
    }
}

pub fn derive_frame(p: &DriveParams) -> Result<DerivedFrame, ParamError> {
    p.validate()?;
    let omega0 = p.delta_z.hypot(p.delta_x);
    let sin_theta = p.delta_x / omega0;
    let cos_theta = p.delta_z / omega0;
    Ok(DerivedFrame {
        omega0,
        sin_theta,
        cos_theta,
        mod_index: 2.0 * p.amp * sin_theta / p.mod_freq,
        coupling_ratio: p.amp * cos_theta / p.mod_freq,
    })
}

/// Signed detuning (ω₀ − 2ω)/ω from the second-order Raman resonance.
pub fn resonance_detuning(f: &DerivedFrame, p: &DriveParams) -> f64 {
    (f.omega0 - 2.0 * p.mod_freq) / p.mod_freq
}

/// True when |detuning| exceeds `threshold`.
pub fn is_off_resonant(f: &DerivedFrame, p: &DriveParams, threshold: f64) -> bool {
    resonance_detuning(f, p).abs() > threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn three_four_five() {
        let p = DriveParams::from_mhz(3.0, 4.0, 0.0, 1.0, 0.0, 0.25).unwrap();
        let f = derive_frame(&p).unwrap();
        assert_relative_eq!(f.omega0 / TAU, 5.0, epsilon = 1e-12);
        assert_relative_eq!(f.sin_theta, 0.6, epsilon = 1e-12);
        assert_relative_eq!(f.cos_theta, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn reference_frame() {
        let f = derive_frame(&DriveParams::reference()).unwrap();
        assert_relative_eq!(f.omega0 / TAU, 109f64.sqrt(), epsilon = 1e-12);
        assert!((f.sin_theta - 0.95783).abs() < 1e-5);
        assert!((f.cos_theta - 0.28735).abs() < 1e-5);
        assert_relative_eq!(f.sin_theta.powi(2) + f.cos_theta.powi(2), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn no_transverse_splitting_means_no_modulation() {
        for amp in [0.0, 1.0, 50.0] {
            let p = DriveParams::from_mhz(0.0, 5.0, amp, 2.5, 0.0, 0.25).unwrap();
            let f = derive_frame(&p).unwrap();
            assert_eq!(f.sin_theta, 0.0);
            assert_eq!(f.mod_index, 0.0);
            assert_eq!(f.theta(), 0.0);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(
            DriveParams::from_mhz(0.0, 0.0, 1.0, 1.0, 0.0, 0.25),
            Err(ParamError::ZeroSplitting)
        );
        assert!(matches!(
            DriveParams::from_mhz(1.0, 1.0, 1.0, 0.0, 0.0, 0.25),
            Err(ParamError::ModFreq(_))
        ));
        assert!(matches!(
            DriveParams::from_mhz(1.0, 1.0, 1.0, 1.0, 0.0, -0.1),
            Err(ParamError::Gamma(_))
        ));
        assert!(matches!(
            DriveParams::from_mhz(1.0, 1.0, -1.0, 1.0, 0.0, 0.1),
            Err(ParamError::Amplitude(_))
        ));
        assert!(matches!(
            DriveParams::from_mhz(f64::NAN, 1.0, 1.0, 1.0, 0.0, 0.1),
            Err(ParamError::NonFinite("delta_x"))
        ));
    }

    #[test]
    fn detuning() {
        // reference ω₀/2π = √109 ≈ 10.44031 against 2ω/2π = 10.44
        let f = derive_frame(&DriveParams::reference()).unwrap();
        let r = resonance_detuning(&f, &DriveParams::reference());
        assert!((r - 5.8718e-5).abs() < 1e-8, "{r}");
        assert!(!is_off_resonant(&f, &DriveParams::reference(), DETUNING_WARN_THRESHOLD));

        let p = DriveParams::from_mhz(0.0, 12.0, 0.0, 5.0, 0.0, 0.25).unwrap();
        let f = derive_frame(&p).unwrap();
        assert_relative_eq!(resonance_detuning(&f, &p), 0.4, epsilon = 1e-12);
        assert!(is_off_resonant(&f, &p, DETUNING_WARN_THRESHOLD));

        let p = DriveParams::new(0.0, 10.0, 0.0, 5.0, 0.0, 0.25).unwrap();
        let f = derive_frame(&p).unwrap();
        assert_eq!(resonance_detuning(&f, &p), 0.0);
    }

    proptest! {
        #[test]
        fn scale_covariance(
            dx in 0.1f64..50.0, dz in -50.0f64..50.0, amp in 0.0f64..100.0,
            w in 0.5f64..40.0, k in 0.01f64..100.0,
        ) {
            let p = DriveParams::new(dx, dz, amp, w, 0.3, 0.25).unwrap();
            let q = DriveParams::new(k * dx, k * dz, k * amp, k * w, 0.3, 0.25).unwrap();
            let (f, g) = (derive_frame(&p).unwrap(), derive_frame(&q).unwrap());
            prop_assert!((f.sin_theta - g.sin_theta).abs() < 1e-12);
            prop_assert!((f.cos_theta - g.cos_theta).abs() < 1e-12);
            prop_assert!((f.mod_index - g.mod_index).abs() < 1e-12 * (1.0 + f.mod_index));
            prop_assert!((f.coupling_ratio - g.coupling_ratio).abs() < 1e-12 * (1.0 + f.coupling_ratio.abs()));
            prop_assert!((g.omega0 / f.omega0 - k).abs() < 1e-12 * k);
        }

        #[test]
        fn mhz_round_trip(
            dx in -30.0f64..30.0, dz in 0.01f64..30.0, amp in 0.0f64..40.0,
            w in 0.1f64..20.0, psi in -360.0f64..360.0,
        ) {
            let p = DriveParams::from_mhz(dx, dz, amp, w, psi, 0.25).unwrap();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-300);
            prop_assert!(close(p.delta_x_mhz(), dx));
            prop_assert!(close(p.delta_z_mhz(), dz));
            prop_assert!(close(p.amp_mhz(), amp));
            prop_assert!(close(p.mod_freq_mhz(), w));
            prop_assert!(close(p.phase_deg(), psi));
        }
    }
}
