//! Closed forms for the second-order Raman transition.
//!
//! In the frame that follows the dressed-state splitting, second-order
//! averaging leaves the static Hamiltonian
//!
//! ```text
//! H_eff = ω_BS/2 σz + Ω₂/2 (σ⁺ e^{−2iψ} + h.c.)
//! ```
//!
//! with the RWA Rabi frequency Ω₂ = 4 J₂(a)/a · A cosθ and the
//! Bloch–Siegert shift ω_BS given by a Bessel double sum. The ground-state
//! population is then a five-term closed form in the effective Rabi
//! frequency Ω₂* = √(Ω₂² + ω_BS²).

use std::f64::consts::FRAC_PI_2;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{DerivedFrame, DriveParams};
use crate::special::{self, SpecialError};

/// Default truncation |n| ≤ N of the Bloch–Siegert sums.
pub const DEFAULT_N_MAX: usize = 40;
/// Largest accepted truncation order.
pub const MAX_N_MAX: usize = 200;
/// Relative size of the tail bound below which a truncation is certified.
pub const TAIL_CERTIFY_REL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("effective Rabi frequency is zero (no transition to follow)")]
    NoTransition,
    #[error("truncation order {0} outside 1..={MAX_N_MAX}")]
    Truncation(usize),
}

/// Uniform sampling grid in μs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, len: usize) -> Self {
        assert!(dt > 0.0 && dt.is_finite(), "grid step must be positive");
        TimeGrid { t0, dt, len }
    }

    /// Grid covering [0, t_end] inclusive with step `dt`.
    pub fn span(t_end: f64, dt: f64) -> Self {
        let len = (t_end / dt).round() as usize + 1;
        Self::new(0.0, dt, len)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.time(i))
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len.saturating_sub(1))
    }

    /// Same span, half the step.
    pub fn refined(&self) -> Self {
        TimeGrid::new(self.t0, 0.5 * self.dt, 2 * self.len - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Five-term closed form.
    ClosedForm,
    /// Constant-amplitude closed form valid at Ω₂ = 0.
    Degenerate,
    /// Direct integration of the time-dependent Schrödinger equation.
    OdeOracle,
    /// Static effective Hamiltonian mapped back through the frame changes.
    EffectiveHamiltonian,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::ClosedForm => "closed_form",
            Provenance::Degenerate => "degenerate",
            Provenance::OdeOracle => "ode_oracle",
            Provenance::EffectiveHamiltonian => "effective_hamiltonian",
        }
    }
}

/// Uniformly sampled ground-state population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub grid: TimeGrid,
    pub samples: Vec<f64>,
    pub provenance: Provenance,
    pub params: DriveParams,
    pub frame: DerivedFrame,
}

impl TimeTrace {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.grid.times()
    }

    pub fn max_abs_diff(&self, other: &TimeTrace) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamanQuantities {
    /// Ω₂, rad/μs. Signed like J₂(a).
    pub omega_rwa: f64,
    /// ω_BS, rad/μs. Signed.
    pub bs_shift: f64,
    /// Ω₂* = √(Ω₂² + ω_BS²), rad/μs.
    pub omega_eff: f64,
    pub truncation_n: usize,
    /// Estimated magnitude of the discarded part of the Bloch–Siegert sums.
    pub tail_bound: f64,
}

impl RamanQuantities {
    /// Assembles quantities from given Ω₂ and ω_BS (no truncation involved).
    pub fn from_parts(omega_rwa: f64, bs_shift: f64) -> Self {
        RamanQuantities {
            omega_rwa,
            bs_shift,
            omega_eff: omega_rwa.hypot(bs_shift),
            truncation_n: 0,
            tail_bound: 0.0,
        }
    }

    /// Whether the tail bound is below 1e-6 of the largest frequency in play.
    pub fn is_certified(&self, omega: f64) -> bool {
        let scale = self.omega_rwa.abs().max(self.bs_shift.abs()).max(omega * 1e-9);
        self.tail_bound <= TAIL_CERTIFY_REL * scale
    }
}

/// J₂(a)/a with its a → 0 limit a/8.
fn j2_over_a(a: f64) -> Result<f64, SpecialError> {
    if a.abs() < 1e-3 {
        let a2 = a * a;
        Ok(a / 8.0 * (1.0 - a2 / 12.0 + a2 * a2 / 384.0))
    } else {
        Ok(special::bessel_j(2, a)? / a)
    }
}

/// RWA Rabi frequency Ω₂ = 4 J₂(a)/a · A cosθ.
pub fn rabi_rwa(p: &DriveParams, f: &DerivedFrame) -> Result<f64, AnalyticError> {
    Ok(4.0 * j2_over_a(f.mod_index)? * p.amp * f.cos_theta)
}

/// Bloch–Siegert shift and the tail bound of its truncated sums.
///
/// ```text
/// ω_BS = A²cos²θ/2ω · { Σ_{n≠−3} (Jₙ² + JₙJₙ₊₂)/(n+3) + Σ_{n≠−1} (Jₙ² + JₙJₙ₋₂)/(n+1) }
/// ```
///
/// Both sums run over |n| ≤ `n_max`. The tail bound is the magnitude of the
/// two outermost shells plus a rounding allowance; Jₙ(a) decays
/// super-exponentially once n exceeds a, so the discarded tail is smaller.
pub fn bloch_siegert_shift(
    p: &DriveParams,
    f: &DerivedFrame,
    n_max: usize,
) -> Result<(f64, f64), AnalyticError> {
    if n_max == 0 || n_max > MAX_N_MAX {
        return Err(AnalyticError::Truncation(n_max));
    }
    let prefactor = (p.amp * f.cos_theta).powi(2) / (2.0 * p.mod_freq);
    if prefactor == 0.0 {
        return Ok((0.0, 0.0));
    }
    let off = n_max as i64 + 2;
    let table = special::bessel_table_symmetric(off as usize, f.mod_index)?;
    let j = |n: i64| table[(n + off) as usize];
    let term = |n: i64| {
        let mut s = 0.0;
        if n != -3 {
            s += (j(n) * j(n) + j(n) * j(n + 2)) / (n + 3) as f64;
        }
        if n != -1 {
            s += (j(n) * j(n) + j(n) * j(n - 2)) / (n + 1) as f64;
        }
        s
    };
    let n = n_max as i64;
    let mut total = 0.0;
    let mut abs_total = 0.0;
    for k in -n..=n {
        let t = term(k);
        total += t;
        abs_total += t.abs();
    }
    let shell = |k: i64| if k == 0 { term(0).abs() } else { term(k).abs() + term(-k).abs() };
    let outer = shell(n) + shell(n - 1);
    let rounding = 8.0 * f64::EPSILON * abs_total;
    Ok((prefactor * total, prefactor.abs() * (outer + rounding)))
}

pub fn raman_quantities(p: &DriveParams, f: &DerivedFrame) -> Result<RamanQuantities, AnalyticError> {
    raman_quantities_with(p, f, DEFAULT_N_MAX)
}

pub fn raman_quantities_with(
    p: &DriveParams,
    f: &DerivedFrame,
    n_max: usize,
) -> Result<RamanQuantities, AnalyticError> {
    let omega_rwa = rabi_rwa(p, f)?;
    let (bs_shift, tail_bound) = bloch_siegert_shift(p, f, n_max)?;
    Ok(RamanQuantities {
        omega_rwa,
        bs_shift,
        omega_eff: omega_rwa.hypot(bs_shift),
        truncation_n: n_max,
        tail_bound,
    })
}

/// Amplitudes and phases of the closed-form population.
///
/// The `*_half` members are the same expressions as the `*0` members with
/// π/2 added to every trigonometric argument that contains ψ. Phases satisfy
/// cos φ = first/amplitude and sin φ = second/amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
    pub e0: f64,
    pub e_half: f64,
    pub e: f64,
    pub b0: f64,
    pub b_half: f64,
    pub b: f64,
    pub d0: f64,
    pub d_half: f64,
    pub d: f64,
    pub phi_c: f64,
    pub phi_e: f64,
    pub phi_b: f64,
    pub phi_d: f64,
}

struct Block {
    e: f64,
    b: f64,
    d: f64,
}

fn shifted_block(p: &DriveParams, f: &DerivedFrame, q: &RamanQuantities, delta: f64) -> Block {
    let psi = p.phase;
    let a_cos = f.mod_index * psi.cos();
    let sin2 = f.sin_theta * f.sin_theta;
    let r = q.omega_rwa / q.omega_eff;
    let bs = q.bs_shift / q.omega_eff;
    let e = 0.25
        * (r * r * sin2 * (4.0 * psi - a_cos + delta).cos() + r * r * sin2 * (a_cos + delta).cos()
            - r * bs * f.sin_2theta() * (2.0 * psi + delta).cos());
    let b = -e + 0.5 * sin2 * (a_cos + delta).cos();
    let d = -0.25 * r * f.sin_2theta() * (2.0 * psi + delta).sin() - 0.5 * bs * sin2 * (a_cos + delta).sin();
    Block { e, b, d }
}

pub fn envelope_coefficients(
    p: &DriveParams,
    f: &DerivedFrame,
    q: &RamanQuantities,
) -> Result<EnvelopeCoefficients, AnalyticError> {
    if !(q.omega_eff > 0.0) {
        return Err(AnalyticError::NoTransition);
    }
    let arg = 2.0 * p.phase - f.mod_index * p.phase.cos();
    let r = q.omega_rwa / q.omega_eff;
    let c1 = 0.25 * r * (q.bs_shift / q.omega_eff) * f.sin_2theta() * arg.cos()
        + 0.5 * r * r * f.cos_theta * f.cos_theta;
    let c2 = 0.25 * r * f.sin_2theta() * arg.sin();
    let zero = shifted_block(p, f, q, 0.0);
    let half = shifted_block(p, f, q, FRAC_PI_2);
    Ok(EnvelopeCoefficients {
        c1,
        c2,
        c: c1.hypot(c2),
        e0: zero.e,
        e_half: half.e,
        e: zero.e.hypot(half.e),
        b0: zero.b,
        b_half: half.b,
        b: zero.b.hypot(half.b),
        d0: zero.d,
        d_half: half.d,
        d: zero.d.hypot(half.d),
        phi_c: c2.atan2(c1),
        phi_e: half.e.atan2(zero.e),
        phi_b: half.b.atan2(zero.b),
        phi_d: half.d.atan2(zero.d),
    })
}

/// Phase of the fast "carrier": 2ωt − a cos(ωt + ψ).
pub fn carrier_phase(p: &DriveParams, f: &DerivedFrame, t: f64) -> f64 {
    2.0 * p.mod_freq * t - f.mod_index * (p.mod_freq * t + p.phase).cos()
}

/// Ground-state population from the five-term closed form.
///
/// The grid should resolve the fastest carrier (dt ≤ 2π/(40ω)).
pub fn population_closed_form(
    p: &DriveParams,
    f: &DerivedFrame,
    q: &RamanQuantities,
    ec: &EnvelopeCoefficients,
    grid: TimeGrid,
) -> TimeTrace {
    let mean = 0.5 * (1.0 + f.cos_theta * f.cos_theta - 2.0 * ec.c1);
    let w = q.omega_eff;
    let samples = grid
        .times()
        .map(|t| {
            let y = carrier_phase(p, f, t);
            let (s, c) = (w * t).sin_cos();
            mean + ec.e * (y - ec.phi_e).cos()
                + ec.c * (w * t - ec.phi_c).cos()
                + ec.b * c * (y - ec.phi_b).cos()
                + ec.d * s * (y - ec.phi_d).cos()
        })
        .collect();
    TimeTrace {
        grid,
        samples,
        provenance: Provenance::ClosedForm,
        params: *p,
        frame: *f,
    }
}

/// Closed form at Ω₂ = 0, where only the Bloch–Siegert shift drives the
/// slow dynamics. The caller asserts that the modulation index sits on a
/// zero of J₂.
pub fn population_degenerate(p: &DriveParams, f: &DerivedFrame, bs_shift: f64, grid: TimeGrid) -> TimeTrace {
    let sin2 = f.sin_theta * f.sin_theta;
    let base = 0.5 * (1.0 + f.cos_theta * f.cos_theta);
    let offset = f.mod_index * p.phase.cos();
    let samples = grid
        .times()
        .map(|t| base + 0.5 * sin2 * (bs_shift * t + carrier_phase(p, f, t) + offset).cos())
        .collect();
    TimeTrace {
        grid,
        samples,
        provenance: Provenance::Degenerate,
        params: *p,
        frame: *f,
    }
}

/// Amplitude of the carrier-frequency part of the closed form as a function
/// of time, |(b₀ + i b_{π/2}) cos Ω₂*t + (d₀ + i d_{π/2}) sin Ω₂*t|.
pub fn carrier_envelope(ec: &EnvelopeCoefficients, q: &RamanQuantities, t: f64) -> f64 {
    let zb = Complex64::new(ec.b0, ec.b_half);
    let zd = Complex64::new(ec.d0, ec.d_half);
    let (s, c) = (q.omega_eff * t).sin_cos();
    (zb * c + zd * s).norm()
}

/// Modulation depth (max − min)/(max + min) of the carrier envelope over
/// `grid`. Zero for a constant-amplitude oscillation.
pub fn envelope_modulation_depth(ec: &EnvelopeCoefficients, q: &RamanQuantities, grid: TimeGrid) -> f64 {
    let (lo, hi) = grid
        .times()
        .map(|t| carrier_envelope(ec, q, t))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi + lo > 0.0 {
        (hi - lo) / (hi + lo)
    } else {
        0.0
    }
}

/// Result of the harmonic-by-harmonic averaging check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragingResult {
    /// Ω₂ recovered from the static first-order term.
    pub omega_rwa: f64,
    /// ω_BS recovered from the second-order commutator average.
    pub bs_shift: f64,
    /// Largest off-diagonal element left in the second-order term (should vanish).
    pub off_diagonal: f64,
}

/// Second-order averaging done term by term.
///
/// The transformed interaction is expanded as H(t) = Σ_m V_m e^{imωt} with
/// ω₀ = 2ω imposed. The static part V₀ gives Ω₂; each harmonic pair adds
/// [V_m, V_{−m}]/(2mω) to the second-order average, whose σz coefficient is
/// ω_BS/2.
pub fn averaging_oracle(p: &DriveParams, f: &DerivedFrame, n_max: usize) -> Result<AveragingResult, AnalyticError> {
    if n_max == 0 || n_max > MAX_N_MAX {
        return Err(AnalyticError::Truncation(n_max));
    }
    let n = n_max as i64;
    let jn = special::bessel_table_symmetric(n_max, f.mod_index)?;
    // σ⁺ coefficients by harmonic m, stored at m + off.
    let off = n + 3;
    let mut alpha = vec![Complex64::new(0.0, 0.0); (2 * off + 1) as usize];
    let pref = Complex64::new(0.0, -0.5 * p.amp * f.cos_theta); // (A cosθ)/(2i)
    let psi = p.phase;
    for k in -n..=n {
        let jk = jn[(k + n) as usize];
        let rot = Complex64::from_polar(jk, -(k as f64) * FRAC_PI_2);
        // e^{i(k+1)(ωt+ψ)} e^{2iωt}
        alpha[(k + 3 + off) as usize] += pref * rot * Complex64::from_polar(1.0, (k + 1) as f64 * psi);
        // −e^{i(k−1)(ωt+ψ)} e^{2iωt}
        alpha[(k + 1 + off) as usize] -= pref * rot * Complex64::from_polar(1.0, (k - 1) as f64 * psi);
    }
    let at = |m: i64| -> Complex64 {
        let idx = m + off;
        if idx < 0 || idx as usize >= alpha.len() {
            Complex64::new(0.0, 0.0)
        } else {
            alpha[idx as usize]
        }
    };
    let zero = Complex64::new(0.0, 0.0);
    let v = |m: i64| Matrix2::new(zero, at(m), at(-m).conj(), zero);

    let v0 = v(0);
    // V₀ = Ω₂/2 (σ⁺ e^{−2iψ} + h.c.)
    let omega_rwa = 2.0 * (v0[(0, 1)] * Complex64::from_polar(1.0, 2.0 * psi)).re;

    let mut second = Matrix2::<Complex64>::zeros();
    for m in 1..=off {
        let (vp, vm) = (v(m), v(-m));
        let comm = vp * vm - vm * vp;
        // the m and −m terms contribute equally
        second += comm * Complex64::new(1.0 / (m as f64 * p.mod_freq), 0.0);
    }
    let sz = 0.5 * (second[(0, 0)] - second[(1, 1)]);
    Ok(AveragingResult {
        omega_rwa,
        bs_shift: 2.0 * sz.re,
        off_diagonal: second[(0, 1)].norm().max(second[(1, 0)].norm()),
    })
}
