//! Ground-truth dynamics.
//!
//! [`evolve_full`] integrates i dψ/dt = H(t) ψ with
//! H = Δz/2 σz + Δx/2 σx + A sin(ωt + ψ) σx directly, starting from |0⟩
//! (the σz = +1 state). [`evolve_effective`] evolves under the static
//! second-order Hamiltonian and undoes the two frame changes analytically.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{carrier_phase, Provenance, RamanQuantities, TimeGrid, TimeTrace};
use crate::params::{DerivedFrame, DriveParams};

/// Minimum number of steps per period of the fastest frequency.
pub const MIN_STEPS_PER_FAST_PERIOD: u32 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("step {dt_max} us exceeds the limit {limit} us ({steps} steps per fast period)")]
    StepTooLarge { dt_max: f64, limit: f64, steps: u32 },
    #[error("steps_per_fast_period must be at least {MIN_STEPS_PER_FAST_PERIOD}, got {0}")]
    TooFewSteps(u32),
    #[error("state became non-finite at t = {0} us")]
    NonFinite(f64),
    #[error("time grid must start at t0 >= 0, got {0}")]
    NegativeStart(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    /// Amplitude on |0⟩.
    pub c0: Complex64,
    /// Amplitude on |−1⟩.
    pub c1: Complex64,
}

impl QubitState {
    pub fn ground() -> Self {
        QubitState {
            c0: Complex64::new(1.0, 0.0),
            c1: Complex64::new(0.0, 0.0),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    pub fn ground_population(&self) -> f64 {
        self.c0.norm_sqr()
    }

    fn is_finite(&self) -> bool {
        self.c0.re.is_finite() && self.c0.im.is_finite() && self.c1.re.is_finite() && self.c1.im.is_finite()
    }

    fn axpy(&self, h: f64, k: &QubitState) -> QubitState {
        QubitState {
            c0: self.c0 + k.c0 * h,
            c1: self.c1 + k.c1 * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMethod {
    /// Classical fourth-order Runge–Kutta.
    #[default]
    Rk4,
    /// Fourth-order Magnus expansion with two Gauss points; unitary per step.
    Magnus4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Largest internal step, μs.
    pub dt_max: f64,
    pub steps_per_fast_period: u32,
    pub method: IntegratorMethod,
}

impl IntegratorConfig {
    /// Fixed step `dt_max` with the default method and 40 steps per fast period.
    pub fn with_step(dt_max: f64) -> Self {
        IntegratorConfig {
            dt_max,
            steps_per_fast_period: MIN_STEPS_PER_FAST_PERIOD,
            method: IntegratorMethod::Rk4,
        }
    }

    pub fn method(self, method: IntegratorMethod) -> Self {
        IntegratorConfig { method, ..self }
    }

    /// Step limit (2π/ω_fast)/steps_per_fast_period, ω_fast = max(ω₀, ω, A).
    pub fn step_limit(&self, p: &DriveParams) -> f64 {
        let omega0 = p.delta_z.hypot(p.delta_x);
        let fast = omega0.max(p.mod_freq).max(p.amp);
        TAU / fast / self.steps_per_fast_period as f64
    }

    pub fn validate(&self, p: &DriveParams) -> Result<(), OracleError> {
        if self.steps_per_fast_period < MIN_STEPS_PER_FAST_PERIOD {
            return Err(OracleError::TooFewSteps(self.steps_per_fast_period));
        }
        let limit = self.step_limit(p);
        if !(self.dt_max > 0.0 && self.dt_max <= limit * (1.0 + 1e-12)) {
            return Err(OracleError::StepTooLarge {
                dt_max: self.dt_max,
                limit,
                steps: self.steps_per_fast_period,
            });
        }
        Ok(())
    }
}

/// Integration diagnostics returned alongside an ODE trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeDiagnostics {
    /// max_t | ‖ψ(t)‖² − 1 |.
    pub max_norm_drift: f64,
    pub internal_step: f64,
    pub steps: usize,
}

struct Hamiltonian {
    half_dz: f64,
    half_dx: f64,
    amp: f64,
    omega: f64,
    phase: f64,
}

impl Hamiltonian {
    fn new(p: &DriveParams) -> Self {
        Hamiltonian {
            half_dz: 0.5 * p.delta_z,
            half_dx: 0.5 * p.delta_x,
            amp: p.amp,
            omega: p.mod_freq,
            phase: p.phase,
        }
    }

    /// (diagonal, off-diagonal) of the real symmetric H(t).
    fn at(&self, t: f64) -> (f64, f64) {
        (self.half_dz, self.half_dx + self.amp * (self.omega * t + self.phase).sin())
    }

    /// −i H(t) ψ
    fn rhs(&self, t: f64, s: &QubitState) -> QubitState {
        let (z, x) = self.at(t);
        let mi = Complex64::new(0.0, -1.0);
        QubitState {
            c0: mi * (s.c0 * z + s.c1 * x),
            c1: mi * (s.c0 * x - s.c1 * z),
        }
    }

    fn rk4_step(&self, t: f64, h: f64, s: &QubitState) -> QubitState {
        let k1 = self.rhs(t, s);
        let k2 = self.rhs(t + 0.5 * h, &s.axpy(0.5 * h, &k1));
        let k3 = self.rhs(t + 0.5 * h, &s.axpy(0.5 * h, &k2));
        let k4 = self.rhs(t + h, &s.axpy(h, &k3));
        QubitState {
            c0: s.c0 + (k1.c0 + (k2.c0 + k3.c0) * 2.0 + k4.c0) * (h / 6.0),
            c1: s.c1 + (k1.c1 + (k2.c1 + k3.c1) * 2.0 + k4.c1) * (h / 6.0),
        }
    }

    fn magnus4_step(&self, t: f64, h: f64, s: &QubitState) -> QubitState {
        let g = 3f64.sqrt() / 6.0;
        let (z1, x1) = self.at(t + (0.5 - g) * h);
        let (z2, x2) = self.at(t + (0.5 + g) * h);
        // Ω = −i h/2 (H₁ + H₂) − (√3 h²/12) [H₂, H₁] = −i v·σ.
        // With H_k = z_k σz + x_k σx, [H₂, H₁] = 2i (z₂x₁ − x₂z₁) σy, so the
        // commutator only feeds the σy component.
        let vx = 0.5 * h * (x1 + x2);
        let vz = 0.5 * h * (z1 + z2);
        let vy = -(3f64.sqrt() / 6.0) * h * h * (x2 * z1 - z2 * x1);
        let r = (vx * vx + vy * vy + vz * vz).sqrt();
        let (sn, cs) = r.sin_cos();
        let k = if r > 0.0 { sn / r } else { 1.0 };
        // exp(−i v·σ) = cos r − i sin r (v̂·σ)
        let i = Complex64::new(0.0, 1.0);
        let u00 = Complex64::new(cs, -k * vz);
        let u11 = Complex64::new(cs, k * vz);
        let u01 = -i * k * Complex64::new(vx, -vy);
        let u10 = -i * k * Complex64::new(vx, vy);
        QubitState {
            c0: u00 * s.c0 + u01 * s.c1,
            c1: u10 * s.c0 + u11 * s.c1,
        }
    }
}

/// Direct integration from |0⟩ at t = 0. The population at each grid point
/// is |c₀|².
pub fn evolve_full(p: &DriveParams, grid: TimeGrid, cfg: &IntegratorConfig) -> Result<TimeTrace, OracleError> {
    evolve_full_with_diagnostics(p, grid, cfg).map(|(t, _)| t)
}

pub fn evolve_full_with_diagnostics(
    p: &DriveParams,
    grid: TimeGrid,
    cfg: &IntegratorConfig,
) -> Result<(TimeTrace, OdeDiagnostics), OracleError> {
    cfg.validate(p)?;
    if grid.t0 < 0.0 {
        return Err(OracleError::NegativeStart(grid.t0));
    }
    let ham = Hamiltonian::new(p);
    let sub = (grid.dt / cfg.dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = grid.dt / sub as f64;
    let step = |t: f64, s: &QubitState| match cfg.method {
        IntegratorMethod::Rk4 => ham.rk4_step(t, h, s),
        IntegratorMethod::Magnus4 => ham.magnus4_step(t, h, s),
    };

    let mut state = QubitState::ground();
    let mut steps = 0usize;
    // reach t0 first
    if grid.t0 > 0.0 {
        let n0 = (grid.t0 / h).ceil() as usize;
        let h0 = grid.t0 / n0 as f64;
        for i in 0..n0 {
            state = match cfg.method {
                IntegratorMethod::Rk4 => ham.rk4_step(i as f64 * h0, h0, &state),
                IntegratorMethod::Magnus4 => ham.magnus4_step(i as f64 * h0, h0, &state),
            };
        }
        steps += n0;
    }

    let mut samples = Vec::with_capacity(grid.len);
    let mut drift: f64 = (state.norm_sqr() - 1.0).abs();
    for i in 0..grid.len {
        if i > 0 {
            let t_start = grid.time(i - 1);
            for j in 0..sub {
                state = step(t_start + j as f64 * h, &state);
            }
            steps += sub;
            if !state.is_finite() {
                return Err(OracleError::NonFinite(grid.time(i)));
            }
            drift = drift.max((state.norm_sqr() - 1.0).abs());
        }
        samples.push(state.ground_population());
    }
    let frame = crate::params::derive_frame(p).expect("validated parameters");
    Ok((
        TimeTrace {
            grid,
            samples,
            provenance: Provenance::OdeOracle,
            params: *p,
            frame,
        },
        OdeDiagnostics {
            max_norm_drift: drift,
            internal_step: h,
            steps,
        },
    ))
}

/// 2×2 complex matrix in row-major order.
type M2 = [[Complex64; 2]; 2];

fn mat_vec(m: &M2, v: [Complex64; 2]) -> [Complex64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// Evolution under the static effective Hamiltonian, mapped back to the
/// original frame.
///
/// The dressed-frame state ψ₂ = U₂†(t) U₁† ψ obeys i dψ₂/dt = H_eff ψ₂ with
/// U₁ = e^{−iθσy/2} and U₂ = exp{−i[2ωt − a cos(ωt+ψ)] σz/2}. The resonant
/// rotation rate 2ω is used in U₂, which is the frame in which the averaged
/// Hamiltonian is static.
pub fn evolve_effective(p: &DriveParams, f: &DerivedFrame, q: &RamanQuantities, grid: TimeGrid) -> TimeTrace {
    let zero = Complex64::new(0.0, 0.0);
    let (sh, ch) = (0.5 * f.theta()).sin_cos();
    let u1: M2 = [
        [Complex64::new(ch, 0.0), Complex64::new(-sh, 0.0)],
        [Complex64::new(sh, 0.0), Complex64::new(ch, 0.0)],
    ];
    let u1_dag: M2 = [[u1[0][0], u1[1][0]], [u1[0][1], u1[1][1]]];
    let u2 = |t: f64| -> [Complex64; 2] {
        let phi = carrier_phase(p, f, t);
        [Complex64::from_polar(1.0, -0.5 * phi), Complex64::from_polar(1.0, 0.5 * phi)]
    };

    // H_eff = ½ (Ω₂ cos2ψ σx + Ω₂ sin2ψ σy + ω_BS σz)
    let nx = q.omega_rwa * (2.0 * p.phase).cos();
    let ny = q.omega_rwa * (2.0 * p.phase).sin();
    let nz = q.bs_shift;
    let w = q.omega_eff;

    let start = mat_vec(&u1_dag, [Complex64::new(1.0, 0.0), zero]);
    let d0 = u2(0.0);
    let psi2_0 = [start[0] * d0[0].conj(), start[1] * d0[1].conj()];

    let samples = grid
        .times()
        .map(|t| {
            let (s, c) = (0.5 * w * t).sin_cos();
            let k = if w > 0.0 { s / w } else { 0.0 };
            // exp(−i H_eff t) = cos(Ω*t/2) − i sin(Ω*t/2) n̂·σ
            let prop: M2 = [
                [Complex64::new(c, -k * nz), Complex64::new(-k * ny, -k * nx)],
                [Complex64::new(k * ny, -k * nx), Complex64::new(c, k * nz)],
            ];
            let psi2 = mat_vec(&prop, psi2_0);
            let d = u2(t);
            let psi1 = [d[0] * psi2[0], d[1] * psi2[1]];
            let psi = mat_vec(&u1, psi1);
            psi[0].norm_sqr()
        })
        .collect();
    TimeTrace {
        grid,
        samples,
        provenance: Provenance::EffectiveHamiltonian,
        params: *p,
        frame: *f,
    }
}

/// Dominant slow frequency of a trace, rad/μs.
///
/// The trace is demodulated with the carrier e^{−i[2ωt − a cos(ωt+ψ)]},
/// averaged over one modulation period, stripped of its mean and fitted with
/// a single complex tone by maximising the periodogram over
/// ν ∈ [−ω/2, ω/2]. Returns |ν|.
pub fn slow_frequency(trace: &TimeTrace) -> f64 {
    let p = &trace.params;
    let f = &trace.frame;
    let grid = trace.grid;
    let mean = trace.mean();
    let z: Vec<Complex64> = trace
        .samples
        .iter()
        .zip(grid.times())
        .map(|(v, t)| Complex64::from_polar(v - mean, -carrier_phase(p, f, t)))
        .collect();

    let window = ((TAU / p.mod_freq) / grid.dt).round().max(1.0) as usize;
    if z.len() <= window + 2 {
        return 0.0;
    }
    // boxcar via prefix sums, decimated to ~8 samples per modulation period
    let mut prefix = Vec::with_capacity(z.len() + 1);
    prefix.push(Complex64::new(0.0, 0.0));
    for v in &z {
        let last = *prefix.last().unwrap();
        prefix.push(last + v);
    }
    let stride = (window / 8).max(1);
    let norm = 1.0 / window as f64;
    let mut ts = Vec::new();
    let mut zs = Vec::new();
    let mut i = 0;
    while i + window <= z.len() {
        zs.push((prefix[i + window] - prefix[i]) * norm);
        ts.push(grid.time(i) + 0.5 * (window - 1) as f64 * grid.dt);
        i += stride;
    }
    let zm = zs.iter().sum::<Complex64>() / zs.len() as f64;
    for v in zs.iter_mut() {
        *v -= zm;
    }

    let power = |nu: f64| -> f64 {
        zs.iter()
            .zip(&ts)
            .map(|(v, t)| v * Complex64::from_polar(1.0, -nu * t))
            .sum::<Complex64>()
            .norm_sqr()
    };
    let span = ts.last().unwrap() - ts[0];
    let nu_max = 0.5 * p.mod_freq;
    let step = TAU / span / 16.0;
    let n = (2.0 * nu_max / step).ceil() as usize;
    let (mut best_nu, mut best) = (0.0, f64::MIN);
    for k in 0..=n {
        let nu = -nu_max + k as f64 * step;
        let pw = power(nu);
        if pw > best {
            best = pw;
            best_nu = nu;
        }
    }
    // golden-section refinement inside the neighbouring coarse cells
    let (mut a, mut b) = (best_nu - step, best_nu + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (power(x1), power(x2));
    for _ in 0..60 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = power(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = power(x2);
        }
    }
    (0.5 * (a + b)).abs()
}
