//! One-sided decaying Fourier response of a population trace and the line
//! diagnostics built on it.
//!
//! F(ω*) = ∫₀^∞ e^{−iω*t} e^{−γt} P(t) dt is evaluated by the trapezoid rule
//! on an explicit frequency grid. A component c e^{iΩt} of P contributes the
//! Lorentzian c/(γ + i(ω* − Ω)), so every line has half-width γ.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::TimeTrace;

/// Smallest accepted γT; e^{−8} ≈ 3.4e-4 of the envelope is left at the cut.
pub const MIN_DECAY_WINDOW: f64 = 8.0;
/// Minimum samples per period of the highest grid frequency.
pub const MIN_SAMPLES_PER_PERIOD: f64 = 10.0;
/// Default relative prominence for [`find_lines`].
pub const DEFAULT_PROMINENCE: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("window gamma*T = {0:.3} is shorter than {MIN_DECAY_WINDOW}")]
    WindowTooShort(f64),
    #[error("sampling step {dt} us resolves {max_freq} rad/us with fewer than {MIN_SAMPLES_PER_PERIOD} samples per period")]
    Aliasing { dt: f64, max_freq: f64 },
    #[error("frequency grid must be non-empty and strictly increasing")]
    BadGrid,
    #[error("fewer than two lines near harmonic {n}: singlet")]
    Singlet { n: u32, line: Option<SpectrumLine> },
    #[error("line fit is singular")]
    SingularFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierResponse {
    /// rad/μs, strictly increasing.
    pub freq_grid: Vec<f64>,
    pub values: Vec<Complex64>,
    pub gamma_used: f64,
    /// Integration window, μs.
    pub window_t: f64,
}

impl FourierResponse {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// |F| at the grid point closest to `freq`.
    pub fn magnitude_near(&self, freq: f64) -> f64 {
        let i = match self.freq_grid.binary_search_by(|x| x.total_cmp(&freq)) {
            Ok(i) => i,
            Err(i) if i == 0 => 0,
            Err(i) if i >= self.freq_grid.len() => self.freq_grid.len() - 1,
            Err(i) => {
                if freq - self.freq_grid[i - 1] < self.freq_grid[i] - freq {
                    i - 1
                } else {
                    i
                }
            }
        };
        self.values[i].norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLine {
    /// rad/μs
    pub center: f64,
    /// |F| at the centre.
    pub amplitude: f64,
    /// Full width of |F|² at half maximum, rad/μs.
    pub fwhm: f64,
}

/// Uniform grid `start, start + step, …` up to and including `stop`.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

pub fn fourier_response(trace: &TimeTrace, gamma: f64, freq_grid: &[f64]) -> Result<FourierResponse, SpectrumError> {
    if freq_grid.is_empty() || freq_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SpectrumError::BadGrid);
    }
    let grid = trace.grid;
    let window_t = grid.t_end() - grid.t0;
    if !(gamma * window_t >= MIN_DECAY_WINDOW) {
        return Err(SpectrumError::WindowTooShort(gamma * window_t));
    }
    let max_freq = freq_grid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_freq * grid.dt * MIN_SAMPLES_PER_PERIOD > std::f64::consts::TAU {
        return Err(SpectrumError::Aliasing { dt: grid.dt, max_freq });
    }

    let n = trace.samples.len();
    let weighted: Vec<f64> = trace
        .samples
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
            w * grid.dt * (-gamma * grid.time(k)).exp() * v
        })
        .collect();

    let values = freq_grid
        .par_iter()
        .map(|&nu| {
            // phasor recurrence, re-anchored every 64 samples
            let rot = Complex64::from_polar(1.0, -nu * grid.dt);
            let mut acc = Complex64::new(0.0, 0.0);
            let mut ph = Complex64::new(1.0, 0.0);
            for (k, w) in weighted.iter().enumerate() {
                if k % 64 == 0 {
                    ph = Complex64::from_polar(1.0, -nu * grid.time(k));
                }
                acc += ph * *w;
                ph *= rot;
            }
            acc
        })
        .collect();

    Ok(FourierResponse {
        freq_grid: freq_grid.to_vec(),
        values,
        gamma_used: gamma,
        window_t,
    })
}

/// Vertex of the parabola through three points.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    if curv == 0.0 || !curv.is_finite() {
        return None;
    }
    // y = y1 + s (x − x1) + curv (x − x1)²  with the slope at x1:
    let s = d1 + curv * (x[1] - x[0]);
    let xv = x[1] - s / (2.0 * curv);
    let yv = y[1] - s * s / (4.0 * curv);
    Some((xv, yv))
}

/// Local maxima of |F| whose topographic prominence is at least
/// `min_prominence` times the global maximum.
///
/// Centres are refined by a three-point parabola through 1/|F|², which is
/// exactly quadratic for an isolated Lorentzian. A maximum on the first grid
/// point at ω* = 0 is refined using |F(−ω)| = |F(ω)| of a real trace.
pub fn find_lines(fr: &FourierResponse, min_prominence: f64) -> Vec<SpectrumLine> {
    let mag = fr.magnitudes();
    let x = &fr.freq_grid;
    let n = mag.len();
    if n < 3 {
        return Vec::new();
    }
    let global = mag.iter().cloned().fold(0.0, f64::max);
    if global <= 0.0 {
        return Vec::new();
    }
    let threshold = min_prominence * global;
    let mut lines = Vec::new();
    for i in 0..n {
        let left_ok = i == 0 || mag[i] > mag[i - 1];
        let right_ok = i + 1 == n || mag[i] >= mag[i + 1];
        if !(left_ok && right_ok) || (i + 1 == n && mag[i] <= mag[i - 1]) {
            continue;
        }
        if prominence(&mag, i) < threshold {
            continue;
        }
        let (center, amplitude) = refine(x, &mag, i);
        let fwhm = half_width(x, &mag, i, center, amplitude);
        if fwhm > 0.0 && amplitude > 0.0 {
            lines.push(SpectrumLine { center, amplitude, fwhm });
        }
    }
    lines
}

fn prominence(mag: &[f64], i: usize) -> f64 {
    let h = mag[i];
    // lowest point on one side before higher ground or the edge
    let side = |iter: &mut dyn Iterator<Item = usize>| -> f64 {
        let mut low = h;
        for j in iter {
            if mag[j] > h {
                break;
            }
            low = low.min(mag[j]);
        }
        low
    };
    let r = side(&mut (i + 1..mag.len()));
    // the first point mirrors onto the unseen negative half
    let l = if i == 0 { r } else { side(&mut (0..i).rev()) };
    h - l.max(r)
}

fn refine(x: &[f64], mag: &[f64], i: usize) -> (f64, f64) {
    let inv = |k: usize| 1.0 / (mag[k] * mag[k]);
    let pts = if i == 0 {
        if x[0] == 0.0 && mag.len() > 1 {
            Some(([-x[1], 0.0, x[1]], [inv(1), inv(0), inv(1)]))
        } else {
            None
        }
    } else if i + 1 == mag.len() {
        None
    } else {
        Some(([x[i - 1], x[i], x[i + 1]], [inv(i - 1), inv(i), inv(i + 1)]))
    };
    match pts.and_then(|(xs, ys)| parabola_vertex(xs, ys)) {
        Some((xv, yv)) if yv > 0.0 && (xv - x[i]).abs() <= (x[i.min(x.len() - 2) + 1] - x[i.max(1) - 1]) => {
            (xv, 1.0 / yv.sqrt())
        }
        _ => (x[i], mag[i]),
    }
}

fn half_width(x: &[f64], mag: &[f64], i: usize, center: f64, amplitude: f64) -> f64 {
    // half power: |F| = amplitude/√2 sits at ±γ of an isolated Lorentzian
    let half = amplitude * std::f64::consts::FRAC_1_SQRT_2;
    let crossing = |range: &mut dyn Iterator<Item = usize>, prev0: usize| -> Option<f64> {
        let mut prev = prev0;
        for j in range {
            if mag[j] > mag[prev] {
                return None;
            }
            if mag[j] <= half {
                let t = (mag[prev] - half) / (mag[prev] - mag[j]);
                return Some(x[prev] + t * (x[j] - x[prev]));
            }
            prev = j;
        }
        None
    };
    let left = crossing(&mut (0..i).rev(), i);
    let right = crossing(&mut (i + 1..mag.len()), i);
    match (left, right) {
        (Some(l), Some(r)) => r - l,
        (None, Some(r)) if i == 0 && x[0] == 0.0 => 2.0 * r,
        (Some(l), None) => 2.0 * (center - l),
        (None, Some(r)) => 2.0 * (r - center),
        (None, None) => 0.0,
    }
}

/// Splitting between the two strongest lines inside (nω − ω/2, nω + ω/2).
pub fn doublet_splitting(lines: &[SpectrumLine], n: u32, omega: f64) -> Result<f64, SpectrumError> {
    let centre = n as f64 * omega;
    let mut inside: Vec<SpectrumLine> = lines
        .iter()
        .filter(|l| (l.center - centre).abs() < 0.5 * omega)
        .copied()
        .collect();
    inside.sort_by(|a, b| b.amplitude.total_cmp(&a.amplitude));
    if inside.len() < 2 {
        return Err(SpectrumError::Singlet {
            n,
            line: inside.first().copied(),
        });
    }
    let (a, b) = (inside[0].center, inside[1].center);
    Ok((a - b).abs())
}

/// Complex amplitudes c_k of the model F(ω*) = Σ c_k/(γ + i(ω* − Ω_k)),
/// fitted by linear least squares over the whole response.
///
/// Every component with noticeable weight should be listed, including the
/// mirror lines at −Ω_k that a real trace always carries; their tails reach
/// positive frequencies.
pub fn fit_line_amplitudes(fr: &FourierResponse, centers: &[f64]) -> Result<Vec<Complex64>, SpectrumError> {
    use nalgebra::{DMatrix, DVector};
    let rows = fr.freq_grid.len();
    let cols = centers.len();
    if cols == 0 || rows < cols {
        return Err(SpectrumError::SingularFit);
    }
    let g = fr.gamma_used;
    let design = DMatrix::from_fn(rows, cols, |r, c| {
        Complex64::new(1.0, 0.0) / Complex64::new(g, fr.freq_grid[r] - centers[c])
    });
    let rhs = DVector::from_column_slice(&fr.values);
    let svd = design.svd(true, true);
    let sol = svd.solve(&rhs, 1e-12).map_err(|_| SpectrumError::SingularFit)?;
    Ok(sol.iter().copied().collect())
}

/// Member of the line comb {0, Ω*, nω, nω ± Ω*} that a driven population
/// trace is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombLine {
    /// Harmonic index n (0 for the slow lines).
    pub harmonic: u32,
    /// −1, 0 or +1: offset of −Ω*, none or +Ω* from nω.
    pub side: i8,
    /// rad/μs
    pub center: f64,
    /// |c| of the fitted Lorentzian c/(γ + i(ω* − center)).
    pub weight: f64,
}

/// Non-negative comb members up to harmonic `n_harm`.
pub fn comb_members(omega: f64, omega_eff: f64, n_harm: u32) -> Vec<(u32, i8, f64)> {
    let mut out = vec![(0, 0, 0.0), (0, 1, omega_eff)];
    for n in 1..=n_harm {
        let c = n as f64 * omega;
        out.extend([(n, -1, c - omega_eff), (n, 0, c), (n, 1, c + omega_eff)]);
    }
    out
}

/// Fits every comb member and its mirror at the negative frequency and
/// returns the members with their weights. Harmonics above the frequency
/// grid are still fitted so that their tails are accounted for.
pub fn fit_comb(fr: &FourierResponse, omega: f64, omega_eff: f64, n_harm: u32) -> Result<Vec<CombLine>, SpectrumError> {
    let members = comb_members(omega, omega_eff, n_harm);
    let mut centers: Vec<f64> = members.iter().map(|m| m.2).collect();
    centers.extend(members.iter().skip(1).map(|m| -m.2));
    let c = fit_line_amplitudes(fr, &centers)?;
    Ok(members
        .iter()
        .zip(&c)
        .map(|(&(harmonic, side, center), ck)| CombLine {
            harmonic,
            side,
            center,
            weight: ck.norm(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{Provenance, TimeGrid};
    use crate::params::{derive_frame, DriveParams};

    fn trace_from(grid: TimeGrid, f: impl Fn(f64) -> f64) -> TimeTrace {
        let p = DriveParams::reference();
        TimeTrace {
            grid,
            samples: grid.times().map(f).collect(),
            provenance: Provenance::ClosedForm,
            params: p,
            frame: derive_frame(&p).unwrap(),
        }
    }

    /// ∫₀^T e^{−(γ+iν)t} e^{iΩt} dt
    fn exact_tone(gamma: f64, nu: f64, omega: f64, t: f64) -> Complex64 {
        let z = Complex64::new(gamma, nu - omega);
        (Complex64::new(1.0, 0.0) - (-z * t).exp()) / z
    }

    #[test]
    fn constant_trace() {
        let grid = TimeGrid::span(40.0, 2e-3);
        let tr = trace_from(grid, |_| 1.0);
        let freqs = uniform_grid(0.0, 20.0, 0.5);
        let fr = fourier_response(&tr, 0.25, &freqs).unwrap();
        assert!((fr.values[0].norm() - 4.0).abs() < 4.0 * 1e-4);
        for (nu, v) in freqs.iter().zip(&fr.values) {
            let exact = exact_tone(0.25, *nu, 0.0, 40.0);
            assert!((v - exact).norm() < 1e-5, "nu={nu}");
            assert!((v - Complex64::new(1.0, 0.0) / Complex64::new(0.25, *nu)).norm() < 2e-4);
        }
    }

    #[test]
    fn cosine_trace() {
        let grid = TimeGrid::span(40.0, 2e-3);
        let om = 7.0;
        let tr = trace_from(grid, |t| (om * t).cos());
        let freqs = uniform_grid(0.0, 14.0, 0.25);
        let fr = fourier_response(&tr, 0.25, &freqs).unwrap();
        for (nu, v) in freqs.iter().zip(&fr.values) {
            let exact = (exact_tone(0.25, *nu, om, 40.0) + exact_tone(0.25, *nu, -om, 40.0)) * 0.5;
            assert!((v - exact).norm() < 1e-5);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let tr = trace_from(TimeGrid::span(10.0, 1e-2), |_| 1.0);
        assert!(matches!(fourier_response(&tr, 0.25, &[0.0, 1.0]), Err(SpectrumError::WindowTooShort(_))));
        assert!(matches!(fourier_response(&tr, 0.0, &[0.0, 1.0]), Err(SpectrumError::WindowTooShort(_))));
        let tr = trace_from(TimeGrid::span(40.0, 1e-1), |_| 1.0);
        assert!(matches!(fourier_response(&tr, 0.25, &[0.0, 10.0]), Err(SpectrumError::Aliasing { .. })));
        assert_eq!(fourier_response(&tr, 0.25, &[1.0, 1.0]), Err(SpectrumError::BadGrid));
        assert_eq!(fourier_response(&tr, 0.25, &[]), Err(SpectrumError::BadGrid));
    }

    #[test]
    fn linearity() {
        let grid = TimeGrid::span(40.0, 2e-3);
        let f1 = |t: f64| (3.0 * t).cos() + 0.2;
        let f2 = |t: f64| (5.5 * t).sin() * (0.7 * t).cos();
        let freqs = uniform_grid(0.0, 10.0, 0.1);
        let a = fourier_response(&trace_from(grid, f1), 0.25, &freqs).unwrap();
        let b = fourier_response(&trace_from(grid, f2), 0.25, &freqs).unwrap();
        let c = fourier_response(&trace_from(grid, |t| 2.0 * f1(t) - 0.5 * f2(t)), 0.25, &freqs).unwrap();
        for k in 0..freqs.len() {
            assert!((c.values[k] - (a.values[k] * 2.0 - b.values[k] * 0.5)).norm() < 1e-10);
        }
    }

    #[test]
    fn single_lorentzian_width() {
        let grid = TimeGrid::span(80.0, 2e-3);
        for gamma in [0.25, 0.5] {
            let tr = trace_from(grid, |t| (10.0 * t).cos());
            let fr = fourier_response(&tr, gamma, &uniform_grid(6.0, 14.0, 0.02)).unwrap();
            let lines = find_lines(&fr, DEFAULT_PROMINENCE);
            assert_eq!(lines.len(), 1, "{lines:?}");
            assert!((lines[0].center - 10.0).abs() < 0.02);
            assert!((lines[0].fwhm / (2.0 * gamma) - 1.0).abs() < 0.05, "{:?}", lines[0]);
        }
    }

    #[test]
    fn width_scales_with_decay() {
        let grid = TimeGrid::span(80.0, 2e-3);
        let tr = trace_from(grid, |t| (10.0 * t).cos());
        let freqs = uniform_grid(6.0, 14.0, 0.02);
        let w1 = find_lines(&fourier_response(&tr, 0.2, &freqs).unwrap(), 0.02)[0].fwhm;
        let w2 = find_lines(&fourier_response(&tr, 0.4, &freqs).unwrap(), 0.02)[0].fwhm;
        assert!((w2 / w1 - 2.0).abs() < 0.1);
    }

    #[test]
    fn two_tones_resolved() {
        let grid = TimeGrid::span(40.0, 2e-3);
        let (o1, o2) = (8.0, 14.0);
        let tr = trace_from(grid, |t| (o1 * t).cos() + (o2 * t).cos());
        let fr = fourier_response(&tr, 0.25, &uniform_grid(0.0, 18.0, 2.0 * std::f64::consts::PI * 0.01)).unwrap();
        let lines = find_lines(&fr, DEFAULT_PROMINENCE);
        let near = |c: f64| lines.iter().any(|l| (l.center - c).abs() <= 0.02);
        assert!(near(o1) && near(o2), "{lines:?}");
    }

    /// Maximum of |Σ c/(γ + i(x − Ω))| on [lo, hi] by dense scan.
    fn lorentzian_peak(tones: &[(f64, f64)], gamma: f64, lo: f64, hi: f64) -> f64 {
        let f = |x: f64| {
            tones
                .iter()
                .map(|&(c, w)| Complex64::new(c, 0.0) / Complex64::new(gamma, x - w))
                .sum::<Complex64>()
                .norm()
        };
        let n = 200_000;
        (0..=n)
            .map(|k| lo + (hi - lo) * k as f64 / n as f64)
            .max_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap()
    }

    #[test]
    fn close_tones_follow_lorentzian_sum() {
        // 4γ apart: overlapping tails pull both maxima off the tones
        let grid = TimeGrid::span(40.0, 2e-3);
        let (o1, o2) = (8.0, 9.0);
        let tr = trace_from(grid, |t| (o1 * t).cos() + 0.7 * (o2 * t).cos());
        let fr = fourier_response(&tr, 0.25, &uniform_grid(0.0, 15.0, 2.0 * std::f64::consts::PI * 0.01)).unwrap();
        let lines = find_lines(&fr, DEFAULT_PROMINENCE);
        assert_eq!(lines.len(), 2, "{lines:?}");
        let tones = [(0.5, o1), (0.5, -o1), (0.35, o2), (0.35, -o2)];
        let p1 = lorentzian_peak(&tones, 0.25, 7.0, 8.5);
        let p2 = lorentzian_peak(&tones, 0.25, 8.5, 10.0);
        assert!((lines[0].center - p1).abs() < 5e-3, "{lines:?} {p1}");
        assert!((lines[1].center - p2).abs() < 5e-3, "{lines:?} {p2}");
        let c = fit_line_amplitudes(&fr, &[o1, -o1, o2, -o2]).unwrap();
        assert!((c[0].norm() - 0.5).abs() < 1e-3 && (c[2].norm() - 0.35).abs() < 1e-3);
    }

    #[test]
    fn dc_line_at_grid_start() {
        let grid = TimeGrid::span(40.0, 2e-3);
        let tr = trace_from(grid, |t| 0.5 + 0.2 * (4.0 * t).cos());
        let fr = fourier_response(&tr, 0.25, &uniform_grid(0.0, 8.0, 0.05)).unwrap();
        let lines = find_lines(&fr, DEFAULT_PROMINENCE);
        assert_eq!(lines.len(), 2, "{lines:?}");
        assert!(lines[0].center.abs() < 1e-12);
        assert!((lines[0].fwhm - 0.5).abs() < 0.025);
        let peak = lorentzian_peak(&[(0.5, 0.0), (0.1, 4.0), (0.1, -4.0)], 0.25, 3.0, 5.0);
        assert!((lines[1].center - peak).abs() < 5e-3, "{lines:?} {peak}");
    }

    #[test]
    fn flat_input_has_no_lines() {
        let fr = FourierResponse {
            freq_grid: uniform_grid(0.0, 1.0, 0.1),
            values: vec![Complex64::new(0.0, 0.0); 11],
            gamma_used: 0.25,
            window_t: 40.0,
        };
        assert!(find_lines(&fr, 0.02).is_empty());
    }

    #[test]
    fn splitting_of_synthetic_doublet() {
        let mk = |c: f64, a: f64| SpectrumLine {
            center: c,
            amplitude: a,
            fwhm: 0.5,
        };
        let lines = [mk(9.6, 1.0), mk(10.4, 0.8), mk(3.0, 5.0), mk(10.0, 0.1)];
        assert!((doublet_splitting(&lines, 1, 10.0).unwrap() - 0.8).abs() < 1e-12);
        match doublet_splitting(&lines[..1], 1, 10.0) {
            Err(SpectrumError::Singlet { n: 1, line: Some(l) }) => assert_eq!(l.center, 9.6),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            doublet_splitting(&[], 2, 10.0),
            Err(SpectrumError::Singlet { n: 2, line: None })
        ));
    }

    #[test]
    fn fitted_amplitudes_recover_tones() {
        let grid = TimeGrid::span(40.0, 2e-3);
        let tr = trace_from(grid, |t| 0.3 + 0.5 * (5.0 * t + 0.4).cos() + 0.2 * (6.0 * t - 1.0).cos());
        let fr = fourier_response(&tr, 0.25, &uniform_grid(0.0, 12.0, 0.05)).unwrap();
        let centers = [0.0, 5.0, -5.0, 6.0, -6.0];
        let c = fit_line_amplitudes(&fr, &centers).unwrap();
        let expect = [0.3, 0.25, 0.25, 0.1, 0.1];
        for (ck, e) in c.iter().zip(expect) {
            assert!((ck.norm() - e).abs() < 1e-3, "{c:?}");
        }
    }
}
