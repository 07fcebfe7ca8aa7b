//! Integer-order Bessel functions of the first kind and the zeros of J₂.
//!
//! For |x| ≤ 0.5 the power series is summed directly. Above that, Miller's
//! downward recurrence is started well beyond the requested order and
//! normalised with J₀ + 2ΣJ₂ₖ = 1. Upward recurrence is never used.

use thiserror::Error;

use crate::params::DerivedFrame;

/// Largest supported |order|.
pub const MAX_ORDER: i32 = 64;
/// Largest supported |x|; accuracy is certified to 1e-12 absolute up to here.
pub const MAX_ARG: f64 = 30.0;
/// Largest supported zero index for [`j2_zero`].
pub const MAX_ZERO_INDEX: usize = 8;

const SERIES_CUTOFF: f64 = 0.5;
const SCAN_STEP: f64 = 0.1;
const RESCALE_ABOVE: f64 = 1e250;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialError {
    #[error("Bessel argument must be finite, got {0}")]
    NonFinite(f64),
    #[error("Bessel argument {0} outside the supported range |x| <= {MAX_ARG}")]
    ArgOutOfRange(f64),
    #[error("Bessel order {0} outside the supported range |n| <= {MAX_ORDER}")]
    OrderOutOfRange(i32),
    #[error("zero index {0} outside 1..={MAX_ZERO_INDEX}")]
    ZeroIndex(usize),
    #[error("sin(theta) = 0: the drive does not modulate the splitting")]
    NoModulation,
}

fn check_arg(x: f64) -> Result<(), SpecialError> {
    if !x.is_finite() {
        return Err(SpecialError::NonFinite(x));
    }
    if x.abs() > MAX_ARG {
        return Err(SpecialError::ArgOutOfRange(x));
    }
    Ok(())
}

/// Jₙ(x) for integer n, |n| ≤ 64, |x| ≤ 30.
pub fn bessel_j(n: i32, x: f64) -> Result<f64, SpecialError> {
    if n.abs() > MAX_ORDER {
        return Err(SpecialError::OrderOutOfRange(n));
    }
    check_arg(x)?;
    let m = n.unsigned_abs() as usize;
    let v = if x.abs() <= SERIES_CUTOFF {
        series(m, x.abs())
    } else {
        miller(m, x.abs())[m]
    };
    Ok(v * order_sign(n) * arg_sign(m, x))
}

/// J₀(x), …, J_{n_max}(x) in one recurrence sweep.
pub fn bessel_j_all(n_max: usize, x: f64) -> Result<Vec<f64>, SpecialError> {
    if n_max > MAX_ORDER as usize {
        return Err(SpecialError::OrderOutOfRange(n_max as i32));
    }
    check_arg(x)?;
    let ax = x.abs();
    let mut out = if ax <= SERIES_CUTOFF {
        (0..=n_max).map(|m| series(m, ax)).collect()
    } else {
        let mut v = miller(n_max, ax);
        v.truncate(n_max + 1);
        v
    };
    for (m, v) in out.iter_mut().enumerate() {
        *v *= arg_sign(m, x);
    }
    Ok(out)
}

/// Jₙ(x) for n in -n_max..=n_max, indexed by `n + n_max`.
pub fn bessel_j_symmetric(n_max: usize, x: f64) -> Result<Vec<f64>, SpecialError> {
    let pos = bessel_j_all(n_max, x)?;
    let mut out = Vec::with_capacity(2 * n_max + 1);
    for m in (1..=n_max).rev() {
        out.push(if m % 2 == 0 { pos[m] } else { -pos[m] });
    }
    out.extend_from_slice(&pos);
    Ok(out)
}

/// Like [`bessel_j_symmetric`] without the public order cap, for truncated
/// sums whose outer shells are negligible.
pub(crate) fn bessel_table_symmetric(n_max: usize, x: f64) -> Result<Vec<f64>, SpecialError> {
    check_arg(x)?;
    let ax = x.abs();
    let pos: Vec<f64> = if ax <= SERIES_CUTOFF {
        (0..=n_max).map(|m| series(m, ax) * arg_sign(m, x)).collect()
    } else {
        miller(n_max, ax)
            .into_iter()
            .take(n_max + 1)
            .enumerate()
            .map(|(m, v)| v * arg_sign(m, x))
            .collect()
    };
    let mut out = Vec::with_capacity(2 * n_max + 1);
    for m in (1..=n_max).rev() {
        out.push(if m % 2 == 0 { pos[m] } else { -pos[m] });
    }
    out.extend_from_slice(&pos);
    Ok(out)
}

// J₋ₙ = (−1)ⁿ Jₙ
fn order_sign(n: i32) -> f64 {
    if n < 0 && n % 2 != 0 {
        -1.0
    } else {
        1.0
    }
}

// Jₙ(−x) = (−1)ⁿ Jₙ(x)
fn arg_sign(m: usize, x: f64) -> f64 {
    if x < 0.0 && m % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

fn series(m: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=m {
        term *= half / k as f64;
    }
    let q = half * half;
    let mut sum = term;
    for k in 1..200 {
        term *= -q / (k as f64 * (k + m) as f64);
        sum += term;
        if term.abs() <= f64::EPSILON * sum.abs() * 1e-3 {
            break;
        }
    }
    sum
}

/// Downward recurrence for x > 0; returns at least `m_req + 1` values.
fn miller(m_req: usize, x: f64) -> Vec<f64> {
    let base = (m_req as f64).max(x.ceil());
    let mut start = base as usize + 24 + (40.0 * base).sqrt() as usize;
    start += start % 2;
    let mut j = vec![0.0; start + 2];
    j[start + 1] = 0.0;
    j[start] = 1e-300;
    let two_over_x = 2.0 / x;
    for k in (1..=start).rev() {
        j[k - 1] = k as f64 * two_over_x * j[k] - j[k + 1];
        if j[k - 1].abs() > RESCALE_ABOVE {
            for v in j[k - 1..].iter_mut() {
                *v /= RESCALE_ABOVE;
            }
        }
    }
    let norm: f64 = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    j.truncate(start + 1);
    for v in j.iter_mut() {
        *v /= norm;
    }
    j
}

/// k-th positive zero of J₂ (k = 1..=8), bracketed by a 0.1-step scan and
/// bisected to the limit of f64 resolution.
pub fn j2_zero(k: usize) -> Result<f64, SpecialError> {
    if k == 0 || k > MAX_ZERO_INDEX {
        return Err(SpecialError::ZeroIndex(k));
    }
    let j2 = |x: f64| bessel_j(2, x).expect("scan stays inside the supported domain");
    let mut found = 0;
    let mut lo = SCAN_STEP;
    let mut f_lo = j2(lo);
    loop {
        let hi = lo + SCAN_STEP;
        let f_hi = j2(hi);
        if f_lo == 0.0 {
            found += 1;
            if found == k {
                return Ok(lo);
            }
        } else if f_lo * f_hi < 0.0 {
            found += 1;
            if found == k {
                return Ok(bisect(j2, lo, hi, f_lo));
            }
        }
        lo = hi;
        f_lo = f_hi;
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return if f_lo.abs() <= f(hi).abs() { lo } else { hi };
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid * f_lo < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
}

/// Drive amplitude A*ₖ = a*ₖ ω / (2 sinθ) at which the k-th zero of J₂ is hit.
pub fn a_star_amplitude(f: &DerivedFrame, omega: f64, k: usize) -> Result<f64, SpecialError> {
    if f.sin_theta == 0.0 {
        return Err(SpecialError::NoModulation);
    }
    Ok(j2_zero(k)? * omega / (2.0 * f.sin_theta.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_frame, DriveParams};
    use std::f64::consts::PI;

    /// Jₙ(x) = (1/π)∫₀^π cos(nτ − x sinτ) dτ. The integrand is smooth and
    /// periodic so the trapezoid rule converges geometrically.
    fn integral_oracle(n: i32, x: f64) -> f64 {
        let m = 2000;
        let h = PI / m as f64;
        let g = |t: f64| (n as f64 * t - x * t.sin()).cos();
        let mut s = 0.5 * (g(0.0) + g(PI));
        for i in 1..m {
            s += g(i as f64 * h);
        }
        s * h / PI
    }

    fn power_series_oracle(n: u32, x: f64) -> f64 {
        let mut sum = 0.0;
        let mut fact_k = 1.0;
        for k in 0..60u32 {
            if k > 0 {
                fact_k *= k as f64;
            }
            let fact_kn: f64 = (1..=k + n).map(|i| i as f64).product();
            sum += (-1f64).powi(k as i32) * (x / 2.0).powi((2 * k + n) as i32) / (fact_k * fact_kn);
        }
        sum
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        for n in [-5, -1, 1, 2, 30, 64] {
            assert_eq!(bessel_j(n, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn j1_of_two() {
        let oracle = power_series_oracle(1, 2.0);
        assert!((oracle - 0.576724807757).abs() < 1e-12);
        assert!((bessel_j(1, 2.0).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn matches_integral_oracle_on_domain() {
        let mut worst: f64 = 0.0;
        for &x in &[0.05, 0.3, 0.5, 0.51, 1.0, 2.5, 5.1356, 7.0, 12.0, 18.3, 24.9, 30.0] {
            for n in (-64..=64).step_by(3) {
                let err = (bessel_j(n, x).unwrap() - integral_oracle(n, x)).abs();
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-12, "worst abs error {worst:e}");
    }

    #[test]
    fn all_orders_agree_with_single() {
        for &x in &[0.2, 3.3, 29.0, -4.0] {
            let all = bessel_j_all(40, x).unwrap();
            for (n, v) in all.iter().enumerate() {
                assert!((*v - bessel_j(n as i32, x).unwrap()).abs() < 1e-14);
            }
        }
        let sym = bessel_j_symmetric(10, 3.0).unwrap();
        for n in -10..=10 {
            assert!((sym[(n + 10) as usize] - bessel_j(n, 3.0).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn domain_errors() {
        assert_eq!(bessel_j(65, 1.0), Err(SpecialError::OrderOutOfRange(65)));
        assert!(matches!(bessel_j(1, f64::NAN), Err(SpecialError::NonFinite(_))));
        assert!(matches!(bessel_j(1, f64::INFINITY), Err(SpecialError::NonFinite(_))));
        assert_eq!(bessel_j(1, 30.5), Err(SpecialError::ArgOutOfRange(30.5)));
        assert_eq!(j2_zero(0), Err(SpecialError::ZeroIndex(0)));
        assert_eq!(j2_zero(9), Err(SpecialError::ZeroIndex(9)));
    }

    #[test]
    fn zeros_of_j2() {
        let expected = [5.135622302, 8.417244140, 11.619841172];
        for (k, e) in expected.iter().enumerate() {
            let z = j2_zero(k + 1).unwrap();
            assert!((z - e).abs() < 1e-9, "k={} got {z}", k + 1);
            assert!(bessel_j(2, z).unwrap().abs() < 1e-14);
        }
        let mut prev = 0.0;
        for k in 1..=MAX_ZERO_INDEX {
            let z = j2_zero(k).unwrap();
            assert!(z > prev);
            let l = bessel_j(2, z - 1e-6).unwrap();
            let r = bessel_j(2, z + 1e-6).unwrap();
            assert!(l * r < 0.0, "no sign change at zero {k}");
            prev = z;
        }
    }

    #[test]
    fn j2_at_first_zero_vanishes() {
        assert!(bessel_j(2, 5.1356223019).unwrap().abs() < 1e-10);
    }

    #[test]
    fn a_star() {
        let p = DriveParams::reference();
        let f = derive_frame(&p).unwrap();
        let a1 = a_star_amplitude(&f, p.mod_freq, 1).unwrap() / p.mod_freq;
        let a2 = a_star_amplitude(&f, p.mod_freq, 2).unwrap() / p.mod_freq;
        assert!((a1 - 2.6808).abs() < 1e-4, "{a1}");
        assert!((a2 - 4.394).abs() < 1e-3, "{a2}");

        let p = DriveParams::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.25).unwrap();
        let f = derive_frame(&p).unwrap();
        let a = a_star_amplitude(&f, 1.0, 1).unwrap();
        assert!((a - 2.5678111509).abs() < 1e-9);

        let p = DriveParams::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.25).unwrap();
        let f = derive_frame(&p).unwrap();
        assert_eq!(a_star_amplitude(&f, 1.0, 1), Err(SpecialError::NoModulation));
    }

    #[test]
    fn normalization_sum() {
        for i in 0..=120 {
            let a = 0.1 * i as f64;
            let sym = bessel_j_symmetric(40, a).unwrap();
            let s: f64 = sym.iter().map(|v| v * v).sum();
            assert!((s - 1.0).abs() < 1e-10, "a={a} sum={s}");
        }
    }

    #[test]
    fn reflection_is_exact() {
        for &a in &[0.3, 2.0, 9.5] {
            for n in 0..=64 {
                let s = if n % 2 == 0 { 1.0 } else { -1.0 };
                assert_eq!(bessel_j(-n, a).unwrap(), s * bessel_j(n, a).unwrap());
            }
        }
    }

    #[test]
    fn recurrence_residual() {
        for i in 0..=23 {
            let a = 0.5 + 0.5 * i as f64;
            for n in -20..=20 {
                let r = bessel_j(n - 1, a).unwrap() + bessel_j(n + 1, a).unwrap()
                    - 2.0 * n as f64 / a * bessel_j(n, a).unwrap();
                assert!(r.abs() <= 1e-9, "a={a} n={n} r={r:e}");
            }
        }
    }
}
