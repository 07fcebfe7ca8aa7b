//! The acceptance criteria as reusable checks. Each returns a
//! [`CriterionResult`] listing every measured quantity with its limit.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    averaging_oracle, envelope_coefficients, envelope_modulation_depth, population_closed_form, rabi_rwa,
    raman_quantities_with, TimeGrid, MAX_N_MAX,
};
use crate::oracle::{self, evolve_effective, evolve_full_with_diagnostics, IntegratorConfig};
use crate::params::{derive_frame, DerivedFrame, DriveParams};
use crate::scenarios::{analytic_trace, comb_harmonics, integrator_config, spectrum_at, ScenarioConfig, ScenarioError};
use crate::special;
use crate::spectrum::{self, CombLine};

/// ΔA/ω × ψ grid shared by the trace criteria.
pub const TRACE_CASES: [(f64, f64); 8] = [
    (-0.25, 0.0),
    (-0.25, 90.0),
    (0.0, 0.0),
    (0.0, 90.0),
    (0.1, 0.0),
    (0.1, 90.0),
    (0.25, 0.0),
    (0.25, 90.0),
];

/// Criteria that are computed and reported but known not to hold for this
/// model; see the project notes for the analysis.
pub const KNOWN_UNATTAINABLE: &[&str] = &["A6"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition, e.g. `<= 1e-6`.
    pub limit: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub measurements: Vec<Measurement>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CriterionResult {
    fn new(id: &str, title: &str) -> Self {
        CriterionResult {
            id: id.into(),
            title: title.into(),
            passed: true,
            measurements: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    fn check(&mut self, name: impl Into<String>, value: f64, limit: impl Into<String>, ok: bool) {
        let ok = ok && value.is_finite();
        self.passed &= ok;
        self.measurements.push(Measurement {
            name: name.into(),
            value,
            limit: limit.into(),
            ok,
        });
    }

    fn at_most(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.check(name, value, format!("<= {bound:e}"), value <= bound);
    }

    fn within(&mut self, name: impl Into<String>, value: f64, target: f64, tol: f64) {
        self.check(name, value, format!("{target} +- {tol}"), (value - target).abs() <= tol);
    }

    /// One line: `A1 PASS  title  (0.01 s)`.
    pub fn summary_line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("{} {status}  {}  ({:.2} s)", self.id, self.title, self.elapsed.as_secs_f64())
    }

    pub fn failed_measurements(&self) -> impl Iterator<Item = &Measurement> {
        self.measurements.iter().filter(|m| !m.ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub version: String,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub type Criterion = fn(&ScenarioConfig) -> Result<CriterionResult, ScenarioError>;

pub const CRITERIA: [(&str, Criterion); 10] = [
    ("A1", a1_bessel_zero_amplitudes),
    ("A2", a2_coupling_ratio),
    ("A3", a3_degenerate_rabi),
    ("A4", a4_averaging_oracle),
    ("A5", a5_effective_identity),
    ("A6", a6_full_oracle_frequency),
    ("A7", a7_modulation_visibility),
    ("A8", a8_doublet_splitting),
    ("A9", a9_phase_dependence),
    ("A10", a10_property_suites),
];

/// Errors that make the whole run meaningless (bad step, bad config) are
/// raised before any criterion runs.
pub fn preflight(cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    cfg.validate()?;
    let icfg = integrator_config(cfg);
    for (da, psi) in TRACE_CASES {
        icfg.validate(&cfg.params_at(da, psi)?)?;
    }
    Ok(())
}

pub fn run_criterion(id: &str, f: Criterion, cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let start = Instant::now();
    let mut r = f(cfg)?;
    r.id = id.into();
    r.elapsed = start.elapsed();
    Ok(r)
}

pub fn run_all(cfg: &ScenarioConfig) -> Result<ValidationReport, ScenarioError> {
    run_all_with(cfg, |_| {})
}

/// Like [`run_all`], calling `progress` after each criterion.
pub fn run_all_with(
    cfg: &ScenarioConfig,
    mut progress: impl FnMut(&CriterionResult),
) -> Result<ValidationReport, ScenarioError> {
    preflight(cfg)?;
    let mut criteria = Vec::with_capacity(CRITERIA.len());
    for (id, f) in CRITERIA {
        let r = run_criterion(id, f, cfg)?;
        progress(&r);
        criteria.push(r);
    }
    Ok(ValidationReport {
        version: crate::scenarios::CODE_VERSION.into(),
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    })
}

fn frame(p: &DriveParams) -> Result<DerivedFrame, ScenarioError> {
    derive_frame(p).map_err(|e| ScenarioError::Config(e.to_string()))
}

fn trace_grid(cfg: &ScenarioConfig) -> TimeGrid {
    TimeGrid::span(cfg.trace_window(), cfg.trace_dt())
}

fn case_name(da: f64, psi: f64) -> String {
    format!("dA/w={da:+} psi={psi}")
}

pub fn a1_bessel_zero_amplitudes(cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let mut r = CriterionResult::new("A1", "Bessel-zero amplitudes");
    let p = cfg.base_params()?;
    let f = frame(&p)?;
    let first = special::a_star_amplitude(&f, p.mod_freq, 1)? / p.mod_freq;
    let second = special::a_star_amplitude(&f, p.mod_freq, 2)? / p.mod_freq;
    r.within("first zero A*/w", first, 2.681, 0.01);
    r.within("second zero A/w", second, 4.394, 0.01);
    Ok(r)
}

pub fn a2_coupling_ratio(cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let mut r = CriterionResult::new("A2", "Coupling ratio at A*");
    let p = cfg.params_at(0.0, 0.0)?;
    r.within("A cos(theta)/w", frame(&p)?.coupling_ratio, 0.770, 0.005);
    Ok(r)
}

pub fn a3_degenerate_rabi(cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let mut r = CriterionResult::new("A3", "Degenerate Rabi frequency at A*");
    let p = cfg.params_at(0.0, 0.0)?;
    let f = frame(&p)?;
    let q = raman_quantities_with(&p, &f, cfg.n_max)?;
    r.at_most("|Omega2|/A", q.omega_rwa.abs() / p.amp, 1e-10);
    let rel = (q.omega_eff - q.bs_shift.abs()).abs() / q.bs_shift.abs();
    r.at_most("|Omega2* - |w_BS|| / |w_BS|", rel, 4.0 * f64::EPSILON);
    Ok(r)
}

pub fn a4_averaging_oracle(cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let mut r = CriterionResult::new("A4", "Averaging-oracle equivalence");
    let base = cfg.base_params()?;
    let f0 = frame(&base)?;
    let a_star = special::j2_zero(1)?;
    for (label, a) in [("0.5", 0.5), ("2.0", 2.0), ("a*", a_star)] {
        let p = base.with_amp(a * base.mod_freq / (2.0 * f0.sin_theta));
        let f = frame(&p)?;
        let num = averaging_oracle(&p, &f, cfg.n_max)?;
        let omega2 = rabi_rwa(&p, &f)?;
        let q = raman_quantities_with(&p, &f, cfg.n_max)?;
        // at a* both Rabi values vanish; compare on the scale of A
        let scale = omega2.abs().max(1e-3 * p.amp);
        r.at_most(format!("a={label} Omega2 rel diff"), (num.omega_rwa - omega2).abs() / scale, 1e-10);
        r.at_most(
            format!("a={label} w_BS rel diff"),
            (num.bs_shift - q.bs_shift).abs() / q.bs_shift.abs(),
            1e-2,
        );
    }
    Ok(r)
}

pub fn a5_effective_identity(cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let mut r = CriterionResult::new("A5", "Closed form equals effective evolution");
    let grid = trace_grid(cfg);
    let diffs = TRACE_CASES
        .par_iter()
        .map(|&(da, psi)| -> Result<f64, ScenarioError> {
            let p = cfg.params_at(da, psi)?;
            let f = frame(&p)?;
            let (ana, q, _) = analytic_trace(&p, cfg.n_max, grid)?;
            Ok(ana.max_abs_diff(&evolve_effective(&p, &f, &q, grid)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (&(da, psi), d) in TRACE_CASES.iter().zip(diffs) {
        r.at_most(format!("{} max |dP|", case_name(da, psi)), d, 1e-6);
    }
    Ok(r)
}

pub fn a6_full_oracle_frequency(cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let mut r = CriterionResult::new("A6", "Full-oracle slow frequency vs Omega2*");
    let grid = trace_grid(cfg);
    let icfg = integrator_config(cfg);
    let rel = TRACE_CASES
        .par_iter()
        .map(|&(da, psi)| -> Result<f64, ScenarioError> {
            let p = cfg.params_at(da, psi)?;
            let f = frame(&p)?;
            let q = raman_quantities_with(&p, &f, cfg.n_max)?;
            let (ode, _) = evolve_full_with_diagnostics(&p, grid, &icfg)?;
            Ok(oracle::slow_frequency(&ode) / q.omega_eff - 1.0)
        })
        .collect::<Result<Vec<_>, _>>()?;
    for (&(da, psi), e) in TRACE_CASES.iter().zip(rel) {
        r.check(format!("{} nu/Omega2* - 1", case_name(da, psi)), e, "|x| <= 0.1", e.abs() <= 0.1);
    }
    Ok(r)
}

pub fn a7_modulation_visibility(cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let mut r = CriterionResult::new("A7", "Bloch-Siegert oscillation visibility");
    let grid = trace_grid(cfg);
    for psi in [0.0, 90.0] {
        for da in [0.0, -0.25, 0.25] {
            let p = cfg.params_at(da, psi)?;
            let f = frame(&p)?;
            let q = raman_quantities_with(&p, &f, cfg.n_max)?;
            let ec = envelope_coefficients(&p, &f, &q)?;
            let depth = envelope_modulation_depth(&ec, &q, grid);
            let name = format!("{} modulation depth", case_name(da, psi));
            if da == 0.0 {
                r.at_most(name, depth, 1e-6);
            } else {
                r.check(name, depth, "> 0.1", depth > 0.1);
            }
        }
    }
    Ok(r)
}

fn comb_at(cfg: &ScenarioConfig, da: f64, psi: f64) -> Result<(Vec<CombLine>, f64), ScenarioError> {
    let p = cfg.params_at(da, psi)?;
    let (fr, _, q) = spectrum_at(cfg, &p)?;
    let n_harm = comb_harmonics(*fr.freq_grid.last().unwrap_or(&0.0), p.mod_freq);
    Ok((spectrum::fit_comb(&fr, p.mod_freq, q.omega_eff, n_harm)?, q.bs_shift))
}

pub fn a8_doublet_splitting(cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let mut r = CriterionResult::new("A8", "Doublet splitting at A*");
    let psi = cfg.psi_deg.unwrap_or(0.0);
    let p = cfg.params_at(0.0, psi)?;
    let (fr, lines, q) = spectrum_at(cfg, &p)?;
    for n in 1..=3 {
        let split = spectrum::doublet_splitting(&lines, n, p.mod_freq).unwrap_or(f64::NAN);
        let rel = split / (2.0 * q.bs_shift.abs()) - 1.0;
        r.check(format!("n={n} splitting/(2|w_BS|) - 1"), rel, "|x| <= 0.03", rel.abs() <= 0.03);
    }
    // ω_BS is signed: the suppressed member sits at 4ω + ω_BS
    let n_harm = comb_harmonics(*fr.freq_grid.last().unwrap_or(&0.0), p.mod_freq);
    let comb = spectrum::fit_comb(&fr, p.mod_freq, q.omega_eff, n_harm)?;
    let side = if q.bs_shift < 0.0 { -1 } else { 1 };
    let weight = |s: i8| comb.iter().find(|m| m.harmonic == 4 && m.side == s).map_or(f64::NAN, |m| m.weight);
    r.at_most("n=4 weight(4w + w_BS)/weight(4w - w_BS)", weight(side) / weight(-side), 0.02);
    Ok(r)
}

pub fn a9_phase_dependence(cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let mut r = CriterionResult::new("A9", "Phase dependence of doublet lines");
    let phases = [0.0, 30.0, 60.0, 90.0];
    let cases: Vec<(f64, f64)> = [0.0, -0.25]
        .iter()
        .flat_map(|&da| phases.iter().map(move |&psi| (da, psi)))
        .collect();
    let combs = cases
        .par_iter()
        .map(|&(da, psi)| comb_at(cfg, da, psi).map(|c| c.0))
        .collect::<Result<Vec<_>, _>>()?;
    let spread = |da: f64, n: u32, side: i8| {
        let w: Vec<f64> = cases
            .iter()
            .zip(&combs)
            .filter(|((d, _), _)| *d == da)
            .filter_map(|(_, c)| c.iter().find(|m| m.harmonic == n && m.side == side).map(|m| m.weight))
            .collect();
        let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    for n in 1..=3 {
        for side in [-1i8, 1] {
            let ratio = spread(0.0, n, side) / spread(-0.25, n, side);
            r.at_most(format!("n={n} side={side:+} spread(0)/spread(-0.25)"), ratio, 1.0 / 3.0);
        }
    }
    Ok(r)
}

pub fn a10_property_suites(cfg: &ScenarioConfig) -> Result<CriterionResult, ScenarioError> {
    let mut r = CriterionResult::new("A10", "Property suites");
    bessel_properties(&mut r)?;
    unitarity_and_convergence(cfg, &mut r)?;
    initial_population_sweep(cfg, &mut r)?;
    truncation_stability(cfg, &mut r)?;
    Ok(r)
}

fn bessel_properties(r: &mut CriterionResult) -> Result<(), ScenarioError> {
    let n = 60usize;
    let (mut norm, mut refl, mut rec) = (0.0f64, 0.0f64, 0.0f64);
    for x in [0.5, 2.0, special::j2_zero(1)?, 10.0, 25.0] {
        let j = special::bessel_j_symmetric(n, x)?;
        let at = |k: i64| j[(k + n as i64) as usize];
        norm = norm.max((j.iter().map(|v| v * v).sum::<f64>() - 1.0).abs());
        for k in 1..=n as i32 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            refl = refl.max((special::bessel_j(-k, x)? - sign * special::bessel_j(k, x)?).abs());
        }
        for k in 1..n as i64 {
            rec = rec.max((at(k - 1) + at(k + 1) - 2.0 * k as f64 / x * at(k)).abs());
        }
    }
    r.at_most("Bessel |sum J_n^2 - 1|", norm, 1e-12);
    r.check("Bessel reflection max error", refl, "== 0", refl == 0.0);
    r.at_most("Bessel recurrence residual", rec, 1e-12);
    Ok(())
}

fn unitarity_and_convergence(cfg: &ScenarioConfig, r: &mut CriterionResult) -> Result<(), ScenarioError> {
    let grid = trace_grid(cfg);
    let icfg = integrator_config(cfg);
    let drift = TRACE_CASES
        .par_iter()
        .map(|&(da, psi)| -> Result<f64, ScenarioError> {
            let p = cfg.params_at(da, psi)?;
            Ok(evolve_full_with_diagnostics(&p, grid, &icfg)?.1.max_norm_drift)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    r.at_most("oracle max norm drift", drift, 1e-9);

    // observed order from errors at h, h/2, h/4 against h/32
    let p = cfg.params_at(0.25, 0.0)?;
    let h = IntegratorConfig::with_step(1.0).step_limit(&p);
    let out = TimeGrid::new(0.0, h, (0.5 / h).ceil() as usize + 1);
    let run = |div: f64| -> Result<Vec<f64>, ScenarioError> {
        let c = IntegratorConfig {
            dt_max: h / div,
            ..integrator_config(cfg)
        };
        Ok(evolve_full_with_diagnostics(&p, out, &c)?.0.samples)
    };
    let reference = run(32.0)?;
    let err = |div: f64| -> Result<f64, ScenarioError> {
        Ok(run(div)?
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    };
    let (e1, e2, e4) = (err(1.0)?, err(2.0)?, err(4.0)?);
    for (name, ratio) in [("order h -> h/2", e1 / e2), ("order h/2 -> h/4", e2 / e4)] {
        let order = ratio.log2();
        r.within(format!("oracle convergence {name}"), order, 4.0, 0.5);
    }
    Ok(())
}

fn initial_population_sweep(cfg: &ScenarioConfig, r: &mut CriterionResult) -> Result<(), ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst = 0.0f64;
    let grid = TimeGrid::new(0.0, 1e-3, 1);
    for _ in 0..100 {
        let omega = rng.gen_range(2.0..10.0);
        let p = DriveParams::from_mhz(
            rng.gen_range(1.0..20.0),
            rng.gen_range(0.0..10.0),
            omega * rng.gen_range(0.05..4.5),
            omega,
            rng.gen_range(0.0..360.0),
            cfg.gamma_inv_us,
        )
        .map_err(|e| ScenarioError::Config(e.to_string()))?;
        let f = frame(&p)?;
        let q = raman_quantities_with(&p, &f, cfg.n_max.max(40))?;
        let ec = envelope_coefficients(&p, &f, &q)?;
        let closed = population_closed_form(&p, &f, &q, &ec, grid).samples[0];
        let eff = evolve_effective(&p, &f, &q, grid).samples[0];
        worst = worst.max((closed - 1.0).abs()).max((eff - 1.0).abs());
    }
    r.at_most("random sweep max |P(0) - 1|", worst, 1e-12);
    Ok(())
}

fn truncation_stability(cfg: &ScenarioConfig, r: &mut CriterionResult) -> Result<(), ScenarioError> {
    let base = cfg.base_params()?;
    let f0 = frame(&base)?;
    let n = cfg.n_max;
    let n2 = (2 * n).min(MAX_N_MAX);
    for (label, a) in [
        ("0.5", 0.5),
        ("2.0", 2.0),
        ("a*", special::j2_zero(1)?),
        ("a2*", special::j2_zero(2)?),
    ] {
        let p = base.with_amp(a * base.mod_freq / (2.0 * f0.sin_theta));
        let f = frame(&p)?;
        let q = raman_quantities_with(&p, &f, n)?;
        let q2 = raman_quantities_with(&p, &f, n2)?;
        let rel_tail = q.tail_bound / q.bs_shift.abs();
        r.check(
            format!("a={label} n_max={n} tail/|w_BS|"),
            rel_tail,
            format!("certified (<= {:e})", crate::analytic::TAIL_CERTIFY_REL),
            q.is_certified(p.mod_freq),
        );
        let change = (q.bs_shift - q2.bs_shift).abs();
        r.check(
            format!("a={label} |w_BS(n_max) - w_BS(2 n_max)|"),
            change,
            format!("<= tail bound {:e}", q.tail_bound),
            change <= q.tail_bound,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_criteria_pass_by_default() {
        let cfg = ScenarioConfig::default();
        for (id, f) in &CRITERIA[..4] {
            let r = run_criterion(id, *f, &cfg).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn under_truncation_fails_certification() {
        let cfg = ScenarioConfig {
            n_max: 6,
            ..ScenarioConfig::default()
        };
        let mut r = CriterionResult::new("A10", "");
        truncation_stability(&cfg, &mut r).unwrap();
        assert!(!r.passed);
        assert!(r.failed_measurements().any(|m| m.name.contains("tail")));
        let mut ok = CriterionResult::new("A10", "");
        truncation_stability(&ScenarioConfig::default(), &mut ok).unwrap();
        assert!(ok.passed, "{ok:?}");
    }

    #[test]
    fn oversized_step_rejected_before_running() {
        let cfg = ScenarioConfig {
            dt_ns: Some(4.0),
            ..ScenarioConfig::default()
        };
        assert!(matches!(preflight(&cfg), Err(ScenarioError::Oracle(_))));
    }

    #[test]
    fn report_serializes_without_timing() {
        let cfg = ScenarioConfig::default();
        let r = run_criterion("A2", a2_coupling_ratio, &cfg).unwrap();
        let rep = ValidationReport {
            version: "v".into(),
            passed: r.passed,
            criteria: vec![r],
        };
        let json = rep.to_json();
        assert!(json.contains("\"id\": \"A2\""));
        assert!(!json.contains("elapsed"));
        let back: ValidationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.criteria[0].measurements, rep.criteria[0].measurements);
    }
}
