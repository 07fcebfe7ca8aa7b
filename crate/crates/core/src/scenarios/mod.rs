//! Config-driven reproduction runs. Each runner returns in-memory tables;
//! [`ScenarioSpec::run`] writes them as CSV files with a `#` header carrying
//! the code version and the full configuration.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    sweep_values, ScenarioConfig, SPECTRUM_DT_NS, SPECTRUM_WINDOW_DECAYS, TRACE_DT_NS, TRACE_WINDOW_US,
};

use crate::analytic::{
    envelope_coefficients, envelope_modulation_depth, population_closed_form, raman_quantities_with,
    AnalyticError, EnvelopeCoefficients, RamanQuantities, TimeGrid, TimeTrace,
};
use crate::oracle::{self, IntegratorConfig, OracleError};
use crate::params::{derive_frame, DriveParams};
use crate::special::SpecialError;
use crate::spectrum::{self, FourierResponse, SpectrumError, SpectrumLine};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FreqSweep,
    TimeTraces,
    SpectraVsAmp,
    SpectraVsPhase,
    Validate,
}

impl ScenarioKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::FreqSweep => "fig1",
            ScenarioKind::TimeTraces => "fig2",
            ScenarioKind::SpectraVsAmp => "fig3",
            ScenarioKind::SpectraVsPhase => "fig4",
            ScenarioKind::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub config: ScenarioConfig,
    pub out_dir: PathBuf,
}

/// A named numeric table with per-file metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self, kind: ScenarioKind, cfg: &ScenarioConfig) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {CODE_VERSION}");
        let _ = writeln!(out, "# scenario = {}", kind.label());
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "# [config]");
        for line in cfg.to_toml().lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

/// Number label for file names: `0.25`, `-0.1`, `90`.
fn label(v: f64) -> String {
    format!("{}", (v * 1e9).round() / 1e9 + 0.0)
}

/// Closed-form quantities and trace at `p`.
pub fn analytic_trace(
    p: &DriveParams,
    n_max: usize,
    grid: TimeGrid,
) -> Result<(TimeTrace, RamanQuantities, EnvelopeCoefficients), ScenarioError> {
    let f = derive_frame(p).map_err(|e| ScenarioError::Config(e.to_string()))?;
    let q = raman_quantities_with(p, &f, n_max)?;
    let ec = envelope_coefficients(p, &f, &q)?;
    Ok((population_closed_form(p, &f, &q, &ec, grid), q, ec))
}

/// Fourier response and detected lines of the closed-form trace at `p`.
pub fn spectrum_at(
    cfg: &ScenarioConfig,
    p: &DriveParams,
) -> Result<(FourierResponse, Vec<SpectrumLine>, RamanQuantities), ScenarioError> {
    let grid = TimeGrid::span(cfg.spectrum_window(), cfg.spectrum_dt());
    let (trace, q, _) = analytic_trace(p, cfg.n_max, grid)?;
    let fr = spectrum::fourier_response(&trace, cfg.gamma_inv_us, &cfg.spectrum_grid())?;
    let lines = spectrum::find_lines(&fr, cfg.min_prominence);
    Ok((fr, lines, q))
}

pub fn integrator_config(cfg: &ScenarioConfig) -> IntegratorConfig {
    IntegratorConfig::with_step(cfg.trace_dt()).method(cfg.integrator)
}

/// Ω₂, ω_BS and Ω₂* against A/ω.
pub fn run_freq_sweep(cfg: &ScenarioConfig) -> Result<Vec<Table>, ScenarioError> {
    let base = cfg.base_params()?;
    let values = sweep_values("amp_sweep", cfg.amp_sweep_start, cfg.amp_sweep_stop, cfg.amp_sweep_step)?;
    let rows = values
        .par_iter()
        .map(|&r| -> Result<Vec<f64>, ScenarioError> {
            let p = base.with_amp(r * base.mod_freq);
            let f = derive_frame(&p).map_err(|e| ScenarioError::Config(e.to_string()))?;
            let q = raman_quantities_with(&p, &f, cfg.n_max)?;
            Ok(vec![
                r,
                f.mod_index,
                q.omega_rwa / TAU,
                q.bs_shift / TAU,
                q.omega_eff / TAU,
                f.coupling_ratio,
                q.tail_bound / TAU,
            ])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(
        "fig1_frequencies",
        &[
            "amp_over_omega",
            "mod_index",
            "omega_rwa_mhz",
            "bs_shift_mhz",
            "omega_eff_mhz",
            "coupling_ratio",
            "tail_bound_mhz",
        ],
    )
    .meta("n_max", cfg.n_max);
    t.rows = rows;
    Ok(vec![t])
}

/// Closed-form and directly integrated populations over the ΔA/ω × ψ grid,
/// plus one summary table.
pub fn run_time_traces(cfg: &ScenarioConfig) -> Result<Vec<Table>, ScenarioError> {
    let icfg = integrator_config(cfg);
    let cases: Vec<(f64, f64)> = cfg
        .trace_delta_list()
        .into_iter()
        .flat_map(|da| cfg.trace_psi_list().into_iter().map(move |psi| (da, psi)))
        .collect();
    // fail fast on a bad step before spawning work
    for &(da, psi) in &cases {
        icfg.validate(&cfg.params_at(da, psi)?)?;
    }
    let grid = TimeGrid::span(cfg.trace_window(), cfg.trace_dt());

    let results = cases
        .par_iter()
        .map(|&(da, psi)| -> Result<(Table, Vec<f64>), ScenarioError> {
            let p = cfg.params_at(da, psi)?;
            let (ana, q, ec) = analytic_trace(&p, cfg.n_max, grid)?;
            let (ode, diag) = oracle::evolve_full_with_diagnostics(&p, grid, &icfg)?;
            let depth = envelope_modulation_depth(&ec, &q, grid);
            let mut t = Table::new(
                format!("fig2_da{}_psi{}", label(da), label(psi)),
                &["t_us", "p_analytic", "p_oracle"],
            )
            .meta("delta_a_over_omega", da)
            .meta("psi_deg", psi)
            .meta("amp_over_omega", p.amp_over_omega())
            .meta("omega_eff_mhz", q.omega_eff / TAU)
            .meta("integrator", format!("{:?}", icfg.method).to_lowercase())
            .meta("max_norm_drift", diag.max_norm_drift);
            t.rows = grid
                .times()
                .zip(ana.samples.iter().zip(&ode.samples))
                .map(|(t, (a, o))| vec![t, *a, *o])
                .collect();
            let summary = vec![
                da,
                psi,
                p.amp_over_omega(),
                q.omega_rwa / TAU,
                q.bs_shift / TAU,
                q.omega_eff / TAU,
                oracle::slow_frequency(&ana) / TAU,
                oracle::slow_frequency(&ode) / TAU,
                depth,
                ana.samples[0],
                ode.samples[0],
                diag.max_norm_drift,
            ];
            Ok((t, summary))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut summary = Table::new(
        "fig2_summary",
        &[
            "delta_a_over_omega",
            "psi_deg",
            "amp_over_omega",
            "omega_rwa_mhz",
            "bs_shift_mhz",
            "omega_eff_mhz",
            "slow_freq_analytic_mhz",
            "slow_freq_oracle_mhz",
            "modulation_depth",
            "p0_analytic",
            "p0_oracle",
            "max_norm_drift",
        ],
    );
    let mut tables = Vec::with_capacity(results.len() + 1);
    for (t, row) in results {
        summary.rows.push(row);
        tables.push(t);
    }
    tables.push(summary);
    Ok(tables)
}

/// Highest harmonic fitted for a spectrum grid reaching `max_freq`.
pub fn comb_harmonics(max_freq: f64, omega: f64) -> u32 {
    (max_freq / omega).ceil() as u32 + 3
}

fn spectra_tables(
    cfg: &ScenarioConfig,
    stem: &str,
    sweep_key: &str,
    sweep: &[f64],
    params: impl Fn(f64) -> Result<DriveParams, ScenarioError> + Sync,
) -> Result<[Table; 3], ScenarioError> {
    let max_freq = TAU * cfg.spectrum_max_mhz;
    let results = sweep
        .par_iter()
        .map(|&v| -> Result<_, ScenarioError> {
            let p = params(v)?;
            let (fr, lines, q) = spectrum_at(cfg, &p)?;
            let comb = spectrum::fit_comb(&fr, p.mod_freq, q.omega_eff, comb_harmonics(max_freq, p.mod_freq))?;
            Ok((v, fr, lines, q, comb))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut grid = Table::new(stem, &[sweep_key, "freq_mhz", "abs_f"])
        .meta("gamma_inv_us", cfg.gamma_inv_us)
        .meta("window_us", cfg.spectrum_window())
        .meta("dt_ns", cfg.spectrum_dt() * 1e3)
        .meta("normalization", "abs(F), F = int_0^T exp(-i w t - gamma t) P(t) dt");
    let mut lines_t = Table::new(
        format!("{stem}_lines"),
        &[sweep_key, "center_mhz", "amplitude", "fwhm_mhz", "omega_eff_mhz"],
    )
    .meta("min_prominence", cfg.min_prominence);
    let mut comb_t = Table::new(
        format!("{stem}_comb"),
        &[sweep_key, "harmonic", "side", "center_mhz", "weight"],
    )
    .meta("model", "F = sum_k c_k/(gamma + i(w - w_k)) over 0, W, n w, n w +- W and mirrors; weight = |c_k|");
    for (v, fr, lines, q, comb) in results {
        for m in comb.iter().filter(|m| m.center <= max_freq) {
            comb_t
                .rows
                .push(vec![v, m.harmonic as f64, m.side as f64, m.center / TAU, m.weight]);
        }
        for (w, z) in fr.freq_grid.iter().zip(&fr.values) {
            grid.rows.push(vec![v, w / TAU, z.norm()]);
        }
        for l in lines {
            lines_t
                .rows
                .push(vec![v, l.center / TAU, l.amplitude, l.fwhm / TAU, q.omega_eff / TAU]);
        }
    }
    Ok([grid, lines_t, comb_t])
}

/// |F| against ΔA/ω, one panel per phase.
pub fn run_spectra_vs_amp(cfg: &ScenarioConfig) -> Result<Vec<Table>, ScenarioError> {
    let sweep = sweep_values("amp_scan", cfg.amp_scan_start, cfg.amp_scan_stop, cfg.amp_scan_step)?;
    let mut out = Vec::new();
    for psi in cfg.amp_scan_psi_list() {
        let tables = spectra_tables(cfg, &format!("fig3_psi{}", label(psi)), "delta_a_over_omega", &sweep, |da| {
            cfg.params_at(da, psi)
        })?;
        out.extend(tables.into_iter().map(|t| t.meta("psi_deg", psi)));
    }
    Ok(out)
}

/// |F| against ψ, one panel per ΔA/ω.
pub fn run_spectra_vs_phase(cfg: &ScenarioConfig) -> Result<Vec<Table>, ScenarioError> {
    let sweep = sweep_values("phase_scan", cfg.phase_scan_start, cfg.phase_scan_stop, cfg.phase_scan_step)?;
    let mut out = Vec::new();
    for da in cfg.phase_scan_delta_list() {
        let tables = spectra_tables(cfg, &format!("fig4_da{}", label(da)), "psi_deg", &sweep, |psi| {
            cfg.params_at(da, psi)
        })?;
        out.extend(tables.into_iter().map(|t| t.meta("delta_a_over_omega", da)));
    }
    Ok(out)
}

pub fn write_tables(
    dir: &Path,
    kind: ScenarioKind,
    cfg: &ScenarioConfig,
    tables: &[Table],
) -> Result<Vec<PathBuf>, ScenarioError> {
    std::fs::create_dir_all(dir).map_err(|source| ScenarioError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    tables
        .iter()
        .map(|t| {
            let path = dir.join(format!("{}.csv", t.name));
            std::fs::write(&path, t.to_csv(kind, cfg)).map_err(|source| ScenarioError::Io {
                path: path.clone(),
                source,
            })?;
            Ok(path)
        })
        .collect()
}

impl ScenarioSpec {
    pub fn tables(&self) -> Result<Vec<Table>, ScenarioError> {
        self.config.validate()?;
        match self.kind {
            ScenarioKind::FreqSweep => run_freq_sweep(&self.config),
            ScenarioKind::TimeTraces => run_time_traces(&self.config),
            ScenarioKind::SpectraVsAmp => run_spectra_vs_amp(&self.config),
            ScenarioKind::SpectraVsPhase => run_spectra_vs_phase(&self.config),
            ScenarioKind::Validate => Err(ScenarioError::Config(
                "validation produces a report, not tables".into(),
            )),
        }
    }

    /// Runs a table-producing scenario and writes its files into `out_dir`.
    pub fn run(&self) -> Result<Vec<PathBuf>, ScenarioError> {
        let tables = self.tables()?;
        write_tables(&self.out_dir, self.kind, &self.config, &tables)
    }
}
