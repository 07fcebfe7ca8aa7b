use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytic::{DEFAULT_N_MAX, MAX_N_MAX};
use crate::oracle::IntegratorMethod;
use crate::params::{DriveParams, ParamError, DEFAULT_GAMMA};
use crate::special;

use super::ScenarioError;

/// Flat scenario configuration. Frequencies are in MHz (value/2π), times in
/// μs or ns as the key says, the decay rate in 1/μs.
///
/// Unset optional keys fall back to per-scenario defaults: time traces use
/// `dt_ns = 0.1` over `window_us = 2`, spectra use `dt_ns = 1` over
/// `window_us = 10/γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub delta_x_mhz: f64,
    pub delta_z_mhz: f64,
    pub omega_mhz: f64,
    /// Reference amplitude in units of ω; the first J₂ zero when unset.
    pub amp_over_omega: Option<f64>,
    /// Restricts the ΔA/ω list of the current scenario to one value.
    pub delta_a_over_omega: Option<f64>,
    /// Restricts the phase list of the current scenario to one value.
    pub psi_deg: Option<f64>,
    pub gamma_inv_us: f64,
    pub n_max: usize,
    pub dt_ns: Option<f64>,
    pub window_us: Option<f64>,
    pub integrator: IntegratorMethod,

    pub amp_sweep_start: f64,
    pub amp_sweep_stop: f64,
    pub amp_sweep_step: f64,

    pub trace_delta_a: Vec<f64>,
    pub trace_psi_deg: Vec<f64>,

    pub spectrum_max_mhz: f64,
    pub spectrum_step_mhz: f64,
    pub min_prominence: f64,

    pub amp_scan_start: f64,
    pub amp_scan_stop: f64,
    pub amp_scan_step: f64,
    pub amp_scan_psi_deg: Vec<f64>,

    pub phase_scan_start: f64,
    pub phase_scan_stop: f64,
    pub phase_scan_step: f64,
    pub phase_scan_delta_a: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            delta_x_mhz: 10.0,
            delta_z_mhz: 3.0,
            omega_mhz: 5.22,
            amp_over_omega: None,
            delta_a_over_omega: None,
            psi_deg: None,
            gamma_inv_us: DEFAULT_GAMMA,
            n_max: DEFAULT_N_MAX,
            dt_ns: None,
            window_us: None,
            integrator: IntegratorMethod::Rk4,
            amp_sweep_start: 0.0,
            amp_sweep_stop: 5.0,
            amp_sweep_step: 0.01,
            trace_delta_a: vec![0.25, 0.1, 0.0, -0.1, -0.25],
            trace_psi_deg: vec![0.0, 90.0],
            spectrum_max_mhz: 25.0,
            spectrum_step_mhz: 0.01,
            min_prominence: crate::spectrum::DEFAULT_PROMINENCE,
            amp_scan_start: -0.25,
            amp_scan_stop: 0.25,
            amp_scan_step: 0.01,
            amp_scan_psi_deg: vec![0.0, 90.0],
            phase_scan_start: 0.0,
            phase_scan_stop: 180.0,
            phase_scan_step: 5.0,
            phase_scan_delta_a: vec![0.0, -0.25],
        }
    }
}

pub const TRACE_DT_NS: f64 = 0.1;
pub const TRACE_WINDOW_US: f64 = 2.0;
pub const SPECTRUM_DT_NS: f64 = 1.0;
/// Spectrum window in units of 1/γ.
pub const SPECTRUM_WINDOW_DECAYS: f64 = 10.0;

/// Sweep values `start + i·step` up to `stop`, snapped to 1e-9 so that
/// decimal steps land on round numbers.
pub fn sweep_values(name: &str, start: f64, stop: f64, step: f64) -> Result<Vec<f64>, ScenarioError> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(ScenarioError::Config(format!(
            "{name}: need finite start <= stop and step > 0 (got {start}, {stop}, {step})"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| {
            let v = ((start + i as f64 * step) * 1e9).round() / 1e9;
            if v == 0.0 {
                0.0
            } else {
                v
            }
        })
        .collect())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ScenarioError::Config(msg) => ScenarioError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// TOML rendering used for output headers.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Config(msg));
        self.base_params()?;
        if !(self.gamma_inv_us > 0.0 && self.gamma_inv_us.is_finite()) {
            return bad(format!("gamma_inv_us must be positive, got {}", self.gamma_inv_us));
        }
        if self.n_max == 0 || self.n_max > MAX_N_MAX {
            return bad(format!("n_max must be in 1..={MAX_N_MAX}, got {}", self.n_max));
        }
        for (key, v) in [("dt_ns", self.dt_ns), ("window_us", self.window_us)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{key} must be positive, got {v}"));
                }
            }
        }
        if let Some(v) = self.amp_over_omega {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("amp_over_omega must be non-negative, got {v}"));
            }
        }
        if !(self.spectrum_max_mhz > 0.0 && self.spectrum_step_mhz > 0.0) {
            return bad("spectrum_max_mhz and spectrum_step_mhz must be positive".into());
        }
        if !(0.0..1.0).contains(&self.min_prominence) {
            return bad(format!("min_prominence must be in [0, 1), got {}", self.min_prominence));
        }
        for (key, list) in [
            ("trace_delta_a", &self.trace_delta_a),
            ("trace_psi_deg", &self.trace_psi_deg),
            ("amp_scan_psi_deg", &self.amp_scan_psi_deg),
            ("phase_scan_delta_a", &self.phase_scan_delta_a),
        ] {
            if list.is_empty() || list.iter().any(|v| !v.is_finite()) {
                return bad(format!("{key} must be a non-empty list of finite numbers"));
            }
        }
        sweep_values("amp_sweep", self.amp_sweep_start, self.amp_sweep_stop, self.amp_sweep_step)?;
        sweep_values("amp_scan", self.amp_scan_start, self.amp_scan_stop, self.amp_scan_step)?;
        sweep_values("phase_scan", self.phase_scan_start, self.phase_scan_stop, self.phase_scan_step)?;
        Ok(())
    }

    /// Drive parameters with A = 0 and ψ = 0.
    pub fn base_params(&self) -> Result<DriveParams, ScenarioError> {
        DriveParams::from_mhz(self.delta_x_mhz, self.delta_z_mhz, 0.0, self.omega_mhz, 0.0, self.gamma_inv_us)
            .map_err(|e: ParamError| ScenarioError::Config(e.to_string()))
    }

    /// Reference amplitude, rad/μs.
    pub fn reference_amp(&self) -> Result<f64, ScenarioError> {
        let p = self.base_params()?;
        match self.amp_over_omega {
            Some(r) => Ok(r * p.mod_freq),
            None => {
                let f = crate::params::derive_frame(&p).map_err(|e| ScenarioError::Config(e.to_string()))?;
                Ok(special::a_star_amplitude(&f, p.mod_freq, 1)?)
            }
        }
    }

    /// Parameters at A = reference + ΔA and phase ψ.
    pub fn params_at(&self, delta_a_over_omega: f64, psi_deg: f64) -> Result<DriveParams, ScenarioError> {
        let p = self.base_params()?;
        let amp = self.reference_amp()? + delta_a_over_omega * p.mod_freq;
        let q = p.with_amp(amp).with_phase(psi_deg.to_radians());
        q.validate().map_err(|e| ScenarioError::Config(e.to_string()))?;
        Ok(q)
    }

    pub fn trace_dt(&self) -> f64 {
        self.dt_ns.unwrap_or(TRACE_DT_NS) * 1e-3
    }

    pub fn trace_window(&self) -> f64 {
        self.window_us.unwrap_or(TRACE_WINDOW_US)
    }

    pub fn spectrum_dt(&self) -> f64 {
        self.dt_ns.unwrap_or(SPECTRUM_DT_NS) * 1e-3
    }

    pub fn spectrum_window(&self) -> f64 {
        self.window_us.unwrap_or(SPECTRUM_WINDOW_DECAYS / self.gamma_inv_us)
    }

    /// Spectrum frequency grid, rad/μs.
    pub fn spectrum_grid(&self) -> Vec<f64> {
        let tau = std::f64::consts::TAU;
        crate::spectrum::uniform_grid(0.0, tau * self.spectrum_max_mhz, tau * self.spectrum_step_mhz)
    }

    pub fn trace_delta_list(&self) -> Vec<f64> {
        self.delta_a_over_omega.map_or_else(|| self.trace_delta_a.clone(), |v| vec![v])
    }

    pub fn trace_psi_list(&self) -> Vec<f64> {
        self.psi_deg.map_or_else(|| self.trace_psi_deg.clone(), |v| vec![v])
    }

    pub fn amp_scan_psi_list(&self) -> Vec<f64> {
        self.psi_deg.map_or_else(|| self.amp_scan_psi_deg.clone(), |v| vec![v])
    }

    pub fn phase_scan_delta_list(&self) -> Vec<f64> {
        self.delta_a_over_omega
            .map_or_else(|| self.phase_scan_delta_a.clone(), |v| vec![v])
    }
}
