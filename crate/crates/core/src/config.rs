//! Run configuration in TOML.
//!
//! Only `temperature` and `bath.s` are required; every other key has a
//! default. Unknown keys are rejected.
//!
//! ```toml
//! temperature = 0.2          # k_B T / omega_c; 0 selects zero temperature
//!
//! [system]
//! epsilon = 0.0
//! delta = 0.1
//!
//! [bath]
//! s = 1.0
//! alpha = 0.05
//! omega_max = 10.0
//! n_b = 250
//! frequency_solver = "auto"  # or "bisection"
//!
//! [ansatz]
//! variant = "D1"             # or "D2"
//! multiplicity = 2
//!
//! [sampling]
//! n_s = 400
//! noise_amp = 0.01
//! master_seed = 0
//!
//! [integrator]
//! scheme = "adaptive"        # or "rk4"
//! dt = 0.05
//! t_final = 50.0
//! tol_abs = 1e-12
//! tol_rel = 1e-10
//! reg_eps = 1e-10
//!
//! [output]
//! dt = 0.5
//! directory = "out"
//! oracle = false
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::ansatz::AnsatzVariant;
use crate::eom::{IntegratorConfig, IntegratorScheme, LinearSolver};
use crate::model::{FrequencySolver, SpectralDensityParams, SystemParams};
use crate::sampler::{AnsatzSpec, ThermalSampleConfig};
use crate::{DiscretizedBath, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub s: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
    #[serde(default = "default_n_b")]
    pub n_b: i64,
    #[serde(default)]
    pub frequency_solver: FrequencySolver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSection {
    #[serde(default = "default_variant")]
    pub variant: AnsatzVariant,
    #[serde(default = "default_multiplicity")]
    pub multiplicity: i64,
}

impl Default for AnsatzSection {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            multiplicity: default_multiplicity(),
        }
    }
}

/// Largest master seed; TOML integers are signed 64-bit.
pub const MAX_SEED: u64 = i64::MAX as u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_n_s")]
    pub n_s: i64,
    #[serde(default = "default_noise_amp")]
    pub noise_amp: f64,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            n_s: default_n_s(),
            noise_amp: default_noise_amp(),
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_scheme")]
    pub scheme: IntegratorScheme,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_tol_abs")]
    pub tol_abs: f64,
    #[serde(default = "default_tol_rel")]
    pub tol_rel: f64,
    #[serde(default = "default_reg_eps")]
    pub reg_eps: f64,
    #[serde(default = "default_pinv_threshold")]
    pub pinv_threshold: f64,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_residual_cap")]
    pub residual_cap: f64,
    #[serde(default = "default_solver")]
    pub solver: LinearSolver,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            scheme: d.scheme,
            dt: d.dt,
            t_final: d.t_final,
            tol_abs: d.tol_abs,
            tol_rel: d.tol_rel,
            reg_eps: d.reg_eps,
            pinv_threshold: d.pinv_threshold,
            residual_tol: d.residual_tol,
            residual_cap: d.residual_cap,
            solver: d.solver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Spacing of the output time grid.
    #[serde(default = "default_output_dt")]
    pub dt: f64,
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Adds an exact reference column (closed form when the coupling
    /// vanishes, Fock propagation for baths of at most four modes).
    #[serde(default)]
    pub oracle: bool,
    /// Keeps per-trajectory `P_z` curves in `trajectories.tsv`.
    #[serde(default)]
    pub trajectories: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dt: default_output_dt(),
            directory: default_directory(),
            oracle: false,
            trajectories: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `k_B T` in units of `omega_c`.
    pub temperature: f64,
    #[serde(default)]
    pub system: SystemSection,
    pub bath: BathSection,
    #[serde(default)]
    pub ansatz: AnsatzSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_delta() -> f64 {
    0.1
}
fn default_alpha() -> f64 {
    0.05
}
fn default_omega_max() -> f64 {
    SpectralDensityParams::DEFAULT_OMEGA_MAX
}
fn default_n_b() -> i64 {
    250
}
fn default_variant() -> AnsatzVariant {
    AnsatzVariant::D1
}
fn default_multiplicity() -> i64 {
    2
}
fn default_n_s() -> i64 {
    400
}
fn default_noise_amp() -> f64 {
    0.01
}
fn default_scheme() -> IntegratorScheme {
    IntegratorConfig::default().scheme
}
fn default_dt() -> f64 {
    IntegratorConfig::default().dt
}
fn default_t_final() -> f64 {
    IntegratorConfig::default().t_final
}
fn default_tol_abs() -> f64 {
    IntegratorConfig::default().tol_abs
}
fn default_tol_rel() -> f64 {
    IntegratorConfig::default().tol_rel
}
fn default_reg_eps() -> f64 {
    IntegratorConfig::default().reg_eps
}
fn default_pinv_threshold() -> f64 {
    IntegratorConfig::default().pinv_threshold
}
fn default_residual_tol() -> f64 {
    IntegratorConfig::default().residual_tol
}
fn default_residual_cap() -> f64 {
    IntegratorConfig::default().residual_cap
}
fn default_solver() -> LinearSolver {
    IntegratorConfig::default().solver
}
fn default_output_dt() -> f64 {
    0.5
}
fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn positive_count(field: &str, v: i64) -> Result<usize> {
    if v < 1 {
        return Err(Error::invalid(field, format!("must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

fn prefixed(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } if !field.contains('.') => Error::InvalidParameter {
            field: format!("{section}.{field}"),
            reason,
        },
        other => other,
    }
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical TOML with every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(
                "temperature",
                format!("must be a finite value >= 0, got {}", self.temperature),
            ));
        }
        self.system_params()?;
        self.spectral_params()?;
        positive_count("ansatz.multiplicity", self.ansatz.multiplicity)?;
        positive_count("sampling.n_s", self.sampling.n_s)?;
        if self.sampling.master_seed > MAX_SEED {
            return Err(Error::invalid(
                "sampling.master_seed",
                format!("must be <= {MAX_SEED}, got {}", self.sampling.master_seed),
            ));
        }
        if !(self.sampling.noise_amp >= 0.0 && self.sampling.noise_amp.is_finite()) {
            return Err(Error::invalid("sampling.noise_amp", "must be a finite value >= 0"));
        }
        self.integrator_config().validate()?;
        if !(self.output.dt > 0.0 && self.output.dt.is_finite()) {
            return Err(Error::invalid("output.dt", "must be > 0"));
        }
        Ok(())
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        SystemParams::new(self.system.epsilon, self.system.delta).map_err(|e| prefixed("system", e))
    }

    pub fn spectral_params(&self) -> Result<SpectralDensityParams> {
        let n_b = positive_count("bath.n_b", self.bath.n_b)?;
        SpectralDensityParams::new(self.bath.s, self.bath.alpha, n_b)
            .and_then(|p| p.with_omega_max(self.bath.omega_max))
            .map_err(|e| prefixed("bath", e))
    }

    pub fn discretized_bath(&self) -> Result<DiscretizedBath> {
        crate::model::discretize_bath_with(&self.spectral_params()?, self.bath.frequency_solver)
    }

    pub fn ansatz_spec(&self) -> AnsatzSpec {
        AnsatzSpec {
            variant: self.ansatz.variant,
            m: self.ansatz.multiplicity.max(1) as usize,
        }
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let i = &self.integrator;
        IntegratorConfig {
            dt: i.dt,
            t_final: i.t_final,
            scheme: i.scheme,
            tol_abs: i.tol_abs,
            tol_rel: i.tol_rel,
            reg_eps: i.reg_eps,
            pinv_threshold: i.pinv_threshold,
            residual_tol: i.residual_tol,
            residual_cap: i.residual_cap,
            solver: i.solver,
            ..IntegratorConfig::default()
        }
    }

    /// Inverse temperature; infinite for `temperature = 0`.
    pub fn beta(&self) -> f64 {
        if self.temperature == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.temperature
        }
    }

    pub fn sample_config(&self, bath: &DiscretizedBath) -> Result<ThermalSampleConfig> {
        ThermalSampleConfig::new(
            self.temperature,
            bath,
            self.sampling.n_s.max(1) as usize,
            self.sampling.noise_amp,
            self.sampling.master_seed,
        )
    }

    /// Output times `0, dt_out, ...` up to `t_final`.
    pub fn output_grid(&self) -> Vec<f64> {
        crate::eom::uniform_grid(self.integrator.t_final, self.output.dt)
    }
}
