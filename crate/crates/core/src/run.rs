//! Batch execution: ensemble runs with on-disk artifacts, replay from a
//! manifest, and convergence sweeps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::oracle::{analytic_two_level, thermal_fock_ensemble, FockConfig, MAX_FOCK_MODES};
use crate::sampler::{run_ensemble, EnsembleResult};
use crate::{Error, Result, RunConfig};

pub const MANIFEST_VERSION: u32 = 1;
pub const RESULTS_FILE: &str = "results.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.tsv";
pub const RESULTS_HEADER: [&str; 6] = ["t", "pz_mean", "pz_stderr", "norm_drift_max", "energy_drift_max", "n_effective"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub package: String,
    pub package_version: String,
    pub config: RunConfig,
    pub master_seed: u64,
    pub n_s: usize,
    pub n_effective: usize,
    pub aborted: Vec<usize>,
    pub oracle: Option<OracleKind>,
    pub results_file: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Closed-form two-level dynamics (vanishing coupling).
    TwoLevel,
    /// Exact Fock-basis propagation over the same thermal draws.
    Fock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub ensemble: EnsembleResult,
    pub oracle: Option<(OracleKind, Vec<f64>)>,
    pub manifest: Manifest,
}

/// Exact reference `P_z` on the output grid, if one is available.
pub fn oracle_column(cfg: &RunConfig, grid: &[f64]) -> Result<(OracleKind, Vec<f64>)> {
    let sys = cfg.system_params()?;
    if cfg.bath.alpha == 0.0 {
        return Ok((OracleKind::TwoLevel, grid.iter().map(|t| analytic_two_level(&sys, *t)).collect()));
    }
    let n_b = cfg.spectral_params()?.n_b;
    if n_b > MAX_FOCK_MODES {
        return Err(Error::Config(format!(
            "oracle comparison needs bath.alpha = 0 or bath.n_b <= {MAX_FOCK_MODES}, got n_b = {n_b}"
        )));
    }
    let bath = cfg.discretized_bath()?;
    let sampling = cfg.sample_config(&bath)?;
    let template = FockConfig::new(vec![0; n_b], cfg.output.dt, cfg.integrator.t_final)?;
    let exact = thermal_fock_ensemble(&sys, &bath, &sampling, &template, grid)?;
    Ok((OracleKind::Fock, exact.pz_mean))
}

/// Runs the ensemble described by `cfg` without touching the filesystem.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let sys = cfg.system_params()?;
    let bath = cfg.discretized_bath()?;
    let sampling = cfg.sample_config(&bath)?;
    let grid = cfg.output_grid();
    let ensemble = run_ensemble(&sys, &bath, &sampling, cfg.ansatz_spec(), &cfg.integrator_config(), &grid)?;
    let oracle = if cfg.output.oracle {
        Some(oracle_column(cfg, &grid)?)
    } else {
        None
    };
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        package: env!("CARGO_PKG_NAME").to_string(),
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        master_seed: cfg.sampling.master_seed,
        n_s: sampling.n_s,
        n_effective: ensemble.n_effective,
        aborted: ensemble
            .trajectories
            .iter()
            .filter(|t| t.aborted.is_some())
            .map(|t| t.index)
            .collect(),
        oracle: oracle.as_ref().map(|o| o.0),
        results_file: RESULTS_FILE.to_string(),
    };
    Ok(RunOutput {
        ensemble,
        oracle,
        manifest,
    })
}

/// Tab-separated results with a header row.
pub fn results_table(ens: &EnsembleResult, oracle: Option<&[f64]>) -> String {
    let mut out = RESULTS_HEADER.join("\t");
    if oracle.is_some() {
        out.push_str("\tpz_oracle");
    }
    out.push('\n');
    for k in 0..ens.times.len() {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            ens.times[k],
            ens.pz_mean[k],
            ens.pz_stderr[k],
            ens.norm_drift_max[k],
            ens.energy_drift_max[k],
            ens.n_effective
        );
        if let Some(o) = oracle {
            let _ = write!(out, "\t{}", o[k]);
        }
        out.push('\n');
    }
    out
}

fn trajectories_table(ens: &EnsembleResult) -> String {
    let mut out = String::from("t");
    for t in ens.trajectories.iter().filter(|t| t.aborted.is_none()) {
        let _ = write!(out, "\tpz_{}", t.index);
    }
    out.push('\n');
    for k in 0..ens.times.len() {
        let _ = write!(out, "{}", ens.times[k]);
        for s in &ens.pz_samples {
            let _ = write!(out, "\t{}", s[k]);
        }
        out.push('\n');
    }
    out
}

/// Writes `results.tsv` and `manifest.json` (and optionally
/// `trajectories.tsv`) into `dir`.
pub fn write_artifacts(output: &RunOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let table = results_table(&output.ensemble, output.oracle.as_ref().map(|o| o.1.as_slice()));
    fs::write(dir.join(RESULTS_FILE), table)?;
    let manifest = serde_json::to_string_pretty(&output.manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), manifest + "\n")?;
    if output.manifest.config.output.trajectories {
        fs::write(dir.join(TRAJECTORIES_FILE), trajectories_table(&output.ensemble))?;
    }
    Ok(())
}

/// Executes `cfg` and writes its artifacts to `cfg.output.directory`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let output = execute(cfg)?;
    write_artifacts(&output, &cfg.output.directory)?;
    Ok(output)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if m.manifest_version != MANIFEST_VERSION {
        return Err(Error::Config(format!(
            "unsupported manifest version {} (expected {MANIFEST_VERSION})",
            m.manifest_version
        )));
    }
    Ok(m)
}

/// Re-runs the configuration recorded in a manifest, writing into `out_dir`
/// (or the recorded directory).
pub fn replay(manifest_path: &Path, out_dir: Option<PathBuf>) -> Result<RunOutput> {
    let m = read_manifest(manifest_path)?;
    let mut cfg = m.config;
    if let Some(dir) = out_dir {
        cfg.output.directory = dir;
    }
    run(&cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    M,
    NS,
    NB,
    Dt,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m" | "multiplicity" => Ok(SweepAxis::M),
            "n_s" | "ns" => Ok(SweepAxis::NS),
            "n_b" | "nb" => Ok(SweepAxis::NB),
            "dt" => Ok(SweepAxis::Dt),
            other => Err(Error::Config(format!("unknown sweep axis `{other}` (expected M, n_s, n_b or dt)"))),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::M => "M",
            SweepAxis::NS => "n_s",
            SweepAxis::NB => "n_b",
            SweepAxis::Dt => "dt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub pz_mean: Vec<f64>,
    pub pz_stderr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub times: Vec<f64>,
    pub points: Vec<SweepPoint>,
    /// `max_t |P_z(v_{k+1}) - P_z(v_k)|`.
    pub deviations: Vec<f64>,
    /// `max_t |P_z(v_{k+1}) - P_z(v_k)| / sqrt(se_k^2 + se_{k+1}^2)`.
    pub deviation_in_stderr: Vec<f64>,
    pub threshold: f64,
    pub converged: bool,
}

fn integral(axis: SweepAxis, v: f64) -> Result<i64> {
    if v.fract() != 0.0 || v < 1.0 {
        return Err(Error::Config(format!("sweep values on axis {axis} must be positive integers, got {v}")));
    }
    Ok(v as i64)
}

fn apply_axis(base: &RunConfig, axis: SweepAxis, v: f64) -> Result<RunConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::M => cfg.ansatz.multiplicity = integral(axis, v)?,
        SweepAxis::NS => cfg.sampling.n_s = integral(axis, v)?,
        SweepAxis::NB => cfg.bath.n_b = integral(axis, v)?,
        SweepAxis::Dt => cfg.integrator.dt = v,
    }
    cfg.output.oracle = false;
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `base` for every value on `axis` and compares successive results.
///
/// The sample axis reuses one ensemble of the largest size: trajectory `i`
/// has the same draws in every run, so smaller ensembles are its prefixes.
pub fn sweep(base: &RunConfig, axis: SweepAxis, values: &[f64], threshold: f64) -> Result<SweepReport> {
    if values.len() < 2 {
        return Err(Error::Config("a sweep needs at least two values".into()));
    }
    let times = base.output_grid();
    let mut points = Vec::with_capacity(values.len());
    if axis == SweepAxis::NS {
        let largest = values.iter().cloned().fold(0.0, f64::max);
        let out = execute(&apply_axis(base, axis, largest)?)?;
        for &v in values {
            let n = integral(axis, v)? as usize;
            let (pz_mean, pz_stderr) = out.ensemble.prefix_summary(n);
            points.push(SweepPoint { value: v, pz_mean, pz_stderr });
        }
    } else {
        for &v in values {
            let out = execute(&apply_axis(base, axis, v)?)?;
            points.push(SweepPoint {
                value: v,
                pz_mean: out.ensemble.pz_mean,
                pz_stderr: out.ensemble.pz_stderr,
            });
        }
    }
    let mut deviations = Vec::new();
    let mut in_se = Vec::new();
    for w in points.windows(2) {
        let mut dev = 0.0f64;
        let mut ratio = 0.0f64;
        for k in 0..times.len() {
            let d = (w[1].pz_mean[k] - w[0].pz_mean[k]).abs();
            dev = dev.max(d);
            let se = w[0].pz_stderr[k].hypot(w[1].pz_stderr[k]);
            if se > 0.0 {
                ratio = ratio.max(d / se);
            } else if d > 0.0 {
                ratio = f64::INFINITY;
            }
        }
        deviations.push(dev);
        in_se.push(ratio);
    }
    let converged = deviations.last().is_some_and(|d| *d < threshold);
    Ok(SweepReport {
        axis,
        times,
        points,
        deviations,
        deviation_in_stderr: in_se,
        threshold,
        converged,
    })
}

/// Plot-ready table: `t`, then mean and stderr per axis value.
pub fn sweep_table(report: &SweepReport) -> String {
    let mut out = String::from("t");
    for p in &report.points {
        let _ = write!(out, "\tpz_mean[{}={}]\tpz_stderr[{}={}]", report.axis, p.value, report.axis, p.value);
    }
    out.push('\n');
    for k in 0..report.times.len() {
        let _ = write!(out, "{}", report.times[k]);
        for p in &report.points {
            let _ = write!(out, "\t{}\t{}", p.pz_mean[k], p.pz_stderr[k]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(extra: &str) -> RunConfig {
        RunConfig::parse(&format!(
            "temperature = 0.2\n[bath]\ns = 1.0\nn_b = 3\n[sampling]\nn_s = 4\n[integrator]\nt_final = 4.0\n[output]\ndt = 1.0\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn table_has_fixed_columns_and_bounded_values() {
        let out = execute(&small("")).unwrap();
        let table = results_table(&out.ensemble, None);
        let mut lines = table.lines();
        assert_eq!(lines.next().unwrap(), RESULTS_HEADER.join("\t"));
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split('\t').map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 5);
        for (k, r) in rows.iter().enumerate() {
            assert_eq!(r[0], k as f64);
            assert!((-1.0..=1.0).contains(&r[1]));
            assert!(r[2] >= 0.0);
            assert_eq!(r[5], 4.0);
        }
    }

    #[test]
    fn fock_oracle_column_for_small_baths() {
        let mut cfg = small("oracle = true\n");
        cfg.bath.alpha = 0.02;
        let out = execute(&cfg).unwrap();
        let (kind, col) = out.oracle.unwrap();
        assert_eq!(kind, OracleKind::Fock);
        for (a, b) in col.iter().zip(&out.ensemble.pz_mean) {
            assert!((a - b).abs() < 1e-2);
        }
    }

    #[test]
    fn axis_names() {
        assert_eq!("M".parse::<SweepAxis>().unwrap(), SweepAxis::M);
        assert_eq!("n_s".parse::<SweepAxis>().unwrap(), SweepAxis::NS);
        assert!("T".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn sample_sweep_uses_nested_prefixes() {
        let r = sweep(&small(""), SweepAxis::NS, &[2.0, 4.0], 1.0).unwrap();
        let full = execute(&small("")).unwrap();
        assert_eq!(r.points[1].pz_mean, full.ensemble.pz_mean);
        assert_eq!(r.deviations.len(), 1);
    }
}
