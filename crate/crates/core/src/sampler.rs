//! Thermal initial conditions in the coherent-state representation and Monte
//! Carlo ensemble averages.
//!
//! The thermal bath density matrix is diagonal in coherent states with weight
//! `p(alpha) = prod_l (e^{beta w_l} - 1)/pi exp(-|alpha_l|^2 (e^{beta w_l} - 1))`,
//! i.e. independent Gaussians for `Re alpha_l` and `Im alpha_l` with
//! `2 sigma_l^2 = 1/(e^{beta w_l} - 1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{initial_state, AnsatzVariant};
use crate::eom::{run_trajectory, IntegratorConfig, TrajectoryResult};
use crate::model::{DiscretizedBath, SystemParams};
use crate::{Error, Result, C64};

/// Largest tolerated fraction of aborted trajectories.
pub const MAX_ABORT_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalSampleConfig {
    /// `1 / (k_B T)`; `f64::INFINITY` for zero temperature.
    pub beta: f64,
    pub n_s: usize,
    /// Half-width of the uniform noise added to every initial displacement.
    pub noise_amp: f64,
    pub master_seed: u64,
    pub omegas: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl ThermalSampleConfig {
    /// `temperature` is `k_B T` in units of `omega_c`; 0 selects the
    /// zero-temperature (vacuum) bath.
    pub fn new(temperature: f64, bath: &DiscretizedBath, n_s: usize, noise_amp: f64, master_seed: u64) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::invalid("temperature", format!("must be >= 0, got {temperature}")));
        }
        let beta = if temperature == 0.0 { f64::INFINITY } else { 1.0 / temperature };
        Self::with_beta(beta, bath, n_s, noise_amp, master_seed)
    }

    pub fn with_beta(beta: f64, bath: &DiscretizedBath, n_s: usize, noise_amp: f64, master_seed: u64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be > 0, got {beta}")));
        }
        if n_s == 0 {
            return Err(Error::invalid("n_s", "at least one sample is required"));
        }
        if !(noise_amp >= 0.0 && noise_amp.is_finite()) {
            return Err(Error::invalid("noise_amp", "must be a finite value >= 0"));
        }
        Ok(Self {
            beta,
            n_s,
            noise_amp,
            master_seed,
            omegas: bath.omegas.clone(),
            sigmas: bath.omegas.iter().map(|w| sigma_for_mode(beta, *w)).collect(),
        })
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.beta.is_infinite()
    }
}

/// Bose occupation `1 / (e^{beta w} - 1)`.
pub fn bose_occupation(beta: f64, omega: f64) -> f64 {
    if beta.is_infinite() {
        return 0.0;
    }
    1.0 / (beta * omega).exp_m1()
}

/// `sigma_l = sqrt(1 / (2 (e^{beta w_l} - 1)))`.
pub fn sigma_for_mode(beta: f64, omega: f64) -> f64 {
    (0.5 * bose_occupation(beta, omega)).sqrt()
}

/// Independent random stream for trajectory `index`: the master seed keys a
/// ChaCha20 generator and the index selects its stream, so draws do not
/// depend on scheduling.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// `alpha_l = x_l + i p_l` with `x_l, p_l ~ N(0, sigma_l^2)`.
pub fn sample_alpha<R: Rng + ?Sized>(rng: &mut R, cfg: &ThermalSampleConfig) -> Vec<C64> {
    cfg.sigmas
        .iter()
        .map(|&s| {
            let x: f64 = rng.sample(StandardNormal);
            let p: f64 = rng.sample(StandardNormal);
            C64::new(s * x, s * p)
        })
        .collect()
}

/// Uniform noise in `[-amp, amp]` on real and imaginary parts, `m x n_b` row-major.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, m: usize, n_b: usize, amp: f64) -> Vec<C64> {
    (0..m * n_b)
        .map(|_| {
            let re: f64 = rng.random::<f64>();
            let im: f64 = rng.random::<f64>();
            C64::new(amp * (2.0 * re - 1.0), amp * (2.0 * im - 1.0))
        })
        .collect()
}

/// `ln p(alpha; beta)`. Finite for `beta w_l` up to a few hundred.
pub fn log_density(alpha: &[C64], cfg: &ThermalSampleConfig) -> Result<f64> {
    if cfg.is_zero_temperature() {
        return Err(Error::Domain("the zero-temperature density is a delta function".into()));
    }
    if alpha.len() != cfg.omegas.len() {
        return Err(Error::DimensionMismatch {
            expected: cfg.omegas.len(),
            found: alpha.len(),
        });
    }
    let mut acc = 0.0;
    for (a, w) in alpha.iter().zip(&cfg.omegas) {
        let x = cfg.beta * w;
        // ln(e^x - 1)
        let log_em1 = if x > 30.0 { x + (-(-x).exp()).ln_1p() } else { x.exp_m1().ln() };
        acc += log_em1 - std::f64::consts::PI.ln();
        let r2 = a.norm_sqr();
        if r2 > 0.0 {
            acc -= r2 * log_em1.exp();
        }
    }
    Ok(acc)
}

/// `p(alpha; beta) = prod_l (e^{beta w_l} - 1)/pi exp(-|alpha_l|^2 (e^{beta w_l} - 1))`.
pub fn density(alpha: &[C64], cfg: &ThermalSampleConfig) -> Result<f64> {
    Ok(log_density(alpha, cfg)?.exp())
}

/// Trial-state family used for every sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub variant: AnsatzVariant,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub index: usize,
    pub norm_drift: f64,
    pub energy_drift: f64,
    pub steps: usize,
    pub pinv_fallbacks: usize,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub pz_mean: Vec<f64>,
    pub pz_stderr: Vec<f64>,
    /// Largest `|N(t) - N(0)| / N(0)` over completed trajectories, per time.
    pub norm_drift_max: Vec<f64>,
    /// Largest relative energy drift over completed trajectories, per time.
    pub energy_drift_max: Vec<f64>,
    pub trajectories: Vec<TrajectorySummary>,
    /// `P_z(t)` of each completed trajectory, in trajectory-index order.
    pub pz_samples: Vec<Vec<f64>>,
    pub n_effective: usize,
}

impl EnsembleResult {
    /// Mean and standard error over the first `n` completed trajectories.
    pub fn prefix_summary(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        mean_and_stderr(&self.pz_samples[..n.min(self.pz_samples.len())], self.times.len())
    }
}

/// Mean and standard error (sample standard deviation / sqrt(n)), reduced in
/// input order.
pub fn mean_and_stderr(samples: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len();
    let mut mean = vec![0.0; len];
    let mut se = vec![0.0; len];
    if n == 0 {
        return (vec![f64::NAN; len], vec![f64::NAN; len]);
    }
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    if n > 1 {
        for s in samples {
            for ((e, v), m) in se.iter_mut().zip(s).zip(&mean) {
                *e += (v - m) * (v - m);
            }
        }
        se.iter_mut()
            .for_each(|e| *e = (*e / (n as f64 - 1.0)).sqrt() / (n as f64).sqrt());
    }
    (mean, se)
}

/// Draws `(alpha, noise)` for trajectory `index`.
pub fn draw_initial(cfg: &ThermalSampleConfig, ansatz: AnsatzSpec, index: usize) -> (Vec<C64>, Vec<C64>) {
    let mut rng = trajectory_rng(cfg.master_seed, index as u64);
    let alpha = sample_alpha(&mut rng, cfg);
    let noise = sample_noise(&mut rng, ansatz.m, alpha.len(), cfg.noise_amp);
    (alpha, noise)
}

/// Runs one trajectory of the ensemble.
pub fn run_sample(
    sys: &SystemParams,
    bath: &DiscretizedBath,
    cfg: &ThermalSampleConfig,
    ansatz: AnsatzSpec,
    integ: &IntegratorConfig,
    grid: &[f64],
    index: usize,
) -> Result<TrajectoryResult> {
    let (alpha, noise) = draw_initial(cfg, ansatz, index);
    let init = initial_state(ansatz.variant, ansatz.m, &alpha, &noise)?;
    run_trajectory(&init, sys, bath, integ, grid)
}

/// Monte Carlo estimate of `P_z(t)` over `cfg.n_s` thermal samples.
///
/// Trajectories run on the current rayon pool; the reduction is in index
/// order, so the result does not depend on the number of threads.
pub fn run_ensemble(
    sys: &SystemParams,
    bath: &DiscretizedBath,
    cfg: &ThermalSampleConfig,
    ansatz: AnsatzSpec,
    integ: &IntegratorConfig,
    grid: &[f64],
) -> Result<EnsembleResult> {
    sys.validate()?;
    integ.validate()?;
    if ansatz.m == 0 {
        return Err(Error::invalid("ansatz.multiplicity", "must be at least 1"));
    }
    if cfg.omegas.len() != bath.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: bath.n_modes(),
            found: cfg.omegas.len(),
        });
    }
    let results: Vec<Result<TrajectoryResult>> = (0..cfg.n_s)
        .into_par_iter()
        .map(|i| run_sample(sys, bath, cfg, ansatz, integ, grid, i))
        .collect();

    let len = grid.len();
    let mut summaries = Vec::with_capacity(cfg.n_s);
    let mut samples = Vec::with_capacity(cfg.n_s);
    let mut norm_drift_max = vec![0.0f64; len];
    let mut energy_drift_max = vec![0.0f64; len];
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(traj) => {
                let (n0, e0) = (traj.norm[0], traj.energy[0]);
                for k in 0..len {
                    norm_drift_max[k] = norm_drift_max[k].max((traj.norm[k] - n0).abs() / n0);
                    energy_drift_max[k] =
                        energy_drift_max[k].max((traj.energy[k] - e0).abs() / traj.energy_scale);
                }
                summaries.push(TrajectorySummary {
                    index,
                    norm_drift: traj.max_norm_drift,
                    energy_drift: traj.max_energy_drift,
                    steps: traj.steps,
                    pinv_fallbacks: traj.pinv_fallbacks,
                    aborted: None,
                });
                samples.push(traj.pz);
            }
            Err(e @ Error::SolverAbort { .. }) => summaries.push(TrajectorySummary {
                index,
                norm_drift: f64::NAN,
                energy_drift: f64::NAN,
                steps: 0,
                pinv_fallbacks: 0,
                aborted: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    let aborted = cfg.n_s - samples.len();
    if aborted as f64 > MAX_ABORT_FRACTION * cfg.n_s as f64 {
        return Err(Error::AbortFraction {
            aborted,
            total: cfg.n_s,
            limit: 100.0 * MAX_ABORT_FRACTION,
        });
    }
    let (pz_mean, pz_stderr) = mean_and_stderr(&samples, len);
    Ok(EnsembleResult {
        times: grid.to_vec(),
        pz_mean,
        pz_stderr,
        norm_drift_max,
        energy_drift_max,
        trajectories: summaries,
        n_effective: samples.len(),
        pz_samples: samples,
    })
}
