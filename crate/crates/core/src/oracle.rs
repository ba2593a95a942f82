//! Reference dynamics: exact propagation in a truncated Fock basis for baths
//! of a few modes, and the closed-form two-level limit.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::ansatz::{MultiDState, Observables};
use crate::eom::uniform_grid;
use crate::model::{DiscretizedBath, SystemParams};
use crate::sampler::{mean_and_stderr, sample_alpha, trajectory_rng, ThermalSampleConfig};
use crate::{Error, Result, C64};

pub const MAX_FOCK_MODES: usize = 4;
pub const MAX_FOCK_DIMENSION: usize = 200_000;
/// Poisson tail mass allowed beyond the truncation.
pub const TAIL_TOLERANCE: f64 = 1e-10;
/// Extra quanta added on top of the tail bound.
pub const SAFETY_MARGIN: usize = 5;
/// Largest Hilbert dimension for which [`FockMethod::Auto`] diagonalizes.
pub const DENSE_AUTO_LIMIT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FockMethod {
    #[default]
    Auto,
    /// Full diagonalization of the truncated Hamiltonian.
    Dense,
    /// Chebyshev expansion of the propagator.
    Chebyshev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockConfig {
    pub n_max: Vec<usize>,
    /// Output spacing; also the longest single propagation step.
    pub dt: f64,
    pub t_final: f64,
    pub method: FockMethod,
}

impl FockConfig {
    pub fn new(n_max: Vec<usize>, dt: f64, t_final: f64) -> Result<Self> {
        let cfg = Self {
            n_max,
            dt,
            t_final,
            method: FockMethod::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Truncation large enough for initial displacements `alpha` and the
    /// polaron shifts `lambda_l / omega_l` explored by the dynamics.
    pub fn auto(bath: &DiscretizedBath, alpha: &[C64], dt: f64, t_final: f64) -> Result<Self> {
        if alpha.len() != bath.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: bath.n_modes(),
                found: alpha.len(),
            });
        }
        let n_max = alpha
            .iter()
            .zip(bath.omegas.iter().zip(&bath.lambdas))
            .map(|(a, (w, l))| required_n_max(a.norm() + (l / w).abs(), TAIL_TOLERANCE) + SAFETY_MARGIN)
            .collect();
        Self::new(n_max, dt, t_final)
    }

    pub fn with_method(mut self, method: FockMethod) -> Self {
        self.method = method;
        self
    }

    pub fn n_modes(&self) -> usize {
        self.n_max.len()
    }

    /// `2 prod_l (n_max_l + 1)`.
    pub fn dimension(&self) -> usize {
        2 * self.n_max.iter().map(|n| n + 1).product::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max.is_empty() || self.n_max.len() > MAX_FOCK_MODES {
            return Err(Error::invalid(
                "n_modes",
                format!("between 1 and {MAX_FOCK_MODES} modes are supported, got {}", self.n_max.len()),
            ));
        }
        let dim = self
            .n_max
            .iter()
            .try_fold(2usize, |acc, n| acc.checked_mul(n + 1))
            .unwrap_or(usize::MAX);
        if dim > MAX_FOCK_DIMENSION {
            return Err(Error::invalid(
                "n_max",
                format!("Hilbert dimension {dim} exceeds {MAX_FOCK_DIMENSION}"),
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid("t_final", "must be >= 0"));
        }
        Ok(())
    }
}

/// `P(N > n)` for `N ~ Poisson(mu)`.
pub fn poisson_tail(mu: f64, n: usize) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    let ln_mu = mu.ln();
    let mut sum = 0.0;
    let mut k = n + 1;
    loop {
        let term = (-mu + k as f64 * ln_mu - ln_gamma(k as f64 + 1.0)).exp();
        sum += term;
        if (k as f64 > mu && term < 1e-18 * sum.max(1e-300)) || term == 0.0 && k as f64 > mu {
            break;
        }
        k += 1;
    }
    sum.min(1.0)
}

/// Smallest `n` whose Poisson tail beyond `n` at mean `radius^2` is below `tol`.
pub fn required_n_max(radius: f64, tol: f64) -> usize {
    let mu = radius * radius;
    let mut n = mu.floor() as usize;
    while poisson_tail(mu, n) >= tol {
        n += 1;
    }
    n
}

/// Spin-boson Hamiltonian in the basis `|sigma> (x) |n_1 ... n_L>`, with the
/// upper spin state first and mode 0 varying slowest.
pub struct FockHamiltonian {
    n_max: Vec<usize>,
    strides: Vec<usize>,
    dim_b: usize,
    occ: Vec<u16>,
    bath_energy: Vec<f64>,
    epsilon: f64,
    delta: f64,
    lambdas: Vec<f64>,
}

impl FockHamiltonian {
    pub fn new(sys: &SystemParams, bath: &DiscretizedBath, n_max: &[usize]) -> Result<Self> {
        if n_max.len() != bath.n_modes() {
            return Err(Error::DimensionMismatch {
                expected: bath.n_modes(),
                found: n_max.len(),
            });
        }
        let l = n_max.len();
        let mut strides = vec![1usize; l];
        for k in (0..l.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * (n_max[k + 1] + 1);
        }
        let dim_b = n_max.iter().map(|n| n + 1).product::<usize>();
        let mut occ = vec![0u16; dim_b * l];
        let mut bath_energy = vec![0.0; dim_b];
        for k in 0..dim_b {
            for m in 0..l {
                let n = (k / strides[m]) % (n_max[m] + 1);
                occ[k * l + m] = n as u16;
                bath_energy[k] += bath.omegas[m] * n as f64;
            }
        }
        Ok(Self {
            n_max: n_max.to_vec(),
            strides,
            dim_b,
            occ,
            bath_energy,
            epsilon: sys.epsilon,
            delta: sys.delta,
            lambdas: bath.lambdas.clone(),
        })
    }

    pub fn dimension(&self) -> usize {
        2 * self.dim_b
    }

    fn n_modes(&self) -> usize {
        self.n_max.len()
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        let d = self.dim_b;
        let l_count = self.n_modes();
        let (xu, xd) = x.split_at(d);
        let (yu, yd) = y.split_at_mut(d);
        let he = 0.5 * self.epsilon;
        let hd = 0.5 * self.delta;
        for k in 0..d {
            let e = self.bath_energy[k];
            yu[k] = xu[k] * (he + e) - xd[k] * hd;
            yd[k] = xd[k] * (e - he) - xu[k] * hd;
        }
        for m in 0..l_count {
            let stride = self.strides[m];
            let nm = self.n_max[m] as u16;
            let half = 0.5 * self.lambdas[m];
            if half == 0.0 {
                continue;
            }
            for k in 0..d {
                let n = self.occ[k * l_count + m];
                if n < nm {
                    let c = half * (n as f64 + 1.0).sqrt();
                    let kp = k + stride;
                    yu[kp] += xu[k] * c;
                    yu[k] += xu[kp] * c;
                    yd[kp] -= xd[k] * c;
                    yd[k] -= xd[kp] * c;
                }
            }
        }
    }

    /// Spectral bounds from Gershgorin discs.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let l_count = self.n_modes();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..self.dim_b {
            let mut r = 0.5 * self.delta.abs();
            for m in 0..l_count {
                let n = self.occ[k * l_count + m] as usize;
                let half = 0.5 * self.lambdas[m].abs();
                r += half * (n as f64).sqrt();
                if n < self.n_max[m] {
                    r += half * (n as f64 + 1.0).sqrt();
                }
            }
            for c in [self.bath_energy[k] + 0.5 * self.epsilon, self.bath_energy[k] - 0.5 * self.epsilon] {
                lo = lo.min(c - r);
                hi = hi.max(c + r);
            }
        }
        (lo, hi)
    }

    /// Dense real-symmetric matrix of `H`.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.dimension();
        let mut h = DMatrix::zeros(n, n);
        let mut e = vec![C64::default(); n];
        let mut col = vec![C64::default(); n];
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            for i in 0..n {
                h[(i, j)] = col[i].re;
            }
            e[j] = C64::default();
        }
        h
    }

    pub fn expectations(&self, psi: &[C64]) -> Observables {
        let d = self.dim_b;
        let up: f64 = psi[..d].iter().map(|z| z.norm_sqr()).sum();
        let down: f64 = psi[d..].iter().map(|z| z.norm_sqr()).sum();
        let mut hpsi = vec![C64::default(); psi.len()];
        self.apply(psi, &mut hpsi);
        let e: f64 = psi.iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).re).sum();
        let norm = up + down;
        Observables {
            norm,
            sigma_z: (up - down) / norm,
            energy: e / norm,
        }
    }
}

/// `J_0(x) ... J_n(x)` by Miller's backward recurrence normalized with
/// `J_0 + 2 sum_k J_2k = 1`.
pub fn bessel_j_sequence(x: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let top = n.max(x.abs().ceil() as usize);
    let start = 2 * ((top + 20 + (40.0 * top as f64).sqrt() as usize) / 2);
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-30;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in &mut j[k - 1..] {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = j[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * j[k];
    }
    for k in 0..=n {
        out[k] = j[k] / norm;
    }
    out
}

struct Chebyshev<'a> {
    h: &'a FockHamiltonian,
    center: f64,
    half_width: f64,
    phi0: Vec<C64>,
    phi1: Vec<C64>,
    phi2: Vec<C64>,
    acc: Vec<C64>,
}

impl<'a> Chebyshev<'a> {
    fn new(h: &'a FockHamiltonian) -> Self {
        let (lo, hi) = h.spectral_bounds();
        let n = h.dimension();
        Self {
            h,
            center: 0.5 * (hi + lo),
            half_width: (0.5 * (hi - lo)).max(1e-12),
            phi0: vec![C64::default(); n],
            phi1: vec![C64::default(); n],
            phi2: vec![C64::default(); n],
            acc: vec![C64::default(); n],
        }
    }

    /// `out = (H - c) x / a`
    fn scaled(&self, x: &[C64], out: &mut [C64]) {
        self.h.apply(x, out);
        let inv = 1.0 / self.half_width;
        for (o, v) in out.iter_mut().zip(x) {
            *o = (*o - v * self.center) * inv;
        }
    }

    /// `psi <- exp(-i H tau) psi`.
    fn step(&mut self, psi: &mut [C64], tau: f64) {
        if tau == 0.0 {
            return;
        }
        let x = self.half_width * tau;
        let n_terms = (1.5 * x + 40.0) as usize;
        let jk = bessel_j_sequence(x, n_terms);
        let last = jk
            .iter()
            .rposition(|v| v.abs() > 1e-17)
            .unwrap_or(0)
            .max(1);
        let mut phi0 = std::mem::take(&mut self.phi0);
        let mut phi1 = std::mem::take(&mut self.phi1);
        let mut phi2 = std::mem::take(&mut self.phi2);
        phi0.copy_from_slice(psi);
        self.scaled(&phi0, &mut phi1);
        // (-i)^k
        let phase = [C64::new(1.0, 0.0), C64::new(0.0, -1.0), C64::new(-1.0, 0.0), C64::new(0.0, 1.0)];
        let c1 = phase[1] * 2.0 * jk[1];
        for ((a, p0), p1) in self.acc.iter_mut().zip(&phi0).zip(&phi1) {
            *a = p0 * jk[0] + p1 * c1;
        }
        for k in 2..=last {
            self.scaled(&phi1, &mut phi2);
            let ck = phase[k % 4] * 2.0 * jk[k];
            for ((a, p2), p0) in self.acc.iter_mut().zip(phi2.iter_mut()).zip(&phi0) {
                *p2 = *p2 * 2.0 - p0;
                *a += *p2 * ck;
            }
            std::mem::swap(&mut phi0, &mut phi1);
            std::mem::swap(&mut phi1, &mut phi2);
        }
        let rot = C64::from_polar(1.0, -self.center * tau);
        for (p, a) in psi.iter_mut().zip(&self.acc) {
            *p = a * rot;
        }
        self.phi0 = phi0;
        self.phi1 = phi1;
        self.phi2 = phi2;
    }
}

/// Exact observables on an output grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FockResult {
    pub times: Vec<f64>,
    pub pz: Vec<f64>,
    pub norm: Vec<f64>,
    pub energy: Vec<f64>,
    pub n_max: Vec<usize>,
}

/// `prod_l |f_l>` truncated to `n_max`, mode 0 slowest.
pub fn coherent_fock_vector(f: &[C64], n_max: &[usize]) -> Result<Vec<C64>> {
    if f.len() != n_max.len() {
        return Err(Error::DimensionMismatch {
            expected: n_max.len(),
            found: f.len(),
        });
    }
    let mut v = vec![C64::new(1.0, 0.0)];
    for (a, &nm) in f.iter().zip(n_max) {
        let mut single = Vec::with_capacity(nm + 1);
        let mut c = C64::new((-0.5 * a.norm_sqr()).exp(), 0.0);
        for n in 0..=nm {
            if n > 0 {
                c *= a / (n as f64).sqrt();
            }
            single.push(c);
        }
        v = v
            .iter()
            .flat_map(|x| single.iter().map(move |y| x * y))
            .collect();
    }
    Ok(v)
}

/// Expands a multi-Davydov state in the truncated Fock basis.
pub fn multid_to_fock(state: &MultiDState, n_max: &[usize]) -> Result<Vec<C64>> {
    state.validate()?;
    let dim_b: usize = n_max.iter().map(|n| n + 1).product();
    let mut psi = vec![C64::default(); 2 * dim_b];
    for br in state.branches() {
        let v = coherent_fock_vector(br.phi, n_max)?;
        for (s, amp) in br.spin.iter().enumerate() {
            if *amp == C64::default() {
                continue;
            }
            for (p, x) in psi[s * dim_b..(s + 1) * dim_b].iter_mut().zip(&v) {
                *p += amp * x;
            }
        }
    }
    Ok(psi)
}

/// Norm, `<sigma_z>` and `<H>` of a Fock-basis vector.
pub fn fock_expectations(
    psi: &[C64],
    sys: &SystemParams,
    bath: &DiscretizedBath,
    n_max: &[usize],
) -> Result<Observables> {
    let h = FockHamiltonian::new(sys, bath, n_max)?;
    if psi.len() != h.dimension() {
        return Err(Error::DimensionMismatch {
            expected: h.dimension(),
            found: psi.len(),
        });
    }
    Ok(h.expectations(psi))
}

fn check_truncation(alpha: &[C64], n_max: &[usize]) -> Result<()> {
    for (mode, (a, &nm)) in alpha.iter().zip(n_max).enumerate() {
        if poisson_tail(a.norm_sqr(), nm) >= TAIL_TOLERANCE {
            return Err(Error::Truncation {
                mode,
                required: required_n_max(a.norm(), TAIL_TOLERANCE),
                actual: nm,
            });
        }
    }
    Ok(())
}

/// Propagates an arbitrary initial vector and records observables on `grid`.
pub fn fock_propagate_vector(
    sys: &SystemParams,
    bath: &DiscretizedBath,
    psi0: &[C64],
    n_max: &[usize],
    max_step: f64,
    method: FockMethod,
    grid: &[f64],
) -> Result<FockResult> {
    sys.validate()?;
    let h = FockHamiltonian::new(sys, bath, n_max)?;
    let n = h.dimension();
    if psi0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: psi0.len(),
        });
    }
    if grid.iter().any(|t| !(*t >= 0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("grid", "output times must be sorted and non-negative"));
    }
    let mut out = FockResult {
        n_max: n_max.to_vec(),
        ..Default::default()
    };
    let mut record = |t: f64, psi: &[C64]| {
        let obs = h.expectations(psi);
        out.times.push(t);
        out.pz.push(obs.sigma_z);
        out.norm.push(obs.norm);
        out.energy.push(obs.energy);
    };
    let dense = match method {
        FockMethod::Dense => true,
        FockMethod::Chebyshev => false,
        FockMethod::Auto => n <= DENSE_AUTO_LIMIT,
    };
    if dense {
        let eig = SymmetricEigen::new(h.dense());
        let v = eig.eigenvectors.map(|x| C64::new(x, 0.0));
        let c0 = v.adjoint() * nalgebra::DVector::from_column_slice(psi0);
        for &t in grid {
            let ct = nalgebra::DVector::from_iterator(
                n,
                c0.iter()
                    .zip(eig.eigenvalues.iter())
                    .map(|(c, e)| c * C64::from_polar(1.0, -e * t)),
            );
            let psi = &v * ct;
            record(t, psi.as_slice());
        }
    } else {
        let mut cheb = Chebyshev::new(&h);
        let mut psi = psi0.to_vec();
        let mut t = 0.0;
        for &target in grid {
            let span = target - t;
            if span > 0.0 {
                let steps = (span / max_step).ceil().max(1.0) as usize;
                let tau = span / steps as f64;
                for _ in 0..steps {
                    cheb.step(&mut psi, tau);
                }
                t = target;
            }
            record(target, &psi);
        }
    }
    Ok(out)
}

/// Exact `P_z(t)` for `|1> (x) |alpha>` on the grid `0, dt, ..., t_final`.
pub fn fock_propagate(
    sys: &SystemParams,
    bath: &DiscretizedBath,
    alpha: &[C64],
    cfg: &FockConfig,
) -> Result<FockResult> {
    fock_propagate_on(sys, bath, alpha, cfg, &uniform_grid(cfg.t_final, cfg.dt))
}

/// As [`fock_propagate`] with an explicit output grid.
pub fn fock_propagate_on(
    sys: &SystemParams,
    bath: &DiscretizedBath,
    alpha: &[C64],
    cfg: &FockConfig,
    grid: &[f64],
) -> Result<FockResult> {
    cfg.validate()?;
    if alpha.len() != cfg.n_modes() || bath.n_modes() != cfg.n_modes() {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_modes(),
            found: alpha.len(),
        });
    }
    check_truncation(alpha, &cfg.n_max)?;
    let bath_part = coherent_fock_vector(alpha, &cfg.n_max)?;
    let nrm = bath_part.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut psi0 = vec![C64::default(); 2 * bath_part.len()];
    for (p, v) in psi0.iter_mut().zip(&bath_part) {
        *p = v / nrm;
    }
    fock_propagate_vector(sys, bath, &psi0, &cfg.n_max, cfg.dt, cfg.method, grid)
}

/// `P_z(t) = (eps^2 + Delta^2 cos(Omega t)) / Omega^2` with
/// `Omega = sqrt(eps^2 + Delta^2)`; identically 1 when `Omega = 0`.
pub fn analytic_two_level(sys: &SystemParams, t: f64) -> f64 {
    let e2 = sys.epsilon * sys.epsilon;
    let d2 = sys.delta * sys.delta;
    let o2 = e2 + d2;
    if o2 == 0.0 {
        return 1.0;
    }
    (e2 + d2 * (o2.sqrt() * t).cos()) / o2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockEnsembleResult {
    pub times: Vec<f64>,
    pub pz_mean: Vec<f64>,
    pub pz_stderr: Vec<f64>,
    pub pz_samples: Vec<Vec<f64>>,
}

/// Exact thermal `P_z(t)` averaged over the same displacements that
/// [`crate::sampler::run_ensemble`] draws for `sampling`.
///
/// `template.n_max` is a lower bound; each sample is enlarged to
/// [`FockConfig::auto`] if needed. At zero temperature a single propagation is
/// performed.
pub fn thermal_fock_ensemble(
    sys: &SystemParams,
    bath: &DiscretizedBath,
    sampling: &ThermalSampleConfig,
    template: &FockConfig,
    grid: &[f64],
) -> Result<FockEnsembleResult> {
    let n = if sampling.is_zero_temperature() { 1 } else { sampling.n_s };
    let runs: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let alpha = sample_alpha(&mut trajectory_rng(sampling.master_seed, i as u64), sampling);
            let auto = FockConfig::auto(bath, &alpha, template.dt, template.t_final)?;
            let n_max = auto
                .n_max
                .iter()
                .zip(&template.n_max)
                .map(|(a, b)| *a.max(b))
                .collect();
            let cfg = FockConfig {
                n_max,
                ..template.clone()
            };
            Ok(fock_propagate_on(sys, bath, &alpha, &cfg, grid)?.pz)
        })
        .collect();
    let samples = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let (pz_mean, pz_stderr) = mean_and_stderr(&samples, grid.len());
    Ok(FockEnsembleResult {
        times: grid.to_vec(),
        pz_mean,
        pz_stderr,
        pz_samples: samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{observables, AnsatzVariant};
    use approx::assert_relative_eq;

    fn one_mode(omega: f64, lambda: f64) -> DiscretizedBath {
        DiscretizedBath::from_modes(vec![omega], vec![lambda]).unwrap()
    }

    #[test]
    fn bessel_values() {
        let j = bessel_j_sequence(1.0, 5);
        assert_relative_eq!(j[0], 0.765_197_686_557_966_6, max_relative = 1e-14);
        assert_relative_eq!(j[1], 0.440_050_585_744_933_5, max_relative = 1e-14);
        let j = bessel_j_sequence(10.0, 5);
        assert_relative_eq!(j[5], -0.234_061_528_186_793_66, max_relative = 1e-12);
        let j = bessel_j_sequence(120.0, 300);
        let s: f64 = j[0] * j[0] + 2.0 * j[1..].iter().map(|v| v * v).sum::<f64>();
        assert_relative_eq!(s, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn poisson_tail_examples() {
        assert_eq!(poisson_tail(0.0, 0), 0.0);
        assert_relative_eq!(poisson_tail(1.0, 0), 1.0 - (-1.0f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(poisson_tail(2.0, 1), 1.0 - 3.0 * (-2.0f64).exp(), max_relative = 1e-12);
        let n = required_n_max(1.0, 1e-10);
        assert!(poisson_tail(1.0, n) < 1e-10 && poisson_tail(1.0, n - 1) >= 1e-10);
    }

    #[test]
    fn two_level_examples() {
        let sys = SystemParams::new(0.0, 0.1).unwrap();
        assert_eq!(analytic_two_level(&sys, 0.0), 1.0);
        assert_relative_eq!(analytic_two_level(&sys, 10.0 * std::f64::consts::PI), -1.0, max_relative = 1e-14);
        let zero = SystemParams::new(0.0, 0.0).unwrap();
        assert_eq!(analytic_two_level(&zero, 3.7), 1.0);
    }

    #[test]
    fn decoupled_fock_matches_cosine() {
        let sys = SystemParams::new(0.0, 0.1).unwrap();
        let bath = DiscretizedBath::from_modes(vec![0.5, 1.3], vec![0.0, 0.0]).unwrap();
        let alpha = [C64::new(0.4, -0.2), C64::new(0.1, 0.3)];
        for method in [FockMethod::Dense, FockMethod::Chebyshev] {
            let cfg = FockConfig::auto(&bath, &alpha, 1.0, 40.0).unwrap().with_method(method);
            let r = fock_propagate(&sys, &bath, &alpha, &cfg).unwrap();
            for (t, p) in r.times.iter().zip(&r.pz) {
                assert!((p - (0.1 * t).cos()).abs() < 1e-9, "{method:?} t={t}");
            }
        }
    }

    #[test]
    fn pure_dephasing_conserves_population() {
        let sys = SystemParams::new(0.2, 0.0).unwrap();
        let bath = one_mode(0.7, 0.4);
        let alpha = [C64::new(0.3, 0.1)];
        let cfg = FockConfig::auto(&bath, &alpha, 0.5, 20.0).unwrap();
        let r = fock_propagate(&sys, &bath, &alpha, &cfg).unwrap();
        assert!(r.pz.iter().all(|p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn dense_and_chebyshev_agree_and_conserve() {
        let sys = SystemParams::new(0.1, 0.3).unwrap();
        let bath = DiscretizedBath::from_modes(vec![0.4, 1.1], vec![0.3, 0.5]).unwrap();
        let alpha = [C64::new(0.5, 0.2), C64::new(-0.3, 0.1)];
        let cfg = FockConfig::auto(&bath, &alpha, 0.7, 15.0).unwrap();
        let a = fock_propagate(&sys, &bath, &alpha, &cfg.clone().with_method(FockMethod::Dense)).unwrap();
        let b = fock_propagate(&sys, &bath, &alpha, &cfg.with_method(FockMethod::Chebyshev)).unwrap();
        for k in 0..a.pz.len() {
            assert!((a.pz[k] - b.pz[k]).abs() < 1e-10);
            assert!((b.norm[k] - b.norm[0]).abs() < 1e-10);
            assert!((b.energy[k] - b.energy[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn truncation_violation_reports_requirement() {
        let sys = SystemParams::new(0.0, 0.1).unwrap();
        let bath = one_mode(1.0, 0.1);
        let alpha = [C64::new(2.0, 0.0)];
        let cfg = FockConfig::new(vec![5], 0.1, 1.0).unwrap();
        match fock_propagate(&sys, &bath, &alpha, &cfg) {
            Err(Error::Truncation { required, actual, .. }) => {
                assert_eq!(actual, 5);
                assert!(required > 5);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_limits() {
        assert!(FockConfig::new(vec![10; 5], 0.1, 1.0).is_err());
        assert!(FockConfig::new(vec![100, 100, 100], 0.1, 1.0).is_err());
        assert_eq!(FockConfig::new(vec![3, 4], 0.1, 1.0).unwrap().dimension(), 40);
    }

    #[test]
    fn multid_expansion_matches_closed_forms() {
        let sys = SystemParams::new(0.15, 0.3).unwrap();
        let bath = one_mode(0.8, 0.35);
        let mut st = crate::ansatz::MultiDState::zeros(AnsatzVariant::D1, 2, 1);
        st.a = vec![C64::new(0.6, 0.1), C64::new(-0.2, 0.3)];
        st.b = vec![C64::new(0.1, -0.4), C64::new(0.25, 0.05)];
        st.f = vec![C64::new(0.3, -0.2), C64::new(-0.5, 0.4)];
        st.g = vec![C64::new(0.1, 0.6), C64::new(0.2, -0.1)];
        let psi = multid_to_fock(&st, &[20]).unwrap();
        let exact = fock_expectations(&psi, &sys, &bath, &[20]).unwrap();
        let ours = observables(&st, &sys, &bath).unwrap();
        assert!((exact.norm - ours.norm).abs() < 1e-10);
        assert!((exact.sigma_z - ours.sigma_z).abs() < 1e-10);
        assert!((exact.energy - ours.energy).abs() < 1e-10);
    }
}
