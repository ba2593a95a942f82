//! Spin-boson Hamiltonian parameters, the power-law spectral density and its
//! equal-weight discretization into `n_b` bath modes.
//!
//! The discretization places mode `l` where the cumulative density
//! `Xi(w) = J(w) / (Gamma * w)` reaches `l`, so every mode carries the same
//! share `Gamma` of the (truncated) reorganization energy and
//! `lambda_l^2 = Gamma * omega_l` holds identically.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_li};

use crate::quad::{integrate, QuadTolerance};
use crate::{Error, Result, C64};

/// Two-level system constants, in units of `omega_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Energy bias `epsilon` (coefficient of `sigma_z / 2`).
    pub epsilon: f64,
    /// Tunneling `Delta` (coefficient of `-sigma_x / 2`).
    pub delta: f64,
}

impl SystemParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let p = Self { epsilon, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() {
            return Err(Error::invalid("epsilon", "must be finite"));
        }
        if !self.delta.is_finite() {
            return Err(Error::invalid("delta", "must be finite"));
        }
        Ok(())
    }
}

/// Parameters of `J(w) = 2 alpha omega_c^(1-s) w^s exp(-w / omega_c)` and of
/// its discretization on `[0, omega_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensityParams {
    pub s: f64,
    pub alpha: f64,
    pub omega_c: f64,
    pub omega_max: f64,
    pub n_b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BathClass {
    SubOhmic,
    Ohmic,
    SuperOhmic,
}

impl SpectralDensityParams {
    pub const DEFAULT_OMEGA_MAX: f64 = 10.0;

    /// `omega_c = 1`, `omega_max = 10 omega_c`.
    pub fn new(s: f64, alpha: f64, n_b: usize) -> Result<Self> {
        let p = Self {
            s,
            alpha,
            omega_c: 1.0,
            omega_max: Self::DEFAULT_OMEGA_MAX,
            n_b,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_omega_max(mut self, omega_max: f64) -> Result<Self> {
        self.omega_max = omega_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::invalid("s", format!("must be > 0, got {}", self.s)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be >= 0, got {}", self.alpha)));
        }
        if !(self.omega_c > 0.0 && self.omega_c.is_finite()) {
            return Err(Error::invalid("omega_c", format!("must be > 0, got {}", self.omega_c)));
        }
        if !(self.omega_max > 0.0 && self.omega_max.is_finite()) {
            return Err(Error::invalid(
                "omega_max",
                format!("must be > 0, got {}", self.omega_max),
            ));
        }
        if self.n_b == 0 {
            return Err(Error::invalid("n_b", "must be at least 1"));
        }
        Ok(())
    }

    pub fn class(&self) -> BathClass {
        if self.s < 1.0 {
            BathClass::SubOhmic
        } else if self.s == 1.0 {
            BathClass::Ohmic
        } else {
            BathClass::SuperOhmic
        }
    }

    fn is_ohmic(&self) -> bool {
        self.s == 1.0
    }
}

/// Discrete bath: mode frequencies and linear couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedBath {
    pub omegas: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Per-mode share of the truncated reorganization energy.
    pub gamma_norm: f64,
}

impl DiscretizedBath {
    /// Builds a bath from explicit modes. `gamma_norm` is set to the mean of
    /// `lambda_l^2 / omega_l`.
    pub fn from_modes(omegas: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        if omegas.len() != lambdas.len() {
            return Err(Error::DimensionMismatch {
                expected: omegas.len(),
                found: lambdas.len(),
            });
        }
        if omegas.is_empty() {
            return Err(Error::invalid("omegas", "at least one mode is required"));
        }
        if let Some(w) = omegas.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("omegas", format!("frequencies must be > 0, got {w}")));
        }
        if let Some(l) = lambdas.iter().find(|l| !l.is_finite()) {
            return Err(Error::invalid("lambdas", format!("couplings must be finite, got {l}")));
        }
        let gamma_norm =
            omegas.iter().zip(&lambdas).map(|(w, l)| l * l / w).sum::<f64>() / omegas.len() as f64;
        Ok(Self {
            omegas,
            lambdas,
            gamma_norm,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.omegas.len()
    }

    /// `sum_l lambda_l^2 / omega_l`.
    pub fn reorganization_sum(&self) -> f64 {
        self.omegas
            .iter()
            .zip(&self.lambdas)
            .map(|(w, l)| l * l / w)
            .sum()
    }

    /// Discrete counterpart of [`bath_correlation`]:
    /// `sum_l lambda_l^2 [coth(beta w_l / 2) cos(w_l t) - i sin(w_l t)]`.
    pub fn correlation(&self, t: f64, beta: f64) -> C64 {
        self.omegas
            .iter()
            .zip(&self.lambdas)
            .map(|(&w, &l)| {
                let (sin, cos) = (w * t).sin_cos();
                l * l * C64::new(coth_half(beta, w) * cos, -sin)
            })
            .sum()
    }
}

/// `coth(beta w / 2)`, with `beta = inf` giving 1.
fn coth_half(beta: f64, w: f64) -> f64 {
    if beta.is_infinite() {
        return 1.0;
    }
    let x = 0.5 * beta * w;
    if x > 20.0 {
        1.0
    } else {
        1.0 / x.tanh()
    }
}

/// `w coth(beta w / 2)`, finite as `w -> 0`.
fn w_coth_half(beta: f64, w: f64) -> f64 {
    if beta.is_infinite() {
        return w;
    }
    let x = 0.5 * beta * w;
    let x_coth_x = if x < 1e-4 {
        1.0 + x * x / 3.0
    } else if x > 20.0 {
        x
    } else {
        x / x.tanh()
    };
    2.0 * x_coth_x / beta
}

/// `J(omega)`.
pub fn spectral_density(omega: f64, p: &SpectralDensityParams) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::Domain(format!("spectral density needs omega >= 0, got {omega}")));
    }
    Ok(density_unchecked(omega, p))
}

fn density_unchecked(omega: f64, p: &SpectralDensityParams) -> f64 {
    if omega == 0.0 {
        return 0.0;
    }
    2.0 * p.alpha * p.omega_c.powf(1.0 - p.s) * omega.powf(p.s) * (-omega / p.omega_c).exp()
}

const CUMULATIVE_TOL: QuadTolerance = QuadTolerance {
    abs: 1e-15,
    rel: 1e-14,
    max_intervals: 500,
};

/// `int_0^{x} y^(s-1) e^(-y) dy` by quadrature after substituting `u = y^s`,
/// which removes the endpoint singularity for `s < 1`.
fn lower_gamma_quadrature(s: f64, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let inv_s = 1.0 / s;
    let (v, _) = integrate(|u: f64| (-u.powf(inv_s)).exp(), 0.0, x.powf(s), CUMULATIVE_TOL)?;
    Ok(v * inv_s)
}

/// `int_0^omega J(w) / w dw`, by adaptive quadrature.
pub fn cumulative_density(omega: f64, p: &SpectralDensityParams) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::Domain(format!("cumulative density needs omega >= 0, got {omega}")));
    }
    Ok(2.0 * p.alpha * p.omega_c * lower_gamma_quadrature(p.s, omega / p.omega_c)?)
}

/// `int_0^omega J(w) / w dw` through the lower incomplete gamma function.
pub fn cumulative_density_incomplete_gamma(omega: f64, p: &SpectralDensityParams) -> f64 {
    2.0 * p.alpha * p.omega_c * gamma_li(p.s, omega / p.omega_c)
}

/// `Gamma_{omega_max} = (1/n_b) int_0^{omega_max} J(w)/w dw`.
pub fn gamma_norm(p: &SpectralDensityParams) -> Result<f64> {
    p.validate()?;
    let nb = p.n_b as f64;
    if p.is_ohmic() {
        return Ok(2.0 * p.alpha * p.omega_c / nb * (-(-p.omega_max / p.omega_c).exp_m1()));
    }
    Ok(cumulative_density(p.omega_max, p)? / nb)
}

/// `E_r = int_0^inf J(w)/w dw = 2 alpha omega_c Gamma(s)`.
pub fn reorganization_energy(p: &SpectralDensityParams) -> f64 {
    2.0 * p.alpha * p.omega_c * gamma(p.s)
}

/// How mode frequencies are obtained from the cumulative density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencySolver {
    /// Closed form for `s = 1`, bisection otherwise.
    #[default]
    Auto,
    /// Always bisect the quadrature-evaluated cumulative density.
    Bisection,
}

/// Ohmic (`s = 1`) frequencies in closed form:
/// `omega_l = -omega_c ln(1 - l Gamma / (2 alpha omega_c))`.
///
/// Written in the alpha-free form `-omega_c ln(1 - (l/n_b)(1 - e^{-omega_max/omega_c}))`
/// so the frequencies stay defined at `alpha = 0`.
pub fn ohmic_frequencies(p: &SpectralDensityParams) -> Vec<f64> {
    let nb = p.n_b as f64;
    let tail = -(-p.omega_max / p.omega_c).exp_m1();
    (1..=p.n_b)
        .map(|l| {
            if l == p.n_b {
                p.omega_max
            } else {
                -p.omega_c * (-(l as f64 / nb) * tail).ln_1p()
            }
        })
        .collect()
}

fn bisect_frequencies(p: &SpectralDensityParams) -> Result<Vec<f64>> {
    // The target fractions are alpha-independent, so work with the unit-coupling
    // cumulative  F(w) = gamma_l(s, w/omega_c) / gamma_l(s, omega_max/omega_c).
    let x_max = p.omega_max / p.omega_c;
    let total = lower_gamma_quadrature(p.s, x_max)?;
    let nb = p.n_b as f64;
    let mut omegas = Vec::with_capacity(p.n_b);
    let mut lo = 0.0f64;
    for l in 1..=p.n_b {
        if l == p.n_b {
            omegas.push(p.omega_max);
            break;
        }
        let target = total * l as f64 / nb;
        let mut a = lo;
        let mut b = x_max;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if lower_gamma_quadrature(p.s, mid)? < target {
                a = mid;
            } else {
                b = mid;
            }
        }
        let x = 0.5 * (a + b);
        if !(x > lo) && l > 1 {
            return Err(Error::Numerical(format!(
                "frequency bisection produced a non-increasing node at l = {l}"
            )));
        }
        lo = x;
        omegas.push(x * p.omega_c);
    }
    Ok(omegas)
}

/// Discretizes `J` into `n_b` modes with `int_0^{omega_l} Xi = l`.
pub fn discretize_bath(p: &SpectralDensityParams) -> Result<DiscretizedBath> {
    discretize_bath_with(p, FrequencySolver::Auto)
}

pub fn discretize_bath_with(p: &SpectralDensityParams, solver: FrequencySolver) -> Result<DiscretizedBath> {
    p.validate()?;
    let gamma_norm = gamma_norm(p)?;
    let omegas = match solver {
        FrequencySolver::Auto if p.is_ohmic() => ohmic_frequencies(p),
        _ => bisect_frequencies(p)?,
    };
    let lambdas = omegas.iter().map(|w| (gamma_norm * w).sqrt()).collect();
    Ok(DiscretizedBath {
        omegas,
        lambdas,
        gamma_norm,
    })
}

/// Continuum bath correlation function
/// `C(t) = int_0^inf J(w) [coth(beta w/2) cos(w t) - i sin(w t)] dw`.
///
/// `beta = f64::INFINITY` selects zero temperature.
pub fn bath_correlation(t: f64, p: &SpectralDensityParams, beta: f64) -> Result<C64> {
    p.validate()?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("correlation needs t >= 0, got {t}")));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("correlation needs beta > 0, got {beta}")));
    }
    if p.alpha == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let wc = p.omega_c;
    let tol = QuadTolerance {
        abs: 1e-13,
        rel: 1e-11,
        max_intervals: 4000,
    };
    // [0, omega_c] in u = (w/omega_c)^s, where J(w) dw = (2 alpha omega_c / s) w e^{-w/omega_c} du.
    let inv_s = 1.0 / p.s;
    let pref = 2.0 * p.alpha * wc * inv_s;
    let low = |part: fn(f64, f64, f64) -> f64| {
        integrate(
            move |u: f64| {
                let w = wc * u.powf(inv_s);
                (-w / wc).exp() * part(w, t, beta)
            },
            0.0,
            1.0,
            tol,
        )
    };
    let re_low = low(|w, t, beta| w_coth_half(beta, w) * (w * t).cos())?;
    let im_low = low(|w, t, _| w * (w * t).sin())?;
    let w_end = 80.0 * wc;
    let re_high = integrate(
        |w| density_unchecked(w, p) * coth_half(beta, w) * (w * t).cos(),
        wc,
        w_end,
        tol,
    )?;
    let im_high = integrate(|w| density_unchecked(w, p) * (w * t).sin(), wc, w_end, tol)?;
    Ok(C64::new(pref * re_low.0 + re_high.0, -(pref * im_low.0 + im_high.0)))
}
