//! Dirac-Frenkel equations of motion for multi-Davydov trial states.
//!
//! The time derivative of a trial state lies in the span of the tangent
//! vectors `|sigma>|phi_j>` (one per amplitude) and
//! `c_j (b_l^dag - conj(phi_jl)) |phi_j>` (one per displacement). In these
//! centered coordinates the metric only involves displacement differences
//! `phi_i - phi_j`, which keeps it well scaled for large thermal
//! displacements. The coordinates map back to parameter derivatives through
//! `dc/dt = x - i c Im(phi^dag dphi/dt)` (see [`tangent_to_derivative`]).
//!
//! Unknown ordering is canonical: `A_1..A_M, B_1..B_M`, then displacement
//! rows by branch (`f_1..f_M`, then `g_1..g_M` for D1).

mod integrate;
mod structured;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::ansatz::{Branch, MultiDState, PairTables};
use crate::model::{DiscretizedBath, SystemParams};
use crate::{Error, Result, C64};

pub use integrate::{run_trajectory, uniform_grid, Propagator, StepDiagnostics, TrajectoryResult};
pub(crate) use structured::{StructuredSolver, TangentMetric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorScheme {
    /// Classical fixed-step RK4 with step `dt`.
    Rk4,
    /// Dormand-Prince 5(4) with error control; `dt` is the initial step.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearSolver {
    /// Low-rank elimination exploiting the coherent-state structure.
    Structured,
    /// Dense Hermitian solve of the full metric.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: IntegratorScheme,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Tikhonov strength relative to `trace(metric) / K`.
    pub reg_eps: f64,
    /// Relative eigenvalue cut for the pseudo-inverse fallback.
    pub pinv_threshold: f64,
    /// Relative residual above which the regularized solution is refined and
    /// finally replaced by the pseudo-inverse one.
    pub residual_tol: f64,
    /// Relative residual above which a trajectory is aborted.
    pub residual_cap: f64,
    pub solver: LinearSolver,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_final: 50.0,
            scheme: IntegratorScheme::Adaptive,
            tol_abs: 1e-12,
            tol_rel: 1e-10,
            reg_eps: 1e-10,
            pinv_threshold: 1e-12,
            residual_tol: 1e-8,
            residual_cap: 1e-4,
            solver: LinearSolver::Structured,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("integrator.dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::invalid(
                "integrator.t_final",
                format!("must be >= 0, got {}", self.t_final),
            ));
        }
        if !(self.reg_eps >= 0.0) {
            return Err(Error::invalid("integrator.reg_eps", "must be >= 0"));
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::invalid("integrator.tol_rel", "tolerances must be > 0"));
        }
        if !(self.residual_tol > 0.0 && self.residual_cap >= self.residual_tol) {
            return Err(Error::invalid(
                "integrator.residual_cap",
                "need 0 < residual_tol <= residual_cap",
            ));
        }
        Ok(())
    }
}

/// Time derivatives of all variational parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalDerivative {
    pub da: Vec<C64>,
    pub db: Vec<C64>,
    pub df: Vec<C64>,
    /// Empty for D2.
    pub dg: Vec<C64>,
}

impl VariationalDerivative {
    pub fn to_vec(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.da.len() + self.db.len() + self.df.len() + self.dg.len());
        v.extend_from_slice(&self.da);
        v.extend_from_slice(&self.db);
        v.extend_from_slice(&self.df);
        v.extend_from_slice(&self.dg);
        v
    }
}

/// How a linear solve was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveReport {
    /// Relative residual `|K u - b| / |b|` of the accepted solution.
    pub residual: f64,
    pub refinements: usize,
    pub used_pinv: bool,
    /// `lambda_max / lambda_min` of the matrix that governed the solve
    /// (full metric for dense, branch Gram matrix for structured).
    pub condition: f64,
}

/// Maps an amplitude slot (canonical amplitude index) to `(branch, sector)`.
pub(crate) fn slot_map(branches: &[Branch<'_>]) -> Vec<(usize, usize)> {
    let n_slots = branches
        .iter()
        .flat_map(|b| b.slots.iter().flatten())
        .count();
    let mut map = vec![(0, 0); n_slots];
    for (j, b) in branches.iter().enumerate() {
        for (sigma, slot) in b.slots.iter().enumerate() {
            if let Some(k) = slot {
                map[*k] = (j, sigma);
            }
        }
    }
    map
}

fn check_inputs(state: &MultiDState, bath: &DiscretizedBath) -> Result<()> {
    state.validate()?;
    if bath.n_modes() != state.n_b {
        return Err(Error::DimensionMismatch {
            expected: state.n_b,
            found: bath.n_modes(),
        });
    }
    Ok(())
}

/// Right-hand sides `<tangent|H|D>` for amplitude slots and displacement rows.
pub(crate) fn projected_rhs(
    branches: &[Branch<'_>],
    slots: &[(usize, usize)],
    t: &PairTables,
    sys: &SystemParams,
    bath: &DiscretizedBath,
    amp: &mut [C64],
    disp: &mut [C64],
) {
    let n = branches.len();
    let nb = bath.n_modes();
    let half_delta = 0.5 * sys.delta;
    for (k, &(i, sigma)) in slots.iter().enumerate() {
        let mut acc = C64::default();
        for (j, bj) in branches.iter().enumerate() {
            let ij = i * n + j;
            acc += t.s[ij] * (t.diag[ij][sigma] * bj.spin[sigma] - half_delta * bj.spin[1 - sigma]);
        }
        amp[k] = acc;
    }
    for (i, bi) in branches.iter().enumerate() {
        let row = &mut disp[i * nb..(i + 1) * nb];
        row.iter_mut().for_each(|v| *v = C64::default());
        for (j, bj) in branches.iter().enumerate() {
            let ij = i * n + j;
            let h = t.h[ij];
            let zl = 0.5 * t.s[ij] * t.spin_z[ij];
            let ow = t.s[ij] * t.spin_ov[ij];
            for l in 0..nb {
                row[l] += (bj.phi[l] - bi.phi[l]) * h + zl * bath.lambdas[l] + ow * bath.omegas[l] * bj.phi[l];
            }
        }
    }
}

/// Dense Dirac-Frenkel system in centered tangent coordinates.
///
/// Returns the Hermitian metric `K` and `rhs = <d_u D|H|D>`, such that the
/// coordinate velocities solve `K u = -i rhs`.
pub fn assemble_eom(
    state: &MultiDState,
    sys: &SystemParams,
    bath: &DiscretizedBath,
) -> Result<(DMatrix<C64>, DVector<C64>)> {
    check_inputs(state, bath)?;
    let branches = state.branches();
    let slots = slot_map(&branches);
    let t = PairTables::build(&branches, sys, bath);
    let n = branches.len();
    let nb = state.n_b;
    let na = slots.len();
    let dim = state.n_params();
    debug_assert_eq!(dim, na + n * nb);
    let mut k = DMatrix::<C64>::zeros(dim, dim);
    let disp = |j: usize, l: usize| na + j * nb + l;

    for (r, &(i, sigma)) in slots.iter().enumerate() {
        for (c, &(j, tau)) in slots.iter().enumerate() {
            if sigma == tau {
                k[(r, c)] = t.s[i * n + j];
            }
        }
        for (j, bj) in branches.iter().enumerate() {
            let s = t.s[i * n + j] * bj.spin[sigma];
            for l in 0..nb {
                let v = (branches[i].phi[l] - bj.phi[l]).conj() * s;
                k[(r, disp(j, l))] = v;
                k[(disp(j, l), r)] = v.conj();
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let p = t.spin_ov[i * n + j] * t.s[i * n + j];
            if p == C64::default() {
                continue;
            }
            for l in 0..nb {
                let dl = branches[i].phi[l] - branches[j].phi[l];
                for kk in 0..nb {
                    let dk = branches[i].phi[kk] - branches[j].phi[kk];
                    let delta = if l == kk { 1.0 } else { 0.0 };
                    k[(disp(i, l), disp(j, kk))] = p * (C64::new(delta, 0.0) - dk.conj() * dl);
                }
            }
        }
    }
    let mut amp = vec![C64::default(); na];
    let mut dsp = vec![C64::default(); n * nb];
    projected_rhs(&branches, &slots, &t, sys, bath, &mut amp, &mut dsp);
    let rhs = DVector::from_iterator(dim, amp.into_iter().chain(dsp));
    Ok((k, rhs))
}

fn relative_residual(metric: &DMatrix<C64>, u: &DVector<C64>, b: &DVector<C64>) -> f64 {
    let bn = b.norm();
    if bn == 0.0 {
        return (metric * u).norm();
    }
    (metric * u - b).norm() / bn
}

/// Solves `(K + reg I) u = -i rhs` with `reg = reg_eps * trace(K) / dim`,
/// refining against the unregularized `K` and falling back to an
/// eigenvalue-thresholded pseudo-inverse when the residual stays above
/// `residual_tol`.
pub fn solve_eom(
    metric: &DMatrix<C64>,
    rhs: &DVector<C64>,
    reg_eps: f64,
) -> Result<(DVector<C64>, SolveReport)> {
    let cfg = IntegratorConfig {
        reg_eps,
        ..IntegratorConfig::default()
    };
    solve_eom_with(metric, rhs, &cfg)
}

pub fn solve_eom_with(
    metric: &DMatrix<C64>,
    rhs: &DVector<C64>,
    cfg: &IntegratorConfig,
) -> Result<(DVector<C64>, SolveReport)> {
    let dim = metric.nrows();
    if metric.ncols() != dim || rhs.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rhs.len(),
        });
    }
    let b = rhs.map(|v| C64::new(v.im, -v.re)); // -i rhs
    let trace: f64 = (0..dim).map(|i| metric[(i, i)].re).sum();
    let reg = cfg.reg_eps * trace / dim.max(1) as f64;
    let mut report = SolveReport::default();

    let mut shifted = metric.clone();
    for i in 0..dim {
        shifted[(i, i)] += reg;
    }
    if let Some(chol) = shifted.cholesky() {
        let mut u = chol.solve(&b);
        let mut res = relative_residual(metric, &u, &b);
        while res.is_finite() && res > cfg.residual_tol && report.refinements < 8 {
            let r = &b - metric * &u;
            let next_u = &u + chol.solve(&r);
            let next = relative_residual(metric, &next_u, &b);
            if !(next < res) {
                break;
            }
            report.refinements += 1;
            u = next_u;
            res = next;
        }
        if res <= cfg.residual_tol {
            report.residual = res;
            report.condition = condition_estimate(metric);
            return Ok((u, report));
        }
    }

    let (u, cond) = pinv_solve(metric, &b, cfg.pinv_threshold);
    report.used_pinv = true;
    report.condition = cond;
    report.residual = relative_residual(metric, &u, &b);
    if !(report.residual <= cfg.residual_cap) {
        return Err(Error::SolverAbort {
            t: f64::NAN,
            reason: "metric too ill-conditioned for the projected right-hand side".into(),
            condition: cond,
            residual: report.residual,
        });
    }
    Ok((u, report))
}

fn condition_estimate(metric: &DMatrix<C64>) -> f64 {
    if metric.nrows() > 400 {
        return f64::NAN;
    }
    let eig = SymmetricEigen::new(metric.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Minimum-norm solution keeping eigenvalues above `threshold * lambda_max`.
pub(crate) fn pinv_solve(metric: &DMatrix<C64>, b: &DVector<C64>, threshold: f64) -> (DVector<C64>, f64) {
    let eig = SymmetricEigen::new(metric.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cut = threshold * max;
    let mut u = DVector::<C64>::zeros(b.len());
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cut {
            let v = eig.eigenvectors.column(idx);
            let coeff = v.dotc(b) / lambda;
            u.axpy(coeff, &v, C64::new(1.0, 0.0));
        }
    }
    let min_all = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let cond = if min_all <= 0.0 { f64::INFINITY } else { max / min_all };
    (u, cond)
}

/// Converts centered tangent coordinates `u` into parameter derivatives.
pub fn tangent_to_derivative(state: &MultiDState, u: &[C64]) -> Result<VariationalDerivative> {
    state.validate()?;
    if u.len() != state.n_params() {
        return Err(Error::DimensionMismatch {
            expected: state.n_params(),
            found: u.len(),
        });
    }
    let mut out = vec![C64::default(); u.len()];
    let branches = state.branches();
    let slots = slot_map(&branches);
    tangent_into_params(&branches, &slots, state.n_b, u, &mut out);
    let m = state.m;
    let fl = m * state.n_b;
    Ok(VariationalDerivative {
        da: out[..m].to_vec(),
        db: out[m..2 * m].to_vec(),
        df: out[2 * m..2 * m + fl].to_vec(),
        dg: out[2 * m + fl..].to_vec(),
    })
}

pub(crate) fn tangent_into_params(
    branches: &[Branch<'_>],
    slots: &[(usize, usize)],
    nb: usize,
    u: &[C64],
    out: &mut [C64],
) {
    let na = slots.len();
    let phases: Vec<f64> = branches
        .iter()
        .enumerate()
        .map(|(j, b)| crate::ansatz::dotc(b.phi, &u[na + j * nb..na + (j + 1) * nb]).im)
        .collect();
    for (k, &(j, sigma)) in slots.iter().enumerate() {
        let c = branches[j].spin[sigma];
        out[k] = u[k] - C64::new(0.0, phases[j]) * c;
    }
    out[na..].copy_from_slice(&u[na..]);
}

/// Inverse of [`tangent_into_params`].
pub(crate) fn params_into_tangent(
    branches: &[Branch<'_>],
    slots: &[(usize, usize)],
    nb: usize,
    dy: &[C64],
    out: &mut [C64],
) {
    let na = slots.len();
    let phases: Vec<f64> = branches
        .iter()
        .enumerate()
        .map(|(j, b)| crate::ansatz::dotc(b.phi, &dy[na + j * nb..na + (j + 1) * nb]).im)
        .collect();
    for (k, &(j, sigma)) in slots.iter().enumerate() {
        let c = branches[j].spin[sigma];
        out[k] = dy[k] + C64::new(0.0, phases[j]) * c;
    }
    out[na..].copy_from_slice(&dy[na..]);
}

/// Parameter derivatives of `state` using the configured linear solver.
pub fn variational_derivative(
    state: &MultiDState,
    sys: &SystemParams,
    bath: &DiscretizedBath,
    cfg: &IntegratorConfig,
) -> Result<(VariationalDerivative, SolveReport)> {
    check_inputs(state, bath)?;
    let mut ws = integrate::Workspace::new(state);
    let y = state.to_vec();
    let mut dy = vec![C64::default(); y.len()];
    let report = ws.derivative(&y, &mut dy, sys, bath, cfg)?;
    let m = state.m;
    let fl = m * state.n_b;
    Ok((
        VariationalDerivative {
            da: dy[..m].to_vec(),
            db: dy[m..2 * m].to_vec(),
            df: dy[2 * m..2 * m + fl].to_vec(),
            dg: dy[2 * m + fl..].to_vec(),
        },
        report,
    ))
}
