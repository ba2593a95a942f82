//! Time stepping of the variational parameters.

use serde::{Deserialize, Serialize};

use super::{
    params_into_tangent, projected_rhs, slot_map, solve_eom_with, tangent_into_params, IntegratorConfig, IntegratorScheme,
    LinearSolver, SolveReport, StructuredSolver, TangentMetric,
};
use crate::ansatz::{MultiDState, PairTables};
use crate::model::{DiscretizedBath, SystemParams};
use crate::{Error, Result, C64};

pub(crate) struct Workspace {
    state: MultiDState,
    rhs: Vec<C64>,
    u: Vec<C64>,
    du: Vec<C64>,
    ku: Vec<C64>,
    /// metric at the last evaluated point
    metric: Option<TangentMetric>,
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

impl Workspace {
    pub fn new(state: &MultiDState) -> Self {
        let dim = state.n_params();
        Self {
            state: state.clone(),
            rhs: vec![C64::default(); dim],
            u: vec![C64::default(); dim],
            du: vec![C64::default(); dim],
            ku: vec![C64::default(); dim],
            metric: None,
        }
    }

    /// Writes `dy/dt` for the canonical parameter vector `y`.
    pub fn derivative(
        &mut self,
        y: &[C64],
        dy: &mut [C64],
        sys: &SystemParams,
        bath: &DiscretizedBath,
        cfg: &IntegratorConfig,
    ) -> Result<SolveReport> {
        self.state.copy_from_slice(y)?;
        let state = &self.state;
        let branches = state.branches();
        let slots = slot_map(&branches);
        let tables = PairTables::build(&branches, sys, bath);
        let na = slots.len();
        {
            let (amp, disp) = self.rhs.split_at_mut(na);
            projected_rhs(&branches, &slots, &tables, sys, bath, amp, disp);
        }
        // b = -i rhs
        for v in self.rhs.iter_mut() {
            *v = C64::new(v.im, -v.re);
        }
        let b = &self.rhs;
        let bnorm = norm2(b);

        let mut report = SolveReport::default();
        let structured = match cfg.solver {
            LinearSolver::Structured if cfg.reg_eps > 0.0 => {
                StructuredSolver::new(TangentMetric::new(&branches, &slots, &tables), cfg.reg_eps).ok()
            }
            _ => None,
        };
        let mut solved = false;
        if let Some(solver) = &structured {
            report.condition = solver.condition;
            if solver.solve(b, &mut self.u).is_ok() {
                let residual = |u: &[C64], ku: &mut [C64]| {
                    solver.apply(u, ku);
                    for (k, bb) in ku.iter_mut().zip(b) {
                        *k = bb - *k;
                    }
                    let r = norm2(ku);
                    if bnorm > 0.0 {
                        r / bnorm
                    } else {
                        r
                    }
                };
                let mut res = residual(&self.u, &mut self.ku);
                while res > cfg.residual_tol && report.refinements < 8 {
                    if solver.solve(&self.ku, &mut self.du).is_err() {
                        break;
                    }
                    report.refinements += 1;
                    let prev: Vec<C64> = self.u.clone();
                    for (u, d) in self.u.iter_mut().zip(&self.du) {
                        *u += d;
                    }
                    let next = residual(&self.u, &mut self.ku);
                    if !(next < res) {
                        self.u.copy_from_slice(&prev);
                        residual(&self.u, &mut self.ku);
                        break;
                    }
                    res = next;
                }
                report.residual = res;
                solved = res <= cfg.residual_tol && self.u.iter().all(|v| v.is_finite());
            }
        }
        if !solved {
            let (metric, rhs) = super::assemble_eom(state, sys, bath)?;
            let (u, dense_report) = solve_eom_with(&metric, &rhs, cfg)?;
            self.u.copy_from_slice(u.as_slice());
            report = SolveReport {
                refinements: report.refinements + dense_report.refinements,
                ..dense_report
            };
        }
        tangent_into_params(&branches, &slots, state.n_b, &self.u, dy);
        self.metric = Some(match structured {
            Some(solver) => solver.into_metric(),
            None => TangentMetric::new(&branches, &slots, &tables),
        });
        Ok(report)
    }

    /// Norm of the state change produced by the parameter change `dy`,
    /// taken at the last evaluated point.
    pub fn state_change_norm(&mut self, dy: &[C64]) -> f64 {
        let metric = self.metric.as_ref().expect("derivative evaluated before");
        let branches = self.state.branches();
        let slots = slot_map(&branches);
        params_into_tangent(&branches, &slots, self.state.n_b, dy, &mut self.du);
        metric.norm_sqr(&self.du, &mut self.ku).sqrt()
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub dt: f64,
    pub rejected: usize,
    /// `|N(t) - N(0)| / N(0)`
    pub norm_drift: f64,
    /// `|E(t) - E(0)| / E_scale`, see [`TrajectoryResult::energy_scale`].
    pub energy_drift: f64,
    /// Largest condition estimate seen so far on this trajectory.
    pub condition: f64,
    /// Largest accepted solve residual so far.
    pub residual: f64,
    /// Whether any solve so far needed the pseudo-inverse.
    pub used_pinv: bool,
}

/// Observables of one trajectory on its output grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub pz: Vec<f64>,
    pub norm: Vec<f64>,
    pub energy: Vec<f64>,
    /// `max(|E(0)|, |eps|/2 + |Delta|/2 + sum_l lambda_l^2 / omega_l)`.
    pub energy_scale: f64,
    pub max_norm_drift: f64,
    pub max_energy_drift: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub pinv_fallbacks: usize,
    pub max_residual: f64,
    pub max_condition: f64,
}

// Dormand-Prince 5(4); row 6 doubles as the fifth-order weights (FSAL)
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Advances a single trajectory.
pub struct Propagator<'a> {
    sys: &'a SystemParams,
    bath: &'a DiscretizedBath,
    cfg: IntegratorConfig,
    ws: Workspace,
    template: MultiDState,
    y: Vec<C64>,
    t: f64,
    h: f64,
    k: Vec<Vec<C64>>,
    fsal: bool,
    tmp: Vec<C64>,
    err: Vec<C64>,
    norm0: f64,
    energy0: f64,
    energy_scale: f64,
    pub steps: usize,
    pub rejected: usize,
    pub pinv_fallbacks: usize,
    pub max_residual: f64,
    pub max_condition: f64,
}

impl<'a> Propagator<'a> {
    pub fn new(
        initial: &MultiDState,
        sys: &'a SystemParams,
        bath: &'a DiscretizedBath,
        cfg: IntegratorConfig,
    ) -> Result<Self> {
        initial.validate()?;
        cfg.validate()?;
        sys.validate()?;
        if bath.n_modes() != initial.n_b {
            return Err(Error::DimensionMismatch {
                expected: initial.n_b,
                found: bath.n_modes(),
            });
        }
        let obs = crate::ansatz::observables(initial, sys, bath)?;
        let dim = initial.n_params();
        let stages = match cfg.scheme {
            IntegratorScheme::Adaptive => 7,
            IntegratorScheme::Rk4 => 4,
        };
        let scale = 0.5 * sys.epsilon.abs() + 0.5 * sys.delta.abs() + bath.reorganization_sum();
        Ok(Self {
            sys,
            bath,
            cfg,
            ws: Workspace::new(initial),
            template: initial.clone(),
            y: initial.to_vec(),
            t: 0.0,
            h: cfg.dt,
            k: vec![vec![C64::default(); dim]; stages],
            fsal: false,
            tmp: vec![C64::default(); dim],
            err: vec![C64::default(); dim],
            norm0: obs.norm,
            energy0: obs.energy,
            energy_scale: obs.energy.abs().max(scale),
            steps: 0,
            rejected: 0,
            pinv_fallbacks: 0,
            max_residual: 0.0,
            max_condition: 0.0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn energy_scale(&self) -> f64 {
        self.energy_scale
    }

    pub fn state(&self) -> MultiDState {
        let mut s = self.template.clone();
        s.copy_from_slice(&self.y).expect("dimension fixed at construction");
        s
    }

    pub fn observables(&self) -> Result<crate::ansatz::Observables> {
        crate::ansatz::observables(&self.state(), self.sys, self.bath)
    }

    fn eval(&mut self, stage: usize, y_is_tmp: bool) -> Result<()> {
        let (sys, bath, cfg) = (self.sys, self.bath, self.cfg);
        let y = if y_is_tmp { &self.tmp } else { &self.y };
        let report = self
            .ws
            .derivative(y, &mut self.k[stage], sys, bath, &cfg)
            .map_err(|e| self.abort(e))?;
        self.max_residual = self.max_residual.max(report.residual);
        if report.condition.is_finite() {
            self.max_condition = self.max_condition.max(report.condition);
        }
        if report.used_pinv {
            self.pinv_fallbacks += 1;
        }
        Ok(())
    }

    fn abort(&self, e: Error) -> Error {
        match e {
            Error::SolverAbort {
                reason,
                condition,
                residual,
                ..
            } => Error::SolverAbort {
                t: self.t,
                reason,
                condition,
                residual,
            },
            other => Error::SolverAbort {
                t: self.t,
                reason: other.to_string(),
                condition: f64::NAN,
                residual: f64::NAN,
            },
        }
    }

    fn rk4_step(&mut self, h: f64) -> Result<()> {
        let dim = self.y.len();
        self.eval(0, false)?;
        for (stage, frac) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..dim {
                self.tmp[i] = self.y[i] + h * frac * self.k[stage - 1][i];
            }
            self.eval(stage, true)?;
        }
        for i in 0..dim {
            self.y[i] += h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        self.t += h;
        self.steps += 1;
        Ok(())
    }

    /// One accepted Dormand-Prince step no longer than `h_max`.
    fn dopri_step(&mut self, h_max: f64) -> Result<usize> {
        let dim = self.y.len();
        let (atol, rtol) = (self.cfg.tol_abs, self.cfg.tol_rel);
        if !self.fsal {
            self.eval(0, false)?;
            self.fsal = true;
        }
        let mut rejected = 0;
        loop {
            let h = self.h.min(h_max);
            if !(h > 1e-13 * (1.0 + self.t.abs())) {
                return Err(Error::SolverAbort {
                    t: self.t,
                    reason: format!("step size underflow (h = {h:e})"),
                    condition: self.max_condition,
                    residual: self.max_residual,
                });
            }
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = self.y[i];
                    for (j, a) in A[s].iter().take(s).enumerate() {
                        if *a != 0.0 {
                            acc += h * a * self.k[j][i];
                        }
                    }
                    self.tmp[i] = acc;
                }
                self.eval(s, true)?;
            }
            // stage 6 was evaluated at y_new (FSAL); tmp holds y_new
            for i in 0..dim {
                let mut e = C64::default();
                for (j, ej) in E.iter().enumerate() {
                    if *ej != 0.0 {
                        e += ej * self.k[j][i];
                    }
                }
                self.err[i] = h * e;
            }
            // local error measured on the state, not on the redundant parameters
            let err = self.ws.state_change_norm(&self.err) / (atol + rtol * self.norm0.sqrt());
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 && err.is_finite() {
                self.y.copy_from_slice(&self.tmp);
                self.k.swap(0, 6);
                self.t += h;
                self.steps += 1;
                // keep the natural step when the output grid clipped this one
                if h >= self.h {
                    self.h = h * factor;
                } else if factor < 1.0 {
                    self.h *= factor;
                }
                return Ok(rejected);
            }
            rejected += 1;
            self.rejected += 1;
            self.h = h * if err.is_finite() { factor.min(1.0) } else { 0.2 };
        }
    }

    /// Advances by one step (at most `h_max`) and reports diagnostics.
    pub fn step(&mut self, h_max: f64) -> Result<StepDiagnostics> {
        let t0 = self.t;
        let rejected = match self.cfg.scheme {
            IntegratorScheme::Rk4 => {
                self.rk4_step(self.cfg.dt.min(h_max))?;
                0
            }
            IntegratorScheme::Adaptive => self.dopri_step(h_max)?,
        };
        let obs = self.observables()?;
        Ok(StepDiagnostics {
            t: self.t,
            dt: self.t - t0,
            rejected,
            norm_drift: (obs.norm - self.norm0).abs() / self.norm0,
            energy_drift: (obs.energy - self.energy0).abs() / self.energy_scale,
            condition: self.max_condition,
            residual: self.max_residual,
            used_pinv: self.pinv_fallbacks > 0,
        })
    }

    /// Integrates up to exactly `t_target`.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        let eps = 1e-12 * (1.0 + t_target.abs());
        match self.cfg.scheme {
            IntegratorScheme::Rk4 => {
                let span = t_target - self.t;
                if span <= eps {
                    return Ok(());
                }
                let n = (span / self.cfg.dt - 1e-9).ceil().max(1.0) as usize;
                let h = span / n as f64;
                for _ in 0..n {
                    self.rk4_step(h)?;
                    if self.steps > self.cfg.max_steps {
                        return Err(self.abort(Error::Numerical("step budget exhausted".into())));
                    }
                }
                self.t = t_target;
            }
            IntegratorScheme::Adaptive => {
                while t_target - self.t > eps {
                    self.dopri_step(t_target - self.t)?;
                    if self.steps > self.cfg.max_steps {
                        return Err(self.abort(Error::Numerical("step budget exhausted".into())));
                    }
                }
                self.t = t_target;
            }
        }
        Ok(())
    }
}

/// Propagates `initial` and records `P_z`, norm and energy on `grid`.
///
/// `grid` must be non-decreasing, start at or after 0 and end at or before
/// `cfg.t_final`.
pub fn run_trajectory(
    initial: &MultiDState,
    sys: &SystemParams,
    bath: &DiscretizedBath,
    cfg: &IntegratorConfig,
    grid: &[f64],
) -> Result<TrajectoryResult> {
    let tol = 1e-9 * (1.0 + cfg.t_final);
    if grid.iter().any(|t| !(*t >= 0.0 && *t <= cfg.t_final + tol)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid(
            "grid",
            format!("output times must be sorted within [0, {}]", cfg.t_final),
        ));
    }
    let mut prop = Propagator::new(initial, sys, bath, *cfg)?;
    let mut out = TrajectoryResult {
        energy_scale: prop.energy_scale,
        ..Default::default()
    };
    for &t in grid {
        prop.advance_to(t)?;
        let obs = prop.observables().map_err(|e| prop.abort(e))?;
        out.times.push(t);
        out.pz.push(obs.sigma_z);
        out.norm.push(obs.norm);
        out.energy.push(obs.energy);
        out.max_norm_drift = out.max_norm_drift.max((obs.norm - prop.norm0).abs() / prop.norm0);
        out.max_energy_drift = out
            .max_energy_drift
            .max((obs.energy - prop.energy0).abs() / prop.energy_scale);
    }
    out.steps = prop.steps;
    out.rejected_steps = prop.rejected;
    out.pinv_fallbacks = prop.pinv_fallbacks;
    out.max_residual = prop.max_residual;
    out.max_condition = prop.max_condition;
    Ok(out)
}

/// Uniform grid `0, dt, 2 dt, ...` up to and including `t_final`.
pub fn uniform_grid(t_final: f64, dt: f64) -> Vec<f64> {
    let n = (t_final / dt + 1e-9).floor() as usize;
    let mut g: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    if let Some(last) = g.last() {
        if t_final - last > 1e-9 * (1.0 + t_final) {
            g.push(t_final);
        }
    }
    g
}
