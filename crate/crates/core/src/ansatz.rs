//! Multi-D1 / multi-D2 Davydov trial states and their coherent-state algebra.
//!
//! A trial state is a sum of "branches": each branch is a normalized bath
//! coherent state `|phi>` tensored with an electronic vector `c = (c_1, c_2)`.
//! Multi-D1 has `2M` branches (`A_n |1>|f_n>` and `B_n |2>|g_n>`), multi-D2 has
//! `M` branches (`(A_n |1> + B_n |2>) |f_n>`). Every expectation value below
//! is a double sum over branch pairs of a 2x2 electronic form times the bath
//! matrix element between two coherent states.

use serde::{Deserialize, Serialize};

use crate::model::{DiscretizedBath, SystemParams};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnsatzVariant {
    /// State-dependent displacements `f_n` (spin up) and `g_n` (spin down).
    D1,
    /// One displacement set `f_n` shared by both electronic states.
    D2,
}

impl std::fmt::Display for AnsatzVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AnsatzVariant::D1 => f.write_str("D1"),
            AnsatzVariant::D2 => f.write_str("D2"),
        }
    }
}

/// Variational parameters of a multi-Davydov state.
///
/// Displacements are stored row-major by branch: `f[n * n_b + l]`.
/// For D2 `g` is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiDState {
    pub variant: AnsatzVariant,
    pub m: usize,
    pub n_b: usize,
    pub a: Vec<C64>,
    pub b: Vec<C64>,
    pub f: Vec<C64>,
    pub g: Vec<C64>,
}

impl MultiDState {
    /// All parameters zero.
    pub fn zeros(variant: AnsatzVariant, m: usize, n_b: usize) -> Self {
        let zero = C64::new(0.0, 0.0);
        let g_len = match variant {
            AnsatzVariant::D1 => m * n_b,
            AnsatzVariant::D2 => 0,
        };
        Self {
            variant,
            m,
            n_b,
            a: vec![zero; m],
            b: vec![zero; m],
            f: vec![zero; m * n_b],
            g: vec![zero; g_len],
        }
    }

    /// Number of complex variational parameters.
    pub fn n_params(&self) -> usize {
        param_count(self.variant, self.m, self.n_b)
    }

    pub fn f_row(&self, n: usize) -> &[C64] {
        &self.f[n * self.n_b..(n + 1) * self.n_b]
    }

    pub fn g_row(&self, n: usize) -> &[C64] {
        match self.variant {
            AnsatzVariant::D1 => &self.g[n * self.n_b..(n + 1) * self.n_b],
            AnsatzVariant::D2 => self.f_row(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("m", "multiplicity must be at least 1"));
        }
        if self.n_b == 0 {
            return Err(Error::invalid("n_b", "at least one bath mode is required"));
        }
        let check = |len: usize, expected: usize| {
            if len != expected {
                Err(Error::DimensionMismatch { expected, found: len })
            } else {
                Ok(())
            }
        };
        check(self.a.len(), self.m)?;
        check(self.b.len(), self.m)?;
        check(self.f.len(), self.m * self.n_b)?;
        match self.variant {
            AnsatzVariant::D1 => check(self.g.len(), self.m * self.n_b)?,
            AnsatzVariant::D2 => check(self.g.len(), 0)?,
        }
        Ok(())
    }

    /// Flattens into the canonical parameter order:
    /// `A_1..A_M, B_1..B_M, f (row-major by branch), g (D1 only)`.
    pub fn to_vec(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.b);
        v.extend_from_slice(&self.f);
        v.extend_from_slice(&self.g);
        v
    }

    /// Overwrites the parameters from a vector in canonical order.
    pub fn copy_from_slice(&mut self, v: &[C64]) -> Result<()> {
        if v.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                found: v.len(),
            });
        }
        let m = self.m;
        let fl = m * self.n_b;
        self.a.copy_from_slice(&v[..m]);
        self.b.copy_from_slice(&v[m..2 * m]);
        self.f.copy_from_slice(&v[2 * m..2 * m + fl]);
        let g_len = self.g.len();
        self.g.copy_from_slice(&v[2 * m + fl..2 * m + fl + g_len]);
        Ok(())
    }

    pub(crate) fn branches(&self) -> Vec<Branch<'_>> {
        let zero = C64::new(0.0, 0.0);
        let m = self.m;
        match self.variant {
            AnsatzVariant::D1 => (0..m)
                .map(|n| Branch {
                    phi: self.f_row(n),
                    spin: [self.a[n], zero],
                    slots: [Some(n), None],
                })
                .chain((0..m).map(|n| Branch {
                    phi: self.g_row(n),
                    spin: [zero, self.b[n]],
                    slots: [None, Some(m + n)],
                }))
                .collect(),
            AnsatzVariant::D2 => (0..m)
                .map(|n| Branch {
                    phi: self.f_row(n),
                    spin: [self.a[n], self.b[n]],
                    slots: [Some(n), Some(m + n)],
                })
                .collect(),
        }
    }
}

pub(crate) fn param_count(variant: AnsatzVariant, m: usize, n_b: usize) -> usize {
    match variant {
        AnsatzVariant::D1 => 2 * m + 2 * m * n_b,
        AnsatzVariant::D2 => 2 * m + m * n_b,
    }
}

/// One coherent-state term of a trial state.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Branch<'a> {
    pub phi: &'a [C64],
    /// Electronic amplitudes on `|1>` and `|2>`.
    pub spin: [C64; 2],
    /// Canonical amplitude-parameter index for each electronic component the
    /// branch is allowed to occupy.
    pub slots: [Option<usize>; 2],
}

/// `sum_l conj(x_l) y_l`.
#[inline]
pub(crate) fn dotc(x: &[C64], y: &[C64]) -> C64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (a, b) in x.iter().zip(y) {
        re += a.re * b.re + a.im * b.im;
        im += a.re * b.im - a.im * b.re;
    }
    C64::new(re, im)
}

/// `<f_n | f_m>` for normalized coherent states, evaluated as
/// `exp(-|f_n - f_m|^2 / 2 + i Im(f_n^dag f_m))`.
pub(crate) fn overlap_unchecked(fn_: &[C64], fm: &[C64]) -> C64 {
    let mut dist = 0.0;
    let mut im = 0.0;
    for (a, b) in fn_.iter().zip(fm) {
        let d = a - b;
        dist += d.norm_sqr();
        im += a.re * b.im - a.im * b.re;
    }
    C64::from_polar((-0.5 * dist).exp(), im)
}

/// Overlap of two normalized multi-mode coherent states:
/// `exp(sum_l [conj(f_nl) f_ml - |f_nl|^2/2 - |f_ml|^2/2])`.
pub fn coherent_overlap(fn_: &[C64], fm: &[C64]) -> Result<C64> {
    if fn_.len() != fm.len() {
        return Err(Error::DimensionMismatch {
            expected: fn_.len(),
            found: fm.len(),
        });
    }
    Ok(overlap_unchecked(fn_, fm))
}

/// Branch-pair tables shared by observables and the equations of motion.
pub(crate) struct PairTables {
    /// `<phi_i|phi_j>`
    pub s: Vec<C64>,
    /// `c_i^dag c_j`
    pub spin_ov: Vec<C64>,
    /// `c_i^dag sigma_z c_j`
    pub spin_z: Vec<C64>,
    /// `<c_i phi_i| H |c_j phi_j>`
    pub h: Vec<C64>,
    /// Bath-dressed diagonal electronic energies `eps/2 z + z W_c/2 + W_b`
    /// for sector 1 and 2 (without the overlap factor).
    pub diag: Vec<[C64; 2]>,
}

impl PairTables {
    pub fn build(branches: &[Branch<'_>], sys: &SystemParams, bath: &DiscretizedBath) -> Self {
        let n = branches.len();
        let mut t = PairTables {
            s: vec![C64::default(); n * n],
            spin_ov: vec![C64::default(); n * n],
            spin_z: vec![C64::default(); n * n],
            h: vec![C64::default(); n * n],
            diag: vec![[C64::default(); 2]; n * n],
        };
        let half_eps = 0.5 * sys.epsilon;
        let half_delta = 0.5 * sys.delta;
        for i in 0..n {
            let bi = &branches[i];
            for j in 0..n {
                let bj = &branches[j];
                let k = i * n + j;
                let s = if i == j { C64::new(1.0, 0.0) } else { overlap_unchecked(bi.phi, bj.phi) };
                // W_c = sum lambda (conj(phi_i) + phi_j), W_b = sum omega conj(phi_i) phi_j
                let mut wc = C64::default();
                let mut wb = C64::default();
                for l in 0..bi.phi.len() {
                    let pi = bi.phi[l].conj();
                    let pj = bj.phi[l];
                    wc += bath.lambdas[l] * (pi + pj);
                    wb += bath.omegas[l] * (pi * pj);
                }
                let up = half_eps + 0.5 * wc + wb;
                let down = -half_eps - 0.5 * wc + wb;
                let [ci1, ci2] = bi.spin;
                let [cj1, cj2] = bj.spin;
                let ov = ci1.conj() * cj1 + ci2.conj() * cj2;
                let z = ci1.conj() * cj1 - ci2.conj() * cj2;
                let x = ci1.conj() * cj2 + ci2.conj() * cj1;
                t.s[k] = s;
                t.spin_ov[k] = ov;
                t.spin_z[k] = z;
                t.diag[k] = [up, down];
                t.h[k] = s * (ci1.conj() * cj1 * up + ci2.conj() * cj2 * down - half_delta * x);
            }
        }
        t
    }

    pub fn norm(&self) -> f64 {
        self.s.iter().zip(&self.spin_ov).map(|(s, o)| s * o).sum::<C64>().re
    }

    pub fn sigma_z(&self) -> f64 {
        self.s.iter().zip(&self.spin_z).map(|(s, o)| s * o).sum::<C64>().re
    }

    pub fn energy(&self) -> f64 {
        self.h.iter().sum::<C64>().re
    }
}

fn check_bath(state: &MultiDState, bath: &DiscretizedBath) -> Result<()> {
    state.validate()?;
    if bath.n_modes() != state.n_b {
        return Err(Error::DimensionMismatch {
            expected: state.n_b,
            found: bath.n_modes(),
        });
    }
    Ok(())
}

fn bath_free_tables(state: &MultiDState) -> PairTables {
    let zeros = vec![0.0; state.n_b];
    let bath = DiscretizedBath {
        omegas: zeros.clone(),
        lambdas: zeros,
        gamma_norm: 0.0,
    };
    PairTables::build(&state.branches(), &SystemParams { epsilon: 0.0, delta: 0.0 }, &bath)
}

/// `<D|D>`.
pub fn norm(state: &MultiDState) -> Result<f64> {
    state.validate()?;
    Ok(bath_free_tables(state).norm())
}

/// `<D|sigma_z|D> / <D|D>`.
pub fn expect_sigma_z(state: &MultiDState) -> Result<f64> {
    state.validate()?;
    let t = bath_free_tables(state);
    let n = t.norm();
    if !(n > 1e-300) {
        return Err(Error::DegenerateState { norm: n });
    }
    Ok(t.sigma_z() / n)
}

/// `<D|H|D> / <D|D>` for the full spin-boson Hamiltonian.
pub fn expect_energy(state: &MultiDState, sys: &SystemParams, bath: &DiscretizedBath) -> Result<f64> {
    check_bath(state, bath)?;
    let t = PairTables::build(&state.branches(), sys, bath);
    let n = t.norm();
    if !(n > 1e-300) {
        return Err(Error::DegenerateState { norm: n });
    }
    Ok(t.energy() / n)
}

/// Observables of one state, evaluated in a single pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub norm: f64,
    pub sigma_z: f64,
    pub energy: f64,
}

pub fn observables(state: &MultiDState, sys: &SystemParams, bath: &DiscretizedBath) -> Result<Observables> {
    check_bath(state, bath)?;
    let t = PairTables::build(&state.branches(), sys, bath);
    let n = t.norm();
    if !(n > 1e-300) {
        return Err(Error::DegenerateState { norm: n });
    }
    Ok(Observables {
        norm: n,
        sigma_z: t.sigma_z() / n,
        energy: t.energy() / n,
    })
}

/// Initial condition for one thermal sample: `A_1 = 1`, all other amplitudes
/// zero, and `f_nl = g_nl = alpha_l + noise[n][l]`.
///
/// `noise` is row-major `m x n_b`; pass an empty slice for no noise.
pub fn initial_state(variant: AnsatzVariant, m: usize, alpha: &[C64], noise: &[C64]) -> Result<MultiDState> {
    if m == 0 {
        return Err(Error::invalid("m", "multiplicity must be at least 1"));
    }
    let n_b = alpha.len();
    if n_b == 0 {
        return Err(Error::invalid("alpha", "at least one bath mode is required"));
    }
    if !noise.is_empty() && noise.len() != m * n_b {
        return Err(Error::DimensionMismatch {
            expected: m * n_b,
            found: noise.len(),
        });
    }
    let mut state = MultiDState::zeros(variant, m, n_b);
    state.a[0] = C64::new(1.0, 0.0);
    for n in 0..m {
        for l in 0..n_b {
            let eps = noise.get(n * n_b + l).copied().unwrap_or_default();
            state.f[n * n_b + l] = alpha[l] + eps;
        }
    }
    if variant == AnsatzVariant::D1 {
        state.g.copy_from_slice(&state.f);
    }
    Ok(state)
}
