//! Structured solve of the regularized Dirac-Frenkel system.
//!
//! With `P_ij = (c_i^dag c_j) <phi_i|phi_j>` and `d_ij = phi_i - phi_j`, the
//! displacement block of the metric is
//! `P_ij (delta_lk - conj(d_ij,k) d_ij,l)`: a Kronecker product with the
//! identity plus rank-one corrections along the pair differences. Eliminating
//! the displacement velocities through `(P + reg)^{-1}` leaves a dense system
//! in the amplitude coordinates and the pair projections
//! `y_ij = d_ij^dag dphi_j / dt`, of size `n_slots + n_branches^2`,
//! independent of the number of bath modes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::ansatz::{dotc, Branch, PairTables};
use crate::{Error, Result, C64};

/// Matrix-free action of the tangent metric.
pub(crate) struct TangentMetric {
    n: usize,
    nb: usize,
    slots: Vec<(usize, usize)>,
    /// slot index for each (branch, sector)
    slot_of: Vec<[Option<usize>; 2]>,
    spin: Vec<[C64; 2]>,
    s: Vec<C64>,
    p: Vec<C64>,
    /// branch displacements relative to their mean, row-major `n x nb`
    psi: Vec<C64>,
}

impl TangentMetric {
    pub fn new(branches: &[Branch<'_>], slots: &[(usize, usize)], tables: &PairTables) -> Self {
        let n = branches.len();
        let nb = branches[0].phi.len();
        let mut slot_of = vec![[None, None]; n];
        for (k, &(j, sigma)) in slots.iter().enumerate() {
            slot_of[j][sigma] = Some(k);
        }
        let spin: Vec<[C64; 2]> = branches.iter().map(|b| b.spin).collect();
        let s = tables.s.clone();
        let p: Vec<C64> = tables.s.iter().zip(&tables.spin_ov).map(|(a, b)| a * b).collect();
        let mut mean = vec![C64::default(); nb];
        for b in branches {
            for (m, v) in mean.iter_mut().zip(b.phi) {
                *m += v;
            }
        }
        let inv_n = 1.0 / n as f64;
        mean.iter_mut().for_each(|m| *m *= inv_n);
        let mut psi = Vec::with_capacity(n * nb);
        for b in branches {
            psi.extend(b.phi.iter().zip(&mean).map(|(v, m)| v - m));
        }
        Self {
            n,
            nb,
            slots: slots.to_vec(),
            slot_of,
            spin,
            s,
            p,
            psi,
        }
    }

    fn psi_row(&self, i: usize) -> &[C64] {
        &self.psi[i * self.nb..(i + 1) * self.nb]
    }

    /// `u^dag K u`, the squared norm of the state change along `u`.
    pub fn norm_sqr(&self, u: &[C64], scratch: &mut [C64]) -> f64 {
        self.apply(u, scratch);
        crate::ansatz::dotc(u, scratch).re.max(0.0)
    }

    #[inline]
    fn w(&self, i: usize, j: usize, y: C64, x: &[C64]) -> C64 {
        let n = self.n;
        let mut w = self.p[i * n + j] * y;
        for sigma in 0..2 {
            if let Some(k) = self.slot_of[j][sigma] {
                w += self.spin[i][sigma].conj() * self.s[i * n + j] * x[k];
            }
        }
        w
    }

    /// `K u` with the unregularized metric.
    pub fn apply(&self, u: &[C64], out: &mut [C64]) {
        let (n, nb) = (self.n, self.nb);
        let na = self.slots.len();
        let x = &u[..na];
        let fdot = &u[na..];
        // V_pj = psi_p^dag fdot_j ; y_ij = V_ij - V_jj
        let mut v = vec![C64::default(); n * n];
        for p in 0..n {
            for j in 0..n {
                v[p * n + j] = dotc(self.psi_row(p), &fdot[j * nb..(j + 1) * nb]);
            }
        }
        let y = |i: usize, j: usize| v[i * n + j] - v[j * n + j];
        for (k, &(i, sigma)) in self.slots.iter().enumerate() {
            let mut acc = C64::default();
            for j in 0..n {
                let s = self.s[i * n + j];
                if let Some(kk) = self.slot_of[j][sigma] {
                    acc += s * x[kk];
                }
                acc += self.spin[j][sigma] * s * y(i, j);
            }
            out[k] = acc;
        }
        let disp = &mut out[na..];
        disp.iter_mut().for_each(|d| *d = C64::default());
        for i in 0..n {
            let oi = i * nb;
            let mut wsum = C64::default();
            for j in 0..n {
                let pij = self.p[i * n + j];
                let oj = j * nb;
                if pij != C64::default() {
                    for l in 0..nb {
                        disp[oi + l] += pij * fdot[oj + l];
                    }
                }
                let w = self.w(i, j, y(i, j), x);
                if w == C64::default() {
                    continue;
                }
                wsum += w;
                for l in 0..nb {
                    disp[oi + l] += w * self.psi[oj + l];
                }
            }
            for l in 0..nb {
                disp[oi + l] -= wsum * self.psi[oi + l];
            }
        }
    }
}

pub(crate) struct StructuredSolver {
    metric: TangentMetric,
    q: DMatrix<C64>,
    reduced: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    pub condition: f64,
}

impl StructuredSolver {
    pub fn new(metric: TangentMetric, reg_eps: f64) -> Result<Self> {
        let (n, nb) = (metric.n, metric.nb);
        let slots = &metric.slots;
        let na = slots.len();
        let dim = na + n * nb;
        let (slot_of, spin, s, p, psi) = (&metric.slot_of, &metric.spin, &metric.s, &metric.p, &metric.psi);

        let trace = na as f64 + nb as f64 * (0..n).map(|i| p[i * n + i].re).sum::<f64>();
        let reg = reg_eps * trace / dim as f64;

        let mut pt = DMatrix::<C64>::from_fn(n, n, |i, j| p[i * n + j]);
        let eig = SymmetricEigen::new(pt.clone());
        let lmax = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let lmin = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        let condition = (lmax + reg) / (lmin.max(0.0) + reg).max(f64::MIN_POSITIVE);
        for i in 0..n {
            pt[(i, i)] += reg;
        }
        let q = pt
            .try_inverse()
            .ok_or_else(|| Error::Numerical("branch Gram matrix is singular".into()))?;

        let mut gram = vec![C64::default(); n * n];
        for a in 0..n {
            for b in a..n {
                let v = dotc(&psi[a * nb..(a + 1) * nb], &psi[b * nb..(b + 1) * nb]);
                gram[a * n + b] = v;
                gram[b * n + a] = v.conj();
            }
        }

        let nr = na + n * n;
        let yidx = |i: usize, j: usize| na + i * n + j;
        let mut m = DMatrix::<C64>::zeros(nr, nr);
        for (k, &(i, sigma)) in slots.iter().enumerate() {
            for (kk, &(j, tau)) in slots.iter().enumerate() {
                if sigma == tau {
                    m[(k, kk)] += s[i * n + j];
                }
            }
            m[(k, k)] += reg;
            for j in 0..n {
                m[(k, yidx(i, j))] += spin[j][sigma] * s[i * n + j];
            }
        }
        for a in 0..n {
            for b in 0..n {
                let r = yidx(a, b);
                m[(r, r)] += C64::new(1.0, 0.0);
                if a == b {
                    continue;
                }
                for i in 0..n {
                    let qbi = q[(b, i)];
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let g = qbi * (gram[a * n + i] - gram[a * n + j] - gram[b * n + i] + gram[b * n + j]);
                        if g == C64::default() {
                            continue;
                        }
                        m[(r, yidx(i, j))] -= g * p[i * n + j];
                        for sigma in 0..2 {
                            if let Some(kk) = slot_of[j][sigma] {
                                m[(r, kk)] -= g * spin[i][sigma].conj() * s[i * n + j];
                            }
                        }
                    }
                }
            }
        }
        Ok(Self {
            metric,
            q,
            reduced: m.lu(),
            condition,
        })
    }

    /// Solves `(K + reg I) u = b`; `b` and `u` in canonical ordering.
    pub fn solve(&self, b: &[C64], u: &mut [C64]) -> Result<()> {
        let mt = &self.metric;
        let (n, nb) = (mt.n, mt.nb);
        let na = mt.slots.len();
        let b_disp = &b[na..];
        // U_pi = psi_p^dag B_i
        let mut upsi = vec![C64::default(); n * n];
        for p in 0..n {
            for i in 0..n {
                upsi[p * n + i] = dotc(mt.psi_row(p), &b_disp[i * nb..(i + 1) * nb]);
            }
        }
        let nr = na + n * n;
        let mut rhs = DVector::<C64>::zeros(nr);
        for k in 0..na {
            rhs[k] = b[k];
        }
        for a in 0..n {
            for bb in 0..n {
                if a == bb {
                    continue;
                }
                let mut acc = C64::default();
                for i in 0..n {
                    acc += self.q[(bb, i)] * (upsi[a * n + i] - upsi[bb * n + i]);
                }
                rhs[na + a * n + bb] = acc;
            }
        }
        let z = self
            .reduced
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("reduced Dirac-Frenkel system is singular".into()))?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite solution of the reduced system".into()));
        }
        u[..na].copy_from_slice(&z.as_slice()[..na]);

        // G_i = B_i + sum_j w_ij (psi_i - psi_j)
        let mut g = b_disp.to_vec();
        for i in 0..n {
            let mut wsum = C64::default();
            for j in 0..n {
                let w = mt.w(i, j, z[na + i * n + j], &z.as_slice()[..na]);
                if w == C64::default() {
                    continue;
                }
                wsum += w;
                let (gi, pj) = (i * nb, j * nb);
                for l in 0..nb {
                    g[gi + l] -= w * mt.psi[pj + l];
                }
            }
            let gi = i * nb;
            for l in 0..nb {
                g[gi + l] += wsum * mt.psi[gi + l];
            }
        }
        let out = &mut u[na..];
        out.iter_mut().for_each(|v| *v = C64::default());
        for bb in 0..n {
            for i in 0..n {
                let q = self.q[(bb, i)];
                let (ob, gi) = (bb * nb, i * nb);
                for l in 0..nb {
                    out[ob + l] += q * g[gi + l];
                }
            }
        }
        Ok(())
    }

    /// `K u` with the unregularized metric.
    pub fn apply(&self, u: &[C64], out: &mut [C64]) {
        self.metric.apply(u, out);
    }

    pub fn into_metric(self) -> TangentMetric {
        self.metric
    }
}
