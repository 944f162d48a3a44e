//! Method of moving asymptotes.
//!
//! Each call to [`MmaState::step`] builds the separable convex approximation
//! around the current point and solves
//!
//! ```text
//! min  f̃0(x) + Σ (c y_i + ½ d y_i²)
//! s.t. f̃i(x) − y_i ≤ 0,   α ≤ x ≤ β,   y ≥ 0
//! ```
//!
//! where the artificial `y` keep every subproblem feasible. The problem is
//! separable, so it is solved through its dual: for fixed multipliers each
//! `x_j` has a closed form, and the concave dual in the `m` multipliers is
//! maximized by projected Newton.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

const ASYMIN: f64 = 1e-5;
const MAX_DUAL_ITER: usize = 200;
/// Largest dual step relative to the current multiplier magnitude.
const MAX_DUAL_STEP: f64 = 1e4;
const LINE_SEARCH_EVALS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmaSettings {
    /// Initial asymptote distance as a fraction of the variable range.
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    /// Closest an asymptote may come to the iterate, as a fraction of the
    /// variable range.
    pub asymin: f64,
    /// Farthest an asymptote may move from the iterate, same units.
    pub asymax: f64,
    pub albefa: f64,
    pub raa0: f64,
    /// Cost of the shared artificial variable. It decouples because every
    /// constraint weight on it is zero, so it only documents the form.
    pub a0: f64,
    /// Linear cost of the artificial variables.
    pub c: f64,
    /// Quadratic cost of the artificial variables.
    pub d: f64,
    /// Subproblem KKT tolerance.
    pub epsimin: f64,
}

impl Default for MmaSettings {
    fn default() -> Self {
        MmaSettings {
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            asymin: ASYMIN,
            asymax: 10.0,
            albefa: 0.1,
            raa0: 1e-5,
            a0: 1.0,
            c: 1000.0,
            d: 1.0,
            epsimin: 1e-9,
        }
    }
}

/// Result of one MMA update.
#[derive(Debug, Clone, PartialEq)]
pub struct MmaStep {
    pub x: Vec<f64>,
    /// Max-norm of the subproblem KKT residual at the final barrier level.
    pub kkt_residual: f64,
    /// Artificial variables were needed, i.e. the linearized constraints
    /// could not all be met within the move limits.
    pub infeasible: bool,
}

/// Asymptotes and iterate history carried between MMA updates.
#[derive(Debug, Clone)]
pub struct MmaState {
    n: usize,
    m: usize,
    xmin: Vec<f64>,
    xmax: Vec<f64>,
    move_limit: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    iter: usize,
    settings: MmaSettings,
}

impl MmaState {
    /// `move_limit` is an absolute step bound per variable.
    pub fn new(
        xmin: Vec<f64>,
        xmax: Vec<f64>,
        move_limit: Vec<f64>,
        m: usize,
        settings: MmaSettings,
    ) -> Result<Self> {
        let n = xmin.len();
        if xmax.len() != n || move_limit.len() != n {
            return Err(Error::Config("bound and move-limit vectors must have equal length"));
        }
        if xmin.iter().zip(&xmax).any(|(a, b)| !(a < b)) {
            return Err(Error::Config("lower bounds must be below upper bounds"));
        }
        if move_limit.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("move limits must be positive"));
        }
        Ok(MmaState {
            n,
            m,
            xmin,
            xmax,
            move_limit,
            low: vec![0.0; n],
            upp: vec![0.0; n],
            xold1: Vec::new(),
            xold2: Vec::new(),
            iter: 0,
            settings,
        })
    }

    pub fn n_constraints(&self) -> usize {
        self.m
    }

    pub fn lower_asymptotes(&self) -> &[f64] {
        &self.low
    }

    pub fn upper_asymptotes(&self) -> &[f64] {
        &self.upp
    }

    /// Computes the next iterate from objective gradient `df0`, constraint
    /// values `g` (feasible when ≤ 0) and their gradients `dg`.
    pub fn step(&mut self, x: &[f64], df0: &[f64], g: &[f64], dg: &[Vec<f64>]) -> Result<MmaStep> {
        let (n, m) = (self.n, self.m);
        if x.len() != n || df0.len() != n || g.len() != m || dg.len() != m || dg.iter().any(|r| r.len() != n) {
            return Err(Error::Config("MMA input dimensions do not match the problem"));
        }
        if df0.iter().chain(g).chain(dg.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite gradient or constraint value"));
        }
        let st = self.settings;

        // asymptotes
        for j in 0..n {
            let range = self.xmax[j] - self.xmin[j];
            if self.iter < 2 {
                self.low[j] = x[j] - st.asyinit * range;
                self.upp[j] = x[j] + st.asyinit * range;
            } else {
                let zzz = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if zzz > 0.0 {
                    st.asyincr
                } else if zzz < 0.0 {
                    st.asydecr
                } else {
                    1.0
                };
                let low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.max(x[j] - st.asymax * range).min(x[j] - st.asymin * range);
                self.upp[j] = upp.min(x[j] + st.asymax * range).max(x[j] + st.asymin * range);
            }
        }

        // move limits and approximation coefficients
        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut p0 = vec![0.0; n];
        let mut q0 = vec![0.0; n];
        let mut pm = vec![vec![0.0; n]; m];
        let mut qm = vec![vec![0.0; n]; m];
        let mut b = g.iter().map(|v| -v).collect::<Vec<f64>>();
        for j in 0..n {
            let (low, upp) = (self.low[j], self.upp[j]);
            alfa[j] = (low + st.albefa * (x[j] - low)).max(x[j] - self.move_limit[j]).max(self.xmin[j]);
            beta[j] = (upp - st.albefa * (upp - x[j])).min(x[j] + self.move_limit[j]).min(self.xmax[j]);
            let inv_range = 1.0 / (self.xmax[j] - self.xmin[j]).max(1e-5);
            let ux1 = upp - x[j];
            let xl1 = x[j] - low;
            let (ux2, xl2) = (ux1 * ux1, xl1 * xl1);
            let (pos, neg) = (df0[j].max(0.0), (-df0[j]).max(0.0));
            let pq = 0.001 * (pos + neg) + st.raa0 * inv_range;
            p0[j] = (pos + pq) * ux2;
            q0[j] = (neg + pq) * xl2;
            for i in 0..m {
                let d = dg[i][j];
                let (pos, neg) = (d.max(0.0), (-d).max(0.0));
                let pq = 0.001 * (pos + neg) + st.raa0 * inv_range;
                pm[i][j] = (pos + pq) * ux2;
                qm[i][j] = (neg + pq) * xl2;
                b[i] += pm[i][j] / ux1 + qm[i][j] / xl1;
            }
        }

        let sub = Subproblem {
            n,
            m,
            low: &self.low,
            upp: &self.upp,
            alfa: &alfa,
            beta: &beta,
            p0: &p0,
            q0: &q0,
            p: &pm,
            q: &qm,
            b: &b,
            c: st.c,
            d: st.d,
        };
        let sol = sub.solve(st.epsimin);

        self.xold2 = core::mem::replace(&mut self.xold1, x.to_vec());
        self.iter += 1;
        let infeasible = sol.y.iter().any(|&y| y > 1e-6);
        Ok(MmaStep { x: sol.x, kkt_residual: sol.residual, infeasible })
    }
}

struct Subproblem<'a> {
    n: usize,
    m: usize,
    low: &'a [f64],
    upp: &'a [f64],
    alfa: &'a [f64],
    beta: &'a [f64],
    p0: &'a [f64],
    q0: &'a [f64],
    p: &'a [Vec<f64>],
    q: &'a [Vec<f64>],
    b: &'a [f64],
    c: f64,
    d: f64,
}

struct SubSolution {
    x: Vec<f64>,
    y: Vec<f64>,
    residual: f64,
}

/// Dual function value, gradient and Hessian at one multiplier vector.
struct DualEval {
    x: Vec<f64>,
    y: Vec<f64>,
    w: f64,
    grad: Vec<f64>,
    hess: Vec<Vec<f64>>,
}

impl Subproblem<'_> {
    /// Minimizes the Lagrangian for fixed multipliers. Each variable has a
    /// closed-form minimizer, clamped to its box.
    fn eval(&self, lam: &[f64]) -> DualEval {
        let (n, m) = (self.n, self.m);
        let mut x = vec![0.0; n];
        let mut w = 0.0;
        let mut grad = vec![0.0; m];
        let mut hess = vec![vec![0.0; m]; m];
        let mut gcol = vec![0.0; m];
        for j in 0..n {
            let mut pl = self.p0[j];
            let mut ql = self.q0[j];
            for i in 0..m {
                pl += lam[i] * self.p[i][j];
                ql += lam[i] * self.q[i][j];
            }
            let (sp, sq) = (sqrt(pl), sqrt(ql));
            let xf = (self.low[j] * sp + self.upp[j] * sq) / (sp + sq);
            let xj = xf.clamp(self.alfa[j], self.beta[j]);
            x[j] = xj;
            let ux = self.upp[j] - xj;
            let xl = xj - self.low[j];
            w += pl / ux + ql / xl;
            for i in 0..m {
                grad[i] += self.p[i][j] / ux + self.q[i][j] / xl;
            }
            if m > 0 && xj > self.alfa[j] && xj < self.beta[j] {
                let (ux2, xl2) = (ux * ux, xl * xl);
                let curv = 2.0 * pl / (ux2 * ux) + 2.0 * ql / (xl2 * xl);
                for i in 0..m {
                    gcol[i] = self.p[i][j] / ux2 - self.q[i][j] / xl2;
                }
                for i in 0..m {
                    let gi = gcol[i] / curv;
                    for k in i..m {
                        hess[i][k] -= gi * gcol[k];
                    }
                }
            }
        }
        let mut y = vec![0.0; m];
        for i in 0..m {
            for k in 0..i {
                hess[i][k] = hess[k][i];
            }
            y[i] = ((lam[i] - self.c) / self.d).max(0.0);
            if y[i] > 0.0 {
                hess[i][i] -= 1.0 / self.d;
            }
            w += self.c * y[i] + 0.5 * self.d * y[i] * y[i] - lam[i] * y[i] - lam[i] * self.b[i];
            grad[i] -= y[i] + self.b[i];
        }
        DualEval { x, y, w, grad, hess }
    }

    /// Complementarity residual of the dual bound constraints λ ≥ 0.
    fn residual(lam: &[f64], grad: &[f64]) -> f64 {
        lam.iter().zip(grad).fold(0.0, |r, (l, g)| r.max(l.min(-g).abs()))
    }

    /// Maximizes the concave dual over λ ≥ 0 by projected Newton with a
    /// backtracking line search.
    fn solve(&self, tol: f64) -> SubSolution {
        let m = self.m;
        let mut lam = vec![0.0; m];
        let mut ev = self.eval(&lam);
        let mut res = Self::residual(&lam, &ev.grad);
        for _ in 0..MAX_DUAL_ITER {
            if res <= tol {
                break;
            }
            let free: Vec<usize> = (0..m).filter(|&i| lam[i] > 0.0 || ev.grad[i] > 0.0).collect();
            let scale = ev.hess.iter().enumerate().fold(0.0f64, |s, (i, r)| s.max(-r[i]));
            let reg = 1e-12 * scale.max(1e-300);
            let a: Vec<Vec<f64>> = free
                .iter()
                .map(|&i| free.iter().map(|&k| -ev.hess[i][k] + if i == k { reg } else { 0.0 }).collect())
                .collect();
            let rhs: Vec<f64> = free.iter().map(|&i| ev.grad[i]).collect();
            let sol = dense_solve(a, rhs);
            let mut dir = vec![0.0; m];
            for (k, &i) in free.iter().enumerate() {
                dir[i] = sol[k];
            }
            for i in 0..m {
                if lam[i] == 0.0 && dir[i] < 0.0 {
                    dir[i] = 0.0;
                }
            }
            let mut slope: f64 = dir.iter().zip(&ev.grad).map(|(d, g)| d * g).sum();
            let newton = slope > 0.0 && dir.iter().all(|v| v.is_finite());
            if !newton {
                dir = free.iter().fold(vec![0.0; m], |mut d, &i| {
                    if lam[i] > 0.0 || ev.grad[i] > 0.0 {
                        d[i] = ev.grad[i];
                    }
                    d
                });
                slope = dir.iter().map(|d| d * d).sum();
            }
            let dmax = dir.iter().fold(0.0f64, |s, v| s.max(v.abs()));
            let lmax = lam.iter().fold(1.0f64, |s, v| s.max(v.abs()));
            // Largest step keeping λ ≥ 0 along the direction.
            let mut t_hi = MAX_DUAL_STEP * lmax / dmax;
            for i in 0..m {
                if dir[i] < 0.0 {
                    t_hi = t_hi.min(lam[i] / -dir[i]);
                }
            }
            if !(t_hi > 0.0) {
                break;
            }
            let at = |t: f64| -> (Vec<f64>, DualEval, f64) {
                let trial: Vec<f64> = lam.iter().zip(&dir).map(|(l, d)| (l + t * d).max(0.0)).collect();
                let tev = self.eval(&trial);
                let dphi = tev.grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
                (trial, tev, dphi)
            };
            let accept_full = |tev: &DualEval| tev.w >= ev.w + 1e-4 * slope;
            let first = if newton { t_hi.min(1.0) } else { t_hi.min(1.0 / dmax.max(1e-300)) };
            let (mut trial, mut tev, mut dphi) = at(first);
            let mut t = first;
            // Close to the optimum the dual value stalls at roundoff; the
            // residual then decides.
            let w_floor = 1e-13 * ev.w.abs().max(1.0);
            let better = |trial: &[f64], tev: &DualEval| {
                tev.w >= ev.w - w_floor && Self::residual(trial, &tev.grad) < res
            };
            let mut accepted = newton && t == 1.0 && (accept_full(&tev) || better(&trial, &tev));
            if !accepted {
                // Bracket the maximizer of the concave line function, then
                // locate it by regula falsi on its derivative.
                let (mut lo, mut dlo) = (0.0, slope);
                let (mut hi, mut dhi) = (t, dphi);
                while dhi > 0.0 && hi < t_hi {
                    lo = hi;
                    dlo = dhi;
                    hi = (hi * 4.0).min(t_hi);
                    let r = at(hi);
                            (trial, tev, dhi) = (r.0, r.1, r.2);
                    t = hi;
                }
                if dhi < 0.0 {
                    let mut side = 0i32;
                    for _ in 0..LINE_SEARCH_EVALS {
                        let mid = if dlo - dhi > 0.0 { (lo * -dhi + hi * dlo) / (dlo - dhi) } else { 0.5 * (lo + hi) };
                        let r = at(mid);
                                    t = mid;
                        (trial, tev, dphi) = (r.0, r.1, r.2);
                        if dphi.abs() <= 0.1 * slope {
                            break;
                        }
                        if dphi > 0.0 {
                            lo = mid;
                            dlo = dphi;
                            if side == 1 {
                                dhi *= 0.5;
                            }
                            side = 1;
                        } else {
                            hi = mid;
                            dhi = dphi;
                            if side == -1 {
                                dlo *= 0.5;
                            }
                            side = -1;
                        }
                    }
                }
                accepted = t > 0.0 && (tev.w > ev.w || better(&trial, &tev));
            }
            if accepted {
                res = Self::residual(&trial, &tev.grad);
                lam = trial;
                ev = tev;
            }
            if !accepted {
                break;
            }
        }
        SubSolution { x: ev.x, y: ev.y, residual: res }
    }
}

/// Gaussian elimination with partial pivoting for the small reduced systems.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap_or(core::cmp::Ordering::Equal))
            .unwrap_or(col);
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        if d == 0.0 {
            continue;
        }
        for r in col + 1..n {
            let f = a[r][col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = if a[r][r] != 0.0 { (b[r] - s) / a[r][r] } else { 0.0 };
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    type Constraint = (fn(f64) -> f64, fn(f64) -> f64);

    fn run_1d(
        df: impl Fn(f64) -> f64,
        con: Option<Constraint>,
        x0: f64,
        iters: usize,
    ) -> (f64, f64) {
        let m = usize::from(con.is_some());
        let mut st = MmaState::new(vec![0.0], vec![1.0], vec![0.2], m, MmaSettings::default()).unwrap();
        let mut x = vec![x0];
        let mut worst_kkt: f64 = 0.0;
        for _ in 0..iters {
            let (g, dg) = match con {
                Some((gf, dgf)) => (vec![gf(x[0])], vec![vec![dgf(x[0])]]),
                None => (vec![], vec![]),
            };
            let step = st.step(&x, &[df(x[0])], &g, &dg).unwrap();
            worst_kkt = worst_kkt.max(step.kkt_residual);
            assert!(step.x[0] >= 0.0 && step.x[0] <= 1.0);
            assert!((step.x[0] - x[0]).abs() <= 0.2 + 1e-12);
            x = step.x;
        }
        (x[0], worst_kkt)
    }

    #[test]
    fn unconstrained_quadratic() {
        let (x, kkt) = run_1d(|x| 2.0 * (x - 0.3), None, 0.9, 30);
        assert!((x - 0.3).abs() < 1e-4, "{x}");
        assert!(kkt <= 1e-9, "{kkt}");
    }

    #[test]
    fn active_upper_bound() {
        let (x, _) = run_1d(|_| -1.0, None, 0.1, 30);
        assert!((x - 1.0).abs() < 1e-4, "{x}");
    }

    #[test]
    fn linear_constraint() {
        let (x, kkt) = run_1d(|_| -1.0, Some((|x| x - 0.25, |_| 1.0)), 0.9, 30);
        assert!((x - 0.25).abs() < 1e-4, "{x}");
        assert!(kkt <= 1e-9, "{kkt}");
    }

    #[test]
    fn two_variable_constrained() {
        // min (x0-1)² + (x1-1)²  s.t. x0 + x1 ≤ 1 → (0.5, 0.5)
        let mut st = MmaState::new(vec![0.0; 2], vec![2.0; 2], vec![0.3; 2], 1, MmaSettings::default()).unwrap();
        let mut x = vec![0.1, 1.8];
        for _ in 0..60 {
            let df = [2.0 * (x[0] - 1.0), 2.0 * (x[1] - 1.0)];
            let g = [x[0] + x[1] - 1.0];
            let step = st.step(&x, &df, &g, &[vec![1.0, 1.0]]).unwrap();
            x = step.x;
        }
        assert!((x[0] - 0.5).abs() < 1e-4 && (x[1] - 0.5).abs() < 1e-4, "{x:?}");
    }

    #[test]
    fn flags_infeasible_linearization() {
        // x ≥ 0.9 demanded from x = 0.1 with a move limit of 0.2
        let mut st = MmaState::new(vec![0.0], vec![1.0], vec![0.2], 1, MmaSettings::default()).unwrap();
        let step = st.step(&[0.1], &[1.0], &[0.8], &[vec![-1.0]]).unwrap();
        assert!(step.infeasible);
        assert!((step.x[0] - 0.3).abs() < 1e-6, "{:?}", step.x);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(MmaState::new(vec![1.0], vec![0.0], vec![0.1], 0, MmaSettings::default()).is_err());
        let mut st = MmaState::new(vec![0.0], vec![1.0], vec![0.1], 0, MmaSettings::default()).unwrap();
        assert!(st.step(&[0.5], &[f64::NAN], &[], &[]).is_err());
    }
}
