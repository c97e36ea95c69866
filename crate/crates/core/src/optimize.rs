//! Preconditioned limited-memory BFGS with a strong-Wolfe line search.
//!
//! Unknowns can be pinned (`fixed`) and the iteration can be confined to a
//! hyperplane `⟨w, x⟩ = const` (mass constraint); both are realised by
//! projecting gradients and search directions. An optional banded SPD
//! preconditioner replaces the identity as the initial inverse-Hessian
//! guess in the two-loop recursion.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::discretization::DiffOperator;
use crate::error::{Error, Result};

pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the value. Returning a
    /// non-finite value marks `x` as infeasible; the line search backs off.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Sup-norm size of the rounding error in the computed gradient near `x`.
    /// Gradient tolerances below this cannot be met reliably.
    fn gradient_noise_floor(&self, _x: &[f64], _fixed: &[bool]) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the sup-norm of the projected gradient falls below this.
    pub gradient_tolerance: f64,
    /// Stop (and report divergence) once the value drops below this.
    pub divergence_floor: Option<f64>,
    /// Largest sup-norm of the very first step.
    pub max_first_step: f64,
    /// Raise `gradient_tolerance` to the objective's gradient rounding floor.
    pub respect_noise_floor: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            memory: 12,
            max_iterations: 10_000,
            gradient_tolerance: 1e-8,
            divergence_floor: None,
            max_first_step: 0.25,
            respect_noise_floor: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    Diverged,
    /// The line search could not make progress even after a restart.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_norm: f64,
    /// The gradient tolerance actually applied: the requested one, raised to
    /// the objective's rounding floor when that is larger.
    pub effective_tolerance: f64,
    pub termination: Termination,
}

impl MinimizeResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Pinned unknowns and an optional linear (mass) constraint.
#[derive(Debug, Clone, Default)]
pub struct Constraint {
    pub fixed: Vec<bool>,
    pub mass_weights: Option<Vec<f64>>,
}

impl Constraint {
    pub fn free(n: usize) -> Self {
        Self {
            fixed: vec![false; n],
            mass_weights: None,
        }
    }

    fn project(&self, v: &mut [f64], masked_weights: &Option<(Vec<f64>, f64)>) {
        for (vi, &f) in v.iter_mut().zip(&self.fixed) {
            if f {
                *vi = 0.0;
            }
        }
        if let Some((w, ww)) = masked_weights {
            let c = dot(w, v) / ww;
            for (vi, wi) in v.iter_mut().zip(w) {
                *vi -= c * wi;
            }
        }
    }
}

/// Symmetric positive definite band matrix, stored by lower band rows, with
/// an in-place Cholesky factorization.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
    factored: bool,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
            factored: false,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw - (i - j))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and by symmetry `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Adds `scale · Dᵀ diag(q) D`.
    pub fn add_normal_operator(&mut self, op: &DiffOperator, q: &[f64], scale: f64) {
        for (r, &qr) in q.iter().enumerate() {
            let (s, w) = op.row(r);
            for a in 0..w.len() {
                for b in 0..=a {
                    self.add(s + a, s + b, scale * qr * w[a] * w[b]);
                }
            }
        }
    }

    pub fn add_diagonal(&mut self, d: &[f64], scale: f64) {
        for (i, &v) in d.iter().enumerate() {
            self.add(i, i, scale * v);
        }
    }

    /// Replaces row and column `i` by the identity.
    pub fn pin(&mut self, i: usize) {
        for j in i.saturating_sub(self.bw)..i {
            let k = self.idx(i, j);
            self.data[k] = 0.0;
        }
        for r in (i + 1)..(i + 1 + self.bw).min(self.n) {
            let k = self.idx(r, i);
            self.data[k] = 0.0;
        }
        let k = self.idx(i, i);
        self.data[k] = 1.0;
    }

    pub fn factor(mut self) -> Result<Self> {
        let (n, bw) = (self.n, self.bw);
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let mut d = self.data[self.idx(j, j)];
            for k in lo..j {
                let l = self.data[self.idx(j, k)];
                d -= l * l;
            }
            if !(d > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "band matrix not positive definite at row {j}"
                )));
            }
            let d = d.sqrt();
            let jj = self.idx(j, j);
            self.data[jj] = d;
            for i in (j + 1)..(j + 1 + bw).min(n) {
                let lo_i = i.saturating_sub(bw).max(lo);
                let mut s = self.data[self.idx(i, j)];
                for k in lo_i..j {
                    s -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                let ij = self.idx(i, j);
                self.data[ij] = s / d;
            }
        }
        self.factored = true;
        Ok(self)
    }

    /// Solves `A x = b` in place; the matrix must be factored.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert!(self.factored, "solve on an unfactored band matrix");
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[self.idx(i, k)] * b[k];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..(i + 1 + bw).min(n) {
                s -= self.data[self.idx(k, i)] * b[k];
            }
            b[i] = s / self.data[self.idx(i, i)];
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Evaluator<'a, O: Objective> {
    obj: &'a O,
    constraint: &'a Constraint,
    masked: Option<(Vec<f64>, f64)>,
    count: usize,
}

impl<O: Objective> Evaluator<'_, O> {
    /// Value and projected gradient.
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> f64 {
        self.count += 1;
        let v = self.obj.value_and_gradient(x, g);
        self.constraint.project(g, &self.masked);
        v
    }
}

struct LineSearchOutcome {
    alpha: f64,
    value: f64,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

fn interpolate(a_lo: f64, f_lo: f64, d_lo: f64, a_hi: f64, f_hi: f64) -> f64 {
    // minimizer of the quadratic through (a_lo, f_lo, d_lo) and (a_hi, f_hi)
    let da = a_hi - a_lo;
    let denom = 2.0 * (f_hi - f_lo - d_lo * da);
    let t = if denom > 0.0 && f_hi.is_finite() {
        a_lo - d_lo * da * da / denom
    } else {
        0.5 * (a_lo + a_hi)
    };
    let (lo, hi) = if a_lo < a_hi { (a_lo, a_hi) } else { (a_hi, a_lo) };
    let margin = 0.1 * (hi - lo);
    t.clamp(lo + margin, hi - margin)
}

#[allow(clippy::too_many_arguments)]
fn line_search<O: Objective>(
    ev: &mut Evaluator<'_, O>,
    x: &[f64],
    f0: f64,
    d: &[f64],
    dphi0: f64,
    alpha0: f64,
    floor: Option<f64>,
    trial: &mut [f64],
    g_trial: &mut [f64],
) -> Option<LineSearchOutcome> {
    let mut phi = |alpha: f64, trial: &mut [f64], g: &mut [f64]| -> (f64, f64) {
        for ((t, xi), di) in trial.iter_mut().zip(x).zip(d) {
            *t = xi + alpha * di;
        }
        let v = ev.eval(trial, g);
        (v, dot(g, d))
    };

    let below_floor = |v: f64| floor.is_some_and(|fl| v < fl);
    // approximate Wolfe conditions for when values sit at rounding level
    let noise = 1e-12 * f0.abs().max(1e-300);
    let approx_ok = |fa: f64, da: f64| fa <= f0 + noise && da >= C2 * dphi0 && da <= -0.8 * dphi0;
    let mut best_armijo: Option<(f64, f64)> = None;

    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut d_prev = dphi0;
    let mut alpha = alpha0;
    let mut bracket: Option<(f64, f64, f64, f64, f64)> = None; // (lo, f_lo, d_lo, hi, f_hi)

    for i in 0..25 {
        let (fa, da) = phi(alpha, trial, g_trial);
        if fa.is_finite() && (below_floor(fa) || approx_ok(fa, da)) {
            return Some(LineSearchOutcome { alpha, value: fa });
        }
        if !fa.is_finite() || fa > f0 + C1 * alpha * dphi0 || (i > 0 && fa >= f_prev) {
            bracket = Some((a_prev, f_prev, d_prev, alpha, fa));
            break;
        }
        best_armijo = Some((alpha, fa));
        if da.abs() <= -C2 * dphi0 {
            return Some(LineSearchOutcome { alpha, value: fa });
        }
        if da >= 0.0 {
            bracket = Some((alpha, fa, da, a_prev, f_prev));
            break;
        }
        a_prev = alpha;
        f_prev = fa;
        d_prev = da;
        alpha *= 2.0;
    }

    if let Some((mut lo, mut f_lo, mut d_lo, mut hi, mut f_hi)) = bracket {
        for _ in 0..40 {
            if (hi - lo).abs() <= 1e-16 * lo.abs().max(1e-300) {
                break;
            }
            let aj = interpolate(lo, f_lo, d_lo, hi, f_hi);
            let (fj, dj) = phi(aj, trial, g_trial);
            if fj.is_finite() && (below_floor(fj) || approx_ok(fj, dj)) {
                return Some(LineSearchOutcome { alpha: aj, value: fj });
            }
            if !fj.is_finite() || fj > f0 + C1 * aj * dphi0 || fj >= f_lo {
                hi = aj;
                f_hi = fj;
            } else {
                if best_armijo.is_none_or(|(_, fb)| fj < fb) {
                    best_armijo = Some((aj, fj));
                }
                if dj.abs() <= -C2 * dphi0 {
                    return Some(LineSearchOutcome { alpha: aj, value: fj });
                }
                if dj * (hi - lo) >= 0.0 {
                    hi = lo;
                    f_hi = f_lo;
                }
                lo = aj;
                f_lo = fj;
                d_lo = dj;
            }
        }
    }

    // sufficient decrease without curvature: still usable
    best_armijo.map(|(alpha, value)| {
        let _ = phi(alpha, trial, g_trial);
        LineSearchOutcome { alpha, value }
    })
}

/// Minimizes `obj` from `x0`. Pinned entries of `x0` are left untouched; when a
/// mass constraint is present `x0` must already satisfy it.
pub fn minimize<O: Objective>(
    obj: &O,
    x0: &[f64],
    constraint: &Constraint,
    preconditioner: Option<&BandedSpd>,
    opts: &MinimizeOptions,
) -> MinimizeResult {
    let n = obj.dim();
    assert_eq!(x0.len(), n);
    let fixed = if constraint.fixed.is_empty() {
        vec![false; n]
    } else {
        constraint.fixed.clone()
    };
    let constraint = Constraint {
        fixed,
        mass_weights: constraint.mass_weights.clone(),
    };
    let masked = constraint.mass_weights.as_ref().map(|w| {
        let wm: Vec<f64> = w
            .iter()
            .zip(&constraint.fixed)
            .map(|(&wi, &f)| if f { 0.0 } else { wi })
            .collect();
        let ww = dot(&wm, &wm);
        (wm, ww)
    });
    let mut ev = Evaluator {
        obj,
        constraint: &constraint,
        masked,
        count: 0,
    };

    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = ev.eval(&x, &mut g);
    let initial_value = f;
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut alpha_buf = vec![0.0; opts.memory.max(1)];

    let tol_at = |x: &[f64]| {
        if opts.respect_noise_floor {
            opts.gradient_tolerance.max(obj.gradient_noise_floor(x, &constraint.fixed))
        } else {
            opts.gradient_tolerance
        }
    };
    let mut tol = tol_at(x0);
    let finish = |x: Vec<f64>, f: f64, it: usize, ev_count: usize, g: &[f64], tol: f64, t: Termination| {
        MinimizeResult {
            x,
            value: f,
            initial_value,
            iterations: it,
            evaluations: ev_count,
            gradient_norm: sup_norm(g),
            effective_tolerance: tol,
            termination: t,
        }
    };

    if !f.is_finite() {
        return finish(x, f, 0, ev.count, &g, tol, Termination::Stalled);
    }
    if opts.divergence_floor.is_some_and(|fl| f < fl) {
        return finish(x, f, 0, ev.count, &g, tol, Termination::Diverged);
    }

    let mut restarted = false;
    let mut flat_steps = 0usize;
    for it in 0..opts.max_iterations {
        if it > 0 && it % 10 == 0 {
            tol = tol_at(&x);
        }
        if sup_norm(&g) < tol {
            return finish(x, f, it, ev.count, &g, tol, Termination::Converged);
        }

        // two-loop recursion
        d.copy_from_slice(&g);
        let m = history.len();
        for (k, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[k] = a;
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
        }
        let mut gamma = 1.0;
        if let Some(pc) = preconditioner {
            pc.solve_in_place(&mut d);
            constraint.project(&mut d, &ev.masked);
            if let Some((s, y, _)) = history.back() {
                let mut hy = y.clone();
                pc.solve_in_place(&mut hy);
                constraint.project(&mut hy, &ev.masked);
                let yhy = dot(y, &hy);
                if yhy > 0.0 {
                    gamma = dot(s, y) / yhy;
                }
            }
        } else if let Some((s, y, _)) = history.back() {
            gamma = dot(s, y) / dot(y, y);
        }
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for (k, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * dot(y, &d);
            let a = alpha_buf[k];
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        for di in d.iter_mut() {
            *di = -*di;
        }
        constraint.project(&mut d, &ev.masked);

        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            // not a descent direction: fall back to steepest descent
            history.clear();
            for (di, gi) in d.iter_mut().zip(&g) {
                *di = -gi;
            }
            dphi0 = dot(&g, &d);
        }

        let mut alpha0 = 1.0;
        if m == 0 {
            let dn = sup_norm(&d);
            if dn > opts.max_first_step {
                alpha0 = opts.max_first_step / dn;
            }
        }

        match line_search(
            &mut ev,
            &x,
            f,
            &d,
            dphi0,
            alpha0,
            opts.divergence_floor,
            &mut trial,
            &mut g_trial,
        ) {
            Some(ls) => {
                let s: Vec<f64> = d.iter().map(|di| ls.alpha * di).collect();
                let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
                std::mem::swap(&mut x, &mut trial);
                std::mem::swap(&mut g, &mut g_trial);
                let f_old = f;
                f = ls.value;
                if opts.divergence_floor.is_some_and(|fl| f < fl) {
                    return finish(x, f, it + 1, ev.count, &g, tol, Termination::Diverged);
                }
                let sy = dot(&s, &y);
                if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if history.len() == opts.memory.max(1) {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                restarted = false;
                if f_old - f <= 1e-15 * f.abs().max(1e-300) {
                    flat_steps += 1;
                } else {
                    flat_steps = 0;
                }
                if flat_steps >= 20 {
                    return finish(x, f, it + 1, ev.count, &g, tol, Termination::Stalled);
                }
            }
            None => {
                if restarted || history.is_empty() {
                    return finish(x, f, it, ev.count, &g, tol, Termination::Stalled);
                }
                history.clear();
                restarted = true;
            }
        }
    }
    let t = if sup_norm(&g) < tol {
        Termination::Converged
    } else {
        Termination::MaxIterations
    };
    finish(x, f, opts.max_iterations, ev.count, &g, tol, t)
}
