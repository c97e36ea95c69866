//! The discrete energy
//!
//! ```text
//! G[u] = Σ_i q_i [ W(u_i)/ε − λ ε^{2n−3} (D_{n−1}u)_i² + ε^{2n−1} (D_n u)_i² ]
//! ```
//!
//! with `q` the quadrature weights and `D_k` the stencil derivative operators.
//! The gradient is the exact adjoint of this composition.

use serde::{Deserialize, Serialize};

use crate::discretization::{DiffOperator, Field, Grid, Quadrature};
use crate::error::{Error, Result};
use crate::optimize::{BandedSpd, Objective};
use crate::potential::DoubleWell;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub n: usize,
    pub epsilon: f64,
    pub lambda: f64,
}

impl EnergyParams {
    pub fn new(n: usize, epsilon: f64, lambda: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "derivative order must be at least 2, got {n}"
            )));
        }
        Self::with_any_order(n, epsilon, lambda)
    }

    /// Like [`EnergyParams::new`] but also admits `n = 1`, the classical
    /// Modica–Mortola energy used to sanity-check the profile solver.
    pub(crate) fn with_any_order(n: usize, epsilon: f64, lambda: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("derivative order must be positive".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !lambda.is_finite() {
            return Err(Error::InvalidParameter("lambda must be finite".into()));
        }
        Ok(Self { n, epsilon, lambda })
    }

    /// ε^{2n−3}, the weight of the concave term.
    pub fn concave_scale(&self) -> f64 {
        self.epsilon.powi(2 * self.n as i32 - 3)
    }

    /// ε^{2n−1}, the weight of the highest-order term.
    pub fn highest_scale(&self) -> f64 {
        self.epsilon.powi(2 * self.n as i32 - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub potential_term: f64,
    pub concave_term: f64,
    pub highest_term: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    fn from_terms(potential_term: f64, concave_term: f64, highest_term: f64) -> Self {
        Self {
            potential_term,
            concave_term,
            highest_term,
            total: potential_term + concave_term + highest_term,
        }
    }
}

/// Precomputed operators and weights for repeated evaluation on one grid.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    grid: Grid,
    params: EnergyParams,
    potential: DoubleWell,
    lower: DiffOperator,
    highest: DiffOperator,
    weights: Vec<f64>,
}

impl EnergyModel {
    pub fn new(grid: Grid, params: EnergyParams, potential: DoubleWell) -> Result<Self> {
        Self::with_quadrature(grid, params, potential, Quadrature::default())
    }

    pub fn with_quadrature(
        grid: Grid,
        params: EnergyParams,
        potential: DoubleWell,
        rule: Quadrature,
    ) -> Result<Self> {
        let highest = DiffOperator::new(&grid, params.n)?;
        let lower = DiffOperator::new(&grid, params.n - 1)?;
        let weights = rule.weights(&grid);
        Ok(Self {
            grid,
            params,
            potential,
            lower,
            highest,
            weights,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn potential(&self) -> &DoubleWell {
        &self.potential
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lower_operator(&self) -> &DiffOperator {
        &self.lower
    }

    pub fn highest_operator(&self) -> &DiffOperator {
        &self.highest
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} samples, grid has {}",
                u.len(),
                self.grid.len()
            )));
        }
        Ok(())
    }

    pub fn breakdown(&self, u: &[f64]) -> Result<EnergyBreakdown> {
        self.check_len(u)?;
        let p = &self.params;
        let q = &self.weights;
        let pot: f64 = u
            .iter()
            .zip(q)
            .map(|(&ui, &qi)| qi * self.potential.eval(ui))
            .sum::<f64>()
            / p.epsilon;
        let dl = self.lower.apply(u);
        let dh = self.highest.apply(u);
        let sq = |d: &[f64]| d.iter().zip(q).map(|(&di, &qi)| qi * di * di).sum::<f64>();
        let concave = -p.lambda * p.concave_scale() * sq(&dl);
        let highest = p.highest_scale() * sq(&dh);
        Ok(EnergyBreakdown::from_terms(pot, concave, highest))
    }

    /// Total energy and its gradient with respect to the samples.
    pub fn value_and_gradient_into(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let p = &self.params;
        let q = &self.weights;
        let inv_eps = 1.0 / p.epsilon;
        let mut pot = 0.0;
        for ((g, &ui), &qi) in grad.iter_mut().zip(u).zip(q) {
            pot += qi * self.potential.eval(ui);
            *g = qi * self.potential.eval_derivative(ui) * inv_eps;
        }
        pot *= inv_eps;

        let mut total = pot;
        let mut buf = vec![0.0; u.len()];
        if p.lambda != 0.0 {
            let c = -p.lambda * p.concave_scale();
            self.lower.apply_into(u, &mut buf);
            let mut s = 0.0;
            for (b, &qi) in buf.iter_mut().zip(q) {
                s += qi * *b * *b;
                *b *= 2.0 * c * qi;
            }
            total += c * s;
            self.lower.apply_transpose_add(&buf, grad);
        }
        let c = p.highest_scale();
        self.highest.apply_into(u, &mut buf);
        let mut s = 0.0;
        for (b, &qi) in buf.iter_mut().zip(q) {
            s += qi * *b * *b;
            *b *= 2.0 * c * qi;
        }
        total += c * s;
        self.highest.apply_transpose_add(&buf, grad);
        total
    }

    pub fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let mut g = vec![0.0; u.len()];
        self.value_and_gradient_into(u, &mut g);
        Ok(g)
    }

    /// Estimated rounding error (sup-norm) of the computed gradient at `u`;
    /// see [`stencil_noise_floor`].
    pub fn gradient_noise_floor(&self, u: &[f64], fixed: &[bool]) -> f64 {
        let p = &self.params;
        let mut terms = vec![(&self.highest, p.highest_scale())];
        if p.lambda != 0.0 {
            terms.push((&self.lower, p.lambda.abs() * p.concave_scale()));
        }
        stencil_noise_floor(u, fixed, &self.weights, &terms)
    }

    /// Banded SPD approximation of the Hessian near a well:
    /// `2ε^{2n−1} D_nᵀ Q D_n + (W''(±1)/ε) Q`, with pinned rows replaced by
    /// the identity.
    pub fn preconditioner(&self, fixed: &[bool]) -> Result<BandedSpd> {
        let n = self.grid.len();
        let bw = self.highest.width().saturating_sub(1).max(1);
        let mut m = BandedSpd::zeros(n, bw);
        m.add_normal_operator(&self.highest, &self.weights, 2.0 * self.params.highest_scale());
        let curvature = self.potential.well_curvature().max(1e-3);
        m.add_diagonal(&self.weights, curvature / self.params.epsilon);
        for (i, &f) in fixed.iter().enumerate() {
            if f {
                m.pin(i);
            }
        }
        // On fine grids the high-order block can swamp the mass term in
        // floating point; retry with a growing diagonal shift.
        let max_diag = (0..n).map(|i| m.get(i, i)).fold(0.0, f64::max);
        let mut last_err = None;
        for shift in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
            let mut trial = m.clone();
            if shift > 0.0 {
                trial.add_diagonal(&vec![max_diag; n], shift);
            }
            match trial.factor() {
                Ok(f) => return Ok(f),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }

}

impl Objective for EnergyModel {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.value_and_gradient_into(x, grad)
    }

    fn gradient_noise_floor(&self, x: &[f64], fixed: &[bool]) -> f64 {
        EnergyModel::gradient_noise_floor(self, x, fixed)
    }
}

/// Estimated sup-norm rounding error of the gradient of
/// `Σ_t c_t Σ_i q_i (D_t u)_i²` at `u`, ignoring pinned entries.
///
/// Uses a random-walk model: each computed sum carries an error of about
/// `eps·sqrt(Σ terms²)`, and these errors are pushed through the transpose
/// stencil the same way. Rounding `u` itself to the nearest doubles adds a
/// term of size `|H|·ulp(u)`. The result is scaled by a safety factor of 8.
pub(crate) fn stencil_noise_floor(
    u: &[f64],
    fixed: &[bool],
    weights: &[f64],
    terms: &[(&DiffOperator, f64)],
) -> f64 {
    let is_fixed = |i: usize| fixed.get(i).copied().unwrap_or(false);
    let n = u.len();
    let eps = f64::EPSILON;
    let mut var = vec![0.0; n];
    let bw = terms.iter().map(|(op, _)| op.width()).max().unwrap_or(1).saturating_sub(1).max(1);
    let mut h = BandedSpd::zeros(n, bw);
    for &(op, c) in terms {
        h.add_normal_operator(op, weights, 2.0 * c);
        for i in 0..n {
            let (s, w) = op.row(i);
            let u0 = u[s];
            let mut sum = 0.0;
            let mut sq = 0.0;
            for (wj, &uj) in w.iter().zip(&u[s..s + w.len()]).skip(1) {
                let t = wj * (uj - u0);
                sum += t;
                sq += t * t;
            }
            let err_d = eps * (sq.sqrt() + sum.abs());
            let scale = 2.0 * c * weights[i];
            for (k, wj) in w.iter().enumerate() {
                let prop = scale * wj * err_d;
                let accum = eps * scale * wj * sum;
                var[s + k] += prop * prop + accum * accum;
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (k, v) in var.iter().enumerate() {
        if is_fixed(k) {
            continue;
        }
        let lo = k.saturating_sub(bw);
        let hi = (k + bw + 1).min(n);
        let r: f64 = (lo..hi)
            .filter(|&j| !is_fixed(j))
            .map(|j| (h.get(k, j) * u[j]).powi(2))
            .sum();
        worst = worst.max(v + 0.25 * eps * eps * r);
    }
    8.0 * worst.sqrt()
}

/// Evaluates the three terms of the energy of `u` with the trapezoid rule.
pub fn evaluate(u: &Field, p: &EnergyParams, w: &DoubleWell) -> Result<EnergyBreakdown> {
    EnergyModel::new(u.grid().clone(), *p, w.clone())?.breakdown(u.values())
}

/// Evaluates `∫_{I/ε} W(v) − λ (v^{(n−1)})² + (v^{(n)})²` for `v(x) = u(εx)`,
/// sampled on the stretched grid.
pub fn evaluate_rescaled(u: &Field, p: &EnergyParams, w: &DoubleWell) -> Result<f64> {
    let stretched = u.grid().scaled(1.0 / p.epsilon)?;
    let v = u.with_grid(stretched)?;
    let unit = EnergyParams::with_any_order(p.n, 1.0, p.lambda)?;
    Ok(evaluate(&v, &unit, w)?.total)
}

/// Gradient of the discrete total with respect to the samples of `u`.
pub fn gradient(u: &Field, p: &EnergyParams, w: &DoubleWell) -> Result<Field> {
    let model = EnergyModel::new(u.grid().clone(), *p, w.clone())?;
    let g = model.gradient(u.values())?;
    Field::new(u.grid().clone(), g)
}
