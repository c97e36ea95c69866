//! Numerical checkers for interpolation inequalities on bounded intervals.
//!
//! Each checker evaluates both sides of one inequality on a sampled field and
//! returns a [`CheckReport`]. Norms use the trapezoid weights and the same
//! stencils as the energy, so a checker sees exactly what the energy sees.
//!
//! Only the inequality of [`check_intlem`] comes with an explicit constant.
//! For the others the constant is unknown, and the checkers report the
//! empirical constant a field requires instead. A failing check at a tight
//! probe means "the empirical constant exceeds the probe", never a
//! counterexample: discretization error alone can break a sharp constant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{derivative, lp_norm, Field, Quadrature};
use crate::energy::{evaluate, EnergyParams};
use crate::error::{Error, Result};
use crate::potential::DoubleWell;

/// Relative slack in every pass/fail decision.
pub const PASS_TOLERANCE: f64 = 1e-8;

/// Allowed residual of the dimension balance.
pub const BALANCE_TOLERANCE: f64 = 1e-12;

/// Exponents of a Gagliardo–Nirenberg inequality on an interval,
/// `‖u^{(j)}‖_p ≤ C(‖u^{(m)}‖_r^θ ‖u‖_q^{1−θ} + ‖u‖_q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GNParams {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub j: usize,
    pub m: usize,
    pub theta: f64,
}

impl GNParams {
    /// Validates ranges and the balance `1/p = j + θ(1/r − m) + (1−θ)/q`.
    pub fn new(p: f64, q: f64, r: f64, j: usize, m: usize, theta: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q), ("r", r)] {
            if !(v >= 1.0) {
                return Err(Error::InvalidParameter(format!("{name} must be in [1, ∞), got {v}")));
            }
        }
        if j >= m {
            return Err(Error::InvalidParameter(format!("need j < m, got j = {j}, m = {m}")));
        }
        let lo = j as f64 / m as f64;
        if !(theta >= lo && theta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in [{lo}, 1), got {theta}"
            )));
        }
        let gp = Self { p, q, r, j, m, theta };
        let residual = gp.balance_residual();
        if residual.abs() > BALANCE_TOLERANCE {
            return Err(Error::DimensionBalance { residual });
        }
        Ok(gp)
    }

    /// `1/p − (j + θ(1/r − m) + (1−θ)/q)`.
    pub fn balance_residual(&self) -> f64 {
        let (j, m) = (self.j as f64, self.m as f64);
        1.0 / self.p - (j + self.theta * (1.0 / self.r - m) + (1.0 - self.theta) / self.q)
    }

    /// The family `p = 2n/(2n−k)`, `r = 2`, `q = 1`, `θ = k/n` with `j = k`,
    /// `m = n`, used to control intermediate derivatives by the energy.
    pub fn energy_family(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k >= n {
            return Err(Error::InvalidParameter(format!("need 0 < k < n, got k = {k}, n = {n}")));
        }
        let (nf, kf) = (n as f64, k as f64);
        Self::new(2.0 * nf / (2.0 * nf - kf), 1.0, 2.0, k, n, kf / nf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs/rhs`; `0` when both vanish, `+∞` when only `rhs` does.
    pub ratio: f64,
    /// `lhs ≤ rhs·(1 + PASS_TOLERANCE)`.
    pub pass: bool,
    pub witness: String,
    /// The empirical constant this field requires; its meaning is documented
    /// on each checker.
    pub required_constant: Option<f64>,
}

impl CheckReport {
    pub fn new(lhs: f64, rhs: f64, witness: impl Into<String>) -> Self {
        let ratio = if lhs == 0.0 {
            0.0
        } else if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        };
        Self {
            lhs,
            rhs,
            ratio,
            pass: lhs <= rhs * (1.0 + PASS_TOLERANCE),
            witness: witness.into(),
            required_constant: None,
        }
    }

    fn with_constant(mut self, c: f64) -> Self {
        self.required_constant = Some(c);
        self
    }
}

fn describe(u: &Field) -> String {
    let g = u.grid();
    format!("field on ({}, {}) with {} points", g.a(), g.b(), g.len())
}

/// `‖u^{(k)}‖_{L^p}` with trapezoid weights.
pub fn derivative_norm(u: &Field, k: usize, p: f64) -> Result<f64> {
    let d = derivative(u, k)?;
    Ok(lp_norm(d.values(), &Quadrature::Trapezoid.weights(u.grid()), p))
}

/// `8(q+1)^{1/q}`, the explicit constant of [`check_intlem`].
pub fn intlem_constant(q: f64) -> f64 {
    8.0 * (q + 1.0).powf(1.0 / q)
}

/// Checks `‖u′‖_p ≤ C(|I|^{1+1/p−1/r}‖u″‖_r + |I|^{−1+1/p−1/q}‖u‖_q)` with
/// `C = 8(q+1)^{1/q}`. The required constant is `lhs` divided by the
/// bracket.
pub fn check_intlem(u: &Field, p: f64, q: f64, r: f64) -> Result<CheckReport> {
    for (name, v) in [("p", p), ("q", q), ("r", r)] {
        if !(v >= 1.0) {
            return Err(Error::InvalidParameter(format!("{name} must be in [1, ∞), got {v}")));
        }
    }
    let len = u.grid().length();
    let lhs = derivative_norm(u, 1, p)?;
    let bracket = len.powf(1.0 + 1.0 / p - 1.0 / r) * derivative_norm(u, 2, r)?
        + len.powf(-1.0 + 1.0 / p - 1.0 / q) * derivative_norm(u, 0, q)?;
    let c = intlem_constant(q);
    let need = if lhs == 0.0 { 0.0 } else { lhs / bracket };
    Ok(CheckReport::new(lhs, c * bracket, describe(u)).with_constant(need))
}

/// Checks `c·∫(u^{(n−1)})² ≤ σ^{−(2n−2)}∫u² + σ²∫(u^{(n)})²` for
/// `0 < σ ≤ |I|`. The required constant is the largest admissible `c` for
/// this field and `σ` (`+∞` when the left integral vanishes).
pub fn check_nirineq(u: &Field, n: usize, sigma: f64, c_probe: f64) -> Result<CheckReport> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n must be at least 2, got {n}")));
    }
    let len = u.grid().length();
    if !(sigma > 0.0 && sigma <= len) {
        return Err(Error::InvalidParameter(format!(
            "sigma must lie in (0, {len}], got {sigma}"
        )));
    }
    let lower = derivative_norm(u, n - 1, 2.0)?.powi(2);
    let rhs = sigma.powi(-(2 * n as i32 - 2)) * derivative_norm(u, 0, 2.0)?.powi(2)
        + sigma * sigma * derivative_norm(u, n, 2.0)?.powi(2);
    let best = if lower == 0.0 { f64::INFINITY } else { rhs / lower };
    Ok(CheckReport::new(c_probe * lower, rhs, format!("{}, sigma = {sigma}", describe(u))).with_constant(best))
}

/// Checks `‖u^{(j)}‖_p ≤ Ĉ(‖u^{(m)}‖_r^θ ‖u‖_q^{1−θ} + ‖u‖_q)` with `Ĉ = 1`;
/// the required constant is the `Ĉ` this field needs.
pub fn check_gagnir_interval(u: &Field, gp: &GNParams) -> Result<CheckReport> {
    let residual = gp.balance_residual();
    if residual.abs() > BALANCE_TOLERANCE {
        return Err(Error::DimensionBalance { residual });
    }
    let lhs = derivative_norm(u, gp.j, gp.p)?;
    let uq = derivative_norm(u, 0, gp.q)?;
    let rhs = derivative_norm(u, gp.m, gp.r)?.powf(gp.theta) * uq.powf(1.0 - gp.theta) + uq;
    let need = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(CheckReport::new(lhs, rhs, describe(u)).with_constant(need))
}

/// Checks `‖u^{(j)}‖_r ≤ ‖u^{(m)}‖_r + C·‖u‖_q`. The required constant is
/// the smallest admissible `C ≥ 0`.
pub fn check_abstr(u: &Field, j: usize, m: usize, q: f64, r: f64, c_probe: f64) -> Result<CheckReport> {
    if j >= m {
        return Err(Error::InvalidParameter(format!("need j < m, got j = {j}, m = {m}")));
    }
    let lhs = derivative_norm(u, j, r)?;
    let top = derivative_norm(u, m, r)?;
    let uq = derivative_norm(u, 0, q)?;
    let excess = (lhs - top).max(0.0);
    let need = if excess == 0.0 {
        0.0
    } else if uq == 0.0 {
        f64::INFINITY
    } else {
        excess / uq
    };
    Ok(CheckReport::new(lhs, top + c_probe * uq, describe(u)).with_constant(need))
}

/// Checks `(1 − λ/λ̂ − δ)·G^{0} ≤ G^{λ}` at the order and `ε` of `p`. The
/// required constant is the smallest `δ` that passes (negative when there
/// is room to spare).
pub fn check_lower_bound_lemma(
    u: &Field,
    p: &EnergyParams,
    lam_hat: f64,
    delta: f64,
    w: &DoubleWell,
) -> Result<CheckReport> {
    if !(lam_hat > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda_hat must be positive, got {lam_hat}")));
    }
    if !(p.lambda >= 0.0 && p.lambda <= 0.5 * lam_hat) {
        return Err(Error::InvalidParameter(format!(
            "lambda must lie in [0, lambda_hat/2] = [0, {}], got {}",
            0.5 * lam_hat,
            p.lambda
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let g0 = evaluate(u, &EnergyParams::new(p.n, p.epsilon, 0.0)?, w)?.total;
    let gl = evaluate(u, p, w)?.total;
    let factor = 1.0 - p.lambda / lam_hat;
    let need = if g0 > 0.0 { factor - gl / g0 } else { 0.0 };
    Ok(CheckReport::new((factor - delta) * g0, gl, describe(u)).with_constant(need))
}

/// Outcome of one checker over a seeded ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub which: String,
    pub seed: u64,
    pub count: usize,
    pub failures: usize,
    /// Members the checker rejected (grid too small and similar).
    pub errors: Vec<String>,
    /// The member with the largest `lhs/rhs`.
    pub worst_index: Option<usize>,
    pub worst: Option<CheckReport>,
    pub required_constant_min: Option<f64>,
    pub required_constant_max: Option<f64>,
    /// Running maximum of the required constant in member order.
    pub running_max: Vec<f64>,
    /// Set when the maximum over the second half of the ensemble is more
    /// than twice the maximum over the first half.
    pub unbounded_growth: bool,
}

impl EnsembleReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.errors.is_empty()
    }
}

/// Runs `check` on members `0..count` (in parallel) and reduces in member
/// order, so the report depends only on `member`, `check` and `count`.
pub fn run_ensemble<M, C>(which: &str, seed: u64, count: usize, member: M, check: C) -> EnsembleReport
where
    M: Fn(usize) -> Field + Sync,
    C: Fn(&Field) -> Result<CheckReport> + Sync,
{
    let results: Vec<Result<CheckReport>> = (0..count).into_par_iter().map(|i| check(&member(i))).collect();
    let mut rep = EnsembleReport {
        which: which.to_string(),
        seed,
        count,
        failures: 0,
        errors: Vec::new(),
        worst_index: None,
        worst: None,
        required_constant_min: None,
        required_constant_max: None,
        running_max: Vec::with_capacity(count),
        unbounded_growth: false,
    };
    let mut run = f64::NEG_INFINITY;
    for (i, r) in results.into_iter().enumerate() {
        let r = match r {
            Ok(r) => r,
            Err(e) => {
                rep.errors.push(format!("member {i}: {e}"));
                rep.running_max.push(run);
                continue;
            }
        };
        if !r.pass {
            rep.failures += 1;
        }
        if let Some(c) = r.required_constant {
            rep.required_constant_min = Some(rep.required_constant_min.map_or(c, |m| m.min(c)));
            rep.required_constant_max = Some(rep.required_constant_max.map_or(c, |m| m.max(c)));
            run = run.max(c);
        }
        rep.running_max.push(run);
        if rep.worst.as_ref().map_or(true, |w| r.ratio > w.ratio) {
            rep.worst_index = Some(i);
            rep.worst = Some(CheckReport {
                witness: format!("member {i}: {}", r.witness),
                ..r
            });
        }
    }
    if count >= 2 {
        let first = rep.running_max[count / 2 - 1];
        let last = rep.running_max[count - 1];
        rep.unbounded_growth = first.is_finite() && first > 0.0 && last > 2.0 * first;
    }
    rep
}

/// Empirical Nirenberg constant: the smallest admissible `c` over `count`
/// seeded fields on random intervals and `σ ∈ {1, 1/2, 1/4, 1/8}·|I|`. An
/// upper bound for the optimal constant.
pub fn empirical_nirineq_constant(n: usize, count: usize, seed: u64, points: usize) -> Result<f64> {
    let ens = crate::ensemble::Ensemble::new(seed);
    let best: Vec<Result<f64>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let u = ens.member_on_random_interval(i, points);
            let len = u.grid().length();
            let mut c = f64::INFINITY;
            for s in [1.0, 0.5, 0.25, 0.125] {
                let r = check_nirineq(&u, n, s * len, 1.0)?;
                c = c.min(r.required_constant.unwrap_or(f64::INFINITY));
            }
            Ok(c)
        })
        .collect();
    let mut c = f64::INFINITY;
    for b in best {
        c = c.min(b?);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Grid;
    use std::f64::consts::PI;

    fn unit(points: usize, f: impl Fn(f64) -> f64) -> Field {
        Field::from_fn(Grid::new(0.0, 1.0, points).unwrap(), f)
    }

    #[test]
    fn balance_validation() {
        assert!(GNParams::new(2.0, 2.0, 2.0, 1, 2, 0.5).is_ok());
        assert!(matches!(
            GNParams::new(2.0, 2.0, 2.0, 1, 2, 0.6),
            Err(Error::DimensionBalance { .. })
        ));
        assert!(GNParams::new(2.0, 2.0, 2.0, 2, 2, 0.5).is_err());
        assert!(GNParams::new(0.5, 2.0, 2.0, 1, 2, 0.5).is_err());
        for n in 2..=6 {
            for k in 1..n {
                let gp = GNParams::energy_family(n, k).unwrap();
                assert!(gp.balance_residual().abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn intlem_constant_at_one() {
        assert_eq!(intlem_constant(1.0), 16.0);
    }

    #[test]
    fn constants_pass_trivially() {
        let u = unit(101, |_| 0.7);
        let r = check_intlem(&u, 2.0, 2.0, 2.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass);
        let r = check_nirineq(&u, 2, 1.0, 1e6).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.pass);
        let gp = GNParams::new(2.0, 2.0, 2.0, 1, 2, 0.5).unwrap();
        assert_eq!(check_gagnir_interval(&u, &gp).unwrap().lhs, 0.0);
        assert!(check_abstr(&u, 1, 2, 2.0, 2.0, 0.0).unwrap().pass);
    }

    #[test]
    fn nirineq_linear_field() {
        let u = unit(201, |x| x);
        let r = check_nirineq(&u, 2, 1.0, 1.0 / 3.0 - 1e-6).unwrap();
        assert!((r.rhs - 1.0 / 3.0).abs() < 1e-4);
        assert!(r.pass);
        assert!(!check_nirineq(&u, 2, 1.0, 0.34).unwrap().pass);
        assert!(check_nirineq(&u, 2, 1.5, 0.1).is_err());
        assert!(check_nirineq(&u, 2, 0.0, 0.1).is_err());
    }

    #[test]
    fn abstr_closed_forms() {
        let u = unit(801, |x| (10.0 * PI * x).sin());
        let r = check_abstr(&u, 1, 2, 2.0, 2.0, 0.0).unwrap();
        let s = 0.5f64.sqrt();
        assert!((r.lhs - 10.0 * PI * s).abs() < 1e-4 * r.lhs);
        assert!((r.rhs - (10.0 * PI).powi(2) * s).abs() < 1e-3 * r.rhs);
        assert!(r.pass);

        let u = unit(201, |x| x);
        let r = check_abstr(&u, 1, 2, 2.0, 2.0, 0.0).unwrap();
        let expected = 1.0 / (1.0f64 / 3.0).sqrt();
        assert!((r.required_constant.unwrap() - expected).abs() < 1e-4);
    }

    #[test]
    fn gagnir_sine_constant_is_finite() {
        let u = unit(401, |x| (2.0 * PI * x).sin());
        let gp = GNParams::new(2.0, 2.0, 2.0, 1, 2, 0.5).unwrap();
        let r = check_gagnir_interval(&u, &gp).unwrap();
        // ‖u′‖ = 2π/√2, ‖u″‖^{1/2}‖u‖^{1/2} + ‖u‖ = (2π + 1)/√2
        let expected = 2.0 * PI / (2.0 * PI + 1.0);
        assert!((r.required_constant.unwrap() - expected).abs() < 1e-4);
    }

    #[test]
    fn probes_are_monotone() {
        let u = unit(201, |x| (3.0 * x).sin() + x * x);
        let mut prev = false;
        for c in [0.0, 0.1, 0.5, 1.0, 5.0, 50.0] {
            let pass = check_abstr(&u, 1, 2, 2.0, 2.0, c).unwrap().pass;
            assert!(pass || !prev);
            prev = pass;
        }
        let mut prev = true;
        for c in [0.0, 0.01, 0.1, 1.0, 10.0] {
            let pass = check_nirineq(&u, 2, 0.5, c).unwrap().pass;
            assert!(!pass || prev);
            prev = pass;
        }
    }

    #[test]
    fn lower_bound_lemma_preconditions() {
        let u = unit(201, |x| (4.0 * x).tanh());
        let w = DoubleWell::quartic();
        let p = EnergyParams::new(2, 1.0 / 32.0, 0.0).unwrap();
        let r = check_lower_bound_lemma(&u, &p, 0.05, 0.05, &w).unwrap();
        assert!(r.pass);
        assert!((r.rhs - r.lhs / 0.95).abs() < 1e-12 * r.rhs);
        let p = EnergyParams::new(2, 1.0 / 32.0, 0.04).unwrap();
        assert!(check_lower_bound_lemma(&u, &p, 0.05, 0.05, &w).is_err());
        let p = EnergyParams::new(2, 1.0 / 32.0, 0.01).unwrap();
        assert!(check_lower_bound_lemma(&u, &p, 0.05, 1.0, &w).is_err());
    }

    #[test]
    fn ensemble_is_reproducible() {
        let ens = crate::ensemble::Ensemble::new(11);
        let run = || {
            run_ensemble("intlem", 11, 40, |i| ens.member_on_random_interval(i, 201), |u| {
                check_intlem(u, 2.0, 2.0, 2.0)
            })
        };
        let a = run();
        let b = run();
        assert!(a.passed());
        assert_eq!(a.worst, b.worst);
        assert_eq!(a.running_max, b.running_max);
    }
}
