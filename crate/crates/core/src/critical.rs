//! The scale-invariant interpolation quotient
//!
//! ```text
//! Q[u] = ( |I|^{−(2n−2)} ∫_I W(u) + |I|² ∫_I (u^{(n)})² ) / ∫_I (u^{(n−1)})²
//! ```
//!
//! and estimates of its infimum `λ_n`. Minima found numerically are upper
//! bounds for `λ_n`; nothing here certifies a lower bound.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{DiffOperator, Field, Grid, Quadrature};
use crate::energy::stencil_noise_floor;
use crate::ensemble::{Ensemble, FieldKind};
use crate::error::{Error, Result};
use crate::optimize::{minimize, BandedSpd, Constraint, MinimizeOptions, Objective, Termination};
use crate::potential::DoubleWell;

/// Denominators at or below this are treated as degenerate.
pub const DENOMINATOR_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuotientResult {
    pub value: f64,
    /// `(|I|^{−(2n−2)} ∫W(u), |I|² ∫(u^{(n)})²)`.
    pub numerator_parts: (f64, f64),
    pub denominator: f64,
    #[serde(skip)]
    pub argmin_field: Option<Field>,
}

/// Precomputed operators for the quotient on one grid.
#[derive(Debug, Clone)]
pub struct QuotientModel {
    grid: Grid,
    n: usize,
    potential: DoubleWell,
    lower: DiffOperator,
    highest: DiffOperator,
    weights: Vec<f64>,
    /// Interval-length factors `(|I|^{−(2n−2)}, |I|²)`; both 1 in union mode.
    scales: (f64, f64),
}

impl QuotientModel {
    pub fn new(grid: Grid, n: usize, potential: DoubleWell) -> Result<Self> {
        let len = grid.length();
        Self::build(grid, n, potential, (len.powi(-(2 * n as i32 - 2)), len * len))
    }

    /// The quotient with unit-interval normalization on a longer interval:
    /// numerator and denominator are sums over unit subintervals, which is the
    /// form the inequality takes on a union of unit intervals.
    pub fn unit_normalized(grid: Grid, n: usize, potential: DoubleWell) -> Result<Self> {
        Self::build(grid, n, potential, (1.0, 1.0))
    }

    fn build(grid: Grid, n: usize, potential: DoubleWell, scales: (f64, f64)) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "derivative order must be at least 2, got {n}"
            )));
        }
        let highest = DiffOperator::new(&grid, n)?;
        let lower = DiffOperator::new(&grid, n - 1)?;
        let weights = Quadrature::Trapezoid.weights(&grid);
        Ok(Self {
            grid,
            n,
            potential,
            lower,
            highest,
            weights,
            scales,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn parts(&self, u: &[f64]) -> (f64, f64, f64) {
        let q = &self.weights;
        let pot: f64 = u.iter().zip(q).map(|(&ui, &qi)| qi * self.potential.eval(ui)).sum();
        let sq = |d: Vec<f64>| d.iter().zip(q).map(|(&di, &qi)| qi * di * di).sum::<f64>();
        let hi = sq(self.highest.apply(u));
        let den = sq(self.lower.apply(u));
        (self.scales.0 * pot, self.scales.1 * hi, den)
    }

    pub fn evaluate(&self, u: &[f64]) -> Result<QuotientResult> {
        if u.len() != self.grid.len() {
            return Err(Error::InvalidGrid("field does not match the quotient grid".into()));
        }
        let (a, b, den) = self.parts(u);
        if !(den > DENOMINATOR_THRESHOLD) {
            return Err(Error::QuotientUndefined { denominator: den });
        }
        Ok(QuotientResult {
            value: (a + b) / den,
            numerator_parts: (a, b),
            denominator: den,
            argmin_field: None,
        })
    }

    /// Banded SPD preconditioner `2|I|² D_nᵀ Q D_n + W''(±1)·Q`, scaled by
    /// `1/den`.
    fn preconditioner(&self, den: f64) -> Result<BandedSpd> {
        let n = self.grid.len();
        let mut m = BandedSpd::zeros(n, self.highest.width().saturating_sub(1).max(1));
        m.add_normal_operator(&self.highest, &self.weights, 2.0 * self.scales.1 / den);
        let c = self.potential.well_curvature().max(1e-3) * self.scales.0 / den;
        m.add_diagonal(&self.weights, c);
        m.factor()
    }
}

impl Objective for QuotientModel {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let q = &self.weights;
        let n = u.len();
        let dl = self.lower.apply(u);
        let dh = self.highest.apply(u);
        let den: f64 = dl.iter().zip(q).map(|(&d, &w)| w * d * d).sum();
        if !(den > DENOMINATOR_THRESHOLD) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return f64::INFINITY;
        }
        let (s0, s1) = self.scales;
        let mut num = 0.0;
        for i in 0..n {
            num += s0 * q[i] * self.potential.eval(u[i]);
            grad[i] = s0 * q[i] * self.potential.eval_derivative(u[i]);
        }
        num += s1 * dh.iter().zip(q).map(|(&d, &w)| w * d * d).sum::<f64>();
        let value = num / den;
        let vh: Vec<f64> = dh.iter().zip(q).map(|(&d, &w)| 2.0 * s1 * w * d).collect();
        self.highest.apply_transpose_add(&vh, grad);
        let vl: Vec<f64> = dl.iter().zip(q).map(|(&d, &w)| -2.0 * value * w * d).collect();
        self.lower.apply_transpose_add(&vl, grad);
        for g in grad.iter_mut() {
            *g /= den;
        }
        value
    }

    fn gradient_noise_floor(&self, u: &[f64], fixed: &[bool]) -> f64 {
        let Ok(q) = self.evaluate(u) else {
            return 0.0;
        };
        let terms = [
            (&self.highest, self.scales.1 / q.denominator),
            (&self.lower, q.value / q.denominator),
        ];
        stencil_noise_floor(u, fixed, &self.weights, &terms)
    }
}

/// `Q[u]` on the field's own interval.
pub fn quotient(u: &Field, n: usize, w: &DoubleWell) -> Result<QuotientResult> {
    let mut r = QuotientModel::new(u.grid().clone(), n, w.clone())?.evaluate(u.values())?;
    r.argmin_field = Some(u.clone());
    Ok(r)
}

/// Exact gradient of the discrete quotient with respect to the samples.
pub fn quotient_gradient(u: &Field, n: usize, w: &DoubleWell) -> Result<Vec<f64>> {
    let m = QuotientModel::new(u.grid().clone(), n, w.clone())?;
    m.evaluate(u.values())?;
    let mut g = vec![0.0; u.values().len()];
    m.value_and_gradient(u.values(), &mut g);
    Ok(g)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaOptions {
    pub points: usize,
    pub starts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for LambdaOptions {
    fn default() -> Self {
        Self {
            points: 501,
            starts: 16,
            seed: 0x5eed,
            max_iterations: 3000,
            gradient_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    TrigSum,
    Sine,
    Tanh,
    Ramp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartDiagnostics {
    pub index: usize,
    pub kind: StartKind,
    /// `None` when the start had a degenerate denominator.
    pub initial_quotient: Option<f64>,
    pub final_quotient: Option<f64>,
    pub termination: Option<Termination>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaEstimate {
    pub n: usize,
    pub potential: String,
    /// Smallest quotient found; an upper bound for the critical constant.
    pub lambda_hat: f64,
    pub best_start: usize,
    pub points: usize,
    pub starts: Vec<StartDiagnostics>,
    #[serde(skip)]
    pub argmin: Option<Field>,
}

/// Start `index` for the quotient minimization of order `n` on `grid`.
/// Depends only on `(n, seed, index)`.
pub fn lambda_start(grid: &Grid, n: usize, seed: u64, index: usize) -> (StartKind, Field) {
    let ens = Ensemble::with_kinds(seed, vec![FieldKind::Fourier]);
    let mut rng = ens.rng(index);
    let (a, len) = (grid.a(), grid.length());
    let t = move |x: f64| (x - a) / len;
    match index % 4 {
        0 => (StartKind::TrigSum, ens.member(index, grid)),
        1 => {
            let k = rng.gen_range(1..=6) as f64;
            let amp = rng.gen_range(0.4..1.4);
            let phase = rng.gen_range(0.0..std::f64::consts::PI);
            (
                StartKind::Sine,
                Field::from_fn(grid.clone(), |x| {
                    amp * (k * std::f64::consts::PI * t(x) + phase).sin()
                }),
            )
        }
        2 => {
            let amp = rng.gen_range(0.6..1.4);
            let width = rng.gen_range(0.05..0.4);
            let c = rng.gen_range(0.3..0.7);
            (
                StartKind::Tanh,
                Field::from_fn(grid.clone(), |x| amp * ((t(x) - c) / width).tanh()),
            )
        }
        _ => {
            // degree n−1, the lowest degree with a nonzero denominator
            let amp = rng.gen_range(0.5..1.5);
            let shift = if n > 2 { rng.gen_range(-1.5..0.0) } else { 0.0 };
            let deg = (n - 1) as i32;
            (
                StartKind::Ramp,
                Field::from_fn(grid.clone(), |x| shift + amp * (2.0 * t(x) - 1.0).powi(deg)),
            )
        }
    }
}

/// Minimizes the quotient on `(0, 1)` from `opts.starts` seeded starts (in
/// parallel) and returns the smallest value found.
pub fn estimate_lambda_n(n: usize, w: &DoubleWell, opts: &LambdaOptions) -> Result<LambdaEstimate> {
    if opts.starts == 0 {
        return Err(Error::InvalidParameter("need at least one start".into()));
    }
    let grid = Grid::new(0.0, 1.0, opts.points)?;
    let model = QuotientModel::new(grid.clone(), n, w.clone())?;
    let min_opts = MinimizeOptions {
        max_iterations: opts.max_iterations,
        gradient_tolerance: opts.gradient_tolerance,
        max_first_step: 0.1,
        ..MinimizeOptions::default()
    };
    let runs: Vec<(StartDiagnostics, Option<Vec<f64>>)> = (0..opts.starts)
        .into_par_iter()
        .map(|i| {
            let (kind, f0) = lambda_start(&grid, n, opts.seed, i);
            let x0 = f0.into_values();
            let Ok(q0) = model.evaluate(&x0) else {
                return (
                    StartDiagnostics {
                        index: i,
                        kind,
                        initial_quotient: None,
                        final_quotient: None,
                        termination: None,
                        iterations: 0,
                    },
                    None,
                );
            };
            let pc = model.preconditioner(q0.denominator).ok();
            let r = minimize(&model, &x0, &Constraint::free(x0.len()), pc.as_ref(), &min_opts);
            let fin = model.evaluate(&r.x).ok().map(|q| q.value);
            (
                StartDiagnostics {
                    index: i,
                    kind,
                    initial_quotient: Some(q0.value),
                    final_quotient: fin,
                    termination: Some(r.termination),
                    iterations: r.iterations,
                },
                Some(r.x),
            )
        })
        .collect();
    let best = runs
        .iter()
        .filter_map(|(d, x)| Some((d.final_quotient?, d.index, x.as_ref()?)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let Some((lambda_hat, best_start, x)) = best else {
        let detail: Vec<String> = runs
            .iter()
            .map(|(d, _)| format!("start {} ({:?}): {:?}", d.index, d.kind, d.termination))
            .collect();
        return Err(Error::OptimizerFailed(format!(
            "no start produced a finite quotient: {}",
            detail.join("; ")
        )));
    };
    let argmin = Field::new(grid.clone(), x.clone())?;
    Ok(LambdaEstimate {
        n,
        potential: w.name().to_string(),
        lambda_hat,
        best_start,
        points: opts.points,
        starts: runs.into_iter().map(|(d, _)| d).collect(),
        argmin: Some(argmin),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubcriticalReport {
    pub n: usize,
    pub lambda: f64,
    pub tested: usize,
    /// Fields skipped because the denominator vanished.
    pub degenerate: usize,
    pub violations: usize,
    pub min_quotient: f64,
    /// Description of the field attaining `min_quotient`.
    pub min_source: String,
    pub violating_sources: Vec<String>,
}

impl SubcriticalReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Unit-interval counts used for the union check.
pub const UNION_LENGTHS: [usize; 2] = [2, 3];

/// Checks `Q[u] ≥ lam` on `ensemble_size` seeded random fields: the first
/// half on `(0, 1)`, the rest on unions `(0, K)` of unit intervals with the
/// unit-normalized quotient. A `witness` field (for example the minimizer
/// behind `λ̂`) is tested in addition.
pub fn verify_subcritical(
    n: usize,
    lam: f64,
    ensemble_size: usize,
    w: &DoubleWell,
    seed: u64,
    points_per_unit: usize,
    witness: Option<&Field>,
) -> Result<SubcriticalReport> {
    if !(lam >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lam}")));
    }
    let unit_grid = Grid::new(0.0, 1.0, points_per_unit)?;
    let unit = QuotientModel::new(unit_grid.clone(), n, w.clone())?;
    let unions: Vec<(usize, QuotientModel)> = UNION_LENGTHS
        .iter()
        .map(|&k| {
            let g = Grid::new(0.0, k as f64, (points_per_unit - 1) * k + 1)?;
            Ok((k, QuotientModel::unit_normalized(g, n, w.clone())?))
        })
        .collect::<Result<_>>()?;
    let ens = Ensemble::new(seed);
    let half = ensemble_size.div_ceil(2);
    let outcomes: Vec<(String, Option<f64>)> = (0..ensemble_size)
        .into_par_iter()
        .map(|i| {
            let (label, model) = if i < half {
                (format!("member {i} on (0,1)"), &unit)
            } else {
                let (k, m) = &unions[i % unions.len()];
                (format!("member {i} on (0,{k})"), m)
            };
            let f = ens.member(i, model.grid());
            (label, model.evaluate(f.values()).ok().map(|q| q.value))
        })
        .collect();
    let mut all = outcomes;
    if let Some(wf) = witness {
        let q = QuotientModel::new(wf.grid().clone(), n, w.clone())?
            .evaluate(wf.values())
            .ok()
            .map(|q| q.value);
        all.push(("witness".to_string(), q));
    }
    let mut report = SubcriticalReport {
        n,
        lambda: lam,
        tested: 0,
        degenerate: 0,
        violations: 0,
        min_quotient: f64::INFINITY,
        min_source: String::new(),
        violating_sources: Vec::new(),
    };
    for (label, q) in all {
        match q {
            None => report.degenerate += 1,
            Some(v) => {
                report.tested += 1;
                if v < report.min_quotient {
                    report.min_quotient = v;
                    report.min_source = label.clone();
                }
                if v < lam {
                    report.violations += 1;
                    report.violating_sources.push(label);
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_field_quotient() {
        let g = Grid::new(0.0, 1.0, 2001).unwrap();
        let u = Field::from_fn(g, |x| x);
        let q = quotient(&u, 2, &DoubleWell::quartic()).unwrap();
        assert!((q.value - 8.0 / 15.0).abs() < 1e-6, "{}", q.value);
    }

    #[test]
    fn affine_field_is_degenerate_for_n3() {
        let g = Grid::new(0.0, 1.0, 201).unwrap();
        let u = Field::from_fn(g, |x| 0.3 + 2.0 * x);
        assert!(matches!(
            quotient(&u, 3, &DoubleWell::quartic()),
            Err(Error::QuotientUndefined { .. })
        ));
    }

    #[test]
    fn rescaling_leaves_quotient_unchanged() {
        let w = DoubleWell::quartic();
        let g = Grid::new(0.0, 1.0, 301).unwrap();
        let u = Field::from_fn(g.clone(), |x| (4.0 * x).sin() + 0.2 * x);
        for n in [2, 3] {
            let q = quotient(&u, n, &w).unwrap().value;
            for sigma in [0.5, 2.0, 5.0] {
                let us = u.with_grid(g.scaled(sigma).unwrap()).unwrap();
                let qs = quotient(&us, n, &w).unwrap().value;
                assert!((q - qs).abs() / q < 1e-8, "n={n} sigma={sigma}");
            }
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let w = DoubleWell::quartic();
        let g = Grid::new(0.0, 1.0, 101).unwrap();
        let u = Field::from_fn(g.clone(), |x| (3.0 * x).sin() - 0.4);
        let d: Vec<f64> = g.nodes().iter().map(|x| (7.0 * x).cos()).collect();
        let grad = quotient_gradient(&u, 2, &w).unwrap();
        let dd: f64 = grad.iter().zip(&d).map(|(a, b)| a * b).sum();
        let h = 1e-6;
        let shifted = |s: f64| {
            let v: Vec<f64> = u.values().iter().zip(&d).map(|(a, b)| a + s * b).collect();
            quotient(&Field::new(g.clone(), v).unwrap(), 2, &w).unwrap().value
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        assert!((dd - fd).abs() / fd.abs().max(1e-12) < 1e-5, "{dd} vs {fd}");
    }

    #[test]
    fn starts_are_prefix_stable() {
        let g = Grid::new(0.0, 1.0, 51).unwrap();
        for i in 0..8 {
            assert_eq!(lambda_start(&g, 2, 3, i).1, lambda_start(&g, 2, 3, i).1);
        }
    }

    #[test]
    fn zero_lambda_never_violates() {
        let r = verify_subcritical(2, 0.0, 40, &DoubleWell::quartic(), 1, 201, None).unwrap();
        assert!(r.passed());
        assert!(r.tested > 0);
    }
}
