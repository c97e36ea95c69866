//! Double-well potentials with wells at ±1 and a numerical check of the
//! standing assumptions: nonnegativity (W1), zeros exactly at the wells (W2)
//! and quadratic coercivity `W(t) ≥ L (t ∓ 1)²` for `±t > 0` (W3).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A double-well potential supplied in closed form together with its derivative.
#[derive(Clone)]
pub struct DoubleWell {
    name: String,
    w: ScalarFn,
    dw: ScalarFn,
    coercivity: f64,
}

impl fmt::Debug for DoubleWell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DoubleWell")
            .field("name", &self.name)
            .field("coercivity", &self.coercivity)
            .finish()
    }
}

impl DoubleWell {
    /// `coercivity` is the user-claimed `L`; it is checked by [`validate_assumptions`], not here.
    pub fn new<W, D>(name: impl Into<String>, w: W, dw: D, coercivity: f64) -> Result<Self>
    where
        W: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(coercivity > 0.0 && coercivity.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "coercivity constant must be positive, got {coercivity}"
            )));
        }
        Ok(Self {
            name: name.into(),
            w: Arc::new(w),
            dw: Arc::new(dw),
            coercivity,
        })
    }

    /// `W(t) = (t − 1)²(t + 1)²` with `L = 1`.
    pub fn quartic() -> Self {
        Self {
            name: "quartic".to_string(),
            w: Arc::new(|t: f64| {
                let s = t * t - 1.0;
                s * s
            }),
            dw: Arc::new(|t: f64| 4.0 * t * t * t - 4.0 * t),
            coercivity: 1.0,
        }
    }

    /// Built-in potentials selectable from configuration files.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "quartic" => Ok(Self::quartic()),
            other => Err(Error::UnknownPotential(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.w)(t)
    }

    #[inline]
    pub fn eval_derivative(&self, t: f64) -> f64 {
        (self.dw)(t)
    }

    pub fn coercivity(&self) -> f64 {
        self.coercivity
    }

    pub fn wells(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    /// Mean of `W''(±1)` by a central difference of `W'`; used to scale preconditioners.
    pub fn well_curvature(&self) -> f64 {
        let h = 1e-4;
        let c = |t: f64| (self.eval_derivative(t + h) - self.eval_derivative(t - h)) / (2.0 * h);
        0.5 * (c(1.0) + c(-1.0))
    }
}

/// Same as [`DoubleWell::quartic`].
pub fn make_quartic() -> DoubleWell {
    DoubleWell::quartic()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// `W ≥ 0`.
    Nonnegative,
    /// `W(t) = 0` iff `t = ±1`.
    WellsOnly,
    /// `W(t) ≥ L (t ∓ 1)²` for `±t > 0`.
    Coercive,
    /// `W'` agrees with a central difference of `W`.
    DerivativeConsistent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    /// Sample with the smallest margin (or largest error for the derivative check).
    pub worst_point: f64,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub potential: String,
    pub range_radius: f64,
    pub samples: usize,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, a: Assumption) -> &AssumptionCheck {
        self.checks
            .iter()
            .find(|c| c.assumption == a)
            .expect("every assumption is checked")
    }
}

fn sample_points(range_radius: f64, samples: usize) -> impl Iterator<Item = f64> {
    let step = 2.0 * range_radius / (samples - 1) as f64;
    (0..samples).map(move |i| -range_radius + i as f64 * step)
}

/// Checks (W1)–(W3) and the derivative on `samples` equispaced points of `[−R, R]`.
///
/// Violations are report content, not errors.
pub fn validate_assumptions(
    w: &DoubleWell,
    range_radius: f64,
    samples: usize,
) -> Result<ValidationReport> {
    if samples < 100 {
        return Err(Error::InvalidParameter(format!(
            "validation needs at least 100 samples, got {samples}"
        )));
    }
    if !(range_radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "range radius must be positive, got {range_radius}"
        )));
    }
    let l = w.coercivity();

    let mut nonneg = (f64::INFINITY, 0.0);
    let mut wells = (f64::INFINITY, 0.0);
    let mut coercive = (f64::INFINITY, 0.0);
    let mut deriv = (0.0_f64, 0.0);

    let mut wells_vanish = true;
    for t in [-1.0, 1.0] {
        let v = w.eval(t);
        if v != 0.0 {
            wells_vanish = false;
            if -v.abs() < wells.0 {
                wells = (-v.abs(), t);
            }
        }
    }

    let fd_step = 1e-5;
    for t in sample_points(range_radius, samples) {
        let v = w.eval(t);
        if v < nonneg.0 {
            nonneg = (v, t);
        }
        if t != 1.0 && t != -1.0 && v < wells.0 {
            wells = (v, t);
        }
        if t != 0.0 {
            let d = if t > 0.0 { t - 1.0 } else { t + 1.0 };
            let margin = v - l * d * d;
            if margin < coercive.0 {
                coercive = (margin, t);
            }
        }
        let fd = (w.eval(t + fd_step) - w.eval(t - fd_step)) / (2.0 * fd_step);
        let exact = w.eval_derivative(t);
        let err = (fd - exact).abs() / exact.abs().max(1.0);
        if err > deriv.0 {
            deriv = (err, t);
        }
    }

    let checks = vec![
        AssumptionCheck {
            assumption: Assumption::Nonnegative,
            passed: nonneg.0 >= 0.0,
            worst_point: nonneg.1,
            worst_margin: nonneg.0,
        },
        AssumptionCheck {
            assumption: Assumption::WellsOnly,
            passed: wells_vanish && wells.0 > 0.0,
            worst_point: wells.1,
            worst_margin: wells.0,
        },
        AssumptionCheck {
            assumption: Assumption::Coercive,
            passed: coercive.0 >= -1e-12,
            worst_point: coercive.1,
            worst_margin: coercive.0,
        },
        AssumptionCheck {
            assumption: Assumption::DerivativeConsistent,
            passed: deriv.0 < 1e-6,
            worst_point: deriv.1,
            worst_margin: deriv.0,
        },
    ];

    Ok(ValidationReport {
        potential: w.name().to_string(),
        range_radius,
        samples,
        checks,
    })
}

/// Largest `L` consistent with the samples: `inf W(t)/(t ∓ 1)²` over `±t > 0`.
pub fn estimate_coercivity(w: &DoubleWell, range_radius: f64, samples: usize) -> f64 {
    sample_points(range_radius, samples.max(2))
        .filter(|&t| t != 0.0)
        .filter_map(|t| {
            let d = if t > 0.0 { t - 1.0 } else { t + 1.0 };
            (d != 0.0).then(|| w.eval(t) / (d * d))
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartic_values() {
        let w = make_quartic();
        assert_eq!(w.eval(0.0), 1.0);
        assert_eq!(w.eval(1.0), 0.0);
        assert_eq!(w.eval(-1.0), 0.0);
        assert_eq!(w.coercivity(), 1.0);
        assert_eq!(w.wells(), (-1.0, 1.0));
        assert!((w.well_curvature() - 8.0).abs() < 1e-6);
    }

    #[test]
    fn quartic_coercivity_oracle() {
        // W(t)/(t-1)^2 = (t+1)^2 on t > 0 has infimum 1 as t -> 0+
        let w = make_quartic();
        let l = estimate_coercivity(&w, 3.0, 10_001);
        assert!(l >= 1.0 && l < 1.0 + 1e-3, "{l}");
    }

    #[test]
    fn quartic_passes_validation() {
        let report = validate_assumptions(&make_quartic(), 3.0, 10_000).unwrap();
        assert!(report.all_passed(), "{report:?}");
    }

    #[test]
    fn overclaimed_coercivity_fails_near_zero() {
        let w = DoubleWell::new(
            "quartic-L5",
            |t: f64| (t * t - 1.0).powi(2),
            |t: f64| 4.0 * t * t * t - 4.0 * t,
            5.0,
        )
        .unwrap();
        let report = validate_assumptions(&w, 3.0, 10_000).unwrap();
        let c = report.check(Assumption::Coercive);
        assert!(!c.passed);
        assert!(c.worst_point.abs() < 0.1, "{c:?}");
        assert!(report.check(Assumption::Nonnegative).passed);
    }

    #[test]
    fn abs_well_is_quadratically_coercive_with_unit_constant() {
        // |t^2 - 1| = |t - 1|(t + 1) >= (t - 1)^2 for t > 0, so L = 1 is admissible
        let w = DoubleWell::new(
            "abs",
            |t: f64| (t * t - 1.0).abs(),
            |t: f64| 2.0 * t * (t * t - 1.0).signum(),
            1.0,
        )
        .unwrap();
        let report = validate_assumptions(&w, 3.0, 10_000).unwrap();
        assert!(report.check(Assumption::Coercive).passed);
        // L = 1.5 breaks for small |t|
        let w15 = DoubleWell::new("abs", |t: f64| (t * t - 1.0).abs(), |t: f64| 2.0 * t, 1.5).unwrap();
        let report = validate_assumptions(&w15, 3.0, 10_000).unwrap();
        let c = report.check(Assumption::Coercive);
        assert!(!c.passed && c.worst_point.abs() < 0.2, "{c:?}");
    }

    #[test]
    fn subquadratic_wells_fail_coercivity_near_the_well() {
        let w = DoubleWell::new(
            "flat",
            |t: f64| (t * t - 1.0).powi(4),
            |t: f64| 8.0 * t * (t * t - 1.0).powi(3),
            1.0,
        )
        .unwrap();
        let report = validate_assumptions(&w, 3.0, 10_000).unwrap();
        let c = report.check(Assumption::Coercive);
        assert!(!c.passed);
        assert!((c.worst_point.abs() - 1.0).abs() < 0.5, "{c:?}");
    }

    #[test]
    fn extra_zero_fails_wells_check() {
        // vanishes on all of [-0.5, 0.5]
        let w = DoubleWell::new(
            "plateau",
            |t: f64| ((t * t - 1.0) * (t.abs() - 0.5).max(0.0)).powi(2),
            |_t: f64| 0.0,
            1.0,
        )
        .unwrap();
        let report = validate_assumptions(&w, 3.0, 10_001).unwrap();
        assert!(!report.check(Assumption::WellsOnly).passed);
    }

    #[test]
    fn wrong_derivative_is_detected() {
        let w = DoubleWell::new("bad", |t: f64| (t * t - 1.0).powi(2), |t: f64| 4.0 * t, 1.0).unwrap();
        let report = validate_assumptions(&w, 3.0, 1000).unwrap();
        assert!(!report.check(Assumption::DerivativeConsistent).passed);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        assert!(validate_assumptions(&make_quartic(), 3.0, 99).is_err());
        assert!(DoubleWell::by_name("sextic").is_err());
    }

    #[test]
    fn quartic_is_even_and_bounds_abs() {
        let w = make_quartic();
        let l = w.coercivity();
        for t in sample_points(3.0, 2001) {
            assert_eq!(w.eval(t), w.eval(-t));
            assert!(w.eval(t) / (2.0 * l) + 1.5 >= t.abs() - 1e-12);
        }
    }
}
