//! Worked examples of the public operations, across modules.

use std::f64::consts::PI;

use approx::assert_relative_eq;

use phasefield::critical::{estimate_lambda_n, LambdaOptions};
use phasefield::discretization::{derivative, integrate, integrate_with, resample};
use phasefield::energy::{evaluate, evaluate_rescaled, gradient};
use phasefield::ensemble::Ensemble;
use phasefield::experiments::{
    gamma_sweep, minimize_energy, sign_changes, MinimizeEnergyOptions, SweepConfig,
};
use phasefield::hermite::{self, coupling_energy_upper_bound, BoundaryData, CouplingKind};
use phasefield::inequalities::{
    check_lower_bound_lemma, empirical_nirineq_constant, intlem_constant, run_ensemble, GNParams,
};
use phasefield::potential::{make_quartic, validate_assumptions};
use phasefield::profile::{
    build_recovery, estimate_constants, minimize_profile, ConstantOptions, JumpFunction, ProfileInit,
    ProfileOptions, ProfileProblem,
};
use phasefield::{DoubleWell, EnergyParams, Field, Grid, Quadrature};

const LAMBDA_2: f64 = 0.0569;

fn quartic() -> DoubleWell {
    make_quartic()
}

#[test]
fn quartic_values_and_validation() {
    let w = quartic();
    assert_eq!(w.eval(0.0), 1.0);
    assert_eq!(w.eval(1.0), 0.0);
    assert_eq!(w.eval(-1.0), 0.0);
    assert_eq!(w.coercivity(), 1.0);
    assert!(validate_assumptions(&w, 3.0, 10_000).unwrap().all_passed());
}

#[test]
fn derivative_of_sine() {
    let g = Grid::new(0.0, PI, 401).unwrap();
    let d = derivative(&Field::from_fn(g, f64::sin), 3).unwrap();
    let err = g.nodes().iter().zip(d.values()).map(|(x, v)| (v + x.cos()).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "max error {err}");
}

#[test]
fn quadrature_examples() {
    let g = Grid::new(-1.0, 1.0, 2001).unwrap();
    let f = Field::from_fn(g, |x| (x * x - 1.0).powi(2));
    assert!((integrate(&f) - 16.0 / 15.0).abs() < 1e-6);
    assert!((integrate_with(&f, Quadrature::Simpson) - 16.0 / 15.0).abs() < 1e-8);
    let c = Field::constant(Grid::new(0.0, 2.0, 11).unwrap(), 1.0);
    assert!((integrate(&c) - 2.0).abs() < 1e-15);
}

#[test]
fn resample_tanh() {
    let coarse = Field::from_fn(Grid::new(-1.0, 1.0, 101).unwrap(), |x| (5.0 * x).tanh());
    let fine = resample(&coarse, 401).unwrap();
    let err = fine
        .grid()
        .nodes()
        .iter()
        .zip(fine.values())
        .map(|(x, v)| (v - (5.0 * x).tanh()).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "interpolation error {err}");
}

#[test]
fn energy_decomposition_and_signs() {
    let w = quartic();
    let g = Grid::new(0.0, 1.0, 301).unwrap();
    let ens = Ensemble::new(5);
    for f in ens.members(20, &g) {
        let b = evaluate(&f, &EnergyParams::new(2, 0.1, 0.3).unwrap(), &w).unwrap();
        let b0 = evaluate(&f, &EnergyParams::new(2, 0.1, 0.0).unwrap(), &w).unwrap();
        assert!(b.potential_term >= 0.0 && b.highest_term >= 0.0 && b.concave_term <= 0.0);
        assert_eq!(b.total, b.potential_term + b.concave_term + b.highest_term);
        assert_eq!(b0.total, b.potential_term + b.highest_term);
    }
}

#[test]
fn rescaled_tanh_profile() {
    let w = quartic();
    let eps = 0.05;
    let g = Grid::new(-1.0, 1.0, (32.0 * 2.0 / eps) as usize + 1).unwrap();
    let f = Field::from_fn(g, |x| (x / (eps * 2f64.sqrt())).tanh());
    let p = EnergyParams::new(2, eps, 0.1).unwrap();
    let direct = evaluate(&f, &p, &w).unwrap().total;
    let scaled = evaluate_rescaled(&f, &p, &w).unwrap();
    assert!((direct - scaled).abs() < 1e-4 * direct.abs());
}

#[test]
fn gradient_vanishes_at_constant_critical_points() {
    let w = quartic();
    let g = Grid::new(0.0, 1.0, 101).unwrap();
    let p = EnergyParams::new(3, 0.2, 0.5).unwrap();
    for c in [1.0, -1.0, 0.0] {
        let d = gradient(&Field::constant(g, c), &p, &w).unwrap();
        assert!(d.values().iter().all(|v| v.abs() <= 1e-12));
    }
}

#[test]
fn hermite_worked_examples() {
    let y = BoundaryData::new(vec![-1.0, 0.0]).unwrap();
    let p = hermite::solve_zeta(&y).unwrap();
    for (a, b) in p.coefficients.iter().zip([-1.0, 0.0, 6.0, -4.0]) {
        assert!((a - b).abs() < 1e-14);
    }
    assert_eq!(p.eval(1.0, 1), 0.0);
    let q = hermite::solve_eta(&BoundaryData::new(vec![1.0, 0.0]).unwrap()).unwrap();
    for x in [0.0, 0.3, 0.8, 1.0] {
        assert!((q.eval(x, 0) - (-1.0 + 6.0 * x * x - 4.0 * x.powi(3))).abs() < 1e-14);
    }
    let c = hermite::solve_eta(&BoundaryData::new(vec![-1.0, 0.0]).unwrap()).unwrap();
    assert!(c.coefficients[1..].iter().all(|v| *v == 0.0) && c.coefficients[0] == -1.0);
}

#[test]
fn coupling_energy_examples() {
    let w = quartic();
    for lam in [0.0, 0.03, 1.0] {
        for n in 2..=5 {
            let e1 = BoundaryData::unit(n).unwrap();
            assert_eq!(coupling_energy_upper_bound(&e1, CouplingKind::Zeta, lam, &w, 201).unwrap(), 0.0);
        }
    }
    // the perturbation enters quadratically, so each decade drops the bound by about 100
    let mut prev = f64::INFINITY;
    for d in [1e-1, 1e-2, 1e-3, 1e-4] {
        let y = BoundaryData::new(vec![1.0 + d, 0.0, 0.0]).unwrap();
        let e = coupling_energy_upper_bound(&y, CouplingKind::Zeta, 0.0, &w, 401).unwrap();
        assert!(e > 0.0 && e < prev);
        if prev.is_finite() && d < 1e-2 {
            assert!(prev / e > 90.0, "ratio {}", prev / e);
        }
        prev = e;
    }
}

#[test]
fn profile_tail_insensitivity_and_descent() {
    let w = quartic();
    let run = |t: f64| {
        let p = ProfileProblem::new(2, 0.0, t, (100.0 * 2.0 * t) as usize + 1, w.clone()).unwrap();
        minimize_profile(&p, &ProfileOptions::default()).unwrap()
    };
    let (a, b) = (run(6.0), run(12.0));
    assert!(a.converged && b.converged);
    assert!((a.energy_estimate - b.energy_estimate).abs() < 1e-4);

    let p = ProfileProblem::new(3, 0.0, 8.0, 801, w).unwrap();
    let opts = ProfileOptions {
        inits: vec![ProfileInit::HermiteStep { half_width: 1.0 }],
        ..ProfileOptions::default()
    };
    let r = minimize_profile(&p, &opts).unwrap();
    assert!(r.energy_estimate <= r.initial_energy);
    assert!(r.energy_estimate > 0.0);
}

#[test]
fn constants_at_zero_lambda_coincide() {
    let e = estimate_constants(
        2,
        0.0,
        &quartic(),
        &ProfileOptions::default(),
        &ConstantOptions {
            truncation_t: 6.0,
            points: 1201,
            ..ConstantOptions::default()
        },
    )
    .unwrap();
    assert_eq!(e.c_hat_0, e.c_hat_lam);
    assert!(e.c_hat_0 > 0.0);
}

#[test]
fn recovery_examples() {
    let w = quartic();
    let profile = Field::from_fn(Grid::new(-4.0, 4.0, 801).unwrap(), |x| (x / 2f64.sqrt()).tanh());
    let none = JumpFunction::new(-1.0, 1.0, vec![], 1.0).unwrap();
    let r = build_recovery(&none, &profile, 0.05, 32.0).unwrap();
    assert!(r.values().iter().all(|v| *v == 1.0));
    assert_eq!(evaluate(&r, &EnergyParams::new(2, 0.05, 0.01).unwrap(), &w).unwrap().total, 0.0);

    let one = JumpFunction::new(-1.0, 1.0, vec![0.0], -1.0).unwrap();
    for eps in [0.1, 0.05, 0.025] {
        let r = build_recovery(&one, &profile, eps, 32.0).unwrap();
        let diff = Field::from_fn(*r.grid(), |x| (r.sample_at(x) - one.value_at(x)).abs());
        assert!(integrate(&diff) <= 4.0 * eps * 4.0);
    }
    assert!(build_recovery(&one, &profile, 0.3, 32.0).is_err());
}

#[test]
fn lambda_hat_refinement_and_monotonicity() {
    let w = quartic();
    let at = |points: usize, starts: usize| {
        estimate_lambda_n(2, &w, &LambdaOptions { points, starts, ..LambdaOptions::default() })
            .unwrap()
            .lambda_hat
    };
    let (coarse, fine) = (at(501, 8), at(2001, 8));
    assert!(coarse > 0.0);
    assert!((coarse - fine).abs() < 0.005 * fine, "{coarse} vs {fine}");
    assert!(at(501, 16) <= coarse);
}

#[test]
fn lambda_hat_positive_for_higher_orders() {
    let w = quartic();
    for n in [3, 4] {
        let e = estimate_lambda_n(n, &w, &LambdaOptions { points: 301, starts: 8, ..LambdaOptions::default() })
            .unwrap();
        assert!(e.lambda_hat > 0.0 && e.lambda_hat.is_finite());
    }
}

#[test]
fn inequality_examples() {
    assert_eq!(intlem_constant(1.0), 16.0);
    for n in 2..=5 {
        for k in 1..n {
            assert!(GNParams::energy_family(n, k).is_ok());
        }
    }
    let c = empirical_nirineq_constant(2, 1000, 1, 201).unwrap();
    assert!(c > 0.0 && c < 1.0, "c(2) = {c}");

    let w = quartic();
    let p = EnergyParams::new(2, 1.0 / 32.0, 0.3 * LAMBDA_2).unwrap();
    let g = Grid::new(-1.0, 1.0, 2049).unwrap();
    let layer = Field::from_fn(g, |x| (x / (p.epsilon * 2f64.sqrt())).tanh());
    assert!(check_lower_bound_lemma(&layer, &p, LAMBDA_2, 0.05, &w).unwrap().pass);

    let p = EnergyParams::new(2, 1.0 / 32.0, 0.5 * LAMBDA_2).unwrap();
    let ens = Ensemble::new(12);
    let unit = Grid::new(0.0, 1.0, 401).unwrap();
    let rep = run_ensemble("lowerbound", 12, 500, |i| ens.member(i, &unit), |u| {
        check_lower_bound_lemma(u, &p, LAMBDA_2, 0.05, &w)
    });
    assert!(rep.passed(), "{} violations", rep.failures);
}

#[test]
fn mass_constraint_on_symmetric_interval() {
    let g = Grid::new(-1.0, 1.0, 513).unwrap();
    let init = Field::from_fn(g, |x| (x / 0.2).tanh());
    let m = minimize_energy(
        &EnergyParams::new(2, 1.0 / 16.0, 0.3 * LAMBDA_2).unwrap(),
        &init,
        &quartic(),
        &MinimizeEnergyOptions {
            mass: Some(0.0),
            ..Default::default()
        },
    )
    .unwrap();
    let mean = integrate(&m.field) / 2.0;
    assert!(mean.abs() < 1e-10, "mean {mean}");
    assert!(m.breakdown.total <= m.initial_energy);
}

#[test]
fn supercritical_run_hits_the_floor_oscillating() {
    let eps = 1.0 / 16.0;
    let g = Grid::new(0.0, 1.0, 513).unwrap();
    let init = Field::from_fn(g, |x| 0.5 * (6.0 * PI * x).sin());
    let m = minimize_energy(
        &EnergyParams::new(2, eps, 10.0).unwrap(),
        &init,
        &quartic(),
        &MinimizeEnergyOptions {
            divergence_floor: Some(-1e3 * 2.1),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(m.diverged());
    assert!(sign_changes(m.field.values()) >= 4);
}

#[test]
fn sweep_without_jumps_and_determinism() {
    let j = JumpFunction::new(-1.0, 1.0, vec![], 1.0).unwrap();
    let mut cfg = SweepConfig::new(2, 0.3 * LAMBDA_2, j);
    cfg.lambda_hat = Some(LAMBDA_2);
    cfg.epsilons = vec![0.125, 0.0625];
    let r = gamma_sweep(&cfg).unwrap();
    for row in &r.rows {
        assert_eq!(row.e_recovery, Some(0.0));
        assert_eq!(row.e_min, Some(0.0));
        assert_eq!(row.jumps_detected, Some(0));
    }

    let j = JumpFunction::new(-1.0, 1.0, vec![0.1], 1.0).unwrap();
    let mut cfg = SweepConfig::new(2, 0.3 * LAMBDA_2, j);
    cfg.lambda_hat = Some(LAMBDA_2);
    cfg.epsilons = vec![0.1, 0.05, 0.025];
    let a = gamma_sweep(&cfg).unwrap();
    let b = gamma_sweep(&cfg).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.config_hash, b.config_hash);
    assert!(a.rows[0].error.is_some(), "eps*T = 0.6 exceeds the jump spacing");
    for row in &a.rows[1..] {
        let (lo, hi) = (row.e_min.unwrap(), row.e_recovery.unwrap());
        assert!(lo <= hi + 1e-9);
        assert_relative_eq!(hi, a.c_hat, max_relative = 0.05);
        assert_eq!(row.jumps_detected, Some(1));
    }
}

#[test]
fn sweep_rejects_supercritical_lambda() {
    let j = JumpFunction::new(-1.0, 1.0, vec![0.0], -1.0).unwrap();
    let mut cfg = SweepConfig::new(2, LAMBDA_2, j);
    cfg.lambda_hat = Some(LAMBDA_2);
    assert!(gamma_sweep(&cfg).is_err());
}
