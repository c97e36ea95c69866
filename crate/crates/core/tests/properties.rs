use proptest::prelude::*;

use phasefield::critical::quotient;
use phasefield::discretization::{derivative, DiffOperator};
use phasefield::energy::{evaluate, gradient};
use phasefield::inequalities::check_abstr;
use phasefield::io::{field_from_csv, field_to_csv};
use phasefield::potential::make_quartic;
use phasefield::{EnergyParams, Field, Grid};

/// Smooth field from a few Fourier modes plus a tanh layer.
fn smooth_field(g: Grid, coeffs: &[f64], shift: f64) -> Field {
    Field::from_fn(g, |x| {
        let t = (x - g.a()) / g.length();
        let mut v = (6.0 * (t - 0.5 - shift)).tanh();
        for (k, c) in coeffs.iter().enumerate() {
            v += c * (std::f64::consts::PI * (k + 1) as f64 * t).sin();
        }
        v
    })
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.5f64..0.5, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn energy_without_concave_term_is_nonnegative(c in coeffs(), s in -0.3f64..0.3, n in 2usize..5, eps in 0.02f64..0.5) {
        let g = Grid::new(-1.0, 1.0, 301).unwrap();
        let b = evaluate(&smooth_field(g, &c, s), &EnergyParams::new(n, eps, 0.0).unwrap(), &make_quartic()).unwrap();
        prop_assert!(b.total >= 0.0);
        prop_assert_eq!(b.concave_term, 0.0);
    }

    #[test]
    fn energy_nonincreasing_in_lambda(c in coeffs(), s in -0.3f64..0.3, l1 in 0.0f64..1.0, dl in 0.0f64..1.0) {
        let g = Grid::new(0.0, 1.0, 201).unwrap();
        let u = smooth_field(g, &c, s);
        let w = make_quartic();
        let lo = evaluate(&u, &EnergyParams::new(2, 0.1, l1).unwrap(), &w).unwrap().total;
        let hi = evaluate(&u, &EnergyParams::new(2, 0.1, l1 + dl).unwrap(), &w).unwrap().total;
        prop_assert!(hi <= lo);
    }

    #[test]
    fn gradient_matches_central_difference(c in coeffs(), d in coeffs(), s in -0.3f64..0.3) {
        let g = Grid::new(0.0, 1.0, 161).unwrap();
        let u = smooth_field(g, &c, s);
        let dir = smooth_field(g, &d, -s);
        let p = EnergyParams::new(2, 0.2, 0.4).unwrap();
        let w = make_quartic();
        let grad = gradient(&u, &p, &w).unwrap();
        let analytic: f64 = grad.values().iter().zip(dir.values()).map(|(a, b)| a * b).sum();
        let h = 1e-6;
        let shifted = |sgn: f64| {
            let v: Vec<f64> = u.values().iter().zip(dir.values()).map(|(a, b)| a + sgn * h * b).collect();
            evaluate(&Field::new(g, v).unwrap(), &p, &w).unwrap().total
        };
        let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
        prop_assert!((analytic - fd).abs() / (fd.abs() + 1e-12) < 1e-4, "{} vs {}", analytic, fd);
    }

    #[test]
    fn stencils_annihilate_low_degree_polynomials(k in 1usize..6, deg_off in 1usize..3, a in -2.0f64..2.0, len in 0.5f64..4.0) {
        prop_assume!(deg_off <= k);
        let deg = k - deg_off;
        let g = Grid::new(a, a + len, 121).unwrap();
        let u = Field::from_fn(g, |x| (x - a).powi(deg as i32) + 0.5);
        let op = DiffOperator::new(&g, k).unwrap();
        // roundoff in a k-th difference grows like h^{-k}
        let tol = 1e-12 * g.spacing().powi(-(k as i32)) * (1.0 + len.powi(deg as i32));
        for v in op.apply(u.values()) {
            prop_assert!(v.abs() < tol, "order {} degree {} gives {}", k, deg, v);
        }
    }

    #[test]
    fn derivative_is_exact_on_degree_k(k in 1usize..5, a in -1.0f64..1.0) {
        let g = Grid::new(a, a + 1.0, 101).unwrap();
        let u = Field::from_fn(g, |x| (x - a).powi(k as i32));
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        let tol = 1e-12 * g.spacing().powi(-(k as i32));
        for v in derivative(&u, k).unwrap().values() {
            prop_assert!((v - fact).abs() < tol, "{} vs {}", v, fact);
        }
    }

    #[test]
    fn quotient_invariant_under_affine_change_of_variable(c in coeffs(), s in -0.3f64..0.3, a in -3.0f64..3.0, len in 0.25f64..4.0) {
        let w = make_quartic();
        let unit = Grid::new(0.0, 1.0, 201).unwrap();
        let moved = Grid::new(a, a + len, 201).unwrap();
        let u = smooth_field(unit, &c, s);
        let v = Field::new(moved, u.values().to_vec()).unwrap();
        let (qu, qv) = (quotient(&u, 2, &w).unwrap().value, quotient(&v, 2, &w).unwrap().value);
        prop_assert!((qu - qv).abs() <= 1e-9 * qu.abs().max(1.0), "{} vs {}", qu, qv);
    }

    #[test]
    fn abstr_check_monotone_in_probe_constant(c in coeffs(), s in -0.3f64..0.3, c1 in 0.1f64..10.0, dc in 0.0f64..10.0) {
        let g = Grid::new(0.0, 1.0, 201).unwrap();
        let u = smooth_field(g, &c, s);
        let lo = check_abstr(&u, 1, 2, 2.0, 2.0, c1).unwrap();
        let hi = check_abstr(&u, 1, 2, 2.0, 2.0, c1 + dc).unwrap();
        prop_assert!(hi.rhs >= lo.rhs);
        prop_assert!(!lo.pass || hi.pass);
    }

    #[test]
    fn csv_round_trip_is_bit_exact(vals in prop::collection::vec(-1e6f64..1e6, 3..60), a in -10.0f64..10.0, len in 1e-3f64..10.0) {
        let g = Grid::new(a, a + len, vals.len()).unwrap();
        let f = Field::new(g, vals).unwrap();
        let back = field_from_csv(&field_to_csv(&f)).unwrap();
        prop_assert_eq!(back.values(), f.values());
    }
}
