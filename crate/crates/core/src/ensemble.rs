//! Seeded ensembles of smooth random fields for property checks.
//!
//! Member `i` of an ensemble with seed `s` is drawn from its own ChaCha8
//! stream seeded with `s + i`, so members do not depend on the ensemble size
//! or on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{Field, Grid};
use crate::hermite::{self, BoundaryData, CouplingKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    /// Trigonometric sum with coefficients decaying like `k⁻²`.
    Fourier,
    /// Shifted and scaled `tanh` ramp.
    Tanh,
    /// Hermite coupling polynomial with random data at the left end.
    Hermite,
    /// Affine function.
    Affine,
}

impl FieldKind {
    pub const ALL: [FieldKind; 4] = [
        FieldKind::Fourier,
        FieldKind::Tanh,
        FieldKind::Hermite,
        FieldKind::Affine,
    ];
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub seed: u64,
    pub kinds: Vec<FieldKind>,
}

impl Ensemble {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            kinds: FieldKind::ALL.to_vec(),
        }
    }

    pub fn with_kinds(seed: u64, kinds: Vec<FieldKind>) -> Self {
        assert!(!kinds.is_empty(), "ensemble needs at least one field kind");
        Self { seed, kinds }
    }

    pub fn rng(&self, index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(index as u64))
    }

    pub fn kind_of(&self, index: usize) -> FieldKind {
        self.kinds[index % self.kinds.len()]
    }

    /// Member `index` sampled on `grid`.
    pub fn member(&self, index: usize, grid: &Grid) -> Field {
        let mut rng = self.rng(index);
        random_field(self.kind_of(index), grid, &mut rng)
    }

    /// Member `index` on a random interval `(a, a + len)` with
    /// `a ∈ [−2, 2)` and `len ∈ [1/4, 4)` (log-uniform), sampled at `points`
    /// nodes. The interval is drawn from the member's own stream.
    pub fn member_on_random_interval(&self, index: usize, points: usize) -> Field {
        let mut rng = self.rng(index);
        let a = rng.gen_range(-2.0..2.0);
        let len = 2f64.powf(rng.gen_range(-2.0..2.0));
        let grid = Grid::new(a, a + len, points).expect("positive length and at least two points");
        random_field(self.kind_of(index), &grid, &mut rng)
    }

    pub fn members(&self, count: usize, grid: &Grid) -> Vec<Field> {
        (0..count).map(|i| self.member(i, grid)).collect()
    }
}

/// A random field of the given kind; the shape is drawn in the normalized
/// coordinate `t = (x − a)/|I| ∈ [0, 1]`.
pub fn random_field(kind: FieldKind, grid: &Grid, rng: &mut impl Rng) -> Field {
    let (a, len) = (grid.a(), grid.length());
    let norm = move |x: f64| (x - a) / len;
    match kind {
        FieldKind::Fourier => {
            let modes = rng.gen_range(1..=8usize);
            let amp = rng.gen_range(0.3..1.8);
            let c0 = rng.gen_range(-0.5..0.5);
            let coeffs: Vec<(f64, f64)> = (1..=modes)
                .map(|k| {
                    let d = amp / (k * k) as f64;
                    (rng.gen_range(-d..d), rng.gen_range(-d..d))
                })
                .collect();
            Field::from_fn(grid.clone(), |x| {
                let t = norm(x) * std::f64::consts::PI;
                c0 + coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, (c, s))| {
                        let kt = (k + 1) as f64 * t;
                        c * kt.cos() + s * kt.sin()
                    })
                    .sum::<f64>()
            })
        }
        FieldKind::Tanh => {
            let amp = rng.gen_range(0.5..1.5);
            let center = rng.gen_range(0.2..0.8);
            let width = rng.gen_range(0.05..0.5);
            let offset = rng.gen_range(-0.2..0.2);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            Field::from_fn(grid.clone(), |x| {
                offset + sign * amp * ((norm(x) - center) / width).tanh()
            })
        }
        FieldKind::Hermite => {
            let n = rng.gen_range(2..=4usize);
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let kind = if rng.gen_bool(0.5) {
                CouplingKind::Zeta
            } else {
                CouplingKind::Eta
            };
            let poly = hermite::solve(&BoundaryData::new(y).expect("n in range"), kind)
                .expect("coupling system is nonsingular");
            Field::from_fn(grid.clone(), |x| poly.eval(norm(x), 0))
        }
        FieldKind::Affine => {
            let c = rng.gen_range(-1.0..1.0);
            let s = rng.gen_range(-2.5..2.5);
            Field::from_fn(grid.clone(), |x| c + s * (norm(x) - 0.5))
        }
    }
}

/// A random smooth direction (Fourier kind, unit sup-norm scale).
pub fn random_direction(grid: &Grid, rng: &mut impl Rng) -> Vec<f64> {
    random_field(FieldKind::Fourier, grid, rng).into_values()
}
