//! Two-point Hermite polynomials that couple boundary data at one end of
//! `[0, 1]` to a pure phase at the other.
//!
//! A polynomial `p(x) = Σ a_i x^i` of degree `≤ 2n−1` is fixed by `p^{(k)}(0)`
//! and `p^{(k)}(1)` for `k < n`. In coefficient form this is a `2n × 2n`
//! block lower-triangular system
//!
//! ```text
//! [ A 0 ] [a_lo]   [data at 0]        A_ii = (i−1)!
//! [ B C ] [a_hi] = [data at 1]        B_ij = (j−1)!/(j−i)!   (j ≥ i)
//!                                     C_ij = (n+j−1)!/(n+j−i)!
//! ```
//!
//! whose determinant is `(∏_{i=1}^n (i−1)!)²`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::DoubleWell;

/// Largest supported number of boundary conditions per end. Keeps every
/// factorial in the system below 2⁵³, so float entries are exact.
pub const N_MAX: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    y: Vec<f64>,
}

impl BoundaryData {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.len() < 2 || y.len() > N_MAX {
            return Err(Error::UnsupportedOrder {
                order: y.len(),
                max: N_MAX,
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("boundary data must be finite".into()));
        }
        Ok(Self { y })
    }

    /// `(1, 0, …, 0)`: the data of the constant `+1`.
    pub fn unit(n: usize) -> Result<Self> {
        let mut y = vec![0.0; n];
        if let Some(first) = y.first_mut() {
            *first = 1.0;
        }
        Self::new(y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    /// Data at 0, the value `+1` (all higher derivatives zero) at 1.
    Zeta,
    /// The value `−1` (all higher derivatives zero) at 0, data at 1.
    Eta,
}

impl std::str::FromStr for CouplingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeta" => Ok(Self::Zeta),
            "eta" => Ok(Self::Eta),
            other => Err(Error::Parse(format!("unknown coupling kind '{other}'"))),
        }
    }
}

/// Coefficients `a_i` of `Σ a_i x^i`. Each coefficient is the unevaluated
/// sum `coefficients[i] + corrections[i]`; the correction word carries the
/// rounding error of the first, which matters once `n ≥ 5` because the
/// derivative conditions at 1 cancel terms of size `10⁸` and more.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingPolynomial {
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub corrections: Vec<f64>,
    pub kind: CouplingKind,
}

impl CouplingPolynomial {
    /// A polynomial with plain `f64` coefficients.
    pub fn from_coefficients(coefficients: Vec<f64>, kind: CouplingKind) -> Self {
        Self {
            corrections: vec![0.0; coefficients.len()],
            coefficients,
            kind,
        }
    }

    fn from_pairs(pairs: Vec<(f64, f64)>, kind: CouplingKind) -> Self {
        let (coefficients, corrections) = pairs.into_iter().unzip();
        Self {
            coefficients,
            corrections,
            kind,
        }
    }

    fn pair(&self, i: usize) -> (f64, f64) {
        (self.coefficients[i], self.corrections.get(i).copied().unwrap_or(0.0))
    }

    pub fn n(&self) -> usize {
        self.coefficients.len() / 2
    }

    pub fn eval(&self, x: f64, k: usize) -> f64 {
        eval_poly(self, x, k)
    }

    /// Largest violation of the boundary conditions of its kind.
    pub fn boundary_residual(&self, y: &BoundaryData) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let (at0, at1) = match self.kind {
                CouplingKind::Zeta => (y.y[k], if k == 0 { 1.0 } else { 0.0 }),
                CouplingKind::Eta => (if k == 0 { -1.0 } else { 0.0 }, y.y[k]),
            };
            worst = worst
                .max((self.eval(0.0, k) - at0).abs())
                .max((self.eval(1.0, k) - at1).abs());
        }
        worst
    }
}

fn check_n(n: usize) -> Result<()> {
    if !(2..=N_MAX).contains(&n) {
        return Err(Error::UnsupportedOrder { order: n, max: N_MAX });
    }
    Ok(())
}

/// `m!/(m−k)!` as an integer.
fn falling(m: usize, k: usize) -> u64 {
    ((m - k + 1)..=m).map(|v| v as u64).product()
}

fn matrix_entry(n: usize, row: usize, col: usize) -> u64 {
    if row < n {
        // k-th derivative at 0 picks k!·a_k
        if row == col {
            falling(row, row)
        } else {
            0
        }
    } else {
        // k-th derivative at 1: Σ_{l ≥ k} l!/(l−k)! a_l
        let k = row - n;
        if col >= k {
            falling(col, k)
        } else {
            0
        }
    }
}

pub fn coefficient_matrix(n: usize) -> Result<Vec<Vec<f64>>> {
    check_n(n)?;
    Ok((0..2 * n)
        .map(|r| (0..2 * n).map(|c| matrix_entry(n, r, c) as f64).collect())
        .collect())
}

pub fn coefficient_matrix_exact(n: usize) -> Result<Vec<Vec<BigInt>>> {
    check_n(n)?;
    Ok((0..2 * n)
        .map(|r| (0..2 * n).map(|c| BigInt::from(matrix_entry(n, r, c))).collect())
        .collect())
}

/// `D_ij = binom(n+j−1, i−1)` (1-based), the scaled lower-right block.
pub fn binomial_matrix(n: usize) -> Result<Vec<Vec<BigInt>>> {
    check_n(n)?;
    let binom = |m: usize, k: usize| -> BigInt {
        let mut b = BigInt::one();
        for t in 0..k {
            b = b * BigInt::from(m - t) / BigInt::from(t + 1);
        }
        b
    };
    Ok((1..=n)
        .map(|i| (1..=n).map(|j| binom(n + j - 1, i - 1)).collect())
        .collect())
}

/// `∏_{i=1}^n (i−1)!`.
pub fn factorial_product(n: usize) -> BigInt {
    let mut p = BigInt::one();
    let mut f = BigInt::one();
    for i in 1..=n {
        if i > 1 {
            f *= BigInt::from(i - 1);
        }
        p *= &f;
    }
    p
}

/// Exact determinant by fraction-free (Bareiss) elimination.
pub fn determinant_exact(m: &[Vec<BigInt>]) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a: Vec<Vec<BigInt>> = m.to_vec();
    let mut sign = 1i32;
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                a[i][j] = v;
            }
        }
        prev = a[k][k].clone();
    }
    let d = a[n - 1][n - 1].clone();
    if sign < 0 {
        -d
    } else {
        d
    }
}

/// Row selection rule for the elimination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pivoting {
    /// Largest magnitude in the column.
    Partial,
    /// Bottom-most nonzero entry; an independent elimination order.
    LastNonzero,
}

/// Gaussian elimination in exact rational arithmetic.
/// The matrix has integer entries and the data are exact binary fractions,
/// so the solution is exact; it is returned as double-double pairs.
fn solve_exact(m: &[Vec<f64>], rhs: &[f64], pivoting: Pivoting) -> Result<Vec<BigRational>> {
    let n = rhs.len();
    let to_q = |v: f64| {
        BigRational::from_float(v)
            .ok_or_else(|| Error::InvalidParameter(format!("non-finite entry {v}")))
    };
    let mut a: Vec<Vec<BigRational>> = m
        .iter()
        .map(|row| row.iter().map(|&v| to_q(v)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut b: Vec<BigRational> = rhs.iter().map(|&v| to_q(v)).collect::<Result<_>>()?;
    for k in 0..n {
        let mut p = k;
        match pivoting {
            Pivoting::Partial => {
                for r in k + 1..n {
                    if a[r][k].abs() > a[p][k].abs() {
                        p = r;
                    }
                }
            }
            Pivoting::LastNonzero => {
                if let Some(r) = (k..n).rev().find(|&r| !a[r][k].is_zero()) {
                    p = r;
                }
            }
        }
        if a[p][k].is_zero() {
            return Err(Error::InvalidParameter("singular coupling system".into()));
        }
        a.swap(k, p);
        b.swap(k, p);
        for r in k + 1..n {
            if a[r][k].is_zero() {
                continue;
            }
            let f = &a[r][k] / &a[k][k];
            for c in k..n {
                let t = &f * &a[k][c];
                a[r][c] -= t;
            }
            let t = &f * &b[k];
            b[r] -= t;
        }
    }
    let mut x: Vec<BigRational> = vec![BigRational::zero(); n];
    for k in (0..n).rev() {
        let mut s = b[k].clone();
        for c in k + 1..n {
            s -= &a[k][c] * &x[c];
        }
        x[k] = s / &a[k][k];
    }
    Ok(x)
}

fn split_double_double(q: &BigRational) -> (f64, f64) {
    let hi = q.to_f64().unwrap_or(f64::NAN);
    let lo = BigRational::from_float(hi)
        .map(|h| (q - h).to_f64().unwrap_or(0.0))
        .unwrap_or(0.0);
    (hi, lo)
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn dd_mul(a: (f64, f64), x: f64) -> (f64, f64) {
    let p = a.0 * x;
    let e = a.0.mul_add(x, -p) + a.1 * x;
    quick_two_sum(p, e)
}

#[inline]
fn dd_add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(a.0, b.0);
    quick_two_sum(s, e + a.1 + b.1)
}

fn zeta_rhs(y: &BoundaryData) -> Vec<f64> {
    let n = y.n();
    let mut rhs = y.y.clone();
    rhs.extend((0..n).map(|k| if k == 0 { 1.0 } else { 0.0 }));
    rhs
}

fn eta_rhs(y: &BoundaryData) -> Vec<f64> {
    let n = y.n();
    let mut rhs: Vec<f64> = (0..n).map(|k| if k == 0 { -1.0 } else { 0.0 }).collect();
    rhs.extend_from_slice(&y.y);
    rhs
}

/// `max_i |(M a − rhs)_i|` for the coupling system of the polynomial's kind.
pub fn system_residual(p: &CouplingPolynomial, y: &BoundaryData) -> Result<f64> {
    let m = coefficient_matrix(y.n())?;
    let rhs = match p.kind {
        CouplingKind::Zeta => zeta_rhs(y),
        CouplingKind::Eta => eta_rhs(y),
    };
    Ok(m.iter()
        .zip(&rhs)
        .map(|(row, &b)| {
            let mut acc = (-b, 0.0);
            for (c, &mij) in row.iter().enumerate() {
                if mij != 0.0 {
                    acc = dd_add(acc, dd_mul(p.pair(c), mij));
                }
            }
            (acc.0 + acc.1).abs()
        })
        .fold(0.0, f64::max))
}

fn rhs_for(y: &BoundaryData, kind: CouplingKind) -> Vec<f64> {
    match kind {
        CouplingKind::Zeta => zeta_rhs(y),
        CouplingKind::Eta => eta_rhs(y),
    }
}

/// Solves the coupling system of `kind` directly with the given pivoting.
pub fn solve_with_pivoting(
    y: &BoundaryData,
    kind: CouplingKind,
    pivoting: Pivoting,
) -> Result<CouplingPolynomial> {
    let m = coefficient_matrix(y.n())?;
    let x = solve_exact(&m, &rhs_for(y, kind), pivoting)?;
    Ok(CouplingPolynomial::from_pairs(
        x.iter().map(split_double_double).collect(),
        kind,
    ))
}

/// The unique polynomial of degree `≤ 2n−1` with `p^{(k)}(0) = y_k` and
/// `p(1) = 1`, `p^{(k)}(1) = 0` for `1 ≤ k < n`.
pub fn solve_zeta(y: &BoundaryData) -> Result<CouplingPolynomial> {
    solve_with_pivoting(y, CouplingKind::Zeta, Pivoting::Partial)
}

/// The unique polynomial of degree `≤ 2n−1` with `q(0) = −1`, `q^{(k)}(0) = 0`
/// for `1 ≤ k < n` and `q^{(k)}(1) = y_k`, obtained as `q(x) = −p(1−x)` where
/// `p` is the zeta polynomial for the data `((−1)^{k+1} y_k)_k`.
pub fn solve_eta(y: &BoundaryData) -> Result<CouplingPolynomial> {
    let mirrored: Vec<f64> = y
        .y
        .iter()
        .enumerate()
        .map(|(k, v)| if k % 2 == 0 { -v } else { *v })
        .collect();
    let mirrored = BoundaryData::new(mirrored)?;
    let m = coefficient_matrix(y.n())?;
    let a = solve_exact(&m, &zeta_rhs(&mirrored), Pivoting::Partial)?;
    // −Σ_i a_i (1−x)^i expanded in powers of x
    let b: Vec<(f64, f64)> = (0..a.len())
        .map(|j| {
            let mut s = BigRational::zero();
            let mut binom = BigInt::one(); // C(i, j), starting at i = j
            for (i, ai) in a.iter().enumerate().skip(j) {
                if i > j {
                    binom = binom * BigInt::from(i) / BigInt::from(i - j);
                }
                s += ai * BigRational::from_integer(binom.clone());
            }
            split_double_double(&if j % 2 == 0 { -s } else { s })
        })
        .collect();
    Ok(CouplingPolynomial::from_pairs(b, CouplingKind::Eta))
}

/// Solves the eta system directly, without the reflection.
pub fn solve_eta_direct(y: &BoundaryData) -> Result<CouplingPolynomial> {
    solve_with_pivoting(y, CouplingKind::Eta, Pivoting::Partial)
}

pub fn solve(y: &BoundaryData, kind: CouplingKind) -> Result<CouplingPolynomial> {
    match kind {
        CouplingKind::Zeta => solve_zeta(y),
        CouplingKind::Eta => solve_eta(y),
    }
}

/// `p^{(k)}(x) = Σ_i (k+i)!/i! · a_{k+i} x^i`, by Horner's rule in
/// double-double arithmetic.
pub fn eval_poly(p: &CouplingPolynomial, x: f64, k: usize) -> f64 {
    let len = p.coefficients.len();
    if k >= len {
        return 0.0;
    }
    let mut acc = (0.0, 0.0);
    for i in (0..len - k).rev() {
        let term = dd_mul(p.pair(k + i), falling(k + i, k) as f64);
        acc = dd_add(dd_mul(acc, x), term);
    }
    acc.0 + acc.1
}

/// `∫₀¹ W(p) − λ (p^{(n−1)})² + (p^{(n)})² dx` for the coupling polynomial
/// of `kind` and data `y`, by composite Simpson on `grid_points` nodes (made
/// odd if needed) with exact polynomial derivatives. This bounds the optimal
/// coupling energy for `y` from above.
pub fn coupling_energy_upper_bound(
    y: &BoundaryData,
    kind: CouplingKind,
    lam: f64,
    w: &DoubleWell,
    grid_points: usize,
) -> Result<f64> {
    if grid_points < 3 {
        return Err(Error::InvalidParameter(format!(
            "need at least 3 quadrature nodes, got {grid_points}"
        )));
    }
    let n = y.n();
    let p = solve(y, kind)?;
    let m = if grid_points % 2 == 0 { grid_points + 1 } else { grid_points };
    let h = 1.0 / (m - 1) as f64;
    let mut total = 0.0;
    for i in 0..m {
        let x = if i == m - 1 { 1.0 } else { i as f64 * h };
        let lo = p.eval(x, n - 1);
        let hi = p.eval(x, n);
        let f = w.eval(p.eval(x, 0)) - lam * lo * lo + hi * hi;
        let wgt = if i == 0 || i == m - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        total += wgt * f;
    }
    Ok(total * h / 3.0)
}

/// `‖M⁻¹‖_∞` for the coupling matrix, a Lipschitz bound for the map from
/// boundary data to coefficients.
pub fn inverse_norm(n: usize) -> Result<f64> {
    let m = coefficient_matrix(n)?;
    let dim = 2 * n;
    let mut cols = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        cols.push(solve_exact(&m, &e, Pivoting::Partial)?);
    }
    let worst = (0..dim)
        .map(|i| cols.iter().map(|c| c[i].abs()).fold(BigRational::zero(), |acc, v| acc + v))
        .max()
        .unwrap_or_else(BigRational::zero);
    Ok(worst.to_f64().unwrap_or(f64::INFINITY))
}

/// Whether the exact determinant of the coupling matrix equals `(∏_{i=1}^n (i−1)!)²`.
pub fn determinant_matches_identity(n: usize) -> Result<bool> {
    let d = determinant_exact(&coefficient_matrix_exact(n)?);
    Ok(d == factorial_product(n).pow(2))
}
