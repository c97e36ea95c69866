//! Uniform grids, sampled fields, finite-difference derivative operators and
//! quadrature.
//!
//! A derivative of order `k` uses a window of `k + 5` consecutive nodes for
//! every row. Away from the ends the window is centered on the row (for odd
//! `k` the even-sized window leans one node to the left, so the stencil does
//! not annihilate the grid-scale sawtooth `(−1)^i`); near the ends it is
//! shifted inward and becomes one-sided. Every row is therefore exact on
//! polynomials of degree `≤ k + 4`; the interior accuracy order is 5 (odd `k`)
//! or 6 (even `k`), the boundary rows are fifth order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order the stencil tables support.
pub const MAX_DERIVATIVE_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    num_points: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, num_points: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidGrid(format!("need a < b, got ({a}, {b})")));
        }
        if num_points < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {num_points}"
            )));
        }
        Ok(Self { a, b, num_points })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.num_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `|I| = b − a`.
    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.num_points - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.num_points {
            self.b
        } else {
            self.a + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.num_points).map(|i| self.node(i)).collect()
    }

    /// Same number of points on `(factor·a, factor·b)`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.a * factor, self.b * factor, self.num_points)
    }
}

/// A function sampled on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "field value at node {i} is not finite"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid, values }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// The same samples on a different grid with the same number of points.
    pub fn with_grid(&self, grid: Grid) -> Result<Self> {
        Self::new(grid, self.values.clone())
    }

    /// Piecewise-cubic (four-point Lagrange) interpolation at `x`; clamps to the
    /// end values outside `[a, b]`.
    pub fn sample_at(&self, x: f64) -> f64 {
        let n = self.grid.len();
        let a = self.grid.a();
        if x <= a {
            return self.values[0];
        }
        if x >= self.grid.b() {
            return self.values[n - 1];
        }
        let h = self.grid.spacing();
        let t = (x - a) / h;
        let cell = (t.floor() as usize).min(n - 2);
        let (first, count) = match n {
            2 => (0, 2),
            3 => (0, 3),
            _ => (cell.saturating_sub(1).min(n - 4), 4),
        };
        let s = t - first as f64;
        let mut acc = 0.0;
        for j in 0..count {
            let mut l = 1.0;
            for m in 0..count {
                if m != j {
                    l *= (s - m as f64) / (j as f64 - m as f64);
                }
            }
            acc += l * self.values[first + j];
        }
        acc
    }
}

/// Piecewise-cubic interpolation of `f` onto `new_num_points` nodes of the same interval.
pub fn resample(f: &Field, new_num_points: usize) -> Result<Field> {
    let grid = Grid::new(f.grid().a(), f.grid().b(), new_num_points)?;
    Ok(Field::from_fn(grid, |x| f.sample_at(x)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    #[default]
    Trapezoid,
    /// Composite Simpson; falls back to the trapezoid rule on an even number of points.
    Simpson,
}

impl Quadrature {
    pub fn weights(self, grid: &Grid) -> Vec<f64> {
        let n = grid.len();
        let h = grid.spacing();
        match self {
            Quadrature::Simpson if n % 2 == 1 && n >= 3 => (0..n)
                .map(|i| {
                    if i == 0 || i == n - 1 {
                        h / 3.0
                    } else if i % 2 == 1 {
                        4.0 * h / 3.0
                    } else {
                        2.0 * h / 3.0
                    }
                })
                .collect(),
            _ => (0..n)
                .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                .collect(),
        }
    }
}

/// Trapezoid-rule integral of the samples.
pub fn integrate(f: &Field) -> f64 {
    integrate_with(f, Quadrature::Trapezoid)
}

pub fn integrate_with(f: &Field, rule: Quadrature) -> f64 {
    rule.weights(f.grid())
        .iter()
        .zip(f.values())
        .map(|(w, v)| w * v)
        .sum()
}

/// `(∫ |f|^p)^{1/p}` with the given quadrature.
pub fn lp_norm(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let s: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| {
            let a = v.abs();
            w * if p == 2.0 { a * a } else { a.powf(p) }
        })
        .sum();
    s.powf(1.0 / p)
}

/// Finite-difference weights for the `order`-th derivative at `z` from `nodes`
/// (Fornberg's recursion).
pub fn fornberg_weights(z: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Discrete `k`-th derivative on a fixed grid, stored as one stencil per row.
#[derive(Debug, Clone)]
pub struct DiffOperator {
    order: usize,
    len: usize,
    width: usize,
    /// First column of each row's window.
    starts: Vec<usize>,
    /// Index into `patterns` for each row.
    pattern_of: Vec<usize>,
    patterns: Vec<Vec<f64>>,
}

impl DiffOperator {
    /// Number of nodes in every row's stencil.
    pub fn stencil_width(order: usize) -> usize {
        if order == 0 {
            1
        } else {
            order + 5
        }
    }

    /// Interior accuracy order of the centered rows.
    pub fn accuracy_order(order: usize) -> usize {
        if order == 0 {
            usize::MAX
        } else if order % 2 == 0 {
            6
        } else {
            5
        }
    }

    pub fn new(grid: &Grid, order: usize) -> Result<Self> {
        if order > MAX_DERIVATIVE_ORDER {
            return Err(Error::UnsupportedOrder {
                order,
                max: MAX_DERIVATIVE_ORDER,
            });
        }
        let n = grid.len();
        let width = Self::stencil_width(order);
        if n < width {
            return Err(Error::GridTooSmall {
                order,
                min_points: width,
                got: n,
            });
        }
        let scale = grid.spacing().powi(order as i32);
        let lean = width / 2;
        let mut patterns: Vec<Vec<f64>> = Vec::new();
        let mut by_offset: Vec<(usize, usize)> = Vec::new();
        let mut starts = Vec::with_capacity(n);
        let mut pattern_of = Vec::with_capacity(n);
        for i in 0..n {
            let start = i.saturating_sub(lean).min(n - width);
            let local = i - start;
            let id = match by_offset.iter().find(|(off, _)| *off == local) {
                Some(&(_, id)) => id,
                None => {
                    let nodes: Vec<f64> = (0..width).map(|j| j as f64 - local as f64).collect();
                    let mut w: Vec<f64> = fornberg_weights(0.0, &nodes, order)
                        .into_iter()
                        .map(|c| c / scale)
                        .collect();
                    if order > 0 {
                        // rows annihilate constants; apply_into relies on it
                        w[0] = -w[1..].iter().sum::<f64>();
                    }
                    patterns.push(w);
                    by_offset.push((local, patterns.len() - 1));
                    patterns.len() - 1
                }
            };
            starts.push(start);
            pattern_of.push(id);
        }
        Ok(Self {
            order,
            len: n,
            width,
            starts,
            pattern_of,
            patterns,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// First column and weights of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (usize, &[f64]) {
        (self.starts[i], &self.patterns[self.pattern_of[i]])
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.len);
        for (i, o) in out.iter_mut().enumerate() {
            let (s, w) = self.row(i);
            *o = if self.order == 0 {
                w[0] * u[s]
            } else {
                // differences against the first node make constants exact zeros
                let u0 = u[s];
                w[1..]
                    .iter()
                    .zip(&u[s + 1..s + w.len()])
                    .map(|(a, b)| a * (b - u0))
                    .sum()
            };
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        self.apply_into(u, &mut out);
        out
    }

    /// `out += Dᵀ v`.
    pub fn apply_transpose_add(&self, v: &[f64], out: &mut [f64]) {
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let (s, w) = self.row(i);
            for (o, wj) in out[s..s + w.len()].iter_mut().zip(w) {
                *o += wj * vi;
            }
        }
    }
}

/// Discrete `k`-th derivative of a field on its own grid.
pub fn derivative(f: &Field, k: usize) -> Result<Field> {
    if k == 0 {
        return Ok(f.clone());
    }
    let op = DiffOperator::new(f.grid(), k)?;
    Ok(Field {
        grid: *f.grid(),
        values: op.apply(f.values()),
    })
}
