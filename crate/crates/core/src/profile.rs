//! Optimal transition profiles on a truncated line and recovery sequences.
//!
//! The profile energy is `∫_{−T}^{T} W(f) − λ (f^{(n−1)})² + (f^{(n)})²`, the
//! `ε = 1` energy, minimized over fields whose outermost stencil-width bands
//! are pinned to `−1` on the left and `+1` on the right. The pinned tails make
//! the discrete field constant outside the transition layer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{DiffOperator, Field, Grid};
use crate::energy::{EnergyModel, EnergyParams};
use crate::error::{Error, Result};
use crate::hermite::{self, BoundaryData, CouplingKind};
use crate::optimize::{minimize, Constraint, MinimizeOptions, Termination};
use crate::potential::DoubleWell;

pub const DEFAULT_T: f64 = 10.0;
pub const DEFAULT_POINTS: usize = 2001;

#[derive(Debug, Clone)]
pub struct ProfileProblem {
    pub n: usize,
    pub lam: f64,
    pub truncation_t: f64,
    pub grid: Grid,
    pub potential: DoubleWell,
}

impl ProfileProblem {
    /// `n = 1` is accepted as a calibration mode with a known answer
    /// (`2∫_{−1}^{1} √W`).
    pub fn new(n: usize, lam: f64, truncation_t: f64, points: usize, potential: DoubleWell) -> Result<Self> {
        if !(truncation_t > 0.0 && truncation_t.is_finite()) {
            return Err(Error::InvalidParameter(format!("T must be positive, got {truncation_t}")));
        }
        let grid = Grid::new(-truncation_t, truncation_t, points)?;
        let band = DiffOperator::stencil_width(n);
        if points < 2 * band + 3 {
            return Err(Error::GridTooSmall {
                order: n,
                min_points: 2 * band + 3,
                got: points,
            });
        }
        EnergyParams::with_any_order(n, 1.0, lam)?;
        Ok(Self {
            n,
            lam,
            truncation_t,
            grid,
            potential,
        })
    }

    fn model(&self) -> Result<EnergyModel> {
        let params = EnergyParams::with_any_order(self.n, 1.0, self.lam)?;
        EnergyModel::new(self.grid.clone(), params, self.potential.clone())
    }

    /// Pinned nodes: the outermost stencil-width band on each side.
    pub fn fixed_mask(&self) -> Vec<bool> {
        let len = self.grid.len();
        let band = DiffOperator::stencil_width(self.n);
        (0..len).map(|i| i < band || i >= len - band).collect()
    }

    /// Overwrites the pinned bands of `values` with `∓1`.
    fn clamp(&self, values: &mut [f64]) {
        let len = values.len();
        let band = DiffOperator::stencil_width(self.n);
        for v in &mut values[..band] {
            *v = -1.0;
        }
        for v in &mut values[len - band..] {
            *v = 1.0;
        }
    }

    pub fn energy(&self, f: &Field) -> Result<f64> {
        Ok(self.model()?.breakdown(f.values())?.total)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileInit {
    Tanh { width: f64 },
    /// The step `sign(x)` with `[−h, h]` replaced by the Hermite coupling
    /// polynomial from `−1` to `+1` with vanishing derivatives at both ends.
    HermiteStep { half_width: f64 },
    /// Explicit start values; must live on the problem grid.
    #[serde(skip)]
    Field(Field),
}

impl ProfileInit {
    fn values(&self, p: &ProfileProblem) -> Result<Vec<f64>> {
        let mut v = match self {
            ProfileInit::Tanh { width } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidParameter("tanh width must be positive".into()));
                }
                p.grid.nodes().iter().map(|x| (x / width).tanh()).collect()
            }
            ProfileInit::HermiteStep { half_width } => {
                let h = *half_width;
                if !(h > 0.0) {
                    return Err(Error::InvalidParameter("step half width must be positive".into()));
                }
                let mut y = vec![0.0; p.n.max(2)];
                y[0] = -1.0;
                let poly = hermite::solve(&BoundaryData::new(y)?, CouplingKind::Zeta)?;
                p.grid
                    .nodes()
                    .iter()
                    .map(|&x| {
                        if x <= -h {
                            -1.0
                        } else if x >= h {
                            1.0
                        } else {
                            poly.eval((x + h) / (2.0 * h), 0)
                        }
                    })
                    .collect()
            }
            ProfileInit::Field(f) => {
                if f.grid() != &p.grid {
                    return Err(Error::InvalidGrid("initial field is not on the problem grid".into()));
                }
                f.values().to_vec()
            }
        };
        p.clamp(&mut v);
        Ok(v)
    }
}

#[derive(Debug, Clone)]
pub struct ProfileOptions {
    pub minimize: MinimizeOptions,
    pub inits: Vec<ProfileInit>,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            minimize: MinimizeOptions {
                divergence_floor: Some(-1e4),
                ..MinimizeOptions::default()
            },
            inits: default_inits(),
        }
    }
}

pub fn default_inits() -> Vec<ProfileInit> {
    vec![
        ProfileInit::Tanh { width: 0.5 },
        ProfileInit::Tanh { width: 1.0 },
        ProfileInit::Tanh { width: 2.0 },
        ProfileInit::HermiteStep { half_width: 1.5 },
    ]
}

#[derive(Debug, Clone)]
pub struct ProfileResult {
    pub minimizer: Field,
    pub energy_estimate: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm_final: f64,
    pub termination: Termination,
    pub diagnosis: Option<String>,
    /// Which entry of the options' start list produced this result.
    pub start_index: usize,
    pub initial_energy: f64,
}

fn run_single(p: &ProfileProblem, model: &EnergyModel, init: &ProfileInit, opts: &MinimizeOptions, index: usize) -> Result<ProfileResult> {
    let fixed = p.fixed_mask();
    let x0 = init.values(p)?;
    let pc = model.preconditioner(&fixed)?;
    let constraint = Constraint {
        fixed,
        mass_weights: None,
    };
    let r = minimize(model, &x0, &constraint, Some(&pc), opts);
    let diagnosis = match r.termination {
        Termination::Diverged => Some("supercritical or T too small".to_string()),
        Termination::Stalled => Some("line search stalled before reaching the gradient tolerance".to_string()),
        Termination::MaxIterations => Some("iteration limit reached".to_string()),
        Termination::Converged => None,
    };
    let minimizer = Field::new(p.grid.clone(), r.x)?;
    let energy_estimate = model.breakdown(minimizer.values())?.total;
    Ok(ProfileResult {
        minimizer,
        energy_estimate,
        converged: r.termination == Termination::Converged,
        iterations: r.iterations,
        gradient_norm_final: r.gradient_norm,
        termination: r.termination,
        diagnosis,
        start_index: index,
        initial_energy: r.initial_value,
    })
}

/// Minimizes the truncated profile energy from every start in `opts` (in
/// parallel) and returns the lowest-energy result; ties go to the lower
/// start index. A diverged run wins, since it shows the infimum is not finite.
pub fn minimize_profile(p: &ProfileProblem, opts: &ProfileOptions) -> Result<ProfileResult> {
    if opts.inits.is_empty() {
        return Err(Error::InvalidParameter("no initializations given".into()));
    }
    let model = p.model()?;
    let results: Vec<ProfileResult> = opts
        .inits
        .par_iter()
        .enumerate()
        .map(|(i, init)| run_single(p, &model, init, &opts.minimize, i))
        .collect::<Result<_>>()?;
    let best = results
        .into_iter()
        .min_by(|a, b| {
            let key = |r: &ProfileResult| (r.termination != Termination::Diverged, r.energy_estimate);
            let (da, ea) = key(a);
            let (db, eb) = key(b);
            da.cmp(&db)
                .then(ea.total_cmp(&eb))
                .then(a.start_index.cmp(&b.start_index))
        })
        .expect("at least one start");
    Ok(best)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantOptions {
    pub truncation_t: f64,
    pub points: usize,
    /// Estimate of the critical constant; enables the sandwich check.
    pub lambda_hat: Option<f64>,
    /// Relative slack allowed in the sandwich check.
    pub slack: f64,
}

impl Default for ConstantOptions {
    fn default() -> Self {
        Self {
            truncation_t: DEFAULT_T,
            points: DEFAULT_POINTS,
            lambda_hat: None,
            slack: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantEstimates {
    pub n: usize,
    pub lambda: f64,
    pub c_hat_0: f64,
    pub c_hat_lam: f64,
    pub lambda_hat: Option<f64>,
    /// `(1 − λ/λ̂)·Ĉ⁰` when `λ̂` is known.
    pub sandwich_lower: Option<f64>,
    /// `None` without `λ̂`; otherwise whether both sides hold within slack.
    pub sandwich_ok: Option<bool>,
    pub converged_0: bool,
    pub converged_lam: bool,
    pub diagnostics: Vec<String>,
    #[serde(skip)]
    pub profile_0: Option<Field>,
    #[serde(skip)]
    pub profile_lam: Option<Field>,
}

/// Profile constants at `λ = 0` and at `lam`. The `lam` run adds the `λ = 0`
/// minimizer to its starts, so `Ĉ^λ ≤ Ĉ⁰` holds by construction.
pub fn estimate_constants(
    n: usize,
    lam: f64,
    w: &DoubleWell,
    profile_opts: &ProfileOptions,
    opts: &ConstantOptions,
) -> Result<ConstantEstimates> {
    let p0 = ProfileProblem::new(n, 0.0, opts.truncation_t, opts.points, w.clone())?;
    let r0 = minimize_profile(&p0, profile_opts)?;
    let mut diagnostics = Vec::new();
    if let Some(d) = &r0.diagnosis {
        diagnostics.push(format!("lambda = 0: {d}"));
    }
    let r_lam = if lam == 0.0 {
        r0.clone()
    } else {
        let p = ProfileProblem::new(n, lam, opts.truncation_t, opts.points, w.clone())?;
        let mut o = profile_opts.clone();
        o.inits.push(ProfileInit::Field(r0.minimizer.clone()));
        let r = minimize_profile(&p, &o)?;
        if let Some(d) = &r.diagnosis {
            diagnostics.push(format!("lambda = {lam}: {d}"));
        }
        r
    };
    let (c0, cl) = (r0.energy_estimate, r_lam.energy_estimate);
    let sandwich_lower = opts.lambda_hat.map(|lh| (1.0 - lam / lh) * c0);
    let sandwich_ok = sandwich_lower.map(|lo| {
        let ok = cl >= lo - opts.slack * c0.abs() && cl <= c0 * (1.0 + opts.slack);
        if !ok {
            diagnostics.push(format!(
                "sandwich violated: lower {lo:.6}, C_lam {cl:.6}, C_0 {c0:.6}"
            ));
        }
        ok
    });
    Ok(ConstantEstimates {
        n,
        lambda: lam,
        c_hat_0: c0,
        c_hat_lam: cl,
        lambda_hat: opts.lambda_hat,
        sandwich_lower,
        sandwich_ok,
        converged_0: r0.converged,
        converged_lam: r_lam.converged,
        diagnostics,
        profile_0: Some(r0.minimizer),
        profile_lam: Some(r_lam.minimizer),
    })
}

/// A `±1`-valued function on `(a, b)` with finitely many jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpFunction {
    pub a: f64,
    pub b: f64,
    pub jumps: Vec<f64>,
    pub left_value: f64,
}

impl JumpFunction {
    pub fn new(a: f64, b: f64, jumps: Vec<f64>, left_value: f64) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidParameter(format!("empty interval ({a}, {b})")));
        }
        if left_value != 1.0 && left_value != -1.0 {
            return Err(Error::InvalidParameter(format!("left value must be ±1, got {left_value}")));
        }
        let mut prev = a;
        for &s in &jumps {
            if !(s > prev) || !(s < b) {
                return Err(Error::InvalidParameter(format!(
                    "jumps must be strictly increasing inside ({a}, {b})"
                )));
            }
            prev = s;
        }
        Ok(Self {
            a,
            b,
            jumps,
            left_value,
        })
    }

    pub fn num_jumps(&self) -> usize {
        self.jumps.len()
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let crossed = self.jumps.iter().take_while(|&&s| s <= x).count();
        if crossed % 2 == 0 {
            self.left_value
        } else {
            -self.left_value
        }
    }

    /// Minimal gap between consecutive points of `a, s_1, …, s_N, b`.
    pub fn delta0(&self) -> f64 {
        let mut pts = Vec::with_capacity(self.jumps.len() + 2);
        pts.push(self.a);
        pts.extend_from_slice(&self.jumps);
        pts.push(self.b);
        pts.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Whether jump `i` (0-based) goes from `−1` to `+1`.
    pub fn is_upward(&self, i: usize) -> bool {
        // value left of jump i is left_value·(−1)^i
        let left = if i % 2 == 0 { self.left_value } else { -self.left_value };
        left < 0.0
    }

    pub fn sample(&self, grid: Grid) -> Field {
        Field::from_fn(grid, |x| self.value_at(x))
    }
}

/// Pastes the rescaled profile `f((x−s_i)/ε)` (or its mirror for downward
/// jumps) at every jump of `u` on a grid with `points_per_epsilon` nodes per
/// unit `ε`. The profile must run from `−1` to `+1` on a symmetric interval
/// `(−T, T)`.
pub fn build_recovery(u: &JumpFunction, profile: &Field, eps: f64, points_per_epsilon: f64) -> Result<Field> {
    if !(eps > 0.0) || !(points_per_epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon and resolution must be positive".into()));
    }
    let t = profile.grid().b();
    if (profile.grid().a() + t).abs() > 1e-12 * t.max(1.0) {
        return Err(Error::InvalidGrid("profile must live on a symmetric interval (−T, T)".into()));
    }
    let delta0 = u.delta0();
    if eps * t >= delta0 / 2.0 {
        return Err(Error::EpsilonTooLarge {
            eps_t: eps * t,
            half_delta0: delta0 / 2.0,
        });
    }
    let points = ((points_per_epsilon * (u.b - u.a) / eps).ceil() as usize + 1).max(2);
    let grid = Grid::new(u.a, u.b, points)?;
    let f = |xi: f64| -> f64 {
        if xi <= -t {
            -1.0
        } else if xi >= t {
            1.0
        } else {
            profile.sample_at(xi)
        }
    };
    Ok(Field::from_fn(grid, |x| {
        for (i, &s) in u.jumps.iter().enumerate() {
            let xi = (x - s) / eps;
            if xi.abs() < t {
                return if u.is_upward(i) { f(xi) } else { f(-xi) };
            }
        }
        u.value_at(x)
    }))
}
