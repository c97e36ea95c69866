//! Γ-convergence sweeps, supercritical probes and constrained minimization.
//!
//! A sweep pastes the optimal profile at the jumps of a `±1` function for a
//! decreasing sequence of `ε`, minimizes the energy from that recovery field,
//! and records both energies next to the predicted limit `N·Ĉ`. Runs are
//! deterministic: the same config gives the same record up to timestamps.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::critical::{estimate_lambda_n, LambdaOptions};
use crate::discretization::{Field, Grid, Quadrature};
use crate::energy::{EnergyBreakdown, EnergyModel, EnergyParams};
use crate::error::{Error, Result};
use crate::io;
use crate::optimize::{minimize, Constraint, MinimizeOptions, Termination};
use crate::potential::DoubleWell;
use crate::profile::{build_recovery, estimate_constants, ConstantOptions, JumpFunction, ProfileOptions};

/// `start, start/2, …` with `halvings + 1` entries.
pub fn geometric_schedule(start: f64, halvings: usize) -> Vec<f64> {
    (0..=halvings).map(|k| start / 2f64.powi(k as i32)).collect()
}

fn default_schedule() -> Vec<f64> {
    geometric_schedule(0.25, 4)
}

fn default_potential() -> String {
    "quartic".into()
}

fn default_ppe() -> usize {
    32
}

fn default_t() -> f64 {
    6.0
}

fn default_profile_points() -> usize {
    1201
}

fn default_max_iterations() -> usize {
    4000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n: usize,
    pub lambda: f64,
    #[serde(default = "default_potential")]
    pub potential: String,
    pub jumps: JumpFunction,
    #[serde(default = "default_schedule")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_ppe")]
    pub points_per_epsilon_width: usize,
    /// Prescribed `∫u`, inside `(−|I|, |I|)`.
    #[serde(default)]
    pub mass_constraint: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Truncation half-width of the profile problem.
    #[serde(default = "default_t")]
    pub truncation_t: f64,
    #[serde(default = "default_profile_points")]
    pub profile_points: usize,
    /// Estimated when absent.
    #[serde(default)]
    pub lambda_hat: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Not part of the config hash.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(n: usize, lambda: f64, jumps: JumpFunction) -> Self {
        Self {
            n,
            lambda,
            potential: default_potential(),
            jumps,
            epsilons: default_schedule(),
            points_per_epsilon_width: default_ppe(),
            mass_constraint: None,
            seed: 0,
            truncation_t: default_t(),
            profile_points: default_profile_points(),
            lambda_hat: None,
            max_iterations: default_max_iterations(),
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        EnergyParams::new(self.n, 1.0, self.lambda)?;
        if self.epsilons.is_empty() {
            return Err(Error::InvalidParameter("epsilon schedule is empty".into()));
        }
        if !self.epsilons.iter().all(|&e| e > 0.0 && e.is_finite()) {
            return Err(Error::InvalidParameter("epsilons must be positive".into()));
        }
        if !self.epsilons.windows(2).all(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("epsilon schedule must be strictly decreasing".into()));
        }
        if self.points_per_epsilon_width == 0 {
            return Err(Error::InvalidParameter("points_per_epsilon_width must be positive".into()));
        }
        if let Some(m) = self.mass_constraint {
            let len = self.jumps.b - self.jumps.a;
            if !(m.abs() < len) {
                return Err(Error::InvalidParameter(format!(
                    "mass constraint must lie in (−{len}, {len}), got {m}"
                )));
            }
        }
        DoubleWell::by_name(&self.potential)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the config without its output path.
    pub fn hash(&self) -> String {
        let canonical = SweepConfig {
            output: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub points: usize,
    pub e_min: Option<f64>,
    pub e_recovery: Option<f64>,
    pub jumps_detected: Option<usize>,
    pub converged: bool,
    pub termination: Option<Termination>,
    /// Set when this `ε` could not be run.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub config: SweepConfig,
    /// Ordered by decreasing `ε`.
    pub rows: Vec<SweepRow>,
    pub lambda_hat: f64,
    pub c_hat: f64,
    pub c_hat_0: f64,
    /// `N·Ĉ`.
    pub predicted_limit: f64,
    /// Epsilons at which `|E_recovery − N·Ĉ|` grew compared with the
    /// previous (larger) `ε`.
    pub trend_inversions: Vec<f64>,
    pub warnings: Vec<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

impl RunRecord {
    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
        let mut s = String::from("epsilon,E_min,E_recovery,jumps_detected,converged\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:.16e},{},{},{},{}\n",
                r.epsilon,
                opt(r.e_min),
                opt(r.e_recovery),
                r.jumps_detected.map_or(String::new(), |j| j.to_string()),
                r.converged
            ));
        }
        s
    }

    /// Writes `run_<hash12>.json` and `run_<hash12>.csv` into `dir` and
    /// returns the JSON path.
    pub fn persist(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let stem = format!("run_{}", &self.config_hash[..12]);
        let json = dir.join(format!("{stem}.json"));
        io::write_json(&json, self)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.csv())?;
        Ok(json)
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Settings of one energy minimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizeEnergyOptions {
    /// Prescribed `∫u`; the start is shifted to it and steps keep it.
    pub mass: Option<f64>,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Abort as divergent once the energy drops below this.
    pub divergence_floor: Option<f64>,
}

impl Default for MinimizeEnergyOptions {
    fn default() -> Self {
        Self {
            mass: None,
            max_iterations: default_max_iterations(),
            gradient_tolerance: default_gradient_tolerance(),
            divergence_floor: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnergyMinimum {
    pub field: Field,
    pub breakdown: EnergyBreakdown,
    pub initial_energy: f64,
    pub termination: Termination,
    pub iterations: usize,
}

impl EnergyMinimum {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// `Diverged` means the energy crossed the floor, the expected outcome
    /// for supercritical `λ`.
    pub fn diverged(&self) -> bool {
        self.termination == Termination::Diverged
    }
}

/// Local minimizer of the energy from `init` by preconditioned L-BFGS, with
/// free boundary values. With a mass the start is shifted to the prescribed
/// integral and the gradient is projected onto the zero-mass subspace.
pub fn minimize_energy(
    params: &EnergyParams,
    init: &Field,
    w: &DoubleWell,
    opts: &MinimizeEnergyOptions,
) -> Result<EnergyMinimum> {
    let grid = *init.grid();
    let model = EnergyModel::new(grid, *params, w.clone())?;
    let q = Quadrature::Trapezoid.weights(&grid);
    let mut x0 = init.values().to_vec();
    let mut constraint = Constraint::free(x0.len());
    if let Some(m) = opts.mass {
        let len = grid.length();
        if !(m.abs() < len) {
            return Err(Error::InvalidParameter(format!(
                "mass must lie in (−{len}, {len}), got {m}"
            )));
        }
        let cur: f64 = x0.iter().zip(&q).map(|(u, w)| u * w).sum();
        let shift = (m - cur) / len;
        x0.iter_mut().for_each(|u| *u += shift);
        constraint.mass_weights = Some(q.clone());
    }
    let pc = model.preconditioner(&constraint.fixed)?;
    let mo = MinimizeOptions {
        max_iterations: opts.max_iterations,
        gradient_tolerance: opts.gradient_tolerance,
        divergence_floor: opts.divergence_floor,
        ..MinimizeOptions::default()
    };
    let r = minimize(&model, &x0, &constraint, Some(&pc), &mo);
    let breakdown = model.breakdown(&r.x)?;
    Ok(EnergyMinimum {
        field: Field::new(grid, r.x)?,
        breakdown,
        initial_energy: r.initial_value,
        termination: r.termination,
        iterations: r.iterations,
    })
}

/// Start field of a standalone minimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    /// `left·Π(−tanh((x − s_i)/(√2 ε)))`: `tanh` layers of width `ε` at the
    /// jumps.
    Layers { jumps: Vec<f64>, left_value: f64 },
    Sine { k: f64, amplitude: f64 },
    /// Ensemble member `index` of the run seed.
    Random { index: usize },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimizeConfig {
    pub n: usize,
    pub epsilon: f64,
    pub lambda: f64,
    #[serde(default = "default_potential")]
    pub potential: String,
    pub a: f64,
    pub b: f64,
    #[serde(default = "default_ppe")]
    pub points_per_epsilon_width: usize,
    pub init: InitSpec,
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_gradient_tolerance")]
    pub gradient_tolerance: f64,
    #[serde(default)]
    pub divergence_floor: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_gradient_tolerance() -> f64 {
    1e-8
}

impl MinimizeConfig {
    pub fn initial_field(&self) -> Result<Field> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        let points = (self.points_per_epsilon_width as f64 * (self.b - self.a) / self.epsilon).ceil() as usize + 1;
        let grid = Grid::new(self.a, self.b, points)?;
        Ok(match &self.init {
            InitSpec::Layers { jumps, left_value } => {
                let width = std::f64::consts::SQRT_2 * self.epsilon;
                Field::from_fn(grid, |x| {
                    left_value * jumps.iter().map(|s| -((x - s) / width).tanh()).product::<f64>()
                })
            }
            InitSpec::Sine { k, amplitude } => {
                let omega = 2.0 * std::f64::consts::PI * k / (self.b - self.a);
                Field::from_fn(grid, |x| amplitude * (omega * (x - self.a)).sin())
            }
            InitSpec::Random { index } => crate::ensemble::Ensemble::new(self.seed).member(*index, &grid),
            InitSpec::Csv { path } => io::read_field_csv(path)?,
        })
    }

    pub fn run(&self) -> Result<EnergyMinimum> {
        let p = EnergyParams::new(self.n, self.epsilon, self.lambda)?;
        let w = DoubleWell::by_name(&self.potential)?;
        minimize_energy(
            &p,
            &self.initial_field()?,
            &w,
            &MinimizeEnergyOptions {
                mass: self.mass,
                max_iterations: self.max_iterations,
                gradient_tolerance: self.gradient_tolerance,
                divergence_floor: self.divergence_floor,
            },
        )
    }
}

/// Number of sign-change clusters of `u`: consecutive sign changes closer
/// than `merge` belong to one cluster.
/// Exact zeros count with the sign of the previous nonzero sample.
pub fn count_jump_clusters(u: &Field, merge: f64) -> usize {
    let g = u.grid();
    let mut last_sign = 0.0;
    let mut crossings = Vec::new();
    for (i, &v) in u.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let s = v.signum();
        if last_sign != 0.0 && s != last_sign {
            crossings.push(g.node(i));
        }
        last_sign = s;
    }
    let mut clusters = 0;
    let mut prev = f64::NEG_INFINITY;
    for &x in &crossings {
        if x - prev > merge {
            clusters += 1;
        }
        prev = x;
    }
    clusters
}

/// Raw sign changes of the samples.
pub fn sign_changes(values: &[f64]) -> usize {
    let nz: Vec<f64> = values.iter().copied().filter(|v| *v != 0.0).collect();
    nz.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
}

/// Runs the sweep: profile constants once, then every `ε` in parallel.
pub fn gamma_sweep(cfg: &SweepConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let started_unix = unix_now();
    let w = DoubleWell::by_name(&cfg.potential)?;
    let mut warnings = Vec::new();
    let lambda_hat = match cfg.lambda_hat {
        Some(l) => l,
        None => {
            let opts = LambdaOptions {
                seed: cfg.seed,
                ..LambdaOptions::default()
            };
            estimate_lambda_n(cfg.n, &w, &opts)?.lambda_hat
        }
    };
    if !(cfg.lambda <= 0.5 * lambda_hat) {
        return Err(Error::InvalidParameter(format!(
            "sweep needs lambda ≤ lambda_hat/2 = {}, got {}",
            0.5 * lambda_hat,
            cfg.lambda
        )));
    }
    let consts = estimate_constants(
        cfg.n,
        cfg.lambda,
        &w,
        &ProfileOptions::default(),
        &ConstantOptions {
            truncation_t: cfg.truncation_t,
            points: cfg.profile_points,
            lambda_hat: Some(lambda_hat),
            ..ConstantOptions::default()
        },
    )?;
    warnings.extend(consts.diagnostics.iter().cloned());
    let profile = consts.profile_lam.clone().expect("estimate_constants returns the profile");
    let n_jumps = cfg.jumps.num_jumps();
    let predicted = n_jumps as f64 * consts.c_hat_lam;
    let floor = -1e3 * (n_jumps.max(1) as f64) * consts.c_hat_0.abs().max(1.0);
    let params_at = |eps: f64| EnergyParams::new(cfg.n, eps, cfg.lambda);

    let rows: Vec<SweepRow> = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let fail = |e: Error| SweepRow {
                epsilon: eps,
                points: 0,
                e_min: None,
                e_recovery: None,
                jumps_detected: None,
                converged: false,
                termination: None,
                error: Some(e.to_string()),
            };
            let rec = match build_recovery(&cfg.jumps, &profile, eps, cfg.points_per_epsilon_width as f64) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            let run = || -> Result<SweepRow> {
                let p = params_at(eps)?;
                let e_rec = EnergyModel::new(*rec.grid(), p, w.clone())?.breakdown(rec.values())?.total;
                let opts = MinimizeEnergyOptions {
                    mass: cfg.mass_constraint,
                    max_iterations: cfg.max_iterations,
                    divergence_floor: Some(floor),
                    ..MinimizeEnergyOptions::default()
                };
                let m = minimize_energy(&p, &rec, &w, &opts)?;
                Ok(SweepRow {
                    epsilon: eps,
                    points: rec.grid().len(),
                    e_min: Some(m.breakdown.total),
                    e_recovery: Some(e_rec),
                    jumps_detected: Some(count_jump_clusters(&m.field, 4.0 * eps * cfg.truncation_t)),
                    converged: m.converged(),
                    termination: Some(m.termination),
                    error: None,
                })
            };
            run().unwrap_or_else(fail)
        })
        .collect();

    let mut trend_inversions = Vec::new();
    let mut prev_dev: Option<f64> = None;
    for r in &rows {
        if let Some(e) = r.e_recovery {
            let dev = (e - predicted).abs();
            if prev_dev.is_some_and(|p| dev > p) {
                trend_inversions.push(r.epsilon);
            }
            prev_dev = Some(dev);
        }
        if let (Some(lo), Some(hi)) = (r.e_min, r.e_recovery) {
            if lo > hi + 1e-9 * hi.abs().max(1.0) {
                warnings.push(format!("eps = {}: minimum above recovery energy", r.epsilon));
            }
        }
    }
    if !trend_inversions.is_empty() {
        warnings.push(format!(
            "recovery deviation from N*C grew at eps = {trend_inversions:?}"
        ));
    }
    let record = RunRecord {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        rows,
        lambda_hat,
        c_hat: consts.c_hat_lam,
        c_hat_0: consts.c_hat_0,
        predicted_limit: predicted,
        trend_inversions,
        warnings,
        started_unix,
        finished_unix: unix_now(),
    };
    if let Some(dir) = &cfg.output {
        record.persist(dir)?;
    }
    Ok(record)
}

fn default_amplitudes() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub n: usize,
    pub lambdas: Vec<f64>,
    pub epsilon: f64,
    #[serde(default = "default_potential")]
    pub potential: String,
    #[serde(default)]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default = "default_ppe")]
    pub points_per_epsilon_width: usize,
    #[serde(default = "default_amplitudes")]
    pub amplitudes: Vec<f64>,
    /// Also minimize freely from the best candidate at every `λ`.
    #[serde(default)]
    pub free_minimization: bool,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn one() -> f64 {
    1.0
}

impl ProbeConfig {
    pub fn new(n: usize, lambdas: Vec<f64>, epsilon: f64) -> Self {
        Self {
            n,
            lambdas,
            epsilon,
            potential: default_potential(),
            a: 0.0,
            b: 1.0,
            points_per_epsilon_width: default_ppe(),
            amplitudes: default_amplitudes(),
            free_minimization: false,
            max_iterations: default_max_iterations(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRow {
    pub lambda: f64,
    /// Lowest energy over the candidate set.
    pub best_energy: f64,
    pub best_k: usize,
    pub best_amplitude: f64,
    pub best_sign_changes: usize,
    /// Lowest energy per wavenumber `k = 1, 2, …`.
    pub energy_by_k: Vec<f64>,
    pub free_energy: Option<f64>,
    pub free_termination: Option<Termination>,
    pub free_sign_changes: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub n: usize,
    pub epsilon: f64,
    pub points: usize,
    pub max_k: usize,
    pub rows: Vec<ProbeRow>,
    /// First `λ` (in grid order) whose best candidate energy is negative.
    pub onset_lambda: Option<f64>,
    /// Best candidate energy non-increasing along increasing `λ`.
    pub monotone: bool,
    /// Sign changes of the best candidate non-decreasing along increasing `λ`.
    pub sign_changes_monotone: bool,
}

/// Scans `A·sin(2πk(x−a)/|I|)` over the configured amplitudes and every `k`
/// whose wavelength spans at least 16 grid points, for each `λ`. The
/// candidate set does not depend on `λ`, so the best energy is
/// non-increasing in `λ` exactly.
pub fn supercritical_probe(cfg: &ProbeConfig) -> Result<ProbeReport> {
    if !(cfg.epsilon > 0.0) || !(cfg.b > cfg.a) {
        return Err(Error::InvalidParameter("need epsilon > 0 and a < b".into()));
    }
    if cfg.amplitudes.is_empty() || cfg.lambdas.is_empty() {
        return Err(Error::InvalidParameter("need at least one amplitude and one lambda".into()));
    }
    let w = DoubleWell::by_name(&cfg.potential)?;
    let len = cfg.b - cfg.a;
    let points = (cfg.points_per_epsilon_width as f64 * len / cfg.epsilon).ceil() as usize + 1;
    let grid = Grid::new(cfg.a, cfg.b, points)?;
    let max_k = ((points - 1) / 16).max(1);
    let mut lambdas = cfg.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    let mut candidates = Vec::new();
    for k in 1..=max_k {
        for &amp in &cfg.amplitudes {
            let omega = 2.0 * std::f64::consts::PI * k as f64 / len;
            let f = Field::from_fn(grid, |x| amp * (omega * (x - cfg.a)).sin());
            candidates.push((k, amp, f));
        }
    }
    let rows: Vec<ProbeRow> = lambdas
        .par_iter()
        .map(|&lam| -> Result<ProbeRow> {
            let p = EnergyParams::new(cfg.n, cfg.epsilon, lam)?;
            let model = EnergyModel::new(grid, p, w.clone())?;
            let mut energy_by_k = vec![f64::INFINITY; max_k];
            let mut best = (f64::INFINITY, 0usize);
            for (ci, (k, _, f)) in candidates.iter().enumerate() {
                let e = model.breakdown(f.values())?.total;
                energy_by_k[k - 1] = energy_by_k[k - 1].min(e);
                if e < best.0 {
                    best = (e, ci);
                }
            }
            let (k, amp, f) = &candidates[best.1];
            let (mut free_energy, mut free_termination, mut free_sign_changes) = (None, None, None);
            if cfg.free_minimization {
                let floor = -1e3 * len / cfg.epsilon;
                let m = minimize_energy(
                    &p,
                    f,
                    &w,
                    &MinimizeEnergyOptions {
                        max_iterations: cfg.max_iterations,
                        divergence_floor: Some(floor),
                        ..MinimizeEnergyOptions::default()
                    },
                )?;
                free_energy = Some(m.breakdown.total);
                free_termination = Some(m.termination);
                free_sign_changes = Some(sign_changes(m.field.values()));
            }
            Ok(ProbeRow {
                lambda: lam,
                best_energy: best.0,
                best_k: *k,
                best_amplitude: *amp,
                best_sign_changes: sign_changes(f.values()),
                energy_by_k,
                free_energy,
                free_termination,
                free_sign_changes,
            })
        })
        .collect::<Result<_>>()?;
    let onset_lambda = rows.iter().find(|r| r.best_energy < 0.0).map(|r| r.lambda);
    let monotone = rows.windows(2).all(|w| w[1].best_energy <= w[0].best_energy);
    let sign_changes_monotone = rows.windows(2).all(|w| w[1].best_sign_changes >= w[0].best_sign_changes);
    Ok(ProbeReport {
        n: cfg.n,
        epsilon: cfg.epsilon,
        points,
        max_k,
        rows,
        onset_lambda,
        monotone,
        sign_changes_monotone,
    })
}
