//! Command-line front end. Every subcommand prints a JSON document on stdout
//! and writes fields and run records into `--out`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use phasefield::critical::{estimate_lambda_n, LambdaOptions};
use phasefield::energy::EnergyParams;
use phasefield::ensemble::Ensemble;
use phasefield::experiments::{gamma_sweep, supercritical_probe, MinimizeConfig, ProbeConfig, SweepConfig};
use phasefield::hermite::{self, BoundaryData, CouplingKind};
use phasefield::inequalities::{
    check_abstr, check_gagnir_interval, check_intlem, check_lower_bound_lemma, check_nirineq,
    empirical_nirineq_constant, run_ensemble, GNParams,
};
use phasefield::io;
use phasefield::profile::{estimate_constants, ConstantOptions, ProfileOptions};
use phasefield::{DoubleWell, Field, Grid, Result};

#[derive(Parser)]
#[command(name = "phasefield", version, about = "Higher-order phase-transition energies: profiles, critical constants, sweeps")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Directory for CSV and JSON outputs.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for randomized parts; overrides the seed of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Intlem,
    Nirineq,
    Gagnir,
    Abstr,
    Lowerbound,
}

#[derive(Subcommand)]
enum Cmd {
    /// Coupling polynomial for boundary data `y`.
    Hermite {
        #[arg(long)]
        n: usize,
        /// Comma-separated `y_0,…,y_{n−1}`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Vec<f64>,
        #[arg(long, default_value = "zeta")]
        kind: String,
    },
    /// Optimal-profile constants at `λ = 0` and at `--lambda`.
    Profile {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value = "quartic")]
        potential: String,
        #[arg(long = "T", default_value_t = phasefield::profile::DEFAULT_T)]
        t: f64,
        #[arg(long, default_value_t = phasefield::profile::DEFAULT_POINTS)]
        points: usize,
        /// Critical constant for the sandwich check.
        #[arg(long)]
        lambda_hat: Option<f64>,
    },
    /// Estimate of the critical constant by quotient minimization.
    LambdaN {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value = "quartic")]
        potential: String,
        #[arg(long, default_value_t = 16)]
        starts: usize,
        #[arg(long, default_value_t = 501)]
        points: usize,
    },
    /// Runs one inequality checker over a seeded ensemble.
    CheckIneq {
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 500)]
        count: usize,
        #[arg(long, default_value_t = 401)]
        points: usize,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long, default_value_t = 2.0)]
        r: f64,
        /// Derivative order on the left (gagnir, abstr).
        #[arg(long, default_value_t = 1)]
        j: usize,
        /// Highest derivative order (gagnir, abstr).
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        /// `σ` as a fraction of the interval length (nirineq).
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Constant probe (nirineq, abstr).
        #[arg(long, default_value_t = 0.0)]
        c_probe: f64,
        /// Lower-bound lemma parameters.
        #[arg(long, default_value_t = 1.0 / 32.0)]
        epsilon: f64,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        lambda_hat: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
    },
    /// Minimizes the energy from a JSON config.
    Minimize { config: PathBuf },
    /// Γ-convergence sweep from a JSON config.
    GammaSweep { config: PathBuf },
    /// Oscillatory-candidate probe over a `λ` grid from a JSON config.
    Supercritical { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure {k} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(v) => {
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let text = serde_json::to_string_pretty(&v).expect("JSON value serializes");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn out_path(dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}

fn run(cli: &Cli) -> Result<Value> {
    let out = &cli.common.out;
    let seed = cli.common.seed;
    match &cli.cmd {
        Cmd::Hermite { n, y, kind } => {
            if y.len() != *n {
                return Err(phasefield::Error::InvalidParameter(format!(
                    "--y has {} values but --n is {n}",
                    y.len()
                )));
            }
            let data = BoundaryData::new(y.clone())?;
            let kind: CouplingKind = kind.parse()?;
            let poly = hermite::solve(&data, kind)?;
            Ok(json!({
                "n": n,
                "kind": kind,
                "coefficients": poly.coefficients,
                "corrections": poly.corrections,
                "boundary_residual": poly.boundary_residual(&data),
            }))
        }
        Cmd::Profile { n, lambda, potential, t, points, lambda_hat } => {
            let w = DoubleWell::by_name(potential)?;
            let opts = ConstantOptions {
                truncation_t: *t,
                points: *points,
                lambda_hat: *lambda_hat,
                ..ConstantOptions::default()
            };
            let e = estimate_constants(*n, *lambda, &w, &ProfileOptions::default(), &opts)?;
            let csv = out_path(out, "profile.csv")?;
            io::write_field_csv(&csv, e.profile_lam.as_ref().expect("profile is returned"))?;
            Ok(json!({
                "n": n,
                "lambda": lambda,
                "potential": potential,
                "C_hat_0": e.c_hat_0,
                "C_hat_lam": e.c_hat_lam,
                "converged_0": e.converged_0,
                "converged_lam": e.converged_lam,
                "sandwich_lower": e.sandwich_lower,
                "sandwich_ok": e.sandwich_ok,
                "diagnostics": e.diagnostics,
                "profile_csv_path": csv,
            }))
        }
        Cmd::LambdaN { n, potential, starts, points } => {
            let w = DoubleWell::by_name(potential)?;
            let mut opts = LambdaOptions {
                starts: *starts,
                points: *points,
                ..LambdaOptions::default()
            };
            if let Some(s) = seed {
                opts.seed = s;
            }
            let est = estimate_lambda_n(*n, &w, &opts)?;
            let csv = out_path(out, &format!("lambda_{n}_argmin.csv"))?;
            io::write_field_csv(&csv, est.argmin.as_ref().expect("argmin is returned"))?;
            Ok(json!({
                "n": n,
                "potential": est.potential,
                "lambda_hat": est.lambda_hat,
                "argmin_csv_path": csv,
                "diagnostics": est,
            }))
        }
        Cmd::CheckIneq {
            which,
            n,
            count,
            points,
            p,
            q,
            r,
            j,
            m,
            theta,
            sigma,
            c_probe,
            epsilon,
            lambda,
            lambda_hat,
            delta,
        } => {
            let seed = seed.unwrap_or(0);
            let ens = Ensemble::new(seed);
            let on_interval = |i: usize| ens.member_on_random_interval(i, *points);
            let unit = Grid::new(0.0, 1.0, *points)?;
            let on_unit = |i: usize| ens.member(i, &unit);
            let (name, report, member): (&str, _, &(dyn Fn(usize) -> Field + Sync)) = match which {
                Which::Intlem => (
                    "intlem",
                    run_ensemble("intlem", seed, *count, on_interval, |u| check_intlem(u, *p, *q, *r)),
                    &on_interval,
                ),
                Which::Nirineq => (
                    "nirineq",
                    run_ensemble("nirineq", seed, *count, on_interval, |u| {
                        check_nirineq(u, *n, sigma * u.grid().length(), *c_probe)
                    }),
                    &on_interval,
                ),
                Which::Gagnir => {
                    let gp = GNParams::new(*p, *q, *r, *j, *m, *theta)?;
                    (
                        "gagnir",
                        run_ensemble("gagnir", seed, *count, on_interval, |u| check_gagnir_interval(u, &gp)),
                        &on_interval,
                    )
                }
                Which::Abstr => (
                    "abstr",
                    run_ensemble("abstr", seed, *count, on_interval, |u| check_abstr(u, *j, *m, *q, *r, *c_probe)),
                    &on_interval,
                ),
                Which::Lowerbound => {
                    let w = DoubleWell::quartic();
                    let lh = match lambda_hat {
                        Some(l) => *l,
                        None => estimate_lambda_n(*n, &w, &LambdaOptions::default())?.lambda_hat,
                    };
                    let params = EnergyParams::new(*n, *epsilon, lambda.unwrap_or(0.5 * lh))?;
                    (
                        "lowerbound",
                        run_ensemble("lowerbound", seed, *count, on_unit, |u| {
                            check_lower_bound_lemma(u, &params, lh, *delta, &w)
                        }),
                        &on_unit,
                    )
                }
            };
            let mut v = serde_json::to_value(&report)?;
            if let Some(i) = report.worst_index {
                let csv = out_path(out, &format!("{name}_worst.csv"))?;
                io::write_field_csv(&csv, &member(i))?;
                v["worst_csv_path"] = json!(csv);
            }
            if matches!(which, Which::Nirineq) {
                v["c_hat"] = json!(empirical_nirineq_constant(*n, *count, seed, *points)?);
            }
            Ok(v)
        }
        Cmd::Minimize { config } => {
            let mut cfg: MinimizeConfig = io::read_json(config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let m = cfg.run()?;
            let csv = out_path(out, "minimizer.csv")?;
            io::write_field_csv(&csv, &m.field)?;
            let summary = json!({
                "config": cfg,
                "breakdown": m.breakdown,
                "initial_energy": m.initial_energy,
                "termination": m.termination,
                "iterations": m.iterations,
                "sign_changes": phasefield::experiments::sign_changes(m.field.values()),
                "minimizer_csv_path": csv,
            });
            io::write_json(out_path(out, "minimize.json")?, &summary)?;
            Ok(summary)
        }
        Cmd::GammaSweep { config } => {
            let mut cfg: SweepConfig = io::read_json(config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.output = None;
            let rec = gamma_sweep(&cfg)?;
            let path = rec.persist(out)?;
            let mut v = serde_json::to_value(&rec)?;
            v["record_path"] = json!(path);
            Ok(v)
        }
        Cmd::Supercritical { config } => {
            let cfg: ProbeConfig = io::read_json(config)?;
            let rep = supercritical_probe(&cfg)?;
            io::write_json(out_path(out, "supercritical.json")?, &rep)?;
            Ok(serde_json::to_value(&rep)?)
        }
    }
}
