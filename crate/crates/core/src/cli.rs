//! Command-line front end: parse a JSON config, dispatch, write artifacts.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use log::{error, info};

use crate::cell_solver::{solve_cell, CellProblemSpec, SolverKind};
use crate::config::{Command, RunConfig, Suite, VerifyConfig};
use crate::density::{
    angular_grid, build_density_table, check_growth_lipschitz, check_sandwich, check_tangential_quasiconvexity,
    sample_tangent_pairs, tf_hom, verify_equivalence, ExtensionChoice,
};
use crate::error::HomogError;
use crate::gamma_sim::run_gamma_experiment;
use crate::integrand::{verify_hypotheses, Density, Integrand};
use crate::io;
use crate::manifold::Manifold;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tanhom", version, about = "Tangential homogenization of manifold-valued periodic energies")]
pub struct Args {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (overrides the config's `workers`).
    #[arg(long, env = "HOMOG_WORKERS")]
    pub workers: Option<usize>,
    /// Random seed (overrides the config's `seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, short)]
    pub verbose: bool,
}

/// Exit code for a library error.
pub fn exit_code(e: &HomogError) -> i32 {
    match e {
        HomogError::NonConvergence(_) => EXIT_SOLVER,
        HomogError::HypothesisViolated(_) | HomogError::GrowthViolation(_) => EXIT_VERIFY,
        _ => EXIT_CONFIG,
    }
}

/// Runs the CLI on the given arguments and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = if args.verbose { log::LevelFilter::Debug } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return EXIT_CONFIG;
        }
    };
    let config = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out = args.out.clone().or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_CONFIG;
    }
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers.or(config.workers) {
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: worker pool: {e}");
            return EXIT_CONFIG;
        }
    };
    pool.install(|| dispatch(&config, &out, seed))
}

fn dispatch(config: &RunConfig, out: &Path, seed: u64) -> i32 {
    let built = config.manifold.build().and_then(|m| Ok((m, config.integrand.build()?)));
    let (m, f) = match built {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let code = match config.command {
        Command::Cell => cmd_cell(config, &m, &f, out),
        Command::Density => cmd_density(config, &m, &f, out),
        Command::Verify => cmd_verify(config, &m, &f, seed),
        Command::Gamma => cmd_gamma(config, &m, &f, out),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

type CmdResult = Result<i32, HomogError>;

fn cmd_cell(config: &RunConfig, m: &Manifold, f: &Integrand, out: &Path) -> CmdResult {
    let cell = config.section(&config.cell, "cell")?;
    let solver =
        cell.solver.unwrap_or(if f.is_quadratic() { SolverKind::ConjugateGradient } else { SolverKind::QuasiNewton });
    let spec = CellProblemSpec::new(m.clone(), cell.point(), cell.xi_matrix()?)
        .with_t(cell.t)
        .with_nodes_per_period(cell.n)
        .with_boundary(cell.boundary)
        .with_solver(solver)
        .with_tol(cell.tol_grad)
        .with_max_iters(cell.max_iters);
    let sol = solve_cell(f, &spec)?;
    let meta = io::CorrectorMeta::from_solution(f.label(), m.kind, &cell.s, cell.xi.clone(), solver, &sol);
    io::write_corrector(out, &meta, &sol.corrector)?;
    println!("value {}", io::fmt_f64(sol.value));
    println!("iterations {} converged {}", sol.iterations, sol.converged);
    Ok(if sol.converged { EXIT_OK } else { EXIT_SOLVER })
}

fn cmd_density(config: &RunConfig, m: &Manifold, f: &Integrand, out: &Path) -> CmdResult {
    let dc = config.section(&config.density, "density")?;
    let table = build_density_table(f, m, dc.s_count, &dc.lattice.build(), &dc.options)?;
    io::write_density_table(out, &table, &dc.options)?;
    let failed = table.failures();
    let unconverged = table.entries.iter().filter(|e| !e.converged).count();
    println!("entries {} failed {failed} unconverged {unconverged}", table.entries.len());
    for e in table.entries.iter().filter(|e| e.error.is_some()) {
        error!("entry s_index {} coeffs {:?}: {}", e.s_index, e.coeffs, e.error.as_deref().unwrap_or(""));
    }
    Ok(if failed + unconverged > 0 { EXIT_PARTIAL } else { EXIT_OK })
}

struct SuiteOutcome {
    suite: Suite,
    passed: bool,
    detail: String,
}

fn outcome(suite: Suite, r: Result<(bool, String), HomogError>) -> SuiteOutcome {
    match r {
        Ok((passed, detail)) => SuiteOutcome { suite, passed, detail },
        Err(e) => SuiteOutcome { suite, passed: false, detail: e.to_string() },
    }
}

fn cmd_verify(config: &RunConfig, m: &Manifold, f: &Integrand, seed: u64) -> CmdResult {
    let default = VerifyConfig::default();
    let vc = config.verify.as_ref().unwrap_or(&default);
    if vc.suites.is_empty() {
        return Err(HomogError::InvalidInput("config: `verify.suites` selects no suite".into()));
    }
    let results: Vec<SuiteOutcome> = vc.suites.iter().map(|&s| outcome(s, run_suite(s, vc, m, f, seed))).collect();
    println!("{:<16} {:<6} detail", "suite", "result");
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{:<16} {tag:<6} {}", format!("{:?}", r.suite).to_lowercase(), r.detail);
    }
    Ok(if results.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_VERIFY })
}

fn run_suite(
    suite: Suite,
    vc: &VerifyConfig,
    m: &Manifold,
    f: &Integrand,
    seed: u64,
) -> Result<(bool, String), HomogError> {
    let g = f.growth();
    let n_dim = f.n_dim();
    match suite {
        Suite::Hypotheses => {
            let r = verify_hypotheses(f, vc.hypothesis_samples, seed)?;
            Ok((true, format!("lower margin {:.3e}, upper margin {:.3e}", r.lower_margin, r.upper_margin)))
        }
        Suite::Equivalence => {
            let samples: Vec<_> =
                sample_tangent_pairs(m, n_dim, vc.samples, vc.radius, seed)?.into_iter().map(|p| (p.s, p.xi)).collect();
            let ext = ExtensionChoice::for_integrand(f, m);
            let tol = if matches!(ext, ExtensionChoice::FBar) { 1e-6 } else { 1e-3 };
            let r = verify_equivalence(f, m, &samples, &vc.options, ext)?;
            Ok((r.max_rel_gap <= tol, format!("max relative gap {:.3e} (tol {tol:.0e})", r.max_rel_gap)))
        }
        Suite::Sandwich => {
            let violations = match angular_grid(m, vc.s_count) {
                Ok(_) => {
                    let table = build_density_table(f, m, vc.s_count, &vc.lattice.build(), &vc.options)?;
                    let mut v = table.sandwich_violations(m, g.alpha, g.beta, g.p)?;
                    v.extend(table.entries.iter().filter_map(|e| e.error.clone()));
                    (v, table.entries.len())
                }
                Err(_) => {
                    let pairs = sample_tangent_pairs(m, n_dim, vc.samples, vc.radius, seed)?;
                    let mut v = Vec::new();
                    for p in &pairs {
                        let val = tf_hom(f, m, &p.s, &p.xi, &vc.options)?.value;
                        if let Err(msg) = check_sandwich(g.alpha, g.beta, g.p, &p.xi, val) {
                            v.push(msg);
                        }
                    }
                    (v, pairs.len())
                }
            };
            let (bad, total) = violations;
            let mut detail = format!("{} of {total} entries violate", bad.len());
            if let Some(first) = bad.first() {
                detail.push_str("; ");
                detail.push_str(first);
            }
            Ok((bad.is_empty(), detail))
        }
        Suite::Lipschitz => {
            let pairs = sample_tangent_pairs(m, n_dim, 2 * vc.pairs, vc.radius, seed.wrapping_add(1))?;
            let half = check_growth_lipschitz(f, m, &pairs[..vc.pairs], &vc.options)?;
            let full = check_growth_lipschitz(f, m, &pairs, &vc.options)?;
            let drift = (full.fitted_c - half.fitted_c).abs() / half.fitted_c.max(f64::MIN_POSITIVE);
            Ok((
                full.fitted_c.is_finite() && drift <= 0.1,
                format!(
                    "fitted C {:.4} ({} pairs), {:.4} ({} pairs)",
                    half.fitted_c, half.pairs, full.fitted_c, full.pairs
                ),
            ))
        }
        Suite::Quasiconvexity => {
            let pairs = sample_tangent_pairs(m, n_dim, vc.samples, vc.radius, seed.wrapping_add(2))?;
            let mut worst = f64::NEG_INFINITY;
            let mut passed = true;
            for (k, p) in pairs.iter().enumerate() {
                let r = check_tangential_quasiconvexity(
                    f,
                    m,
                    &p.s,
                    &p.xi,
                    vc.trials,
                    vc.trial_cells,
                    seed.wrapping_add(100 + k as u64),
                    &vc.options,
                )?;
                worst = worst.max(r.max_residual / r.tolerance);
                passed &= r.passed;
            }
            Ok((passed, format!("worst residual / tolerance {worst:.3e}")))
        }
    }
}

fn cmd_gamma(config: &RunConfig, m: &Manifold, f: &Integrand, out: &Path) -> CmdResult {
    let gc = config.section(&config.gamma, "gamma")?;
    let table = match &gc.table_dir {
        Some(dir) => Some(io::read_density_table(dir)?.0),
        None => None,
    };
    let report = run_gamma_experiment(f, m, gc, table.as_ref())?;
    io::write_gamma(out, &report)?;
    println!("{:<12} {:<24} gap", "eps", "energy");
    for r in &report.runs {
        println!("{:<12} {:<24} {}", r.epsilon, io::fmt_f64(r.energy), io::fmt_f64(r.gap));
    }
    println!("hom {}", io::fmt_f64(report.hom_energy));
    for w in &report.warnings {
        info!("{w}");
        println!("warning: {w}");
    }
    Ok(if report.all_converged() { EXIT_OK } else { EXIT_SOLVER })
}
