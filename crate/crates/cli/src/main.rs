//! Command-line front end: solve-point, map, bem, compare, oracle-check.
//! Numeric results go to standard output (or --out); logs go to standard
//! error. Exit codes: 2 config error, 3 numeric failure, 4 non-termination,
//! 1 failed check.

mod config;
mod report;
mod solvers;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use eit_forward::bem::mesh::MeshError;
use eit_forward::bem::system::{interior_potential, solve_dirichlet, solve_mixed, BemError};
use eit_forward::feynman_kac::{estimate_potential_calibrated, EstimatorError};
use eit_forward::geometry::GeometryError;
use eit_forward::oracle;
use eit_forward::presets::{PresetError, PresetProblem, PresetRegistry};
use eit_forward::stochastic::{FkCalibration, WalkError};
use eit_forward::vec3::Vec3;

use config::{ConfigError, RunConfig};
use report::{int, num, text, Format, Meta, Record};
use solvers::{by_name, ForwardSolver, ReferenceSolver, StochasticSolver};

#[derive(Parser)]
#[command(
    name = "eit-forward",
    version,
    about = "Forward electrode-model solvers on the unit ball: stochastic path \
             sampling against a dense boundary-element reference"
)]
struct Cli {
    /// TOML run configuration; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override solver.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override solver.workers (0 = hardware parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override output.format: table, json, or csv.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Write results to this file instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the potential at one point (or at the preset's probes).
    SolvePoint {
        /// Evaluation point "x,y,z"; defaults to the preset's probe points.
        #[arg(long, value_name = "X,Y,Z")]
        point: Option<String>,
    },
    /// Per-electrode currents from applied voltages.
    Map {
        /// Engine: stochastic or reference.
        #[arg(long, default_value = "stochastic")]
        solver: String,
    },
    /// Dense boundary-element reference currents.
    Bem,
    /// Stochastic vs reference currents; on oracle presets, both vs exact.
    Compare,
    /// Run the oracle suite; nonzero exit when any |z| exceeds 4.
    OracleCheck {
        /// Corrupt the local-time calibration by this factor (negative control).
        #[arg(long, value_name = "SCALE")]
        corrupt_calibration: Option<f64>,
        /// Boundary-element mesh depth for the cases it can solve.
        #[arg(long, default_value_t = 3)]
        bem_depth: u32,
        /// Skip the boundary-element columns.
        #[arg(long)]
        no_bem: bool,
    },
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct CheckFailed(String);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            classify(&e)
        }
    }
}

/// Exit codes: config/input errors 2, numeric failures 3, non-termination 4,
/// failed checks and everything else 1.
fn classify(e: &anyhow::Error) -> ExitCode {
    for cause in e.chain() {
        if let Some(est) = cause.downcast_ref::<EstimatorError>() {
            return match est {
                EstimatorError::AllPathsStepCapped => ExitCode::from(4),
                EstimatorError::Walk(_) | EstimatorError::Geometry(_) => continue,
                _ => ExitCode::from(2),
            };
        }
        if let Some(bem) = cause.downcast_ref::<BemError>() {
            return match bem {
                BemError::Factorization(_) | BemError::IllConditioned(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            };
        }
        if cause.downcast_ref::<ConfigError>().is_some()
            || cause.downcast_ref::<PresetError>().is_some()
            || cause.downcast_ref::<WalkError>().is_some()
            || cause.downcast_ref::<GeometryError>().is_some()
            || cause.downcast_ref::<MeshError>().is_some()
        {
            return ExitCode::from(2);
        }
        if cause.downcast_ref::<CheckFailed>().is_some() {
            return ExitCode::FAILURE;
        }
    }
    ExitCode::FAILURE
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.solver.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.solver.workers = w;
    }
    if let Some(f) = &cli.format {
        cfg.output.format = f.clone();
    }
    if let Some(o) = &cli.out {
        cfg.output.path = o.display().to_string();
    }
    let format: Format = cfg
        .output
        .format
        .parse()
        .map_err(|problem| ConfigError::Invalid {
            field: "output.format",
            problem,
        })?;
    let out = (!cfg.output.path.is_empty()).then(|| PathBuf::from(&cfg.output.path));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers())
        .build()?;
    let registry = PresetRegistry::standard();
    let domain = cfg.domain()?;
    let problem = registry.resolve(&cfg.boundary.preset, &domain)?;
    let meta = Meta {
        command: command_name(&cli.command).into(),
        config_hash: cfg.hash(),
        seed: cfg.solver.seed,
    };

    let started = Instant::now();
    let records = match &cli.command {
        Command::SolvePoint { point } => cmd_solve_point(&cfg, &problem, &pool, point.as_deref())?,
        Command::Map { solver } => cmd_map(&cfg, &problem, &pool, solver)?,
        Command::Bem => cmd_bem(&cfg, &problem)?,
        Command::Compare => cmd_compare(&cfg, &problem, &pool)?,
        Command::OracleCheck {
            corrupt_calibration,
            bem_depth,
            no_bem,
        } => cmd_oracle_check(&cfg, &pool, *corrupt_calibration, *bem_depth, *no_bem)?,
    };
    log::info!(
        "{} finished in {:.1} s",
        meta.command,
        started.elapsed().as_secs_f64()
    );

    report::deliver(&report::render(&meta, &records, format), out.as_deref())?;

    if meta.command == "oracle-check" {
        let failed: Vec<String> = records
            .iter()
            .filter(|r| r.0.iter().any(|(k, v)| k == "pass" && v == &serde_json::json!(false)))
            .map(|r| {
                r.0.iter()
                    .find(|(k, _)| k == "case")
                    .map_or_else(|| "?".into(), |(_, v)| v.to_string())
            })
            .collect();
        if !failed.is_empty() {
            return Err(CheckFailed(format!(
                "oracle suite failed: |z| > 4 in {}",
                failed.join(", ")
            ))
            .into());
        }
    }
    Ok(())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::SolvePoint { .. } => "solve-point",
        Command::Map { .. } => "map",
        Command::Bem => "bem",
        Command::Compare => "compare",
        Command::OracleCheck { .. } => "oracle-check",
    }
}

fn parse_point(s: &str) -> Result<Vec3, ConfigError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = |problem: String| ConfigError::Invalid {
        field: "--point",
        problem,
    };
    if parts.len() != 3 {
        return Err(bad(format!("expected x,y,z, got {s:?}")));
    }
    let mut p = [0.0; 3];
    for (slot, part) in p.iter_mut().zip(&parts) {
        *slot = part
            .parse::<f64>()
            .map_err(|e| bad(format!("{part:?}: {e}")))?;
    }
    Ok(p)
}

fn cmd_solve_point(
    cfg: &RunConfig,
    problem: &PresetProblem,
    pool: &rayon::ThreadPool,
    point: Option<&str>,
) -> anyhow::Result<Vec<Record>> {
    let points: Vec<Vec3> = match point {
        Some(s) => vec![parse_point(s)?],
        None if !problem.probes.is_empty() => problem.probes.clone(),
        None => {
            return Err(ConfigError::Invalid {
                field: "--point",
                problem: format!(
                    "preset {:?} has no probe points; pass --point x,y,z",
                    cfg.boundary.preset
                ),
            }
            .into())
        }
    };
    let params = cfg.walk_params();
    let mut records = Vec::new();
    for p in points {
        let est = pool.install(|| {
            estimate_potential_calibrated(
                p,
                &problem.domain,
                &problem.data,
                &params,
                &FkCalibration::default(),
            )
        })?;
        let mut r = Record::default();
        r.push("point", text(format_point(p)));
        r.push("mean", num(est.mean));
        r.push("stderr", num(est.stderr));
        if let Some(exact) = &problem.exact {
            let e = exact(p);
            r.push("exact", num(e));
            r.push("z", num(z_score(est.mean, e, est.stderr)));
        }
        r.push("n_paths", int(est.n_paths));
        r.push("absorbed", int(est.n_absorbed));
        r.push("step_capped", int(est.n_step_capped));
        r.push("mean_events", num(est.mean_boundary_events));
        r.push("mean_steps", num(est.mean_steps));
        records.push(r);
    }
    Ok(records)
}

fn format_point(p: Vec3) -> String {
    format!("({},{},{})", p[0], p[1], p[2])
}

fn z_score(mean: f64, exact: f64, stderr: f64) -> f64 {
    if mean == exact {
        0.0
    } else if stderr == 0.0 {
        f64::INFINITY
    } else {
        (mean - exact) / stderr
    }
}

fn cmd_map(
    cfg: &RunConfig,
    problem: &PresetProblem,
    pool: &rayon::ThreadPool,
    solver_name: &str,
) -> anyhow::Result<Vec<Record>> {
    if problem.domain.electrodes.is_empty() {
        return Err(ConfigError::Invalid {
            field: "boundary.preset",
            problem: format!("{:?} has no electrodes to map", cfg.boundary.preset),
        }
        .into());
    }
    let solver = by_name(solver_name).ok_or(ConfigError::Invalid {
        field: "--solver",
        problem: format!("unknown engine {solver_name:?}; expected stochastic or reference"),
    })?;
    let result = pool.install(|| solver.currents(problem, cfg))?;

    let mut records = Vec::new();
    for (i, &j) in result.currents.iter().enumerate() {
        let mut r = Record::default();
        r.push("electrode", int(i as u64 + 1));
        r.push("current", num(j));
        if let Some(se) = &result.stderrs {
            r.push("stderr", num(se[i]));
        }
        for (k, v) in &result.detail {
            r.push(k, v.clone());
        }
        records.push(r);
    }
    let mut total = Record::default();
    total.push("electrode", text("total"));
    total.push("current", num(result.total));
    if result.stderrs.is_some() {
        total.push("stderr", Value::Null);
    }
    for (k, v) in &result.detail {
        total.push(k, v.clone());
    }
    records.push(total);
    Ok(records)
}

use serde_json::Value;

fn cmd_bem(cfg: &RunConfig, problem: &PresetProblem) -> anyhow::Result<Vec<Record>> {
    let (mesh, sol) = ReferenceSolver.solve(problem, cfg)?;
    let mut records = Vec::new();
    for (i, &j) in sol.electrode_currents.iter().enumerate() {
        let mut r = Record::default();
        r.push("electrode", int(i as u64 + 1));
        r.push("current", num(j));
        r.push("elements", int(mesh.elements.len() as u64));
        r.push("rcond", num(sol.rcond));
        r.push("residual", num(sol.residual_norm));
        records.push(r);
    }
    let mut total = Record::default();
    total.push("electrode", text("total"));
    total.push("current", num(sol.total_current));
    total.push("elements", int(mesh.elements.len() as u64));
    total.push("rcond", num(sol.rcond));
    total.push("residual", num(sol.residual_norm));
    records.push(total);
    Ok(records)
}

fn cmd_compare(
    cfg: &RunConfig,
    problem: &PresetProblem,
    pool: &rayon::ThreadPool,
) -> anyhow::Result<Vec<Record>> {
    if problem.exact.is_some() {
        return compare_against_exact(cfg, problem, pool);
    }
    if problem.domain.electrodes.is_empty() {
        return Err(ConfigError::Invalid {
            field: "boundary.preset",
            problem: "nothing to compare: no electrodes and no exact solution".into(),
        }
        .into());
    }
    let stochastic = pool.install(|| StochasticSolver::default().currents(problem, cfg))?;
    let reference = ReferenceSolver.currents(problem, cfg)?;
    let mut records = Vec::new();
    for (i, (&js, &jr)) in stochastic
        .currents
        .iter()
        .zip(&reference.currents)
        .enumerate()
    {
        let se = stochastic.stderrs.as_ref().map(|s| s[i]);
        let mut r = Record::default();
        r.push("electrode", int(i as u64 + 1));
        r.push("stochastic", num(js));
        r.push("stderr", se.map_or(Value::Null, num));
        r.push("reference", num(jr));
        r.push("abs_diff", num((js - jr).abs()));
        r.push(
            "rel_err",
            if jr == 0.0 {
                Value::Null
            } else {
                num((js - jr).abs() / jr.abs())
            },
        );
        records.push(r);
    }
    let mut total = Record::default();
    total.push("electrode", text("total"));
    total.push("stochastic", num(stochastic.total));
    total.push("stderr", Value::Null);
    total.push("reference", num(reference.total));
    total.push("abs_diff", num((stochastic.total - reference.total).abs()));
    total.push("rel_err", Value::Null);
    records.push(total);
    Ok(records)
}

/// PIMC and, where the reference solver applies, BEM against the exact
/// solution at the preset's probes.
fn compare_against_exact(
    cfg: &RunConfig,
    problem: &PresetProblem,
    pool: &rayon::ThreadPool,
) -> anyhow::Result<Vec<Record>> {
    let exact = problem.exact.as_ref().expect("caller checked");
    let params = cfg.walk_params();
    let bem = bem_probe_values(cfg, problem, cfg.bem.icosphere_depth);
    if let Err(e) = &bem {
        log::warn!("reference solver skipped: {e:#}");
    }
    let mut records = Vec::new();
    for (pi, &p) in problem.probes.iter().enumerate() {
        let est = pool.install(|| {
            estimate_potential_calibrated(
                p,
                &problem.domain,
                &problem.data,
                &params,
                &FkCalibration::default(),
            )
        })?;
        let e = exact(p);
        let mut r = Record::default();
        r.push("point", text(format_point(p)));
        r.push("exact", num(e));
        r.push("stochastic", num(est.mean));
        r.push("stderr", num(est.stderr));
        r.push("z", num(z_score(est.mean, e, est.stderr)));
        match &bem {
            Ok(values) => {
                let v = values[pi];
                r.push("reference", num(v));
                r.push("reference_err", num(v - e));
            }
            Err(_) => {
                r.push("reference", Value::Null);
                r.push("reference_err", Value::Null);
            }
        }
        records.push(r);
    }
    Ok(records)
}

/// Interior potentials at the problem's probes from the dense reference
/// solver; errors when the mesh or mode does not apply to this problem.
fn bem_probe_values(
    cfg: &RunConfig,
    problem: &PresetProblem,
    depth: u32,
) -> anyhow::Result<Vec<f64>> {
    let mut mesh_cfg = cfg.clone();
    mesh_cfg.bem.icosphere_depth = depth;
    let mesh = solvers::build_guarded_mesh(problem, &mesh_cfg)?;
    let (potentials, fluxes) = if let Some(g) = &problem.data.outer_dirichlet {
        let boundary: Vec<f64> = mesh.elements.iter().map(|e| g(e.centroid)).collect();
        let (q, _rcond) = solve_dirichlet(&mesh, &problem.domain, g)?;
        (boundary, q)
    } else {
        let sol = solve_mixed(&mesh, &problem.domain, &problem.data)?;
        (sol.potentials, sol.fluxes)
    };
    let values: Result<Vec<f64>, _> = problem
        .probes
        .iter()
        .map(|&p| interior_potential(p, &mesh, &problem.domain, &potentials, &fluxes))
        .collect();
    Ok(values?)
}

fn cmd_oracle_check(
    cfg: &RunConfig,
    pool: &rayon::ThreadPool,
    corrupt: Option<f64>,
    bem_depth: u32,
    no_bem: bool,
) -> anyhow::Result<Vec<Record>> {
    let calib = match corrupt {
        Some(scale) => FkCalibration::corrupted(scale),
        None => FkCalibration::default(),
    };
    if corrupt.is_some() {
        log::warn!("running with a deliberately corrupted calibration");
    }
    let params = cfg.walk_params();
    let mut records = Vec::new();
    for case in oracle::standard_suite() {
        let problem = PresetProblem {
            domain: case.domain.clone(),
            data: case.data.clone(),
            exact: Some(case.exact.clone()),
            probes: case.probes.clone(),
        };
        let bem = if no_bem {
            Err(anyhow::anyhow!("disabled"))
        } else {
            bem_probe_values(cfg, &problem, bem_depth)
        };
        if let Err(e) = &bem {
            if !no_bem {
                log::info!("{}: reference columns skipped: {e:#}", case.name);
            }
        }
        for (pi, &p) in case.probes.iter().enumerate() {
            let est = pool.install(|| {
                estimate_potential_calibrated(p, &case.domain, &case.data, &params, &calib)
            })?;
            let e = (case.exact)(p);
            let z = z_score(est.mean, e, est.stderr);
            let mut r = Record::default();
            r.push("case", text(case.name.clone()));
            r.push("point", text(format_point(p)));
            r.push("exact", num(e));
            r.push("mean", num(est.mean));
            r.push("stderr", num(est.stderr));
            r.push("z", num(z));
            match &bem {
                Ok(values) => r.push("reference_err", num(values[pi] - e)),
                Err(_) => r.push("reference_err", Value::Null),
            }
            r.push("pass", Value::Bool(z.abs() <= 4.0));
            records.push(r);
        }
    }
    Ok(records)
}
