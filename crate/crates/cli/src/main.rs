mod config;
mod output;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use stsem_tt::driver::{
    fit_order, rank_study, run_experiment_observed, ExperimentOptions, SolveReport,
};
use stsem_tt::problem::{self, ProblemSpec};
use thiserror::Error;

use config::{parse_config, Cli, Command, ProblemName, RunConfig};
use output::ProgressLog;

#[derive(Debug, Error)]
enum RunError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Solver(#[from] stsem_tt::Error),
}

impl RunError {
    fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(config::ConfigError::OutDir { .. }) => 1,
            RunError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn problem_for(cfg: &RunConfig, name: ProblemName) -> ProblemSpec {
    match name {
        ProblemName::Poisson => problem::poisson(),
        ProblemName::Cdr => problem::cdr(),
        ProblemName::Semilinear => problem::semilinear(),
        ProblemName::Custom => problem::custom(cfg.kappa, cfg.b, cfg.c),
    }
}

fn experiment_options(cfg: &RunConfig) -> ExperimentOptions {
    let mut opts = ExperimentOptions::new(cfg.tt_tol, cfg.solver_tol);
    opts.solver.rmax = cfg.rmax;
    opts.solver.seed = cfg.seed;
    opts.operator.cross.seed = cfg.seed;
    opts
}

/// Runs the configured command. Returns whether any run ended with a warning.
fn run(cfg: &RunConfig) -> Result<bool, RunError> {
    cfg.prepare_out_dir()?;
    let name = cfg.command.name();
    let csv_path = cfg.out_dir.join(format!("{name}.csv"));
    let log_path = cfg.out_dir.join(format!("{name}.jsonl"));
    let mut log = ProgressLog::create(&log_path).map_err(io_at(&log_path))?;

    if cfg.command == Command::RankTable {
        let coeffs: Vec<_> = problem::rank_study_coefficients()
            .into_iter()
            .map(|(l, k, t)| (l.to_string(), k, t))
            .collect();
        let rows = rank_study(&coeffs, &cfg.grids, cfg.seed)?;
        for row in &rows {
            log.message("rank-row", &format!("{} tol={:e} done", row.label, row.tol));
        }
        output::write_rank_table(&csv_path, &rows, &cfg.grids).map_err(io_at(&csv_path))?;
        log.close().map_err(io_at(&log_path))?;
        return Ok(false);
    }

    let opts = experiment_options(cfg);
    let problem_name = match cfg.command {
        Command::Poisson => ProblemName::Poisson,
        Command::Cdr => ProblemName::Cdr,
        Command::Semilinear => ProblemName::Semilinear,
        Command::Custom => ProblemName::Custom,
        _ => cfg.problem,
    };
    let spec = problem_for(cfg, problem_name);

    let mut grids = cfg.grids.clone();
    if cfg.command == Command::Convergence {
        if spec.exact.is_none() {
            return Err(RunError::Config(config::ConfigError::Value {
                key: "problem".into(),
                message: format!("{} has no exact solution", spec.name),
            }));
        }
        grids.sort_unstable();
        grids.dedup();
        if grids.len() < 2 {
            return Err(RunError::Config(config::ConfigError::Value {
                key: "grids".into(),
                message: "a convergence study needs at least two distinct grids".into(),
            }));
        }
    }
    let mut reports: Vec<SolveReport> = Vec::new();
    for &n in &grids {
        log.start(&spec.name, n, cfg.format);
        let report = run_experiment_observed(&spec, n, cfg.format, &opts, &mut |rec| {
            log.progress(&spec.name, n, rec)
        });
        log.finish(&report);
        reports.push(report);
    }
    let width = spec.bounds[0].1 - spec.bounds[0].0;
    let (h, e): (Vec<f64>, Vec<f64>) = reports
        .iter()
        .filter_map(|r| r.l2_error.map(|e| (width / r.n as f64, e)))
        .unzip();
    let order = fit_order(&h, &e).ok();

    let mut warned = false;
    for r in &reports {
        if let Some(f) = &r.failure {
            eprintln!("{} N={}: {} failed: {}", r.problem, r.n, f.stage, f.message);
        } else if !r.stats.converged {
            eprintln!(
                "{} N={}: solver stopped at residual {:e} above target",
                r.problem, r.n, r.stats.final_residual
            );
        }
        for w in &r.warnings {
            eprintln!("{} N={}: {w}", r.problem, r.n);
        }
        warned |= r.has_warning();
    }

    output::write_results(&csv_path, &reports, order).map_err(io_at(&csv_path))?;
    if cfg.plot {
        let svg = cfg.out_dir.join(format!("{name}.svg"));
        output::write_error_plot(&svg, &spec.name, &reports).map_err(io_at(&svg))?;
    }
    log.close().map_err(io_at(&log_path))?;
    Ok(warned)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = parse_config(cli)
        .map_err(RunError::from)
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
