//! Experiment orchestration: solving a catalog problem in a chosen format, measuring the
//! discrete L2 error, and the rank and convergence studies.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::cross::{cross_on_grid, CrossOptions};
use crate::error::{invalid, mismatch, Error, Result};
use crate::problem::{Coefficient, ProblemKind, ProblemSpec};
use crate::quantize::{compression_ratio, dequantize_vector, quantize_matrix, quantize_vector};
use crate::reference::{
    assemble_full_system_capped, sample_interior, solve_sparse, CsrMatrix, DEFAULT_UNKNOWN_CAP,
};
use crate::sem::{
    build_boundary_term_tt, build_load_tt, build_operator_tt, coefficient_train, diffusion_term,
    interior_mass_tt, Grid, OperatorOptions,
};

use crate::solve::{
    als_solve_observed, newton_solve, ProgressRecord, SemilinearSystem, SolveStats, SolverOptions,
};
use crate::tt::{tt_axpy, tt_dot, tt_round, ttmat_apply, TtMatrix, TtVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Format {
    Full,
    Tt,
    Qtt,
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Full => "full",
            Format::Tt => "tt",
            Format::Qtt => "qtt",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Format::Full),
            "tt" => Ok(Format::Tt),
            "qtt" => Ok(Format::Qtt),
            other => Err(invalid(format!(
                "unknown format '{other}' (expected full, tt or qtt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    pub solver: SolverOptions,
    pub operator: OperatorOptions,
    /// Largest interior system the full format will assemble.
    pub unknown_cap: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions::new(1e-10, 1e-6)
    }
}

impl ExperimentOptions {
    pub fn new(tt_tol: f64, solver_tol: f64) -> Self {
        ExperimentOptions {
            solver: SolverOptions {
                solver_tol,
                tt_tol,
                ..Default::default()
            },
            operator: OperatorOptions::with_tol(tt_tol),
            unknown_cap: DEFAULT_UNKNOWN_CAP,
        }
    }

    pub fn tt_tol(&self) -> f64 {
        self.solver.tt_tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureStage {
    Setup,
    Operator,
    RightHandSide,
    Solve,
    Error,
}

impl fmt::Display for FailureStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureStage::Setup => "setup",
            FailureStage::Operator => "operator",
            FailureStage::RightHandSide => "right-hand side",
            FailureStage::Solve => "solve",
            FailureStage::Error => "error evaluation",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub stage: FailureStage,
    pub message: String,
}

/// Outcome of one solve of one problem on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub problem: String,
    pub n: usize,
    pub format: Format,
    pub tt_tol: f64,
    pub solver_tol: f64,
    /// Discrete L2 error, when the problem has an exact solution and the run succeeded.
    pub l2_error: Option<f64>,
    /// Interior ranks of the system operator (empty for the full format).
    pub operator_ranks: Vec<usize>,
    /// Interior ranks of the solution in the format it was solved in.
    pub solution_ranks: Vec<usize>,
    pub operator_compression: f64,
    pub solution_compression: f64,
    pub stats: SolveStats,
    pub seconds: f64,
    pub warnings: Vec<String>,
    pub failure: Option<Failure>,
}

impl SolveReport {
    fn new(problem: &ProblemSpec, n: usize, format: Format, opts: &ExperimentOptions) -> Self {
        SolveReport {
            problem: problem.name.clone(),
            n,
            format,
            tt_tol: opts.tt_tol(),
            solver_tol: opts.solver.solver_tol,
            l2_error: None,
            operator_ranks: Vec::new(),
            solution_ranks: Vec::new(),
            operator_compression: 1.0,
            solution_compression: 1.0,
            stats: SolveStats::default(),
            seconds: 0.0,
            warnings: Vec::new(),
            failure: None,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    /// True when the run failed or a solver stopped short of its target.
    pub fn has_warning(&self) -> bool {
        self.failure.is_some() || !self.stats.converged || !self.warnings.is_empty()
    }

    pub fn max_rank(&self) -> usize {
        self.solution_ranks.iter().copied().max().unwrap_or(1)
    }
}

/// `√(eᵀ M e)` with `e = u_h − u*` on interior nodes and `M` the interior mass operator.
/// `u*` is cross-interpolated at relative tolerance `tol`.
pub fn compute_l2_error(
    u_h: &TtVector,
    exact: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    grid: &Grid,
    mass: &TtMatrix,
    tol: f64,
) -> Result<f64> {
    let interior = grid.interior_counts();
    if u_h.mode_sizes() != interior {
        return Err(mismatch(format!(
            "solution modes {:?} do not match interior sizes {:?}",
            u_h.mode_sizes(),
            interior
        )));
    }
    let cross = cross_on_grid(grid, exact, &CrossOptions::with_tol(tol))?;
    if !cross.converged {
        warn!(
            "cross interpolation of the exact solution stopped at sample error {:.3e}",
            cross.sample_error
        );
    }
    let u_star = cross.train.restrict_modes(&grid.interior_ranges())?;
    let e = tt_round(&tt_axpy(-1.0, &u_star, u_h)?, tol, usize::MAX);
    l2_norm(&e, mass)
}

/// `√(eᵀ M e)` for an error train already on interior nodes.
pub fn l2_norm(e: &TtVector, mass: &TtMatrix) -> Result<f64> {
    let me = ttmat_apply(mass, e)?;
    Ok(tt_dot(e, &me)?.max(0.0).sqrt())
}

/// Discrete L2 norm of a dense interior vector.
pub fn l2_norm_dense(e: &[f64], mass: &CsrMatrix) -> f64 {
    let me = mass.matvec(e);
    e.iter()
        .zip(&me)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

fn fail(report: &mut SolveReport, stage: FailureStage, err: Error) {
    warn!(
        "{} on N={} ({}) failed at the {stage} stage: {err}",
        report.problem, report.n, report.format
    );
    report.failure = Some(Failure {
        stage,
        message: err.to_string(),
    });
}

/// [`run_experiment_observed`] without progress reporting.
pub fn run_experiment(
    problem: &ProblemSpec,
    n: usize,
    format: Format,
    opts: &ExperimentOptions,
) -> SolveReport {
    run_experiment_observed(problem, n, format, opts, &mut |_| {})
}

/// Builds the system for `problem` on an `n`-element grid, solves it in `format` and
/// measures the error against the exact solution when one is known. Errors do not
/// propagate: they are recorded in the report together with the failing stage.
pub fn run_experiment_observed(
    problem: &ProblemSpec,
    n: usize,
    format: Format,
    opts: &ExperimentOptions,
    progress: &mut dyn FnMut(&ProgressRecord),
) -> SolveReport {
    let start = Instant::now();
    let mut report = SolveReport::new(problem, n, format, opts);
    let grid = match problem
        .validate()
        .and_then(|_| opts.solver.validate())
        .and_then(|_| problem.grid(n))
    {
        Ok(g) => g,
        Err(e) => {
            fail(&mut report, FailureStage::Setup, e);
            return report;
        }
    };
    match format {
        Format::Full => run_full(problem, &grid, opts, &mut report),
        Format::Tt | Format::Qtt => run_tensor(problem, &grid, format, opts, &mut report, progress),
    }
    report.seconds = start.elapsed().as_secs_f64();
    info!(
        "{} N={} {}: error {:?}, max rank {}, {:.2}s",
        report.problem,
        n,
        format,
        report.l2_error,
        report.max_rank(),
        report.seconds
    );
    report
}

fn run_full(
    problem: &ProblemSpec,
    grid: &Grid,
    opts: &ExperimentOptions,
    report: &mut SolveReport,
) {
    let full = match assemble_full_system_capped(problem, grid, opts.unknown_cap) {
        Ok(f) => f,
        Err(e) => return fail(report, FailureStage::Operator, e),
    };
    let solved = if problem.kind == ProblemKind::Semilinear {
        sparse_newton(
            &full.system.matrix,
            &full.mass,
            &full.system.rhs,
            &opts.solver,
        )
    } else {
        solve_sparse(&full.system.matrix, &full.system.rhs).map(|(x, s)| {
            let stats = SolveStats {
                sweeps_used: s.iterations,
                final_residual: s.relative_residual,
                converged: true,
                ..Default::default()
            };
            (x, stats)
        })
    };
    let (u, stats) = match solved {
        Ok(v) => v,
        Err(e) => return fail(report, FailureStage::Solve, e),
    };
    report.stats = stats;
    if let Some(exact) = &problem.exact {
        let u_star = sample_interior(grid, |x| exact(x));
        let e: Vec<f64> = u.iter().zip(&u_star).map(|(a, b)| a - b).collect();
        report.l2_error = Some(l2_norm_dense(&e, &full.mass));
    }
}

/// Newton's method for `A u − M(u − u³) = rhs` on assembled sparse matrices sharing
/// one sparsity pattern.
pub fn sparse_newton(
    a: &CsrMatrix,
    mass: &CsrMatrix,
    rhs: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = rhs.len();
    let scale = rhs
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let linear = a.add_same_pattern(-1.0, mass)?;
    let loss = |u: &[f64]| -> Vec<f64> {
        let lu = linear.matvec(u);
        let cube: Vec<f64> = u.iter().map(|v| v * v * v).collect();
        let mc = mass.matvec(&cube);
        (0..n).map(|i| lu[i] + mc[i] - rhs[i]).collect()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut u = vec![0.0; n];
    let mut l = loss(&u);
    let mut stats = SolveStats::default();
    let mut increases = 0;
    let mut history = Vec::new();
    loop {
        let ln = norm(&l);
        stats.newton_iterations += 1;
        stats.residual_history.push(ln / scale);
        history.push(ln / scale);
        if ln <= opts.solver_tol * scale {
            stats.converged = true;
            break;
        }
        if stats.newton_iterations >= opts.max_newton_iterations {
            warn!("sparse newton stopped at relative loss {:.3e}", ln / scale);
            break;
        }
        let u2: Vec<f64> = u.iter().map(|v| 3.0 * v * v).collect();
        let jac = linear.add_same_pattern(1.0, &mass.scale_columns(&u2))?;
        let neg: Vec<f64> = l.iter().map(|v| -v).collect();
        let (delta, s) = solve_sparse(&jac, &neg)?;
        stats.sweeps_used += s.iterations;
        for (ui, di) in u.iter_mut().zip(&delta) {
            *ui += di;
        }
        let next = loss(&u);
        if norm(&next) > ln {
            increases += 1;
        } else {
            increases = 0;
        }
        l = next;
        if increases >= 3 {
            history.push(norm(&l) / scale);
            return Err(Error::Diverged {
                iterations: stats.newton_iterations,
                history,
            });
        }
    }
    stats.final_residual = norm(&l) / scale;
    Ok((u, stats))
}

fn run_tensor(
    problem: &ProblemSpec,
    grid: &Grid,
    format: Format,
    opts: &ExperimentOptions,
    report: &mut SolveReport,
    progress: &mut dyn FnMut(&ProgressRecord),
) {
    let tol = opts.tt_tol();
    let ops = match build_operator_tt(problem, grid, &opts.operator) {
        Ok(o) => o,
        Err(e) => return fail(report, FailureStage::Operator, e),
    };
    report.warnings.extend(ops.warnings.iter().cloned());
    let rhs = (|| {
        let load = build_load_tt(problem, grid, &opts.operator, &mut report.warnings)?;
        let bd = build_boundary_term_tt(
            problem,
            grid,
            &ops.a_map,
            &opts.operator,
            &mut report.warnings,
        )?;
        Ok::<_, Error>(tt_round(&tt_axpy(-1.0, &bd, &load)?, tol, usize::MAX))
    })();
    let rhs = match rhs {
        Ok(r) => r,
        Err(e) => return fail(report, FailureStage::RightHandSide, e),
    };
    let mass = match interior_mass_tt(grid) {
        Ok(m) => m,
        Err(e) => return fail(report, FailureStage::Operator, e),
    };

    let solved = match format {
        Format::Tt => {
            report.operator_ranks = ops.a.ranks();
            report.operator_compression = compression_ratio(&ops.a);
            solve_tensor(problem.kind, &ops.a, &mass, &rhs, &opts.solver, progress)
        }
        _ => (|| {
            let qa = quantize_matrix(&ops.a, tol)?;
            let qm = quantize_matrix(&mass, tol)?;
            let qb = quantize_vector(&rhs, tol)?;
            report.operator_ranks = qa.op.ranks();
            report.operator_compression = compression_ratio(&qa.op);
            let (qu, stats) = solve_tensor(
                problem.kind,
                &qa.op,
                &qm.op,
                &qb.train,
                &opts.solver,
                progress,
            )?;
            report.solution_ranks = qu.ranks();
            report.solution_compression = compression_ratio(&qu);
            Ok((dequantize_vector(&qu, &qb.factors)?, stats))
        })(),
    };
    let (u, stats) = match solved {
        Ok(v) => v,
        Err(e) => return fail(report, FailureStage::Solve, e),
    };
    if format == Format::Tt {
        report.solution_ranks = u.ranks();
        report.solution_compression = compression_ratio(&u);
    }
    if !stats.converged {
        report.warnings.push(format!(
            "solver stopped at relative residual {:.3e}",
            stats.final_residual
        ));
    }
    report.stats = stats;
    if let Some(exact) = &problem.exact {
        match compute_l2_error(&u, exact.as_ref(), grid, &mass, tol * 0.1) {
            Ok(e) => report.l2_error = Some(e),
            Err(e) => fail(report, FailureStage::Error, e),
        }
    }
}

fn solve_tensor(
    kind: ProblemKind,
    a: &TtMatrix,
    mass: &TtMatrix,
    rhs: &TtVector,
    opts: &SolverOptions,
    progress: &mut dyn FnMut(&ProgressRecord),
) -> Result<(TtVector, SolveStats)> {
    if kind == ProblemKind::Semilinear {
        let sys = SemilinearSystem {
            a: a.clone(),
            mass: mass.clone(),
            load: rhs.clone(),
        };
        newton_solve(&sys, None, opts, progress)
    } else {
        als_solve_observed(a, rhs, opts, None, progress)
    }
}

/// Least-squares slope of `log(error)` against `log(h)`.
pub fn fit_order(h: &[f64], errors: &[f64]) -> Result<f64> {
    if h.len() != errors.len() || h.len() < 2 {
        return Err(invalid("an order fit needs at least two (h, error) pairs"));
    }
    if h.iter()
        .chain(errors)
        .any(|&v| !(v > 0.0) || !v.is_finite())
    {
        return Err(invalid(
            "an order fit needs positive, finite step sizes and errors",
        ));
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(invalid(
            "an order fit needs at least two distinct step sizes",
        ));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub reports: Vec<SolveReport>,
    /// Fitted order; `None` when fewer than two runs produced an error.
    pub order: Option<f64>,
}

/// Solves on every grid (sorted ascending) and fits the convergence order.
pub fn convergence_study(
    problem: &ProblemSpec,
    grids: &[usize],
    format: Format,
    opts: &ExperimentOptions,
    progress: &mut dyn FnMut(&ProgressRecord),
) -> Result<ConvergenceStudy> {
    if problem.exact.is_none() {
        return Err(invalid(format!(
            "{} has no exact solution to measure against",
            problem.name
        )));
    }
    let mut grids = grids.to_vec();
    grids.sort_unstable();
    grids.dedup();
    if grids.len() < 2 {
        return Err(invalid(
            "a convergence study needs at least two distinct grids",
        ));
    }
    let reports: Vec<SolveReport> = grids
        .iter()
        .map(|&n| run_experiment_observed(problem, n, format, opts, progress))
        .collect();
    let width = problem.bounds[0].1 - problem.bounds[0].0;
    let (h, e): (Vec<f64>, Vec<f64>) = reports
        .iter()
        .filter_map(|r| r.l2_error.map(|e| (width / r.n as f64, e)))
        .unzip();
    let order = if h.len() >= 2 {
        fit_order(&h, &e).ok()
    } else {
        None
    };
    Ok(ConvergenceStudy { reports, order })
}

/// One coefficient of the operator rank study.
#[derive(Debug, Clone, PartialEq)]
pub struct RankRow {
    pub label: String,
    pub tol: f64,
    /// Coefficient ranks per grid.
    pub kappa_ranks: Vec<Vec<usize>>,
    /// Rounded interior diffusion-operator ranks per grid.
    pub operator_ranks: Vec<Vec<usize>>,
}

/// Ranks of the cross-interpolated coefficient and of the rounded interior diffusion
/// operator on unit-cube grids with `n` elements per axis. Each coefficient is crossed
/// and the operator rounded at that row's tolerance.
pub fn rank_study(
    coefficients: &[(String, Coefficient, f64)],
    grids: &[usize],
    seed: u64,
) -> Result<Vec<RankRow>> {
    coefficients
        .iter()
        .map(|(label, kappa, tol)| {
            let mut row = RankRow {
                label: label.clone(),
                tol: *tol,
                kappa_ranks: Vec::new(),
                operator_ranks: Vec::new(),
            };
            for &n in grids {
                let grid = Grid::unit(n, 3, false)?;
                let opts = OperatorOptions {
                    cross: CrossOptions {
                        seed,
                        ..CrossOptions::with_tol(*tol)
                    },
                    ..OperatorOptions::with_tol(*tol)
                };
                let mut warnings = Vec::new();
                let k = coefficient_train(&grid, kappa, &opts, &mut warnings, label)?
                    .ok_or_else(|| invalid("the rank study needs a nonzero coefficient"))?;
                for w in warnings {
                    warn!("{w}");
                }
                let ranges = grid.interior_ranges();
                let op = diffusion_term(&grid, &k)?.restrict_modes(&ranges, &ranges)?;
                let op = tt_round(&op, *tol, usize::MAX);
                row.kappa_ranks.push(k.ranks());
                row.operator_ranks.push(op.ranks());
            }
            Ok(row)
        })
        .collect()
}
