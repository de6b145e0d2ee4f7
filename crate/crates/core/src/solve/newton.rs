//! Step-truncation Newton iteration for `A u − M(u − u³) = load`.

use log::{info, warn};

use super::{als_solve, ProgressRecord, SolveStats, SolverOptions, Stage};
use crate::error::{mismatch, Error, Result};
use crate::tt::{
    tt_axpy, tt_diag, tt_hadamard, tt_norm, tt_round, tt_scale, ttmat_apply, ttmat_matmul,
    TtMatrix, TtVector,
};

/// Interior semilinear system: linear part `a`, interior mass `mass` and the load
/// (forcing tested against interior basis functions, boundary transfer included).
#[derive(Debug, Clone)]
pub struct SemilinearSystem {
    pub a: TtMatrix,
    pub mass: TtMatrix,
    pub load: TtVector,
}

impl SemilinearSystem {
    fn check(&self) -> Result<()> {
        let sizes = self.load.mode_sizes();
        for (name, op) in [("operator", &self.a), ("mass", &self.mass)] {
            if op.row_sizes() != sizes || op.col_sizes() != sizes {
                return Err(mismatch(format!(
                    "{name} sizes {:?}x{:?} do not match load {:?}",
                    op.row_sizes(),
                    op.col_sizes(),
                    sizes
                )));
            }
        }
        Ok(())
    }
}

fn cube(u: &TtVector, tol: f64) -> Result<TtVector> {
    let u2 = tt_round(&tt_hadamard(u, u)?, tol, usize::MAX);
    Ok(tt_round(&tt_hadamard(&u2, u)?, tol, usize::MAX))
}

/// `L(u) = A u − M(u − u³) − load`, rounded relative to its own norm.
pub fn newton_loss(sys: &SemilinearSystem, u: &TtVector, tol: f64) -> Result<TtVector> {
    let inner = tol * 0.1;
    let au = tt_round(&ttmat_apply(&sys.a, u)?, inner, usize::MAX);
    let w = tt_axpy(-1.0, &cube(u, inner)?, u)?;
    let mw = tt_round(&ttmat_apply(&sys.mass, &w)?, inner, usize::MAX);
    let l = tt_axpy(-1.0, &mw, &au)?;
    let l = tt_axpy(-1.0, &sys.load, &l)?;
    Ok(tt_round(&l, inner, usize::MAX))
}

/// `J(u) = A − M + 3 M diag(u⊙u)`.
pub fn semilinear_jacobian(sys: &SemilinearSystem, u: &TtVector, tol: f64) -> Result<TtMatrix> {
    let inner = tol * 0.1;
    let u2 = tt_round(&tt_hadamard(u, u)?, inner, usize::MAX);
    let md = ttmat_matmul(&sys.mass, &tt_diag(&u2))?;
    let j = tt_axpy(-1.0, &sys.mass, &sys.a)?;
    let j = tt_axpy(3.0, &md, &j)?;
    Ok(tt_round(&j, inner, usize::MAX))
}

/// Newton's method with truncation of every iterate. Stops when
/// `‖L(u)‖ ≤ solver_tol·‖load‖`; `newton_iterations` counts loss evaluations.
pub fn newton_solve(
    sys: &SemilinearSystem,
    u0: Option<&TtVector>,
    opts: &SolverOptions,
    progress: &mut dyn FnMut(&ProgressRecord),
) -> Result<(TtVector, SolveStats)> {
    opts.validate()?;
    sys.check()?;
    let sizes = sys.load.mode_sizes();
    let mut u = match u0 {
        Some(u) if u.mode_sizes() == sizes => u.clone(),
        Some(_) => return Err(mismatch("initial iterate has the wrong mode sizes")),
        None => TtVector::zeros(&sizes),
    };
    let scale = tt_norm(&sys.load).max(f64::MIN_POSITIVE);
    let target = opts.solver_tol * scale;
    let mut stats = SolveStats::default();
    let mut history: Vec<f64> = Vec::new();
    let mut increases = 0;
    let mut loss = newton_loss(sys, &u, opts.tt_tol)?;
    let mut loss_norm = tt_norm(&loss);

    loop {
        stats.newton_iterations += 1;
        history.push(loss_norm / scale);
        stats.residual_history.push(loss_norm / scale);
        stats.rank_history.push(u.max_rank());
        progress(&ProgressRecord {
            stage: Stage::Newton,
            iteration: stats.newton_iterations,
            residual: loss_norm / scale,
            max_rank: u.max_rank(),
        });
        info!(
            "newton iteration {}: relative loss {:.3e}, max rank {}",
            stats.newton_iterations,
            loss_norm / scale,
            u.max_rank()
        );
        if loss_norm <= target {
            stats.converged = true;
            break;
        }
        if stats.newton_iterations >= opts.max_newton_iterations {
            warn!(
                "newton_solve stopped after {} iterations at relative loss {:.3e}",
                stats.newton_iterations,
                loss_norm / scale
            );
            break;
        }

        // Inexact Newton: the linear residual only needs to sit below the final target.
        let eta = (0.1 * target / loss_norm).clamp(1e-12, 1e-3);
        let jac = semilinear_jacobian(sys, &u, opts.tt_tol)?;
        let lin = SolverOptions {
            solver_tol: eta.max(opts.solver_tol * 1e-3),
            ..*opts
        };
        let (delta, lstats) = als_solve(&jac, &tt_scale(-1.0, &loss), &lin, None)?;
        stats.sweeps_used += lstats.sweeps_used;
        if !lstats.converged {
            warn!(
                "linear solve in newton iteration {} reached only {:.3e}",
                stats.newton_iterations, lstats.final_residual
            );
        }

        let mut step = 1.0;
        let mut candidate = tt_round(&tt_axpy(step, &delta, &u)?, opts.tt_tol, opts.rmax);
        let mut cand_loss = newton_loss(sys, &candidate, opts.tt_tol)?;
        let mut cand_norm = tt_norm(&cand_loss);
        if opts.backtracking {
            let mut halvings = 0;
            while cand_norm > loss_norm && halvings < 5 {
                step *= 0.5;
                halvings += 1;
                candidate = tt_round(&tt_axpy(step, &delta, &u)?, opts.tt_tol, opts.rmax);
                cand_loss = newton_loss(sys, &candidate, opts.tt_tol)?;
                cand_norm = tt_norm(&cand_loss);
            }
        }
        if cand_norm > loss_norm {
            increases += 1;
        } else {
            increases = 0;
        }
        u = candidate;
        loss = cand_loss;
        loss_norm = cand_norm;
        if increases >= 3 {
            history.push(loss_norm / scale);
            return Err(Error::Diverged {
                iterations: stats.newton_iterations,
                history,
            });
        }
    }
    stats.final_residual = loss_norm / scale;
    Ok((u, stats))
}
