//! Low-rank linear solves in TT format and the step-truncation Newton loop.
//!
//! The linear solver is a single-site alternating scheme with residual enrichment: each
//! core is solved in the basis of its orthogonal neighbours, truncated, and augmented
//! with a projection of the current residual so ranks can grow where needed. Backward
//! sweeps run the same code on the reversed trains.

mod local;
mod newton;

pub use newton::{newton_loss, newton_solve, semilinear_jacobian, SemilinearSystem};

use std::fmt;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, mismatch, Result};
use crate::la::{self, Matrix};
use crate::tt::{
    orthogonalize_right, tt_axpy, tt_norm, tt_round, ttmat_apply, Core, TtMatrix, TtVector,
};
use local::{phi_step, project_rhs, psi_step, solve_local, LocalOp, OpCore, Phi, Psi};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target relative residual `‖A x − b‖ / ‖b‖` (Newton: `‖L(u)‖ / ‖load‖`).
    pub solver_tol: f64,
    /// Relative truncation tolerance for cores and iterates.
    pub tt_tol: f64,
    pub rmax: usize,
    /// Maximum number of directional sweeps.
    pub max_sweeps: usize,
    /// Rank of the residual approximation used for enrichment.
    pub enrichment_rank: usize,
    /// Seed of the random start of the residual approximation.
    pub seed: u64,
    pub max_newton_iterations: usize,
    /// Halve Newton steps (up to 5 times) when the loss increases.
    pub backtracking: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            solver_tol: 1e-6,
            tt_tol: 1e-10,
            rmax: 200,
            max_sweeps: 20,
            enrichment_rank: 3,
            seed: 7,
            max_newton_iterations: 20,
            backtracking: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.solver_tol > 0.0) || !(self.tt_tol > 0.0) {
            return Err(invalid("solver tolerances must be positive"));
        }
        if self.rmax == 0 || self.max_sweeps == 0 {
            return Err(invalid("rmax and max_sweeps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub sweeps_used: usize,
    pub newton_iterations: usize,
    /// Relative residual of the returned iterate.
    pub final_residual: f64,
    /// Maximum rank of the iterate after each sweep (or Newton iteration).
    pub rank_history: Vec<usize>,
    /// Residual estimate after each sweep (or Newton loss after each iteration).
    pub residual_history: Vec<f64>,
    /// False when the target was not reached; the iterate is the best available.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Sweep,
    Newton,
}

/// One line of solver progress.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressRecord {
    pub stage: Stage,
    pub iteration: usize,
    pub residual: f64,
    pub max_rank: usize,
}

impl fmt::Display for ProgressRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stage = match self.stage {
            Stage::Sweep => "sweep",
            Stage::Newton => "newton",
        };
        write!(
            f,
            "{stage} {} residual={:.6e} max_rank={}",
            self.iteration, self.residual, self.max_rank
        )
    }
}

/// `‖a·x − b‖`, computed exactly in TT arithmetic (no truncation).
pub fn tt_residual_norm(a: &TtMatrix, x: &TtVector, b: &TtVector) -> Result<f64> {
    if a.row_sizes() != b.mode_sizes() {
        return Err(mismatch(format!(
            "operator rows {:?} do not match right-hand side {:?}",
            a.row_sizes(),
            b.mode_sizes()
        )));
    }
    let ax = ttmat_apply(a, x)?;
    Ok(tt_norm(&tt_axpy(-1.0, b, &ax)?))
}

/// [`als_solve_observed`] without progress reporting.
pub fn als_solve(
    a: &TtMatrix,
    b: &TtVector,
    opts: &SolverOptions,
    x0: Option<&TtVector>,
) -> Result<(TtVector, SolveStats)> {
    als_solve_observed(a, b, opts, x0, &mut |_| {})
}

struct SweepState {
    ops: Vec<OpCore>,
    b: Vec<Core>,
    x: Vec<Core>,
    z: Vec<Core>,
    reversed: bool,
}

fn reverse_cores(c: &mut Vec<Core>) {
    c.reverse();
    for core in c.iter_mut() {
        *core = core.transposed();
    }
}

impl SweepState {
    fn reverse(&mut self) {
        self.ops.reverse();
        for op in self.ops.iter_mut() {
            *op = op.transposed();
        }
        reverse_cores(&mut self.b);
        reverse_cores(&mut self.x);
        reverse_cores(&mut self.z);
        self.reversed = !self.reversed;
    }

    fn solution(&self) -> TtVector {
        let mut x = self.x.clone();
        if self.reversed {
            reverse_cores(&mut x);
        }
        TtVector::new(x).expect("sweep keeps a consistent rank chain")
    }
}

fn random_train(sizes: &[usize], rank: usize, rng: &mut ChaCha8Rng) -> Vec<Core> {
    let d = sizes.len();
    (0..d)
        .map(|k| {
            let r0 = if k == 0 { 1 } else { rank };
            let r1 = if k == d - 1 { 1 } else { rank };
            let data = (0..r0 * sizes[k] * r1)
                .map(|_| rng.random::<f64>() - 0.5)
                .collect();
            Core {
                r0,
                n: sizes[k],
                r1,
                data,
            }
        })
        .collect()
}

fn frob(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `a·x = b` by alternating sweeps with residual enrichment. `progress` receives
/// one record per sweep.
pub fn als_solve_observed(
    a: &TtMatrix,
    b: &TtVector,
    opts: &SolverOptions,
    x0: Option<&TtVector>,
    progress: &mut dyn FnMut(&ProgressRecord),
) -> Result<(TtVector, SolveStats)> {
    opts.validate()?;
    if a.row_sizes() != a.col_sizes() {
        return Err(mismatch("als_solve needs a square operator in every mode"));
    }
    if b.mode_sizes() != a.col_sizes() {
        return Err(mismatch(format!(
            "right-hand side modes {:?} do not match the operator {:?}",
            b.mode_sizes(),
            a.col_sizes()
        )));
    }
    let sizes = b.mode_sizes();
    let d = sizes.len();
    let bnorm = tt_norm(b);
    if bnorm == 0.0 {
        return Ok((
            TtVector::zeros(&sizes),
            SolveStats {
                converged: true,
                ..Default::default()
            },
        ));
    }
    let start = match x0 {
        Some(x) if x.mode_sizes() == sizes => x.clone(),
        Some(_) => return Err(mismatch("initial guess has the wrong mode sizes")),
        None => b.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut st = SweepState {
        ops: (0..d).map(|k| OpCore::from_matrix(a, k)).collect(),
        b: b.cores().to_vec(),
        x: start.into_cores(),
        z: random_train(&sizes, opts.enrichment_rank.max(1), &mut rng),
        reversed: false,
    };
    orthogonalize_right(&mut st.x);
    orthogonalize_right(&mut st.z);

    let mut stats = SolveStats::default();
    let mut best: Option<(f64, TtVector)> = None;
    for sweep in 1..=opts.max_sweeps {
        let local_max = half_sweep(&mut st, opts, bnorm, &mut rng)?;
        let x = st.solution();
        stats.sweeps_used = sweep;
        stats.rank_history.push(x.max_rank());
        // The local residuals bound the global one from below; only check the global
        // residual once they are small.
        let mut estimate = local_max;
        if local_max <= opts.solver_tol || sweep == opts.max_sweeps {
            let global = tt_residual_norm(a, &x, b)? / bnorm;
            estimate = global;
            if best.as_ref().is_none_or(|(r, _)| global < *r) {
                best = Some((global, x.clone()));
            }
            if global <= opts.solver_tol {
                stats.residual_history.push(global);
                progress(&ProgressRecord {
                    stage: Stage::Sweep,
                    iteration: sweep,
                    residual: global,
                    max_rank: x.max_rank(),
                });
                let (x, res) = compress_result(a, b, x, global, bnorm, opts)?;
                stats.final_residual = res;
                stats.converged = true;
                return Ok((x, stats));
            }
        }
        stats.residual_history.push(estimate);
        progress(&ProgressRecord {
            stage: Stage::Sweep,
            iteration: sweep,
            residual: estimate,
            max_rank: x.max_rank(),
        });
    }
    let (res, x) = best.expect("the last sweep always checks the global residual");
    warn!(
        "als_solve stopped after {} sweeps at relative residual {res:.3e} (target {:.3e})",
        opts.max_sweeps, opts.solver_tol
    );
    stats.final_residual = res;
    stats.converged = false;
    Ok((x, stats))
}

/// Rounds the converged iterate when that keeps the residual on target.
fn compress_result(
    a: &TtMatrix,
    b: &TtVector,
    x: TtVector,
    residual: f64,
    bnorm: f64,
    opts: &SolverOptions,
) -> Result<(TtVector, f64)> {
    let rounded = tt_round(&x, opts.tt_tol, opts.rmax);
    if rounded.ranks() == x.ranks() {
        return Ok((x, residual));
    }
    let r = tt_residual_norm(a, &rounded, b)? / bnorm;
    if r <= opts.solver_tol {
        Ok((rounded, r))
    } else {
        Ok((x, residual))
    }
}

/// One left-to-right pass; returns the largest relative local residual seen before
/// the local solves. The state is reversed on exit.
fn half_sweep(
    st: &mut SweepState,
    opts: &SolverOptions,
    bnorm: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let d = st.x.len();
    // Right interfaces: index k joins cores k..d−1.
    let mut xax_r = vec![Phi::boundary(); d + 1];
    let mut xb_r = vec![Psi::boundary(); d + 1];
    let mut zax_r = vec![Phi::boundary(); d + 1];
    let mut zb_r = vec![Psi::boundary(); d + 1];
    for k in (1..d).rev() {
        let op = st.ops[k].transposed();
        let xt = st.x[k].transposed();
        let zt = st.z[k].transposed();
        let bt = st.b[k].transposed();
        xax_r[k] = phi_step(&xax_r[k + 1], &xt, &op, &xt);
        xb_r[k] = psi_step(&xb_r[k + 1], &xt, &bt);
        zax_r[k] = phi_step(&zax_r[k + 1], &zt, &op, &xt);
        zb_r[k] = psi_step(&zb_r[k + 1], &zt, &bt);
    }
    let mut xax_l = Phi::boundary();
    let mut xb_l = Psi::boundary();
    let mut zax_l = Phi::boundary();
    let mut zb_l = Psi::boundary();
    let local_tol = 0.01 * opts.solver_tol * bnorm;
    let mut local_max: f64 = 0.0;
    let bond_tol = opts.tt_tol / ((d.max(2) - 1) as f64).sqrt();

    for k in 0..d {
        let op = &st.ops[k];
        let sys = LocalOp {
            left: &xax_l,
            op,
            right: &xax_r[k + 1],
        };
        let rhs = project_rhs(&xb_l, &st.b[k], &xb_r[k + 1]);
        let xk = &st.x[k];
        let mut ax = vec![0.0; sys.rows()];
        sys.apply(&xk.data, &mut ax);
        let before = frob(&ax.iter().zip(&rhs).map(|(p, q)| p - q).collect::<Vec<_>>());
        local_max = local_max.max(before / bnorm);
        let sol = if before <= local_tol {
            xk.data.clone()
        } else {
            solve_local(&sys, &rhs, &xk.data, local_tol)?.0
        };
        let (r0, n, r1) = (xk.r0, xk.n, xk.r1);
        let solved = Core {
            r0,
            n,
            r1,
            data: sol,
        };

        if k == d - 1 {
            st.z[k] = residual_core(
                &zax_l,
                op,
                &zax_r[k + 1],
                &solved,
                &zb_l,
                &st.b[k],
                &zb_r[k + 1],
            );
            st.x[k] = solved;
            break;
        }

        // Truncate the new core.
        let left = solved.left();
        let svd = la::truncated_svd(&left, bond_tol, opts.rmax)?;
        let rank = svd.rank().max(1);
        let (u, carry) = if svd.rank() == 0 {
            (Matrix::zeros(r0 * n, 1), Matrix::zeros(1, r1))
        } else {
            let mut sv = svd.vt.clone();
            for (i, s) in svd.s.iter().enumerate() {
                sv.row_mut(i).scale_mut(*s);
            }
            (svd.u.clone(), sv)
        };
        let truncated = Core::from_left(r0, n, &(&u * &carry));

        // Residual projections for the enrichment and for the next residual core.
        let rz = residual_core(
            &zax_l,
            op,
            &zax_r[k + 1],
            &truncated,
            &zb_l,
            &st.b[k],
            &zb_r[k + 1],
        );
        let rx = residual_core(
            &xax_l,
            op,
            &zax_r[k + 1],
            &truncated,
            &xb_l,
            &st.b[k],
            &zb_r[k + 1],
        );

        let extra = opts.rmax.saturating_sub(rank).min(rx.r1);
        let mut aug = Matrix::zeros(r0 * n, rank + extra);
        aug.view_mut((0, 0), (r0 * n, rank)).copy_from(&u);
        if extra > 0 {
            let rxl = rx.left();
            aug.view_mut((0, rank), (r0 * n, extra))
                .copy_from(&rxl.columns(0, extra));
        }
        let (q, rfac) = la::qr_decompose(&aug)?;
        let next = &st.x[k + 1];
        let carried = rfac.columns(0, rank) * carry * next.right();
        st.x[k + 1] = Core::from_right(next.n, next.r1, &carried);
        st.x[k] = Core::from_left(r0, n, &q);

        // Orthonormal residual core; a vanishing residual gets a random direction.
        let mut rzl = rz.left();
        if rzl.norm() == 0.0 {
            rzl = Matrix::from_fn(rzl.nrows(), rzl.ncols(), |_, _| rng.random::<f64>() - 0.5);
        }
        let (qz, _) = la::qr_decompose(&rzl)?;
        st.z[k] = Core::from_left(rz.r0, n, &qz);
        // The next residual core is recomputed before use; keep its left rank in step.
        let zn = &st.z[k + 1];
        if zn.r0 != qz.ncols() {
            st.z[k + 1] = Core {
                r0: qz.ncols(),
                n: zn.n,
                r1: zn.r1,
                data: vec![0.0; qz.ncols() * zn.n * zn.r1],
            };
        }

        xax_l = phi_step(&xax_l, &st.x[k], op, &st.x[k]);
        xb_l = psi_step(&xb_l, &st.x[k], &st.b[k]);
        zax_l = phi_step(&zax_l, &st.z[k], op, &st.x[k]);
        zb_l = psi_step(&zb_l, &st.z[k], &st.b[k]);
    }
    st.reverse();
    Ok(local_max)
}

/// `Φ_L A_k Φ_R x − Ψ_L b_k Ψ_R` as a core.
fn residual_core(
    phl: &Phi,
    op: &OpCore,
    phr: &Phi,
    x: &Core,
    psl: &Psi,
    b: &Core,
    psr: &Psi,
) -> Core {
    let sys = LocalOp {
        left: phl,
        op,
        right: phr,
    };
    let mut y = vec![0.0; sys.rows()];
    sys.apply(&x.data, &mut y);
    let f = project_rhs(psl, b, psr);
    for (yi, fi) in y.iter_mut().zip(&f) {
        *yi -= fi;
    }
    Core {
        r0: phl.rt,
        n: x.n,
        r1: phr.rt,
        data: y,
    }
}

#[cfg(test)]
mod tests;
