//! Cross interpolation of black-box grid functions into tensor trains.
//!
//! Each sweep visits the bonds in order. At bond `k` the superblock with rows
//! `(left set of k, i_k)` and columns `(i_{k+1}, right set of k+2)` is sampled and
//! approximated by fully pivoted adaptive cross approximation, stopping as soon as the
//! Frobenius norm of the residual falls below `tol` times that of the superblock. The
//! column skeleton is orthogonalized and maxvol picks the rows that become the next
//! left set; the core is the interpolation matrix `Q·Q[I]⁻¹`. Backward sweeps run the
//! same code on the reversed problem.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::la::{self, Matrix};
use crate::sem::Grid;
use crate::tt::{Core, TtVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossOptions {
    pub tol: f64,
    pub rmax: usize,
    pub max_sweeps: usize,
    pub seed: u64,
    /// Held-out samples used to judge convergence.
    pub samples: usize,
}

impl Default for CrossOptions {
    fn default() -> Self {
        CrossOptions {
            tol: 1e-10,
            rmax: 64,
            max_sweeps: 12,
            seed: 7,
            samples: 1000,
        }
    }
}

impl CrossOptions {
    pub fn with_tol(tol: f64) -> Self {
        CrossOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CrossResult {
    pub train: TtVector,
    pub converged: bool,
    /// Max abs error on the held-out samples divided by their max abs value.
    pub sample_error: f64,
    pub sweeps: usize,
    pub evaluations: usize,
}

type Multi = Vec<usize>;

struct Oriented<'a, F> {
    f: &'a F,
    shape: Vec<usize>,
    reversed: bool,
    scratch: Vec<usize>,
    evaluations: usize,
}

impl<F: Fn(&[usize]) -> f64> Oriented<'_, F> {
    fn eval(&mut self, left: &[usize], i: usize, j: usize, right: &[usize]) -> f64 {
        self.scratch.clear();
        self.scratch.extend_from_slice(left);
        self.scratch.push(i);
        self.scratch.push(j);
        self.scratch.extend_from_slice(right);
        if self.reversed {
            self.scratch.reverse();
        }
        self.evaluations += 1;
        (self.f)(&self.scratch)
    }
}

/// Fully pivoted ACA; returns the pivot rows and columns.
fn aca(pi: &Matrix, tol: f64, rmax: usize) -> (Vec<usize>, Vec<usize>) {
    let total = pi.norm();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    if total == 0.0 {
        return (rows, cols);
    }
    let mut res = pi.clone();
    let limit = rmax.min(pi.nrows()).min(pi.ncols());
    while rows.len() < limit {
        let (mut bi, mut bj, mut bv) = (0, 0, 0.0);
        for j in 0..res.ncols() {
            for i in 0..res.nrows() {
                let v = res[(i, j)].abs();
                if v > bv {
                    bv = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if bv == 0.0 {
            break;
        }
        let u = res.column(bj).into_owned();
        let v = res.row(bi).into_owned() / res[(bi, bj)];
        res -= &u * &v;
        rows.push(bi);
        cols.push(bj);
        if res.norm() <= tol * total {
            break;
        }
    }
    (rows, cols)
}

/// One left-to-right sweep; returns the cores and the new left sets.
fn sweep<F: Fn(&[usize]) -> f64>(
    prob: &mut Oriented<'_, F>,
    right: &[Vec<Multi>],
    opts: &CrossOptions,
) -> Result<(Vec<Core>, Vec<Vec<Multi>>)> {
    let d = prob.shape.len();
    let mut left: Vec<Vec<Multi>> = vec![vec![Vec::new()]];
    let mut cores = Vec::with_capacity(d);
    for k in 0..d - 1 {
        let (nk, nk1) = (prob.shape[k], prob.shape[k + 1]);
        let lk = left[k].clone();
        let rk = &right[k + 2];
        let nrows = lk.len() * nk;
        let ncols = nk1 * rk.len();
        let mut pi = Matrix::zeros(nrows, ncols);
        for (b, beta) in rk.iter().enumerate() {
            for j in 0..nk1 {
                for i in 0..nk {
                    for (a, alpha) in lk.iter().enumerate() {
                        pi[(a + lk.len() * i, j + nk1 * b)] = prob.eval(alpha, i, j, beta);
                    }
                }
            }
        }
        let (_, pcols) = aca(&pi, opts.tol, opts.rmax);
        let (core_mat, chosen) = if pcols.is_empty() {
            let mut e = Matrix::zeros(nrows, 1);
            e[(0, 0)] = 1.0;
            (e, vec![0usize])
        } else {
            let u = Matrix::from_fn(nrows, pcols.len(), |i, c| pi[(i, pcols[c])]);
            let (q, _) = la::qr_decompose(&u)?;
            let mv = la::maxvol(&q, 1e-2, 200)?;
            let sub = Matrix::from_fn(q.ncols(), q.ncols(), |i, j| q[(mv.rows[i], j)]);
            // core = Q · Q[I]⁻¹, computed as a solve with the transposed system.
            let core = la::solve_dense_multi(&sub.transpose(), &q.transpose())?.transpose();
            (core, mv.rows)
        };
        cores.push(Core::from_left(lk.len(), nk, &core_mat));
        let next: Vec<Multi> = chosen
            .iter()
            .map(|&row| {
                let mut m = lk[row % lk.len()].clone();
                m.push(row / lk.len());
                m
            })
            .collect();
        if k == d - 2 {
            let last = Matrix::from_fn(chosen.len(), ncols, |a, c| pi[(chosen[a], c)]);
            cores.push(Core::from_right(nk1, 1, &last));
        }
        left.push(next);
    }
    Ok((cores, left))
}

fn random_right_sets(shape: &[usize], size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Multi>> {
    let d = shape.len();
    let mut right: Vec<Vec<Multi>> = vec![Vec::new(); d + 1];
    right[d] = vec![Vec::new()];
    for k in (1..d).rev() {
        let capacity: f64 = shape[k..].iter().map(|&n| n as f64).product();
        let want = (size as f64).min(capacity) as usize;
        let mut set: Vec<Multi> = Vec::with_capacity(want);
        let mut attempts = 0;
        while set.len() < want && attempts < 100 * want {
            attempts += 1;
            let mut m = vec![rng.random_range(0..shape[k])];
            let tail = &right[k + 1][rng.random_range(0..right[k + 1].len())];
            m.extend_from_slice(tail);
            if !set.contains(&m) {
                set.push(m);
            }
        }
        right[k] = set;
    }
    right
}

fn reverse_sets(sets: &[Vec<Multi>]) -> Vec<Vec<Multi>> {
    sets.iter()
        .rev()
        .map(|s| {
            s.iter()
                .map(|m| m.iter().rev().copied().collect())
                .collect()
        })
        .collect()
}

/// Builds a train approximating `f` on the index box `shape`.
pub fn cross_interpolate<F>(shape: &[usize], f: F, opts: &CrossOptions) -> Result<CrossResult>
where
    F: Fn(&[usize]) -> f64 + Sync,
{
    if shape.is_empty() || shape.contains(&0) {
        return Err(invalid("cross_interpolate: all modes must be nonempty"));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("cross_interpolate: tol must be positive"));
    }
    let d = shape.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // Held-out samples, or every index when the box is small.
    let total: f64 = shape.iter().map(|&n| n as f64).product();
    let samples: Vec<Multi> = if total <= opts.samples.max(1) as f64 {
        let mut all = Vec::new();
        let mut idx = vec![0usize; d];
        for _ in 0..total as usize {
            all.push(idx.clone());
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        all
    } else {
        (0..opts.samples)
            .map(|_| shape.iter().map(|&n| rng.random_range(0..n)).collect())
            .collect()
    };
    let values: Vec<f64> = samples.iter().map(|s| f(s)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid(
            "cross_interpolate: function returned a non-finite value",
        ));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // Relative max error on the samples and the position of the worst one.
    let worst_sample = |t: &TtVector| -> (f64, usize) {
        let (err, at) = samples.iter().zip(&values).enumerate().fold(
            (0.0f64, 0usize),
            |(m, at), (k, (s, v))| {
                let e = (t.value_at(s) - v).abs();
                if e > m {
                    (e, k)
                } else {
                    (m, at)
                }
            },
        );
        (if scale > 0.0 { err / scale } else { err }, at)
    };
    let sample_error = |t: &TtVector| worst_sample(t).0;

    if d == 1 {
        let data: Vec<f64> = (0..shape[0]).map(|i| f(&[i])).collect();
        let train = TtVector::new(vec![Core::new(1, shape[0], 1, data)?])?;
        return Ok(CrossResult {
            sample_error: sample_error(&train),
            train,
            converged: true,
            sweeps: 0,
            evaluations: shape[0] + samples.len(),
        });
    }

    let mut right = random_right_sets(shape, 2, &mut rng);
    let mut reversed = false;
    let mut evaluations = samples.len();
    let mut best: Option<(TtVector, f64)> = None;
    let mut prev_ranks: Option<Vec<usize>> = None;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        let cur_shape: Vec<usize> = if reversed {
            shape.iter().rev().copied().collect()
        } else {
            shape.to_vec()
        };
        let mut prob = Oriented {
            f: &f,
            shape: cur_shape,
            reversed,
            scratch: Vec::with_capacity(d),
            evaluations: 0,
        };
        let (cores, left) = sweep(&mut prob, &right, opts)?;
        evaluations += prob.evaluations;
        sweeps += 1;
        let mut train = TtVector::new(cores)?;
        if reversed {
            train = train.reversed();
        }
        let (err, worst) = worst_sample(&train);
        let ranks = train.ranks();
        log::debug!("cross sweep {sweeps}: ranks {ranks:?}, sample error {err:.3e}");
        let stable = prev_ranks.as_ref() == Some(&ranks);
        let better = best.as_ref().is_none_or(|(_, e)| err <= *e);
        if stable && err <= 10.0 * opts.tol {
            best = Some((train, err));
            converged = true;
            break;
        }
        if better {
            best = Some((train, err));
        }
        prev_ranks = Some(ranks);
        // Grow the index sets through the worst sample, so fibres that missed the
        // support of `f` entirely still get a chance to see it.
        let mut left = left;
        if err > opts.tol {
            let mut w = samples[worst].clone();
            if reversed {
                w.reverse();
            }
            for (k, set) in left.iter_mut().enumerate().skip(1) {
                let prefix = w[..k].to_vec();
                if !set.contains(&prefix) {
                    set.push(prefix);
                }
            }
        }
        // The left sets of this sweep are the right sets of the reversed problem.
        right = reverse_sets(&left);
        right.insert(0, Vec::new());
        right.truncate(d + 1);
        right[d] = vec![Vec::new()];
        reversed = !reversed;
    }
    let (train, err) = best.expect("at least one sweep ran");
    if !converged {
        log::warn!(
            "cross interpolation did not converge in {sweeps} sweeps (sample error {err:.3e})"
        );
    }
    Ok(CrossResult {
        train,
        converged,
        sample_error: err,
        sweeps,
        evaluations,
    })
}

/// Cross interpolation of a function of physical coordinates `[x, y, z, t]` on all
/// nodes of a grid.
pub fn cross_on_grid(
    grid: &Grid,
    f: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    opts: &CrossOptions,
) -> Result<CrossResult> {
    let axes = grid.axes();
    let shape = grid.node_counts();
    let nodes: Vec<Vec<f64>> = axes.iter().map(|a| a.nodes()).collect();
    cross_interpolate(
        &shape,
        |idx: &[usize]| {
            let mut c = [0.0f64; 8];
            for (k, &i) in idx.iter().enumerate() {
                c[k] = nodes[k][i];
            }
            f(&c[..idx.len()])
        },
        opts,
    )
}
