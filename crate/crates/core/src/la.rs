//! Dense linear-algebra kernels on top of nalgebra.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

pub type Matrix = DMatrix<f64>;

/// Thin SVD factors; `u` has orthonormal columns and `vt` orthonormal rows.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * &self.vt
    }
}

/// Outcome of a maxvol search.
#[derive(Debug, Clone)]
pub struct Maxvol {
    pub rows: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
}

pub(crate) fn ensure_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!(
            "{what}: matrix contains non-finite entries"
        )))
    }
}

/// Smallest rank whose discarded singular values have Euclidean norm at most `threshold`.
pub fn rank_for_tail(s: &[f64], threshold: f64) -> usize {
    let mut tail = 0.0;
    let mut r = s.len();
    while r > 0 {
        let next = tail + s[r - 1] * s[r - 1];
        if next.sqrt() > threshold {
            break;
        }
        tail = next;
        r -= 1;
    }
    r
}

/// Full thin SVD with singular values sorted nonincreasing.
pub fn svd(a: &Matrix) -> Result<Svd> {
    ensure_finite(a, "svd")?;
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(Svd {
            u: Matrix::zeros(m, 0),
            s: Vec::new(),
            vt: Matrix::zeros(0, n),
        });
    }
    // nalgebra's bidiagonal SVD can return wrong singular values for nearly diagonal
    // inputs, so the decomposition itself is delegated to faer.
    let fa = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let dec = fa
        .thin_svd()
        .map_err(|e| Error::Solver(format!("svd did not converge: {e:?}")))?;
    let k = m.min(n);
    let (fu, fs, fv) = (dec.U(), dec.S(), dec.V());
    let u = Matrix::from_fn(m, k, |i, j| fu[(i, j)]);
    let vt = Matrix::from_fn(k, n, |i, j| fv[(j, i)]);
    let s: Vec<f64> = (0..k).map(|i| fs[i].max(0.0)).collect();
    Ok(Svd { u, s, vt })
}

/// Truncated SVD keeping the smallest rank `r ≤ rmax` with
/// `‖a − U S Vᵀ‖_F ≤ tol·‖a‖_F`, or the best rank-`rmax` approximation.
pub fn truncated_svd(a: &Matrix, tol: f64, rmax: usize) -> Result<Svd> {
    if !(tol >= 0.0) {
        return Err(invalid("truncated_svd: tol must be nonnegative"));
    }
    if rmax == 0 {
        return Err(invalid("truncated_svd: rmax must be at least 1"));
    }
    let full = svd(a)?;
    let total: f64 = full.s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = rank_for_tail(&full.s, tol * total).min(rmax);
    Ok(truncate_to(full, r))
}

pub(crate) fn truncate_to(full: Svd, r: usize) -> Svd {
    let r = r.min(full.s.len());
    Svd {
        u: full.u.columns(0, r).into_owned(),
        s: full.s[..r].to_vec(),
        vt: full.vt.rows(0, r).into_owned(),
    }
}

/// Thin QR: `a = q·r` with `q` of size m×min(m,n).
pub fn qr_decompose(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(invalid("qr_decompose: empty matrix"));
    }
    ensure_finite(a, "qr_decompose")?;
    let qr = a.clone().qr();
    Ok((qr.q(), qr.r()))
}

/// Solves `a·x = b` by LU with partial pivoting.
pub fn solve_dense(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let rhs = Matrix::from_column_slice(b.len(), 1, b);
    let x = solve_dense_multi(a, &rhs)?;
    Ok(x.column(0).iter().copied().collect())
}

/// Solves `a·X = B` for several right-hand sides.
pub fn solve_dense_multi(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let (m, n) = a.shape();
    if m != n {
        return Err(invalid(format!(
            "solve_dense: matrix is {m}x{n}, not square"
        )));
    }
    if b.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "solve_dense: rhs has {} rows, matrix has {n}",
            b.nrows()
        )));
    }
    ensure_finite(a, "solve_dense")?;
    ensure_finite(b, "solve_dense")?;
    if n == 0 {
        return Ok(b.clone());
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let mut dmax: f64 = 0.0;
    let mut dmin = f64::INFINITY;
    for i in 0..n {
        let d = u[(i, i)].abs();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    let condition = if dmin > 0.0 {
        dmax / dmin
    } else {
        f64::INFINITY
    };
    if !(condition.is_finite()) || condition * f64::EPSILON > 1.0 {
        return Err(Error::Singular { condition });
    }
    let x = lu.solve(b).ok_or(Error::Singular { condition })?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular { condition });
    }
    Ok(x)
}

/// Row selection of a quasi-maximal-volume r×r submatrix of a tall n×r matrix.
///
/// The start comes from Gaussian elimination with partial pivoting; rows are then
/// swapped until every entry of `a·a[rows]⁻¹` is bounded by `1 + tol`.
pub fn maxvol(a: &Matrix, tol: f64, max_iters: usize) -> Result<Maxvol> {
    let (n, r) = a.shape();
    if r == 0 {
        return Ok(Maxvol {
            rows: Vec::new(),
            converged: true,
            iterations: 0,
        });
    }
    if n < r {
        return Err(invalid(format!("maxvol: need n >= r, got {n}x{r}")));
    }
    ensure_finite(a, "maxvol")?;
    let scale = a.amax();
    if scale == 0.0 {
        return Err(invalid("maxvol: matrix is rank deficient"));
    }

    // Initial rows from partial-pivoting elimination.
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..r {
        let mut best = k;
        let mut best_val = work[(k, k)].abs();
        for i in k + 1..n {
            let v = work[(i, k)].abs();
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        if best_val <= scale * 1e-14 * (n as f64) {
            return Err(invalid("maxvol: matrix is rank deficient"));
        }
        if best != k {
            work.swap_rows(best, k);
            perm.swap(best, k);
        }
        let pivot = work[(k, k)];
        for i in k + 1..n {
            let f = work[(i, k)] / pivot;
            if f != 0.0 {
                for j in k..r {
                    let v = work[(k, j)];
                    work[(i, j)] -= f * v;
                }
            }
        }
    }
    let mut rows: Vec<usize> = perm[..r].to_vec();

    // Interpolation coefficients b = a · a[rows]⁻¹.
    let sub = Matrix::from_fn(r, r, |i, j| a[(rows[i], j)]);
    let sub_t = sub.transpose();
    let mut coef = solve_dense_multi(&sub_t, &a.transpose())
        .map_err(|_| invalid("maxvol: matrix is rank deficient"))?
        .transpose();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        let mut bi = 0;
        let mut bj = 0;
        let mut bv = 0.0;
        for j in 0..r {
            for i in 0..n {
                let v = coef[(i, j)].abs();
                if v > bv {
                    bv = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if bv <= 1.0 + tol {
            converged = true;
            break;
        }
        iterations += 1;
        // Rank-one update after replacing rows[bj] by bi.
        let col = coef.column(bj).into_owned();
        let mut row = coef.row(bi).into_owned();
        row[bj] -= 1.0;
        let pivot = coef[(bi, bj)];
        coef -= (col / pivot) * row;
        rows[bj] = bi;
    }
    if !converged {
        let worst = coef.amax();
        converged = worst <= 1.0 + tol;
        if !converged {
            log::warn!("maxvol stopped after {iterations} swaps with dominance {worst:.3e}");
        }
    }
    Ok(Maxvol {
        rows,
        converged,
        iterations,
    })
}

/// Kronecker product with the left factor's index varying slowest.
pub fn kron(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let (ma, na) = a.shape();
    let (mb, nb) = b.shape();
    let rows = ma.checked_mul(mb);
    let cols = na.checked_mul(nb);
    match (rows, cols) {
        (Some(r), Some(c)) if r.checked_mul(c).is_some() => {}
        _ => return Err(invalid("kron: result size overflows")),
    }
    Ok(a.kronecker(b))
}
