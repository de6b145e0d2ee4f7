//! Matrix-free restarted GMRES with right preconditioning.

/// Outcome of a Krylov solve.
#[derive(Debug, Clone)]
pub struct KrylovResult {
    pub x: Vec<f64>,
    /// Final true residual norm `‖b − A x‖`.
    pub residual: f64,
    pub iterations: usize,
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Solves `A x = b` from `x0` until `‖b − A x‖ ≤ tol` (absolute) or `max_iter`
/// inner iterations. `apply` computes `y = A v`, `precond` computes `z ≈ A⁻¹ v`.
pub fn gmres(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x0: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> KrylovResult {
    let n = b.len();
    let mut x = x0.to_vec();
    let mut total = 0;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut r = vec![0.0; n];
    let residual = |apply: &mut dyn FnMut(&[f64], &mut [f64]), x: &[f64], r: &mut [f64]| {
        let mut ax = vec![0.0; n];
        apply(x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        norm(r)
    };
    let mut beta = residual(&mut apply, &x, &mut r);
    while total < max_iter && beta > tol {
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            precond(&basis[j], &mut z);
            apply(&z, &mut w);
            // Modified Gram-Schmidt, twice for stability.
            for _ in 0..2 {
                for (i, vi) in basis.iter().enumerate() {
                    let c = dot(&w, vi);
                    h[i][j] += c;
                    for (wk, vk) in w.iter_mut().zip(vi) {
                        *wk -= c * vk;
                    }
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let den = h[j][j].hypot(h[j + 1][j]);
            total += 1;
            if den == 0.0 {
                break;
            }
            cs[j] = h[j][j] / den;
            sn[j] = h[j + 1][j] / den;
            h[j][j] = den;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            if g[j + 1].abs() <= tol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        if used == 0 {
            break;
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let s: f64 = (i + 1..used).map(|k| h[i][k] * y[k]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        let mut upd = vec![0.0; n];
        for (k, yk) in y.iter().enumerate() {
            for (u, v) in upd.iter_mut().zip(&basis[k]) {
                *u += yk * v;
            }
        }
        precond(&upd, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        let next = residual(&mut apply, &x, &mut r);
        if next >= beta * (1.0 - 1e-12) && used < m {
            // Breakdown without progress.
            beta = next;
            break;
        }
        beta = next;
    }
    KrylovResult {
        x,
        residual: beta,
        iterations: total,
    }
}
