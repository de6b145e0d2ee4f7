use super::round::orthogonalize_right;
use super::{Core, Train, TtMatrix, TtVector};
use crate::error::{invalid, mismatch, Result};
use crate::la::Matrix;

/// `alpha·x + y` by block-diagonal concatenation of cores; ranks add.
pub fn tt_axpy<T: Train>(alpha: f64, x: &T, y: &T) -> Result<T> {
    if !x.same_layout(y) {
        return Err(mismatch("tt_axpy: operands have different mode sizes"));
    }
    let xs = x.as_train();
    let ys = y.as_train();
    let d = xs.d();
    if d == 1 {
        let (cx, cy) = (xs.core(0), ys.core(0));
        let data = cx
            .data
            .iter()
            .zip(&cy.data)
            .map(|(a, b)| alpha * a + b)
            .collect();
        return Ok(y.rewrap(TtVector::from_cores_unchecked(vec![Core::new(
            1, cx.n, 1, data,
        )?])));
    }
    let mut cores = Vec::with_capacity(d);
    for k in 0..d {
        let (cx, cy) = (xs.core(k), ys.core(k));
        let n = cx.n;
        let first = k == 0;
        let last = k == d - 1;
        let r0 = if first { 1 } else { cx.r0 + cy.r0 };
        let r1 = if last { 1 } else { cx.r1 + cy.r1 };
        let mut out = Core::zeros(r0, n, r1);
        let sx = if first { alpha } else { 1.0 };
        for b in 0..cx.r1 {
            for i in 0..n {
                for a in 0..cx.r0 {
                    out.set(a, i, b, sx * cx.get(a, i, b));
                }
            }
        }
        let a_off = if first { 0 } else { cx.r0 };
        let b_off = if last { 0 } else { cx.r1 };
        for b in 0..cy.r1 {
            for i in 0..n {
                for a in 0..cy.r0 {
                    out.set(a + a_off, i, b + b_off, cy.get(a, i, b));
                }
            }
        }
        cores.push(out);
    }
    Ok(y.rewrap(TtVector::from_cores_unchecked(cores)))
}

/// `alpha·x` (scales the first core).
pub fn tt_scale<T: Train>(alpha: f64, x: &T) -> T {
    let mut t = x.as_train().clone();
    for v in t.cores_mut()[0].data.iter_mut() {
        *v *= alpha;
    }
    x.rewrap(t)
}

/// Elementwise product; ranks multiply.
pub fn tt_hadamard(x: &TtVector, y: &TtVector) -> Result<TtVector> {
    if x.mode_sizes() != y.mode_sizes() {
        return Err(mismatch("tt_hadamard: operands have different mode sizes"));
    }
    let cores = x
        .cores()
        .iter()
        .zip(y.cores())
        .map(|(cx, cy)| {
            let mut out = Core::zeros(cx.r0 * cy.r0, cx.n, cx.r1 * cy.r1);
            for bx in 0..cx.r1 {
                for by in 0..cy.r1 {
                    for i in 0..cx.n {
                        for ay in 0..cy.r0 {
                            let vy = cy.get(ay, i, by);
                            if vy == 0.0 {
                                continue;
                            }
                            for ax in 0..cx.r0 {
                                out.set(
                                    ax + cx.r0 * ay,
                                    i,
                                    bx + cx.r1 * by,
                                    cx.get(ax, i, bx) * vy,
                                );
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok(TtVector::from_cores_unchecked(cores))
}

/// Inner product over all multi-indices.
pub fn tt_dot(x: &TtVector, y: &TtVector) -> Result<f64> {
    if x.mode_sizes() != y.mode_sizes() {
        return Err(mismatch("tt_dot: operands have different mode sizes"));
    }
    let mut phi = Matrix::from_element(1, 1, 1.0);
    for (cx, cy) in x.cores().iter().zip(y.cores()) {
        let w = &phi * cy.right();
        let w = Matrix::from_column_slice(cx.r0 * cx.n, cy.r1, w.as_slice());
        phi = cx.left().transpose() * w;
    }
    Ok(phi[(0, 0)])
}

/// Frobenius norm, computed from the orthogonalized train.
pub fn tt_norm<T: Train>(x: &T) -> f64 {
    let mut cores = x.as_train().cores().to_vec();
    orthogonalize_right(&mut cores);
    cores[0].data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Diagonal operator with `x` on its diagonal; ranks equal those of `x`.
pub fn tt_diag(x: &TtVector) -> TtMatrix {
    let cores = x
        .cores()
        .iter()
        .map(|c| {
            let n = c.n;
            let mut out = Core::zeros(c.r0, n * n, c.r1);
            for b in 0..c.r1 {
                for i in 0..n {
                    for a in 0..c.r0 {
                        out.set(a, i + n * i, b, c.get(a, i, b));
                    }
                }
            }
            out
        })
        .collect();
    let sizes = x.mode_sizes();
    TtMatrix::from_parts(sizes.clone(), sizes, TtVector::from_cores_unchecked(cores))
        .expect("diagonal layout is consistent")
}

/// Rank-1 operator `F_1 ⊗ F_2 ⊗ … ⊗ F_d`, first factor slowest.
pub fn ttmat_from_factors(factors: &[Matrix]) -> Result<TtMatrix> {
    if factors.is_empty() {
        return Err(invalid("ttmat_from_factors: no factors"));
    }
    let mut cores = Vec::with_capacity(factors.len());
    for f in factors {
        cores.push(Core::new(
            1,
            f.nrows() * f.ncols(),
            1,
            f.as_slice().to_vec(),
        )?);
    }
    TtMatrix::from_parts(
        factors.iter().map(|f| f.nrows()).collect(),
        factors.iter().map(|f| f.ncols()).collect(),
        TtVector::new(cores)?,
    )
}

/// Operator-vector product; result ranks are products of operand ranks.
pub fn ttmat_apply(a: &TtMatrix, x: &TtVector) -> Result<TtVector> {
    if a.col_sizes() != x.mode_sizes().as_slice() {
        return Err(mismatch(format!(
            "ttmat_apply: operator columns {:?} vs vector modes {:?}",
            a.col_sizes(),
            x.mode_sizes()
        )));
    }
    let mut cores = Vec::with_capacity(x.d());
    for k in 0..x.d() {
        let ca = a.train().core(k);
        let cx = x.core(k);
        let (m, n) = (a.row_sizes()[k], a.col_sizes()[k]);
        let mut out = Core::zeros(ca.r0 * cx.r0, m, ca.r1 * cx.r1);
        for ba in 0..ca.r1 {
            for aa in 0..ca.r0 {
                for j in 0..n {
                    for i in 0..m {
                        let v = ca.get(aa, i + m * j, ba);
                        if v == 0.0 {
                            continue;
                        }
                        for bx in 0..cx.r1 {
                            for ax in 0..cx.r0 {
                                let k_out = out.idx(aa + ca.r0 * ax, i, ba + ca.r1 * bx);
                                out.data[k_out] += v * cx.get(ax, j, bx);
                            }
                        }
                    }
                }
            }
        }
        cores.push(out);
    }
    Ok(TtVector::from_cores_unchecked(cores))
}

/// Operator-operator product `a·b`; ranks multiply.
pub fn ttmat_matmul(a: &TtMatrix, b: &TtMatrix) -> Result<TtMatrix> {
    if a.col_sizes() != b.row_sizes() {
        return Err(mismatch("ttmat_matmul: inner sizes differ"));
    }
    let mut cores = Vec::with_capacity(a.d());
    for k in 0..a.d() {
        let ca = a.train().core(k);
        let cb = b.train().core(k);
        let (m, n, p) = (a.row_sizes()[k], a.col_sizes()[k], b.col_sizes()[k]);
        let mut out = Core::zeros(ca.r0 * cb.r0, m * p, ca.r1 * cb.r1);
        for ba in 0..ca.r1 {
            for aa in 0..ca.r0 {
                for j in 0..n {
                    for i in 0..m {
                        let va = ca.get(aa, i + m * j, ba);
                        if va == 0.0 {
                            continue;
                        }
                        for bb in 0..cb.r1 {
                            for l in 0..p {
                                for ab in 0..cb.r0 {
                                    let vb = cb.get(ab, j + n * l, bb);
                                    if vb != 0.0 {
                                        let k_out =
                                            out.idx(aa + ca.r0 * ab, i + m * l, ba + ca.r1 * bb);
                                        out.data[k_out] += va * vb;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        cores.push(out);
    }
    TtMatrix::from_parts(
        a.row_sizes().to_vec(),
        b.col_sizes().to_vec(),
        TtVector::from_cores_unchecked(cores),
    )
}
