//! Interface contractions and local systems of the alternating solver.
//!
//! An operator interface `Φ(t, s, a)` joins a test core (rank index `t`), an operator
//! core (`a`) and a trial core (`s`); it is stored as `t + rt·(s + rs·a)`. Right
//! interfaces are left interfaces of the reversed trains, so they share the layout.
//! A vector interface `Ψ(t, p)` joins a test core and a right-hand-side core and is
//! stored as `t + rt·p`.

use nalgebra::{DMatrixView, Dyn, LU};

use crate::error::{Error, Result};
use crate::krylov;
use crate::la::{solve_dense, Matrix};
use crate::tt::{Core, TtMatrix};

/// Nonzero entries `(a, i, j, b, value)` of one operator core.
#[derive(Debug, Clone)]
pub(crate) struct OpCore {
    pub r0: usize,
    pub n: usize,
    pub r1: usize,
    pub nz: Vec<(usize, usize, usize, usize, f64)>,
}

impl OpCore {
    pub fn from_matrix(a: &TtMatrix, k: usize) -> OpCore {
        let core = &a.train().cores()[k];
        let n = a.row_sizes()[k];
        let mut nz = Vec::new();
        for b in 0..core.r1 {
            for m in 0..core.n {
                let (i, j) = (m % n, m / n);
                for r in 0..core.r0 {
                    let v = core.get(r, m, b);
                    if v != 0.0 {
                        nz.push((r, i, j, b, v));
                    }
                }
            }
        }
        // Group by (b, j) so the contraction loops stream through memory.
        nz.sort_by_key(|&(a, i, j, b, _)| (b, j, a, i));
        OpCore {
            r0: core.r0,
            n,
            r1: core.r1,
            nz,
        }
    }

    pub fn transposed(&self) -> OpCore {
        let mut nz: Vec<_> = self
            .nz
            .iter()
            .map(|&(a, i, j, b, v)| (b, i, j, a, v))
            .collect();
        nz.sort_by_key(|&(a, i, j, b, _)| (b, j, a, i));
        OpCore {
            r0: self.r1,
            n: self.n,
            r1: self.r0,
            nz,
        }
    }
}

/// Operator interface `(rt, rs, ra)`.
#[derive(Debug, Clone)]
pub(crate) struct Phi {
    pub rt: usize,
    pub rs: usize,
    pub ra: usize,
    pub data: Vec<f64>,
}

impl Phi {
    pub fn boundary() -> Phi {
        Phi {
            rt: 1,
            rs: 1,
            ra: 1,
            data: vec![1.0],
        }
    }

    #[inline]
    fn get(&self, t: usize, s: usize, a: usize) -> f64 {
        self.data[t + self.rt * (s + self.rs * a)]
    }

    fn block(&self, a: usize) -> DMatrixView<'_, f64> {
        let len = self.rt * self.rs;
        DMatrixView::from_slice(&self.data[a * len..(a + 1) * len], self.rt, self.rs)
    }
}

/// Vector interface `(rt, rb)`.
#[derive(Debug, Clone)]
pub(crate) struct Psi {
    pub rt: usize,
    pub rb: usize,
    pub data: Vec<f64>,
}

impl Psi {
    pub fn boundary() -> Psi {
        Psi {
            rt: 1,
            rb: 1,
            data: vec![1.0],
        }
    }

    fn view(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.data, self.rt, self.rb)
    }
}

fn left_view(c: &Core) -> DMatrixView<'_, f64> {
    DMatrixView::from_slice(&c.data, c.r0 * c.n, c.r1)
}

fn right_view(c: &Core) -> DMatrixView<'_, f64> {
    DMatrixView::from_slice(&c.data, c.r0, c.n * c.r1)
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Extends an operator interface by one core: `Φ'(t', s', b)`.
pub(crate) fn phi_step(phi: &Phi, test: &Core, op: &OpCore, trial: &Core) -> Phi {
    let (rt, rs, ra) = (phi.rt, phi.rs, phi.ra);
    debug_assert_eq!((rt, rs, ra), (test.r0, trial.r0, op.r0));
    let n = op.n;
    let (rs1, rt1, rb) = (trial.r1, test.r1, op.r1);
    // W1_a(t, j, s') = Σ_s Φ(t, s, a) trial(s, j, s')
    let blk = rt * n * rs1;
    let mut w1 = vec![0.0; ra * blk];
    let tr = right_view(trial);
    for a in 0..ra {
        let m = phi.block(a) * tr;
        w1[a * blk..(a + 1) * blk].copy_from_slice(m.as_slice());
    }
    // W2(t, i, s', b) = Σ_{a,j} A(a, i, j, b) W1_a(t, j, s')
    let mut w2 = vec![0.0; rt * n * rs1 * rb];
    for &(a, i, j, b, v) in &op.nz {
        for sp in 0..rs1 {
            let dst = rt * (i + n * (sp + rs1 * b));
            let src = a * blk + rt * (j + n * sp);
            axpy(v, &w1[src..src + rt], &mut w2[dst..dst + rt]);
        }
    }
    let w2 = DMatrixView::from_slice(&w2, rt * n, rs1 * rb);
    let out = left_view(test).tr_mul(&w2);
    Phi {
        rt: rt1,
        rs: rs1,
        ra: rb,
        data: out.as_slice().to_vec(),
    }
}

/// Extends a vector interface by one core.
pub(crate) fn psi_step(psi: &Psi, test: &Core, b: &Core) -> Psi {
    let w = psi.view() * right_view(b);
    let w = DMatrixView::from_slice(w.as_slice(), test.r0 * test.n, b.r1);
    let out = left_view(test).tr_mul(&w);
    Psi {
        rt: test.r1,
        rb: b.r1,
        data: out.as_slice().to_vec(),
    }
}

/// Local operator `Φ_L ⊗ A_k ⊗ Φ_R` applied to a core-shaped vector.
pub(crate) struct LocalOp<'a> {
    pub left: &'a Phi,
    pub op: &'a OpCore,
    pub right: &'a Phi,
}

impl LocalOp<'_> {
    /// Length of input vectors `(rs0, n, rs1)`.
    pub fn cols(&self) -> usize {
        self.left.rs * self.op.n * self.right.rs
    }

    /// Length of output vectors `(rt0, n, rt1)`.
    pub fn rows(&self) -> usize {
        self.left.rt * self.op.n * self.right.rt
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (l, r, op) = (self.left, self.right, self.op);
        let n = op.n;
        let (rs0, rs1, rt0, rt1) = (l.rs, r.rs, l.rt, r.rt);
        let (ra0, ra1) = (l.ra, r.ra);
        // T1_b(s0, j, u) = Σ_{s1} x(s0, j, s1) Φ_R(u, s1, b)
        let xv = DMatrixView::from_slice(x, rs0 * n, rs1);
        let blk = rs0 * n * rt1;
        let mut t1 = vec![0.0; blk * ra1];
        for b in 0..ra1 {
            let m = xv * r.block(b).transpose();
            t1[b * blk..(b + 1) * blk].copy_from_slice(m.as_slice());
        }
        // T2(s0, a, i, u) = Σ_{j,b} A(a, i, j, b) T1_b(s0, j, u)
        let mut t2 = vec![0.0; rs0 * ra0 * n * rt1];
        for &(a, i, j, b, v) in &op.nz {
            for u in 0..rt1 {
                let dst = rs0 * (a + ra0 * (i + n * u));
                let src = b * blk + rs0 * (j + n * u);
                axpy(v, &t1[src..src + rs0], &mut t2[dst..dst + rs0]);
            }
        }
        let lv = DMatrixView::from_slice(&l.data, rt0, rs0 * ra0);
        let t2 = DMatrixView::from_slice(&t2, rs0 * ra0, n * rt1);
        let out = lv * t2;
        y.copy_from_slice(out.as_slice());
    }

    pub fn to_dense(&self) -> Matrix {
        let (l, r, op) = (self.left, self.right, self.op);
        let n = op.n;
        let (r0, r1) = (l.rt, r.rt);
        let mut m = Matrix::zeros(self.rows(), self.cols());
        for &(a, i, j, b, v) in &op.nz {
            for s1 in 0..r.rs {
                for t1 in 0..r1 {
                    let pr = v * r.get(t1, s1, b);
                    if pr == 0.0 {
                        continue;
                    }
                    for s0 in 0..l.rs {
                        let col = s0 + l.rs * (j + n * s1);
                        for t0 in 0..r0 {
                            m[(t0 + r0 * (i + n * t1), col)] += pr * l.get(t0, s0, a);
                        }
                    }
                }
            }
        }
        m
    }
}

/// Projected right-hand side `Ψ_L b_k Ψ_Rᵀ` as a `(rt0, n, rt1)` vector.
pub(crate) fn project_rhs(left: &Psi, b: &Core, right: &Psi) -> Vec<f64> {
    let w = left.view() * right_view(b);
    let w = DMatrixView::from_slice(w.as_slice(), left.rt * b.n, b.r1);
    let out = w * right.view().transpose();
    out.as_slice().to_vec()
}

/// Block-Jacobi preconditioner: one `n × n` block per pair of rank indices.
struct BlockJacobi {
    r0: usize,
    n: usize,
    r1: usize,
    blocks: Vec<Option<LU<f64, Dyn, Dyn>>>,
}

impl BlockJacobi {
    fn new(op: &LocalOp<'_>) -> BlockJacobi {
        let (l, r) = (op.left, op.right);
        let n = op.op.n;
        let (r0, r1) = (l.rt, r.rt);
        let mut mats = vec![Matrix::zeros(n, n); r0 * r1];
        for &(a, i, j, b, v) in &op.op.nz {
            for t1 in 0..r1 {
                let pr = v * r.get(t1, t1, b);
                if pr == 0.0 {
                    continue;
                }
                for t0 in 0..r0 {
                    mats[t0 + r0 * t1][(i, j)] += pr * l.get(t0, t0, a);
                }
            }
        }
        let blocks = mats
            .into_iter()
            .map(|m| {
                let scale = m.amax();
                let lu = m.lu();
                let ok = scale > 0.0 && (0..n).all(|i| lu.u()[(i, i)].abs() > 1e-13 * scale);
                ok.then_some(lu)
            })
            .collect();
        BlockJacobi { r0, n, r1, blocks }
    }

    fn apply(&self, v: &[f64], z: &mut [f64]) {
        let (r0, n) = (self.r0, self.n);
        let mut buf = nalgebra::DVector::zeros(n);
        for t1 in 0..self.r1 {
            for t0 in 0..r0 {
                let base = t0 + r0 * n * t1;
                match &self.blocks[t0 + r0 * t1] {
                    Some(lu) => {
                        for i in 0..n {
                            buf[i] = v[base + r0 * i];
                        }
                        lu.solve_mut(&mut buf);
                        for i in 0..n {
                            z[base + r0 * i] = buf[i];
                        }
                    }
                    None => {
                        for i in 0..n {
                            z[base + r0 * i] = v[base + r0 * i];
                        }
                    }
                }
            }
        }
    }
}

/// Local systems up to this size are assembled and solved densely.
pub(crate) const DENSE_LOCAL_LIMIT: usize = 1000;

/// Solves the local system to absolute residual `tol`, starting from `x0`.
/// Returns the solution and its residual norm.
pub(crate) fn solve_local(
    op: &LocalOp<'_>,
    rhs: &[f64],
    x0: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let dim = op.rows();
    let residual = |x: &[f64]| {
        let mut y = vec![0.0; dim];
        op.apply(x, &mut y);
        krylov::norm(&y.iter().zip(rhs).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    if dim <= DENSE_LOCAL_LIMIT {
        let m = op.to_dense();
        let x = match solve_dense(&m, rhs) {
            Ok(x) => x,
            Err(Error::Singular { .. }) => {
                // Tikhonov-regularized retry.
                let shift = 1e-12 * m.norm();
                let reg = &m + Matrix::identity(dim, dim) * shift;
                solve_dense(&reg, rhs).map_err(|e| {
                    Error::Solver(format!("local system of size {dim} is singular: {e}"))
                })?
            }
            Err(e) => return Err(e),
        };
        let r = residual(&x);
        return Ok((x, r));
    }
    let pre = BlockJacobi::new(op);
    let res = krylov::gmres(
        |v, y| op.apply(v, y),
        |v, z| pre.apply(v, z),
        rhs,
        x0,
        tol,
        40,
        1200,
    );
    if !res.residual.is_finite() {
        return Err(Error::Solver(
            "local iterative solve produced non-finite values".into(),
        ));
    }
    Ok((res.x, res.residual))
}
