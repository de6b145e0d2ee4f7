//! Tensor-train vectors and matrices.
//!
//! A vector core has shape `(r0, n, r1)` and is stored column-major, so entry
//! `(a, i, b)` lives at `a + r0*(i + n*b)`. The left unfolding `(r0·n) × r1` and the
//! right unfolding `r0 × (n·r1)` are then plain column-major views of the same data.
//!
//! A matrix core `(r0, m, n, r1)` is a vector core over the merged index `i + m*j`
//! (row index `i`, column index `j`). Dense tensors are last-index-fastest, so the
//! first mode of a train is the slowest index of its flattening.

mod dense;
pub mod io;
mod ops;
mod round;

pub use dense::{tt_from_dense, tt_to_dense, tt_to_dense_capped, DenseTensor, DEFAULT_DENSE_CAP};
pub use ops::{
    tt_axpy, tt_diag, tt_dot, tt_hadamard, tt_norm, tt_scale, ttmat_apply, ttmat_from_factors,
    ttmat_matmul,
};
pub use round::{orthogonalize_left, orthogonalize_right, tt_round};

use crate::error::{invalid, mismatch, Result};
use crate::la::Matrix;

/// One 3-way core with shape `(r0, n, r1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Core {
    pub r0: usize,
    pub n: usize,
    pub r1: usize,
    pub data: Vec<f64>,
}

impl Core {
    pub fn new(r0: usize, n: usize, r1: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != r0 * n * r1 {
            return Err(mismatch(format!(
                "core ({r0},{n},{r1}) needs {} entries, got {}",
                r0 * n * r1,
                data.len()
            )));
        }
        if r0 == 0 || n == 0 || r1 == 0 {
            return Err(invalid("core dimensions must be positive"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("core contains non-finite entries"));
        }
        Ok(Core { r0, n, r1, data })
    }

    pub fn zeros(r0: usize, n: usize, r1: usize) -> Self {
        Core {
            r0,
            n,
            r1,
            data: vec![0.0; r0 * n * r1],
        }
    }

    #[inline]
    pub fn idx(&self, a: usize, i: usize, b: usize) -> usize {
        a + self.r0 * (i + self.n * b)
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[self.idx(a, i, b)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, i: usize, b: usize, v: f64) {
        let k = self.idx(a, i, b);
        self.data[k] = v;
    }

    /// Left unfolding `(r0·n) × r1`.
    pub fn left(&self) -> Matrix {
        Matrix::from_column_slice(self.r0 * self.n, self.r1, &self.data)
    }

    /// Right unfolding `r0 × (n·r1)`.
    pub fn right(&self) -> Matrix {
        Matrix::from_column_slice(self.r0, self.n * self.r1, &self.data)
    }

    pub fn from_left(r0: usize, n: usize, m: &Matrix) -> Core {
        debug_assert_eq!(m.nrows(), r0 * n);
        Core {
            r0,
            n,
            r1: m.ncols(),
            data: m.as_slice().to_vec(),
        }
    }

    pub fn from_right(n: usize, r1: usize, m: &Matrix) -> Core {
        debug_assert_eq!(m.ncols(), n * r1);
        Core {
            r0: m.nrows(),
            n,
            r1,
            data: m.as_slice().to_vec(),
        }
    }

    /// Slice `(:, i, :)` as an `r0 × r1` matrix.
    pub fn slice(&self, i: usize) -> Matrix {
        Matrix::from_fn(self.r0, self.r1, |a, b| self.get(a, i, b))
    }

    /// The same core seen from the other end of the train: shape `(r1, n, r0)`.
    pub fn transposed(&self) -> Core {
        let mut out = Core::zeros(self.r1, self.n, self.r0);
        for b in 0..self.r1 {
            for i in 0..self.n {
                for a in 0..self.r0 {
                    out.set(b, i, a, self.get(a, i, b));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Tensor train over modes `n_1..n_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TtVector {
    cores: Vec<Core>,
}

impl TtVector {
    pub fn new(cores: Vec<Core>) -> Result<Self> {
        if cores.is_empty() {
            return Err(invalid("a train needs at least one core"));
        }
        if cores[0].r0 != 1 || cores[cores.len() - 1].r1 != 1 {
            return Err(invalid("boundary ranks must be 1"));
        }
        for w in cores.windows(2) {
            if w[0].r1 != w[1].r0 {
                return Err(mismatch(format!(
                    "rank chain broken: {} vs {}",
                    w[0].r1, w[1].r0
                )));
            }
        }
        Ok(TtVector { cores })
    }

    pub(crate) fn from_cores_unchecked(cores: Vec<Core>) -> Self {
        debug_assert!(TtVector::new(cores.clone()).is_ok());
        TtVector { cores }
    }

    /// Rank-1 train from one vector per mode.
    pub fn rank_one(factors: &[Vec<f64>]) -> Result<Self> {
        let cores = factors
            .iter()
            .map(|f| Core::new(1, f.len(), 1, f.clone()))
            .collect::<Result<Vec<_>>>()?;
        TtVector::new(cores)
    }

    pub fn ones(shape: &[usize]) -> Self {
        TtVector::from_cores_unchecked(
            shape
                .iter()
                .map(|&n| Core {
                    r0: 1,
                    n,
                    r1: 1,
                    data: vec![1.0; n],
                })
                .collect(),
        )
    }

    pub fn zeros(shape: &[usize]) -> Self {
        TtVector::from_cores_unchecked(shape.iter().map(|&n| Core::zeros(1, n, 1)).collect())
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &Core {
        &self.cores[k]
    }

    pub fn into_cores(self) -> Vec<Core> {
        self.cores
    }

    pub fn d(&self) -> usize {
        self.cores.len()
    }

    pub fn mode_sizes(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.n).collect()
    }

    /// Interior ranks `r_1..r_{d-1}`.
    pub fn ranks(&self) -> Vec<usize> {
        self.cores[..self.d() - 1].iter().map(|c| c.r1).collect()
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Number of stored core entries.
    pub fn storage(&self) -> usize {
        self.cores.iter().map(|c| c.len()).sum()
    }

    /// Number of entries of the represented tensor.
    pub fn full_size(&self) -> f64 {
        self.cores.iter().map(|c| c.n as f64).product()
    }

    /// Entry at a multi-index.
    pub fn value_at(&self, index: &[usize]) -> f64 {
        debug_assert_eq!(index.len(), self.d());
        let mut v = vec![1.0];
        for (core, &i) in self.cores.iter().zip(index) {
            let mut next = vec![0.0; core.r1];
            for (b, nb) in next.iter_mut().enumerate() {
                let mut s = 0.0;
                for (a, va) in v.iter().enumerate() {
                    s += va * core.get(a, i, b);
                }
                *nb = s;
            }
            v = next;
        }
        v[0]
    }

    /// Train of the same tensor with the mode order reversed.
    pub fn reversed(&self) -> TtVector {
        TtVector::from_cores_unchecked(self.cores.iter().rev().map(|c| c.transposed()).collect())
    }

    /// Slices each mode to the given index range.
    pub fn restrict_modes(&self, ranges: &[std::ops::Range<usize>]) -> Result<TtVector> {
        if ranges.len() != self.d() {
            return Err(mismatch("one range per mode is required"));
        }
        let mut cores = Vec::with_capacity(self.d());
        for (core, range) in self.cores.iter().zip(ranges) {
            if range.is_empty() || range.end > core.n {
                return Err(invalid(format!(
                    "range {range:?} is empty or exceeds mode size {}",
                    core.n
                )));
            }
            let n = range.len();
            let mut out = Core::zeros(core.r0, n, core.r1);
            for b in 0..core.r1 {
                for (ii, i) in range.clone().enumerate() {
                    for a in 0..core.r0 {
                        out.set(a, ii, b, core.get(a, i, b));
                    }
                }
            }
            cores.push(out);
        }
        Ok(TtVector::from_cores_unchecked(cores))
    }

    pub(crate) fn cores_mut(&mut self) -> &mut Vec<Core> {
        &mut self.cores
    }
}

/// Tensor-train matrix; each core carries a merged row/column index.
#[derive(Debug, Clone, PartialEq)]
pub struct TtMatrix {
    rows: Vec<usize>,
    cols: Vec<usize>,
    train: TtVector,
}

impl TtMatrix {
    /// Builds from 4-way cores given as `(r0, m, n, r1, data)` with index
    /// `a + r0*(i + m*(j + n*b))`.
    pub fn from_parts(rows: Vec<usize>, cols: Vec<usize>, train: TtVector) -> Result<Self> {
        if rows.len() != train.d() || cols.len() != train.d() {
            return Err(mismatch(
                "row/column size lists must have one entry per core",
            ));
        }
        for (k, core) in train.cores().iter().enumerate() {
            if core.n != rows[k] * cols[k] {
                return Err(mismatch(format!(
                    "core {k} has merged size {} but {}x{} was declared",
                    core.n, rows[k], cols[k]
                )));
            }
        }
        Ok(TtMatrix { rows, cols, train })
    }

    pub fn identity(sizes: &[usize]) -> Self {
        let factors: Vec<Matrix> = sizes.iter().map(|&n| Matrix::identity(n, n)).collect();
        ttmat_from_factors(&factors).expect("identity factors are valid")
    }

    pub fn row_sizes(&self) -> &[usize] {
        &self.rows
    }

    pub fn col_sizes(&self) -> &[usize] {
        &self.cols
    }

    pub fn train(&self) -> &TtVector {
        &self.train
    }

    pub fn into_train(self) -> TtVector {
        self.train
    }

    pub fn d(&self) -> usize {
        self.train.d()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.train.ranks()
    }

    pub fn max_rank(&self) -> usize {
        self.train.max_rank()
    }

    pub fn storage(&self) -> usize {
        self.train.storage()
    }

    #[inline]
    pub fn entry(&self, k: usize, a: usize, i: usize, j: usize, b: usize) -> f64 {
        let m = self.rows[k];
        self.train.core(k).get(a, i + m * j, b)
    }

    /// Slices rows and columns of each mode.
    pub fn restrict_modes(
        &self,
        row_ranges: &[std::ops::Range<usize>],
        col_ranges: &[std::ops::Range<usize>],
    ) -> Result<TtMatrix> {
        let d = self.d();
        if row_ranges.len() != d || col_ranges.len() != d {
            return Err(mismatch(
                "one row and one column range per mode is required",
            ));
        }
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let (rr, cr) = (&row_ranges[k], &col_ranges[k]);
            if rr.is_empty() || cr.is_empty() || rr.end > self.rows[k] || cr.end > self.cols[k] {
                return Err(invalid(format!(
                    "ranges {rr:?} x {cr:?} invalid for mode {k} of size {}x{}",
                    self.rows[k], self.cols[k]
                )));
            }
            let core = self.train.core(k);
            let (m, n) = (rr.len(), cr.len());
            let mut out = Core::zeros(core.r0, m * n, core.r1);
            for b in 0..core.r1 {
                for (jj, j) in cr.clone().enumerate() {
                    for (ii, i) in rr.clone().enumerate() {
                        for a in 0..core.r0 {
                            out.set(a, ii + m * jj, b, self.entry(k, a, i, j, b));
                        }
                    }
                }
            }
            cores.push(out);
        }
        Ok(TtMatrix {
            rows: row_ranges.iter().map(|r| r.len()).collect(),
            cols: col_ranges.iter().map(|r| r.len()).collect(),
            train: TtVector::from_cores_unchecked(cores),
        })
    }

    /// Dense matrix with row and column multi-indices flattened last-index-fastest.
    pub fn to_dense_matrix(&self) -> Result<Matrix> {
        let total_rows: usize = self.rows.iter().product();
        let total_cols: usize = self.cols.iter().product();
        let dense = tt_to_dense_capped(&self.train, DEFAULT_DENSE_CAP)?;
        let d = self.d();
        let mut out = Matrix::zeros(total_rows, total_cols);
        let mut idx = vec![0usize; d];
        for (lin, &v) in dense.data().iter().enumerate() {
            // Decode the merged multi-index, last mode fastest.
            let mut rem = lin;
            for k in (0..d).rev() {
                let nk = self.rows[k] * self.cols[k];
                idx[k] = rem % nk;
                rem /= nk;
            }
            let mut r = 0;
            let mut c = 0;
            for k in 0..d {
                let i = idx[k] % self.rows[k];
                let j = idx[k] / self.rows[k];
                r = r * self.rows[k] + i;
                c = c * self.cols[k] + j;
            }
            out[(r, c)] = v;
        }
        Ok(out)
    }

    /// The same operator with the mode order reversed.
    pub fn reversed(&self) -> TtMatrix {
        TtMatrix {
            rows: self.rows.iter().rev().copied().collect(),
            cols: self.cols.iter().rev().copied().collect(),
            train: self.train.reversed(),
        }
    }
}

/// Shared structure of vector and matrix trains so rounding and addition are written once.
pub trait Train: Clone {
    fn as_train(&self) -> &TtVector;
    /// A train of the same kind and layout as `self` wrapping new cores.
    fn rewrap(&self, t: TtVector) -> Self;
    fn same_layout(&self, other: &Self) -> bool;
}

impl Train for TtVector {
    fn as_train(&self) -> &TtVector {
        self
    }
    fn rewrap(&self, t: TtVector) -> Self {
        t
    }
    fn same_layout(&self, other: &Self) -> bool {
        self.mode_sizes() == other.mode_sizes()
    }
}

impl Train for TtMatrix {
    fn as_train(&self) -> &TtVector {
        &self.train
    }
    fn rewrap(&self, t: TtVector) -> Self {
        TtMatrix {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            train: t,
        }
    }
    fn same_layout(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}
