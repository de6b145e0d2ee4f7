use super::{Core, TtVector};
use crate::error::{invalid, mismatch, Error, Result};
use crate::la::{self, Matrix};

/// Default cap on materialized entries.
pub const DEFAULT_DENSE_CAP: usize = 50_000_000;

/// Full tensor stored last-index-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) {
            return Err(invalid("dense tensor needs at least one nonempty mode"));
        }
        if count != data.len() {
            return Err(mismatch(format!(
                "shape {shape:?} needs {count} entries, got {}",
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..count {
            data.push(f(&idx));
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        DenseTensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.linear_index(index)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn tt_to_dense(x: &TtVector) -> Result<DenseTensor> {
    tt_to_dense_capped(x, DEFAULT_DENSE_CAP)
}

/// Contracts the train into a full tensor, refusing to allocate more than `cap` entries.
pub fn tt_to_dense_capped(x: &TtVector, cap: usize) -> Result<DenseTensor> {
    let shape = x.mode_sizes();
    let requested: u128 = shape.iter().map(|&n| n as u128).product();
    if requested > cap as u128 {
        return Err(Error::TooLarge {
            what: "tt_to_dense",
            requested,
            cap: cap as u128,
        });
    }
    // partial[row * r + a] with row running over the leading modes, last fastest.
    let mut partial = vec![1.0];
    let mut rows = 1usize;
    for core in x.cores() {
        let (r0, n, r1) = (core.r0, core.n, core.r1);
        let mut next = vec![0.0; rows * n * r1];
        for row in 0..rows {
            let p = &partial[row * r0..(row + 1) * r0];
            for i in 0..n {
                let out = &mut next[(row * n + i) * r1..(row * n + i + 1) * r1];
                for (b, o) in out.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (a, pa) in p.iter().enumerate() {
                        s += pa * core.get(a, i, b);
                    }
                    *o = s;
                }
            }
        }
        partial = next;
        rows *= n;
    }
    DenseTensor::new(shape, partial)
}

/// TT-SVD: sequential truncated SVDs of the unfoldings with per-step threshold
/// `tol/√(d−1)·‖x‖_F`, giving overall error at most `tol·‖x‖_F` unless `rmax` binds.
pub fn tt_from_dense(x: &DenseTensor, tol: f64, rmax: usize) -> Result<TtVector> {
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(invalid("tt_from_dense: tensor has non-finite entries"));
    }
    let shape = x.shape().to_vec();
    let d = shape.len();
    let norm = x.norm();
    if norm == 0.0 {
        return Ok(TtVector::zeros(&shape));
    }
    if d == 1 {
        return TtVector::new(vec![Core::new(1, shape[0], 1, x.data().to_vec())?]);
    }
    let delta = tol / ((d - 1) as f64).sqrt() * norm;
    let rmax = rmax.max(1);
    let mut cores = Vec::with_capacity(d);
    // Remainder stored row-major as (r·n_k) × rest, row index = a·n_k + i.
    let mut rem = x.data().to_vec();
    let mut r = 1usize;
    for k in 0..d - 1 {
        let n = shape[k];
        let rest: usize = shape[k + 1..].iter().product();
        let mat = Matrix::from_row_slice(r * n, rest, &rem);
        let full = la::svd(&mat)?;
        let rank = la::rank_for_tail(&full.s, delta)
            .clamp(1, rmax)
            .min(full.s.len());
        let svd = la::truncate_to(full, rank);
        let mut core = Core::zeros(r, n, rank);
        for a in 0..r {
            for i in 0..n {
                for b in 0..rank {
                    core.set(a, i, b, svd.u[(a * n + i, b)]);
                }
            }
        }
        cores.push(core);
        let mut sv = svd.vt;
        for (b, s) in svd.s.iter().enumerate() {
            sv.row_mut(b).scale_mut(*s);
        }
        // Row-major flattening of (rank × rest) is the next remainder.
        let mut next = Vec::with_capacity(rank * rest);
        for b in 0..rank {
            for c in 0..rest {
                next.push(sv[(b, c)]);
            }
        }
        rem = next;
        r = rank;
    }
    cores.push(Core::new(r, shape[d - 1], 1, {
        // rem is (r × n_d) row-major: entry (a, i) at a·n + i.
        let n = shape[d - 1];
        let mut data = vec![0.0; r * n];
        for a in 0..r {
            for i in 0..n {
                data[a + r * i] = rem[a * n + i];
            }
        }
        data
    })?);
    TtVector::new(cores)
}
