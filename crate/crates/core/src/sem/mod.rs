//! Q1 spectral-element machinery on uniform tensor-product grids.
//!
//! Modes are ordered `[x, y, z, t]` (time last, optional). Local 1D matrices use the
//! convention that basis function 0 equals 1 at the left node of the element; rows
//! are test indices and columns trial indices.

mod operators;

pub use operators::{
    assemble_operator_all, boundary_data_train, boundary_term, build_boundary_term_tt,
    build_load_tt, build_operator_tt, build_system_operators, coefficient_train,
    coefficient_trains, convection_term, diffusion_term, interior_mass_tt, load_from_forcing,
    mass_all, reaction_term, time_term, CoefficientTrains, OperatorOptions, RoundingOrder,
    SystemOperators,
};

use std::ops::Range;

use crate::error::{invalid, mismatch, Result};
use crate::la::Matrix;

/// One coordinate axis split into `n` equal elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Axis {
    pub fn new(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("an axis needs at least one element"));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid(format!("invalid axis bounds [{lo}, {hi}]")));
        }
        Ok(Axis { n, lo, hi })
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }
}

/// Space or space-time grid; the time axis, when present, is the last mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub space: Vec<Axis>,
    pub time: Option<Axis>,
}

impl Grid {
    /// Unit cube in `dims` space dimensions with `n` elements per axis, optionally times `[0, 1]`.
    pub fn unit(n: usize, dims: usize, with_time: bool) -> Result<Self> {
        let axis = Axis::new(n, 0.0, 1.0)?;
        Ok(Grid {
            space: vec![axis; dims],
            time: if with_time { Some(axis) } else { None },
        })
    }

    pub fn has_time(&self) -> bool {
        self.time.is_some()
    }

    pub fn axes(&self) -> Vec<Axis> {
        let mut a = self.space.clone();
        a.extend(self.time);
        a
    }

    pub fn d(&self) -> usize {
        self.space.len() + self.time.is_some() as usize
    }

    /// Nodes per mode (all nodes).
    pub fn node_counts(&self) -> Vec<usize> {
        self.axes().iter().map(|a| a.n + 1).collect()
    }

    /// Interior index range of every mode: both ends dropped in space, only the
    /// initial node dropped in time.
    pub fn interior_ranges(&self) -> Vec<Range<usize>> {
        let mut r: Vec<Range<usize>> = self.space.iter().map(|a| 1..a.n).collect();
        if let Some(t) = self.time {
            r.push(1..t.n + 1);
        }
        r
    }

    pub fn all_ranges(&self) -> Vec<Range<usize>> {
        self.node_counts().into_iter().map(|n| 0..n).collect()
    }

    pub fn interior_counts(&self) -> Vec<usize> {
        self.interior_ranges().iter().map(|r| r.len()).collect()
    }

    pub fn interior_unknowns(&self) -> usize {
        self.interior_counts().iter().product()
    }

    /// Physical coordinates `[x, y, z, t]` of a node multi-index.
    pub fn coords(&self, index: &[usize], out: &mut Vec<f64>) {
        out.clear();
        for (a, &i) in self.axes().iter().zip(index) {
            out.push(a.node(i));
        }
    }

    /// Validates that all axes have nonempty interiors.
    pub fn check(&self) -> Result<()> {
        if self.space.is_empty() {
            return Err(invalid("grid needs at least one space dimension"));
        }
        if self.space.iter().any(|a| a.n < 2) {
            return Err(invalid("space axes need at least two elements"));
        }
        Ok(())
    }
}

/// Local 1D element matrices for one element of width `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Local1D {
    pub mass: Matrix,
    pub stiffness: Matrix,
    pub time_derivative: Matrix,
    pub weighted_mass: [Matrix; 2],
    pub weighted_stiffness: [Matrix; 2],
    pub weighted_derivative: [Matrix; 2],
}

/// Kind of a 1D bilinear form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// ∫ φ_i φ_j
    Mass,
    /// ∫ φ_i' φ_j'
    Stiffness,
    /// ∫ φ_i φ_j' (test i, trial j)
    Derivative,
}

impl Local1D {
    pub fn plain(&self, kind: Kind) -> &Matrix {
        match kind {
            Kind::Mass => &self.mass,
            Kind::Stiffness => &self.stiffness,
            Kind::Derivative => &self.time_derivative,
        }
    }

    pub fn weighted(&self, kind: Kind) -> &[Matrix; 2] {
        match kind {
            Kind::Mass => &self.weighted_mass,
            Kind::Stiffness => &self.weighted_stiffness,
            Kind::Derivative => &self.weighted_derivative,
        }
    }
}

fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix {
    Matrix::from_row_slice(2, 2, &[a, b, c, d])
}

/// Exact integrals of products of linear hat functions on an element of width `h`.
pub fn local_matrices(h: f64) -> Result<Local1D> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("element width must be positive, got {h}")));
    }
    let s = 1.0 / h;
    Ok(Local1D {
        mass: m2(h / 3.0, h / 6.0, h / 6.0, h / 3.0),
        stiffness: m2(s, -s, -s, s),
        time_derivative: m2(-0.5, 0.5, -0.5, 0.5),
        weighted_mass: [
            m2(h / 4.0, h / 12.0, h / 12.0, h / 12.0),
            m2(h / 12.0, h / 12.0, h / 12.0, h / 4.0),
        ],
        weighted_stiffness: [
            m2(s / 2.0, -s / 2.0, -s / 2.0, s / 2.0),
            m2(s / 2.0, -s / 2.0, -s / 2.0, s / 2.0),
        ],
        weighted_derivative: [
            m2(-1.0 / 3.0, 1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0),
            m2(-1.0 / 6.0, 1.0 / 6.0, -1.0 / 3.0, 1.0 / 3.0),
        ],
    })
}

/// 0/1 matrix gathering element-local degrees of freedom into global nodes.
pub fn assembly_binary(n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(invalid("assembly_binary: need at least one element"));
    }
    let mut b = Matrix::zeros(n + 1, 2 * n);
    for e in 0..n {
        b[(e, 2 * e)] = 1.0;
        b[(e + 1, 2 * e + 1)] = 1.0;
    }
    Ok(b)
}

fn block_diag(local: &Matrix, n: usize) -> Matrix {
    let mut out = Matrix::zeros(2 * n, 2 * n);
    for e in 0..n {
        out.view_mut((2 * e, 2 * e), (2, 2)).copy_from(local);
    }
    out
}

/// `B · blockdiag(local, …, local) · Bᵀ`.
pub fn assemble_global_1d(local: &Matrix, n: usize) -> Result<Matrix> {
    if local.shape() != (2, 2) {
        return Err(mismatch("local matrix must be 2x2"));
    }
    let b = assembly_binary(n)?;
    Ok(&b * block_diag(local, n) * b.transpose())
}

/// Diagonal `2N × 2N` coefficient matrix whose element-`e` block is
/// `κ(x_{e+p})·I₂`, matching the weight carried by local matrix `p`.
pub fn coefficient_staggered_diagonals(values: &[f64], p: usize) -> Result<Matrix> {
    if values.len() < 2 {
        return Err(mismatch("need at least two nodal values"));
    }
    if p > 1 {
        return Err(invalid("weight index must be 0 or 1"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("nodal values must be finite"));
    }
    let n = values.len() - 1;
    let mut c = Matrix::zeros(2 * n, 2 * n);
    for e in 0..n {
        c[(2 * e, 2 * e)] = values[e + p];
        c[(2 * e + 1, 2 * e + 1)] = values[e + p];
    }
    Ok(c)
}

/// `B · blockdiag(localp) · C_p · Bᵀ`.
pub fn assemble_weighted_global_1d(localp: &Matrix, c_p: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = b.ncols() / 2;
    if localp.shape() != (2, 2) || c_p.shape() != (2 * n, 2 * n) || b.nrows() != n + 1 {
        return Err(mismatch("inconsistent sizes for weighted assembly"));
    }
    Ok(b * block_diag(localp, n) * c_p * b.transpose())
}

/// Fast element-loop equivalent of `Σ_p B·blockdiag(local_p)·C_p·Bᵀ` for nodal `values`.
pub fn weighted_global(local: &Local1D, kind: Kind, values: &[f64]) -> Matrix {
    let n = values.len() - 1;
    let w = local.weighted(kind);
    let mut g = Matrix::zeros(n + 1, n + 1);
    for e in 0..n {
        for (p, wp) in w.iter().enumerate() {
            let v = values[e + p];
            if v == 0.0 {
                continue;
            }
            for i in 0..2 {
                for j in 0..2 {
                    g[(e + i, e + j)] += v * wp[(i, j)];
                }
            }
        }
    }
    g
}

/// Unweighted global matrix by the same element loop.
pub fn plain_global(local: &Local1D, kind: Kind, n: usize) -> Matrix {
    let l = local.plain(kind);
    let mut g = Matrix::zeros(n + 1, n + 1);
    for e in 0..n {
        for i in 0..2 {
            for j in 0..2 {
                g[(e + i, e + j)] += l[(i, j)];
            }
        }
    }
    g
}

#[cfg(test)]
mod tests;
