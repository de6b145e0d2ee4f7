//! Full-grid oracle: classical element-loop assembly into compressed sparse rows and
//! sparse solvers for the resulting interior system.
//!
//! Nodes are numbered like the dense tensors of the TT code: first mode slowest,
//! modes ordered `[x, y, z, t]`.

use crate::error::{invalid, mismatch, Error, Result};
use crate::krylov::{self, dot, norm};
use crate::la::{solve_dense, Matrix};
use crate::problem::{Coefficient, ProblemSpec};
use crate::sem::Grid;

/// Default cap on interior unknowns for the full-grid path.
pub const DEFAULT_UNKNOWN_CAP: usize = 200_000;

/// Systems up to this size are solved by dense LU.
pub const DENSE_SOLVE_LIMIT: usize = 3000;

/// Compressed sparse row matrix; column indices are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// True when `|a_ij − a_ji| ≤ tol·max|a|` for every stored entry.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0..self.nrows).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .all(|(&j, &v)| (v - self.get(j, i)).abs() <= tol * scale)
        })
    }

    /// Keeps the columns listed in `keep` (ascending), renumbered to their position.
    pub fn select_columns(&self, keep: &[usize]) -> CsrMatrix {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: keep.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// `self + alpha·other` for matrices sharing one sparsity pattern.
    pub fn add_same_pattern(&self, alpha: f64, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.row_ptr != other.row_ptr || self.col_idx != other.col_idx {
            return Err(mismatch("sparsity patterns differ"));
        }
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(out)
    }

    /// `self · diag(d)`.
    pub fn scale_columns(&self, d: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for (v, &j) in out.values.iter_mut().zip(&self.col_idx) {
            *v *= d[j];
        }
        out
    }
}

/// Coordinate-format accumulator; duplicates are summed by [`TripletMatrix::finalize`].
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletMatrix {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if i >= self.nrows || j >= self.ncols {
            return Err(invalid(format!(
                "triplet ({i}, {j}) outside a {}x{} matrix",
                self.nrows, self.ncols
            )));
        }
        self.entries.push((i, j, v));
        Ok(())
    }

    pub fn finalize(mut self) -> CsrMatrix {
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Interior linear system `A u = rhs`.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub dimension: usize,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// Everything the element loop produces for one problem on one grid.
#[derive(Debug, Clone)]
pub struct FullSystem {
    pub system: SparseSystem,
    /// Interior rows, all-node columns.
    pub operator_map: CsrMatrix,
    /// `M(I, :)·F` with `F` the nodal forcing values.
    pub load: Vec<f64>,
    /// Known nodal values: `g` on the spatial boundary, `u₀` on the initial slice.
    pub boundary_values: Vec<f64>,
    /// Interior mass matrix (same sparsity pattern as the system matrix).
    pub mass: CsrMatrix,
}

/// Node numbering helpers for a grid.
#[derive(Debug, Clone)]
pub struct NodeIndex {
    counts: Vec<usize>,
    interior: Vec<std::ops::Range<usize>>,
    interior_counts: Vec<usize>,
}

impl NodeIndex {
    pub fn new(grid: &Grid) -> Self {
        NodeIndex {
            counts: grid.node_counts(),
            interior: grid.interior_ranges(),
            interior_counts: grid.interior_counts(),
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn interior_total(&self) -> usize {
        self.interior_counts.iter().product()
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn decode(&self, mut lin: usize, idx: &mut [usize]) {
        for k in (0..self.counts.len()).rev() {
            idx[k] = lin % self.counts[k];
            lin /= self.counts[k];
        }
    }

    /// Interior position of a node, or `None` for known nodes.
    pub fn interior(&self, idx: &[usize]) -> Option<usize> {
        let mut acc = 0;
        for (k, &i) in idx.iter().enumerate() {
            if !self.interior[k].contains(&i) {
                return None;
            }
            acc = acc * self.interior_counts[k] + (i - self.interior[k].start);
        }
        Some(acc)
    }

    /// All-node linear indices of the interior nodes, in interior order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        let d = self.counts.len();
        let mut out = Vec::with_capacity(self.interior_total());
        let mut idx = vec![0usize; d];
        for lin in 0..self.total() {
            self.decode(lin, &mut idx);
            if self.interior(&idx).is_some() {
                out.push(lin);
            }
        }
        out
    }
}

/// Integrand selection for the element loop.
#[derive(Debug, Clone, Default)]
struct Integrand {
    time: bool,
    kappa: Option<Vec<f64>>,
    convection: Vec<Option<Vec<f64>>>,
    reaction: Option<Vec<f64>>,
    mass: bool,
}

/// Basis values and gradients of the `2^d` element hats at the `2^d` Gauss points.
struct ElementTables {
    vals: Vec<Vec<f64>>,
    grads: Vec<Vec<Vec<f64>>>,
    weight: f64,
}

fn element_tables(grid: &Grid) -> ElementTables {
    let axes = grid.axes();
    let d = axes.len();
    let nloc = 1usize << d;
    // Two-point Gauss rule on [0, 1]: exact for the cubic-per-axis integrands used here.
    let g = 0.5 / 3f64.sqrt();
    let pts = [0.5 - g, 0.5 + g];
    let hat = |b: usize, xi: f64| if b == 0 { 1.0 - xi } else { xi };
    let dhat = |b: usize| if b == 0 { -1.0 } else { 1.0 };
    let mut vals = vec![vec![0.0; nloc]; nloc];
    let mut grads = vec![vec![vec![0.0; d]; nloc]; nloc];
    for q in 0..nloc {
        for i in 0..nloc {
            let bits: Vec<usize> = (0..d).map(|k| (i >> k) & 1).collect();
            let xi: Vec<f64> = (0..d).map(|k| pts[(q >> k) & 1]).collect();
            vals[q][i] = (0..d).map(|k| hat(bits[k], xi[k])).product();
            for k in 0..d {
                let mut v = dhat(bits[k]) / axes[k].h();
                for l in 0..d {
                    if l != k {
                        v *= hat(bits[l], xi[l]);
                    }
                }
                grads[q][i][k] = v;
            }
        }
    }
    let weight = axes.iter().map(|a| a.h()).product::<f64>() / nloc as f64;
    ElementTables {
        vals,
        grads,
        weight,
    }
}

/// Stencil accumulator: each interior row owns `3^d` slots, one per neighbor offset.
struct StencilRows {
    d: usize,
    slots: usize,
    values: Vec<f64>,
}

impl StencilRows {
    fn slot(d: usize, from: usize, to: usize) -> usize {
        // Offsets per axis are to_k − from_k ∈ {−1, 0, 1}; encode first axis slowest.
        let mut s = 0;
        for k in 0..d {
            let delta = ((to >> k) & 1) as isize - ((from >> k) & 1) as isize;
            s = s * 3 + (delta + 1) as usize;
        }
        s
    }

    /// Compress to CSR with all-node columns, keeping every in-range slot.
    fn into_csr(self, nodes: &NodeIndex, interior_nodes: &[usize]) -> CsrMatrix {
        let d = self.d;
        let nrows = interior_nodes.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(nrows * self.slots);
        let mut values = Vec::with_capacity(nrows * self.slots);
        row_ptr.push(0);
        let mut idx = vec![0usize; d];
        let mut nb = vec![0usize; d];
        for (row, &lin) in interior_nodes.iter().enumerate() {
            nodes.decode(lin, &mut idx);
            'slot: for s in 0..self.slots {
                let mut rem = s;
                for k in (0..d).rev() {
                    let off = (rem % 3) as isize - 1;
                    rem /= 3;
                    let j = idx[k] as isize + off;
                    if j < 0 || j as usize >= nodes.counts[k] {
                        continue 'slot;
                    }
                    nb[k] = j as usize;
                }
                col_idx.push(nodes.linear(&nb));
                values.push(self.values[row * self.slots + s]);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols: nodes.total(),
            row_ptr,
            col_idx,
            values,
        }
    }
}

fn nodal_values(grid: &Grid, nodes: &NodeIndex, c: &Coefficient) -> Option<Vec<f64>> {
    match c {
        Coefficient::Zero => None,
        Coefficient::Constant(v) if *v == 0.0 => None,
        Coefficient::Constant(v) => Some(vec![*v; nodes.total()]),
        Coefficient::Function(f) => Some(sample_nodes(grid, nodes, |x| f(x))),
    }
}

fn sample_nodes(grid: &Grid, nodes: &NodeIndex, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let d = grid.d();
    let mut idx = vec![0usize; d];
    let mut x = Vec::with_capacity(d);
    (0..nodes.total())
        .map(|lin| {
            nodes.decode(lin, &mut idx);
            grid.coords(&idx, &mut x);
            f(&x)
        })
        .collect()
}

/// Element loop for one integrand. Returns the interior-row stencil and, when `load`
/// is given, accumulates `∫ f_h φ_i` for interior rows into it.
fn element_loop(
    grid: &Grid,
    nodes: &NodeIndex,
    integrand: &Integrand,
    forcing: Option<(&[f64], &mut [f64])>,
) -> StencilRows {
    let d = grid.d();
    let nloc = 1usize << d;
    let n_space = grid.space.len();
    let tab = element_tables(grid);
    let slots = 3usize.pow(d as u32);
    let mut rows = StencilRows {
        d,
        slots,
        values: vec![0.0; nodes.interior_total() * slots],
    };
    let elems: Vec<usize> = grid.axes().iter().map(|a| a.n).collect();
    let n_elem: usize = elems.iter().product();
    let mut forcing = forcing;

    // Reference mass matrix on one element, used for the load.
    let mut mloc = vec![0.0; nloc * nloc];
    for q in 0..nloc {
        for i in 0..nloc {
            for j in 0..nloc {
                mloc[i * nloc + j] += tab.weight * tab.vals[q][i] * tab.vals[q][j];
            }
        }
    }

    let mut e_idx = vec![0usize; d];
    let mut node_idx = vec![0usize; d];
    let mut lin = vec![0usize; nloc];
    let mut row = vec![None; nloc];
    let mut local = vec![0.0; nloc * nloc];
    let mut kq = vec![0.0; nloc];
    let mut bq = vec![vec![0.0; nloc]; n_space];
    let mut cq = vec![0.0; nloc];
    let interp = |vals: &[f64], lin: &[usize], out: &mut [f64]| {
        for q in 0..nloc {
            out[q] = (0..nloc).map(|p| vals[lin[p]] * tab.vals[q][p]).sum();
        }
    };

    for e in 0..n_elem {
        let mut rem = e;
        for k in (0..d).rev() {
            e_idx[k] = rem % elems[k];
            rem /= elems[k];
        }
        let mut any_row = false;
        for i in 0..nloc {
            for k in 0..d {
                node_idx[k] = e_idx[k] + ((i >> k) & 1);
            }
            lin[i] = nodes.linear(&node_idx);
            row[i] = nodes.interior(&node_idx);
            any_row |= row[i].is_some();
        }
        if !any_row {
            continue;
        }
        if let Some(k) = &integrand.kappa {
            interp(k, &lin, &mut kq);
        }
        for (dim, b) in integrand.convection.iter().enumerate() {
            if let Some(b) = b {
                interp(b, &lin, &mut bq[dim]);
            }
        }
        if let Some(c) = &integrand.reaction {
            interp(c, &lin, &mut cq);
        }
        local.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..nloc {
            let vq = &tab.vals[q];
            let gq = &tab.grads[q];
            for i in 0..nloc {
                if row[i].is_none() {
                    continue;
                }
                for j in 0..nloc {
                    let mut v = 0.0;
                    if integrand.time {
                        v += vq[i] * gq[j][d - 1];
                    }
                    if integrand.kappa.is_some() {
                        let dot: f64 = (0..n_space).map(|k| gq[i][k] * gq[j][k]).sum();
                        v += kq[q] * dot;
                    }
                    for (dim, b) in integrand.convection.iter().enumerate() {
                        if b.is_some() {
                            v += bq[dim][q] * vq[i] * gq[j][dim];
                        }
                    }
                    if integrand.reaction.is_some() {
                        v += cq[q] * vq[i] * vq[j];
                    }
                    if integrand.mass {
                        v += vq[i] * vq[j];
                    }
                    local[i * nloc + j] += tab.weight * v;
                }
            }
        }
        for i in 0..nloc {
            let Some(r) = row[i] else { continue };
            for j in 0..nloc {
                rows.values[r * slots + StencilRows::slot(d, i, j)] += local[i * nloc + j];
            }
            if let Some((f, load)) = forcing.as_mut() {
                load[r] += (0..nloc)
                    .map(|j| mloc[i * nloc + j] * f[lin[j]])
                    .sum::<f64>();
            }
        }
    }
    rows
}

/// Nodal values of the known data: `g` where any space index is on the boundary,
/// `u₀` on the remaining nodes of the initial time slice, zero elsewhere.
pub fn boundary_values(problem: &ProblemSpec, grid: &Grid) -> Vec<f64> {
    let nodes = NodeIndex::new(grid);
    let d = grid.d();
    let n_space = grid.space.len();
    let mut idx = vec![0usize; d];
    let mut x = Vec::with_capacity(d);
    (0..nodes.total())
        .map(|lin| {
            nodes.decode(lin, &mut idx);
            let on_boundary = (0..n_space).any(|k| idx[k] == 0 || idx[k] == grid.space[k].n);
            grid.coords(&idx, &mut x);
            if on_boundary {
                (problem.boundary)(&x)
            } else if grid.has_time() && idx[d - 1] == 0 {
                problem.initial.as_ref().map_or(0.0, |u0| u0(&x))
            } else {
                0.0
            }
        })
        .collect()
}

fn check_cap(grid: &Grid, cap: usize) -> Result<()> {
    let n = grid.interior_unknowns();
    if n > cap {
        return Err(Error::TooLarge {
            what: "full-grid assembly (use the tt or qtt format instead)",
            requested: n as u128,
            cap: cap as u128,
        });
    }
    Ok(())
}

/// [`assemble_full_system_capped`] with the default unknown cap.
pub fn assemble_full_system(problem: &ProblemSpec, grid: &Grid) -> Result<FullSystem> {
    assemble_full_system_capped(problem, grid, DEFAULT_UNKNOWN_CAP)
}

/// Element-loop assembly of the interior system, with known values moved to the
/// right-hand side. The semilinear kind contributes only its linear part.
pub fn assemble_full_system_capped(
    problem: &ProblemSpec,
    grid: &Grid,
    cap: usize,
) -> Result<FullSystem> {
    problem.validate()?;
    grid.check()?;
    if grid.space.len() != problem.space_dims() || grid.has_time() != problem.has_time() {
        return Err(mismatch("grid does not match the problem dimensions"));
    }
    check_cap(grid, cap)?;
    let nodes = NodeIndex::new(grid);
    let interior_nodes = nodes.interior_nodes();
    let integrand = Integrand {
        time: grid.has_time(),
        kappa: nodal_values(grid, &nodes, &problem.kappa),
        convection: problem
            .convection
            .iter()
            .map(|c| nodal_values(grid, &nodes, c))
            .collect(),
        reaction: nodal_values(grid, &nodes, &problem.reaction),
        mass: false,
    };
    let f = sample_nodes(grid, &nodes, |x| (problem.forcing)(x));
    let mut load = vec![0.0; interior_nodes.len()];
    let rows = element_loop(grid, &nodes, &integrand, Some((&f, &mut load)));
    let operator_map = rows.into_csr(&nodes, &interior_nodes);
    let matrix = operator_map.select_columns(&interior_nodes);
    let g = boundary_values(problem, grid);
    let transfer = operator_map.matvec(&g);
    let rhs: Vec<f64> = load.iter().zip(&transfer).map(|(l, t)| l - t).collect();
    let mass = interior_mass_matrix(grid)?;
    Ok(FullSystem {
        system: SparseSystem {
            dimension: interior_nodes.len(),
            matrix,
            rhs,
        },
        operator_map,
        load,
        boundary_values: g,
        mass,
    })
}

/// Interior-by-interior mass matrix assembled by the element loop.
pub fn interior_mass_matrix(grid: &Grid) -> Result<CsrMatrix> {
    grid.check()?;
    let nodes = NodeIndex::new(grid);
    let interior_nodes = nodes.interior_nodes();
    let integrand = Integrand {
        mass: true,
        ..Default::default()
    };
    let rows = element_loop(grid, &nodes, &integrand, None);
    Ok(rows
        .into_csr(&nodes, &interior_nodes)
        .select_columns(&interior_nodes))
}

/// Exact solution sampled on the interior nodes, in interior order.
pub fn sample_interior(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let nodes = NodeIndex::new(grid);
    let all = sample_nodes(grid, &nodes, f);
    nodes.interior_nodes().into_iter().map(|i| all[i]).collect()
}

/// Iterative solver statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolveStats {
    pub method: &'static str,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    norm(&r) / norm(b).max(f64::MIN_POSITIVE)
}

/// Incomplete LU factorization without fill, stored on the pattern of `a`.
pub struct Ilu0 {
    lu: CsrMatrix,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows;
        let mut lu = a.clone();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            let (cols, _) = lu.row(i);
            if let Ok(p) = cols.binary_search(&i) {
                diag[i] = lu.row_ptr[i] + p;
            } else {
                return Err(Error::Solver(format!(
                    "ILU(0): row {i} has no diagonal entry"
                )));
            }
        }
        for i in 0..n {
            let start = lu.row_ptr[i];
            let end = lu.row_ptr[i + 1];
            for kk in start..diag[i] {
                let k = lu.col_idx[kk];
                let pivot = lu.values[diag[k]];
                if pivot == 0.0 {
                    return Err(Error::Solver(format!("ILU(0): zero pivot in row {k}")));
                }
                let lik = lu.values[kk] / pivot;
                lu.values[kk] = lik;
                // Row i minus lik times the upper part of row k, restricted to row i's pattern.
                let mut p = kk + 1;
                for kj in diag[k] + 1..lu.row_ptr[k + 1] {
                    let j = lu.col_idx[kj];
                    while p < end && lu.col_idx[p] < j {
                        p += 1;
                    }
                    if p < end && lu.col_idx[p] == j {
                        lu.values[p] -= lik * lu.values[kj];
                    }
                }
            }
            if lu.values[diag[i]] == 0.0 {
                return Err(Error::Solver(format!("ILU(0): zero pivot in row {i}")));
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.nrows;
        for i in 0..n {
            let mut s = r[i];
            for p in self.lu.row_ptr[i]..self.diag[i] {
                s -= self.lu.values[p] * z[self.lu.col_idx[p]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for p in self.diag[i] + 1..self.lu.row_ptr[i + 1] {
                s -= self.lu.values[p] * z[self.lu.col_idx[p]];
            }
            z[i] = s / self.lu.values[self.diag[i]];
        }
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, SparseSolveStats) {
    let n = b.len();
    let dinv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut it = 0;
    while it < max_iter && norm(&r) > tol * bnorm {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    let rel = relative_residual(a, &x, b);
    (
        x,
        SparseSolveStats {
            method: "pcg-jacobi",
            iterations: it,
            relative_residual: rel,
        },
    )
}

/// ILU(0)-preconditioned BiCGSTAB (right preconditioning).
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    ilu: &Ilu0,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SparseSolveStats) {
    let n = b.len();
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ph = vec![0.0; n];
    let mut sh = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut it = 0;
    while it < max_iter && norm(&r) > tol * bnorm {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        ilu.apply(&p, &mut ph);
        a.matvec_into(&ph, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            break;
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            r.copy_from_slice(&s);
            it += 1;
            break;
        }
        ilu.apply(&s, &mut sh);
        a.matvec_into(&sh, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            break;
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        it += 1;
    }
    let rel = relative_residual(a, &x, b);
    (
        x,
        SparseSolveStats {
            method: "bicgstab-ilu0",
            iterations: it,
            relative_residual: rel,
        },
    )
}

/// Restarted GMRES with ILU(0) right preconditioning.
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    ilu: &Ilu0,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (Vec<f64>, SparseSolveStats) {
    let bnorm = norm(b).max(f64::MIN_POSITIVE);
    let res = krylov::gmres(
        |v, y| a.matvec_into(v, y),
        |v, z| ilu.apply(v, z),
        b,
        &vec![0.0; b.len()],
        tol * bnorm,
        restart,
        max_iter,
    );
    let rel = relative_residual(a, &res.x, b);
    (
        res.x,
        SparseSolveStats {
            method: "gmres-ilu0",
            iterations: res.iterations,
            relative_residual: rel,
        },
    )
}

/// Required relative residual of [`solve_full`].
pub const FULL_SOLVE_TOL: f64 = 1e-10;

/// Solves the interior system to relative residual at most `1e−10`.
pub fn solve_full(system: &SparseSystem) -> Result<Vec<f64>> {
    solve_sparse(&system.matrix, &system.rhs).map(|(x, _)| x)
}

/// Dense LU for small systems, Jacobi-PCG for symmetric ones, ILU(0) Krylov otherwise.
pub fn solve_sparse(a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, SparseSolveStats)> {
    let n = a.nrows;
    if a.ncols != n || b.len() != n {
        return Err(mismatch(format!(
            "system is {}x{} with a rhs of length {}",
            a.nrows,
            a.ncols,
            b.len()
        )));
    }
    if b.iter().all(|&v| v == 0.0) {
        return Ok((
            vec![0.0; n],
            SparseSolveStats {
                method: "zero-rhs",
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let target = 1e-12;
    let (x, stats) = if n <= DENSE_SOLVE_LIMIT {
        let x = solve_dense(&a.to_dense(), b)?;
        let rel = relative_residual(a, &x, b);
        (
            x,
            SparseSolveStats {
                method: "dense-lu",
                iterations: 1,
                relative_residual: rel,
            },
        )
    } else if a.is_symmetric(1e-13) {
        pcg(a, b, target, 20 * n)
    } else {
        let ilu = Ilu0::new(a)?;
        let (x, s) = bicgstab(a, b, &ilu, target, 5000);
        if s.relative_residual <= FULL_SOLVE_TOL {
            (x, s)
        } else {
            gmres(a, b, &ilu, target, 80, 20_000)
        }
    };
    if !(stats.relative_residual <= FULL_SOLVE_TOL) {
        return Err(Error::Solver(format!(
            "{} stopped at relative residual {:.3e} after {} iterations",
            stats.method, stats.relative_residual, stats.iterations
        )));
    }
    Ok((x, stats))
}

#[cfg(test)]
mod tests;
