//! Global space-time operators, load and boundary terms in TT-matrix form.

use super::{local_matrices, plain_global, weighted_global, Grid, Kind, Local1D};
use crate::cross::{cross_on_grid, CrossOptions};
use crate::error::{mismatch, Result};
use crate::la::Matrix;
use crate::problem::{Coefficient, ProblemSpec};
use crate::tt::{
    tt_axpy, tt_hadamard, tt_round, tt_scale, ttmat_apply, ttmat_from_factors, Core, TtMatrix,
    TtVector,
};

/// When the operator terms are recompressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundingOrder {
    /// Sum the raw terms, then round once.
    AfterSum,
    /// Round every term, sum, and round again.
    PerTerm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorOptions {
    pub tt_tol: f64,
    pub rmax: usize,
    pub order: RoundingOrder,
    pub cross: CrossOptions,
}

impl Default for OperatorOptions {
    fn default() -> Self {
        OperatorOptions {
            tt_tol: 1e-10,
            rmax: usize::MAX,
            order: RoundingOrder::AfterSum,
            cross: CrossOptions::with_tol(1e-10),
        }
    }
}

impl OperatorOptions {
    pub fn with_tol(tol: f64) -> Self {
        OperatorOptions {
            tt_tol: tol,
            cross: CrossOptions::with_tol(tol),
            ..Default::default()
        }
    }
}

/// Nodal coefficient trains over all grid nodes; `None` means the term is absent.
#[derive(Debug, Clone, Default)]
pub struct CoefficientTrains {
    pub kappa: Option<TtVector>,
    pub convection: Vec<Option<TtVector>>,
    pub reaction: Option<TtVector>,
}

/// Square interior operator and the interior-rows/all-columns map used for boundary data.
#[derive(Debug, Clone)]
pub struct SystemOperators {
    pub a: TtMatrix,
    pub a_map: TtMatrix,
    pub coefficient_ranks: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
}

fn locals(grid: &Grid) -> Result<Vec<Local1D>> {
    grid.axes().iter().map(|a| local_matrices(a.h())).collect()
}

fn put_block(core: &mut Core, m: usize, a: usize, b: usize, g: &Matrix) {
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let v = g[(i, j)];
            if v != 0.0 {
                let k = core.idx(a, i + m * j, b);
                core.data[k] += v;
            }
        }
    }
}

fn check_coefficient(grid: &Grid, t: &TtVector) -> Result<()> {
    if t.mode_sizes() != grid.node_counts() {
        return Err(mismatch(format!(
            "coefficient train modes {:?} do not match grid nodes {:?}",
            t.mode_sizes(),
            grid.node_counts()
        )));
    }
    Ok(())
}

fn coefficient_slice(core: &Core, a: usize, b: usize) -> Vec<f64> {
    (0..core.n).map(|i| core.get(a, i, b)).collect()
}

/// Operator `Σ_α ⊗_k W_{kinds[k]}(K_k(α_{k−1}, :, α_k))` over all nodes.
pub fn weighted_term(grid: &Grid, coef: &TtVector, kinds: &[Kind]) -> Result<TtMatrix> {
    check_coefficient(grid, coef)?;
    let loc = locals(grid)?;
    let sizes = grid.node_counts();
    let mut cores = Vec::with_capacity(sizes.len());
    for (k, kc) in coef.cores().iter().enumerate() {
        let m = sizes[k];
        let mut core = Core::zeros(kc.r0, m * m, kc.r1);
        for b in 0..kc.r1 {
            for a in 0..kc.r0 {
                let g = weighted_global(&loc[k], kinds[k], &coefficient_slice(kc, a, b));
                put_block(&mut core, m, a, b, &g);
            }
        }
        cores.push(core);
    }
    TtMatrix::from_parts(sizes.clone(), sizes, TtVector::new(cores)?)
}

/// `−∇·(κ∇u)` tested against `v`: for each space dimension the stiffness form sits in
/// that slot and mass forms elsewhere, all weighted by κ. Built as a two-state automaton
/// (derivative slot not yet used / already used), so ranks are twice those of κ.
pub fn diffusion_term(grid: &Grid, kappa: &TtVector) -> Result<TtMatrix> {
    check_coefficient(grid, kappa)?;
    let loc = locals(grid)?;
    let sizes = grid.node_counts();
    let d = sizes.len();
    let n_space = grid.space.len();
    let mut cores = Vec::with_capacity(d);
    for (k, kc) in kappa.cores().iter().enumerate() {
        let m = sizes[k];
        let spatial = k < n_space;
        let (s0, s1) = (if k == 0 { 1 } else { 2 }, if k == d - 1 { 1 } else { 2 });
        let mut core = Core::zeros(kc.r0 * s0, m * m, kc.r1 * s1);
        // state index: 0 = derivative not placed yet, 1 = placed; combined a + r·state.
        let out_state = |s: usize| if k == d - 1 { 0 } else { s };
        for b in 0..kc.r1 {
            for a in 0..kc.r0 {
                let slice = coefficient_slice(kc, a, b);
                let mass = weighted_global(&loc[k], Kind::Mass, &slice);
                // 1 -> 1 through the mass form.
                if k > 0 {
                    put_block(&mut core, m, a + kc.r0, b + kc.r1 * out_state(1), &mass);
                }
                // 0 -> 0 through the mass form, unless this is the last core.
                if k < d - 1 {
                    put_block(&mut core, m, a, b, &mass);
                }
                // 0 -> 1 through the stiffness form in a space slot.
                if spatial {
                    let stiff = weighted_global(&loc[k], Kind::Stiffness, &slice);
                    put_block(&mut core, m, a, b + kc.r1 * out_state(1), &stiff);
                }
            }
        }
        cores.push(core);
    }
    TtMatrix::from_parts(sizes.clone(), sizes, TtVector::new(cores)?)
}

/// `b_dim ∂_dim u` tested against `v`.
pub fn convection_term(grid: &Grid, dim: usize, b: &TtVector) -> Result<TtMatrix> {
    let kinds: Vec<Kind> = (0..grid.d())
        .map(|k| {
            if k == dim {
                Kind::Derivative
            } else {
                Kind::Mass
            }
        })
        .collect();
    weighted_term(grid, b, &kinds)
}

/// `c u` tested against `v`.
pub fn reaction_term(grid: &Grid, c: &TtVector) -> Result<TtMatrix> {
    weighted_term(grid, c, &vec![Kind::Mass; grid.d()])
}

/// `u_t` tested against `v`: `M ⊗ … ⊗ M ⊗ D_t`.
pub fn time_term(grid: &Grid) -> Result<TtMatrix> {
    let loc = locals(grid)?;
    let axes = grid.axes();
    let d = axes.len();
    let factors: Vec<Matrix> = axes
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let kind = if grid.has_time() && k == d - 1 {
                Kind::Derivative
            } else {
                Kind::Mass
            };
            plain_global(&loc[k], kind, a.n)
        })
        .collect();
    ttmat_from_factors(&factors)
}

/// Tensor product of global mass matrices over all nodes.
pub fn mass_all(grid: &Grid) -> Result<TtMatrix> {
    let loc = locals(grid)?;
    let factors: Vec<Matrix> = grid
        .axes()
        .iter()
        .enumerate()
        .map(|(k, a)| plain_global(&loc[k], Kind::Mass, a.n))
        .collect();
    ttmat_from_factors(&factors)
}

/// Mass operator restricted to interior rows and columns (discrete L2 inner product).
pub fn interior_mass_tt(grid: &Grid) -> Result<TtMatrix> {
    let ranges = grid.interior_ranges();
    mass_all(grid)?.restrict_modes(&ranges, &ranges)
}

fn restrict_pair(grid: &Grid, t: &TtMatrix) -> Result<(TtMatrix, TtMatrix)> {
    let inner = grid.interior_ranges();
    let all = grid.all_ranges();
    Ok((
        t.restrict_modes(&inner, &inner)?,
        t.restrict_modes(&inner, &all)?,
    ))
}

/// All operator terms over all nodes, before restriction and rounding.
pub fn assemble_operator_all(grid: &Grid, coeffs: &CoefficientTrains) -> Result<Vec<TtMatrix>> {
    let mut terms = Vec::new();
    if grid.has_time() {
        terms.push(time_term(grid)?);
    }
    if let Some(k) = &coeffs.kappa {
        terms.push(diffusion_term(grid, k)?);
    }
    for (dim, b) in coeffs.convection.iter().enumerate() {
        if let Some(b) = b {
            terms.push(convection_term(grid, dim, b)?);
        }
    }
    if let Some(c) = &coeffs.reaction {
        terms.push(reaction_term(grid, c)?);
    }
    Ok(terms)
}

fn sum_terms(terms: Vec<TtMatrix>, opts: &OperatorOptions) -> Result<TtMatrix> {
    let mut iter = terms.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| mismatch("operator has no terms"))?;
    let prep = |t: TtMatrix| match opts.order {
        RoundingOrder::AfterSum => t,
        RoundingOrder::PerTerm => tt_round(&t, opts.tt_tol, opts.rmax),
    };
    let mut acc = prep(first);
    for t in iter {
        acc = tt_axpy(1.0, &prep(t), &acc)?;
    }
    Ok(tt_round(&acc, opts.tt_tol, opts.rmax))
}

/// Interior system operator and boundary map from explicit coefficient trains.
pub fn build_system_operators(
    grid: &Grid,
    coeffs: &CoefficientTrains,
    opts: &OperatorOptions,
) -> Result<SystemOperators> {
    let terms = assemble_operator_all(grid, coeffs)?;
    let mut inner = Vec::with_capacity(terms.len());
    let mut map = Vec::with_capacity(terms.len());
    for t in &terms {
        let (a, m) = restrict_pair(grid, t)?;
        inner.push(a);
        map.push(m);
    }
    let mut ranks = Vec::new();
    if let Some(k) = &coeffs.kappa {
        ranks.push(k.ranks());
    }
    Ok(SystemOperators {
        a: sum_terms(inner, opts)?,
        a_map: sum_terms(map, opts)?,
        coefficient_ranks: ranks,
        warnings: Vec::new(),
    })
}

/// `M(I, :) · F` for a forcing train over all nodes.
pub fn load_from_forcing(grid: &Grid, f: &TtVector, opts: &OperatorOptions) -> Result<TtVector> {
    check_coefficient(grid, f)?;
    let m = mass_all(grid)?.restrict_modes(&grid.interior_ranges(), &grid.all_ranges())?;
    Ok(tt_round(&ttmat_apply(&m, f)?, opts.tt_tol, opts.rmax))
}

fn indicator(n: usize, range: std::ops::Range<usize>) -> Vec<f64> {
    (0..n)
        .map(|i| if range.contains(&i) { 1.0 } else { 0.0 })
        .collect()
}

/// All-node train equal to `g` on the spatial boundary, to `u₀` at interior spatial
/// nodes of the initial time slice, and zero elsewhere.
pub fn boundary_data_train(
    grid: &Grid,
    g: &TtVector,
    u0: Option<&TtVector>,
    opts: &OperatorOptions,
) -> Result<TtVector> {
    check_coefficient(grid, g)?;
    let counts = grid.node_counts();
    let n_space = grid.space.len();
    let mut interior: Vec<Vec<f64>> = grid
        .space
        .iter()
        .map(|a| indicator(a.n + 1, 1..a.n))
        .collect();
    if let Some(t) = grid.time {
        interior.push(vec![1.0; t.n + 1]);
    }
    let mask = TtVector::rank_one(&interior)?;
    let outside = tt_axpy(-1.0, &mask, &TtVector::ones(&counts))?;
    let mut total = tt_hadamard(&outside, g)?;
    if let (Some(t), Some(u0)) = (grid.time, u0) {
        check_coefficient(grid, u0)?;
        let mut first_slice = interior[..n_space].to_vec();
        first_slice.push(indicator(t.n + 1, 0..1));
        let initial_mask = TtVector::rank_one(&first_slice)?;
        total = tt_axpy(1.0, &tt_hadamard(&initial_mask, u0)?, &total)?;
    }
    Ok(tt_round(&total, opts.tt_tol, opts.rmax))
}

/// `A_map · G_bd`.
pub fn boundary_term(
    a_map: &TtMatrix,
    g_bd: &TtVector,
    opts: &OperatorOptions,
) -> Result<TtVector> {
    Ok(tt_round(&ttmat_apply(a_map, g_bd)?, opts.tt_tol, opts.rmax))
}

/// Rank-1 constant train or cross-interpolated train for a coefficient.
pub fn coefficient_train(
    grid: &Grid,
    c: &Coefficient,
    opts: &OperatorOptions,
    warnings: &mut Vec<String>,
    label: &str,
) -> Result<Option<TtVector>> {
    match c {
        Coefficient::Zero => Ok(None),
        Coefficient::Constant(v) if *v == 0.0 => Ok(None),
        Coefficient::Constant(v) => Ok(Some(tt_scale(*v, &TtVector::ones(&grid.node_counts())))),
        Coefficient::Function(f) => {
            let r = cross_on_grid(grid, f.as_ref(), &opts.cross)?;
            if !r.converged {
                warnings.push(format!(
                    "cross interpolation of {label} did not converge (sample error {:.3e})",
                    r.sample_error
                ));
            }
            Ok(Some(r.train))
        }
    }
}

pub fn coefficient_trains(
    problem: &ProblemSpec,
    grid: &Grid,
    opts: &OperatorOptions,
    warnings: &mut Vec<String>,
) -> Result<CoefficientTrains> {
    let kappa = coefficient_train(grid, &problem.kappa, opts, warnings, "kappa")?;
    let convection = problem
        .convection
        .iter()
        .enumerate()
        .map(|(i, c)| coefficient_train(grid, c, opts, warnings, &format!("b{}", i + 1)))
        .collect::<Result<Vec<_>>>()?;
    let reaction = coefficient_train(grid, &problem.reaction, opts, warnings, "c")?;
    Ok(CoefficientTrains {
        kappa,
        convection,
        reaction,
    })
}

/// Interior operator and boundary map for a problem on a grid.
pub fn build_operator_tt(
    problem: &ProblemSpec,
    grid: &Grid,
    opts: &OperatorOptions,
) -> Result<SystemOperators> {
    let mut warnings = Vec::new();
    let coeffs = coefficient_trains(problem, grid, opts, &mut warnings)?;
    let mut ops = build_system_operators(grid, &coeffs, opts)?;
    ops.warnings = warnings;
    Ok(ops)
}

/// Load train `M(I, :) · F` with `F` the cross-interpolated forcing.
pub fn build_load_tt(
    problem: &ProblemSpec,
    grid: &Grid,
    opts: &OperatorOptions,
    warnings: &mut Vec<String>,
) -> Result<TtVector> {
    let f = coefficient_train(
        grid,
        &Coefficient::Function(problem.forcing.clone()),
        opts,
        warnings,
        "f",
    )?
    .expect("function coefficient yields a train");
    load_from_forcing(grid, &f, opts)
}

/// Boundary contribution `A_map · G_bd` moved to the right-hand side.
pub fn build_boundary_term_tt(
    problem: &ProblemSpec,
    grid: &Grid,
    a_map: &TtMatrix,
    opts: &OperatorOptions,
    warnings: &mut Vec<String>,
) -> Result<TtVector> {
    let g = coefficient_train(
        grid,
        &Coefficient::Function(problem.boundary.clone()),
        opts,
        warnings,
        "g",
    )?
    .expect("function coefficient yields a train");
    let u0 = match (&problem.initial, grid.has_time()) {
        (Some(u0), true) => coefficient_train(
            grid,
            &Coefficient::Function(u0.clone()),
            opts,
            warnings,
            "u0",
        )?,
        _ => None,
    };
    let g_bd = boundary_data_train(grid, &g, u0.as_ref(), opts)?;
    boundary_term(a_map, &g_bd, opts)
}
