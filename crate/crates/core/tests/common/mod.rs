//! Checks shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stsem_tt::cross::{cross_interpolate, CrossOptions};
use stsem_tt::la::{maxvol, solve_dense_multi, Matrix};
use stsem_tt::problem::ProblemSpec;
use stsem_tt::reference::assemble_full_system;
use stsem_tt::sem::{
    build_boundary_term_tt, build_load_tt, build_operator_tt, local_matrices, plain_global,
    weighted_global, Kind, OperatorOptions,
};
use stsem_tt::tt::{
    tt_axpy, tt_from_dense, tt_round, tt_to_dense, ttmat_apply, ttmat_from_factors, Core, TtVector,
};

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Relative Frobenius mismatches between TT-built and element-loop quantities:
/// interior operator, boundary map, right-hand side and load.
pub fn operator_mismatch(problem: &ProblemSpec, n: usize) -> [(&'static str, f64); 4] {
    let grid = problem.grid(n).unwrap();
    let opts = OperatorOptions::with_tol(1e-14);
    let ops = build_operator_tt(problem, &grid, &opts).unwrap();
    let full = assemble_full_system(problem, &grid).unwrap();

    let a_tt = ops.a.to_dense_matrix().unwrap();
    let a_ref = full.system.matrix.to_dense();
    let map_tt = ops.a_map.to_dense_matrix().unwrap();
    let map_ref = full.operator_map.to_dense();

    let mut warnings = Vec::new();
    let load = build_load_tt(problem, &grid, &opts, &mut warnings).unwrap();
    let bd = build_boundary_term_tt(problem, &grid, &ops.a_map, &opts, &mut warnings).unwrap();
    let rhs = tt_to_dense(&tt_axpy(-1.0, &bd, &load).unwrap()).unwrap();
    let load = tt_to_dense(&load).unwrap();
    [
        ("operator", (&a_tt - &a_ref).norm() / a_ref.norm()),
        ("boundary map", (&map_tt - &map_ref).norm() / map_ref.norm()),
        ("rhs", rel_vec(rhs.data(), &full.system.rhs)),
        ("load", rel_vec(load.data(), &full.load)),
    ]
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn report<T: std::fmt::Debug>(
    r: Result<(), proptest::test_runner::TestError<T>>,
) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

fn random_train(shape: &[usize], ranks: &[usize], seed: u64) -> TtVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = shape.len();
    let cores = (0..d)
        .map(|k| {
            let r0 = if k == 0 { 1 } else { ranks[k - 1] };
            let r1 = if k == d - 1 { 1 } else { ranks[k] };
            let data = (0..r0 * shape[k] * r1)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            Core::new(r0, shape[k], r1, data).unwrap()
        })
        .collect();
    TtVector::new(cores).unwrap()
}

fn train_case() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, u64)> {
    (2usize..=4).prop_flat_map(|d| {
        (
            proptest::collection::vec(2usize..=5, d),
            proptest::collection::vec(1usize..=3, d - 1),
            any::<u64>(),
        )
    })
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

/// Dense → TT-SVD → dense reproduces the tensor, and rounding a train at a tight
/// tolerance does not move it.
pub fn tt_round_trip(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&train_case(), |(shape, ranks, seed)| {
        let t = random_train(&shape, &ranks, seed);
        let dense = tt_to_dense(&t).unwrap();
        let back = tt_from_dense(&dense, 1e-13, usize::MAX).unwrap();
        let again = tt_to_dense(&back).unwrap();
        let e = rel_vec(again.data(), dense.data());
        ensure(e <= 1e-11, || format!("TT-SVD round trip error {e:e}"))?;
        for (k, (&got, &had)) in back.ranks().iter().zip(&t.ranks()).enumerate() {
            ensure(got <= had, || {
                format!("bond {k}: rank {got} above generating rank {had}")
            })?;
        }
        let rounded = tt_to_dense(&tt_round(&t, 1e-13, usize::MAX)).unwrap();
        let e = rel_vec(rounded.data(), dense.data());
        ensure(e <= 1e-11, || format!("rounding error {e:e}"))
    }))
}

fn kron_all(factors: &[Matrix]) -> Matrix {
    factors[1..]
        .iter()
        .fold(factors[0].clone(), |acc, f| acc.kronecker(f))
}

/// A rank-1 TT-matrix built from factors acts factor-wise on rank-1 trains and its
/// matricization is the Kronecker product of the factors.
pub fn rank_one_kronecker_law(cases: u32) -> Result<(), String> {
    let dims = proptest::collection::vec((1usize..=4, 1usize..=4), 1..=4);
    report(runner(cases).run(&(dims, any::<u64>()), |(dims, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors: Vec<Matrix> = dims
            .iter()
            .map(|&(m, n)| Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let xs: Vec<Vec<f64>> = dims
            .iter()
            .map(|&(_, n)| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let op = ttmat_from_factors(&factors).unwrap();
        let y = ttmat_apply(&op, &TtVector::rank_one(&xs).unwrap()).unwrap();
        let ys: Vec<Vec<f64>> = factors
            .iter()
            .zip(&xs)
            .map(|(a, x)| {
                (a * Matrix::from_column_slice(x.len(), 1, x))
                    .iter()
                    .copied()
                    .collect()
            })
            .collect();
        let want = tt_to_dense(&TtVector::rank_one(&ys).unwrap()).unwrap();
        let got = tt_to_dense(&y).unwrap();
        let scale = want.norm().max(1e-300);
        let e = rel_vec(got.data(), want.data());
        ensure(e <= 1e-13 || scale < 1e-12, || {
            format!("apply differs by {e:e}")
        })?;
        let dense = op.to_dense_matrix().unwrap();
        let kron = kron_all(&factors);
        let e = (&dense - &kron).norm() / kron.norm().max(1e-300);
        ensure(e <= 1e-14, || {
            format!("matricization differs from Kronecker product by {e:e}")
        })
    }))
}

/// Every entry of `A·A[rows]⁻¹` is bounded by `1 + tol`.
pub fn maxvol_dominance(cases: u32) -> Result<(), String> {
    let shape = (1usize..=6).prop_flat_map(|r| (r..=24, Just(r)));
    report(runner(cases).run(&(shape, any::<u64>()), |((n, r), seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
        let tol = 1e-2;
        let mv = maxvol(&a, tol, 500).unwrap();
        let mut rows = mv.rows.clone();
        rows.sort_unstable();
        rows.dedup();
        ensure(rows.len() == r, || {
            format!("pivot rows {:?} are not distinct", mv.rows)
        })?;
        let sub = Matrix::from_fn(r, r, |i, j| a[(mv.rows[i], j)]);
        // coefficients C with C·sub = A, i.e. subᵀ·Cᵀ = Aᵀ
        let c = solve_dense_multi(&sub.transpose(), &a.transpose())
            .unwrap()
            .transpose();
        let worst = c.amax();
        ensure(mv.converged && worst <= 1.0 + tol + 1e-10, || {
            format!("max coefficient {worst} (converged {})", mv.converged)
        })
    }))
}

/// Weighted 1D matrices are linear in the nodal weights, and unit weights give the
/// unweighted matrix.
pub fn partition_of_unity(cases: u32) -> Result<(), String> {
    let case = (2usize..=12, 0.01f64..1.0, any::<u64>());
    report(runner(cases).run(&case, |(n, h, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let local = local_matrices(h).unwrap();
        let v: Vec<f64> = (0..=n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..=n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let vw: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        for kind in [Kind::Mass, Kind::Stiffness, Kind::Derivative] {
            let ones = weighted_global(&local, kind, &vec![1.0; n + 1]);
            let plain = plain_global(&local, kind, n);
            let e = (&ones - &plain).norm() / plain.norm();
            ensure(e <= 1e-14, || {
                format!("{kind:?}: unit weights differ by {e:e}")
            })?;
            let sum = weighted_global(&local, kind, &v) + weighted_global(&local, kind, &w);
            let joint = weighted_global(&local, kind, &vw);
            let e = (&joint - &sum).norm() / sum.norm().max(1e-300);
            ensure(e <= 1e-13, || {
                format!("{kind:?}: weights not additive ({e:e})")
            })?;
            let parts = local.weighted(kind);
            let e = (&parts[0] + &parts[1] - local.plain(kind)).norm();
            ensure(e <= 1e-14 * local.plain(kind).norm(), || {
                format!("{kind:?}: local weighted parts do not sum to the plain matrix")
            })?;
        }
        Ok(())
    }))
}

/// Cross interpolation of a function that is itself a low-rank train is exact.
pub fn cross_exact_on_trains(cases: u32) -> Result<(), String> {
    let case = (2usize..=4).prop_flat_map(|d| {
        (
            proptest::collection::vec(3usize..=7, d),
            proptest::collection::vec(1usize..=3, d - 1),
            any::<u64>(),
        )
    });
    report(runner(cases).run(&case, |(shape, ranks, seed)| {
        let t = random_train(&shape, &ranks, seed);
        let opts = CrossOptions {
            seed,
            ..CrossOptions::with_tol(1e-12)
        };
        let res = cross_interpolate(&shape, |idx: &[usize]| t.value_at(idx), &opts).unwrap();
        let want = tt_to_dense(&t).unwrap();
        let got = tt_to_dense(&res.train).unwrap();
        let scale = want.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = got
            .data()
            .iter()
            .zip(want.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        ensure(err <= 1e-9 * scale, || {
            format!(
                "max error {err:e} (scale {scale:e}), ranks {:?}",
                res.train.ranks()
            )
        })
    }))
}

/// Named property suites with their case counts.
pub const SUITES: [(&str, fn(u32) -> Result<(), String>); 5] = [
    ("tt round trip", tt_round_trip),
    ("rank-1 kronecker law", rank_one_kronecker_law),
    ("maxvol dominance", maxvol_dominance),
    ("partition of unity", partition_of_unity),
    ("cross exactness on trains", cross_exact_on_trains),
];

pub const CASES: u32 = 128;
