use super::*;
use crate::error::Error;
use crate::la::{kron, solve_dense};
use crate::tt::{tt_to_dense, ttmat_from_factors, TtVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tri(n: usize, lo: f64, mid: f64, hi: f64) -> Matrix {
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            mid
        } else if j + 1 == i {
            lo
        } else if i + 1 == j {
            hi
        } else {
            0.0
        }
    })
}

fn random_tt(sizes: &[usize], rank: usize, seed: u64) -> TtVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TtVector::new(random_train(sizes, rank, &mut rng)).unwrap()
}

fn dense_vec(x: &TtVector) -> Vec<f64> {
    tt_to_dense(x).unwrap().into_data()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    frob(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>()) / frob(b)
}

/// Sum of Kronecker terms, each a list of per-mode factors, as a TT operator.
fn kron_sum(terms: &[Vec<Matrix>]) -> TtMatrix {
    let mut acc = ttmat_from_factors(&terms[0]).unwrap();
    for t in &terms[1..] {
        acc = tt_axpy(1.0, &ttmat_from_factors(t).unwrap(), &acc).unwrap();
    }
    tt_round(&acc, 1e-14, usize::MAX)
}

fn dense_kron_sum(terms: &[Vec<Matrix>]) -> Matrix {
    let mut total: Option<Matrix> = None;
    for t in terms {
        let mut m = t[0].clone();
        for f in &t[1..] {
            m = kron(&m, f).unwrap();
        }
        total = Some(match total {
            Some(acc) => acc + m,
            None => m,
        });
    }
    total.unwrap()
}

fn laplace_terms(d: usize, n: usize, conv: f64) -> Vec<Vec<Matrix>> {
    let t = tri(n, -1.0 - conv, 2.0, -1.0 + conv);
    let id = Matrix::identity(n, n);
    (0..d)
        .map(|k| {
            (0..d)
                .map(|l| if l == k { t.clone() } else { id.clone() })
                .collect()
        })
        .collect()
}

#[test]
fn identity_operator_returns_rhs_in_one_sweep() {
    let sizes = [4, 3, 5];
    let b = random_tt(&sizes, 2, 1);
    let a = TtMatrix::identity(&sizes);
    let (x, stats) = als_solve(&a, &b, &SolverOptions::default(), None).unwrap();
    assert!(stats.converged);
    assert_eq!(stats.sweeps_used, 1);
    assert!(rel_err(&dense_vec(&x), &dense_vec(&b)) < 1e-12);
}

#[test]
fn rank_one_spd_kronecker_matches_dense_solve() {
    let n = 5;
    let factors: Vec<Matrix> = (0..4).map(|k| tri(n, -1.0, 3.0 + k as f64, -1.0)).collect();
    let a = ttmat_from_factors(&factors).unwrap();
    let b = random_tt(&[n; 4], 3, 2);
    let opts = SolverOptions {
        solver_tol: 1e-10,
        tt_tol: 1e-13,
        ..Default::default()
    };
    let (x, stats) = als_solve(&a, &b, &opts, None).unwrap();
    assert!(stats.converged, "{stats:?}");
    let dense = dense_kron_sum(&[factors]);
    let exact = solve_dense(&dense, &dense_vec(&b)).unwrap();
    assert!(rel_err(&dense_vec(&x), &exact) <= 1e-8);
}

#[test]
fn laplacian_kronecker_sum_matches_dense_solve() {
    let terms = laplace_terms(3, 8, 0.0);
    let a = kron_sum(&terms);
    let b = random_tt(&[8; 3], 2, 3);
    let opts = SolverOptions {
        solver_tol: 1e-9,
        tt_tol: 1e-12,
        ..Default::default()
    };
    let (x, stats) = als_solve(&a, &b, &opts, None).unwrap();
    assert!(stats.converged, "{stats:?}");
    let exact = solve_dense(&dense_kron_sum(&terms), &dense_vec(&b)).unwrap();
    assert!(rel_err(&dense_vec(&x), &exact) <= 1e-7);
    let res = tt_residual_norm(&a, &x, &b).unwrap() / tt_norm(&b);
    assert!((res - stats.final_residual).abs() <= 1e-12 + 1e-6 * res);
}

#[test]
fn nonsymmetric_operator_matches_dense_solve() {
    let terms = laplace_terms(4, 6, 0.4);
    let a = kron_sum(&terms);
    let b = random_tt(&[6; 4], 2, 4);
    let opts = SolverOptions {
        solver_tol: 1e-9,
        tt_tol: 1e-12,
        ..Default::default()
    };
    let (x, stats) = als_solve(&a, &b, &opts, None).unwrap();
    assert!(stats.converged, "{stats:?}");
    let exact = solve_dense(&dense_kron_sum(&terms), &dense_vec(&b)).unwrap();
    assert!(rel_err(&dense_vec(&x), &exact) <= 1e-7);
}

#[test]
fn large_local_systems_use_the_iterative_path() {
    // Middle cores of size r·n·r exceed the dense limit.
    let terms = laplace_terms(3, 12, 0.2);
    let a = kron_sum(&terms);
    let b = random_tt(&[12; 3], 10, 5);
    let opts = SolverOptions {
        solver_tol: 1e-8,
        tt_tol: 1e-12,
        ..Default::default()
    };
    let mut records = Vec::new();
    let (x, stats) = als_solve_observed(&a, &b, &opts, None, &mut |r| records.push(*r)).unwrap();
    assert!(stats.converged, "{stats:?}");
    assert!(x.max_rank() * 12 * x.max_rank() > local::DENSE_LOCAL_LIMIT);
    let exact = solve_dense(&dense_kron_sum(&terms), &dense_vec(&b)).unwrap();
    assert!(rel_err(&dense_vec(&x), &exact) <= 1e-6);
    assert_eq!(records.len(), stats.sweeps_used);
    assert!(records.iter().all(|r| r.stage == Stage::Sweep));
}

#[test]
fn zero_rhs_gives_zero_train() {
    let a = TtMatrix::identity(&[3, 3]);
    let b = TtVector::zeros(&[3, 3]);
    let (x, stats) = als_solve(&a, &b, &SolverOptions::default(), None).unwrap();
    assert!(stats.converged);
    assert_eq!(stats.sweeps_used, 0);
    assert_eq!(tt_norm(&x), 0.0);
}

#[test]
fn shape_errors() {
    let a = TtMatrix::identity(&[3, 3]);
    let b = TtVector::ones(&[3, 4]);
    assert!(als_solve(&a, &b, &SolverOptions::default(), None).is_err());
    assert!(tt_residual_norm(&a, &TtVector::ones(&[3, 3]), &b).is_err());
    let bad = SolverOptions {
        solver_tol: 0.0,
        ..Default::default()
    };
    assert!(als_solve(&a, &TtVector::ones(&[3, 3]), &bad, None).is_err());
}

#[test]
fn residual_norm_matches_dense() {
    let sizes = [3, 4, 2];
    let terms = laplace_terms(3, 4, 0.3);
    let terms: Vec<Vec<Matrix>> = terms
        .into_iter()
        .map(|t| {
            t.into_iter()
                .zip(sizes)
                .map(|(m, n)| m.view((0, 0), (n, n)).into_owned())
                .collect()
        })
        .collect();
    let a = kron_sum(&terms);
    let x = random_tt(&sizes, 2, 6);
    let b = random_tt(&sizes, 3, 7);
    let dense = dense_kron_sum(&terms);
    let ax = &dense * Matrix::from_column_slice(24, 1, &dense_vec(&x));
    let r: Vec<f64> = ax.iter().zip(dense_vec(&b)).map(|(p, q)| p - q).collect();
    let got = tt_residual_norm(&a, &x, &b).unwrap();
    assert!((got - frob(&r)).abs() <= 1e-12 * frob(&r));
    // x = 0 gives ‖b‖; an exact solution gives ~0.
    let zero = TtVector::zeros(&sizes);
    assert!((tt_residual_norm(&a, &zero, &b).unwrap() - tt_norm(&b)).abs() < 1e-12);
    let ax_tt = ttmat_apply(&a, &x).unwrap();
    assert!(tt_residual_norm(&a, &x, &ax_tt).unwrap() < 1e-12 * tt_norm(&ax_tt));
}

fn scalar_system(a: f64, m: f64, load: f64, d: usize) -> SemilinearSystem {
    let one = |v: f64| Matrix::from_element(1, 1, v);
    let mut fa = vec![one(1.0); d];
    fa[0] = one(a);
    let mut fm = vec![one(1.0); d];
    fm[0] = one(m);
    let mut l = vec![vec![1.0]; d];
    l[0] = vec![load];
    SemilinearSystem {
        a: ttmat_from_factors(&fa).unwrap(),
        mass: ttmat_from_factors(&fm).unwrap(),
        load: TtVector::rank_one(&l).unwrap(),
    }
}

#[test]
fn scalar_newton_follows_hand_iteration() {
    let (a, m, f) = (2.0, 0.5, 1.3);
    let sys = scalar_system(a, m, m * f, 3);
    let opts = SolverOptions {
        solver_tol: 1e-12,
        tt_tol: 1e-14,
        ..Default::default()
    };
    let u0 = TtVector::rank_one(&[vec![0.4], vec![1.0], vec![1.0]]).unwrap();
    let mut seen = Vec::new();
    let (u, stats) = newton_solve(&sys, Some(&u0), &opts, &mut |r| seen.push(r.residual)).unwrap();
    assert!(stats.converged);
    // Hand Newton on g(u) = a u − m(u − u³) − m f.
    let g = |u: f64| a * u - m * (u - u * u * u) - m * f;
    let dg = |u: f64| a - m + 3.0 * m * u * u;
    let mut v: f64 = 0.4;
    let mut hand = vec![g(v).abs() / (m * f)];
    while g(v).abs() > 1e-12 * m * f {
        v -= g(v) / dg(v);
        hand.push(g(v).abs() / (m * f));
    }
    assert_eq!(stats.newton_iterations, hand.len());
    for (s, h) in seen.iter().zip(&hand) {
        assert!((s - h).abs() <= 1e-10 * h.max(1e-3), "{seen:?} vs {hand:?}");
    }
    assert!((u.value_at(&[0, 0, 0]) - v).abs() < 1e-12);
}

#[test]
fn zero_solution_converges_immediately() {
    let sys = scalar_system(2.0, 0.5, 0.0, 2);
    let sys = SemilinearSystem {
        load: TtVector::zeros(&[1, 1]),
        ..sys
    };
    let (u, stats) = newton_solve(&sys, None, &SolverOptions::default(), &mut |_| {}).unwrap();
    assert_eq!(stats.newton_iterations, 1);
    assert!(stats.converged);
    assert_eq!(tt_norm(&u), 0.0);
}

#[test]
fn divergence_is_reported_and_backtracking_recovers() {
    // u³ + c·u − l from a start where the plain Newton loss rises three times in a row.
    let c = -3.762_701_376_056_584;
    let sys = scalar_system(1.0 + c, 1.0, 0.028_722_377_479_680_54, 1);
    let u0 = TtVector::rank_one(&[vec![0.865_361_846_837_754_6]]).unwrap();
    let opts = SolverOptions {
        solver_tol: 1e-12,
        tt_tol: 1e-14,
        max_newton_iterations: 50,
        ..Default::default()
    };
    match newton_solve(&sys, Some(&u0), &opts, &mut |_| {}) {
        Err(Error::Diverged {
            iterations,
            history,
        }) => {
            assert_eq!(iterations, 4);
            assert_eq!(history.len(), 5);
            assert!(
                history.windows(2).skip(1).all(|w| w[1] > w[0]),
                "{history:?}"
            );
        }
        other => panic!("expected divergence, got {other:?}"),
    }
    let damped = SolverOptions {
        backtracking: true,
        ..opts
    };
    let (_, stats) = newton_solve(&sys, Some(&u0), &damped, &mut |_| {}).unwrap();
    assert!(stats.converged);
    assert!(stats.residual_history.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn jacobian_matches_finite_differences() {
    let sizes = [4, 3, 3];
    let terms = laplace_terms(3, 4, 0.2);
    let terms: Vec<Vec<Matrix>> = terms
        .into_iter()
        .map(|t| {
            t.into_iter()
                .zip(sizes)
                .map(|(m, n)| m.view((0, 0), (n, n)).into_owned())
                .collect()
        })
        .collect();
    let mass: Vec<Matrix> = sizes.iter().map(|&n| tri(n, 0.1, 0.4, 0.1)).collect();
    let sys = SemilinearSystem {
        a: kron_sum(&terms),
        mass: ttmat_from_factors(&mass).unwrap(),
        load: random_tt(&sizes, 2, 8),
    };
    let u = random_tt(&sizes, 2, 9);
    let v = random_tt(&sizes, 2, 10);
    let eps = 1e-6;
    let tol = 1e-14;
    let l0 = dense_vec(&newton_loss(&sys, &u, tol).unwrap());
    let up = tt_axpy(eps, &v, &u).unwrap();
    let l1 = dense_vec(&newton_loss(&sys, &up, tol).unwrap());
    let fd: Vec<f64> = l1.iter().zip(&l0).map(|(a, b)| (a - b) / eps).collect();
    let j = semilinear_jacobian(&sys, &u, tol).unwrap();
    let jv = dense_vec(&ttmat_apply(&j, &v).unwrap());
    assert!(rel_err(&fd, &jv) <= 1e-5);
}
