use super::*;
use crate::la::kron;
use crate::problem::{custom, diffusion_only, poisson, Coefficient};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tri(n: usize, lo: f64, mid: f64, hi: f64) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = mid;
        if i > 0 {
            m[(i, i - 1)] = lo;
        }
        if i + 1 < n {
            m[(i, i + 1)] = hi;
        }
    }
    m
}

fn to_csr(m: &Matrix) -> CsrMatrix {
    let mut t = TripletMatrix::new(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                t.push(i, j, m[(i, j)]).unwrap();
            }
        }
    }
    t.finalize()
}

#[test]
fn single_interior_node_laplacian() {
    // N = 2, h = 1/2: 1D mass and stiffness over 3 nodes, interior node 1.
    let h = 0.5;
    let m1 = Matrix::from_row_slice(
        3,
        3,
        &[
            h / 3.,
            h / 6.,
            0.,
            h / 6.,
            2. * h / 3.,
            h / 6.,
            0.,
            h / 6.,
            h / 3.,
        ],
    );
    let s1 = Matrix::from_row_slice(
        3,
        3,
        &[
            1. / h,
            -1. / h,
            0.,
            -1. / h,
            2. / h,
            -1. / h,
            0.,
            -1. / h,
            1. / h,
        ],
    );
    let lap = &kron(&kron(&s1, &m1).unwrap(), &m1).unwrap()
        + &kron(&kron(&m1, &s1).unwrap(), &m1).unwrap()
        + &kron(&kron(&m1, &m1).unwrap(), &s1).unwrap();
    let p = diffusion_only("unit", Coefficient::Constant(1.0));
    let grid = p.grid(2).unwrap();
    let full = assemble_full_system(&p, &grid).unwrap();
    assert_eq!(full.system.dimension, 1);
    let centre = 9 + 3 + 1;
    assert!((full.system.matrix.get(0, 0) - lap[(centre, centre)]).abs() < 1e-14);
    for j in 0..27 {
        assert!(
            (full.operator_map.get(0, j) - lap[(centre, j)]).abs() < 1e-14,
            "col {j}"
        );
    }
}

#[test]
fn constant_diffusion_is_symmetric() {
    let p = diffusion_only("k", Coefficient::Constant(2.5));
    let grid = p.grid(5).unwrap();
    let full = assemble_full_system(&p, &grid).unwrap();
    let a = full.system.matrix.to_dense();
    assert!((&a - a.transpose()).amax() <= 1e-13 * a.amax());
    assert!(full.system.matrix.is_symmetric(1e-13));
}

#[test]
fn zero_data_gives_zero_rhs() {
    let p = diffusion_only("zero", Coefficient::Constant(1.0));
    let grid = p.grid(4).unwrap();
    let full = assemble_full_system(&p, &grid).unwrap();
    assert!(full.system.rhs.iter().all(|&v| v == 0.0));
    assert_eq!(solve_full(&full.system).unwrap(), vec![0.0; 27]);
}

#[test]
fn mass_matrix_is_kronecker_of_1d_masses() {
    let grid = crate::sem::Grid::unit(4, 2, true).unwrap();
    let h = 0.25;
    let m1 = |n: usize| {
        let full = Matrix::from_fn(5, 5, |i, j| {
            if i == j {
                if i == 0 || i == 4 {
                    h / 3.
                } else {
                    2. * h / 3.
                }
            } else if i.abs_diff(j) == 1 {
                h / 6.
            } else {
                0.
            }
        });
        full.view((1, 1), (n, n)).into_owned()
    };
    let mx = m1(3);
    let mt = m1(4);
    let oracle = kron(&kron(&mx, &mx).unwrap(), &mt).unwrap();
    let m = interior_mass_matrix(&grid).unwrap().to_dense();
    assert!((m - oracle).amax() < 1e-15);
}

#[test]
fn cap_is_enforced() {
    let p = poisson();
    let grid = p.grid(8).unwrap();
    match assemble_full_system_capped(&p, &grid, 100) {
        Err(Error::TooLarge { requested, cap, .. }) => {
            assert_eq!(requested, 343);
            assert_eq!(cap, 100);
        }
        other => panic!("expected cap error, got {other:?}"),
    }
}

#[test]
fn triplets_sum_duplicates() {
    let mut t = TripletMatrix::new(2, 3);
    t.push(1, 2, 1.0).unwrap();
    t.push(0, 0, 2.0).unwrap();
    t.push(1, 2, 0.5).unwrap();
    assert!(t.push(2, 0, 1.0).is_err());
    let c = t.finalize();
    assert_eq!(c.row_ptr, vec![0, 1, 2]);
    assert_eq!(c.get(1, 2), 1.5);
    assert_eq!(c.get(0, 0), 2.0);
    assert_eq!(c.get(0, 1), 0.0);
}

#[test]
fn identity_system_returns_rhs() {
    let sys = SparseSystem {
        dimension: 4,
        matrix: CsrMatrix::identity(4),
        rhs: vec![1.0, -2.0, 3.0, 0.5],
    };
    assert_eq!(solve_full(&sys).unwrap(), sys.rhs);
}

#[test]
fn ilu0_is_exact_on_tridiagonal() {
    let a = to_csr(&tri(30, -1.0, 4.0, -2.0));
    let ilu = Ilu0::new(&a).unwrap();
    let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
    let mut z = vec![0.0; 30];
    ilu.apply(&b, &mut z);
    let r: Vec<f64> = a.matvec(&z).iter().zip(&b).map(|(x, y)| x - y).collect();
    assert!(norm(&r) < 1e-13);
}

#[test]
fn krylov_solvers_reach_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 400;
    let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    // Symmetric positive definite 2D Laplacian plus shift.
    let k = 20;
    let t = tri(k, -1.0, 2.0, -1.0);
    let id = Matrix::identity(k, k);
    let lap = kron(&t, &id).unwrap() + kron(&id, &t).unwrap() + Matrix::identity(n, n) * 0.1;
    let a = to_csr(&lap);
    let (_, s) = pcg(&a, &b, 1e-12, 10 * n);
    assert!(s.relative_residual <= 1e-10, "{s:?}");
    // Nonsymmetric convection-diffusion.
    let t2 = tri(k, -1.6, 2.0, -0.4);
    let cd = kron(&t2, &id).unwrap() + kron(&id, &t).unwrap();
    let a = to_csr(&cd);
    let ilu = Ilu0::new(&a).unwrap();
    let (x1, s1) = bicgstab(&a, &b, &ilu, 1e-12, 2000);
    let (x2, s2) = gmres(&a, &b, &ilu, 1e-12, 30, 2000);
    assert!(s1.relative_residual <= 1e-10, "{s1:?}");
    assert!(s2.relative_residual <= 1e-10, "{s2:?}");
    let dense = solve_dense(&cd, &b).unwrap();
    for i in 0..n {
        assert!((x1[i] - dense[i]).abs() < 1e-8);
        assert!((x2[i] - dense[i]).abs() < 1e-8);
    }
}

#[test]
fn space_time_system_solves() {
    let p = custom(1.0, [0.5, 0.0, -0.5], 1.0);
    let grid = p.grid(4).unwrap();
    let full = assemble_full_system(&p, &grid).unwrap();
    assert_eq!(full.system.dimension, 27 * 4);
    assert!(!full.system.matrix.is_symmetric(1e-13));
    let x = solve_full(&full.system).unwrap();
    assert!(relative_residual(&full.system.matrix, &x, &full.system.rhs) <= FULL_SOLVE_TOL);
    // Iterative path on the same matrix.
    let ilu = Ilu0::new(&full.system.matrix).unwrap();
    let (y, s) = bicgstab(&full.system.matrix, &full.system.rhs, &ilu, 1e-12, 500);
    assert!(s.relative_residual <= 1e-10);
    for (a, b) in x.iter().zip(&y) {
        assert!((a - b).abs() < 1e-8);
    }
}
