use super::*;
use approx::assert_relative_eq;

/// 4-point Gauss-Legendre rule mapped to [0, h].
fn gauss(h: f64) -> Vec<(f64, f64)> {
    let pts = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
    ];
    pts.iter()
        .map(|&(x, w)| ((x + 1.0) * h / 2.0, w * h / 2.0))
        .collect()
}

fn phi(i: usize, x: f64, h: f64) -> f64 {
    if i == 0 {
        1.0 - x / h
    } else {
        x / h
    }
}

fn dphi(i: usize, h: f64) -> f64 {
    if i == 0 {
        -1.0 / h
    } else {
        1.0 / h
    }
}

fn quad(h: f64, f: impl Fn(f64) -> f64) -> f64 {
    gauss(h).into_iter().map(|(x, w)| w * f(x)).sum()
}

#[test]
fn local_matrices_match_quadrature() {
    for &h in &[1.0, 0.25, 0.1] {
        let l = local_matrices(h).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let m = quad(h, |x| phi(i, x, h) * phi(j, x, h));
                let s = quad(h, |_| dphi(i, h) * dphi(j, h));
                let d = quad(h, |x| phi(i, x, h) * dphi(j, h));
                assert_relative_eq!(l.mass[(i, j)], m, epsilon = 1e-14);
                assert_relative_eq!(l.stiffness[(i, j)], s, epsilon = 1e-12);
                assert_relative_eq!(l.time_derivative[(i, j)], d, epsilon = 1e-14);
                for p in 0..2 {
                    let wm = quad(h, |x| phi(p, x, h) * phi(i, x, h) * phi(j, x, h));
                    let ws = quad(h, |x| phi(p, x, h) * dphi(i, h) * dphi(j, h));
                    let wd = quad(h, |x| phi(p, x, h) * phi(i, x, h) * dphi(j, h));
                    assert_relative_eq!(l.weighted_mass[p][(i, j)], wm, epsilon = 1e-14);
                    assert_relative_eq!(l.weighted_stiffness[p][(i, j)], ws, epsilon = 1e-12);
                    assert_relative_eq!(l.weighted_derivative[p][(i, j)], wd, epsilon = 1e-14);
                }
            }
        }
    }
}

#[test]
fn unit_width_values() {
    let l = local_matrices(1.0).unwrap();
    assert_eq!(l.mass, m2(1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0));
    assert_eq!(l.stiffness, m2(1.0, -1.0, -1.0, 1.0));
    assert_eq!(l.time_derivative, m2(-0.5, 0.5, -0.5, 0.5));
    assert_eq!(
        l.weighted_mass[0],
        m2(0.25, 1.0 / 12.0, 1.0 / 12.0, 1.0 / 12.0)
    );
    assert_eq!(l.weighted_stiffness[0], m2(0.5, -0.5, -0.5, 0.5));
    assert_eq!(
        l.weighted_derivative[0],
        m2(-1.0 / 3.0, 1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0)
    );
    for kind in [Kind::Mass, Kind::Stiffness, Kind::Derivative] {
        let w = l.weighted(kind);
        assert!((&w[0] + &w[1] - l.plain(kind)).amax() < 1e-15);
    }
    assert!(local_matrices(0.0).is_err());
    assert!(local_matrices(-1.0).is_err());
}

#[test]
fn local_matrix_structure() {
    let l = local_matrices(0.3).unwrap();
    assert_eq!(l.mass, l.mass.transpose());
    assert!(l.mass.clone().cholesky().is_some());
    assert_eq!(l.stiffness, l.stiffness.transpose());
    for i in 0..2 {
        assert!((l.stiffness.row(i).sum()).abs() < 1e-14);
    }
}

#[test]
fn binary_matrix_pattern() {
    let b = assembly_binary(2).unwrap();
    assert_eq!(
        b,
        Matrix::from_row_slice(3, 4, &[1., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0., 1.])
    );
    assert_eq!(assembly_binary(1).unwrap(), Matrix::identity(2, 2));
    let b = assembly_binary(5).unwrap();
    let bbt = &b * b.transpose();
    let mut expect = Matrix::identity(6, 6) * 2.0;
    expect[(0, 0)] = 1.0;
    expect[(5, 5)] = 1.0;
    assert_eq!(bbt, expect);
    assert!(assembly_binary(0).is_err());
}

#[test]
fn global_assembly() {
    let l = local_matrices(1.0).unwrap();
    let g = assemble_global_1d(&l.mass, 2).unwrap();
    let expect = Matrix::from_row_slice(
        3,
        3,
        &[
            1. / 3.,
            1. / 6.,
            0.,
            1. / 6.,
            2. / 3.,
            1. / 6.,
            0.,
            1. / 6.,
            1. / 3.,
        ],
    );
    assert!((g - expect).amax() < 1e-15);
    let g = assemble_global_1d(&Matrix::identity(2, 2), 4).unwrap();
    let mut d = Matrix::identity(5, 5) * 2.0;
    d[(0, 0)] = 1.0;
    d[(4, 4)] = 1.0;
    assert_eq!(g, d);
    // Literal binary-matrix form agrees with the element loop for every kind.
    for n in 1..=16 {
        let l = local_matrices(1.0 / n as f64).unwrap();
        for kind in [Kind::Mass, Kind::Stiffness, Kind::Derivative] {
            let a = assemble_global_1d(l.plain(kind), n).unwrap();
            let b = plain_global(&l, kind, n);
            assert!((a - b).amax() < 1e-12);
        }
    }
}

#[test]
fn staggered_diagonals() {
    let c = coefficient_staggered_diagonals(&[2.0; 4], 0).unwrap();
    assert_eq!(c, Matrix::identity(6, 6) * 2.0);
    let v = [1.0, 2.0, 3.0];
    let c0 = coefficient_staggered_diagonals(&v, 0).unwrap();
    let c1 = coefficient_staggered_diagonals(&v, 1).unwrap();
    assert_eq!(c0.diagonal().as_slice(), &[1.0, 1.0, 2.0, 2.0]);
    assert_eq!(c1.diagonal().as_slice(), &[2.0, 2.0, 3.0, 3.0]);
    assert!(coefficient_staggered_diagonals(&[1.0], 0).is_err());
    assert!(coefficient_staggered_diagonals(&[1.0, 2.0], 2).is_err());
}

#[test]
fn weighted_assembly_matches_element_quadrature() {
    let n = 4;
    let h = 1.0 / n as f64;
    let l = local_matrices(h).unwrap();
    let b = assembly_binary(n).unwrap();
    let nodes: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let kappa = |x: f64| x;
    let values: Vec<f64> = nodes.iter().map(|&x| kappa(x)).collect();
    for kind in [Kind::Mass, Kind::Stiffness, Kind::Derivative] {
        let w = l.weighted(kind);
        let mut sum = Matrix::zeros(n + 1, n + 1);
        for p in 0..2 {
            let c = coefficient_staggered_diagonals(&values, p).unwrap();
            sum += assemble_weighted_global_1d(&w[p], &c, &b).unwrap();
        }
        assert!((&sum - weighted_global(&l, kind, &values)).amax() < 1e-14);
        // Element loop with the interpolated coefficient, integrated by Gauss quadrature.
        let mut oracle = Matrix::zeros(n + 1, n + 1);
        for e in 0..n {
            for i in 0..2 {
                for j in 0..2 {
                    oracle[(e + i, e + j)] += quad(h, |x| {
                        let k = values[e] * phi(0, x, h) + values[e + 1] * phi(1, x, h);
                        let (fi, fj) = match kind {
                            Kind::Mass => (phi(i, x, h), phi(j, x, h)),
                            Kind::Stiffness => (dphi(i, h), dphi(j, h)),
                            Kind::Derivative => (phi(i, x, h), dphi(j, h)),
                        };
                        k * fi * fj
                    });
                }
            }
        }
        assert!((&sum - oracle).amax() < 1e-13, "{kind:?}");
    }
    let c = coefficient_staggered_diagonals(&values, 0).unwrap();
    assert!(assemble_weighted_global_1d(&l.mass, &c, &assembly_binary(3).unwrap()).is_err());
}

#[test]
fn identity_weights_reduce_to_plain_assembly() {
    let n = 5;
    let l = local_matrices(0.2).unwrap();
    let b = assembly_binary(n).unwrap();
    let id = Matrix::identity(2 * n, 2 * n);
    for kind in [Kind::Mass, Kind::Stiffness, Kind::Derivative] {
        let w = l.weighted(kind);
        let a = assemble_weighted_global_1d(l.plain(kind), &id, &b).unwrap();
        assert!((a - assemble_global_1d(l.plain(kind), n).unwrap()).amax() < 1e-14);
        let c = 3.5;
        let vals = vec![c; n + 1];
        let mut sum = Matrix::zeros(n + 1, n + 1);
        for p in 0..2 {
            let cp = coefficient_staggered_diagonals(&vals, p).unwrap();
            sum += assemble_weighted_global_1d(&w[p], &cp, &b).unwrap();
        }
        assert!((sum - plain_global(&l, kind, n) * c).amax() < 1e-13);
    }
}

#[test]
fn grid_index_sets() {
    let g = Grid::unit(6, 3, true).unwrap();
    assert_eq!(g.node_counts(), vec![7, 7, 7, 7]);
    assert_eq!(g.interior_counts(), vec![5, 5, 5, 6]);
    assert_eq!(g.interior_ranges()[3], 1..7);
    let a = g.space[0];
    let nodes = a.nodes();
    for w in nodes.windows(2) {
        assert!((w[1] - w[0] - a.h()).abs() < 1e-12);
    }
    assert_eq!(nodes[6], 1.0);
    assert!(Grid::unit(1, 3, false).unwrap().check().is_err());
}
