mod common;

use common::*;
use llb_core::linalg::{norm2, solve_banded, solve_bicgstab, solve_cg, CooBuilder, CsrMatrix, LinalgError, Precond};
use llb_core::model::{CurrentField, LlbParams};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn recomputed_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let dense = a.to_dense();
    let ax = dense_matvec(&dense, x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    norm2(&r) / norm2(b)
}

#[test]
fn insertion_order_does_not_change_the_csr_arrays() {
    let mut r = rng(1);
    let mut triples: Vec<(usize, usize, f64)> = (0..400)
        .map(|_| (r.gen_range(0..15), r.gen_range(0..12), r.gen_range(-1.0..1.0)))
        .collect();
    // Repeat some positions so duplicate summing is exercised.
    let dupes: Vec<_> = triples[..100]
        .iter()
        .map(|&(i, j, _)| (i, j, r.gen_range(-1.0..1.0)))
        .collect();
    triples.extend(dupes);
    let build = |ts: &[(usize, usize, f64)]| {
        let mut coo = CooBuilder::new(15, 12);
        for &(i, j, v) in ts {
            coo.push(i, j, v);
        }
        coo.finalize().unwrap()
    };
    let mut sorted = triples.clone();
    sorted.sort_by_key(|a| (a.0, a.1));
    let reference = build(&sorted);
    reference.check_invariants().unwrap();
    for _ in 0..5 {
        triples.shuffle(&mut r);
        let a = build(&triples);
        assert_eq!(a.row_ptr(), reference.row_ptr());
        assert_eq!(a.col_idx(), reference.col_idx());
        assert_eq!(a.values(), reference.values());
    }
}

#[test]
fn finalize_rejects_out_of_range_indices() {
    let mut coo = CooBuilder::new(2, 2);
    coo.push(2, 0, 1.0);
    assert!(matches!(
        coo.finalize(),
        Err(LinalgError::IndexOutOfRange { row: 2, .. })
    ));
}

#[test]
fn spmv_matches_dense_oracle() {
    let mut r = rng(2);
    for _ in 0..10 {
        let mut coo = CooBuilder::new(20, 20);
        for _ in 0..80 {
            coo.push(r.gen_range(0..20), r.gen_range(0..20), r.gen_range(-5.0..5.0));
        }
        let a = coo.finalize().unwrap();
        let x = random_vec(&mut r, 20);
        let y = a.spmv(&x).unwrap();
        let oracle = dense_matvec(&a.to_dense(), &x);
        let bound = 1e-13 * a.norm_frobenius() * norm2(&x);
        assert!(max_abs_diff(&y, &oracle) <= bound);
    }
    let a = CsrMatrix::from_dense(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
    assert_eq!(a.spmv(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
    assert!(matches!(a.spmv(&[1.0]), Err(LinalgError::DimensionMismatch { .. })));
}

#[test]
fn cg_on_small_manufactured_systems() {
    let b = [0.5, -2.0, 3.0];
    let (x, stats) = solve_cg(&CsrMatrix::identity(3), &b, 1e-12, 30, Precond::None).unwrap();
    assert_eq!(x, b.to_vec());
    assert!(stats.converged && stats.iterations <= 1);

    let diag: Vec<Vec<f64>> = (0..5)
        .map(|i| (0..5).map(|j| if i == j { (i + 1) as f64 } else { 0.0 }).collect())
        .collect();
    let a = CsrMatrix::from_dense(&diag).unwrap();
    let (x, stats) = solve_cg(&a, &[1.0; 5], 1e-12, 50, Precond::None).unwrap();
    assert!(stats.converged);
    for (i, xi) in x.iter().enumerate() {
        assert!((xi - 1.0 / (i + 1) as f64).abs() < 1e-12);
    }
}

#[test]
fn cg_recovers_ones_from_the_mass_matrix() {
    let space = unit_space(4);
    let m = &space.ops().mass;
    let n = m.n_rows();
    let b = m.spmv(&vec![1.0; n]).unwrap();
    for precond in [Precond::None, Precond::Jacobi] {
        let (x, stats) = solve_cg(m, &b, 1e-12, 10 * n, precond).unwrap();
        assert!(stats.converged);
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let independent = recomputed_residual(m, &x, &b);
        assert!((independent - stats.final_relative_residual).abs() < 1e-12);
    }
}

#[test]
fn bicgstab_on_small_systems() {
    let (x, _) = solve_bicgstab(
        &CsrMatrix::identity(4),
        &[1.0, 2.0, 3.0, 4.0],
        1e-12,
        10,
        Precond::Jacobi,
    )
    .unwrap();
    assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0]);
    let a = CsrMatrix::from_dense(&[vec![2.0, -1.0], vec![1.0, 2.0]]).unwrap();
    let (x, stats) = solve_bicgstab(&a, &[1.0, 3.0], 1e-12, 20, Precond::None).unwrap();
    assert!(stats.converged);
    assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
}

#[test]
fn step_matrix_solves_agree_with_dense_lu() {
    let space = unit_space(4);
    let n = space.num_nodes();
    let mut r = rng(7);
    let phi = random_field(&mut r, n);
    let p = busy_params();
    let a = space.assemble_linear_scheme_matrix(&p, &phi, &CurrentField::Constant { vector: [1.0, 0.5] }, 0.0, 0.1);
    let b = random_vec(&mut r, 3 * n);
    let oracle = dense_solve(&a.to_dense(), &b);
    let scale = norm2(&oracle);
    for precond in [Precond::None, Precond::Jacobi, Precond::BlockJacobi3] {
        let (x, stats) = solve_bicgstab(&a, &b, 1e-12, 30 * n, precond).unwrap();
        assert!(stats.converged, "{precond:?}");
        assert!(max_abs_diff(&x, &oracle) <= 1e-8 * scale, "{precond:?}");
        let independent = recomputed_residual(&a, &x, &b);
        assert!((independent - stats.final_relative_residual).abs() < 1e-12);
    }
    let (x, stats) = solve_banded(&a, &b, 1e-12).unwrap();
    assert!(stats.converged);
    assert!(max_abs_diff(&x, &oracle) <= 1e-10 * scale);
}

#[test]
fn repeated_solves_are_bit_identical() {
    let space = unit_space(5);
    let n = space.num_nodes();
    let mut r = rng(9);
    let phi = random_field(&mut r, n);
    let a = space.assemble_linear_scheme_matrix(&LlbParams::unit(), &phi, &CurrentField::Zero, 0.0, 0.01);
    let b = random_vec(&mut r, 3 * n);
    let first = solve_bicgstab(&a, &b, 1e-10, 1000, Precond::Jacobi).unwrap();
    let second = solve_bicgstab(&a, &b, 1e-10, 1000, Precond::Jacobi).unwrap();
    assert_eq!(first.0, second.0);
    assert_eq!(first.1, second.1);
}

proptest! {
    #[test]
    fn csr_invariants_hold_for_arbitrary_triples(
        triples in prop::collection::vec((0usize..8, 0usize..8, -10.0f64..10.0), 0..60)
    ) {
        let mut coo = CooBuilder::new(8, 8);
        let mut dense = vec![vec![0.0; 8]; 8];
        for &(i, j, v) in &triples {
            coo.push(i, j, v);
            dense[i][j] += v;
        }
        let a = coo.finalize().unwrap();
        prop_assert!(a.check_invariants().is_ok());
        for (i, row) in dense.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                prop_assert!((a.get(i, j) - v).abs() < 1e-12);
            }
        }
    }
}
