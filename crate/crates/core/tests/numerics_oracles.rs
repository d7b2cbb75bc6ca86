mod common;

use common::{from_na, max_abs_diff, random_matrix, random_pd, to_na};
use ici_core::numerics::{
    cholesky, dominant_singular_triplet, inner, invert_lower_triangular, matrix_norms, spectral_norm, vec_norm,
    ComplexMatrix, NumericsError, C64,
};
use ici_core::random::rng_from_seed;
use proptest::prelude::*;

#[test]
fn cholesky_matches_nalgebra() {
    let mut rng = rng_from_seed(11);
    for n in [1, 2, 3, 4, 8] {
        for _ in 0..20 {
            let r = random_pd(&mut rng, n, 0.1);
            let ours = cholesky(&r).unwrap();
            let theirs = from_na(&to_na(&r).cholesky().expect("pd").l());
            assert!(max_abs_diff(&ours, &theirs) < 1e-10 * r.frobenius_norm().max(1.0), "n = {n}");
        }
    }
}

#[test]
fn triangular_inverse_matches_nalgebra() {
    let mut rng = rng_from_seed(12);
    for n in [1, 3, 6] {
        let l = cholesky(&random_pd(&mut rng, n, 0.5)).unwrap();
        let ours = invert_lower_triangular(&l).unwrap();
        let theirs = from_na(&to_na(&l).try_inverse().unwrap());
        assert!(max_abs_diff(&ours, &theirs) < 1e-10);
    }
}

#[test]
fn dominant_triplet_matches_nalgebra_svd() {
    let mut rng = rng_from_seed(13);
    for (r, c) in [(4, 8), (8, 4), (3, 3), (1, 5), (5, 1)] {
        for _ in 0..10 {
            let h = random_matrix(&mut rng, r, c);
            let svd = to_na(&h).svd(true, true);
            let (imax, smax) = svd.singular_values.iter().enumerate().fold((0, 0.0), |b, (i, s)| if *s > b.1 { (i, *s) } else { b });
            let t = dominant_singular_triplet(&h).unwrap();
            assert!((t.sigma - smax).abs() < 1e-9 * smax);
            // right vectors agree up to a unit phase
            let v_t = svd.v_t.as_ref().unwrap();
            let v: Vec<C64> = (0..c).map(|j| C64::new(v_t[(imax, j)].re, -v_t[(imax, j)].im)).collect();
            assert!((inner(&v, &t.right).norm() - 1.0).abs() < 1e-8);
            let hv = h.mul_vec(&t.right);
            let sl: Vec<C64> = t.left.iter().map(|z| z * t.sigma).collect();
            assert!(hv.iter().zip(&sl).all(|(a, b)| (a - b).norm() < 1e-8 * smax));
        }
    }
}

#[test]
fn spectral_norm_matches_nalgebra() {
    let mut rng = rng_from_seed(14);
    for _ in 0..30 {
        let a = random_matrix(&mut rng, 4, 4);
        let s = to_na(&a).singular_values().max();
        assert!((spectral_norm(&a) - s).abs() < 1e-9 * s);
    }
}

#[test]
fn cholesky_error_cases() {
    assert!(matches!(cholesky(&ComplexMatrix::zeros(2, 3)), Err(NumericsError::NotSquare { .. })));
    let mut a = ComplexMatrix::identity(2);
    a[(0, 1)] = C64::new(1.0, 0.0);
    assert!(matches!(cholesky(&a), Err(NumericsError::NotHermitian(_))));
    assert!(cholesky(&ComplexMatrix::from_real_diagonal(&[1.0, -1.0])).is_err());
    assert!(matches!(dominant_singular_triplet(&ComplexMatrix::zeros(2, 2)), Err(NumericsError::ZeroMatrix)));
}

fn pd_strategy() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 1usize..7)
}

proptest! {
    #[test]
    fn cholesky_reconstructs((seed, n) in pd_strategy()) {
        let r = random_pd(&mut rng_from_seed(seed), n, 0.2);
        let l = cholesky(&r).unwrap();
        prop_assert!(l.is_lower_triangular());
        for i in 0..n {
            prop_assert!(l[(i, i)].re > 0.0 && l[(i, i)].im == 0.0);
        }
        prop_assert!(max_abs_diff(&l.matmul(&l.adjoint()), &r) <= 1e-10 * r.frobenius_norm());
    }

    #[test]
    fn norm_ordering(seed in any::<u64>(), r in 1usize..6, c in 1usize..6) {
        let a = random_matrix(&mut rng_from_seed(seed), r, c);
        let n = matrix_norms(&a);
        prop_assert!(n.spectral <= n.frobenius);
        prop_assert!(n.frobenius <= (r.min(c) as f64).sqrt() * n.spectral * (1.0 + 1e-9));
    }

    #[test]
    fn singular_vectors_are_unit(seed in any::<u64>(), r in 1usize..6, c in 1usize..6) {
        let t = dominant_singular_triplet(&random_matrix(&mut rng_from_seed(seed), r, c)).unwrap();
        prop_assert!((vec_norm(&t.right) - 1.0).abs() < 1e-12);
        prop_assert!((vec_norm(&t.left) - 1.0).abs() < 1e-12);
    }
}
