use mblflow_core::liom::extract_diagonal_couplings;
use mblflow_core::oracle;
use mblflow_core::pauli::{DiagFn, Interval, OperatorSum, Parity, XMonomial, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;

mod common;
use common::reference_dense;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

prop_compose! {
    fn monomial(chain_len: usize)(
        active in 0u64..1 << chain_len,
        lo in 0..chain_len,
        len in 1..=chain_len,
        values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << chain_len),
    ) -> (u64, DiagFn) {
        let hi = (lo + len - 1).min(chain_len - 1);
        let support = Interval::new(lo, hi);
        let mut i = 0;
        let f = DiagFn::from_fn(support, |_| { i += 1; c(values[i - 1].0, values[i - 1].1) });
        (active, f)
    }
}

fn pair() -> impl Strategy<Value = (usize, (u64, DiagFn), (u64, DiagFn))> {
    (2usize..=4).prop_flat_map(|l| (Just(l), monomial(l), monomial(l)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn monomial_matches_kronecker_assembly((l, (sa, fa), _) in pair()) {
        let m = XMonomial::new(l, sa, fa.clone()).unwrap();
        prop_assert!(oracle::max_abs_diff(&m.to_dense(), &reference_dense(l, sa, &fa)) < 1e-14);
    }

    #[test]
    fn product_matches_dense((l, (sa, fa), (sb, fb)) in pair()) {
        let a = XMonomial::new(l, sa, fa.clone()).unwrap();
        let b = XMonomial::new(l, sb, fb.clone()).unwrap();
        let want = reference_dense(l, sa, &fa) * reference_dense(l, sb, &fb);
        prop_assert!(oracle::max_abs_diff(&a.multiply(&b).unwrap().to_dense(), &want) < 1e-12);
    }

    #[test]
    fn commutator_matches_dense((l, (sa, fa), (sb, fb)) in pair()) {
        let a = XMonomial::new(l, sa, fa.clone()).unwrap();
        let b = XMonomial::new(l, sb, fb.clone()).unwrap();
        let (da, db) = (reference_dense(l, sa, &fa), reference_dense(l, sb, &fb));
        let want = &da * &db - &db * &da;
        let got = a.commutator(&b).unwrap().map_or_else(|| DMatrix::zeros(1 << l, 1 << l), |m| m.to_dense());
        prop_assert!(oracle::max_abs_diff(&got, &want) < 1e-12);
    }

    #[test]
    fn adjoint_matches_dense((l, (sa, fa), _) in pair()) {
        let a = XMonomial::new(l, sa, fa).unwrap();
        prop_assert!(oracle::max_abs_diff(&a.adjoint().to_dense(), &a.to_dense().adjoint()) < 1e-15);
    }

    #[test]
    fn dense_decomposition_round_trips((l, (sa, fa), (sb, fb)) in pair()) {
        let a = XMonomial::new(l, sa, fa).unwrap();
        let b = XMonomial::new(l, sb, fb).unwrap();
        let m = a.to_dense() + b.to_dense();
        let back = OperatorSum::from_dense(l, &m, Parity::None).unwrap();
        prop_assert!(oracle::max_abs_diff(&back.to_dense(), &m) < 1e-13);
    }

    #[test]
    fn sum_commutator_is_bilinear_and_antisymmetric((l, (sa, fa), (sb, fb)) in pair()) {
        let a = OperatorSum::from_monomials(l, Parity::None, [XMonomial::new(l, sa, fa).unwrap()]).unwrap();
        let b = OperatorSum::from_monomials(l, Parity::None, [XMonomial::new(l, sb, fb).unwrap()]).unwrap();
        let ab = OperatorSum::commutator(&a, &b).unwrap().to_dense();
        let ba = OperatorSum::commutator(&b, &a).unwrap().to_dense();
        prop_assert!(oracle::max_abs_diff(&ab, &(-ba)) < 1e-13);
        let a2 = a.scale_real(2.5);
        let ab2 = OperatorSum::commutator(&a2, &b).unwrap().to_dense();
        prop_assert!(oracle::max_abs_diff(&ab2, &(ab * c(2.5, 0.0))) < 1e-12);
    }

    #[test]
    fn flip_derivative_is_conjugation_difference((l, (_, f), s) in (2usize..=4).prop_flat_map(|l| (Just(l), monomial(l), 0u64..1 << l))) {
        let f = OperatorSum::from_monomials(l, Parity::None, [XMonomial::new(l, 0, f).unwrap()]).unwrap();
        let d = OperatorSum::spin_flip_derivative(s, &f).unwrap().to_dense();
        let xs = XMonomial::new(l, s, DiagFn::one()).unwrap().to_dense();
        let fd = f.to_dense();
        let want = &xs * &fd * &xs - &fd;
        prop_assert!(oracle::max_abs_diff(&d, &want) < 1e-13);
    }

    #[test]
    fn diagonal_expansion_reassembles(l in 1usize..=6, values in prop::collection::vec(-2.0f64..2.0, 64)) {
        let f = DiagFn::from_real_fn(Interval::new(0, l - 1), |b| values[b as usize]);
        let e = OperatorSum::from_monomials(l, Parity::Hermitian, [XMonomial::new(l, 0, f.clone()).unwrap()]).unwrap();
        let d = extract_diagonal_couplings(&e).unwrap();
        let back = d.reassemble();
        let gap = back.zip_with(&f, |a, b| a - b).max_abs();
        prop_assert!(gap < 1e-12);
        let mean_sq = f.table().iter().map(|v| v.norm_sqr()).sum::<f64>() / f.table().len() as f64;
        prop_assert!((d.sum_of_squares() - mean_sq).abs() < 1e-12);
        // constant term is the trace average
        let avg = f.table().iter().map(|v| v.re).sum::<f64>() / f.table().len() as f64;
        prop_assert!((d.coupling(0) - avg).abs() < 1e-12);
    }
}

#[test]
fn jacobi_identity_on_random_sums() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let l = 4;
    let rand_sum = |rng: &mut rand_chacha::ChaCha8Rng| {
        let terms: Vec<XMonomial> = (0..3)
            .map(|_| {
                let lo = rng.random_range(0..l);
                let hi = rng.random_range(lo..l);
                let f = DiagFn::from_fn(Interval::new(lo, hi), |_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                XMonomial::new(l, rng.random_range(0..16), f).unwrap()
            })
            .collect();
        OperatorSum::from_monomials(l, Parity::None, terms).unwrap()
    };
    for _ in 0..20 {
        let (a, b, d) = (rand_sum(&mut rng), rand_sum(&mut rng), rand_sum(&mut rng));
        let com = |x: &OperatorSum, y: &OperatorSum| OperatorSum::commutator(x, y).unwrap();
        let j = com(&a, &com(&b, &d)).add(&com(&b, &com(&d, &a))).unwrap().add(&com(&d, &com(&a, &b))).unwrap();
        assert!(oracle::max_abs(&j.to_dense()) < 1e-12);
    }
}

#[test]
fn dense_basis_convention_matches_embedding() {
    // site 0 is the most significant tensor factor
    let l = 3;
    let z0 = XMonomial::z(l, 0).to_dense();
    let zl = DMatrix::from_row_slice(2, 2, &[c(-1., 0.), c(0., 0.), c(0., 0.), c(1., 0.)]);
    let want = zl.kronecker(&DMatrix::identity(4, 4));
    assert!(oracle::max_abs_diff(&z0, &want) < 1e-15);
}
