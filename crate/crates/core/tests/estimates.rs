use algstab::mat::{c64, from_real_rows, identity, mat_pow, opnorm};
use algstab::nilpotent::{build_chain, truncate_to_nilpotent, ChainOptions};
use algstab::normest::{estimate_norm, sample_representation, Letter, NcPoly, NcWord, SampleOptions};
use algstab::random::{derive_seed, haar_unitary, rng, unit_noise};
use algstab::seqmodel::{compact_correct, essential_norm, rfd_compress, CalkinOptions, MatSeq, TailModel};
use algstab::{Mat, Polynomial};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = NcWord> {
    prop::collection::vec(prop_oneof![Just(Letter::X), Just(Letter::XStar)], 0..4).prop_map(NcWord)
}

fn nc_poly() -> impl Strategy<Value = NcPoly> {
    let coeff = (-3i32..=3, -3i32..=3).prop_map(|(a, b)| c64(a as f64 * 0.5, b as f64 * 0.5));
    prop::collection::vec((coeff, word()), 1..4).prop_map(|terms| NcPoly { terms })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printed_polynomials_parse_back(q in nc_poly(), seed: u64) {
        let text = q.to_string();
        let back: NcPoly = text.parse().map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        let x = unit_noise(3, &mut rng(seed));
        let diff = opnorm(&(q.eval(&x) - back.eval(&x)));
        prop_assert!(diff < 1e-12, "{text}");
    }

    #[test]
    fn estimates_respect_coefficient_bound(q in nc_poly(), seed in 0u64..1000) {
        let p = Polynomial::from_real(&[(0.0, 2)]).unwrap();
        let est = estimate_norm(&q, &p, &[2, 3], 4, seed, &SampleOptions::default()).unwrap();
        prop_assert!(est.lower_bound <= q.coefficient_bound(1.0) * (1.0 + 1e-9));
        prop_assert!(est.lower_bound <= est.upper_bound * (1.0 + 1e-9));
    }

    #[test]
    fn truncation_recovers_perturbed_nilpotents(k in 2usize..5, dim in 4usize..12, seed: u64) {
        let p = Polynomial::from_real(&[(0.0, k as u32)]).unwrap();
        let exact = sample_representation(&p, dim, seed, &SampleOptions::default()).unwrap().x;
        let eta = 1e-7;
        let x = &exact + unit_noise(dim, &mut rng(derive_seed(seed, &[1]))) * c64(eta, 0.0);
        let chain = build_chain(&x, k, &ChainOptions::default());
        prop_assert!(chain.is_ok(), "{:?} sv {:?}", chain.as_ref().err(), algstab::mat::singular_values(&x));
        let n = truncate_to_nilpotent(&x, &chain.unwrap()).unwrap();
        prop_assert!(opnorm(&mat_pow(&n, k)) <= 1e-11 * opnorm(&x).powi(k as i32));
        prop_assert!(opnorm(&(&n - &x)) <= 1e3 * eta, "moved {}", opnorm(&(&n - &x)));
    }
}

#[test]
fn x_alone_reaches_one_at_dim_two() {
    let p = Polynomial::from_real(&[(0.0, 2)]).unwrap();
    let q: NcPoly = "x".parse().unwrap();
    let est = estimate_norm(&q, &p, &[2], 200, 1, &SampleOptions::default()).unwrap();
    assert!(est.lower_bound > 0.999 && est.lower_bound <= 1.0 + 1e-12);
}

#[test]
fn periodic_sequence_with_vanishing_noise() {
    // alternating exact solutions of t(t − 1) plus noise decaying like 1/k
    let p = Polynomial::from_real(&[(0.0, 1), (1.0, 1)]).unwrap();
    let u = haar_unitary(4, &mut rng(5));
    let proj = |r: usize| {
        let d = Mat::from_fn(4, 4, |i, j| c64(if i == j && i < r { 1.0 } else { 0.0 }, 0.0));
        &u * d * u.adjoint()
    };
    let terms: Vec<Mat> = (1..=40)
        .map(|k| proj(1 + k % 2) + unit_noise(4, &mut rng(k as u64)) * c64(0.05 / k as f64, 0.0))
        .collect();
    let s = MatSeq::new(terms, TailModel::Periodic(2)).unwrap();
    let res = compact_correct(&s, &p, &CalkinOptions::default()).unwrap();
    assert!(res.report.all_exact);
    assert_eq!(res.report.window, 2);
    assert!(res.report.trailing_max_compact < 0.01);
    for t in &res.corrected.terms {
        assert!(opnorm(&(t * t - t)) < 1e-10);
    }
}

#[test]
fn compressions_of_a_unitary_have_unit_essential_norm() {
    let u = haar_unitary(12, &mut rng(3));
    let s = rfd_compress(&u, &(1..=12).collect::<Vec<_>>()).unwrap();
    let est = essential_norm(&s, None).unwrap();
    assert_eq!(est.window, 4);
    assert!((est.value - 1.0).abs() < 1e-12);
    assert!(rfd_compress(&u, &[3, 3]).is_err());
}

#[test]
fn truncation_of_exact_nilpotent_is_identity() {
    let x = from_real_rows(&[&[0.0, 2.0, 1.0], &[0.0, 0.0, 3.0], &[0.0, 0.0, 0.0]]);
    let chain = build_chain(&x, 3, &ChainOptions::default()).unwrap();
    let n = truncate_to_nilpotent(&x, &chain).unwrap();
    assert!(opnorm(&(n - &x)) < 1e-14);
    assert!(opnorm(&(&chain.flag.adjoint() * &chain.flag - identity(3))) < 1e-14);
}
