use gibbslab::convexity::{
    convexity_falsify, expected_alpha_minus_j_tensor, interpolation_decomposition_holds, interpolation_vector,
    min_alpha_psd, multilinear_form, partition_kernel_classify, shifted_min_eigenvalue, tensor_product, Block,
    Expectation, FalsifyOptions, KArray, KernelForm, PsdCertificate,
};
use gibbslab::model::{build_model, params};
use gibbslab::SeedStream;
use nalgebra::DMatrix;
use num_rational::Rational64;
use num_traits::Zero;
use proptest::prelude::*;

fn psd_matrix(n: usize, raw: &[f64]) -> DMatrix<f64> {
    let g = DMatrix::from_row_slice(n, n, &raw[..n * n]);
    &g * g.transpose()
}

fn as_karray(m: &DMatrix<f64>) -> KArray<f64> {
    let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    KArray::from_matrix(&rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tensor_product_of_psd_factors_is_convex(
        a in prop::collection::vec(-1.0f64..1.0, 9),
        b in prop::collection::vec(-1.0f64..1.0, 9),
        seed in any::<u64>(),
    ) {
        let product = tensor_product(&[as_karray(&psd_matrix(3, &a)), as_karray(&psd_matrix(3, &b))]).unwrap();
        let outcome = convexity_falsify(&product, &FalsifyOptions::full_space(2000), SeedStream::new(seed)).unwrap();
        prop_assert!(!outcome.is_violation(), "{outcome:?}");
    }

    #[test]
    fn partition_form_kernels_certify_at_one(labels in prop::collection::vec(0usize..4, 2..7)) {
        let n = labels.len();
        let in_class = |x: usize| labels[x] < 3;
        let j = DMatrix::from_fn(n, n, |x, y| if in_class(x) && labels[x] == labels[y] { 0.0 } else { 1.0 });
        let form = partition_kernel_classify(&j).unwrap();
        prop_assert!(matches!(form, KernelForm::PartitionForm { .. }), "{form:?}");
        let cert = min_alpha_psd(&j, 1.0).unwrap();
        prop_assert_eq!(cert.alpha(), Some(1.0));
        prop_assert!(shifted_min_eigenvalue(&j, 1.0) >= -cert.tol);
    }

    #[test]
    fn certificates_respect_their_invariants(raw in prop::collection::vec(-2.0f64..2.0, 16), n in 2usize..5) {
        let a = DMatrix::from_row_slice(4, 4, &raw);
        let sym = (&a + a.transpose()) / 2.0;
        let j = sym.view((0, 0), (n, n)).into_owned();
        let j_max = j.max();
        let cert = min_alpha_psd(&j, j_max).unwrap();
        if let Some(alpha) = cert.alpha() {
            prop_assert!(alpha >= j_max);
            prop_assert!(shifted_min_eigenvalue(&j, alpha) >= -cert.tol);
        }
        let json = serde_json::to_string(&cert).unwrap();
        let back: PsdCertificate<f64> = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, cert);
    }

    #[test]
    fn quadratic_form_matches_matrix_product(raw in prop::collection::vec(-1.0f64..1.0, 9), y in prop::collection::vec(-2.0f64..2.0, 3)) {
        let m = DMatrix::from_row_slice(3, 3, &raw);
        let v = nalgebra::DVector::from_column_slice(&y);
        let want = (v.transpose() * &m * &v)[(0, 0)];
        let got = multilinear_form(&as_karray(&m), &y).unwrap();
        prop_assert!((want - got).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}

#[test]
fn viana_bray_even_arity_has_no_orthant_violation() {
    for k in [2usize, 4] {
        let model = build_model("viana_bray", &params([("k", k as f64), ("beta", 0.8), ("h", 1.0)])).unwrap();
        let alpha = model.soft.j_max;
        for r in 1..=3usize {
            for n in 1..=3usize {
                let rows = all_rows(r, n);
                let stride = rows.len().div_ceil(24);
                for (i, x_rows) in rows.iter().enumerate().step_by(stride) {
                    let tensor = expected_alpha_minus_j_tensor(&model, alpha, x_rows, &Expectation::Exact).unwrap();
                    let outcome = convexity_falsify(
                        &tensor,
                        &FalsifyOptions::orthant(300),
                        SeedStream::new((k * 100 + r * 10 + n) as u64).child(i as u64),
                    )
                    .unwrap();
                    assert!(!outcome.is_violation(), "K={k} r={r} n={n} rows={x_rows:?}: {outcome:?}");
                }
            }
        }
    }
}

fn all_rows(r: usize, n: usize) -> Vec<Vec<Vec<usize>>> {
    let total = 1usize << (r * n);
    (0..total)
        .map(|code| (0..r).map(|l| (0..n).map(|i| (code >> (l * n + i)) & 1).collect()).collect())
        .collect()
}

#[test]
fn interpolation_vectors_decompose() {
    for n in 2..=6 {
        for n1 in 1..n {
            for r in 1..=3 {
                assert!(interpolation_decomposition_holds(n, n1, r).unwrap(), "n={n} n1={n1} r={r}");
            }
        }
    }
}

#[test]
fn interpolation_vectors_are_diagonal_probability_vectors() {
    for (n, r) in [(3usize, 2usize), (4, 3), (5, 1)] {
        for block in [Block::Global, Block::Part { j: 1, n1: 1 }, Block::Part { j: 2, n1: 1 }] {
            let v = interpolation_vector(n, r, block).unwrap();
            let mut sum = Rational64::zero();
            for (idx, e) in v.entries.iter().enumerate() {
                assert!(*e >= Rational64::zero());
                let digits: Vec<usize> = (0..r).map(|l| idx / n.pow(l as u32) % n).collect();
                if !e.is_zero() {
                    assert!(digits.iter().all(|&d| d == digits[0]), "off-diagonal mass at {digits:?}");
                }
                sum += e;
            }
            assert_eq!(sum, Rational64::from_integer(1));
        }
    }
}
