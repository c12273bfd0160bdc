use dmagt::baselines::*;
use dmagt::tensor::Tensor;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn oracle(values: &[f64], rows: usize, cols: usize, rank: usize) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(rows, cols, values);
    let svd = m.svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = DMatrix::zeros(rows, cols);
    for &k in &order[..rank] {
        out += svd.singular_values[k] * u.column(k) * vt.row(k);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    // Generic random matrices keep the singular values separated at the cut.
    #[test]
    fn truncated_svd_matches_dense_oracle(bits in proptest::collection::vec(any::<bool>(), 48), rank in 1usize..=6, tall in any::<bool>()) {
        let (rows, cols) = if tall { (8, 6) } else { (6, 8) };
        let values: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let want = oracle(&values, rows, cols, rank);
        let sv = DMatrix::from_row_slice(rows, cols, &values).singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(rank == s.len() || s[rank - 1] - s[rank] > 1e-6);
        let m = InteractionMatrix { values: Tensor::matrix(rows, cols, values) };
        let got = svd_mf_score(&m, rank).unwrap();
        for r in 0..rows {
            for c in 0..cols {
                prop_assert!((got.get(r, c) - want[(r, c)]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn fixed_six_by_eight_rank_three() {
    let values: Vec<f64> = (0..48).map(|i| if (i * 7 + i / 5) % 3 == 0 { 1.0 } else { 0.0 }).collect();
    let want = oracle(&values, 6, 8, 3);
    let m = InteractionMatrix { values: Tensor::matrix(6, 8, values) };
    let got = svd_mf_score(&m, 3).unwrap();
    for r in 0..6 {
        for c in 0..8 {
            assert!((got.get(r, c) - want[(r, c)]).abs() < 1e-8);
        }
    }
}

#[test]
fn baselines_are_deterministic() {
    let pairs: Vec<(usize, usize)> = (0..30).map(|i| (i % 6, (i * 5) % 12)).collect();
    for method in [Method::Svd { rank: 3 }, Method::Cf(CfMode::Neighbor)] {
        let a = run_baseline_cv(6, 12, &pairs, 3, 2, method).unwrap();
        let b = run_baseline_cv(6, 12, &pairs, 3, 2, method).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
    }
}
