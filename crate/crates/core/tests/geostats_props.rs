use geohall_core::corpus::{build_dataset, Block, Corpus, DatasetSpec};
use geohall_core::geostats::{attention_score, gram_spectrum, hidden_score, matrix_entropy, stats_profile, Statistic};
use geohall_core::mocklm::{mock_extract, MockConfig};
use geohall_core::trace::{Matrix, PayloadKind};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(max_m: usize, max_d: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_m, 1..=max_d).prop_flat_map(|(m, d)| {
        prop::collection::vec(-10.0f64..10.0, m * d).prop_map(move |v| Matrix::new(m, d, v).unwrap())
    })
}

fn full_rank(max_m: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_m).prop_flat_map(|m| {
        let d = 2 * m + 2;
        prop::collection::vec(-1.0f64..1.0, m * d).prop_map(move |v| Matrix::new(m, d, v).unwrap())
    })
}

fn hs_me(h: &Matrix) -> (f64, f64) {
    let s = gram_spectrum(h, PayloadKind::Hidden).unwrap();
    (hidden_score(&s, h.rows()).unwrap().0, matrix_entropy(&s).unwrap())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

proptest! {
    #[test]
    fn row_permutation_invariance(h in matrix(10, 12), rot in 0usize..10) {
        let m = h.rows();
        let rows: Vec<&[f64]> = (0..m).map(|i| h.row((i + rot) % m)).rev().collect();
        let p = Matrix::from_rows(&rows).unwrap();
        let (a, b) = (hs_me(&h), hs_me(&p));
        prop_assert!(close(a.0, b.0, 1e-9) && close(a.1, b.1, 1e-9), "{a:?} vs {b:?}");
    }

    #[test]
    fn column_rotation_invariance(h in matrix(8, 10), seed in prop::collection::vec(-1.0f64..1.0, 100)) {
        let d = h.cols();
        let q = DMatrix::from_row_slice(d, d, &seed[..d * d]).qr().q();
        let hq = DMatrix::from_row_slice(h.rows(), d, h.data()) * q;
        let rotated = Matrix::new(h.rows(), d, hq.transpose().as_slice().to_vec()).unwrap();
        let (a, b) = (hs_me(&h), hs_me(&rotated));
        prop_assert!(close(a.0, b.0, 1e-8) && close(a.1, b.1, 1e-8), "{a:?} vs {b:?}");
    }

    #[test]
    fn entropy_bounds(h in matrix(12, 12)) {
        let (_, me) = hs_me(&h);
        prop_assert!(me >= 0.0 && me <= (h.rows() as f64).ln() + 1e-12);
    }

    #[test]
    fn hs_is_scaled_log_det(h in full_rank(10)) {
        let m = h.rows();
        let hm = DMatrix::from_row_slice(m, h.cols(), h.data());
        let chol = (&hm * hm.transpose()).cholesky().unwrap();
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let lu_det = (&hm * hm.transpose()).lu().determinant().ln();
        let (hs, _) = hs_me(&h);
        prop_assert!(close(hs, log_det / m as f64, 1e-9), "{hs} vs {}", log_det / m as f64);
        prop_assert!(close(hs, lu_det / m as f64, 1e-9));
    }

    #[test]
    fn attention_score_bounds(diag in prop::collection::vec(1e-6f64..=1.0, 1..64)) {
        let n = diag.len();
        let expected = diag.iter().map(|v| v.ln()).sum::<f64>() / n as f64;
        let (score, flags) = attention_score(&Matrix::new(1, n, diag).unwrap()).unwrap();
        prop_assert!(score <= 0.0 && close(score, expected, 1e-12) && flags.is_empty());
    }
}

#[test]
fn rank_deficient_layers_set_the_clamp_flag() {
    let h = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0], &[0.5, 1.0]]).unwrap();
    let s = gram_spectrum(&h, PayloadKind::Hidden).unwrap();
    let (hs, flags) = hidden_score(&s, 3).unwrap();
    assert!(flags.clamped_eigenvalues);
    let lmax: f64 = 1.0 + 4.0 + 4.0 + 16.0 + 0.25 + 1.0;
    let expected = (lmax.ln() + 2.0 * (1e-12 * lmax).ln()) / 3.0;
    assert!(close(hs, expected, 1e-9), "{hs} vs {expected}");
}

#[test]
fn hidden_and_gram_payloads_agree_on_mock_traces() {
    let ds = build_dataset(
        &DatasetSpec {
            domains: vec![Block::History, Block::Counting],
            ..DatasetSpec::default()
        },
        &Corpus::bundled(0).unwrap(),
    )
    .unwrap();
    let config = MockConfig::default();
    for r in ds.records.iter().step_by(97) {
        let hidden = mock_extract(r, &config).unwrap();
        let gram = hidden.to_gram();
        for stat in [Statistic::Hs, Statistic::Me] {
            let a = stats_profile(&hidden, stat, None).unwrap();
            let b = stats_profile(&gram, stat, None).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() <= 1e-6, "{} {stat}: {x} vs {y}", r.record_id);
            }
        }
    }
}
