use geohall_core::eval::auroc;
use proptest::prelude::*;

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![(0i32..6).prop_map(f64::from), -5.0f64..5.0], 1..80)
}

proptest! {
    #[test]
    fn swapping_sides_complements(pos in scores(), neg in scores()) {
        let a = auroc(&pos, &neg).unwrap();
        let b = auroc(&neg, &pos).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn strictly_increasing_maps_preserve_auroc(pos in scores(), neg in scores()) {
        let f = |v: &Vec<f64>| v.iter().map(|x| (x / 3.0).exp() * 7.0 - 2.0).collect::<Vec<_>>();
        prop_assert_eq!(auroc(&pos, &neg).unwrap(), auroc(&f(&pos), &f(&neg)).unwrap());
    }

    #[test]
    fn negation_reverses_orientation(pos in scores(), neg in scores()) {
        let n = |v: &Vec<f64>| v.iter().map(|x| -x).collect::<Vec<_>>();
        let a = auroc(&pos, &neg).unwrap();
        prop_assert!((auroc(&n(&pos), &n(&neg)).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn identical_multisets_give_one_half(v in scores()) {
        prop_assert_eq!(auroc(&v, &v).unwrap(), 0.5);
    }
}

#[test]
fn hand_counted_pairs() {
    assert_eq!(auroc(&[2.0, 3.0], &[0.0, 1.0]).unwrap(), 1.0);
    assert_eq!(auroc(&[0.9, 0.8], &[0.7, 0.85]).unwrap(), 0.75);
    assert!(auroc(&[], &[1.0]).is_err());
    assert!(auroc(&[f64::NAN], &[1.0]).is_err());
}
