use std::path::Path;

use geohall::ght::{decode, encode, Dtype};
use geohall::Error;
use proptest::prelude::*;

fn tensor() -> impl Strategy<Value = (Vec<u64>, Vec<f32>)> {
    prop::collection::vec(1u64..6, 1..4).prop_flat_map(|dims| {
        let n = dims.iter().product::<u64>() as usize;
        (Just(dims), prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), n))
    })
}

proptest! {
    #[test]
    fn f32_round_trip_is_bitwise((dims, values) in tensor()) {
        let p = Path::new("t.ght");
        let data: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
        let bytes = encode(p, Dtype::F32, &dims, &data).unwrap();
        prop_assert_eq!(bytes.len(), 12 + 8 * dims.len() + 4 * data.len());
        let t = decode(p, &bytes, Some(&dims)).unwrap();
        prop_assert_eq!(t.dtype, Dtype::F32);
        prop_assert_eq!(&t.dims, &dims);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&t.data), bits(&data));
    }

    #[test]
    fn f16_values_survive_f16_storage(dims in prop::collection::vec(1u64..5, 1..3), seed in any::<u64>()) {
        let n = dims.iter().product::<u64>() as usize;
        let data: Vec<f64> = (0..n as u64)
            .map(|i| half::f16::from_bits(((seed >> (i % 48)) as u16 ^ i as u16) & 0x7bff).to_f64())
            .collect();
        let p = Path::new("t.ght");
        let t = decode(p, &encode(p, Dtype::F16, &dims, &data).unwrap(), None).unwrap();
        prop_assert_eq!(t.data, data);
    }

    #[test]
    fn any_truncation_is_detected((dims, values) in tensor(), cut in 1usize..64) {
        let p = Path::new("t.ght");
        let data: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
        let bytes = encode(p, Dtype::F32, &dims, &data).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode(p, &bytes[..keep], None).is_err());
    }
}

#[test]
fn trailing_bytes_are_rejected() {
    let p = Path::new("t.ght");
    let mut bytes = encode(p, Dtype::F32, &[2], &[1.0, 2.0]).unwrap();
    bytes.push(0);
    assert!(matches!(decode(p, &bytes, None), Err(Error::TrailingBytes { .. })));
}
