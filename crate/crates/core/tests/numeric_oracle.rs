//! Wrapping and checked arithmetic against an arbitrary-precision oracle.

mod common;

use common::{check_arith, from_big};
use exploitlab_core::numeric::{wrap_arith, ArithKind, UInt};
use num_bigint::BigUint;
use proptest::prelude::*;

fn operand(width: u16) -> impl Strategy<Value = UInt> {
    let random = prop::array::uniform4(any::<u64>()).prop_map(move |limbs| {
        let mut v = BigUint::from_slice(&[
            limbs[0] as u32,
            (limbs[0] >> 32) as u32,
            limbs[1] as u32,
            (limbs[1] >> 32) as u32,
            limbs[2] as u32,
            (limbs[2] >> 32) as u32,
            limbs[3] as u32,
            (limbs[3] >> 32) as u32,
        ]);
        v %= BigUint::from(1u8) << width as usize;
        from_big(width, &v)
    });
    let edges = (0u32..width as u32, 0u8..4).prop_map(move |(bit, which)| match which {
        0 => UInt::zero(width).unwrap(),
        1 => UInt::max_value(width).unwrap(),
        2 => UInt::pow2(width, bit).unwrap(),
        _ => UInt::pow2(width, width as u32 - 1).unwrap(),
    });
    prop_oneof![3 => random, 1 => edges]
}

fn case() -> impl Strategy<Value = (ArithKind, UInt, UInt)> {
    (1u16..=32, prop::sample::select(ArithKind::ALL.to_vec()))
        .prop_flat_map(|(w, kind)| (Just(kind), operand(w * 8), operand(w * 8)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn matches_arbitrary_precision((kind, a, b) in case()) {
        check_arith(kind, a, b).map_err(TestCaseError::fail)?;
        let back = wrap_arith(ArithKind::Sub, wrap_arith(ArithKind::Add, a, b).unwrap(), b).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn text_round_trip(v in (1u16..=32).prop_flat_map(|w| operand(w * 8))) {
        prop_assert_eq!(UInt::parse(v.width(), &v.to_string()).unwrap(), v);
        prop_assert_eq!(UInt::parse(v.width(), &v.to_hex()).unwrap(), v);
        prop_assert_eq!(v.to_hex().len(), 2 + v.width() as usize / 4);
    }
}

#[test]
fn identity_add_zero() {
    for x in [0u128, 1, 42, u128::MAX] {
        let v = UInt::u256(x);
        assert_eq!(wrap_arith(ArithKind::Add, UInt::u256(0), v).unwrap(), v);
    }
}
