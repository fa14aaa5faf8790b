//! Bit-level word primitives shared by both engines.
//!
//! Words are plain `u32` with wrapping arithmetic; bit 0 is the LSB,
//! bit 31 the MSB. Single bits are `u32` values restricted to 0 or 1.

/// Bit `i` of `w`, as 0 or 1. Panics if `i > 31`.
#[inline]
pub fn get_bit(w: u32, i: u32) -> u32 {
    assert!(i < 32, "bit index {i} out of range");
    (w >> i) & 1
}

/// Replace bits `hi..=lo` of `w` with the low bits of `v`.
///
/// Excess bits of `v` are masked off, so the operation is total.
#[inline]
pub fn set_bit_range(w: u32, hi: u32, lo: u32, v: u32) -> u32 {
    assert!(lo <= hi && hi < 32, "bad bit range {hi}..{lo}");
    let width = hi - lo + 1;
    let mask = if width == 32 { u32::MAX } else { ((1u32 << width) - 1) << lo };
    (w & !mask) | ((v << lo) & mask)
}

/// Bits `hi..=lo` of `w`, shifted down to bit 0.
#[inline]
pub fn bit_range(w: u32, hi: u32, lo: u32) -> u32 {
    assert!(lo <= hi && hi < 32, "bad bit range {hi}..{lo}");
    let width = hi - lo + 1;
    let mask = if width == 32 { u32::MAX } else { (1u32 << width) - 1 };
    (w >> lo) & mask
}

/// Carry out of the unsigned sum `a + b + c` (`c` must be 0 or 1).
#[inline]
pub fn carry_from_add3(a: u32, b: u32, c: u32) -> u32 {
    debug_assert!(c <= 1);
    ((a as u64 + b as u64 + c as u64) >> 32) as u32
}

/// Carry out of the unsigned sum `a + b`.
#[inline]
pub fn carry_from_add2(a: u32, b: u32) -> u32 {
    carry_from_add3(a, b, 0)
}

/// Signed-overflow flag for `a + b + c` (`c` must be 0 or 1).
#[inline]
pub fn overflow_from_add3(a: u32, b: u32, c: u32) -> u32 {
    debug_assert!(c <= 1);
    let s = a as i32 as i64 + b as i32 as i64 + c as i64;
    u32::from(!(i32::MIN as i64..=i32::MAX as i64).contains(&s))
}

/// Signed-overflow flag for `a + b`.
#[inline]
pub fn overflow_from_add2(a: u32, b: u32) -> u32 {
    overflow_from_add3(a, b, 0)
}

/// Borrow flag for the unsigned difference `a - b`.
#[inline]
pub fn borrow_from_sub2(a: u32, b: u32) -> u32 {
    u32::from((a as u64) < b as u64)
}

/// Borrow flag for the unsigned difference `a - b - c`.
#[inline]
pub fn borrow_from_sub3(a: u32, b: u32, c: u32) -> u32 {
    u32::from((a as u64) < b as u64 + c as u64)
}

/// Signed-overflow flag for `a - b`.
#[inline]
pub fn overflow_from_sub2(a: u32, b: u32) -> u32 {
    let s = a as i32 as i64 - b as i32 as i64;
    u32::from(!(i32::MIN as i64..=i32::MAX as i64).contains(&s))
}

/// Signed-overflow flag for `a - b - c`.
#[inline]
pub fn overflow_from_sub3(a: u32, b: u32, c: u32) -> u32 {
    let s = a as i32 as i64 - b as i32 as i64 - c as i32 as i64;
    u32::from(!(i32::MIN as i64..=i32::MAX as i64).contains(&s))
}

/// Sign-extend a 24-bit value to 30 bits (branch offset form).
#[inline]
pub fn sign_extend_30(x: u32) -> u32 {
    let x = x & 0x00FF_FFFF;
    if x & 0x0080_0000 != 0 {
        x | 0x3F00_0000
    } else {
        x
    }
}

#[cfg(test)]
#[allow(clippy::manual_range_contains)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn get_bit_examples() {
        assert_eq!(get_bit(0x8000_0000, 31), 1);
        assert_eq!(get_bit(0x0000_0000, 0), 0);
        // shift-and-mask oracle
        assert_eq!(get_bit(0x0000_0010, 4), (0x0000_0010u32 >> 4) & 1);
        assert_eq!(get_bit(0x0000_0010, 4), 1);
    }

    #[test]
    #[should_panic]
    fn get_bit_rejects_index_32() {
        get_bit(0, 32);
    }

    #[test]
    fn set_bit_range_examples() {
        assert_eq!(set_bit_range(0x0000_0000, 31, 31, 1), 0x8000_0000);
        // mask oracle: clearing the low byte
        assert_eq!(set_bit_range(0xFFFF_FFFF, 7, 0, 0), 0xFFFF_FF00);
    }

    #[test]
    fn carry_examples() {
        assert_eq!(carry_from_add3(0xFFFF_FFFF, 0x0000_0001, 0), 1);
        assert_eq!(carry_from_add3(0, 0, 0), 0);
        assert_eq!(carry_from_add3(0xFFFF_FFFF, 0xFFFF_FFFF, 1), 1);
    }

    #[test]
    fn overflow_examples() {
        assert_eq!(overflow_from_add3(0x7FFF_FFFF, 1, 0), 1);
        assert_eq!(overflow_from_add3(0, 0, 0), 0);
        assert_eq!(overflow_from_add3(0x8000_0000, 0x8000_0000, 0), 1);
    }

    #[test]
    fn sign_extend_30_examples() {
        assert_eq!(sign_extend_30(0x0000_0001), 0x0000_0001);
        assert_eq!(sign_extend_30(0x00FF_FFFE), 0x3FFF_FFFE);
        // shifted left by 2 this is a branch offset of -8
        assert_eq!(sign_extend_30(0x00FF_FFFE).wrapping_shl(2), (-8i32) as u32);
    }

    proptest! {
        #[test]
        fn full_range_overwrite(w: u32, v: u32) {
            prop_assert_eq!(set_bit_range(w, 31, 0, v), v);
        }

        #[test]
        fn set_then_get_range(w: u32, v: u32, lo in 0u32..32, len in 1u32..=32) {
            let hi = (lo + len - 1).min(31);
            let out = set_bit_range(w, hi, lo, v);
            let width = hi - lo + 1;
            let mask = if width == 32 { u32::MAX } else { (1u32 << width) - 1 };
            prop_assert_eq!(bit_range(out, hi, lo), v & mask);
            // bits outside the range are untouched
            let keep = if width == 32 { 0 } else { !(mask << lo) };
            prop_assert_eq!(out & keep, w & keep);
        }

        #[test]
        fn carry_matches_wide_sum(a: u32, b: u32, c in 0u32..=1) {
            let wide = a as u64 + b as u64 + c as u64;
            prop_assert_eq!(carry_from_add3(a, b, c), ((wide >> 32) & 1) as u32);
        }

        #[test]
        fn overflow_matches_wide_signed_sum(a: u32, b: u32, c in 0u32..=1) {
            let s = a as i32 as i64 + b as i32 as i64 + c as i64;
            let expect = u32::from(s < -(1i64 << 31) || s > (1i64 << 31) - 1);
            prop_assert_eq!(overflow_from_add3(a, b, c), expect);
        }

        #[test]
        fn borrow_matches_wide_difference(a: u32, b: u32, c in 0u32..=1) {
            prop_assert_eq!(borrow_from_sub3(a, b, c), u32::from((a as i64) - (b as i64) - (c as i64) < 0));
            prop_assert_eq!(borrow_from_sub2(a, b), u32::from((a as i64) < (b as i64)));
        }

        #[test]
        fn overflow_sub_matches_wide(a: u32, b: u32, c in 0u32..=1) {
            let s = a as i32 as i64 - b as i32 as i64 - c as i64;
            let expect = u32::from(s < -(1i64 << 31) || s > (1i64 << 31) - 1);
            prop_assert_eq!(overflow_from_sub3(a, b, c), expect);
        }
    }
}
