//! Polynomial hash over GF(2^128) used to confirm that corrected keys agree.

use rand::Rng;

use crate::key::pack_msb_first;
use crate::rng::seeded_rng;
use bitvec::prelude::*;

/// Product in GF(2^128) modulo x^128 + x^7 + x^2 + x + 1; bit i holds the x^i coefficient.
pub fn gf128_mul(x: u128, y: u128) -> u128 {
    let mut z = 0u128;
    let mut v = x;
    for i in 0..128 {
        if (y >> i) & 1 == 1 {
            z ^= v;
        }
        let carry = v >> 127;
        v <<= 1;
        if carry == 1 {
            v ^= 0x87;
        }
    }
    z
}

/// Evaluates the key, split into 128-bit words and followed by its bit length,
/// as a polynomial at a point drawn from `key_seed`. Two different keys of at
/// most `L` words collide with probability at most `(L + 1) / 2^128`.
pub fn verify_hash(key_seed: u64, bits: &BitSlice<u64, Lsb0>) -> u128 {
    let point: u128 = seeded_rng(key_seed, "verify-hash").random::<u128>() | 1;
    let mut acc = 0u128;
    for chunk in pack_msb_first(bits).chunks(16) {
        let mut word = [0u8; 16];
        word[..chunk.len()].copy_from_slice(chunk);
        acc = gf128_mul(acc ^ u128::from_be_bytes(word), point);
    }
    gf128_mul(acc ^ bits.len() as u128, point)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::key::bits_from_str;

    #[test]
    fn multiplicative_identity_and_reduction() {
        assert_eq!(gf128_mul(0xdead_beef, 1), 0xdead_beef);
        // x^127 * x = x^128 = x^7 + x^2 + x + 1
        assert_eq!(gf128_mul(1 << 127, 2), 0x87);
    }

    #[test]
    fn length_and_content_sensitive() {
        let a = bits_from_str("0").unwrap();
        let b = bits_from_str("00").unwrap();
        assert_ne!(verify_hash(1, &a), verify_hash(1, &b));
        let c = bits_from_str("0101").unwrap();
        let d = bits_from_str("0111").unwrap();
        assert_ne!(verify_hash(1, &c), verify_hash(1, &d));
        assert_eq!(verify_hash(1, &c), verify_hash(1, &c.clone()));
        assert_ne!(verify_hash(1, &c), verify_hash(2, &c));
    }

    proptest! {
        #[test]
        fn field_laws(a in any::<u128>(), b in any::<u128>(), c in any::<u128>()) {
            prop_assert_eq!(gf128_mul(a, b), gf128_mul(b, a));
            prop_assert_eq!(gf128_mul(a, b ^ c), gf128_mul(a, b) ^ gf128_mul(a, c));
            prop_assert_eq!(gf128_mul(gf128_mul(a, b), c), gf128_mul(a, gf128_mul(b, c)));
        }
    }
}
