//! AES byte-level primitives and leakage models.
//!
//! Provides the Rijndael substitution box, its inverse, Hamming weight,
//! masked Sbox table generation, and the intermediate-value models used to
//! label traces and form key hypotheses.

use thiserror::Error;

/// Rijndael substitution box (AES-128 forward Sbox).
pub const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

/// Inverse substitution box, transcribed independently of [`SBOX`] so the
/// tests can cross-check one table against the other.
pub const INV_SBOX: [u8; 256] = [
    0x52, 0x09, 0x6a, 0xd5, 0x30, 0x36, 0xa5, 0x38, 0xbf, 0x40, 0xa3, 0x9e, 0x81, 0xf3, 0xd7, 0xfb,
    0x7c, 0xe3, 0x39, 0x82, 0x9b, 0x2f, 0xff, 0x87, 0x34, 0x8e, 0x43, 0x44, 0xc4, 0xde, 0xe9, 0xcb,
    0x54, 0x7b, 0x94, 0x32, 0xa6, 0xc2, 0x23, 0x3d, 0xee, 0x4c, 0x95, 0x0b, 0x42, 0xfa, 0xc3, 0x4e,
    0x08, 0x2e, 0xa1, 0x66, 0x28, 0xd9, 0x24, 0xb2, 0x76, 0x5b, 0xa2, 0x49, 0x6d, 0x8b, 0xd1, 0x25,
    0x72, 0xf8, 0xf6, 0x64, 0x86, 0x68, 0x98, 0x16, 0xd4, 0xa4, 0x5c, 0xcc, 0x5d, 0x65, 0xb6, 0x92,
    0x6c, 0x70, 0x48, 0x50, 0xfd, 0xed, 0xb9, 0xda, 0x5e, 0x15, 0x46, 0x57, 0xa7, 0x8d, 0x9d, 0x84,
    0x90, 0xd8, 0xab, 0x00, 0x8c, 0xbc, 0xd3, 0x0a, 0xf7, 0xe4, 0x58, 0x05, 0xb8, 0xb3, 0x45, 0x06,
    0xd0, 0x2c, 0x1e, 0x8f, 0xca, 0x3f, 0x0f, 0x02, 0xc1, 0xaf, 0xbd, 0x03, 0x01, 0x13, 0x8a, 0x6b,
    0x3a, 0x91, 0x11, 0x41, 0x4f, 0x67, 0xdc, 0xea, 0x97, 0xf2, 0xcf, 0xce, 0xf0, 0xb4, 0xe6, 0x73,
    0x96, 0xac, 0x74, 0x22, 0xe7, 0xad, 0x35, 0x85, 0xe2, 0xf9, 0x37, 0xe8, 0x1c, 0x75, 0xdf, 0x6e,
    0x47, 0xf1, 0x1a, 0x71, 0x1d, 0x29, 0xc5, 0x89, 0x6f, 0xb7, 0x62, 0x0e, 0xaa, 0x18, 0xbe, 0x1b,
    0xfc, 0x56, 0x3e, 0x4b, 0xc6, 0xd2, 0x79, 0x20, 0x9a, 0xdb, 0xc0, 0xfe, 0x78, 0xcd, 0x5a, 0xf4,
    0x1f, 0xdd, 0xa8, 0x33, 0x88, 0x07, 0xc7, 0x31, 0xb1, 0x12, 0x10, 0x59, 0x27, 0x80, 0xec, 0x5f,
    0x60, 0x51, 0x7f, 0xa9, 0x19, 0xb5, 0x4a, 0x0d, 0x2d, 0xe5, 0x7a, 0x9f, 0x93, 0xc9, 0x9c, 0xef,
    0xa0, 0xe0, 0x3b, 0x4d, 0xae, 0x2a, 0xf5, 0xb0, 0xc8, 0xeb, 0xbb, 0x3c, 0x83, 0x53, 0x99, 0x61,
    0x17, 0x2b, 0x04, 0x7e, 0xba, 0x77, 0xd6, 0x26, 0xe1, 0x69, 0x14, 0x63, 0x55, 0x21, 0x0c, 0x7d,
];

/// Forward Sbox lookup.
#[inline]
pub fn sbox(x: u8) -> u8 {
    SBOX[x as usize]
}

/// Inverse Sbox lookup.
#[inline]
pub fn inv_sbox(x: u8) -> u8 {
    INV_SBOX[x as usize]
}

/// Number of set bits in a byte (0..=8).
#[inline]
pub fn hamming_weight(x: u8) -> u32 {
    x.count_ones()
}

/// Builds a masked substitution table satisfying `Sm[x ^ m_in] == S[x] ^ m_out`
/// for every `x`.
pub fn mask_sbox_table(table: &[u8; 256], m_in: u8, m_out: u8) -> [u8; 256] {
    let mut sm = [0u8; 256];
    for i in 0..=255u8 {
        sm[(i ^ m_in) as usize] = table[i as usize] ^ m_out;
    }
    sm
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("byte index {0} out of range (expected 0..=15)")]
    ByteIndexOutOfRange(usize),
}

/// Intermediate-value model mapping a trace's known data plus a key-byte
/// hypothesis to a class label.
///
/// Class label domains are fixed per kind (not inferred from data): raw
/// Sbox-output values have 256 classes, Hamming weight/distance models have 9.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakageModel {
    /// Sbox output value `Sbox[p_b ^ k]`; labels 0..=255.
    IvSbox { byte_index: usize },
    /// Hamming weight of the Sbox output `HW(Sbox[p_b ^ k])`; labels 0..=8.
    HwSbox { byte_index: usize },
    /// Last-round register distance `HW(InvSbox[C_b1 ^ k] ^ C_b2)`; labels 0..=8.
    HdLastRound { byte_pair: (usize, usize) },
}

impl LeakageModel {
    /// Size of the class-label domain.
    pub fn class_count(&self) -> usize {
        match self {
            LeakageModel::IvSbox { .. } => 256,
            LeakageModel::HwSbox { .. } | LeakageModel::HdLastRound { .. } => 9,
        }
    }

    /// The key byte position a hypothesis refers to.
    pub fn key_byte_index(&self) -> usize {
        match *self {
            LeakageModel::IvSbox { byte_index } | LeakageModel::HwSbox { byte_index } => byte_index,
            LeakageModel::HdLastRound { byte_pair } => byte_pair.0,
        }
    }

    /// Checks that the configured byte indices address a 16-byte state.
    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            LeakageModel::IvSbox { byte_index } | LeakageModel::HwSbox { byte_index } => {
                if byte_index > 15 {
                    return Err(ModelError::ByteIndexOutOfRange(byte_index));
                }
            }
            LeakageModel::HdLastRound { byte_pair: (b1, b2) } => {
                if b1 > 15 {
                    return Err(ModelError::ByteIndexOutOfRange(b1));
                }
                if b2 > 15 {
                    return Err(ModelError::ByteIndexOutOfRange(b2));
                }
            }
        }
        Ok(())
    }

    /// Class label for one trace under a key-byte hypothesis.
    pub fn intermediate_value(
        &self,
        plaintext: &[u8; 16],
        ciphertext: &[u8; 16],
        key_byte_hypothesis: u8,
    ) -> usize {
        match *self {
            LeakageModel::IvSbox { byte_index } => {
                sbox(plaintext[byte_index] ^ key_byte_hypothesis) as usize
            }
            LeakageModel::HwSbox { byte_index } => {
                hamming_weight(sbox(plaintext[byte_index] ^ key_byte_hypothesis)) as usize
            }
            LeakageModel::HdLastRound { byte_pair: (b1, b2) } => {
                hamming_weight(inv_sbox(ciphertext[b1] ^ key_byte_hypothesis) ^ ciphertext[b2])
                    as usize
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// GF(2^8) multiplication modulo the Rijndael polynomial x^8+x^4+x^3+x+1.
    fn gf_mul(mut a: u8, mut b: u8) -> u8 {
        let mut acc = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            let carry = a & 0x80 != 0;
            a <<= 1;
            if carry {
                a ^= 0x1b;
            }
            b >>= 1;
        }
        acc
    }

    /// Recomputes the forward Sbox from first principles: multiplicative
    /// inverse in GF(2^8) followed by the affine transform.
    fn derive_sbox_entry(x: u8) -> u8 {
        let inv = if x == 0 {
            0
        } else {
            (1u16..=255)
                .map(|c| c as u8)
                .find(|&c| gf_mul(x, c) == 1)
                .unwrap()
        };
        inv ^ inv.rotate_left(1)
            ^ inv.rotate_left(2)
            ^ inv.rotate_left(3)
            ^ inv.rotate_left(4)
            ^ 0x63
    }

    #[test]
    fn sbox_matches_field_arithmetic_derivation() {
        for x in 0..=255u8 {
            assert_eq!(sbox(x), derive_sbox_entry(x), "mismatch at {x:#04x}");
        }
    }

    #[test]
    fn sbox_known_entries() {
        assert_eq!(sbox(0x00), 0x63);
        assert_eq!(sbox(0x01), 0x7c);
    }

    #[test]
    fn inverse_table_inverts_forward_table() {
        for i in 0..=255u8 {
            assert_eq!(inv_sbox(sbox(i)), i);
            assert_eq!(sbox(inv_sbox(i)), i);
        }
        assert_eq!(inv_sbox(sbox(0xab)), 0xab);
    }

    #[test]
    fn sbox_is_a_permutation() {
        let mut seen = [false; 256];
        for i in 0..=255u8 {
            seen[sbox(i) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn hamming_weight_cases() {
        assert_eq!(hamming_weight(0x00), 0);
        assert_eq!(hamming_weight(0xff), 8);
        assert_eq!(hamming_weight(0xa5), 4);
    }

    #[test]
    fn hamming_weight_xor_is_symmetric() {
        for (x, y) in [(0x12u8, 0x34u8), (0xff, 0x0f), (0x80, 0x01), (0xaa, 0x55)] {
            assert_eq!(hamming_weight(x ^ y), hamming_weight(y ^ x));
        }
    }

    #[test]
    fn masked_table_identity_masks() {
        assert_eq!(mask_sbox_table(&SBOX, 0, 0), SBOX);
    }

    #[test]
    fn masked_table_shifts_input_and_output() {
        let sm = mask_sbox_table(&SBOX, 0x01, 0x02);
        for i in 0..=255u8 {
            assert_eq!(sm[(i ^ 0x01) as usize], sbox(i) ^ 0x02);
        }
    }

    #[test]
    fn masked_table_cancels_at_matching_output_mask() {
        let sm = mask_sbox_table(&SBOX, 0xff, 0x63);
        assert_eq!(sm[0xff], 0x00);
    }

    #[test]
    fn intermediate_value_hw_sbox_zero_inputs() {
        let model = LeakageModel::HwSbox { byte_index: 0 };
        let p = [0u8; 16];
        let c = [0u8; 16];
        assert_eq!(model.intermediate_value(&p, &c, 0x00), 4); // HW(0x63)
    }

    #[test]
    fn intermediate_value_iv_sbox_key_equals_plaintext() {
        let model = LeakageModel::IvSbox { byte_index: 3 };
        let mut p = [0u8; 16];
        p[3] = 0x5a;
        let c = [0u8; 16];
        assert_eq!(model.intermediate_value(&p, &c, 0x5a), 0x63);
    }

    #[test]
    fn intermediate_value_hd_self_cancellation() {
        // Choose k so that InvSbox[c1 ^ k] == c2; the XOR then cancels.
        let model = LeakageModel::HdLastRound { byte_pair: (0, 1) };
        let mut c = [0u8; 16];
        c[0] = 0xd4;
        c[1] = 0x29;
        let k = c[0] ^ sbox(c[1]);
        assert_eq!(model.intermediate_value(&[0u8; 16], &c, k), 0);
    }

    #[test]
    fn iv_model_is_bijective_in_key() {
        let model = LeakageModel::IvSbox { byte_index: 0 };
        let mut p = [0u8; 16];
        p[0] = 0x3c;
        let c = [0u8; 16];
        let mut seen = [false; 256];
        for k in 0..=255u8 {
            seen[model.intermediate_value(&p, &c, k)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn class_counts_are_fixed_per_kind() {
        assert_eq!(LeakageModel::IvSbox { byte_index: 0 }.class_count(), 256);
        assert_eq!(LeakageModel::HwSbox { byte_index: 0 }.class_count(), 9);
        assert_eq!(
            LeakageModel::HdLastRound { byte_pair: (0, 1) }.class_count(),
            9
        );
    }

    #[test]
    fn validate_rejects_out_of_range_byte_index() {
        assert!(LeakageModel::HwSbox { byte_index: 16 }.validate().is_err());
        assert!(LeakageModel::HdLastRound { byte_pair: (0, 16) }
            .validate()
            .is_err());
        assert!(LeakageModel::IvSbox { byte_index: 15 }.validate().is_ok());
    }
}
