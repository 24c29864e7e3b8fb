//! Rate-1/2 block code that keeps bit-1s apart.
//!
//! Two data bits map to four code bits. Every codeword starts with 0 and holds at
//! most one 1, so no "11" appears inside a codeword or across a boundary.

use super::{Bit, CommsError};

const CODEBOOK: [[Bit; 4]; 4] = [
    [false, false, false, false],
    [false, false, false, true],
    [false, false, true, false],
    [false, true, false, false],
];

/// Encode `bits`, appending one zero when the length is odd.
pub fn encode_constrained(bits: &[Bit]) -> Vec<Bit> {
    let mut out = Vec::with_capacity(2 * bits.len() + 2);
    for pair in bits.chunks(2) {
        let hi = pair[0];
        let lo = pair.get(1).copied().unwrap_or(false);
        out.extend_from_slice(&CODEBOOK[(usize::from(hi) << 1) | usize::from(lo)]);
    }
    out
}

pub fn decode_constrained(code: &[Bit]) -> Result<Vec<Bit>, CommsError> {
    if !code.len().is_multiple_of(4) {
        return Err(CommsError::InvalidCodeword { offset: code.len() - code.len() % 4 });
    }
    let mut out = Vec::with_capacity(code.len() / 2);
    for (i, word) in code.chunks(4).enumerate() {
        let index = CODEBOOK
            .iter()
            .position(|c| c == word)
            .ok_or(CommsError::InvalidCodeword { offset: 4 * i })?;
        out.push(index & 2 != 0);
        out.push(index & 1 != 0);
    }
    Ok(out)
}

/// Nearest-codeword decoding for noisy channels: any word outside the table maps
/// to the codeword at the smallest Hamming distance (lowest index on ties).
pub fn decode_constrained_lenient(code: &[Bit]) -> Vec<Bit> {
    let mut out = Vec::with_capacity(code.len() / 2);
    for word in code.chunks(4) {
        let index = (0..4)
            .min_by_key(|&i| {
                CODEBOOK[i]
                    .iter()
                    .zip(word.iter().chain(std::iter::repeat(&false)))
                    .filter(|(a, b)| a != b)
                    .count()
            })
            .expect("non-empty codebook");
        out.push(index & 2 != 0);
        out.push(index & 1 != 0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bits(s: &str) -> Vec<Bit> {
        s.chars().filter(|c| !c.is_whitespace()).map(|c| c == '1').collect()
    }

    fn has_adjacent_ones(b: &[Bit]) -> bool {
        b.windows(2).any(|w| w[0] && w[1])
    }

    #[test]
    fn table_and_stream_example() {
        let code = encode_constrained(&bits("11 01"));
        assert_eq!(code, bits("0100 0001"));
        assert!(!has_adjacent_ones(&code));
    }

    #[test]
    fn exhaustive_inverse() {
        for v in 0..4u8 {
            let b = vec![v & 2 != 0, v & 1 != 0];
            assert_eq!(decode_constrained(&encode_constrained(&b)).unwrap(), b);
        }
    }

    #[test]
    fn invalid_words() {
        assert_eq!(decode_constrained(&bits("1111")), Err(CommsError::InvalidCodeword { offset: 0 }));
        assert_eq!(decode_constrained(&bits("0000 0110")), Err(CommsError::InvalidCodeword { offset: 4 }));
        assert!(decode_constrained(&bits("000")).is_err());
    }

    #[test]
    fn odd_input_is_zero_padded() {
        assert_eq!(encode_constrained(&bits("1")), bits("0010"));
    }

    #[test]
    fn lenient_decoding_agrees_on_codewords() {
        let b = bits("1101001110");
        let code = encode_constrained(&b);
        assert_eq!(decode_constrained_lenient(&code), b);
        assert_eq!(decode_constrained_lenient(&bits("0110")), bits("10"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn stream_never_has_adjacent_ones(input in proptest::collection::vec(any::<bool>(), 0..64)) {
            let code = encode_constrained(&input);
            prop_assert!(!has_adjacent_ones(&code));
            let mut padded = input.clone();
            if padded.len() % 2 == 1 { padded.push(false); }
            prop_assert_eq!(decode_constrained(&code).unwrap(), padded);
        }
    }
}
