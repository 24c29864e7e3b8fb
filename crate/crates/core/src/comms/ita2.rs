//! ITA2 five-bit text code with letter/figure shift states.
//!
//! Encoding starts in letters mode and emits a shift code only when the next
//! character lives in the other mode. Space, CR and LF exist in both modes and
//! never force a shift.

use super::{Bit, CommsError};

pub const FIGS: u8 = 27;
pub const LTRS: u8 = 31;

const NUL: u8 = 0;

/// Letters-mode characters by code; `None` marks shifts and the blank.
const LETTERS: [Option<char>; 32] = [
    None,
    Some('E'),
    Some('\n'),
    Some('A'),
    Some(' '),
    Some('S'),
    Some('I'),
    Some('U'),
    Some('\r'),
    Some('D'),
    Some('R'),
    Some('J'),
    Some('N'),
    Some('F'),
    Some('C'),
    Some('K'),
    Some('T'),
    Some('Z'),
    Some('L'),
    Some('W'),
    Some('H'),
    Some('Y'),
    Some('P'),
    Some('Q'),
    Some('O'),
    Some('B'),
    Some('G'),
    None,
    Some('M'),
    Some('X'),
    Some('V'),
    None,
];

/// Figures-mode characters by code. ENQ and BEL decode to their control
/// characters; codes 13, 20 and 26 are unassigned.
const FIGURES: [Option<char>; 32] = [
    None,
    Some('3'),
    Some('\n'),
    Some('-'),
    Some(' '),
    Some('\''),
    Some('8'),
    Some('7'),
    Some('\r'),
    Some('\u{5}'),
    Some('4'),
    Some('\u{7}'),
    Some(','),
    None,
    Some(':'),
    Some('('),
    Some('5'),
    Some('+'),
    Some(')'),
    Some('2'),
    None,
    Some('6'),
    Some('0'),
    Some('1'),
    Some('9'),
    Some('?'),
    None,
    None,
    Some('.'),
    Some('/'),
    Some('='),
    None,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Letters,
    Figures,
}

fn lookup(table: &[Option<char>; 32], c: char) -> Option<u8> {
    table.iter().position(|&e| e == Some(c)).map(|i| i as u8)
}

fn is_control(c: char) -> bool {
    c == '\u{5}' || c == '\u{7}'
}

/// Characters the encoder accepts.
pub fn supported_alphabet() -> Vec<char> {
    let mut chars: Vec<char> = LETTERS.iter().flatten().copied().collect();
    for c in FIGURES.iter().flatten() {
        if !chars.contains(c) && !is_control(*c) {
            chars.push(*c);
        }
    }
    chars
}

pub fn ita2_encode(text: &str) -> Result<Vec<u8>, CommsError> {
    let mut mode = Mode::Letters;
    let mut codes = Vec::with_capacity(text.len() + 4);
    for c in text.chars() {
        if is_control(c) {
            return Err(CommsError::UnsupportedCharacter(c));
        }
        let letter = lookup(&LETTERS, c);
        let figure = lookup(&FIGURES, c);
        let code = match (letter, figure, mode) {
            (Some(l), Some(_), _) => l,
            (Some(l), None, Mode::Letters) | (None, Some(l), Mode::Figures) => l,
            (Some(l), None, Mode::Figures) => {
                codes.push(LTRS);
                mode = Mode::Letters;
                l
            }
            (None, Some(f), Mode::Letters) => {
                codes.push(FIGS);
                mode = Mode::Figures;
                f
            }
            (None, None, _) => return Err(CommsError::UnsupportedCharacter(c)),
        };
        codes.push(code);
    }
    Ok(codes)
}

/// Decode codes, starting in letters mode. Blanks are skipped and unassigned
/// figure positions decode to U+FFFD, so corrupted streams still decode.
pub fn ita2_decode(codes: &[u8]) -> Result<String, CommsError> {
    let mut mode = Mode::Letters;
    let mut text = String::with_capacity(codes.len());
    for &code in codes {
        match code {
            c if c > 31 => return Err(CommsError::InvalidIta2Code(c)),
            FIGS => mode = Mode::Figures,
            LTRS => mode = Mode::Letters,
            NUL => {}
            c => {
                let table = if mode == Mode::Letters { &LETTERS } else { &FIGURES };
                text.push(table[c as usize].unwrap_or('\u{FFFD}'));
            }
        }
    }
    Ok(text)
}

/// Five bits per code, most significant first.
pub fn codes_to_bits(codes: &[u8]) -> Vec<Bit> {
    codes
        .iter()
        .flat_map(|&c| (0..5).rev().map(move |i| (c >> i) & 1 == 1))
        .collect()
}

/// Group bits into five-bit codes; a trailing partial group is dropped.
pub fn bits_to_codes(bits: &[Bit]) -> Vec<u8> {
    bits.chunks_exact(5)
        .map(|chunk| chunk.iter().fold(0u8, |acc, &b| (acc << 1) | u8::from(b)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letter_a() {
        assert_eq!(ita2_encode("A").unwrap(), vec![0b00011]);
        assert_eq!(codes_to_bits(&[0b00011]), vec![false, false, false, true, true]);
    }

    #[test]
    fn shift_inserted_on_mode_change_only() {
        assert_eq!(ita2_encode("A1").unwrap(), vec![3, FIGS, 23]);
        assert_eq!(ita2_encode("12").unwrap(), vec![FIGS, 23, 19]);
        assert_eq!(ita2_encode("1 2").unwrap(), vec![FIGS, 23, 4, 19]);
        assert_eq!(ita2_encode("1A").unwrap(), vec![FIGS, 23, LTRS, 3]);
    }

    #[test]
    fn unsupported() {
        assert_eq!(ita2_encode("a"), Err(CommsError::UnsupportedCharacter('a')));
        assert_eq!(ita2_encode("A#"), Err(CommsError::UnsupportedCharacter('#')));
        assert_eq!(ita2_encode("\u{7}"), Err(CommsError::UnsupportedCharacter('\u{7}')));
    }

    #[test]
    fn alphabet_round_trip() {
        let alphabet: String = supported_alphabet().into_iter().collect();
        assert!(alphabet.contains('Z') && alphabet.contains('0') && alphabet.contains('\r'));
        let codes = ita2_encode(&alphabet).unwrap();
        assert_eq!(ita2_decode(&codes).unwrap(), alphabet);
        let bits = codes_to_bits(&codes);
        assert_eq!(bits_to_codes(&bits), codes);
        assert_eq!(ita2_encode("").unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn decoding_is_total() {
        assert_eq!(ita2_decode(&[FIGS, 13, 0, LTRS, 3]).unwrap(), "\u{FFFD}A");
        assert_eq!(ita2_decode(&[32]), Err(CommsError::InvalidIta2Code(32)));
    }
}
