//! Primitive value types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use primitive_types::U256 as Word;

/// A 20-byte account address.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    /// Takes the low 20 bytes of a stack word, the way the EVM narrows
    /// address operands.
    pub fn from_word(word: Word) -> Self {
        let bytes = word.to_big_endian();
        let mut out = [0u8; 20];
        out.copy_from_slice(&bytes[12..]);
        Address(out)
    }

    pub fn to_word(self) -> Word {
        let mut bytes = [0u8; 32];
        bytes[12..].copy_from_slice(&self.0);
        Word::from_big_endian(&bytes)
    }

    /// Abbreviated form used in graph labels, e.g. `0xf0..f0`.
    pub fn short(&self) -> String {
        let h = hex::encode(self.0);
        format!("0x{}..{}", &h[..2], &h[38..])
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid address `{0}`")]
pub struct AddressParseError(pub String);

impl FromStr for Address {
    type Err = AddressParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim().strip_prefix("0x").unwrap_or(s.trim());
        if digits.len() != 40 {
            return Err(AddressParseError(s.to_string()));
        }
        let mut out = [0u8; 20];
        hex::decode_to_slice(digits, &mut out).map_err(|_| AddressParseError(s.to_string()))?;
        Ok(Address(out))
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Canonical lowercase `0x`-prefixed rendering without leading zeros.
pub fn word_hex(word: &Word) -> String {
    format!("{word:#x}")
}

/// Full 64-digit rendering without prefix, as used for memory and storage
/// entries in struct logs.
pub fn word_hex_padded(word: &Word) -> String {
    hex::encode(word.to_big_endian())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WordParseError {
    #[error("`{0}` is not a hex number")]
    NotHex(String),
    #[error("`{0}` exceeds 256 bits")]
    Overflow(String),
}

/// Parses a hex word with or without `0x`, rejecting anything wider than
/// 256 bits (leading zeros are tolerated).
pub fn parse_word(s: &str) -> Result<Word, WordParseError> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    if digits.is_empty() {
        return Ok(Word::zero());
    }
    if !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(WordParseError::NotHex(s.to_string()));
    }
    let significant = digits.trim_start_matches('0');
    if significant.len() > 64 {
        return Err(WordParseError::Overflow(s.to_string()));
    }
    if significant.is_empty() {
        return Ok(Word::zero());
    }
    Word::from_str_radix(significant, 16).map_err(|_| WordParseError::NotHex(s.to_string()))
}

pub fn parse_bytes(s: &str) -> Result<Vec<u8>, hex::FromHexError> {
    let digits = s.strip_prefix("0x").unwrap_or(s);
    if digits.len() % 2 == 1 {
        return hex::decode(format!("0{digits}"));
    }
    hex::decode(digits)
}

pub fn bytes_hex(bytes: &[u8]) -> String {
    format!("0x{}", hex::encode(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_parsing_accepts_both_prefix_styles() {
        assert_eq!(parse_word("0x3d2").unwrap(), Word::from(0x3d2));
        assert_eq!(parse_word("00000000000000000000000000000000000000000000000000000000000003d2").unwrap(), Word::from(0x3d2));
        assert_eq!(parse_word("0x").unwrap(), Word::zero());
    }

    #[test]
    fn word_parsing_rejects_overflow() {
        let wide = format!("0x1{}", "0".repeat(64));
        assert!(matches!(parse_word(&wide), Err(WordParseError::Overflow(_))));
        let padded = format!("0x{}{}", "0".repeat(10), "f".repeat(64));
        assert_eq!(parse_word(&padded).unwrap(), Word::MAX);
    }

    #[test]
    fn address_word_round_trip() {
        let a: Address = "0xf079d7911c13369e7fd85607970036d2883afcfd".parse().unwrap();
        assert_eq!(Address::from_word(a.to_word()), a);
        assert_eq!(a.short(), "0xf0..fd");
    }
}
