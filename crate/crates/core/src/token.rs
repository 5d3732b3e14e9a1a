//! Tokens: nonempty subsets of a coordinate alphabet stored as bitmasks.
//!
//! The empty set is deliberately not a [`Token`]. Operations that can
//! produce it (intersection, forced tokens) return `Option<Token>`, with
//! `None` playing the role of the empty sentinel.

use std::fmt;
use std::num::NonZeroU16;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported alphabet size; one bit per symbol in a `u16`.
pub const MAX_Q: usize = 16;

/// Number of symbols per coordinate, validated to `2..=16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Alphabet(u8);

impl Alphabet {
    /// Validates `q` and wraps it.
    pub fn new(q: usize) -> Result<Self> {
        if (2..=MAX_Q).contains(&q) {
            Ok(Alphabet(q as u8))
        } else {
            Err(Error::AlphabetSize(q))
        }
    }

    /// Number of symbols.
    pub fn size(self) -> usize {
        self.0 as usize
    }

    /// Number of tokens, `2^q - 1`.
    pub fn token_count(self) -> usize {
        (1usize << self.0) - 1
    }

    /// The token containing every symbol.
    pub fn full(self) -> Token {
        Token::full(self.size())
    }

    /// All tokens in increasing mask order.
    pub fn tokens(self) -> impl Iterator<Item = Token> + Clone {
        Token::all(self.size())
    }
}

impl TryFrom<usize> for Alphabet {
    type Error = Error;
    fn try_from(q: usize) -> Result<Self> {
        Alphabet::new(q)
    }
}

impl From<Alphabet> for usize {
    fn from(a: Alphabet) -> usize {
        a.size()
    }
}

/// A nonempty set of symbols.
///
/// Tokens order by mask value, which gives every iteration over tokens a
/// fixed, deterministic order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(NonZeroU16);

impl Token {
    /// Builds a token from a mask, returning `None` for the empty mask.
    pub fn new(mask: u16) -> Option<Token> {
        NonZeroU16::new(mask).map(Token)
    }

    /// The token `{s}`.
    pub fn singleton(s: u8) -> Token {
        assert!((s as usize) < MAX_Q, "symbol {s} out of range");
        Token(NonZeroU16::new(1 << s).expect("nonzero"))
    }

    /// The token holding all `q` symbols.
    pub fn full(q: usize) -> Token {
        assert!((1..=MAX_Q).contains(&q), "alphabet size {q} out of range");
        Token(NonZeroU16::new(((1u32 << q) - 1) as u16).expect("nonzero"))
    }

    /// Builds a token from a list of symbols.
    pub fn from_symbols(symbols: &[u8]) -> Option<Token> {
        let mut mask = 0u16;
        for &s in symbols {
            mask |= 1 << s;
        }
        Token::new(mask)
    }

    /// Raw bitmask.
    pub fn mask(self) -> u16 {
        self.0.get()
    }

    /// Dense index `mask - 1`, used to address token-indexed tables.
    pub fn index(self) -> usize {
        self.0.get() as usize - 1
    }

    /// Inverse of [`Token::index`].
    pub fn from_index(i: usize) -> Token {
        Token::new((i + 1) as u16).expect("index maps to a nonzero mask")
    }

    /// Whether symbol `s` belongs to the token.
    pub fn contains(self, s: u8) -> bool {
        self.mask() & (1 << s) != 0
    }

    /// Subset test.
    pub fn is_subset(self, other: Token) -> bool {
        self.mask() & !other.mask() == 0
    }

    /// Proper-subset test.
    pub fn is_proper_subset(self, other: Token) -> bool {
        self != other && self.is_subset(other)
    }

    /// Set intersection; `None` when empty.
    pub fn intersect(self, other: Token) -> Option<Token> {
        Token::new(self.mask() & other.mask())
    }

    /// Set union.
    pub fn union(self, other: Token) -> Token {
        Token::new(self.mask() | other.mask()).expect("union of nonempty sets")
    }

    /// Number of symbols in the token.
    pub fn len(self) -> usize {
        self.mask().count_ones() as usize
    }

    /// Tokens are never empty; provided for API symmetry with `len`.
    pub fn is_empty(self) -> bool {
        false
    }

    /// Whether the token holds exactly one symbol.
    pub fn is_singleton(self) -> bool {
        self.mask().is_power_of_two()
    }

    /// The single symbol of a singleton token.
    pub fn singleton_symbol(self) -> Option<u8> {
        self.is_singleton().then(|| self.mask().trailing_zeros() as u8)
    }

    /// Symbols in increasing order.
    pub fn symbols(self) -> impl Iterator<Item = u8> {
        let mask = self.mask();
        (0..MAX_Q as u8).filter(move |&s| mask & (1 << s) != 0)
    }

    /// Every token over an alphabet of size `q`, in increasing mask order.
    pub fn all(q: usize) -> impl Iterator<Item = Token> + Clone {
        (1..(1u32 << q)).map(|m| Token::new(m as u16).expect("nonzero"))
    }

    /// Nonempty subsets of this token, in increasing mask order.
    pub fn subsets(self) -> impl Iterator<Item = Token> {
        let m = self.mask();
        (1..=m).filter(move |x| x & !m == 0).map(|x| Token::new(x).expect("nonzero"))
    }

    /// Parses a sorted-digit string checked against an alphabet size.
    pub fn parse_for(s: &str, q: usize) -> Result<Token> {
        let t: Token = s.parse()?;
        if t.mask() as u32 >= (1u32 << q) {
            return Err(Error::ParamError(format!("token {s:?} uses a symbol outside 0..{q}")));
        }
        Ok(t)
    }
}

/// Intersection of two token-or-empty values.
pub fn intersect_opt(a: Option<Token>, b: Option<Token>) -> Option<Token> {
    match (a, b) {
        (Some(x), Some(y)) => x.intersect(y),
        _ => None,
    }
}

/// Subset test with the empty set treated as a subset of everything.
pub fn subset_opt(a: Option<Token>, b: Option<Token>) -> bool {
    match (a, b) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some(x), Some(y)) => x.is_subset(y),
    }
}

const DIGITS: &[u8; 16] = b"0123456789abcdef";

impl fmt::Display for Token {
    /// Sorted symbol digits, e.g. `{0,1}` prints as `01`. Symbols above 9
    /// use lowercase hex digits.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.symbols() {
            write!(f, "{}", DIGITS[s as usize] as char)?;
        }
        Ok(())
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Token({self})")
    }
}

impl FromStr for Token {
    type Err = Error;

    fn from_str(s: &str) -> Result<Token> {
        let mut mask = 0u16;
        let mut last: Option<u8> = None;
        for ch in s.chars() {
            let d = ch
                .to_digit(16)
                .filter(|_| !ch.is_ascii_uppercase())
                .ok_or_else(|| Error::ParamError(format!("invalid token string {s:?}")))? as u8;
            if last.is_some_and(|l| d <= l) {
                return Err(Error::ParamError(format!(
                    "token string {s:?} must list distinct symbols in increasing order"
                )));
            }
            last = Some(d);
            mask |= 1 << d;
        }
        Token::new(mask).ok_or_else(|| Error::ParamError("empty token string".into()))
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Token, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
