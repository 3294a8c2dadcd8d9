//! Self-delimiting codewords for beep transmission.
//!
//! A payload `m` is framed as `10 · d(m) · 10`, where `d` doubles every bit.
//! Interior pairs are therefore always `00` or `11`, so the first pair-aligned
//! `10` after the start marker is unambiguously the end marker. Several
//! codewords may be sent back to back separated by any amount of silence.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A finite bit sequence. Leading zeros are significant.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct BitString(Vec<bool>);

impl BitString {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![false; len])
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![true; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    /// Minimal big-endian binary representation; zero is the single bit `0`.
    pub fn from_uint(value: u64) -> Self {
        if value == 0 {
            return Self(vec![false]);
        }
        let width = 64 - value.leading_zeros() as usize;
        Self::from_uint_width(value, width)
    }

    /// Big-endian representation in exactly `width` bits (high bits dropped).
    pub fn from_uint_width(value: u64, width: usize) -> Self {
        Self(
            (0..width)
                .rev()
                .map(|i| i < 64 && (value >> i) & 1 == 1)
                .collect(),
        )
    }

    /// Interprets the bits as a big-endian unsigned integer.
    pub fn to_uint(&self) -> Option<u64> {
        if self.0.is_empty() {
            return None;
        }
        let significant = self.0.iter().skip_while(|b| !**b).count();
        if significant > 64 {
            return None;
        }
        Some(self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.0.get(index).copied()
    }

    pub fn set(&mut self, index: usize, bit: bool) {
        self.0[index] = bit;
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit);
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.0.extend_from_slice(&other.0);
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn prefix(&self, len: usize) -> BitString {
        Self(self.0[..len].to_vec())
    }

    /// Right-pads with zeros up to `len` bits.
    pub fn padded(&self, len: usize) -> BitString {
        let mut bits = self.0.clone();
        if bits.len() < len {
            bits.resize(len, false);
        }
        Self(bits)
    }

    /// Bitwise OR; the shorter operand is treated as right-padded with zeros.
    pub fn or(&self, other: &BitString) -> BitString {
        let len = self.len().max(other.len());
        Self(
            (0..len)
                .map(|i| self.get(i).unwrap_or(false) || other.get(i).unwrap_or(false))
                .collect(),
        )
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid bit character {0:?}")]
pub struct ParseBitsError(char);

impl FromStr for BitString {
    type Err = ParseBitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(ParseBitsError(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }
}

impl From<BitString> for String {
    fn from(b: BitString) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for BitString {
    type Error = ParseBitsError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("missing start marker at offset {offset}")]
    MissingStart { offset: usize },
    #[error("invalid pair 01 at offset {offset}")]
    InvalidPair { offset: usize },
    #[error("codeword truncated at offset {offset}: no end marker")]
    MissingEnd { offset: usize },
    #[error("trailing bits after end marker at offset {offset}")]
    TrailingBits { offset: usize },
    #[error("message {index}: {source}")]
    InStream {
        index: usize,
        #[source]
        source: Box<DecodeError>,
    },
}

/// Frames `m` as `10 · d(m) · 10`.
pub fn encode(m: &BitString) -> BitString {
    let mut out = Vec::with_capacity(2 * m.len() + 4);
    out.extend([true, false]);
    for &b in m.bits() {
        out.extend([b, b]);
    }
    out.extend([true, false]);
    BitString(out)
}

/// Length of `encode(m)` for a payload of `payload_len` bits.
pub const fn codeword_len(payload_len: usize) -> usize {
    2 * payload_len + 4
}

/// Decodes exactly one codeword occupying the whole input.
pub fn decode(w: &BitString) -> Result<BitString, DecodeError> {
    let mut decoder = CodewordDecoder::new();
    for (offset, &bit) in w.bits().iter().enumerate() {
        if let Some(m) = decoder.push(bit)? {
            if offset + 1 != w.len() {
                return Err(DecodeError::TrailingBits { offset: offset + 1 });
            }
            return Ok(m);
        }
    }
    Err(DecodeError::MissingEnd { offset: w.len() })
}

/// Decodes `0^a0 · C(m1) · 0^a1 · C(m2) · … · 0^ak`.
pub fn decode_stream(s: &BitString) -> Result<Vec<BitString>, DecodeError> {
    let mut decoder = StreamDecoder::new();
    let mut out = Vec::new();
    for &bit in s.bits() {
        if let Some(m) = decoder.push(bit)? {
            out.push(m);
        }
    }
    decoder.finish()?;
    Ok(out)
}

/// Incremental decoder for a single codeword. The first bit fed must be the
/// leading `1` of the start marker.
#[derive(Debug, Clone, Default)]
pub struct CodewordDecoder {
    consumed: usize,
    pending: Option<bool>,
    payload: Vec<bool>,
    done: bool,
}

impl CodewordDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of bits consumed so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Feeds one bit. Returns the payload once the end marker completes.
    pub fn push(&mut self, bit: bool) -> Result<Option<BitString>, DecodeError> {
        let offset = self.consumed;
        if self.done {
            return Err(DecodeError::TrailingBits { offset });
        }
        self.consumed += 1;
        match offset {
            0 if !bit => Err(DecodeError::MissingStart { offset }),
            1 if bit => Err(DecodeError::MissingStart { offset: 0 }),
            0 | 1 => Ok(None),
            _ => match self.pending.take() {
                None => {
                    self.pending = Some(bit);
                    Ok(None)
                }
                Some(first) => match (first, bit) {
                    (true, false) => {
                        self.done = true;
                        Ok(Some(BitString(std::mem::take(&mut self.payload))))
                    }
                    (false, true) => Err(DecodeError::InvalidPair { offset: offset - 1 }),
                    (b, _) => {
                        self.payload.push(b);
                        Ok(None)
                    }
                },
            },
        }
    }
}

/// Incremental decoder for a silence-separated sequence of codewords. A fresh
/// codeword begins at every `1` seen while idle.
#[derive(Debug, Clone, Default)]
pub struct StreamDecoder {
    offset: usize,
    index: usize,
    current: Option<CodewordDecoder>,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// True while a codeword has started but not yet ended.
    pub fn in_codeword(&self) -> bool {
        self.current.is_some()
    }

    pub fn push(&mut self, bit: bool) -> Result<Option<BitString>, DecodeError> {
        let offset = self.offset;
        self.offset += 1;
        let decoder = match &mut self.current {
            Some(d) => d,
            None if !bit => return Ok(None),
            None => self.current.insert(CodewordDecoder::new()),
        };
        let start = offset - decoder.consumed();
        match decoder.push(bit) {
            Ok(Some(m)) => {
                self.current = None;
                self.index += 1;
                Ok(Some(m))
            }
            Ok(None) => Ok(None),
            Err(e) => Err(DecodeError::InStream {
                index: self.index,
                source: Box::new(shift(e, start)),
            }),
        }
    }

    /// Fails if the stream ended inside a codeword.
    pub fn finish(&self) -> Result<(), DecodeError> {
        match &self.current {
            None => Ok(()),
            Some(_) => Err(DecodeError::InStream {
                index: self.index,
                source: Box::new(DecodeError::MissingEnd {
                    offset: self.offset,
                }),
            }),
        }
    }
}

fn shift(e: DecodeError, by: usize) -> DecodeError {
    match e {
        DecodeError::MissingStart { offset } => DecodeError::MissingStart {
            offset: offset + by,
        },
        DecodeError::InvalidPair { offset } => DecodeError::InvalidPair {
            offset: offset + by,
        },
        DecodeError::MissingEnd { offset } => DecodeError::MissingEnd {
            offset: offset + by,
        },
        DecodeError::TrailingBits { offset } => DecodeError::TrailingBits {
            offset: offset + by,
        },
        other => other,
    }
}

/// Encodes an unsigned integer as a codeword of its minimal binary form.
pub fn encode_uint(value: u64) -> BitString {
    encode(&BitString::from_uint(value))
}
