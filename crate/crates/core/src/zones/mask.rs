use std::fmt;
use std::io::{self, Read, Write};

use thiserror::Error;

const WORD_BITS: usize = 64;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// W×H bitset in row-major order. Bits past `width * height` in the last
/// word are kept clear so word-level comparisons and popcounts are exact.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("ones", &self.count_ones())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        let bits = width as usize * height as usize;
        Self {
            width,
            height,
            words: vec![0; bits.div_ceil(WORD_BITS)],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        let mut m = Self::new(width, height);
        m.words.iter_mut().for_each(|w| *w = !0);
        m.clear_tail();
        m
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for v in 0..height {
            for u in 0..width {
                if f(u, v) {
                    m.set(u, v, true);
                }
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    fn index(&self, u: u32, v: u32) -> usize {
        debug_assert!(u < self.width && v < self.height);
        v as usize * self.width as usize + u as usize
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.get_index(self.index(u, v))
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, u: u32, v: u32, value: bool) {
        let i = self.index(u, v);
        self.set_index(i, value);
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, value: bool) {
        let bit = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= bit;
        } else {
            self.words[i / WORD_BITS] &= !bit;
        }
    }

    /// Builds a mask one 64-pixel word at a time: `word(base, n)` returns
    /// the bits for pixels `base..base + n`.
    pub fn from_word_fn(width: u32, height: u32, mut word: impl FnMut(usize, usize) -> u64) -> Self {
        let mut m = Self::new(width, height);
        let n = m.len();
        for (wi, w) in m.words.iter_mut().enumerate() {
            let base = wi * WORD_BITS;
            *w = word(base, WORD_BITS.min(n - base));
        }
        m.clear_tail();
        m
    }

    /// Sets the pixels `u0..=u1` of row `v`.
    pub fn fill_span(&mut self, v: u32, u0: u32, u1: u32) {
        if u0 > u1 {
            return;
        }
        let start = self.index(u0, v);
        let end = self.index(u1, v) + 1;
        let (first, last) = (start / WORD_BITS, (end - 1) / WORD_BITS);
        let head = !0u64 << (start % WORD_BITS);
        let tail = !0u64 >> (WORD_BITS - 1 - (end - 1) % WORD_BITS);
        if first == last {
            self.words[first] |= head & tail;
        } else {
            self.words[first] |= head;
            self.words[first + 1..last].iter_mut().for_each(|w| *w = !0);
            self.words[last] |= tail;
        }
    }

    fn clear_tail(&mut self) {
        let rem = self.len() % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        *self == Self::full(self.width, self.height)
    }

    fn check(&self, other: &BinaryMask) -> Result<(), MaskError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ))
        }
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(u64, u64) -> u64) -> Result<Self, MaskError> {
        self.check(other)?;
        let words = self.words.iter().zip(&other.words).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            words,
        })
    }

    pub fn and(&self, other: &BinaryMask) -> Result<Self, MaskError> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<Self, MaskError> {
        self.zip_with(other, |a, b| a | b)
    }

    /// `self \ other`.
    pub fn and_not(&self, other: &BinaryMask) -> Result<Self, MaskError> {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn not(&self) -> Self {
        let mut m = Self {
            width: self.width,
            height: self.height,
            words: self.words.iter().map(|w| !w).collect(),
        };
        m.clear_tail();
        m
    }

    pub fn or_assign(&mut self, other: &BinaryMask) -> Result<(), MaskError> {
        self.check(other)?;
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a |= b);
        Ok(())
    }

    pub fn and_not_assign(&mut self, other: &BinaryMask) -> Result<(), MaskError> {
        self.check(other)?;
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a &= !b);
        Ok(())
    }

    pub fn intersects(&self, other: &BinaryMask) -> bool {
        self.same_shape(other) && self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_shape(other) && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Linear indices of set bits in row-major order.
    pub fn iter_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * WORD_BITS + tz)
            })
        })
    }

    /// `(u, v)` of set bits in row-major order.
    pub fn iter_ones(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.iter_indices().map(move |i| ((i % w) as u32, (i / w) as u32))
    }

    /// Binary PGM (P5, maxval 255) with set pixels written as 255.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = (0..self.len())
            .map(|i| if self.get_index(i) { 255 } else { 0 })
            .collect();
        out.write_all(&bytes)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_pgm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads a P5 mask; any non-zero sample is treated as set.
    pub fn read_pgm<R: Read>(mut input: R) -> Result<Self, MaskError> {
        let mut data = Vec::new();
        input.read_to_end(&mut data)?;
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < data.len() && data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(MaskError::Pgm("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "P5" {
            return Err(MaskError::Pgm(format!("unsupported magic {}", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| MaskError::Pgm(format!("bad header field {s:?}")))
        };
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(MaskError::Pgm(format!("unsupported maxval {maxval}")));
        }
        let n = width as usize * height as usize;
        let raster = data
            .get(pos..pos + n)
            .ok_or_else(|| MaskError::Pgm("truncated raster".into()))?;
        let mut mask = Self::new(width, height);
        for (i, &b) in raster.iter().enumerate() {
            if b != 0 {
                mask.set_index(i, true);
            }
        }
        Ok(mask)
    }
}
