//! Packed bit vectors backing data points and frequency masks.
//!
//! Feature index 0 is the lowest-order bit of word 0; bits past `len` are
//! kept zero so equality, hashing and popcounts work on whole words. Inner
//! products `<f, x>` reduce to AND + popcount, which is what the hot SHAP
//! loop spends its time on.

use std::cmp::Ordering;
use std::fmt;

const WORD_BITS: usize = 64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitWords {
    len: usize,
    words: Vec<u64>,
}

impl BitWords {
    pub fn zeros(len: usize) -> Self {
        BitWords {
            len,
            words: vec![0u64; len.div_ceil(WORD_BITS)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut out = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out.set(i, true);
            }
        }
        out
    }

    /// Builds from indices of set bits. Indices must be in range; duplicates
    /// are idempotent.
    pub fn from_set_indices(len: usize, indices: &[usize]) -> Option<Self> {
        let mut out = Self::zeros(len);
        for &i in indices {
            if i >= len {
                return None;
            }
            out.set(i, true);
        }
        Some(out)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// popcount(self & other); panics in debug if lengths differ.
    pub fn and_count_ones(&self, other: &BitWords) -> usize {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Parity of the inner product `<self, other>` over GF(2).
    pub fn parity_and(&self, other: &BitWords) -> bool {
        debug_assert_eq!(self.len, other.len);
        let mut acc = 0u64;
        for (a, b) in self.words.iter().zip(&other.words) {
            acc ^= a & b;
        }
        acc.count_ones() & 1 == 1
    }

    pub fn xor(&self, other: &BitWords) -> BitWords {
        debug_assert_eq!(self.len, other.len);
        BitWords {
            len: self.len,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a ^ b)
                .collect(),
        }
    }

    pub fn and(&self, other: &BitWords) -> BitWords {
        debug_assert_eq!(self.len, other.len);
        BitWords {
            len: self.len,
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
        }
    }

    /// Copy with bit `i` toggled.
    pub fn toggled(&self, i: usize) -> BitWords {
        let mut out = self.clone();
        out.set(i, !out.get(i));
        out
    }

    pub fn is_subset_of(&self, other: &BitWords) -> bool {
        debug_assert_eq!(self.len, other.len);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    /// Ascending indices of set bits.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rem = w;
            std::iter::from_fn(move || {
                if rem == 0 {
                    None
                } else {
                    let tz = rem.trailing_zeros() as usize;
                    rem &= rem - 1;
                    Some(wi * WORD_BITS + tz)
                }
            })
        })
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Wraps raw words; the caller keeps bits past `len` zero.
    pub(crate) fn from_raw_words(len: usize, words: Vec<u64>) -> Self {
        debug_assert_eq!(words.len(), len.div_ceil(WORD_BITS));
        BitWords { len, words }
    }

    /// Interprets the mask as a little-endian packed integer (bit 0 least
    /// significant) and compares numerically. This is the total order used
    /// for deterministic iteration and tie-breaking.
    pub fn cmp_numeric(&self, other: &BitWords) -> Ordering {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter().rev().zip(other.words.iter().rev()) {
            match a.cmp(b) {
                Ordering::Equal => continue,
                ord => return ord,
            }
        }
        Ordering::Equal
    }

    /// Row index in a natural-order truth table, where feature 0 is the
    /// most significant bit. Only defined for `len <= 63`.
    pub fn truth_table_index(&self) -> Option<u64> {
        if self.len > 63 {
            return None;
        }
        let mut idx = 0u64;
        for j in 0..self.len {
            idx = (idx << 1) | u64::from(self.get(j));
        }
        Some(idx)
    }

    /// Inverse of [`BitWords::truth_table_index`].
    pub fn from_truth_table_index(len: usize, index: u64) -> Self {
        assert!(len <= 63, "truth-table indexing requires len <= 63");
        let mut out = Self::zeros(len);
        for j in 0..len {
            if (index >> (len - 1 - j)) & 1 == 1 {
                out.set(j, true);
            }
        }
        out
    }
}

impl fmt::Debug for BitWords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", u8::from(self.get(i)))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_matches_popcount() {
        let a = BitWords::from_bools(&[true, false, true, true, false]);
        let b = BitWords::from_bools(&[true, true, true, false, false]);
        assert_eq!(a.and_count_ones(&b), 2);
        assert!(!a.parity_and(&b));
        let c = BitWords::from_bools(&[true, false, false, false, false]);
        assert!(a.parity_and(&c));
    }

    #[test]
    fn ones_iterates_ascending() {
        let a = BitWords::from_set_indices(130, &[0, 63, 64, 129]).unwrap();
        assert_eq!(a.ones().collect::<Vec<_>>(), vec![0, 63, 64, 129]);
        assert_eq!(a.count_ones(), 4);
    }

    #[test]
    fn numeric_order_is_little_endian() {
        let lo = BitWords::from_set_indices(4, &[0]).unwrap(); // value 1
        let hi = BitWords::from_set_indices(4, &[1]).unwrap(); // value 2
        let both = BitWords::from_set_indices(4, &[0, 1]).unwrap(); // value 3
        assert_eq!(lo.cmp_numeric(&hi), Ordering::Less);
        assert_eq!(both.cmp_numeric(&hi), Ordering::Greater);
        assert_eq!(lo.cmp_numeric(&lo), Ordering::Equal);
    }

    #[test]
    fn truth_table_index_is_big_endian_in_features() {
        // x = (1, 0): feature 0 set -> index 2 of 4.
        let x = BitWords::from_bools(&[true, false]);
        assert_eq!(x.truth_table_index(), Some(2));
        let back = BitWords::from_truth_table_index(2, 2);
        assert_eq!(back, x);
    }

    #[test]
    fn tail_bits_stay_zero_after_toggle() {
        let a = BitWords::zeros(65);
        let b = a.toggled(64);
        assert_eq!(b.count_ones(), 1);
        assert_eq!(b.ones().collect::<Vec<_>>(), vec![64]);
    }
}
