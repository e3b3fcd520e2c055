//! Constant-composition distribution matching by exact ranking of
//! multiset permutations in lexicographic order, with code words spread
//! evenly over the type class.

use super::bigutil::{floor_log2, multinomial, pow2};
use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::Zero;

#[derive(Debug, Clone)]
pub struct Ccdm {
    pub composition: Vec<usize>,
    pub block_len: usize,
    pub n_sequences: BigUint,
    pub input_bits: usize,
}

impl Ccdm {
    pub fn new(composition: &[usize]) -> Result<Self> {
        let block_len: usize = composition.iter().sum();
        if block_len == 0 {
            return Err(Error::EmptyShapingSet("composition has zero length".into()));
        }
        let n_sequences = multinomial(composition);
        Ok(Self {
            composition: composition.to_vec(),
            block_len,
            input_bits: floor_log2(&n_sequences),
            n_sequences,
        })
    }

    /// Map an index in `[0, n_sequences)` to level indices.
    pub fn unrank(&self, index: &BigUint) -> Result<Vec<usize>> {
        if *index >= self.n_sequences {
            return Err(Error::IndexOutOfRange(self.input_bits));
        }
        let mut idx = index.clone();
        let mut rem = self.composition.clone();
        let mut total = self.n_sequences.clone();
        let mut out = Vec::with_capacity(self.block_len);
        for r in (1..=self.block_len).rev() {
            let mut chosen = None;
            for (a, &na) in rem.iter().enumerate() {
                if na == 0 {
                    continue;
                }
                let sub = &total * na / r;
                if idx < sub {
                    chosen = Some((a, sub));
                    break;
                }
                idx -= sub;
            }
            let (a, sub) = chosen.expect("index within range always selects a level");
            rem[a] -= 1;
            total = sub;
            out.push(a);
        }
        Ok(out)
    }

    /// Lexicographic rank of a sequence of level indices.
    pub fn rank(&self, seq: &[usize]) -> Result<BigUint> {
        if seq.len() != self.block_len {
            return Err(Error::NotInCodebook("wrong block length".into()));
        }
        let mut rem = self.composition.clone();
        let mut total = self.n_sequences.clone();
        let mut idx = BigUint::zero();
        for (j, &s) in seq.iter().enumerate() {
            let r = self.block_len - j;
            if s >= rem.len() || rem[s] == 0 {
                return Err(Error::NotInCodebook("composition violated".into()));
            }
            for &na in rem.iter().take(s) {
                if na > 0 {
                    idx += &total * na / r;
                }
            }
            total = &total * rem[s] / r;
            rem[s] -= 1;
        }
        Ok(idx)
    }

    /// Type-class rank used for input index `i`: ⌊i·N / 2^k⌋. Spreading the
    /// 2^k code words evenly over the type class (as arithmetic-coding CCDM
    /// does) keeps every block position close to the target composition.
    pub fn codeword_rank(&self, index: &BigUint) -> BigUint {
        (index * &self.n_sequences) >> self.input_bits
    }

    /// Inverse of [`Self::codeword_rank`], if `rank` is a code word.
    pub fn codeword_index(&self, rank: &BigUint) -> Option<BigUint> {
        let scaled = rank << self.input_bits;
        let i = (&scaled + &self.n_sequences - 1u32) / &self.n_sequences;
        (i < pow2(self.input_bits) && self.codeword_rank(&i) == *rank).then_some(i)
    }

}
