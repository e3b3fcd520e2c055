//! Enumerative sphere shaping with an energy bound and an optional bound
//! on the sum of fourth powers, via a bounded-energy trellis with big-integer
//! path counts. Sequences are ordered lexicographically with ascending levels.

use super::bigutil::{floor_log2, pow2};
use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct SphereTrellis {
    pub levels: Vec<u64>,
    pub block_len: usize,
    pub max_energy: u64,
    pub max_fourth: Option<u64>,
    pub n_sequences: BigUint,
    pub input_bits: usize,
    table: HashMap<(usize, u64, u64), BigUint>,
    full: Vec<BigUint>,
}

impl SphereTrellis {
    pub fn new(
        levels: &[u64],
        block_len: usize,
        max_energy: u64,
        max_fourth: Option<u64>,
    ) -> Result<Self> {
        if levels.is_empty() || block_len == 0 {
            return Err(Error::InvalidArgument("empty levels or zero block length".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("levels must be strictly ascending".into()));
        }
        let mut full = vec![BigUint::one()];
        for r in 1..=block_len {
            let v = &full[r - 1] * levels.len();
            full.push(v);
        }
        let mut t = Self {
            levels: levels.to_vec(),
            block_len,
            max_energy,
            max_fourth,
            n_sequences: BigUint::zero(),
            input_bits: 0,
            table: HashMap::new(),
            full,
        };
        let root_k = max_fourth.unwrap_or(0);
        t.fill(block_len, max_energy, root_k);
        let n = t.count(block_len, max_energy, root_k);
        if n.is_zero() {
            return Err(Error::EmptyShapingSet(format!(
                "no sequence of length {block_len} with energy <= {max_energy}"
            )));
        }
        t.input_bits = floor_log2(&n);
        t.n_sequences = n;
        Ok(t)
    }

    fn trivial(&self, r: usize, be: u64, bk: u64) -> Option<BigUint> {
        if r == 0 {
            return Some(BigUint::one());
        }
        let a0 = self.levels[0];
        let am = *self.levels.last().unwrap();
        let r64 = r as u64;
        let k_ok_min = self.max_fourth.is_none() || bk >= r64 * a0.pow(4);
        if be < r64 * a0 * a0 || !k_ok_min {
            return Some(BigUint::zero());
        }
        let k_ok_max = self.max_fourth.is_none() || bk >= r64 * am.pow(4);
        if be >= r64 * am * am && k_ok_max {
            return Some(self.full[r].clone());
        }
        None
    }

    fn fill(&mut self, r: usize, be: u64, bk: u64) {
        if self.trivial(r, be, bk).is_some() || self.table.contains_key(&(r, be, bk)) {
            return;
        }
        let mut total = BigUint::zero();
        for i in 0..self.levels.len() {
            let a = self.levels[i];
            let (e2, k4) = (a * a, a.pow(4));
            if be < e2 {
                break;
            }
            let nbk = if self.max_fourth.is_some() {
                if bk < k4 {
                    continue;
                }
                bk - k4
            } else {
                0
            };
            self.fill(r - 1, be - e2, nbk);
            total += self.count(r - 1, be - e2, nbk);
        }
        self.table.insert((r, be, bk), total);
    }

    /// Number of completions of length `r` within the remaining budgets.
    fn count(&self, r: usize, be: u64, bk: u64) -> BigUint {
        if let Some(v) = self.trivial(r, be, bk) {
            return v;
        }
        self.table.get(&(r, be, bk)).cloned().unwrap_or_default()
    }

    /// Budgets after placing level index `i`, or None if it does not fit.
    fn step(&self, be: u64, bk: u64, i: usize) -> Option<(u64, u64)> {
        let a = self.levels[i];
        let e2 = a * a;
        if be < e2 {
            return None;
        }
        if self.max_fourth.is_some() {
            let k4 = a.pow(4);
            if bk < k4 {
                return None;
            }
            Some((be - e2, bk - k4))
        } else {
            Some((be - e2, 0))
        }
    }

    fn root(&self) -> (u64, u64) {
        (self.max_energy, self.max_fourth.unwrap_or(0))
    }

    pub fn unrank(&self, index: &BigUint) -> Result<Vec<usize>> {
        if *index >= self.n_sequences {
            return Err(Error::IndexOutOfRange(self.input_bits));
        }
        let mut idx = index.clone();
        let (mut be, mut bk) = self.root();
        let mut out = Vec::with_capacity(self.block_len);
        for j in 0..self.block_len {
            let r = self.block_len - j - 1;
            let mut chosen = None;
            for i in 0..self.levels.len() {
                let Some((ne, nk)) = self.step(be, bk, i) else {
                    continue;
                };
                let c = self.count(r, ne, nk);
                if idx < c {
                    chosen = Some((i, ne, nk));
                    break;
                }
                idx -= c;
            }
            let (i, ne, nk) = chosen.expect("index within range always selects a level");
            out.push(i);
            be = ne;
            bk = nk;
        }
        Ok(out)
    }

    pub fn rank(&self, seq: &[usize]) -> Result<BigUint> {
        if seq.len() != self.block_len {
            return Err(Error::NotInCodebook("wrong block length".into()));
        }
        let mut idx = BigUint::zero();
        let (mut be, mut bk) = self.root();
        for (j, &s) in seq.iter().enumerate() {
            let r = self.block_len - j - 1;
            if s >= self.levels.len() {
                return Err(Error::NotInCodebook("unknown level".into()));
            }
            for i in 0..s {
                if let Some((ne, nk)) = self.step(be, bk, i) {
                    idx += self.count(r, ne, nk);
                }
            }
            let (ne, nk) = self
                .step(be, bk, s)
                .ok_or_else(|| Error::NotInCodebook("energy bound exceeded".into()))?;
            be = ne;
            bk = nk;
        }
        Ok(idx)
    }

    /// Per-position level counts over sequences with index below
    /// `2^input_bits`, as `[position][level]`.
    pub fn position_counts(&self) -> Vec<Vec<BigUint>> {
        let nl = self.levels.len();
        let d = self.block_len;
        let mut counts = vec![vec![BigUint::zero(); nl]; d];
        let limit = pow2(self.input_bits);
        let (boundary, all) = if limit == self.n_sequences {
            (Vec::new(), true)
        } else {
            (self.unrank(&limit).expect("limit below n_sequences"), false)
        };
        let (mut be, mut bk) = self.root();
        let add_subtree = |counts: &mut Vec<Vec<BigUint>>, j: usize, be: u64, bk: u64| {
            // suffix positions j.. are free with budgets (be, bk)
            let r = d - j;
            for row in counts.iter_mut().skip(j) {
                for (c, slot) in row.iter_mut().enumerate() {
                    if let Some((ne, nk)) = self.step(be, bk, c) {
                        *slot += self.count(r - 1, ne, nk);
                    }
                }
            }
        };
        if all {
            add_subtree(&mut counts, 0, be, bk);
            return counts;
        }
        for j in 0..d {
            let r = d - j - 1;
            for a in 0..boundary[j] {
                let Some((ne, nk)) = self.step(be, bk, a) else {
                    continue;
                };
                let sub = self.count(r, ne, nk);
                if sub.is_zero() {
                    continue;
                }
                for (p, &s) in boundary.iter().enumerate().take(j) {
                    counts[p][s] += &sub;
                }
                counts[j][a] += &sub;
                if r > 0 {
                    add_subtree(&mut counts, j + 1, ne, nk);
                }
            }
            let (ne, nk) = self.step(be, bk, boundary[j]).expect("boundary is admissible");
            be = ne;
            bk = nk;
        }
        counts
    }
}

/// Number of sequences of each exact energy `d * a0^2 + stride * j`,
/// returned together with the energies.
pub fn energy_spectrum(levels: &[u64], block_len: usize) -> (Vec<u64>, Vec<BigUint>) {
    let a0 = levels[0] * levels[0];
    let stride = levels
        .iter()
        .map(|a| a * a - a0)
        .fold(0u64, num_integer::gcd)
        .max(1);
    let steps: Vec<usize> = levels.iter().map(|a| ((a * a - a0) / stride) as usize).collect();
    let max_step = *steps.iter().max().unwrap();
    let mut dp = vec![BigUint::one()];
    for r in 1..=block_len {
        let mut next = vec![BigUint::zero(); r * max_step + 1];
        for (j, v) in dp.iter().enumerate() {
            if v.is_zero() {
                continue;
            }
            for &s in &steps {
                next[j + s] += v;
            }
        }
        dp = next;
    }
    let energies = (0..dp.len())
        .map(|j| block_len as u64 * a0 + stride * j as u64)
        .collect();
    (energies, dp)
}

/// Smallest energy bound whose sphere holds at least `2^bits` sequences.
pub fn min_energy_for_bits(levels: &[u64], block_len: usize, bits: usize) -> Result<u64> {
    let (energies, counts) = energy_spectrum(levels, block_len);
    let target = pow2(bits);
    let mut acc = BigUint::zero();
    for (e, c) in energies.iter().zip(&counts) {
        acc += c;
        if acc >= target {
            return Ok(*e);
        }
    }
    Err(Error::EmptyShapingSet(format!(
        "{bits} bits exceed the {} available sequences",
        acc
    )))
}
