use super::{SelectionConfig, Strategy};
use crate::constellation::Constellation;
use crate::error::{invalid, Result};
use crate::matchers::{Mapping, Matcher};
use crate::numeric::{rng_from_seed, sub_seed};
use crate::pas::{induced_constellation, map_blocks, unmap_blocks, Source};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::HashSet;

/// Inputs that fix every candidate of one selection block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPayload {
    /// Payload bits per shaper, reserved bits excluded.
    pub shaper_bits: Vec<Vec<bool>>,
    /// Sign bits `(in-phase, quadrature)` per polarisation and position.
    pub signs: Vec<Vec<(bool, bool)>>,
    /// Reserved-bit dither shared by all candidates of the block.
    pub dither: Vec<bool>,
    /// Base symbols for i.i.d. sources.
    pub symbols: Option<Vec<Vec<Complex64>>>,
}

/// Builds the candidate set of each selection block.
#[derive(Debug, Clone)]
pub struct CandidateGenerator {
    strategy: Strategy,
    n_pols: usize,
    mapping: Mapping,
    matcher: Option<Matcher>,
    constellation: Constellation,
    scaled_levels: Vec<f64>,
    block_symbols: usize,
    shapers_per_block: usize,
    /// Reserved-bit patterns u_c, with u_0 = 0.
    words: Vec<Vec<bool>>,
    /// Position permutations, identity first.
    perms: Vec<Vec<usize>>,
}

impl CandidateGenerator {
    pub fn new(source: &Source, n_pols: usize, cfg: &SelectionConfig) -> Result<Self> {
        if cfg.candidates == 0 {
            return invalid("at least one candidate is required");
        }
        if n_pols == 0 || n_pols > 2 {
            return invalid("one or two polarisations supported");
        }
        let (matcher, constellation, scaled_levels, mapping, block_symbols, shapers) = match source {
            Source::Shaped { spec, mapping } => {
                let m = Matcher::new(spec)?;
                let c = induced_constellation(&m, spec)?;
                let lv = spec.levels.iter().map(|&a| a as f64 * c.grid_scale).collect();
                let d = spec.block_len;
                let (group_symbols, group_blocks) = match mapping {
                    Mapping::Dim1 => (d, 2 * n_pols),
                    Mapping::Dim2 => (d / 2, n_pols),
                    Mapping::Dim4 => (d / 4, 1),
                };
                if group_symbols == 0 {
                    return invalid("block length too short for the mapping");
                }
                let groups = ((cfg.block_symbols as f64 / group_symbols as f64).round() as usize).max(1);
                (Some(m), c, lv, *mapping, groups * group_symbols, groups * group_blocks)
            }
            Source::Iid { constellation } => {
                if matches!(cfg.strategy, Strategy::FlippingBits { .. }) {
                    return invalid("flipping bits need a distribution matcher source");
                }
                if cfg.block_symbols == 0 {
                    return invalid("selection blocks must contain symbols");
                }
                (None, constellation.clone(), Vec::new(), Mapping::Dim2, cfg.block_symbols, 0)
            }
        };
        let mut rng = rng_from_seed(sub_seed(cfg.seed, 11));
        let mut words: Vec<Vec<bool>> = Vec::new();
        let mut perms = vec![(0..block_symbols).collect::<Vec<_>>()];
        if matches!(cfg.strategy, Strategy::Interleaving) {
            words.push(Vec::new());
        }
        match cfg.strategy {
            Strategy::FlippingBits { nu } => {
                let m = matcher.as_ref().expect("shaped source");
                let total = nu * shapers;
                if nu == 0 || nu > m.input_bits() {
                    return invalid(format!("need 1 <= nu <= {} input bits", m.input_bits()));
                }
                if total < 64 && cfg.candidates as u128 > 1u128 << total {
                    return invalid(format!(
                        "{} candidates exceed the 2^{total} reserved-bit patterns",
                        cfg.candidates
                    ));
                }
                words.push(vec![false; total]);
                let mut seen: HashSet<Vec<bool>> = HashSet::from([words[0].clone()]);
                while words.len() < cfg.candidates {
                    let w: Vec<bool> = (0..total).map(|_| rng.random()).collect();
                    // duplicates are redrawn
                    if seen.insert(w.clone()) {
                        words.push(w);
                    }
                }
            }
            Strategy::Interleaving => {
                let mut seen: HashSet<Vec<usize>> = HashSet::from([perms[0].clone()]);
                let max_perms = (1..=block_symbols).try_fold(1usize, |a, b| a.checked_mul(b));
                if max_perms.is_some_and(|m| cfg.candidates > m) {
                    return invalid("more candidates than distinct permutations");
                }
                while perms.len() < cfg.candidates {
                    let mut p = perms[0].clone();
                    p.shuffle(&mut rng);
                    if seen.insert(p.clone()) {
                        perms.push(p);
                    }
                }
            }
        }
        Ok(Self {
            strategy: cfg.strategy,
            n_pols,
            mapping,
            matcher,
            constellation,
            scaled_levels,
            block_symbols,
            shapers_per_block: shapers,
            words,
            perms,
        })
    }

    /// Symbols per polarisation in one selection block.
    pub fn block_symbols(&self) -> usize {
        self.block_symbols
    }

    pub fn shapers_per_block(&self) -> usize {
        self.shapers_per_block
    }

    pub fn n_candidates(&self) -> usize {
        match self.strategy {
            Strategy::FlippingBits { .. } => self.words.len(),
            Strategy::Interleaving => self.perms.len(),
        }
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    fn reserved_bits(&self) -> usize {
        match self.strategy {
            Strategy::FlippingBits { nu } => nu,
            Strategy::Interleaving => 0,
        }
    }

    /// Payload bits carried by each shaper.
    pub fn payload_bits_per_shaper(&self) -> usize {
        self.matcher.as_ref().map_or(0, |m| m.input_bits() - self.reserved_bits())
    }

    /// Draw the payload of one block.
    pub fn random_payload<R: Rng>(&self, rng: &mut R) -> BlockPayload {
        let k = self.payload_bits_per_shaper();
        let shaper_bits = (0..self.shapers_per_block)
            .map(|_| (0..k).map(|_| rng.random()).collect())
            .collect();
        let signs = (0..self.n_pols)
            .map(|_| (0..self.block_symbols).map(|_| (rng.random(), rng.random())).collect())
            .collect();
        let symbols = self.matcher.is_none().then(|| {
            (0..self.n_pols)
                .map(|_| self.constellation.sample(self.block_symbols, rng))
                .collect()
        });
        let dither = (0..self.reserved_bits() * self.shapers_per_block).map(|_| rng.random()).collect();
        BlockPayload { shaper_bits, signs, dither, symbols }
    }

    fn shaped_symbols(&self, payload: &BlockPayload, word: &[bool]) -> Result<Vec<Vec<Complex64>>> {
        let m = self.matcher.as_ref().expect("shaped source");
        let nu = self.reserved_bits();
        if payload.shaper_bits.len() != self.shapers_per_block || word.len() != nu * self.shapers_per_block {
            return invalid("payload has the wrong number of shapers");
        }
        let blocks = payload
            .shaper_bits
            .iter()
            .enumerate()
            .map(|(j, bits)| {
                // reserved bits lead the matcher input
                let mut input = word[j * nu..(j + 1) * nu].to_vec();
                input.extend_from_slice(bits);
                m.encode(&input)
            })
            .collect::<Result<Vec<_>>>()?;
        let idx = map_blocks(&blocks, self.mapping, self.n_pols)?;
        let sign = |b: bool| if b { -1.0 } else { 1.0 };
        Ok(idx
            .iter()
            .zip(&payload.signs)
            .map(|(p, s)| {
                p.iter()
                    .zip(s)
                    .map(|(&(i, q), &(si, sq))| {
                        Complex64::new(sign(si) * self.scaled_levels[i], sign(sq) * self.scaled_levels[q])
                    })
                    .collect()
            })
            .collect())
    }

    /// Candidate `index` of a block, per polarisation.
    pub fn candidate(&self, payload: &BlockPayload, index: usize) -> Result<Vec<Vec<Complex64>>> {
        if index >= self.n_candidates() {
            return invalid("candidate index out of range");
        }
        match self.strategy {
            Strategy::FlippingBits { .. } => {
                let word: Vec<bool> = payload.dither.iter().zip(&self.words[index]).map(|(a, b)| a ^ b).collect();
                self.shaped_symbols(payload, &word)
            }
            Strategy::Interleaving => {
                let base = match &payload.symbols {
                    Some(s) => s.clone(),
                    None => self.shaped_symbols(payload, &[])?,
                };
                let perm = &self.perms[index];
                Ok(base.iter().map(|p| perm.iter().map(|&i| p[i]).collect()).collect())
            }
        }
    }

    pub fn candidates(&self, payload: &BlockPayload) -> Result<Vec<Vec<Vec<Complex64>>>> {
        (0..self.n_candidates()).map(|c| self.candidate(payload, c)).collect()
    }

    /// Undo the interleaver of candidate `index`.
    pub fn deinterleave(&self, symbols: &[Vec<Complex64>], index: usize) -> Vec<Vec<Complex64>> {
        match self.strategy {
            Strategy::FlippingBits { .. } => symbols.to_vec(),
            Strategy::Interleaving => {
                let perm = &self.perms[index];
                symbols
                    .iter()
                    .map(|p| {
                        let mut out = vec![Complex64::default(); p.len()];
                        for (k, &i) in perm.iter().enumerate() {
                            out[i] = p[k];
                        }
                        out
                    })
                    .collect()
            }
        }
    }

    /// Recover the shaper payload bits of a transmitted candidate.
    pub fn recover_bits(&self, symbols: &[Vec<Complex64>], index: usize) -> Result<Vec<Vec<bool>>> {
        let m = match &self.matcher {
            Some(m) => m,
            None => return invalid("i.i.d. sources carry no shaper payload"),
        };
        let base = self.deinterleave(symbols, index);
        let nearest = |v: f64| {
            let a = v.abs();
            (0..self.scaled_levels.len())
                .min_by(|&x, &y| (self.scaled_levels[x] - a).abs().total_cmp(&(self.scaled_levels[y] - a).abs()))
                .unwrap()
        };
        let levels: Vec<Vec<(usize, usize)>> = base
            .iter()
            .map(|p| p.iter().map(|x| (nearest(x.re), nearest(x.im))).collect())
            .collect();
        let nu = self.reserved_bits();
        unmap_blocks(&levels, self.mapping, m.block_len())?
            .iter()
            .map(|b| Ok(m.decode(b)?[nu..].to_vec()))
            .collect()
    }
}
