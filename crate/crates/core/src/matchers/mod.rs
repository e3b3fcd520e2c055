//! Distribution matchers for amplitude shaping: constant-composition (CCDM),
//! enumerative sphere shaping (ESS) and kurtosis-limited ESS (K-ESS).

pub mod bigutil;
mod ccdm;
mod ess;

pub use ccdm::Ccdm;
pub use ess::{energy_spectrum, min_energy_for_bits, SphereTrellis};

use crate::constellation::entropy;
use crate::error::{invalid, Error, Result};
use bigutil::{bits_to_big, big_to_bits, floor_log2, multinomial, ratio_pow2};
use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShaperKind {
    Ccdm { composition: Vec<usize> },
    Ess { max_energy: u64 },
    Kess { max_energy: u64, max_fourth: u64 },
}

/// Amplitude shaper description. `levels` are the positive odd amplitude
/// levels in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShaperSpec {
    #[serde(flatten)]
    pub kind: ShaperKind,
    pub block_len: usize,
    pub levels: Vec<u64>,
}

/// Odd levels `1, 3, ..., 2n - 1`.
pub fn odd_levels(n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| 2 * i + 1).collect()
}

impl ShaperSpec {
    pub fn ccdm(levels: Vec<u64>, composition: Vec<usize>) -> Result<Self> {
        if levels.len() != composition.len() {
            return invalid("composition length must match the number of levels");
        }
        let block_len = composition.iter().sum();
        Ok(Self {
            kind: ShaperKind::Ccdm { composition },
            block_len,
            levels,
        })
    }

    pub fn ess(levels: Vec<u64>, block_len: usize, max_energy: u64) -> Self {
        Self {
            kind: ShaperKind::Ess { max_energy },
            block_len,
            levels,
        }
    }

    pub fn kess(levels: Vec<u64>, block_len: usize, max_energy: u64, max_fourth: u64) -> Self {
        Self {
            kind: ShaperKind::Kess {
                max_energy,
                max_fourth,
            },
            block_len,
            levels,
        }
    }

    /// CCDM at a target shaping rate (bits per amplitude).
    pub fn ccdm_for_rate(n_levels: usize, block_len: usize, rate: f64) -> Result<Self> {
        let comp = composition_for_rate(n_levels, block_len, rate)?;
        Self::ccdm(odd_levels(n_levels), comp)
    }

    /// ESS with the smallest energy bound that reaches the target rate.
    pub fn ess_for_rate(n_levels: usize, block_len: usize, rate: f64) -> Result<Self> {
        let levels = odd_levels(n_levels);
        let bits = target_bits(rate, block_len);
        let e = min_energy_for_bits(&levels, block_len, bits)?;
        Ok(Self::ess(levels, block_len, e))
    }
}

fn target_bits(rate: f64, block_len: usize) -> usize {
    (rate * block_len as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Quantise a distribution to integer counts summing to `n`, greedily
/// minimising the divergence of the resulting type from `probs`.
pub fn quantize_distribution(probs: &[f64], n: usize) -> Vec<usize> {
    let mut c: Vec<usize> = probs.iter().map(|p| (p * n as f64).floor() as usize).collect();
    let term = |k: usize, p: f64| {
        if k == 0 {
            0.0
        } else {
            k as f64 * (k as f64 / (n as f64 * p)).ln()
        }
    };
    while c.iter().sum::<usize>() < n {
        let best = (0..c.len())
            .filter(|&i| probs[i] > 0.0)
            .min_by(|&i, &j| {
                let di = term(c[i] + 1, probs[i]) - term(c[i], probs[i]);
                let dj = term(c[j] + 1, probs[j]) - term(c[j], probs[j]);
                di.partial_cmp(&dj).unwrap()
            })
            .unwrap();
        c[best] += 1;
    }
    c
}

fn log2_multinomial(counts: &[usize], log2_fact: &[f64]) -> f64 {
    let d: usize = counts.iter().sum();
    log2_fact[d] - counts.iter().map(|&c| log2_fact[c]).sum::<f64>()
}

/// Composition of length `block_len` over `n_levels` odd levels whose CCDM
/// carries at least `ceil(rate * block_len)` bits, chosen as the lowest
/// energy among quantised Maxwell-Boltzmann distributions.
pub fn composition_for_rate(n_levels: usize, block_len: usize, rate: f64) -> Result<Vec<usize>> {
    if n_levels == 0 || block_len == 0 {
        return invalid("need at least one level and a positive block length");
    }
    let bits = target_bits(rate, block_len);
    let mut log2_fact = vec![0.0; block_len + 1];
    for i in 1..=block_len {
        log2_fact[i] = log2_fact[i - 1] + (i as f64).log2();
    }
    let levels = odd_levels(n_levels);
    let energy = |c: &[usize]| -> u64 {
        c.iter().zip(&levels).map(|(&n, &a)| n as u64 * a * a).sum()
    };
    let mut best: Option<(u64, Vec<usize>)> = None;
    let n_grid = 4000;
    for i in 0..=n_grid {
        let lambda = 0.5 * (i as f64 / n_grid as f64).powi(2);
        let p = crate::constellation::mb_amplitudes(n_levels, lambda)?;
        let c = quantize_distribution(&p, block_len);
        if log2_multinomial(&c, &log2_fact) < bits as f64 - 1e-6 {
            continue;
        }
        if floor_log2(&multinomial(&c)) < bits {
            continue;
        }
        let e = energy(&c);
        if best.as_ref().is_none_or(|(be, _)| e < *be) {
            best = Some((e, c));
        }
    }
    best.map(|(_, c)| c).ok_or_else(|| {
        Error::EmptyShapingSet(format!(
            "rate {rate} not reachable with {n_levels} levels and block length {block_len}"
        ))
    })
}

/// A ready-to-use matcher built from a [`ShaperSpec`].
#[derive(Debug, Clone)]
pub enum Matcher {
    Ccdm(Ccdm),
    Sphere(SphereTrellis),
}

impl Matcher {
    pub fn new(spec: &ShaperSpec) -> Result<Self> {
        if spec.levels.is_empty() || spec.levels.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("levels must be non-empty and strictly ascending");
        }
        Ok(match &spec.kind {
            ShaperKind::Ccdm { composition } => {
                let m = Ccdm::new(composition)?;
                if m.block_len != spec.block_len {
                    return invalid("block length does not match composition");
                }
                Matcher::Ccdm(m)
            }
            ShaperKind::Ess { max_energy } => Matcher::Sphere(SphereTrellis::new(
                &spec.levels,
                spec.block_len,
                *max_energy,
                None,
            )?),
            ShaperKind::Kess {
                max_energy,
                max_fourth,
            } => Matcher::Sphere(SphereTrellis::new(
                &spec.levels,
                spec.block_len,
                *max_energy,
                Some(*max_fourth),
            )?),
        })
    }

    pub fn input_bits(&self) -> usize {
        match self {
            Matcher::Ccdm(m) => m.input_bits,
            Matcher::Sphere(m) => m.input_bits,
        }
    }

    pub fn block_len(&self) -> usize {
        match self {
            Matcher::Ccdm(m) => m.block_len,
            Matcher::Sphere(m) => m.block_len,
        }
    }

    pub fn n_sequences(&self) -> &BigUint {
        match self {
            Matcher::Ccdm(m) => &m.n_sequences,
            Matcher::Sphere(m) => &m.n_sequences,
        }
    }

    /// Level indices for an input index below `2^input_bits`.
    pub fn encode_index(&self, index: &BigUint) -> Result<Vec<usize>> {
        if index.bits() as usize > self.input_bits() {
            return Err(Error::IndexOutOfRange(self.input_bits()));
        }
        match self {
            Matcher::Ccdm(m) => m.unrank(&m.codeword_rank(index)),
            Matcher::Sphere(m) => m.unrank(index),
        }
    }

    pub fn decode_index(&self, seq: &[usize]) -> Result<BigUint> {
        let idx = match self {
            Matcher::Ccdm(m) => m
                .codeword_index(&m.rank(seq)?)
                .ok_or_else(|| Error::NotInCodebook("sequence is not a code word".into()))?,
            Matcher::Sphere(m) => m.rank(seq)?,
        };
        if idx.bits() as usize > self.input_bits() {
            return Err(Error::NotInCodebook("index outside the used range".into()));
        }
        Ok(idx)
    }

    /// Encode exactly `input_bits` bits (MSB first).
    pub fn encode(&self, bits: &[bool]) -> Result<Vec<usize>> {
        if bits.len() != self.input_bits() {
            return invalid(format!(
                "expected {} input bits, got {}",
                self.input_bits(),
                bits.len()
            ));
        }
        self.encode_index(&bits_to_big(bits))
    }

    pub fn decode(&self, seq: &[usize]) -> Result<Vec<bool>> {
        Ok(big_to_bits(&self.decode_index(seq)?, self.input_bits()))
    }

    /// Encode a uniformly random input.
    pub fn encode_random<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let bits: Vec<bool> = (0..self.input_bits()).map(|_| rng.random()).collect();
        self.encode(&bits).expect("random input has the right length")
    }

    /// Per-position marginals, `[position][level]`. Exact over the used
    /// codebook for sphere shapers; the composition at every position for
    /// CCDM, whose position-averaged marginal equals the composition exactly.
    pub fn position_marginals(&self) -> Vec<Vec<f64>> {
        let counts = match self {
            Matcher::Ccdm(m) => {
                let d = m.block_len as f64;
                let row: Vec<f64> = m.composition.iter().map(|&c| c as f64 / d).collect();
                return vec![row; m.block_len];
            }
            Matcher::Sphere(m) => m.position_counts(),
        };
        let k = self.input_bits();
        counts
            .iter()
            .map(|row| row.iter().map(|c| ratio_pow2(c, k)).collect())
            .collect()
    }

    /// Marginal amplitude distribution averaged over block positions.
    pub fn marginal(&self) -> Vec<f64> {
        let pm = self.position_marginals();
        let nl = pm[0].len();
        let d = pm.len() as f64;
        (0..nl).map(|a| pm.iter().map(|r| r[a]).sum::<f64>() / d).collect()
    }

    /// Shaping rate `input_bits / block_len` in bits per amplitude.
    pub fn rate(&self) -> f64 {
        self.input_bits() as f64 / self.block_len() as f64
    }
}

/// Rate loss `H(marginal) - input_bits / block_len` in bits per amplitude.
pub fn rate_loss(spec: &ShaperSpec) -> Result<f64> {
    let m = Matcher::new(spec)?;
    Ok(entropy(&m.marginal()) - m.rate())
}

/// How amplitudes of shaped blocks are placed on QAM components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    /// Each block fills one real component over `D` symbols.
    Dim1,
    /// Each block fills both components of one polarisation over `D/2` symbols.
    Dim2,
    /// Each block fills all four components over `D/4` dual-polarised symbols.
    Dim4,
}

impl std::str::FromStr for Mapping {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dim1" | "1d" | "1" => Ok(Mapping::Dim1),
            "dim2" | "2d" | "2" => Ok(Mapping::Dim2),
            "dim4" | "4d" | "4" => Ok(Mapping::Dim4),
            _ => invalid(format!("unknown mapping '{s}'")),
        }
    }
}

/// Standardised moments of the QAM symbols induced by a shaper.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct InducedMoments {
    pub mu4: f64,
    pub mu6: f64,
    /// True when computed exactly from codebook marginals.
    pub exact: bool,
}

/// Standardised fourth and sixth moments of per-polarisation QAM symbols.
/// One-dimensional pairing is evaluated exactly from position marginals;
/// the others by Monte Carlo over `n_blocks` random blocks.
pub fn induced_moments(
    spec: &ShaperSpec,
    pairing: Mapping,
    n_blocks: usize,
    seed: u64,
) -> Result<InducedMoments> {
    let m = Matcher::new(spec)?;
    let lv: Vec<f64> = spec.levels.iter().map(|&a| (a * a) as f64).collect();
    match pairing {
        Mapping::Dim1 => {
            let pm = m.position_marginals();
            let (mut s2, mut s4, mut s6) = (0.0, 0.0, 0.0);
            for row in &pm {
                let e1: f64 = row.iter().zip(&lv).map(|(p, e)| p * e).sum();
                let e2: f64 = row.iter().zip(&lv).map(|(p, e)| p * e * e).sum();
                let e3: f64 = row.iter().zip(&lv).map(|(p, e)| p * e * e * e).sum();
                // |x|^2 = a^2 + b^2 with a, b independent and identically distributed
                s2 += 2.0 * e1;
                s4 += 2.0 * e2 + 2.0 * e1 * e1;
                s6 += 2.0 * e3 + 6.0 * e2 * e1;
            }
            let d = pm.len() as f64;
            let (s2, s4, s6) = (s2 / d, s4 / d, s6 / d);
            Ok(InducedMoments {
                mu4: s4 / (s2 * s2),
                mu6: s6 / (s2 * s2 * s2),
                exact: true,
            })
        }
        Mapping::Dim2 | Mapping::Dim4 => {
            if spec.block_len % 2 != 0 {
                return invalid("block length must be even for joint pairing");
            }
            let mut rng = crate::numeric::rng_from_seed(seed);
            let (mut s2, mut s4, mut s6) = (0.0, 0.0, 0.0);
            let mut n = 0usize;
            for _ in 0..n_blocks.max(1) {
                let blk = m.encode_random(&mut rng);
                for pair in blk.chunks_exact(2) {
                    let e = lv[pair[0]] + lv[pair[1]];
                    s2 += e;
                    s4 += e * e;
                    s6 += e * e * e;
                    n += 1;
                }
            }
            let nf = n as f64;
            let (s2, s4, s6) = (s2 / nf, s4 / nf, s6 / nf);
            Ok(InducedMoments {
                mu4: s4 / (s2 * s2),
                mu6: s6 / (s2 * s2 * s2),
                exact: false,
            })
        }
    }
}

/// Standardised moments of the one-dimensional amplitude marginal.
pub fn amplitude_moments(levels: &[u64], marginal: &[f64]) -> (f64, f64) {
    let e: Vec<f64> = levels.iter().map(|&a| (a * a) as f64).collect();
    let m2: f64 = e.iter().zip(marginal).map(|(e, p)| p * e).sum();
    let m4: f64 = e.iter().zip(marginal).map(|(e, p)| p * e * e).sum();
    let m6: f64 = e.iter().zip(marginal).map(|(e, p)| p * e * e * e).sum();
    (m4 / (m2 * m2), m6 / (m2 * m2 * m2))
}
