//! Probabilistic amplitude shaping pipeline: shaped amplitude blocks are
//! mapped onto QAM components, given uniform signs, normalised and
//! interleaved with pilots into symbol frames.

use crate::constellation::{qam_from_amplitudes, Constellation};
use crate::error::{invalid, Error, Result};
use crate::matchers::{Mapping, Matcher, ShaperSpec};
use crate::numeric::{rng_from_seed, sub_seed};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Shaping rate `(k - nu) / d` as a reduced fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub num: u64,
    pub den: u64,
}

impl Rate {
    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Rate in bits per amplitude of a shaper with `k` input bits of which `nu`
/// are reserved (e.g. for sequence selection), over blocks of `d` amplitudes.
pub fn shaping_rate(k: u64, nu: u64, d: u64) -> Result<Rate> {
    if d == 0 || nu > k {
        return invalid("need d > 0 and nu <= k");
    }
    let num = k - nu;
    let g = num_integer::gcd(num, d).max(1);
    Ok(Rate {
        num: num / g,
        den: d / g,
    })
}

/// Where the symbols of a frame come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Source {
    /// Blocks from a distribution matcher placed with `mapping`.
    Shaped { spec: ShaperSpec, mapping: Mapping },
    /// Independent symbols drawn from a constellation.
    Iid { constellation: Constellation },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameConfig {
    pub source: Source,
    pub n_pols: usize,
    /// Total symbols per polarisation including pilots.
    pub n_symbols: usize,
    /// Fraction of pilot symbols, placed periodically from index 0.
    pub pilot_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub label: String,
    pub seed: u64,
    pub pilot_period: Option<usize>,
    pub source: Option<String>,
}

/// Unit-mean-energy symbols for one or two polarisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolFrame {
    pub pols: Vec<Vec<Complex64>>,
    pub pilot_mask: Vec<bool>,
    pub meta: FrameMeta,
}

impl SymbolFrame {
    pub fn len(&self) -> usize {
        self.pilot_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pilot_mask.is_empty()
    }

    pub fn n_pols(&self) -> usize {
        self.pols.len()
    }

    /// Symbol energies `|x_k|^2` of one polarisation.
    pub fn energies(&self, pol: usize) -> Vec<f64> {
        self.pols[pol].iter().map(|x| x.norm_sqr()).collect()
    }

    pub fn data_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.pilot_mask[k]).collect()
    }

    pub fn from_symbols(pols: Vec<Vec<Complex64>>) -> Self {
        let n = pols[0].len();
        Self {
            pols,
            pilot_mask: vec![false; n],
            meta: FrameMeta::default(),
        }
    }
}

/// Pilot positions for a pilot rate: every `round(1 / rate)`-th symbol
/// starting at index 0.
pub fn pilot_period(rate: f64) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return invalid("pilot rate must lie in (0, 1]");
    }
    Ok((1.0 / rate).round().max(1.0) as usize)
}

/// Place amplitude blocks (level indices) on QAM components. Returns
/// per-polarisation sequences of `(in-phase, quadrature)` level indices.
pub fn map_blocks(
    blocks: &[Vec<usize>],
    mapping: Mapping,
    n_pols: usize,
) -> Result<Vec<Vec<(usize, usize)>>> {
    if n_pols == 0 || n_pols > 2 {
        return invalid("one or two polarisations supported");
    }
    let d = blocks.first().map_or(0, |b| b.len());
    let comps = 2 * n_pols;
    let mut out = vec![Vec::new(); n_pols];
    match mapping {
        Mapping::Dim1 => {
            for group in blocks.chunks(comps) {
                if group.len() < comps {
                    break;
                }
                for t in 0..d {
                    for (p, o) in out.iter_mut().enumerate() {
                        o.push((group[2 * p][t], group[2 * p + 1][t]));
                    }
                }
            }
        }
        Mapping::Dim2 => {
            if d % 2 != 0 {
                return invalid("two-dimensional mapping needs an even block length");
            }
            for group in blocks.chunks(n_pols) {
                if group.len() < n_pols {
                    break;
                }
                for (p, b) in group.iter().enumerate() {
                    for pair in b.chunks_exact(2) {
                        out[p].push((pair[0], pair[1]));
                    }
                }
            }
        }
        Mapping::Dim4 => {
            if n_pols != 2 || d % 4 != 0 {
                return invalid("four-dimensional mapping needs dual polarisation and 4 | D");
            }
            for b in blocks {
                for q in b.chunks_exact(4) {
                    out[0].push((q[0], q[1]));
                    out[1].push((q[2], q[3]));
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`map_blocks`].
pub fn unmap_blocks(
    pols: &[Vec<(usize, usize)>],
    mapping: Mapping,
    block_len: usize,
) -> Result<Vec<Vec<usize>>> {
    let n_pols = pols.len();
    let n = pols[0].len();
    let mut blocks = Vec::new();
    match mapping {
        Mapping::Dim1 => {
            for start in (0..n).step_by(block_len) {
                if start + block_len > n {
                    break;
                }
                for p in pols {
                    blocks.push(p[start..start + block_len].iter().map(|c| c.0).collect());
                    blocks.push(p[start..start + block_len].iter().map(|c| c.1).collect());
                }
            }
        }
        Mapping::Dim2 => {
            let per = block_len / 2;
            for start in (0..n).step_by(per) {
                if start + per > n {
                    break;
                }
                for p in pols {
                    blocks.push(p[start..start + per].iter().flat_map(|c| [c.0, c.1]).collect());
                }
            }
        }
        Mapping::Dim4 => {
            if n_pols != 2 {
                return invalid("four-dimensional mapping needs dual polarisation");
            }
            let per = block_len / 4;
            for start in (0..n).step_by(per) {
                if start + per > n {
                    break;
                }
                blocks.push(
                    (start..start + per)
                        .flat_map(|t| [pols[0][t].0, pols[0][t].1, pols[1][t].0, pols[1][t].1])
                        .collect(),
                );
            }
        }
    }
    Ok(blocks)
}

/// The QAM constellation (with induced distribution) that shaped frames are
/// normalised against.
pub fn induced_constellation(matcher: &Matcher, spec: &ShaperSpec) -> Result<Constellation> {
    let marg = matcher.marginal();
    let order = (2 * spec.levels.len()).pow(2);
    if spec.levels.iter().enumerate().any(|(i, &a)| a != 2 * i as u64 + 1) {
        return invalid("shaped QAM needs levels 1, 3, 5, ...");
    }
    qam_from_amplitudes(order, &marg)
}

/// Assemble a frame: shaped or i.i.d. data symbols with uniform signs,
/// normalised to unit mean energy, with periodic pilots drawn from the same
/// distribution.
pub fn assemble_frame(cfg: &FrameConfig, seed: u64) -> Result<SymbolFrame> {
    if cfg.n_symbols == 0 {
        return invalid("frame must contain at least one symbol");
    }
    let period = cfg.pilot_rate.map(pilot_period).transpose()?;
    let mask: Vec<bool> = (0..cfg.n_symbols)
        .map(|k| period.is_some_and(|p| k % p == 0))
        .collect();
    let n_data = mask.iter().filter(|m| !**m).count();
    let mut data_rng = rng_from_seed(sub_seed(seed, 1));
    let mut sign_rng = rng_from_seed(sub_seed(seed, 2));
    let mut pilot_rng = rng_from_seed(sub_seed(seed, 3));
    let (data, constellation, label) = match &cfg.source {
        Source::Shaped { spec, mapping } => {
            let m = Matcher::new(spec)?;
            let c = induced_constellation(&m, spec)?;
            let per_block = match mapping {
                Mapping::Dim1 => spec.block_len as f64 / (2 * cfg.n_pols) as f64,
                Mapping::Dim2 => spec.block_len as f64 / 2.0 / cfg.n_pols as f64,
                Mapping::Dim4 => spec.block_len as f64 / 4.0,
            };
            let group = match mapping {
                Mapping::Dim1 => 2 * cfg.n_pols,
                Mapping::Dim2 => cfg.n_pols,
                Mapping::Dim4 => 1,
            };
            let mut n_blocks = (n_data as f64 / per_block).ceil() as usize;
            n_blocks = n_blocks.div_ceil(group) * group;
            let blocks: Vec<Vec<usize>> =
                (0..n_blocks).map(|_| m.encode_random(&mut data_rng)).collect();
            let idx = map_blocks(&blocks, *mapping, cfg.n_pols)?;
            let lv: Vec<f64> = spec.levels.iter().map(|&a| a as f64 * c.grid_scale).collect();
            let pols: Vec<Vec<Complex64>> = idx
                .iter()
                .map(|p| {
                    p.iter()
                        .take(n_data)
                        .map(|&(i, q)| {
                            let si = if sign_rng.random::<bool>() { -1.0 } else { 1.0 };
                            let sq = if sign_rng.random::<bool>() { -1.0 } else { 1.0 };
                            Complex64::new(si * lv[i], sq * lv[q])
                        })
                        .collect()
                })
                .collect();
            (pols, c, format!("{:?}", spec.kind))
        }
        Source::Iid { constellation } => {
            let pols = (0..cfg.n_pols)
                .map(|_| constellation.sample(n_data, &mut data_rng))
                .collect();
            (pols, constellation.clone(), "iid".to_string())
        }
    };
    let mut pols = Vec::with_capacity(cfg.n_pols);
    for d in data {
        let mut it = d.into_iter();
        let pilots = constellation.sample(cfg.n_symbols - n_data, &mut pilot_rng);
        let mut pit = pilots.into_iter();
        let seq: Vec<Complex64> = mask
            .iter()
            .map(|&is_pilot| {
                if is_pilot {
                    pit.next().unwrap()
                } else {
                    it.next().unwrap()
                }
            })
            .collect();
        pols.push(seq);
    }
    Ok(SymbolFrame {
        pols,
        pilot_mask: mask,
        meta: FrameMeta {
            label: label.clone(),
            seed,
            pilot_period: period,
            source: Some(label),
        },
    })
}

/// Recover amplitude level indices `(in-phase, quadrature)` from data symbols
/// by nearest-level decisions.
pub fn demap_levels(frame: &SymbolFrame, levels: &[f64]) -> Vec<Vec<(usize, usize)>> {
    let nearest = |v: f64| {
        let a = v.abs();
        levels
            .iter()
            .enumerate()
            .min_by(|x, y| (x.1 - a).abs().partial_cmp(&(y.1 - a).abs()).unwrap())
            .unwrap()
            .0
    };
    frame
        .pols
        .iter()
        .map(|p| {
            p.iter()
                .zip(&frame.pilot_mask)
                .filter(|(_, m)| !**m)
                .map(|(x, _)| (nearest(x.re), nearest(x.im)))
                .collect()
        })
        .collect()
}

/// Aggregated energy `2 e_p + e_p'` seen by polarisation `pol`. For a
/// single-polarisation frame this is `2 e_p` and the flag is false.
pub fn aggregated_energy(frame: &SymbolFrame, pol: usize) -> (Vec<f64>, bool) {
    let ep = frame.energies(pol);
    if frame.n_pols() < 2 {
        return (ep.iter().map(|e| 2.0 * e).collect(), false);
    }
    let eo = frame.energies(1 - pol);
    (ep.iter().zip(&eo).map(|(a, b)| 2.0 * a + b).collect(), true)
}

const FRAME_MAGIC: &[u8; 8] = b"SLFRAME1";

#[derive(Serialize, Deserialize)]
struct FrameHeader {
    n_symbols: usize,
    n_pols: usize,
    meta: FrameMeta,
}

/// Binary frame format: magic, little-endian u32 header length, JSON header,
/// one pilot-mask byte per symbol, then per polarisation interleaved
/// little-endian f64 `(re, im)` pairs.
pub fn write_frame<W: Write>(frame: &SymbolFrame, mut w: W) -> Result<()> {
    let header = serde_json::to_vec(&FrameHeader {
        n_symbols: frame.len(),
        n_pols: frame.n_pols(),
        meta: frame.meta.clone(),
    })?;
    w.write_all(FRAME_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    let mask: Vec<u8> = frame.pilot_mask.iter().map(|&m| m as u8).collect();
    w.write_all(&mask)?;
    let mut buf = Vec::with_capacity(16 * frame.len());
    for p in &frame.pols {
        buf.clear();
        for x in p {
            buf.extend_from_slice(&x.re.to_le_bytes());
            buf.extend_from_slice(&x.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_frame<R: Read>(mut r: R) -> Result<SymbolFrame> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FRAME_MAGIC {
        return Err(Error::Format("not a symbol frame file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let h: FrameHeader = serde_json::from_slice(&header)?;
    let mut mask = vec![0u8; h.n_symbols];
    r.read_exact(&mut mask)?;
    let mut pols = Vec::with_capacity(h.n_pols);
    let mut buf = vec![0u8; 16 * h.n_symbols];
    for _ in 0..h.n_pols {
        r.read_exact(&mut buf)?;
        pols.push(
            buf.chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..].try_into().unwrap()),
                    )
                })
                .collect(),
        );
    }
    Ok(SymbolFrame {
        pols,
        pilot_mask: mask.into_iter().map(|b| b != 0).collect(),
        meta: h.meta,
    })
}
