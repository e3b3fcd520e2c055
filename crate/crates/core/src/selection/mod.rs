//! Sequence selection: candidate generation, nonlinearity metrics,
//! best-of-N selection, gain prediction and complexity accounting.

mod candidates;
mod metrics;

pub use candidates::{BlockPayload, CandidateGenerator};
pub use metrics::{metric_am, metric_edi, metric_lsas, Metric, Scorer};

use crate::error::{invalid, Result};
use crate::numeric::{db, rng_from_seed, sub_seed};
use crate::pas::{FrameMeta, Source, SymbolFrame};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How candidates differ from each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// `nu` leading matcher input bits per shaper are set per candidate.
    FlippingBits { nu: usize },
    /// Fixed symbol permutations of one base block.
    Interleaving,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    pub candidates: usize,
    pub metric: Metric,
    /// Target selection block length in symbols per polarisation; rounded
    /// to whole shaper groups.
    #[serde(default = "default_block_symbols")]
    pub block_symbols: usize,
    pub seed: u64,
}

fn default_block_symbols() -> usize {
    256
}

/// Best candidate: lowest metric, ties to the lowest index.
pub fn select(metrics: &[f64]) -> Result<(usize, f64)> {
    if metrics.is_empty() {
        return invalid("no candidates to select from");
    }
    let mut best = 0;
    for (i, &m) in metrics.iter().enumerate().skip(1) {
        if m < metrics[best] {
            best = i;
        }
    }
    Ok((best, metrics[best]))
}

/// Predicted SNR gain (dB) from NLIN powers of unselected and selected
/// ensembles: a third of their ratio in dB.
pub fn predict_selection_gain(p_nlin_ref: f64, p_nlin_sel: f64) -> f64 {
    (db(p_nlin_ref) - db(p_nlin_sel)) / 3.0
}

/// A frame built from selected candidates.
#[derive(Debug, Clone)]
pub struct SelectedFrame {
    pub frame: SymbolFrame,
    /// Chosen candidate per block (the side information).
    pub indices: Vec<usize>,
    /// Metric of every candidate, per block.
    pub scores: Vec<Vec<f64>>,
    pub payloads: Vec<BlockPayload>,
}

/// Build a frame of `n_symbols` per polarisation block by block. Each block's
/// candidates are scored after the symbols already chosen; the last block
/// is truncated to fit.
pub fn select_frame(
    gen: &CandidateGenerator,
    scorer: &Scorer,
    n_symbols: usize,
    seed: u64,
) -> Result<SelectedFrame> {
    if n_symbols == 0 {
        return invalid("frame must contain at least one symbol");
    }
    let mut rng = rng_from_seed(sub_seed(seed, 21));
    let n_blocks = n_symbols.div_ceil(gen.block_symbols());
    let mut pols: Vec<Vec<Complex64>> = Vec::new();
    let mut indices = Vec::with_capacity(n_blocks);
    let mut scores = Vec::with_capacity(n_blocks);
    let mut payloads = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let payload = gen.random_payload(&mut rng);
        let cands = gen.candidates(&payload)?;
        if pols.is_empty() {
            pols = vec![Vec::with_capacity(n_symbols + gen.block_symbols()); cands[0].len()];
        }
        let ctx: Vec<Vec<Complex64>> = pols
            .iter()
            .map(|p| p[p.len().saturating_sub(scorer.context_len())..].to_vec())
            .collect();
        let s: Vec<f64> = if cands.len() == 1 {
            vec![0.0]
        } else {
            cands.par_iter().map(|c| scorer.score(&ctx, c)).collect::<Result<_>>()?
        };
        let (best, _) = select(&s)?;
        for (p, x) in pols.iter_mut().zip(&cands[best]) {
            p.extend_from_slice(x);
        }
        indices.push(best);
        scores.push(s);
        payloads.push(payload);
    }
    for p in pols.iter_mut() {
        p.truncate(n_symbols);
    }
    Ok(SelectedFrame {
        frame: SymbolFrame {
            pilot_mask: vec![false; n_symbols],
            pols,
            meta: FrameMeta {
                label: "selected".into(),
                seed,
                pilot_period: None,
                source: None,
            },
        },
        indices,
        scores,
        payloads,
    })
}

/// Convenience wrapper: generator for `source` and a selected frame.
pub fn selected_frame(
    source: &Source,
    n_pols: usize,
    cfg: &SelectionConfig,
    scorer: &Scorer,
    n_symbols: usize,
    seed: u64,
) -> Result<SelectedFrame> {
    let gen = CandidateGenerator::new(source, n_pols, cfg)?;
    select_frame(&gen, scorer, n_symbols, seed)
}

/// Coefficient counts per truncation rule and AM metric cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub w_mem: usize,
    pub candidates: usize,
    /// (w+1)² + w²: all pairs with |m| + |n| ≤ w.
    pub n_full: usize,
    /// 4·Σ_{k=1}^{w} ⌊(w−1)/k⌋ + 4w + 1: pairs with |m·n| < w.
    pub n_selected: usize,
    /// 3⌊(w+14)/16⌋ + 1 magnitude clusters.
    pub n_quantized: usize,
    /// Complex multiplications per symbol, N_t·(2 + n_pb), per rule.
    pub cost_full: usize,
    pub cost_selected: usize,
    pub cost_quantized: usize,
}

pub fn complexity_report(w_mem: usize, candidates: usize) -> ComplexityReport {
    let w = w_mem;
    let n_full = (w + 1) * (w + 1) + w * w;
    let n_selected = if w == 0 {
        1
    } else {
        4 * (1..=w).map(|k| (w - 1) / k).sum::<usize>() + 4 * w + 1
    };
    let n_quantized = 3 * ((w + 14) / 16) + 1;
    let cost = |n: usize| candidates * (2 + n);
    ComplexityReport {
        w_mem,
        candidates,
        n_full,
        n_selected,
        n_quantized,
        cost_full: cost(n_full),
        cost_selected: cost(n_selected),
        cost_quantized: cost(n_quantized),
    }
}
