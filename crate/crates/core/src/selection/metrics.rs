use crate::error::{invalid, Result};
use crate::fiber::LinkConfig;
use crate::perturbation::{phase_noise, Boundary, FilterTaps, PerturbationKernel, Truncation, TripletModel};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Candidate scoring rule; lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    /// Energy dispersion over sliding windows of `window` symbols.
    Edi { window: usize },
    /// Energy of the lowpass-filtered symbol-energy sequence.
    Lsas,
    /// Additive-multiplicative perturbation power.
    Am { truncation: Truncation },
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lsas" => Ok(Metric::Lsas),
            "am" => Ok(Metric::Am { truncation: Truncation::Full }),
            "am-s" => Ok(Metric::Am { truncation: Truncation::Selected }),
            "am-q" => Ok(Metric::Am { truncation: Truncation::Quantized }),
            _ => match s.strip_prefix("edi") {
                Some("") => Ok(Metric::Edi { window: 0 }),
                Some(w) => w
                    .trim_start_matches([':', '='])
                    .parse()
                    .map(|window| Metric::Edi { window })
                    .map_err(|_| format!("bad EDI window in '{s}'")),
                None => Err(format!("unknown metric '{s}' (edi[:w], lsas, am, am-s, am-q)")),
            },
        }
    }
}

/// Mean energy across polarisations at each position.
fn symbol_energies(symbols: &[Vec<Complex64>]) -> Vec<f64> {
    let n = symbols.first().map_or(0, Vec::len);
    let np = symbols.len() as f64;
    (0..n).map(|k| symbols.iter().map(|p| p[k].norm_sqr()).sum::<f64>() / np).collect()
}

/// Σ (S_k − |W_k|)² / w over windows W_k of `w` symbols ending at each
/// position from `start` on, clipped at the sequence start. Energies are
/// taken relative to unit mean.
pub fn metric_edi(symbols: &[Vec<Complex64>], start: usize, w: usize) -> f64 {
    let e = symbol_energies(symbols);
    let w = w.max(1);
    let mut prefix = vec![0.0; e.len() + 1];
    for (k, v) in e.iter().enumerate() {
        prefix[k + 1] = prefix[k] + v - 1.0;
    }
    (start..e.len())
        .map(|k| {
            let lo = (k + 1).saturating_sub(w);
            (prefix[k + 1] - prefix[lo]).powi(2)
        })
        .sum::<f64>()
        / w as f64
}

/// Σ d_k² over positions from `start` on, with d the phase-noise sequence of
/// the symbol energies (unit prefactor, zero outside the sequence).
pub fn metric_lsas(symbols: &[Vec<Complex64>], start: usize, taps: &FilterTaps) -> Result<f64> {
    let energies: Vec<Vec<f64>> = symbols.iter().map(|p| p.iter().map(|x| x.norm_sqr()).collect()).collect();
    let d = phase_noise(std::slice::from_ref(taps), 1.0, &[energies], Boundary::Zero)?;
    Ok(d.iter().map(|p| p[start..].iter().map(|v| v * v).sum::<f64>()).sum())
}

/// Σ_k |j·γE·x_k·Σ(e−1)h + Δ′x_k|² over positions from `start` on, using
/// the intra-channel part of `model` with a zero boundary.
pub fn metric_am(symbols: &[Vec<Complex64>], start: usize, model: &TripletModel) -> Result<f64> {
    if model.channels.len() != 1 || model.channels[0].channel != 0 {
        return invalid("AM metric needs a single-channel model of the channel of interest");
    }
    let r = model.am_residual(symbols, &[], Boundary::Zero)?;
    Ok(r.iter().map(|p| p[start..].iter().map(|v| v.norm_sqr()).sum::<f64>()).sum())
}

#[derive(Debug, Clone)]
enum Rule {
    Edi(usize),
    Lsas(FilterTaps),
    Am(TripletModel),
}

/// A metric bound to its coefficients and the context length it needs.
#[derive(Debug, Clone)]
pub struct Scorer {
    rule: Rule,
    context: usize,
}

impl Scorer {
    /// `kernel` is required by the LSAS and AM metrics; only its
    /// intra-channel block is used.
    pub fn new(metric: &Metric, link: &LinkConfig, kernel: Option<&PerturbationKernel>) -> Result<Self> {
        let model = |truncation| -> Result<TripletModel> {
            let k = match kernel {
                Some(k) => k,
                None => return invalid("this metric needs a perturbation kernel"),
            };
            if k.block(0).is_none() {
                return invalid("kernel has no intra-channel block");
            }
            let mut m = TripletModel::from_kernel(k, link, Some((truncation, k.w_mem)));
            m.channels.truncate(1);
            Ok(m)
        };
        Ok(match *metric {
            Metric::Edi { window } => {
                if window == 0 {
                    return invalid("EDI window must be positive");
                }
                Self { rule: Rule::Edi(window), context: window - 1 }
            }
            Metric::Lsas => {
                let taps = model(Truncation::Full)?.phase_filter().remove(0);
                let reach = taps.first_lag.unsigned_abs().max((taps.first_lag + taps.same.len() as i64 - 1).unsigned_abs());
                Self { rule: Rule::Lsas(taps), context: reach as usize }
            }
            Metric::Am { truncation } => {
                let w = kernel.map_or(0, |k| k.w_mem);
                Self { rule: Rule::Am(model(truncation)?), context: w }
            }
        })
    }

    /// Symbols of already transmitted data the metric looks back on.
    pub fn context_len(&self) -> usize {
        self.context
    }

    /// Number of active coefficients for AM metrics.
    pub fn active_terms(&self) -> Option<usize> {
        match &self.rule {
            Rule::Am(m) => Some(m.active_terms()),
            _ => None,
        }
    }

    /// Score a candidate following `context` (per polarisation).
    pub fn score(&self, context: &[Vec<Complex64>], candidate: &[Vec<Complex64>]) -> Result<f64> {
        let keep = context.first().map_or(0, |c| c.len().min(self.context));
        let seq: Vec<Vec<Complex64>> = if keep == 0 {
            candidate.to_vec()
        } else {
            if context.len() != candidate.len() {
                return invalid("context and candidate differ in polarisation count");
            }
            context
                .iter()
                .zip(candidate)
                .map(|(c, x)| c[c.len() - keep..].iter().chain(x).copied().collect())
                .collect()
        };
        match &self.rule {
            Rule::Edi(w) => Ok(metric_edi(&seq, keep, *w)),
            Rule::Lsas(t) => metric_lsas(&seq, keep, t),
            Rule::Am(m) => metric_am(&seq, keep, m),
        }
    }
}
