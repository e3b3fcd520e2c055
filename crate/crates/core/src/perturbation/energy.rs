//! Statistics of normalised energy sequences: windowed moments, EDI,
//! autocorrelation and power spectral density.

use crate::error::{invalid, Result};
use crate::fiber::LinkConfig;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Energies |x_k|² divided by their sample mean.
pub fn normalized_energies(energies: &[f64]) -> Vec<f64> {
    let m = crate::numeric::mean(energies);
    if m <= 0.0 {
        return vec![0.0; energies.len()];
    }
    energies.iter().map(|e| e / m).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowedMoments {
    pub window: usize,
    pub m2: f64,
    pub m3: f64,
    pub mu4: f64,
    pub mu6: f64,
}

/// Central moments of the cyclic sliding-window energy sums e^w_k of a
/// mean-one sequence, m_n^w = E[(e^w − w)^n]/w, and the standardized
/// moments μ4^w = m2^w + 1, μ6^w = m3^w + 3m2^w + 1.
///
/// Every window start is used, so block-structured sequences whose length
/// is a multiple of the block length are averaged over all block phases.
pub fn windowed_moments(e: &[f64], w: usize) -> Result<WindowedMoments> {
    if w == 0 || w > e.len() {
        return invalid(format!("window {w} must be in 1..={}", e.len()));
    }
    let e = normalized_energies(e);
    let n = e.len();
    let mut s: f64 = e[..w].iter().sum();
    let (mut c2, mut c3) = (0.0, 0.0);
    for k in 0..n {
        let d = s - w as f64;
        c2 += d * d;
        c3 += d * d * d;
        s += e[(k + w) % n] - e[k];
    }
    let m2 = c2 / (n * w) as f64;
    let m3 = c3 / (n * w) as f64;
    Ok(WindowedMoments { window: w, m2, m3, mu4: m2 + 1.0, mu6: m3 + 3.0 * m2 + 1.0 })
}

/// Energy dispersion index ψ^w = E·m2^w with E the mean symbol energy.
pub fn edi(e: &[f64], w: usize, mean_energy: f64) -> Result<f64> {
    Ok(mean_energy * windowed_moments(e, w)?.m2)
}

/// EDI of CCDM blocks of length D with windows w ≥ D − 1:
/// ψ = (D+1)(μ4−1)E / (3w).
pub fn ccdm_edi_closed_form(block_len: usize, w: usize, mu4: f64, mean_energy: f64) -> Result<f64> {
    if block_len > w + 1 {
        return invalid("closed-form EDI requires D <= w + 1");
    }
    Ok((block_len as f64 + 1.0) * (mu4 - 1.0) * mean_energy / (3.0 * w as f64))
}

/// SPM and XPM window sizes ⌊2 R_s B |β2| L⌉ and the XPM one scaled by
/// √(N_ch·B/R_s), with B the channel spacing.
pub fn window_sizes(link: &LinkConfig) -> (usize, usize) {
    let rs = link.symbol_rate();
    let b = link.channel_spacing();
    let w = 2.0 * rs * b * link.beta2().abs() * link.total_length();
    let x = w * (link.n_channels as f64 * b / rs).sqrt();
    (w.round() as usize, x.round() as usize)
}

/// Source model of an energy sequence with a known autocorrelation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnergySource {
    /// Independent symbols with normalized fourth moment μ4.
    Iid { mu4: f64 },
    /// Concatenated constant-composition blocks of length D, averaged over
    /// the block phase.
    Ccdm { mu4: f64, block_len: usize },
}

impl EnergySource {
    /// r_k = E[(e_i − 1)(e_{i+k} − 1)] for k = 0..=max_lag.
    pub fn autocorrelation(&self, max_lag: usize) -> Vec<f64> {
        match *self {
            Self::Iid { mu4 } => (0..=max_lag).map(|k| if k == 0 { mu4 - 1.0 } else { 0.0 }).collect(),
            Self::Ccdm { mu4, block_len } => {
                let d = block_len as f64;
                (0..=max_lag)
                    .map(|k| {
                        if k == 0 {
                            mu4 - 1.0
                        } else if k < block_len && block_len > 1 {
                            (mu4 - 1.0) * (k as f64 / d - 1.0) / (d - 1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        }
    }

    /// Largest lag with non-zero autocorrelation.
    pub fn support(&self) -> usize {
        match *self {
            Self::Iid { .. } => 0,
            Self::Ccdm { block_len, .. } => block_len.saturating_sub(1),
        }
    }

    /// Exact spectrum S(f) = Σ_k r_k e^{-j2πfk} at normalised frequencies.
    pub fn psd(&self, freq: &[f64]) -> Vec<f64> {
        psd_from_autocorrelation(&self.autocorrelation(self.support()), freq)
    }
}

/// Cyclic sample autocorrelation of a mean-normalised sequence, lags 0..=max_lag.
pub fn empirical_autocorrelation(e: &[f64], max_lag: usize) -> Vec<f64> {
    let e = normalized_energies(e);
    let n = e.len();
    (0..=max_lag)
        .map(|k| (0..n).map(|i| (e[i] - 1.0) * (e[(i + k) % n] - 1.0)).sum::<f64>() / n as f64)
        .collect()
}

/// S(f) = r_0 + 2 Σ_{k≥1} r_k cos(2πfk) for a real symmetric autocorrelation.
pub fn psd_from_autocorrelation(r: &[f64], freq: &[f64]) -> Vec<f64> {
    freq.iter()
        .map(|&f| {
            let mut s = r.first().copied().unwrap_or(0.0);
            for (k, &v) in r.iter().enumerate().skip(1) {
                s += 2.0 * v * (2.0 * PI * f * k as f64).cos();
            }
            s
        })
        .collect()
}

fn hann(segment: usize) -> Vec<f64> {
    (0..segment)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / segment as f64).cos())
        .collect()
}

/// Expected value of [`psd_estimate`] for a process with autocorrelation
/// `r`: the spectrum seen through the Hann segment window,
/// Σ_k r_k ρ_w(k) e^{-j2πfk} with ρ_w the normalised window autocorrelation.
pub fn expected_welch_psd(r: &[f64], segment: usize, freq: &[f64]) -> Vec<f64> {
    let w = hann(segment);
    let wpow: f64 = w.iter().map(|v| v * v).sum();
    let tapered: Vec<f64> = r
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            if k >= segment {
                return 0.0;
            }
            v * w.iter().zip(&w[k..]).map(|(a, b)| a * b).sum::<f64>() / wpow
        })
        .collect();
    psd_from_autocorrelation(&tapered, freq)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    /// Normalised frequency (cycles per symbol), 0..=0.5.
    pub freq: Vec<f64>,
    /// Two-sided density: its integral over [-0.5, 0.5] is the variance.
    pub density: Vec<f64>,
    /// Standard error of each bin.
    pub std_err: Vec<f64>,
    pub segments: usize,
}

pub const PSD_SEGMENT: usize = 4096;

/// Averaged periodogram of (e − 1): Hann-windowed segments with 50 % overlap.
pub fn psd_estimate(e: &[f64], segment: usize) -> Result<PsdEstimate> {
    if segment < 2 || e.len() < segment {
        return invalid(format!("PSD needs at least {segment} samples"));
    }
    let e = normalized_energies(e);
    let hop = segment / 2;
    let window = hann(segment);
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment);
    let bins = segment / 2 + 1;
    let mut sum = vec![0.0; bins];
    let mut sum2 = vec![0.0; bins];
    let mut segments = 0;
    let mut start = 0;
    while start + segment <= e.len() {
        let mut buf: Vec<Complex64> = e[start..start + segment]
            .iter()
            .zip(&window)
            .map(|(v, w)| Complex64::new((v - 1.0) * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for k in 0..bins {
            let p = buf[k].norm_sqr() / wpow;
            sum[k] += p;
            sum2[k] += p * p;
        }
        segments += 1;
        start += hop;
    }
    let ns = segments as f64;
    // Welch's variance reduction for 50 %-overlapped Hann segments.
    let eff = ns / (1.0 + 2.0 * 0.167f64.powi(2));
    let density: Vec<f64> = sum.iter().map(|s| s / ns).collect();
    let std_err = sum2
        .iter()
        .zip(&density)
        .map(|(s2, m)| ((s2 / ns - m * m).max(0.0) / eff.max(1.0)).sqrt())
        .collect();
    let freq = (0..bins).map(|k| k as f64 / segment as f64).collect();
    Ok(PsdEstimate { freq, density, std_err, segments })
}
