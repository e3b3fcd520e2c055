//! Least-squares estimation of the overall phase-noise filter from
//! simulated residual phases.

use crate::error::{invalid, Error, Result};
use crate::numeric::cholesky_solve;
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedFilter {
    pub first_lag: i64,
    pub taps: Vec<f64>,
    /// Constant phase absorbed by the fit.
    pub offset: f64,
    pub residual_rms: f64,
}

/// Residual phase arg((y_k − Δ′_k)/x_k) per symbol.
pub fn residual_phase(tx: &[Complex64], rx: &[Complex64], delta_prime: Option<&[Complex64]>) -> Vec<f64> {
    tx.iter()
        .zip(rx)
        .enumerate()
        .map(|(k, (x, y))| {
            let y = delta_prime.map_or(*y, |d| y - d[k]);
            if x.norm_sqr() == 0.0 {
                0.0
            } else {
                (y / x).arg()
            }
        })
        .collect()
}

/// Taps h̃ (lags first_lag .. first_lag+n_taps) and an offset minimising
/// Σ_k (φ_k − c − Σ_i h̃_i (e_{k−lag_i} − 1))² with cyclic indexing.
pub fn fit_overall_filter(phase: &[f64], energies: &[f64], first_lag: i64, n_taps: usize) -> Result<LearnedFilter> {
    let n = phase.len();
    if n != energies.len() || n == 0 || n_taps == 0 {
        return invalid("phase and energy sequences must be non-empty and of equal length");
    }
    let e = super::energy::normalized_energies(energies);
    let p = n_taps + 1;
    let row = |k: usize, out: &mut [f64]| {
        out[0] = 1.0;
        for i in 0..n_taps {
            let idx = (k as i64 - first_lag - i as i64).rem_euclid(n as i64) as usize;
            out[i + 1] = e[idx] - 1.0;
        }
    };
    let mut ata = vec![0.0; p * p];
    let mut atb = vec![0.0; p];
    let mut r = vec![0.0; p];
    for k in 0..n {
        row(k, &mut r);
        for i in 0..p {
            atb[i] += r[i] * phase[k];
            for j in 0..p {
                ata[i * p + j] += r[i] * r[j];
            }
        }
    }
    let sol = cholesky_solve(&ata, &atb, p)
        .ok_or_else(|| Error::RankDeficient("energy sequence does not excite every filter tap".into()))?;
    let mut sse = 0.0;
    for k in 0..n {
        row(k, &mut r);
        let pred: f64 = r.iter().zip(&sol).map(|(a, b)| a * b).sum();
        sse += (phase[k] - pred).powi(2);
    }
    Ok(LearnedFilter {
        first_lag,
        taps: sol[1..].to_vec(),
        offset: sol[0],
        residual_rms: (sse / n as f64).sqrt(),
    })
}
