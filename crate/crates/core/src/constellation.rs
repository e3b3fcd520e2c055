//! Square QAM constellations with Gray labels, Maxwell-Boltzmann
//! distributions, moments, shaping gain and bit-metric-decoding rates.

use crate::error::{invalid, Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A probabilistically shaped square QAM constellation.
///
/// Points are stored normalised to unit mean energy under `probs`;
/// `grid_scale` maps them back to the odd-integer grid
/// (`grid = point / grid_scale`).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Constellation {
    pub order: usize,
    pub points: Vec<Complex64>,
    pub probs: Vec<f64>,
    pub labels: Vec<u32>,
    /// Positive per-dimension amplitude levels after normalisation.
    pub amplitude_levels: Vec<f64>,
    pub grid_scale: f64,
    pub mean_energy: f64,
}

fn gray(i: usize) -> u32 {
    (i ^ (i >> 1)) as u32
}

fn pam_side(order: usize) -> Result<usize> {
    match order {
        4 | 16 | 64 | 256 => Ok((order as f64).sqrt().round() as usize),
        _ => invalid(format!("unsupported QAM order {order}; expected 4, 16, 64 or 256")),
    }
}

fn check_probs(probs: &[f64]) -> Result<()> {
    let s = compensated_sum(probs.iter().copied());
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(s));
    }
    Ok(())
}

/// Points of a square QAM on the odd-integer grid. Index `i * side + q`
/// holds in-phase level index `i` and quadrature level index `q`, both in
/// ascending order.
pub fn qam_grid(order: usize) -> Result<Vec<Complex64>> {
    let side = pam_side(order)?;
    let lv: Vec<f64> = (0..side).map(|i| (2 * i) as f64 - (side - 1) as f64).collect();
    Ok(lv
        .iter()
        .flat_map(|&i| lv.iter().map(move |&q| Complex64::new(i, q)))
        .collect())
}

/// Build a Gray-labelled square QAM with the given point probabilities
/// (uniform when `probs` is `None`).
pub fn build_qam(order: usize, probs: Option<&[f64]>) -> Result<Constellation> {
    let side = pam_side(order)?;
    let grid = qam_grid(order)?;
    let probs = match probs {
        Some(p) => {
            if p.len() != order {
                return invalid(format!("expected {order} probabilities, got {}", p.len()));
            }
            check_probs(p)?;
            p.to_vec()
        }
        None => vec![1.0 / order as f64; order],
    };
    let half_bits = side.trailing_zeros();
    let labels = (0..order)
        .map(|k| (gray(k / side) << half_bits) | gray(k % side))
        .collect();
    let energy = compensated_sum(grid.iter().zip(&probs).map(|(x, p)| p * x.norm_sqr()));
    let grid_scale = 1.0 / energy.sqrt();
    let points = grid.iter().map(|x| x * grid_scale).collect();
    let amplitude_levels = (0..side / 2).map(|i| (2 * i + 1) as f64 * grid_scale).collect();
    Ok(Constellation {
        order,
        points,
        probs,
        labels,
        amplitude_levels,
        grid_scale,
        mean_energy: 1.0,
    })
}

/// QAM whose in-phase and quadrature amplitudes are independent with the
/// given amplitude distribution (ascending odd levels 1, 3, ...) and uniform
/// signs.
pub fn qam_from_amplitudes(order: usize, amp_probs: &[f64]) -> Result<Constellation> {
    let side = pam_side(order)?;
    if amp_probs.len() != side / 2 {
        return invalid(format!(
            "expected {} amplitude probabilities, got {}",
            side / 2,
            amp_probs.len()
        ));
    }
    check_probs(amp_probs)?;
    let pam: Vec<f64> = (0..side)
        .map(|i| {
            let a = if i < side / 2 { side / 2 - 1 - i } else { i - side / 2 };
            amp_probs[a] / 2.0
        })
        .collect();
    let probs: Vec<f64> = (0..order).map(|k| pam[k / side] * pam[k % side]).collect();
    build_qam(order, Some(&probs))
}

/// Maxwell-Boltzmann weights `exp(-lambda * |x|^2)` over the given points,
/// normalised to sum to one.
pub fn mb_distribution(points: &[Complex64], lambda: f64) -> Result<Vec<f64>> {
    if points.is_empty() {
        return invalid("empty point set");
    }
    if !lambda.is_finite() {
        return invalid("lambda must be finite");
    }
    let e: Vec<f64> = points.iter().map(|x| -lambda * x.norm_sqr()).collect();
    let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
    let s = compensated_sum(w.iter().copied());
    Ok(w.into_iter().map(|v| v / s).collect())
}

/// Maxwell-Boltzmann distribution on positive odd amplitude levels
/// `1, 3, ..., 2 * n_levels - 1`.
pub fn mb_amplitudes(n_levels: usize, lambda: f64) -> Result<Vec<f64>> {
    let pts: Vec<Complex64> = (0..n_levels)
        .map(|i| Complex64::new((2 * i + 1) as f64, 0.0))
        .collect();
    mb_distribution(&pts, lambda)
}

/// MB-shaped QAM with `lambda` applied on the odd-integer grid.
pub fn mb_qam(order: usize, lambda: f64) -> Result<Constellation> {
    let grid = qam_grid(order)?;
    let p = mb_distribution(&grid, lambda)?;
    build_qam(order, Some(&p))
}

/// Shannon entropy in bits.
pub fn entropy(probs: &[f64]) -> f64 {
    -compensated_sum(
        probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.log2()),
    )
}

/// Standardised fourth and sixth moments `E|x|^4 / E|x|^2^2` and
/// `E|x|^6 / E|x|^2^3`.
pub fn standardized_moments(c: &Constellation) -> (f64, f64) {
    let mut m2 = CompensatedSum::new();
    let mut m4 = CompensatedSum::new();
    let mut m6 = CompensatedSum::new();
    for (x, p) in c.points.iter().zip(&c.probs) {
        let e = x.norm_sqr();
        m2.add(p * e);
        m4.add(p * e * e);
        m6.add(p * e * e * e);
    }
    let m2 = m2.value();
    (m4.value() / (m2 * m2), m6.value() / (m2 * m2 * m2))
}

/// Empirical standardised moments of a symbol sequence.
pub fn empirical_moments(symbols: &[Complex64]) -> (f64, f64) {
    let mut m2 = CompensatedSum::new();
    let mut m4 = CompensatedSum::new();
    let mut m6 = CompensatedSum::new();
    for x in symbols {
        let e = x.norm_sqr();
        m2.add(e);
        m4.add(e * e);
        m6.add(e * e * e);
    }
    let n = symbols.len() as f64;
    let m2 = m2.value() / n;
    (m4.value() / n / (m2 * m2), m6.value() / n / (m2 * m2 * m2))
}

/// Linear shaping gain `(2^H - 1) d_min^2 / (6 P)` where `H` is the symbol
/// entropy in bits per two real dimensions (so uniform square QAM gives 1).
pub fn linear_shaping_gain(c: &Constellation) -> f64 {
    let h = entropy(&c.probs);
    let d_min = 2.0 * c.grid_scale;
    let p = compensated_sum(c.points.iter().zip(&c.probs).map(|(x, p)| p * x.norm_sqr()));
    (2f64.powf(h) - 1.0) * d_min * d_min / (6.0 * p)
}

/// Linear shaping gain of `shaped` relative to `reference`, in dB.
pub fn linear_shaping_gain_db(shaped: &Constellation, reference: &Constellation) -> f64 {
    10.0 * (linear_shaping_gain(shaped) / linear_shaping_gain(reference)).log10()
}

/// Index of the constellation point closest to `y`.
pub fn nearest_point(c: &Constellation, y: Complex64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, x) in c.points.iter().enumerate() {
        let d = (x - y).norm_sqr();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Mean squared error between transmitted and received symbols, used as the
/// noise variance of the auxiliary Gaussian channel.
pub fn estimate_noise_var(tx: &[Complex64], rx: &[Complex64]) -> f64 {
    compensated_sum(tx.iter().zip(rx).map(|(x, y)| (y - x).norm_sqr())) / tx.len() as f64
}

/// Achievable rate estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AirEstimate {
    /// Bits per two-dimensional symbol.
    pub bits: f64,
    pub std_err: f64,
}

/// Bit-metric-decoding achievable rate `H(X) - sum_i H(B_i | Y)` estimated
/// by Monte Carlo with a circularly symmetric Gaussian auxiliary channel of
/// variance `noise_var`. `tx` must hold constellation points.
pub fn air_bmd(
    tx: &[Complex64],
    rx: &[Complex64],
    c: &Constellation,
    noise_var: f64,
) -> Result<AirEstimate> {
    if tx.len() != rx.len() || tx.is_empty() {
        return invalid("tx and rx must be non-empty and of equal length");
    }
    if !(noise_var > 0.0) {
        return invalid("noise variance must be positive");
    }
    let m = c.order.trailing_zeros() as usize;
    let log_prior: Vec<f64> = c
        .probs
        .iter()
        .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
        .collect();
    let hx = entropy(&c.probs);
    let mut terms = Vec::with_capacity(tx.len());
    let mut metric = vec![0.0; c.order];
    for (x, y) in tx.iter().zip(rx) {
        let k = nearest_point(c, *x);
        let lab = c.labels[k];
        let mut mx = f64::NEG_INFINITY;
        for (j, pt) in c.points.iter().enumerate() {
            metric[j] = log_prior[j] - (y - pt).norm_sqr() / noise_var;
            mx = mx.max(metric[j]);
        }
        let mut total = 0.0;
        let mut matching = vec![0.0; m];
        for (j, &v) in metric.iter().enumerate() {
            let w = (v - mx).exp();
            total += w;
            let diff = c.labels[j] ^ lab;
            for (b, acc) in matching.iter_mut().enumerate() {
                if diff >> (m - 1 - b) & 1 == 0 {
                    *acc += w;
                }
            }
        }
        let cond: f64 = matching.iter().map(|&s| -(s / total).log2()).sum();
        terms.push(cond);
    }
    let n = terms.len() as f64;
    let mean = compensated_sum(terms.iter().copied()) / n;
    let var = compensated_sum(terms.iter().map(|t| (t - mean) * (t - mean))) / (n - 1.0).max(1.0);
    Ok(AirEstimate {
        bits: (hx - mean).max(0.0),
        std_err: (var / n).sqrt(),
    })
}

impl Constellation {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Constellation = serde_json::from_str(s)?;
        check_probs(&c.probs)?;
        if c.points.len() != c.probs.len() || c.labels.len() != c.points.len() {
            return Err(Error::Format("inconsistent constellation arrays".into()));
        }
        Ok(c)
    }

    /// Draw `n` symbols from the constellation distribution.
    pub fn sample<R: rand::Rng>(&self, n: usize, rng: &mut R) -> Vec<Complex64> {
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        for p in &self.probs {
            acc += p;
            cdf.push(acc);
        }
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let i = cdf.partition_point(|&c| c <= u).min(self.points.len() - 1);
                self.points[i]
            })
            .collect()
    }
}
