use super::ssfm::{channel_bin_shift, omega_grid, rrc_filter, simulate, Field};
use super::LinkConfig;
use crate::error::{invalid, Result};
use crate::pas::SymbolFrame;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Carrier phase recovery applied after matched filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cpr {
    /// No phase tracking beyond the final complex scale.
    None,
    /// Removal of the mean phase rotation over the frame.
    Mpr,
    /// Sliding mean of the data-aided phase error over `2 * half_window + 1` symbols.
    MovingAverage { half_window: usize },
    /// Pilot phase estimates (each averaged over `2 * avg + 1` pilots),
    /// linearly interpolated between pilot positions.
    Lpa { avg: usize },
}

/// Chromatic dispersion compensation, channel selection, matched filtering
/// and symbol-rate sampling. Returns per-polarisation symbols in transmit
/// units (unit mean energy for an undistorted channel).
pub fn receive(link: &LinkConfig, field: &Field, channel: usize) -> Result<Vec<Vec<Complex64>>> {
    if channel >= link.n_channels {
        return invalid("channel index out of range");
    }
    let n = field.pols[0].len();
    let sps = field.samples_per_symbol;
    let fs = link.sample_rate();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let g = rrc_filter(n, fs, link);
    let w = omega_grid(n, fs);
    let shift = channel_bin_shift(link, n, channel)?;
    let cd = 0.5 * link.beta2() * link.total_length();
    let norm = 1.0 / (n as f64 * field.symbol_scale * field.pulse_energy * sps as f64);
    let mut out = Vec::with_capacity(field.pols.len());
    for a in &field.pols {
        let mut spec = a.clone();
        fwd.process(&mut spec);
        let mut base = vec![Complex64::default(); n];
        for m in 0..n {
            if g[m] == 0.0 {
                continue;
            }
            let src = ((m as isize + shift).rem_euclid(n as isize)) as usize;
            // compensate the dispersion at the channel's own frequency
            let (s, c) = (-cd * w[src] * w[src]).sin_cos();
            base[m] = spec[src] * Complex64::new(c, s) * g[m];
        }
        inv.process(&mut base);
        out.push((0..field.n_symbols).map(|k| base[k * sps] * norm).collect());
    }
    Ok(out)
}

fn unwrap(phases: &mut [f64]) {
    for k in 1..phases.len() {
        let d = phases[k] - phases[k - 1];
        phases[k] -= 2.0 * PI * (d / (2.0 * PI)).round();
    }
}

fn derotate(y: &mut [Complex64], theta: &[f64]) {
    for (v, t) in y.iter_mut().zip(theta) {
        *v *= Complex64::from_polar(1.0, -t);
    }
}

/// Apply carrier phase recovery and a final least-squares complex scale
/// against the transmitted frame.
pub fn recover(rx: Vec<Vec<Complex64>>, tx: &SymbolFrame, cpr: Cpr) -> Result<SymbolFrame> {
    if rx.len() != tx.n_pols() || rx[0].len() != tx.len() {
        return invalid("received symbols do not match the transmitted frame");
    }
    let n = tx.len();
    let mut pols = Vec::with_capacity(rx.len());
    for (p, mut y) in rx.into_iter().enumerate() {
        let x = &tx.pols[p];
        match cpr {
            Cpr::None | Cpr::Mpr => {}
            Cpr::MovingAverage { half_window } => {
                let mut th: Vec<f64> = y.iter().zip(x).map(|(a, b)| (a * b.conj()).arg()).collect();
                unwrap(&mut th);
                let w = (2 * half_window + 1) as f64;
                let mut est = vec![0.0; n];
                // cyclic sliding mean with unwrapped offsets across the frame end
                let wrap = 2.0 * PI * ((th[n - 1] - th[0]) / (2.0 * PI)).round();
                let at = |i: isize| -> f64 {
                    let q = i.div_euclid(n as isize);
                    th[i.rem_euclid(n as isize) as usize] + q as f64 * wrap
                };
                let h = half_window as isize;
                let mut acc: f64 = (-h..=h).map(at).sum();
                for (k, e) in est.iter_mut().enumerate() {
                    *e = acc / w;
                    let k = k as isize;
                    acc += at(k + h + 1) - at(k - h);
                }
                derotate(&mut y, &est);
            }
            Cpr::Lpa { avg } => {
                let pilots: Vec<usize> = (0..n).filter(|&k| tx.pilot_mask[k]).collect();
                if pilots.len() < 2 {
                    return invalid("pilot-aided recovery needs at least two pilots");
                }
                let raw: Vec<Complex64> = pilots.iter().map(|&k| y[k] * x[k].conj()).collect();
                let np = pilots.len();
                let mut th: Vec<f64> = (0..np)
                    .map(|i| {
                        let mut s = Complex64::default();
                        for d in -(avg as isize)..=(avg as isize) {
                            s += raw[(i as isize + d).rem_euclid(np as isize) as usize];
                        }
                        s.arg()
                    })
                    .collect();
                unwrap(&mut th);
                let mut est = vec![0.0; n];
                for i in 0..np {
                    let (k0, t0) = (pilots[i], th[i]);
                    let (k1, mut t1) = if i + 1 < np {
                        (pilots[i + 1], th[i + 1])
                    } else {
                        (pilots[0] + n, th[0])
                    };
                    t1 -= 2.0 * PI * ((t1 - t0) / (2.0 * PI)).round();
                    for k in k0..k1 {
                        let f = (k - k0) as f64 / (k1 - k0) as f64;
                        est[k % n] = t0 + f * (t1 - t0);
                    }
                }
                derotate(&mut y, &est);
            }
        }
        let (mut num, mut den) = (Complex64::default(), 0.0);
        for k in 0..n {
            if !tx.pilot_mask[k] {
                num += y[k] * x[k].conj();
                den += x[k].norm_sqr();
            }
        }
        let a = num / den;
        if a.norm() == 0.0 {
            return invalid("received signal is zero");
        }
        y.iter_mut().for_each(|v| *v /= a);
        pols.push(y);
    }
    Ok(SymbolFrame {
        pols,
        pilot_mask: tx.pilot_mask.clone(),
        meta: tx.meta.clone(),
    })
}

/// Simulate the link and return the processed symbols of the centre channel.
pub fn run_link(
    link: &LinkConfig,
    frames: &[SymbolFrame],
    seed: u64,
    cpr: Cpr,
) -> Result<SymbolFrame> {
    let field = simulate(link, frames, seed)?;
    let ch = link.center_channel();
    let rx = receive(link, &field, ch)?;
    recover(rx, &frames[ch], cpr)
}
