use super::LinkConfig;
use crate::error::{invalid, Result};
use crate::numeric::{rng_from_seed, sub_seed};
use crate::pas::SymbolFrame;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Sampled optical field, one vector per polarisation.
#[derive(Debug, Clone)]
pub struct Field {
    pub pols: Vec<Vec<Complex64>>,
    pub n_symbols: usize,
    pub samples_per_symbol: usize,
    /// Amplitude scale applied to unit-energy symbols at the transmitter.
    pub symbol_scale: f64,
    /// Energy of the transmit pulse per symbol interval.
    pub pulse_energy: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    pub seed: u64,
}

/// Angular frequency of each FFT bin.
pub(crate) fn omega_grid(n: usize, fs: f64) -> Vec<f64> {
    (0..n)
        .map(|m| {
            let k = if m < n.div_ceil(2) { m as f64 } else { m as f64 - n as f64 };
            2.0 * PI * k * fs / n as f64
        })
        .collect()
}

/// Root-raised-cosine amplitude response at frequency `f` (Hz), unit in the
/// passband.
pub fn rrc_response(f: f64, symbol_rate: f64, rolloff: f64) -> f64 {
    let af = f.abs();
    let f1 = (1.0 - rolloff) * symbol_rate / 2.0;
    let f2 = (1.0 + rolloff) * symbol_rate / 2.0;
    if af <= f1 {
        1.0
    } else if af > f2 {
        0.0
    } else {
        (0.5 * (1.0 + (PI / (rolloff * symbol_rate) * (af - f1)).cos())).sqrt()
    }
}

pub(crate) fn rrc_filter(n: usize, fs: f64, link: &LinkConfig) -> Vec<f64> {
    omega_grid(n, fs)
        .iter()
        .map(|w| rrc_response(w / (2.0 * PI), link.symbol_rate(), link.rolloff))
        .collect()
}

/// FFT bin shift that moves a channel to its WDM slot.
pub(crate) fn channel_bin_shift(link: &LinkConfig, n: usize, ch: usize) -> Result<isize> {
    let bins = link.channel_offset_hz(ch) * n as f64 / link.sample_rate();
    let r = bins.round();
    if (bins - r).abs() > 1e-6 {
        return invalid(
            "channel offsets must fall on FFT bins: choose a frame length that is a multiple of symbol_rate / gcd(symbol_rate, spacing)",
        );
    }
    Ok(r as isize)
}

fn shift_index(m: usize, shift: isize, n: usize) -> usize {
    ((m as isize + shift).rem_euclid(n as isize)) as usize
}

/// Build the transmitted WDM field from one frame per channel.
pub fn transmit(link: &LinkConfig, frames: &[SymbolFrame]) -> Result<Field> {
    link.validate()?;
    if frames.len() != link.n_channels {
        return invalid(format!(
            "expected {} channel frames, got {}",
            link.n_channels,
            frames.len()
        ));
    }
    let n_sym = frames[0].len();
    if frames.iter().any(|f| f.len() != n_sym || f.n_pols() != link.n_pols()) {
        return invalid("all frames must share length and polarisation count with the link");
    }
    let sps = link.samples_per_symbol;
    let n = n_sym * sps;
    let fs = link.sample_rate();
    let g = rrc_filter(n, fs, link);
    let pulse_energy = g.iter().map(|v| v * v).sum::<f64>() / (n * sps) as f64;
    let p_pol = link.launch_power() / link.n_pols() as f64;
    let scale = (p_pol / pulse_energy).sqrt();
    let mut planner = FftPlanner::new();
    let fwd_sym = planner.plan_fft_forward(n_sym);
    let inv = planner.plan_fft_inverse(n);
    let shifts: Vec<isize> = (0..link.n_channels)
        .map(|c| channel_bin_shift(link, n, c))
        .collect::<Result<_>>()?;
    let mut pols = Vec::with_capacity(link.n_pols());
    for p in 0..link.n_pols() {
        let mut spec = vec![Complex64::default(); n];
        for (c, f) in frames.iter().enumerate() {
            let mut s = f.pols[p].clone();
            fwd_sym.process(&mut s);
            for m in 0..n {
                let gm = g[m];
                if gm == 0.0 {
                    continue;
                }
                spec[shift_index(m, shifts[c], n)] += s[m % n_sym] * gm;
            }
        }
        inv.process(&mut spec);
        let norm = scale / n as f64;
        spec.iter_mut().for_each(|v| *v *= norm);
        pols.push(spec);
    }
    Ok(Field {
        pols,
        n_symbols: n_sym,
        samples_per_symbol: sps,
        symbol_scale: scale,
        pulse_energy,
    })
}

/// Split steps per span so that the nonlinear phase of the mean total
/// launch power stays below the configured bound in every step.
pub fn steps_per_span(link: &LinkConfig) -> usize {
    let p_tot = link.launch_power() * link.n_channels as f64;
    let phi = link.gamma_eff() * p_tot * link.effective_length();
    ((phi / link.max_step_phase_rad).ceil() as usize).max(link.min_steps_per_span.max(1))
}

/// Step boundaries within a span with equal effective length per step.
fn step_lengths(link: &LinkConfig, n_steps: usize) -> Vec<f64> {
    let a = link.alpha();
    let l = link.span_length();
    let bounds: Vec<f64> = (0..=n_steps)
        .map(|i| {
            let frac = i as f64 / n_steps as f64;
            if a == 0.0 {
                frac * l
            } else {
                -(1.0 - frac * (1.0 - (-a * l).exp())).ln() / a
            }
        })
        .collect();
    bounds.windows(2).map(|w| w[1] - w[0]).collect()
}

struct Propagator {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    half_b2w2: Vec<f64>,
    alpha: f64,
    n: usize,
}

impl Propagator {
    fn linear(&self, pols: &mut [Vec<Complex64>], z: f64) {
        if z == 0.0 {
            return;
        }
        let att = (-self.alpha * z / 2.0).exp() / self.n as f64;
        pols.par_iter_mut().for_each(|a| {
            self.fwd.process(a);
            for (v, &c) in a.iter_mut().zip(&self.half_b2w2) {
                let (s, co) = (c * z).sin_cos();
                *v *= Complex64::new(co * att, s * att);
            }
            self.inv.process(a);
        });
    }
}

fn nonlinear(pols: &mut [Vec<Complex64>], coef: f64) {
    if coef == 0.0 {
        return;
    }
    let n = pols[0].len();
    if pols.len() == 1 {
        for v in pols[0].iter_mut() {
            let (s, c) = (coef * v.norm_sqr()).sin_cos();
            *v *= Complex64::new(c, s);
        }
    } else {
        let (x, y) = pols.split_at_mut(1);
        let (x, y) = (&mut x[0], &mut y[0]);
        for k in 0..n {
            let (s, c) = (coef * (x[k].norm_sqr() + y[k].norm_sqr())).sin_cos();
            let r = Complex64::new(c, s);
            x[k] *= r;
            y[k] *= r;
        }
    }
}

/// Propagate a field through the link with the symmetric split-step
/// Fourier method (Manakov equation for dual polarisation).
pub fn propagate(link: &LinkConfig, field: &mut Field, opts: SimOptions) -> Result<()> {
    link.validate()?;
    let n = field.pols[0].len();
    let fs = link.sample_rate();
    let mut planner = FftPlanner::new();
    let b2 = link.beta2();
    let prop = Propagator {
        fwd: planner.plan_fft_forward(n),
        inv: planner.plan_fft_inverse(n),
        half_b2w2: omega_grid(n, fs).iter().map(|w| 0.5 * b2 * w * w).collect(),
        alpha: link.alpha(),
        n,
    };
    let n_steps = steps_per_span(link);
    let hs = step_lengths(link, n_steps);
    let a = link.alpha();
    let gamma = link.gamma_eff();
    let gain = (a * link.span_length() / 2.0).exp();
    let sigma = (link.ase_psd() * fs / 2.0).sqrt();
    for span in 0..link.n_spans {
        let mut pending = 0.0;
        for &h in &hs {
            pending += h / 2.0;
            prop.linear(&mut field.pols, pending);
            let h_eff = if a == 0.0 {
                h
            } else {
                (a * h / 2.0).exp() * (1.0 - (-a * h).exp()) / a
            };
            nonlinear(&mut field.pols, gamma * h_eff);
            pending = h / 2.0;
        }
        prop.linear(&mut field.pols, pending);
        for v in field.pols.iter_mut().flatten() {
            *v *= gain;
        }
        if link.ase {
            for (p, pol) in field.pols.iter_mut().enumerate() {
                let mut rng = rng_from_seed(sub_seed(opts.seed, (span * 2 + p) as u64 + 1000));
                for v in pol.iter_mut() {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *v += Complex64::new(re * sigma, im * sigma);
                }
            }
        }
    }
    Ok(())
}

/// Transmit, propagate and return the received field.
pub fn simulate(link: &LinkConfig, frames: &[SymbolFrame], seed: u64) -> Result<Field> {
    let mut f = transmit(link, frames)?;
    propagate(link, &mut f, SimOptions { seed })?;
    Ok(f)
}
