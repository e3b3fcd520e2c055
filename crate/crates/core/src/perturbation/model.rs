//! Symbol-domain first-order NLIN: the triplet sum, its phase-noise part
//! written as a linear filter on energy sequences, and the CPR residual.

use super::kernel::{compute_block, memory_symbols, walkoff_symbols, PerturbationKernel, PulseShape, Quadrature, Truncation};
use crate::error::{invalid, Result};
use crate::fiber::LinkConfig;
use num_complex::Complex64;
use rayon::prelude::*;
use std::collections::BTreeMap;

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// How symbol indices outside a sequence are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Periodic continuation (whole frames).
    Cyclic,
    /// Symbols outside are zero (candidate windows with explicit context).
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTerms {
    /// Channel index relative to the channel of interest.
    pub channel: i32,
    /// Active (m, n, C_{m,n}) triplets.
    pub terms: Vec<(i64, i64, Complex64)>,
}

/// Triplet-sum model Δx_k = j·γ_eff·P_pol·Σ C x x x* for unit-energy symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletModel {
    /// γ_eff·P_pol (Manakov 8/9 factor and per-polarisation power included).
    pub prefactor: f64,
    pub dual: bool,
    /// Channel of interest first, then interferers.
    pub channels: Vec<ChannelTerms>,
}

/// Per-channel phase-noise taps: d_k = Σ_n same[n]·e_{k-n} + cross[n]·e'_{k-n}
/// with e the same polarisation's energies and e' the other polarisation's.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTaps {
    pub channel: i32,
    /// Lag of the first tap.
    pub first_lag: i64,
    pub same: Vec<f64>,
    pub cross: Vec<f64>,
}

impl FilterTaps {
    pub fn lags(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.same.len() as i64).map(move |i| i + self.first_lag)
    }

    /// Single-tap filter h_0 = 1 (memoryless phase modulation).
    pub fn identity(channel: i32) -> Self {
        Self { channel, first_lag: 0, same: vec![1.0], cross: vec![0.0] }
    }
}

impl TripletModel {
    /// Model for `link` at its launch power. `truncation` restricts every
    /// channel to a coefficient rule with memory w; `None` keeps all stored
    /// coefficients.
    pub fn from_kernel(
        kernel: &PerturbationKernel,
        link: &LinkConfig,
        truncation: Option<(Truncation, usize)>,
    ) -> Self {
        let channels = kernel
            .blocks
            .iter()
            .map(|b| {
                let terms = match truncation {
                    Some((rule, w)) => b.truncate(rule, w),
                    None => b.truncate(Truncation::Full, b.m_max + b.n_max),
                };
                ChannelTerms { channel: b.channel, terms }
            })
            .collect();
        Self {
            prefactor: link.gamma_eff() * link.launch_power() / link.n_pols() as f64,
            dual: link.dual_pol,
            channels,
        }
    }

    pub fn with_prefactor(mut self, prefactor: f64) -> Self {
        self.prefactor = prefactor;
        self
    }

    /// Number of active coefficients of the channel of interest.
    pub fn active_terms(&self) -> usize {
        self.channels.first().map_or(0, |c| c.terms.len())
    }

    fn check(&self, coi: &[Vec<Complex64>], interferers: &[&[Vec<Complex64>]]) -> Result<()> {
        let pols = if self.dual { 2 } else { 1 };
        if interferers.len() + 1 != self.channels.len() {
            return invalid(format!(
                "model has {} interferers, got {}",
                self.channels.len() - 1,
                interferers.len()
            ));
        }
        let n = coi.first().map_or(0, Vec::len);
        let ok = |c: &[Vec<Complex64>]| c.len() == pols && c.iter().all(|p| p.len() == n);
        if !ok(coi) || !interferers.iter().all(|c| ok(c)) {
            return invalid("channel symbol sequences must share length and polarisation count");
        }
        Ok(())
    }

    /// First-order perturbation Δx of the channel of interest.
    pub fn delta(
        &self,
        coi: &[Vec<Complex64>],
        interferers: &[&[Vec<Complex64>]],
        boundary: Boundary,
    ) -> Result<Vec<Vec<Complex64>>> {
        self.check(coi, interferers)?;
        let pols = coi.len();
        let n = coi[0].len();
        let mut out = vec![vec![Complex64::default(); n]; pols];
        for (ci, ch) in self.channels.iter().enumerate() {
            let src: &[Vec<Complex64>] = if ci == 0 { coi } else { interferers[ci - 1] };
            for p in 0..pols {
                let q = 1 - p;
                let mut acc = vec![Complex64::default(); n];
                triplet_sum(&ch.terms, &coi[p], &src[p], &src[p], boundary, 1.0, &mut acc);
                if pols == 2 {
                    let w = if ch.channel == 0 { 1.0 } else { 0.5 };
                    triplet_sum(&ch.terms, &coi[p], &src[q], &src[q], boundary, w, &mut acc);
                    if ch.channel != 0 {
                        triplet_sum(&ch.terms, &coi[q], &src[p], &src[q], boundary, 0.5, &mut acc);
                    }
                }
                for (o, a) in out[p].iter_mut().zip(acc) {
                    *o += J * self.prefactor * a;
                }
            }
        }
        Ok(out)
    }

    /// Real phase-noise taps collected from the phase-type triplets (those in
    /// which the symbol of interest multiplies an energy). Imaginary parts of
    /// these coefficients stay in Δ′.
    pub fn phase_filter(&self) -> Vec<FilterTaps> {
        self.channels
            .iter()
            .map(|ch| {
                let mut same: BTreeMap<i64, f64> = BTreeMap::new();
                let mut cross: BTreeMap<i64, f64> = BTreeMap::new();
                for &(m, n, c) in &ch.terms {
                    if m == 0 {
                        *same.entry(-n).or_default() += c.re;
                        if self.dual {
                            let w = if ch.channel == 0 { 1.0 } else { 0.5 };
                            *cross.entry(-n).or_default() += w * c.re;
                        }
                    } else if ch.channel == 0 && n == 0 {
                        *same.entry(-m).or_default() += c.re;
                    }
                }
                let lo = same.keys().chain(cross.keys()).copied().min().unwrap_or(0);
                let hi = same.keys().chain(cross.keys()).copied().max().unwrap_or(0);
                let len = (hi - lo + 1) as usize;
                let mut s = vec![0.0; len];
                let mut x = vec![0.0; len];
                for (k, v) in same {
                    s[(k - lo) as usize] = v;
                }
                for (k, v) in cross {
                    x[(k - lo) as usize] = v;
                }
                FilterTaps { channel: ch.channel, first_lag: lo, same: s, cross: x }
            })
            .collect()
    }

    /// Mean nonlinear phase rotation for unit-mean energies.
    pub fn mean_phase(&self) -> f64 {
        self.prefactor
            * self
                .phase_filter()
                .iter()
                .map(|t| t.same.iter().sum::<f64>() + t.cross.iter().sum::<f64>())
                .sum::<f64>()
    }

    /// Δx with the constant phase rotation removed,
    /// j·γE·x_k·Σ(e−1)∗h + Δ′x_k: the additive-multiplicative residual.
    /// With a zero boundary the rotation only counts taps that land inside
    /// the sequence, so edge symbols are not penalised for missing neighbours.
    pub fn am_residual(
        &self,
        coi: &[Vec<Complex64>],
        interferers: &[&[Vec<Complex64>]],
        boundary: Boundary,
    ) -> Result<Vec<Vec<Complex64>>> {
        let mut d = self.delta(coi, interferers, boundary)?;
        let phi: Vec<Vec<f64>> = match boundary {
            Boundary::Cyclic => {
                let n = coi.first().map_or(0, Vec::len);
                vec![vec![self.mean_phase(); n]; coi.len()]
            }
            Boundary::Zero => {
                // phase_noise of e ≡ 2 sums the taps that fall in range
                let twos: Vec<Vec<f64>> = coi.iter().map(|p| vec![2.0; p.len()]).collect();
                phase_noise(&self.phase_filter(), self.prefactor, &vec![twos; self.channels.len()], boundary)?
            }
        };
        for ((dp, xp), fp) in d.iter_mut().zip(coi).zip(&phi) {
            for ((v, x), f) in dp.iter_mut().zip(xp).zip(fp) {
                *v -= J * f * x;
            }
        }
        Ok(d)
    }

    /// Split Δx into the phase-noise sequence d_k (per polarisation, from
    /// energies minus one) and the remainder Δ′x.
    pub fn decompose(
        &self,
        coi: &[Vec<Complex64>],
        interferers: &[&[Vec<Complex64>]],
        boundary: Boundary,
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<Complex64>>)> {
        let mut rest = self.am_residual(coi, interferers, boundary)?;
        let mut energies = vec![energies_of(coi)];
        energies.extend(interferers.iter().map(|c| energies_of(c)));
        let d = phase_noise(&self.phase_filter(), self.prefactor, &energies, boundary)?;
        for ((rp, dp), xp) in rest.iter_mut().zip(&d).zip(coi) {
            for ((r, &dk), x) in rp.iter_mut().zip(dp).zip(xp) {
                *r -= J * dk * x;
            }
        }
        Ok((d, rest))
    }
}

/// Phase-noise taps of one channel computed from the m = 0 coefficient row
/// only (C_{-n,0,0} = C_{0,-n,0} supplies the SPM fold).
pub fn filter_taps(link: &LinkConfig, pulse: PulseShape, channel: i32, quad: Quadrature) -> Result<FilterTaps> {
    let mut n_max = memory_symbols(link);
    if channel != 0 {
        n_max += walkoff_symbols(link, channel);
    }
    let block = compute_block(link, pulse, channel, 0, n_max, quad)?;
    let len = 2 * n_max + 1;
    let mut same = vec![0.0; len];
    let mut cross = vec![0.0; len];
    for i in 0..len {
        let lag = i as i64 - n_max as i64;
        let c = block.get(0, -lag).re;
        let fold = if channel == 0 && lag != 0 { 2.0 } else { 1.0 };
        same[i] = fold * c;
        if link.dual_pol {
            cross[i] = if channel == 0 { c } else { 0.5 * c };
        }
    }
    Ok(FilterTaps { channel, first_lag: -(n_max as i64), same, cross })
}

fn energies_of(ch: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    ch.iter().map(|p| p.iter().map(|x| x.norm_sqr()).collect()).collect()
}

fn padded(v: &[Complex64], pad: usize, boundary: Boundary) -> Vec<Complex64> {
    let n = v.len() as i64;
    (-(pad as i64)..n + pad as i64)
        .map(|i| match boundary {
            Boundary::Cyclic => v[i.rem_euclid(n) as usize],
            Boundary::Zero if i >= 0 && i < n => v[i as usize],
            Boundary::Zero => Complex64::default(),
        })
        .collect()
}

/// out_k += weight·Σ C_{m,n}·a_{k+m}·b_{k+n}·c*_{k+m+n}.
pub fn triplet_sum(
    terms: &[(i64, i64, Complex64)],
    a: &[Complex64],
    b: &[Complex64],
    c: &[Complex64],
    boundary: Boundary,
    weight: f64,
    out: &mut [Complex64],
) {
    let n = out.len();
    if n == 0 || terms.is_empty() {
        return;
    }
    let pad = terms
        .iter()
        .map(|&(m, q, _)| m.abs().max(q.abs()).max((m + q).abs()))
        .max()
        .unwrap_or(0) as usize;
    let (pa, pb, pc) = (padded(a, pad, boundary), padded(b, pad, boundary), padded(c, pad, boundary));
    let chunk = 1024;
    out.par_chunks_mut(chunk).enumerate().for_each(|(ci, slice)| {
        let k0 = ci * chunk;
        for &(m, q, coef) in terms {
            let coef = coef * weight;
            let oa = (pad as i64 + m) as usize + k0;
            let ob = (pad as i64 + q) as usize + k0;
            let oc = (pad as i64 + m + q) as usize + k0;
            for (i, o) in slice.iter_mut().enumerate() {
                *o += coef * pa[oa + i] * pb[ob + i] * pc[oc + i].conj();
            }
        }
    });
}

/// d_k = prefactor·Σ_s Σ_n h_{n,s}·(e_{s,k-n} − 1), per polarisation.
/// `energies[s][p]` must follow the order of `filters`.
pub fn phase_noise(
    filters: &[FilterTaps],
    prefactor: f64,
    energies: &[Vec<Vec<f64>>],
    boundary: Boundary,
) -> Result<Vec<Vec<f64>>> {
    if filters.len() != energies.len() {
        return invalid("one energy sequence set per filter is required");
    }
    let pols = energies.first().map_or(0, Vec::len);
    let n = energies.first().and_then(|e| e.first()).map_or(0, Vec::len);
    if energies.iter().any(|e| e.len() != pols || e.iter().any(|p| p.len() != n)) {
        return invalid("energy sequences must share length and polarisation count");
    }
    let mut d = vec![vec![0.0; n]; pols];
    for (f, e) in filters.iter().zip(energies) {
        for p in 0..pols {
            convolve_add(&mut d[p], &e[p], f.first_lag, &f.same, boundary, prefactor);
            if pols == 2 {
                convolve_add(&mut d[p], &e[1 - p], f.first_lag, &f.cross, boundary, prefactor);
            }
        }
    }
    Ok(d)
}

/// out_k += scale·Σ_i taps[i]·(e_{k-(first_lag+i)} − 1).
fn convolve_add(out: &mut [f64], e: &[f64], first_lag: i64, taps: &[f64], boundary: Boundary, scale: f64) {
    let n = e.len() as i64;
    for (k, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (i, &h) in taps.iter().enumerate() {
            if h == 0.0 {
                continue;
            }
            let idx = k as i64 - (first_lag + i as i64);
            let v = match boundary {
                Boundary::Cyclic => e[idx.rem_euclid(n) as usize] - 1.0,
                Boundary::Zero if idx >= 0 && idx < n => e[idx as usize] - 1.0,
                Boundary::Zero => 0.0,
            };
            s += h * v;
        }
        *o += scale * s;
    }
}

/// CPR averaging residual u_m = δ_m − 1/(2N+1) for |m| ≤ N.
pub fn cpr_filter(half_window: usize) -> Vec<f64> {
    let len = 2 * half_window + 1;
    let c = 1.0 / len as f64;
    (0..len).map(|i| if i == half_window { 1.0 - c } else { -c }).collect()
}

/// Residual phase noise after an ideal moving-average CPR over 2N+1 symbols:
/// Δd = u ∗ d (cyclic).
pub fn residual_after_cpr(d: &[f64], half_window: usize) -> Vec<f64> {
    let n = d.len() as i64;
    if n == 0 {
        return Vec::new();
    }
    let len = 2 * half_window as i64 + 1;
    // Sliding sums over the cyclic window [k-N, k+N].
    let mut window: f64 = (-(half_window as i64)..=half_window as i64)
        .map(|i| d[i.rem_euclid(n) as usize])
        .sum();
    let mut out = Vec::with_capacity(d.len());
    for k in 0..n {
        out.push(d[k as usize] - window / len as f64);
        window += d[(k + half_window as i64 + 1).rem_euclid(n) as usize];
        window -= d[(k - half_window as i64).rem_euclid(n) as usize];
    }
    out
}

/// Frequency response of a real tap filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterResponse {
    /// Frequency normalised to the symbol rate, 0 ..= 0.5.
    pub freq: Vec<f64>,
    pub magnitude: Vec<f64>,
    /// Frequency (normalised) where |H| first drops 3 dB below |H(0)|;
    /// 0.5 if it never does.
    pub bandwidth_3db: f64,
}

/// |H(f)| = |Σ_n h_n e^{-j2πfn}| on `n_points` frequencies in [0, 0.5].
pub fn filter_response(first_lag: i64, taps: &[f64], n_points: usize) -> FilterResponse {
    let n_points = n_points.max(2);
    let freq: Vec<f64> = (0..n_points).map(|i| 0.5 * i as f64 / (n_points - 1) as f64).collect();
    let magnitude: Vec<f64> = freq
        .par_iter()
        .map(|&f| {
            let mut s = Complex64::default();
            for (i, &h) in taps.iter().enumerate() {
                let lag = (first_lag + i as i64) as f64;
                s += Complex64::from_polar(h, -2.0 * std::f64::consts::PI * f * lag);
            }
            s.norm()
        })
        .collect();
    let target = magnitude[0] / 2f64.sqrt();
    let mut bandwidth_3db = 0.5;
    for i in 1..n_points {
        if magnitude[i] <= target {
            let (f0, f1) = (freq[i - 1], freq[i]);
            let (m0, m1) = (magnitude[i - 1], magnitude[i]);
            bandwidth_3db = if m0 == m1 { f1 } else { f0 + (m0 - target) / (m0 - m1) * (f1 - f0) };
            break;
        }
    }
    FilterResponse { freq, magnitude, bandwidth_3db }
}
