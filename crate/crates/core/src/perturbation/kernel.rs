//! First-order perturbation coefficients C_{m,n,s} for lumped-amplified links.
//!
//! The coefficient couples the triplet x_{k+m,0} x_{k+n,s} x*_{k+m+n,s} into
//! the symbol-spaced perturbation of symbol k of the channel of interest:
//!
//!   C_{m,n,s} = c_s / T ∫dz f(z) ∫dt q_z*(t) q_z(t-mT) q_{z,s}(t-nT) q_{z,s}*(t-(m+n)T)
//!
//! with f(z) the per-span power profile, q_z the unit-energy pulse after
//! accumulated dispersion z and c_s = 1 for s = 0, 2 otherwise. Multiplying by
//! γ and the per-polarisation launch power yields Δx in symbol units.

use crate::error::{invalid, Error, Result};
use crate::fiber::ssfm::omega_grid;
use crate::fiber::{rrc_response, LinkConfig};
use crate::numeric::gauss_legendre;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseShape {
    /// Root-raised cosine with the link's roll-off.
    Rrc,
    /// Gaussian exp(-t²/2τ²) with τ = T/√π (unit energy per symbol slot).
    Gaussian,
}

/// Quadrature and sampling controls for the numerical overlap integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// Samples per symbol of the baseband pulse grid.
    pub oversampling: usize,
    pub segments_per_span: usize,
    pub nodes_per_segment: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { oversampling: 4, segments_per_span: 8, nodes_per_segment: 8 }
    }
}

/// Coefficient-set truncation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    /// |m| + |n| ≤ w.
    Full,
    /// |m·n| < w with |m|, |n| ≤ w.
    Selected,
    /// `Selected` set with magnitudes clustered into 3⌊(w+14)/16⌋+1 levels.
    Quantized,
}

impl std::str::FromStr for Truncation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "selected" => Ok(Self::Selected),
            "quantized" => Ok(Self::Quantized),
            _ => invalid(format!("unknown truncation '{s}' (full|selected|quantized)")),
        }
    }
}

/// Dense coefficient table for one channel offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBlock {
    /// Channel index relative to the channel of interest.
    pub channel: i32,
    pub m_max: usize,
    pub n_max: usize,
    #[serde(skip)]
    pub coeffs: Vec<Complex64>,
}

impl KernelBlock {
    fn width(&self) -> usize {
        2 * self.n_max + 1
    }

    /// C_{m,n}; zero outside the stored support.
    pub fn get(&self, m: i64, n: i64) -> Complex64 {
        if m.unsigned_abs() as usize > self.m_max || n.unsigned_abs() as usize > self.n_max {
            return Complex64::default();
        }
        let i = (m + self.m_max as i64) as usize * self.width() + (n + self.n_max as i64) as usize;
        self.coeffs[i]
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Coefficients under a truncation rule with memory `w`, as (m, n, C).
    pub fn truncate(&self, rule: Truncation, w: usize) -> Vec<(i64, i64, Complex64)> {
        let w = w as i64;
        let keep = |m: i64, n: i64| match rule {
            Truncation::Full => m.abs() + n.abs() <= w,
            Truncation::Selected | Truncation::Quantized => {
                m.abs() <= w && n.abs() <= w && (m * n).abs() < w.max(1)
            }
        };
        let mut terms = Vec::new();
        for m in -(self.m_max as i64)..=self.m_max as i64 {
            for n in -(self.n_max as i64)..=self.n_max as i64 {
                if keep(m, n) {
                    terms.push((m, n, self.get(m, n)));
                }
            }
        }
        if rule == Truncation::Quantized {
            let levels = quantized_level_count(w as usize);
            let mags: Vec<f64> = terms.iter().map(|t| t.2.norm()).collect();
            let (centroids, assign) = kmeans_1d(&mags, levels);
            for (t, &a) in terms.iter_mut().zip(&assign) {
                let mag = t.2.norm();
                t.2 = if mag > 0.0 { t.2 * (centroids[a] / mag) } else { Complex64::default() };
            }
        }
        terms
    }
}

/// Number of distinct coefficient magnitudes kept by the quantized rule.
pub fn quantized_level_count(w: usize) -> usize {
    3 * ((w + 14) / 16) + 1
}

/// Lloyd's algorithm on the real line with quantile initialisation.
/// Returns centroids and the cluster index of every value.
pub fn kmeans_1d(values: &[f64], k: usize) -> (Vec<f64>, Vec<usize>) {
    if values.is_empty() || k == 0 {
        return (Vec::new(), vec![0; values.len()]);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = k.min(sorted.len());
    let mut c: Vec<f64> = (0..k)
        .map(|i| sorted[((2 * i + 1) * sorted.len()) / (2 * k)])
        .collect();
    let mut assign = vec![0usize; values.len()];
    for _ in 0..200 {
        c.sort_by(f64::total_cmp);
        let mut changed = false;
        for (a, &v) in assign.iter_mut().zip(values) {
            let best = c
                .iter()
                .enumerate()
                .min_by(|x, y| (x.1 - v).abs().total_cmp(&(y.1 - v).abs()))
                .map(|x| x.0)
                .unwrap_or(0);
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&a, &v) in assign.iter().zip(values) {
            sums[a] += v;
            counts[a] += 1;
        }
        for i in 0..k {
            if counts[i] > 0 {
                c[i] = sums[i] / counts[i] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    (c, assign)
}

/// Coefficients of every channel used by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationKernel {
    /// Hash of the link parameters the kernel was computed for.
    pub link_hash: String,
    pub pulse: PulseShape,
    pub quadrature: Quadrature,
    /// Nonlinear coefficient γ in 1/(W m).
    pub gamma: f64,
    /// One-sided memory in symbols.
    pub w_mem: usize,
    pub blocks: Vec<KernelBlock>,
}

impl PerturbationKernel {
    pub fn block(&self, channel: i32) -> Option<&KernelBlock> {
        self.blocks.iter().find(|b| b.channel == channel)
    }

    /// Coefficients for the channel of interest and `interferers` (relative
    /// channel indices). SPM lags span ±w_mem; XPM n-lags are widened by the
    /// walk-off accumulated over the link.
    pub fn compute(
        link: &LinkConfig,
        pulse: PulseShape,
        interferers: &[i32],
        quad: Quadrature,
    ) -> Result<Self> {
        let w_mem = memory_symbols(link);
        let mut blocks = vec![compute_block(link, pulse, 0, w_mem, w_mem, quad)?];
        for &s in interferers {
            if s == 0 {
                return invalid("interferer offsets must be non-zero");
            }
            blocks.push(compute_block(link, pulse, s, w_mem, w_mem + walkoff_symbols(link, s), quad)?);
        }
        Ok(Self {
            link_hash: link.kernel_hash(),
            pulse,
            quadrature: quad,
            gamma: link.gamma(),
            w_mem,
            blocks,
        })
    }

    /// Interferer offsets present in the link around the centre channel.
    pub fn link_interferers(link: &LinkConfig) -> Vec<i32> {
        let c = link.center_channel() as i32;
        (0..link.n_channels as i32).map(|ch| ch - c).filter(|&s| s != 0).collect()
    }
}

/// One-sided dispersion memory in symbols, ⌈2π |β2| L R_s²⌉: the
/// differential group delay across the symbol-rate bandwidth after the full
/// link. Two pulses this far apart still overlap at the link end, so C_{0,n}
/// extends to this lag.
pub fn memory_symbols(link: &LinkConfig) -> usize {
    let rs = link.symbol_rate();
    (2.0 * PI * link.beta2().abs() * link.total_length() * rs * rs).ceil() as usize
}

/// Group-delay walk-off between the channel of interest and channel `s`
/// accumulated over the link, in symbols.
pub fn walkoff_symbols(link: &LinkConfig, s: i32) -> usize {
    let omega = 2.0 * PI * s as f64 * link.channel_spacing();
    (link.beta2().abs() * omega.abs() * link.total_length() * link.symbol_rate()).ceil() as usize
}

/// Composite Gauss-Legendre nodes over the link: (accumulated distance,
/// local distance within the span, weight × power profile).
fn z_nodes(link: &LinkConfig, quad: Quadrature) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(quad.nodes_per_segment.max(1));
    let l = link.span_length();
    let seg = l / quad.segments_per_span.max(1) as f64;
    let a = link.alpha();
    let mut nodes = Vec::new();
    for span in 0..link.n_spans {
        for j in 0..quad.segments_per_span.max(1) {
            let z0 = j as f64 * seg;
            for (xi, wi) in x.iter().zip(&w) {
                let zl = z0 + seg * (xi + 1.0) / 2.0;
                nodes.push((span as f64 * l + zl, wi * seg / 2.0 * (-a * zl).exp()));
            }
        }
    }
    nodes
}

fn pulse_spectrum(link: &LinkConfig, pulse: PulseShape, omega: &[f64]) -> Vec<f64> {
    let rs = link.symbol_rate();
    let tau = 1.0 / (rs * PI.sqrt());
    omega
        .iter()
        .map(|&w| match pulse {
            PulseShape::Rrc => rrc_response(w / (2.0 * PI), rs, link.rolloff),
            PulseShape::Gaussian => (-0.5 * tau * tau * w * w).exp(),
        })
        .collect()
}

const MIN_GRID_SYMBOLS: usize = 1024;

/// Numerically evaluate C_{m,n,s} for |m| ≤ m_max, |n| ≤ n_max.
///
/// For each lag m the n-dependence is a cross-correlation of
/// u_m(t) = q*(t) q(t-mT) with v_m(t) = q_s(t) q_s*(t-mT), done by FFT on a
/// periodic grid wide enough that no lag wraps. Interferers are evaluated in
/// their own baseband, which turns the carrier into a walk-off term in the
/// dispersion exponent and a phase e^{jΩmT}.
pub fn compute_block(
    link: &LinkConfig,
    pulse: PulseShape,
    channel: i32,
    m_max: usize,
    n_max: usize,
    quad: Quadrature,
) -> Result<KernelBlock> {
    link.validate()?;
    if quad.oversampling < 4 {
        return invalid("kernel oversampling must be at least 4 samples per symbol");
    }
    let os = quad.oversampling;
    let spread = memory_symbols(link) + 16;
    // RRC tails fall off as 1/t², so short grids need a floor against
    // wrap-around from the periodic replicas
    let n_sym = (2 * (n_max + m_max) + 2 * spread + 64).next_power_of_two().max(MIN_GRID_SYMBOLS);
    let n = n_sym * os;
    let rs = link.symbol_rate();
    let omega = omega_grid(n, rs * os as f64);
    let g = pulse_spectrum(link, pulse, &omega);
    let b2 = link.beta2();
    let big_omega = 2.0 * PI * channel as f64 * link.channel_spacing();
    let t_sym = 1.0 / rs;

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    // Unit energy per symbol slot: (1/os) Σ|q|² = 1.
    let mut q0: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    inv.process(&mut q0);
    let norm = (q0.iter().map(|v| v.norm_sqr()).sum::<f64>() / os as f64).sqrt();
    if norm == 0.0 {
        return invalid("pulse has zero energy");
    }
    let amp = 1.0 / norm;

    let c_s = if channel == 0 { 1.0 } else { 2.0 };
    let width = 2 * n_max + 1;
    let rows = 2 * m_max + 1;
    let nodes = z_nodes(link, quad);
    let carrier: Vec<Complex64> = (0..rows)
        .map(|r| {
            let m = r as f64 - m_max as f64;
            Complex64::from_polar(1.0, big_omega * m * t_sym)
        })
        .collect();

    let disperse = |extra: f64, z: f64| -> Vec<Complex64> {
        let mut q: Vec<Complex64> = g
            .iter()
            .zip(&omega)
            .map(|(&gv, &w)| Complex64::from_polar(gv * amp, 0.5 * b2 * (w * w + 2.0 * extra * w) * z))
            .collect();
        inv.process(&mut q);
        q
    };

    let acc = nodes
        .par_iter()
        .fold(
            || vec![Complex64::default(); rows * width],
            |mut acc, &(z, weight)| {
                let q = disperse(0.0, z);
                let qs = if channel == 0 { q.clone() } else { disperse(big_omega, z) };
                let mut u = vec![Complex64::default(); n];
                let mut v = vec![Complex64::default(); n];
                let scale = weight * c_s / os as f64 / n as f64;
                for r in 0..rows {
                    let shift = ((r as i64 - m_max as i64) * os as i64).rem_euclid(n as i64) as usize;
                    for t in 0..n {
                        let ts = (t + n - shift) % n;
                        u[t] = q[t].conj() * q[ts];
                        v[t] = qs[t] * qs[ts].conj();
                    }
                    fwd.process(&mut u);
                    fwd.process(&mut v);
                    // Σ_t u[t] v[t-τ]  ↔  U[k] V[-k]
                    let mut prod: Vec<Complex64> =
                        (0..n).map(|k| u[k] * v[(n - k) % n]).collect();
                    inv.process(&mut prod);
                    let row = &mut acc[r * width..(r + 1) * width];
                    for (j, slot) in row.iter_mut().enumerate() {
                        let lag = (j as i64 - n_max as i64) * os as i64;
                        *slot += prod[lag.rem_euclid(n as i64) as usize] * carrier[r] * scale;
                    }
                }
                acc
            },
        )
        .reduce(
            || vec![Complex64::default(); rows * width],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    if acc.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Unstable("non-finite perturbation coefficient".into()));
    }
    Ok(KernelBlock { channel, m_max, n_max, coeffs: acc })
}

/// Closed-form time integral for Gaussian pulses at accumulated dispersion z,
/// in units of the symbol period; `shift` is the walk-off in symbols.
fn gaussian_overlap(m: f64, n: f64, b2z: f64, t_sym: f64) -> Complex64 {
    let tau2 = t_sym * t_sym / PI;
    let a = Complex64::new(tau2, -b2z);
    let mm = m * t_sym;
    let nn = n * t_sym;
    let expo = -(mm - nn).powi(2) / (4.0 * a) - (mm + nn).powi(2) / (4.0 * a.conj());
    let pref = tau2.powf(1.5) * (PI / 2.0).sqrt() / (t_sym * a.norm());
    expo.exp() * pref
}

/// Gaussian-pulse coefficient block from the closed-form time integral; only
/// the z integral is done numerically.
pub fn gaussian_block(
    link: &LinkConfig,
    channel: i32,
    m_max: usize,
    n_max: usize,
    quad: Quadrature,
) -> Result<KernelBlock> {
    link.validate()?;
    let t_sym = 1.0 / link.symbol_rate();
    let b2 = link.beta2();
    let big_omega = 2.0 * PI * channel as f64 * link.channel_spacing();
    let c_s = if channel == 0 { 1.0 } else { 2.0 };
    let nodes = z_nodes(link, quad);
    let width = 2 * n_max + 1;
    let rows = 2 * m_max + 1;
    let coeffs: Vec<Complex64> = (0..rows * width)
        .into_par_iter()
        .map(|i| {
            let m = (i / width) as f64 - m_max as f64;
            let n = (i % width) as f64 - n_max as f64;
            let carrier = Complex64::from_polar(1.0, big_omega * m * t_sym);
            let mut s = Complex64::default();
            for &(z, w) in &nodes {
                let d = b2 * big_omega * z / t_sym;
                s += gaussian_overlap(m, n - d, b2 * z, t_sym) * w;
            }
            s * carrier * c_s
        })
        .collect();
    Ok(KernelBlock { channel, m_max, n_max, coeffs })
}
