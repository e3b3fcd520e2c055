use super::{run_link, Cpr, LinkConfig};
use crate::error::{invalid, Error, Result};
use crate::numeric::{block_bootstrap_ci, compensated_sum, db, dbm_to_watt};
use crate::pas::SymbolFrame;
use serde::{Deserialize, Serialize};

/// Effective SNR with a bootstrap confidence interval (all in dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub db: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// True when the error power vanished and the value was capped.
    pub capped: bool,
}

const SNR_CAP_DB: f64 = 200.0;
const BOOT_BLOCK: usize = 512;

/// Effective SNR `E|x|^2 / E|y - x|^2` over data symbols of all
/// polarisations, with a 95% block-bootstrap interval.
pub fn measure_effective_snr(tx: &SymbolFrame, rx: &SymbolFrame) -> Result<SnrEstimate> {
    if tx.len() != rx.len() || tx.n_pols() != rx.n_pols() {
        return invalid("frames differ in shape");
    }
    let idx = tx.data_indices();
    if idx.is_empty() {
        return invalid("frame has no data symbols");
    }
    let mut sig = Vec::with_capacity(idx.len() * tx.n_pols());
    let mut err = Vec::with_capacity(idx.len() * tx.n_pols());
    for p in 0..tx.n_pols() {
        for &k in &idx {
            sig.push(tx.pols[p][k].norm_sqr());
            err.push((rx.pols[p][k] - tx.pols[p][k]).norm_sqr());
        }
    }
    let s = compensated_sum(sig.iter().copied());
    let e = compensated_sum(err.iter().copied());
    let cap = |v: f64| if v.is_finite() { v.min(SNR_CAP_DB) } else { SNR_CAP_DB };
    if e <= s * 1e-20 {
        return Ok(SnrEstimate {
            db: SNR_CAP_DB,
            ci_lo: SNR_CAP_DB,
            ci_hi: SNR_CAP_DB,
            capped: true,
        });
    }
    let point = db(s / e);
    let nb = sig.len().div_ceil(BOOT_BLOCK);
    let bs: Vec<(f64, f64)> = (0..nb)
        .map(|b| {
            let r = b * BOOT_BLOCK..((b + 1) * BOOT_BLOCK).min(sig.len());
            (sig[r.clone()].iter().sum(), err[r].iter().sum())
        })
        .collect();
    let (lo, hi) = if nb >= 2 {
        block_bootstrap_ci(
            nb,
            |pick| {
                let (a, b) = pick
                    .iter()
                    .fold((0.0, 0.0), |acc, &i| (acc.0 + bs[i].0, acc.1 + bs[i].1));
                db(a / b)
            },
            400,
            0.95,
            0x5eed,
        )
    } else {
        (point, point)
    };
    Ok(SnrEstimate {
        db: cap(point),
        ci_lo: cap(lo),
        ci_hi: cap(hi),
        capped: false,
    })
}

/// Fitted Gaussian-noise model `SNR(P) = P / (P_ase + eta P^3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnFit {
    pub p_ase: f64,
    pub eta: f64,
}

impl GnFit {
    pub fn snr(&self, p: f64) -> f64 {
        gn_snr(p, self.p_ase, self.eta)
    }

    /// Optimum launch power `(P_ase / (2 eta))^(1/3)`.
    pub fn p_opt(&self) -> f64 {
        (self.p_ase / (2.0 * self.eta)).cbrt()
    }

    /// Maximum SNR `(1/3) (2 / P_ase)^(2/3) eta^(-1/3)`.
    pub fn snr_opt(&self) -> f64 {
        (2.0 / self.p_ase).powf(2.0 / 3.0) / (3.0 * self.eta.cbrt())
    }
}

pub fn gn_snr(p: f64, p_ase: f64, eta: f64) -> f64 {
    p / (p_ase + eta * p * p * p)
}

fn check_fit(p_ase: f64, eta: f64) -> Result<GnFit> {
    if !(p_ase > 0.0 && eta > 0.0) || !p_ase.is_finite() || !eta.is_finite() {
        return Err(Error::IllConditioned(format!(
            "fitted model is not physical (P_ase = {p_ase:e}, eta = {eta:e})"
        )));
    }
    Ok(GnFit { p_ase, eta })
}

/// Least-squares fit of `P / SNR = P_ase + eta P^3` (powers in W, SNR linear).
pub fn fit_gn(powers: &[f64], snr: &[f64]) -> Result<GnFit> {
    if powers.len() != snr.len() || powers.len() < 2 {
        return invalid("need at least two (power, SNR) pairs");
    }
    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&p, &s) in powers.iter().zip(snr) {
        // scale rows by 1/P so the SNR residuals are weighted evenly in dB
        let y = 1.0 / s;
        let u = 1.0 / p;
        let v = p * p;
        s11 += u * u;
        s12 += u * v;
        s22 += v * v;
        b1 += u * y;
        b2 += v * y;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() <= 1e-12 * s11 * s22 {
        return Err(Error::IllConditioned("powers do not span the model".into()));
    }
    check_fit((s22 * b1 - s12 * b2) / det, (s11 * b2 - s12 * b1) / det)
}

/// Joint fit of two sweeps sharing the noise power, returning the two models.
pub fn fit_gn_shared_ase(
    powers_a: &[f64],
    snr_a: &[f64],
    powers_b: &[f64],
    snr_b: &[f64],
) -> Result<(GnFit, GnFit)> {
    // unknowns (P_ase, eta_a, eta_b); rows 1/SNR = P_ase/P + eta P^2
    let mut rows: Vec<([f64; 3], f64)> = Vec::new();
    for (&p, &s) in powers_a.iter().zip(snr_a) {
        rows.push(([1.0 / p, p * p, 0.0], 1.0 / s));
    }
    for (&p, &s) in powers_b.iter().zip(snr_b) {
        rows.push(([1.0 / p, 0.0, p * p], 1.0 / s));
    }
    // equilibrate columns before forming the normal equations
    let mut scale = [0.0f64; 3];
    for (r, _) in &rows {
        for i in 0..3 {
            scale[i] = scale[i].max(r[i].abs());
        }
    }
    if scale.iter().any(|&s| s == 0.0) {
        return Err(Error::IllConditioned("joint fit needs both sweeps".into()));
    }
    let mut a = [0.0; 9];
    let mut b = [0.0; 3];
    for (r, y) in &rows {
        for i in 0..3 {
            for j in 0..3 {
                a[i * 3 + j] += r[i] / scale[i] * r[j] / scale[j];
            }
            b[i] += r[i] / scale[i] * y;
        }
    }
    let x = crate::numeric::cholesky_solve(&a, &b, 3)
        .ok_or_else(|| Error::IllConditioned("joint fit is singular".into()))?;
    Ok((
        check_fit(x[0] / scale[0], x[1] / scale[1])?,
        check_fit(x[0] / scale[0], x[2] / scale[2])?,
    ))
}

/// Nonlinear shaping gain in dB computed from the ratio of nonlinear
/// coefficients, of optimum SNRs and of optimum powers.
pub fn nonlinear_gain_db(reference: &GnFit, shaped: &GnFit) -> (f64, f64, f64) {
    (
        db((reference.eta / shaped.eta).cbrt()),
        db(shaped.snr_opt() / reference.snr_opt()),
        db(shaped.p_opt() / reference.p_opt()),
    )
}

/// Result of simulating a list of launch powers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerSweep {
    pub powers_dbm: Vec<f64>,
    pub snr: Vec<SnrEstimate>,
    pub fit: Option<GnFit>,
}

/// Simulate each launch power with the same frames and fit the GN model.
pub fn power_sweep(
    link: &LinkConfig,
    frames: &[SymbolFrame],
    powers_dbm: &[f64],
    seed: u64,
    cpr: Cpr,
) -> Result<PowerSweep> {
    let mut snr = Vec::with_capacity(powers_dbm.len());
    for &p in powers_dbm {
        let mut l = link.clone();
        l.launch_power_dbm = p;
        let rx = run_link(&l, frames, seed, cpr)?;
        snr.push(measure_effective_snr(&frames[l.center_channel()], &rx)?);
    }
    let pw: Vec<f64> = powers_dbm.iter().map(|&p| dbm_to_watt(p)).collect();
    let lin: Vec<f64> = snr.iter().map(|s| 10f64.powf(s.db / 10.0)).collect();
    let fit = if powers_dbm.len() >= 2 {
        Some(fit_gn(&pw, &lin)?)
    } else {
        None
    };
    Ok(PowerSweep {
        powers_dbm: powers_dbm.to_vec(),
        snr,
        fit,
    })
}
