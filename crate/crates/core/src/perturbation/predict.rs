//! Moment-based NLIN coefficient model and optimum-SNR prediction.

use crate::error::{invalid, Result};
use crate::fiber::GnFit;
use crate::numeric::linear_fit;
use serde::{Deserialize, Serialize};

/// η ≈ η1 + η2·(μ4 − 2): NLIN coefficient as a function of the (windowed)
/// fourth standardized moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AminModel {
    pub eta1: f64,
    pub eta2: f64,
}

impl AminModel {
    pub fn eta(&self, mu4: f64) -> f64 {
        self.eta1 + self.eta2 * (mu4 - 2.0)
    }

    /// Least-squares fit to measured (μ4, η) pairs.
    pub fn fit(points: &[(f64, f64)]) -> Result<Self> {
        let x: Vec<f64> = points.iter().map(|p| p.0 - 2.0).collect();
        let y: Vec<f64> = points.iter().map(|p| p.1).collect();
        let spread = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - x.iter().cloned().fold(f64::INFINITY, f64::min);
        if points.len() < 2 || !(spread > 1e-9) {
            return invalid("calibration needs at least two distinct fourth moments");
        }
        let (slope, intercept, _) = linear_fit(&x, &y);
        Ok(Self { eta1: intercept, eta2: slope })
    }
}

/// Calibrated SPM and XPM parts of the NLIN coefficient. The SPM part sees
/// moments over the SPM window and the XPM part over the XPM window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlinCalibration {
    pub spm: AminModel,
    pub xpm: Option<AminModel>,
}

impl NlinCalibration {
    /// Split from a single-channel calibration (SPM only) and a
    /// multi-channel one on the same moments (SPM + XPM).
    pub fn from_runs(single: &[(f64, f64)], multi: &[(f64, f64)]) -> Result<Self> {
        let spm = AminModel::fit(single)?;
        let total = AminModel::fit(multi)?;
        Ok(Self {
            spm,
            xpm: Some(AminModel { eta1: total.eta1 - spm.eta1, eta2: total.eta2 - spm.eta2 }),
        })
    }

    pub fn eta(&self, mu4_spm: f64, mu4_xpm: f64) -> f64 {
        self.spm.eta(mu4_spm) + self.xpm.map_or(0.0, |x| x.eta(mu4_xpm))
    }
}

/// Optimum effective SNR (linear) (1/3)(2/P_ASE)^{2/3} η^{-1/3} and the η used.
pub fn predict_snr(cal: &NlinCalibration, p_ase: f64, mu4_spm: f64, mu4_xpm: f64) -> Result<(f64, f64)> {
    let eta = cal.eta(mu4_spm, mu4_xpm);
    if !(eta > 0.0) || !(p_ase > 0.0) {
        return invalid(format!("non-physical prediction inputs (eta = {eta}, P_ASE = {p_ase})"));
    }
    Ok((GnFit { p_ase, eta }.snr_opt(), eta))
}
