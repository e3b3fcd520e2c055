//! Multi-channel fiber link simulation with the split-step Fourier method,
//! coherent receiver processing and effective-SNR measurement.

mod receiver;
pub(crate) mod ssfm;
mod snr;

pub use receiver::{recover, receive, run_link, Cpr};
pub use snr::{
    fit_gn, fit_gn_shared_ase, gn_snr, measure_effective_snr, nonlinear_gain_db, power_sweep,
    GnFit, PowerSweep, SnrEstimate,
};
pub use ssfm::{
    propagate, rrc_response, simulate, steps_per_span, transmit, Field, SimOptions,
};

use crate::error::{invalid, Result};
use crate::numeric::{dbm_to_watt, from_db};
use serde::{Deserialize, Serialize};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Fiber link and transmitter parameters (engineering units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub n_spans: usize,
    pub span_length_km: f64,
    pub alpha_db_per_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub gamma_per_w_km: f64,
    pub noise_figure_db: f64,
    /// Add amplifier noise after every span.
    pub ase: bool,
    pub wavelength_nm: f64,
    pub symbol_rate_gbd: f64,
    pub channel_spacing_ghz: f64,
    pub n_channels: usize,
    pub rolloff: f64,
    pub samples_per_symbol: usize,
    /// Launch power per channel (sum over polarisations).
    pub launch_power_dbm: f64,
    pub dual_pol: bool,
    /// Upper bound on the nonlinear phase rotation per split step.
    pub max_step_phase_rad: f64,
    pub min_steps_per_span: usize,
}

impl LinkConfig {
    /// The long-haul reference setup: 20 x 80 km, 11 channels at 32 GBd.
    pub fn table1() -> Self {
        Self {
            n_spans: 20,
            span_length_km: 80.0,
            alpha_db_per_km: 0.2,
            dispersion_ps_nm_km: 17.0,
            gamma_per_w_km: 1.37,
            noise_figure_db: 6.0,
            ase: true,
            wavelength_nm: 1550.0,
            symbol_rate_gbd: 32.0,
            channel_spacing_ghz: 50.0,
            n_channels: 11,
            rolloff: 0.1,
            samples_per_symbol: 32,
            launch_power_dbm: 2.0,
            dual_pol: false,
            max_step_phase_rad: 1e-3,
            min_steps_per_span: 4,
        }
    }

    /// Scaled-down link used for laptop-scale experiments: 4 x 80 km, 3 channels.
    pub fn scaled() -> Self {
        Self {
            n_spans: 4,
            n_channels: 3,
            samples_per_symbol: 8,
            ..Self::table1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spans == 0 || self.span_length_km <= 0.0 {
            return invalid("link needs at least one span of positive length");
        }
        if self.n_channels == 0 || self.samples_per_symbol < 2 {
            return invalid("need at least one channel and two samples per symbol");
        }
        if !(0.0..=1.0).contains(&self.rolloff) || self.symbol_rate_gbd <= 0.0 {
            return invalid("roll-off must be in [0, 1] and the symbol rate positive");
        }
        if !(self.max_step_phase_rad > 0.0) {
            return invalid("step phase bound must be positive");
        }
        let fs = self.sample_rate();
        let edge = self.channel_offset_hz(self.n_channels - 1).abs()
            + 0.5 * self.symbol_rate() * (1.0 + self.rolloff);
        if edge >= fs / 2.0 {
            return invalid("sample rate too low for the WDM grid");
        }
        Ok(())
    }

    pub fn symbol_rate(&self) -> f64 {
        self.symbol_rate_gbd * 1e9
    }

    pub fn sample_rate(&self) -> f64 {
        self.symbol_rate() * self.samples_per_symbol as f64
    }

    pub fn channel_spacing(&self) -> f64 {
        self.channel_spacing_ghz * 1e9
    }

    /// Group-velocity dispersion in s^2/m.
    pub fn beta2(&self) -> f64 {
        let lambda = self.wavelength_nm * 1e-9;
        let d = self.dispersion_ps_nm_km * 1e-6; // s/m^2
        -d * lambda * lambda / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT)
    }

    /// Power attenuation in 1/m.
    pub fn alpha(&self) -> f64 {
        self.alpha_db_per_km / (10.0 * std::f64::consts::LOG10_E) * 1e-3
    }

    /// Nonlinear coefficient in 1/(W m).
    pub fn gamma(&self) -> f64 {
        self.gamma_per_w_km * 1e-3
    }

    pub fn span_length(&self) -> f64 {
        self.span_length_km * 1e3
    }

    pub fn total_length(&self) -> f64 {
        self.span_length() * self.n_spans as f64
    }

    pub fn effective_length(&self) -> f64 {
        let a = self.alpha();
        if a == 0.0 {
            self.span_length()
        } else {
            (1.0 - (-a * self.span_length()).exp()) / a
        }
    }

    pub fn launch_power(&self) -> f64 {
        dbm_to_watt(self.launch_power_dbm)
    }

    pub fn n_pols(&self) -> usize {
        if self.dual_pol {
            2
        } else {
            1
        }
    }

    /// Index of the channel of interest (the centre channel).
    pub fn center_channel(&self) -> usize {
        self.n_channels / 2
    }

    pub fn channel_offset_hz(&self, ch: usize) -> f64 {
        (ch as f64 - self.center_channel() as f64) * self.channel_spacing()
    }

    pub fn carrier_frequency(&self) -> f64 {
        SPEED_OF_LIGHT / (self.wavelength_nm * 1e-9)
    }

    /// One-sided amplifier noise spectral density per polarisation (W/Hz).
    pub fn ase_psd(&self) -> f64 {
        let g = (self.alpha() * self.span_length()).exp();
        let f = from_db(self.noise_figure_db);
        PLANCK * self.carrier_frequency() * (f * g - 1.0) / 2.0
    }

    /// Accumulated amplifier noise power in the symbol-rate bandwidth, summed
    /// over the simulated polarisations.
    pub fn ase_power(&self) -> f64 {
        self.ase_psd() * self.symbol_rate() * self.n_spans as f64 * self.n_pols() as f64
    }

    /// Nonlinear coefficient seen by the propagation equation.
    pub fn gamma_eff(&self) -> f64 {
        if self.dual_pol {
            8.0 / 9.0 * self.gamma()
        } else {
            self.gamma()
        }
    }

    /// Canonical hash of the parameters that determine perturbation kernels.
    pub fn kernel_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let key = serde_json::json!({
            "n_spans": self.n_spans,
            "span_length_km": self.span_length_km,
            "alpha": self.alpha_db_per_km,
            "dispersion": self.dispersion_ps_nm_km,
            "wavelength": self.wavelength_nm,
            "symbol_rate": self.symbol_rate_gbd,
            "spacing": self.channel_spacing_ghz,
            "n_channels": self.n_channels,
            "rolloff": self.rolloff,
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
