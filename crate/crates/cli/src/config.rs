//! Versioned JSON experiment configuration.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shaping_core::fiber::{Cpr, LinkConfig};
use shaping_core::matchers::Mapping;
use shaping_core::perturbation::{PulseShape, Quadrature};
use shaping_core::selection::Metric;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

/// Limits of the desk-scale link; larger runs need `--full`.
pub const SCALED_MAX_SPANS: usize = 4;
pub const SCALED_MAX_CHANNELS: usize = 3;
pub const SCALED_MAX_SYMBOLS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingSettings {
    pub n_levels: usize,
    /// Shaping rate in bits per amplitude.
    pub rate: f64,
    pub mapping: Mapping,
    /// Block lengths swept by the length presets.
    pub block_lengths: Vec<usize>,
    /// CCDM block lengths for the PSD presets.
    pub psd_block_lengths: Vec<usize>,
    /// Energy samples per PSD estimate.
    pub psd_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSettings {
    /// Reserved flipping bits per shaper.
    pub nu: usize,
    /// Candidate counts swept by the selection presets.
    pub candidates: Vec<usize>,
    pub metrics: Vec<Metric>,
    pub block_symbols: usize,
    /// Data the selection presets draw candidates from.
    pub source: SelectionSource,
    /// CCDM block length when selecting over matcher outputs.
    pub block_length: usize,
}

/// Source of the selection presets: i.i.d. MB symbols with interleaving
/// candidates, or CCDM blocks with flipping-bit candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSource {
    IidMb,
    Ccdm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub link: LinkConfig,
    /// Symbols per polarisation and channel in simulated frames.
    pub n_symbols: usize,
    pub seeds: Vec<u64>,
    /// Launch power for noise-free NLIN measurements.
    pub probe_power_dbm: f64,
    /// Power grid for sweeps.
    pub powers_dbm: Vec<f64>,
    pub shaping: ShapingSettings,
    pub selection: SelectionSettings,
    pub cpr: Cpr,
    #[serde(default)]
    pub pilot_rate: Option<f64>,
    #[serde(default = "default_pulse")]
    pub pulse: PulseShape,
    #[serde(default)]
    pub quadrature: Quadrature,
    /// Directory for cached perturbation kernels.
    #[serde(default)]
    pub kernel_cache: Option<PathBuf>,
}

fn default_pulse() -> PulseShape {
    PulseShape::Rrc
}

impl ExperimentConfig {
    /// Desk-scale defaults: 4 x 80 km, 3 channels, single polarisation.
    pub fn scaled() -> Self {
        Self {
            version: SCHEMA_VERSION,
            name: "scaled".into(),
            link: LinkConfig::scaled(),
            n_symbols: 1 << 14,
            seeds: vec![1, 2, 3, 4, 5],
            probe_power_dbm: 2.0,
            powers_dbm: vec![-2.0, 0.0, 2.0, 4.0, 6.0],
            shaping: ShapingSettings {
                n_levels: 8,
                rate: 2.4,
                mapping: Mapping::Dim1,
                block_lengths: vec![4, 8, 16, 32, 64, 128, 256, 512],
                psd_block_lengths: vec![20, 108, 300],
                psd_samples: 1 << 18,
            },
            selection: SelectionSettings {
                nu: 2,
                candidates: vec![1, 4, 16, 64],
                metrics: vec![Metric::Lsas, Metric::Am { truncation: shaping_core::perturbation::Truncation::Full }],
                block_symbols: 256,
                source: SelectionSource::IidMb,
                block_length: 180,
            },
            cpr: Cpr::Mpr,
            pilot_rate: None,
            pulse: PulseShape::Rrc,
            quadrature: Quadrature::default(),
            kernel_cache: None,
        }
    }

    /// The full long-haul reference setup (multi-hour runtime).
    pub fn table1() -> Self {
        Self {
            name: "table1".into(),
            link: LinkConfig::table1(),
            n_symbols: 1 << 16,
            powers_dbm: vec![-1.0, 0.0, 1.0, 2.0, 3.0],
            ..Self::scaled()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Whether the link fits the desk-scale limits.
    pub fn is_scaled(&self) -> bool {
        self.link.n_spans <= SCALED_MAX_SPANS
            && self.link.n_channels <= SCALED_MAX_CHANNELS
            && self.n_symbols <= SCALED_MAX_SYMBOLS
    }

    pub fn validate(&self, allow_full: bool) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            bail!("config schema version {} is not supported (expected {SCHEMA_VERSION})", self.version);
        }
        self.link.validate().context("link parameters")?;
        if self.seeds.is_empty() {
            bail!("list at least one seed under \"seeds\"; results never use implicit entropy");
        }
        if self.n_symbols < 1024 {
            bail!("\"n_symbols\" must be at least 1024");
        }
        let spacing = self.link.channel_spacing_ghz.round() as u64;
        let rate = self.link.symbol_rate_gbd.round() as u64;
        if self.link.n_channels > 1 && spacing > 0 && rate > 0 {
            let step = rate / num_integer::gcd(rate, spacing);
            if self.n_symbols as u64 % step != 0 {
                bail!("\"n_symbols\" must be a multiple of {step} so WDM carriers fall on FFT bins");
            }
        }
        if self.shaping.n_levels < 2 || !(self.shaping.rate > 0.0) {
            bail!("\"shaping\" needs at least two levels and a positive rate");
        }
        if self.shaping.block_lengths.iter().chain(&self.shaping.psd_block_lengths).any(|&d| d == 0) {
            bail!("block lengths must be positive");
        }
        if self.selection.candidates.iter().any(|&c| c == 0) || self.selection.block_length == 0 {
            bail!("candidate counts and the selection block length must be positive");
        }
        if matches!(self.cpr, Cpr::Lpa { .. }) && self.pilot_rate.is_none() {
            bail!("LPA carrier recovery needs \"pilot_rate\"");
        }
        if !allow_full && !self.is_scaled() {
            bail!(
                "link exceeds the desk-scale limits ({SCALED_MAX_SPANS} spans, {SCALED_MAX_CHANNELS} channels, {SCALED_MAX_SYMBOLS} symbols); pass --full to run it anyway (expect hours)"
            );
        }
        Ok(())
    }
}
