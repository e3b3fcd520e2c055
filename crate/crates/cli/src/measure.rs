//! Measurement building blocks shared by the presets.

use crate::config::ExperimentConfig;
use anyhow::{Context, Result};
use num_complex::Complex64;
use shaping_core::constellation::{build_qam, entropy, mb_amplitudes, qam_from_amplitudes, Constellation};
use shaping_core::fiber::{measure_effective_snr, run_link, GnFit, LinkConfig};
use shaping_core::matchers::ShaperSpec;
use shaping_core::numeric::{db, dbm_to_watt, from_db, rng_from_seed, sub_seed, watt_to_dbm};
use shaping_core::pas::{assemble_frame, pilot_period, FrameConfig, Source, SymbolFrame};
use shaping_core::perturbation::{load_or_compute, PerturbationKernel};
use shaping_core::selection::{selected_frame, SelectionConfig, Scorer, Strategy};
use std::path::{Path, PathBuf};

/// Symbol sources compared by the presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKind {
    Uniform,
    /// i.i.d. Maxwell-Boltzmann with amplitude entropy equal to the rate.
    Iid,
    Ccdm(usize),
    Ess(usize),
}

impl SourceKind {
    pub fn label(&self) -> String {
        match self {
            SourceKind::Uniform => "uniform".into(),
            SourceKind::Iid => "iid-mb".into(),
            SourceKind::Ccdm(d) => format!("ccdm-{d}"),
            SourceKind::Ess(d) => format!("ess-{d}"),
        }
    }

    /// Series name without the block length.
    pub fn family(&self) -> &'static str {
        match self {
            SourceKind::Uniform => "uniform",
            SourceKind::Iid => "iid-mb",
            SourceKind::Ccdm(_) => "ccdm",
            SourceKind::Ess(_) => "ess",
        }
    }

    /// Sweep coordinate: the block length, or 0 for i.i.d. sources.
    pub fn x(&self) -> f64 {
        match self {
            SourceKind::Ccdm(d) | SourceKind::Ess(d) => *d as f64,
            _ => 0.0,
        }
    }
}

/// Maxwell-Boltzmann QAM whose amplitude entropy equals `rate`.
pub fn mb_for_rate(n_levels: usize, rate: f64) -> Result<Constellation> {
    let (mut lo, mut hi) = (0.0, 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if entropy(&mb_amplitudes(n_levels, mid)?) > rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(qam_from_amplitudes((2 * n_levels).pow(2), &mb_amplitudes(n_levels, 0.5 * (lo + hi))?)?)
}

pub fn shaper_spec(cfg: &ExperimentConfig, kind: SourceKind) -> Result<Option<ShaperSpec>> {
    let s = &cfg.shaping;
    Ok(match kind {
        SourceKind::Ccdm(d) => Some(ShaperSpec::ccdm_for_rate(s.n_levels, d, s.rate)?),
        SourceKind::Ess(d) => Some(ShaperSpec::ess_for_rate(s.n_levels, d, s.rate)?),
        _ => None,
    })
}

pub fn build_source(cfg: &ExperimentConfig, kind: SourceKind) -> Result<Source> {
    let order = (2 * cfg.shaping.n_levels).pow(2);
    Ok(match kind {
        SourceKind::Uniform => Source::Iid { constellation: build_qam(order, None)? },
        SourceKind::Iid => Source::Iid { constellation: mb_for_rate(cfg.shaping.n_levels, cfg.shaping.rate)? },
        _ => Source::Shaped {
            spec: shaper_spec(cfg, kind)?.expect("shaped kind"),
            mapping: cfg.shaping.mapping,
        },
    })
}

/// One frame per WDM channel, each from its own seed stream.
pub fn channel_frames(cfg: &ExperimentConfig, link: &LinkConfig, source: &Source, seed: u64) -> Result<Vec<SymbolFrame>> {
    (0..link.n_channels)
        .map(|ch| {
            let fc = FrameConfig {
                source: source.clone(),
                n_pols: link.n_pols(),
                n_symbols: cfg.n_symbols,
                pilot_rate: cfg.pilot_rate,
            };
            Ok(assemble_frame(&fc, sub_seed(seed, 1000 + ch as u64))?)
        })
        .collect()
}

/// Insert periodic pilots drawn from `constellation` into a pilot-free frame
/// of data symbols, giving `n_symbols` symbols in total.
pub fn with_pilots(
    data: SymbolFrame,
    n_symbols: usize,
    pilot_rate: Option<f64>,
    constellation: &Constellation,
    seed: u64,
) -> Result<SymbolFrame> {
    let Some(rate) = pilot_rate else {
        let mut f = data;
        for p in f.pols.iter_mut() {
            p.truncate(n_symbols);
        }
        f.pilot_mask.truncate(n_symbols);
        return Ok(f);
    };
    let period = pilot_period(rate)?;
    let mask: Vec<bool> = (0..n_symbols).map(|k| k % period == 0).collect();
    let mut rng = rng_from_seed(sub_seed(seed, 3));
    let pols = data
        .pols
        .iter()
        .map(|d| {
            let mut it = d.iter();
            let pilots = constellation.sample(mask.iter().filter(|m| **m).count(), &mut rng);
            let mut pit = pilots.into_iter();
            mask.iter()
                .map(|&m| if m { pit.next().unwrap() } else { *it.next().expect("enough data symbols") })
                .collect()
        })
        .collect();
    let mut meta = data.meta;
    meta.pilot_period = Some(period);
    Ok(SymbolFrame { pols, pilot_mask: mask, meta })
}

/// Number of data symbols in a frame of `n_symbols` with the configured pilots.
pub fn data_symbols(n_symbols: usize, pilot_rate: Option<f64>) -> Result<usize> {
    Ok(match pilot_rate {
        Some(r) => {
            let p = pilot_period(r)?;
            n_symbols - n_symbols.div_ceil(p)
        }
        None => n_symbols,
    })
}

/// One selected frame per channel; every transmitter selects on its own data.
pub fn selected_channel_frames(
    cfg: &ExperimentConfig,
    link: &LinkConfig,
    source: &Source,
    selection: &SelectionConfig,
    scorer: &Scorer,
    seed: u64,
) -> Result<Vec<SymbolFrame>> {
    let n_data = data_symbols(cfg.n_symbols, cfg.pilot_rate)?;
    let pilots = match source {
        Source::Iid { constellation } => constellation.clone(),
        Source::Shaped { spec, .. } => {
            let m = shaping_core::matchers::Matcher::new(spec)?;
            shaping_core::pas::induced_constellation(&m, spec)?
        }
    };
    (0..link.n_channels)
        .map(|ch| {
            let s = SelectionConfig { seed: sub_seed(selection.seed, ch as u64), ..selection.clone() };
            let ch_seed = sub_seed(seed, 1000 + ch as u64);
            let sel = selected_frame(source, link.n_pols(), &s, scorer, n_data, ch_seed)?;
            with_pilots(sel.frame, cfg.n_symbols, cfg.pilot_rate, &pilots, ch_seed)
        })
        .collect()
}

/// Selection strategy used for a source: flipping bits for matchers,
/// interleaving for i.i.d. symbols.
pub fn strategy_for(source: &Source, nu: usize) -> Strategy {
    match source {
        Source::Shaped { .. } => Strategy::FlippingBits { nu },
        Source::Iid { .. } => Strategy::Interleaving,
    }
}

/// Noise-free probe of the centre channel.
#[derive(Debug, Clone, Copy)]
pub struct Probe {
    /// Effective SNR without ASE at the probe power (dB).
    pub snr_db: f64,
    /// NLIN coefficient η = σ²_NLIN / P³ (1/W²).
    pub eta: f64,
    /// Optimum effective SNR with the link's ASE (dB).
    pub snr_opt_db: f64,
    pub p_opt_dbm: f64,
}

/// Simulate without ASE at the probe power and turn the NLIN variance into
/// the optimum-power SNR of the GN-type model with the link's ASE power.
pub fn probe(cfg: &ExperimentConfig, link: &LinkConfig, frames: &[SymbolFrame], seed: u64) -> Result<Probe> {
    let mut l = link.clone();
    l.ase = false;
    l.launch_power_dbm = cfg.probe_power_dbm;
    let rx = run_link(&l, frames, seed, cfg.cpr)?;
    let snr = measure_effective_snr(&frames[l.center_channel()], &rx)?;
    let p = dbm_to_watt(cfg.probe_power_dbm);
    let eta = 1.0 / (from_db(snr.db) * p * p);
    let fit = GnFit { p_ase: link.ase_power(), eta };
    Ok(Probe { snr_db: snr.db, eta, snr_opt_db: db(fit.snr_opt()), p_opt_dbm: watt_to_dbm(fit.p_opt()) })
}

/// Shared state of one preset run.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub cache_dir: PathBuf,
}

impl RunContext {
    pub fn new(cfg: ExperimentConfig, out_dir: &Path) -> Self {
        let cache_dir = cfg.kernel_cache.clone().unwrap_or_else(|| out_dir.join("kernels"));
        Self { cfg, cache_dir }
    }

    /// Kernel of `link` for all its WDM neighbours (or only SPM).
    pub fn kernel(&self, link: &LinkConfig, with_xpm: bool) -> Result<PerturbationKernel> {
        let inter = if with_xpm { PerturbationKernel::link_interferers(link) } else { Vec::new() };
        std::fs::create_dir_all(&self.cache_dir).with_context(|| format!("creating {}", self.cache_dir.display()))?;
        Ok(load_or_compute(&self.cache_dir, link, self.cfg.pulse, &inter, self.cfg.quadrature)?)
    }
}

/// Symbols of every polarisation of the centre channel, concatenated.
pub fn centre_symbols(frames: &[SymbolFrame], link: &LinkConfig) -> Vec<Complex64> {
    frames[link.center_channel()].pols.concat()
}

impl std::str::FromStr for SourceKind {
    type Err = anyhow::Error;
    /// `uniform`, `iid`, `ccdm:D` or `ess:D`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, len) = match s.split_once(':') {
            Some((k, d)) => (k, Some(d.parse::<usize>().with_context(|| format!("block length in '{s}'"))?)),
            None => (s, None),
        };
        match (kind, len) {
            ("uniform", None) => Ok(SourceKind::Uniform),
            ("iid" | "iid-mb", None) => Ok(SourceKind::Iid),
            ("ccdm", Some(d)) if d > 0 => Ok(SourceKind::Ccdm(d)),
            ("ess", Some(d)) if d > 0 => Ok(SourceKind::Ess(d)),
            _ => anyhow::bail!("unknown source '{s}'; use uniform, iid, ccdm:D or ess:D"),
        }
    }
}
