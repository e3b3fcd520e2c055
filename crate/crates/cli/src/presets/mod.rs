//! Named experiments. Each preset turns a config into long-format rows.

mod link;
mod select;
mod statistics;

use crate::measure::RunContext;
use crate::output::Results;
use anyhow::{bail, Result};

pub use link::{air_vs_length, nonlinear_gain, snr_vs_length};
pub use select::{metric_label, nlin_power, psd_selection, resolve_metric, run_selection, selection_gain, selection_source, SelectionRun};
pub use statistics::{ccdm_at_most, complexity, edi_vs_length, filter_response, psd_ccdm, psd_ess, rate_loss};

pub struct Preset {
    pub name: &'static str,
    pub about: &'static str,
    pub run: fn(&RunContext) -> Result<Results>,
}

pub const PRESETS: &[Preset] = &[
    Preset { name: "rate-loss", about: "rate loss and induced moments vs block length", run: rate_loss },
    Preset { name: "edi-vs-length", about: "EDI and windowed moments vs CCDM block length", run: edi_vs_length },
    Preset { name: "filter-response", about: "phase-noise filter magnitude for 80, 320 and 1600 km", run: filter_response },
    Preset { name: "psd-ccdm", about: "energy PSD of CCDM frames with the closed form", run: psd_ccdm },
    Preset { name: "psd-ess", about: "energy PSD of ESS frames and its DC level", run: psd_ess },
    Preset { name: "psd-selection", about: "energy PSD after EDI and LSAS selection", run: psd_selection },
    Preset { name: "snr-vs-length", about: "optimum effective SNR vs block length", run: snr_vs_length },
    Preset { name: "air-vs-length", about: "BMD rate at the optimum power vs block length", run: air_vs_length },
    Preset { name: "nonlinear-gain", about: "power sweeps and nonlinear shaping gain three ways", run: nonlinear_gain },
    Preset { name: "selection-gain", about: "measured and predicted selection gain vs candidates", run: selection_gain },
    Preset { name: "complexity", about: "coefficient counts and AM metric cost vs memory", run: complexity },
];

pub fn find(name: &str) -> Result<&'static Preset> {
    match PRESETS.iter().find(|p| p.name == name) {
        Some(p) => Ok(p),
        None => {
            let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            bail!("unknown preset '{name}'; available: {}", names.join(", "))
        }
    }
}

/// Run `f` for every seed of the config on the worker pool, keeping seed order.
pub(crate) fn over_seeds<T: Send>(ctx: &RunContext, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<(u64, T)>> {
    use rayon::prelude::*;
    ctx.cfg
        .seeds
        .par_iter()
        .map(|&s| Ok((s, f(s)?)))
        .collect()
}
