//! Presets that need no fibre simulation: matcher statistics, energy
//! spectra, filter shapes and complexity counts.

use super::over_seeds;
use crate::measure::{mb_for_rate, shaper_spec, RunContext, SourceKind};
use crate::output::Results;
use anyhow::Result;
use rayon::prelude::*;
use shaping_core::constellation::standardized_moments;
use shaping_core::fiber::LinkConfig;
use shaping_core::matchers::{induced_moments, rate_loss as matcher_rate_loss, Mapping, Matcher, ShaperSpec};
use shaping_core::numeric::{db, variance};
use shaping_core::pas::{assemble_frame, FrameConfig, Source};
use shaping_core::perturbation::{
    edi, expected_welch_psd, filter_response as response, filter_taps, normalized_energies, psd_estimate,
    window_sizes, windowed_moments, EnergySource, PSD_SEGMENT,
};
use shaping_core::selection::complexity_report;

const MOMENT_BLOCKS: usize = 4096;

/// Shaper spec for a sweep point, or `None` (with a note on stderr) when the
/// rate cannot be met at this block length.
fn reachable(ctx: &RunContext, kind: SourceKind) -> Option<ShaperSpec> {
    match shaper_spec(&ctx.cfg, kind) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("skipping {}: {e}", kind.label());
            None
        }
    }
}

/// CCDM at the configured rate, or at the highest rate its block length
/// supports (used where only the energy statistics matter).
pub fn ccdm_at_most(n_levels: usize, block_len: usize, rate: f64) -> Result<ShaperSpec> {
    let top = (rate * block_len as f64).ceil() as usize;
    for k in (1..=top).rev() {
        let r = if k == top { rate } else { k as f64 / block_len as f64 };
        if let Ok(spec) = ShaperSpec::ccdm_for_rate(n_levels, block_len, r) {
            return Ok(spec);
        }
    }
    anyhow::bail!("no CCDM with {n_levels} levels fits block length {block_len}")
}

/// Symbol energies of a single-polarisation frame with one-dimensional
/// mapping, so each block occupies `D` consecutive symbols.
fn frame_energies(source: Source, n_symbols: usize, seed: u64) -> Result<Vec<f64>> {
    let source = match source {
        Source::Shaped { spec, .. } => Source::Shaped { spec, mapping: Mapping::Dim1 },
        s => s,
    };
    let f = assemble_frame(&FrameConfig { source, n_pols: 1, n_symbols, pilot_rate: None }, seed)?;
    Ok(f.energies(0))
}

fn shaped(spec: &ShaperSpec) -> Source {
    Source::Shaped { spec: spec.clone(), mapping: Mapping::Dim1 }
}

fn family(spec: &ShaperSpec) -> &'static str {
    match spec.kind {
        shaping_core::matchers::ShaperKind::Ccdm { .. } => "ccdm",
        _ => "ess",
    }
}

pub fn rate_loss(ctx: &RunContext) -> Result<Results> {
    const P: &str = "rate-loss";
    let s = &ctx.cfg.shaping;
    let mut out = Results::default();
    let (mu4, mu6) = standardized_moments(&mb_for_rate(s.n_levels, s.rate)?);
    out.point(P, "iid-mb/mu4", 0.0, mu4);
    out.point(P, "iid-mb/mu6", 0.0, mu6);
    for &d in &s.block_lengths {
        for kind in [SourceKind::Ccdm(d), SourceKind::Ess(d)] {
            let Some(spec) = reachable(ctx, kind) else { continue };
            let name = family(&spec);
            let x = d as f64;
            out.point(P, &format!("{name}/rate-loss"), x, matcher_rate_loss(&spec)?);
            out.point(P, &format!("{name}/rate"), x, Matcher::new(&spec)?.rate());
            let m = induced_moments(&spec, s.mapping, MOMENT_BLOCKS, ctx.cfg.seeds[0])?;
            out.point(P, &format!("{name}/mu4"), x, m.mu4);
            out.point(P, &format!("{name}/mu6"), x, m.mu6);
        }
    }
    Ok(out)
}

pub fn edi_vs_length(ctx: &RunContext) -> Result<Results> {
    const P: &str = "edi-vs-length";
    let cfg = &ctx.cfg;
    let w = window_sizes(&cfg.link).0.max(1);
    let n = cfg.shaping.psd_samples;
    let mut out = Results::default();
    let iid = mb_for_rate(cfg.shaping.n_levels, cfg.shaping.rate)?;
    let runs = over_seeds(ctx, |seed| {
        let e = frame_energies(Source::Iid { constellation: iid.clone() }, n, seed)?;
        Ok((edi(&e, w, 1.0)?, windowed_moments(&e, w)?))
    })?;
    out.per_seed(P, "iid-mb/edi", 0.0, &runs.iter().map(|(s, v)| (*s, v.0)).collect::<Vec<_>>());
    out.per_seed(P, "iid-mb/mu4w", 0.0, &runs.iter().map(|(s, v)| (*s, v.1.mu4)).collect::<Vec<_>>());
    for &d in &cfg.shaping.block_lengths {
        let Some(spec) = reachable(ctx, SourceKind::Ccdm(d)) else { continue };
        let x = d as f64;
        let runs = over_seeds(ctx, |seed| {
            let e = frame_energies(shaped(&spec), n, seed)?;
            Ok((edi(&e, w, 1.0)?, windowed_moments(&e, w)?))
        })?;
        out.per_seed(P, "ccdm/edi", x, &runs.iter().map(|(s, v)| (*s, v.0)).collect::<Vec<_>>());
        out.per_seed(P, "ccdm/mu4w", x, &runs.iter().map(|(s, v)| (*s, v.1.mu4)).collect::<Vec<_>>());
        out.per_seed(P, "ccdm/mu6w", x, &runs.iter().map(|(s, v)| (*s, v.1.mu6)).collect::<Vec<_>>());
        if d <= w + 1 {
            let mu4 = induced_moments(&spec, Mapping::Dim1, MOMENT_BLOCKS, 0)?.mu4;
            let psi = shaping_core::perturbation::ccdm_edi_closed_form(d, w, mu4, 1.0)?;
            out.point(P, "ccdm/edi-closed-form", x, psi);
        }
    }
    Ok(out)
}

/// Link lengths of the filter-response preset, in km.
pub const FILTER_LENGTHS_KM: [f64; 3] = [80.0, 320.0, 1600.0];
const RESPONSE_POINTS: usize = 513;

pub fn filter_response(ctx: &RunContext) -> Result<Results> {
    const P: &str = "filter-response";
    let cfg = &ctx.cfg;
    let curves = FILTER_LENGTHS_KM
        .par_iter()
        .map(|&km| {
            let link = LinkConfig {
                n_spans: (km / cfg.link.span_length_km).round().max(1.0) as usize,
                n_channels: 1,
                ..cfg.link.clone()
            };
            let taps = filter_taps(&link, cfg.pulse, 0, cfg.quadrature)?;
            Ok((km, response(taps.first_lag, &taps.same, RESPONSE_POINTS)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Results::default();
    for (km, r) in curves {
        let series = format!("{km}km");
        let h0 = r.magnitude[0];
        for (f, m) in r.freq.iter().zip(&r.magnitude) {
            out.point(P, &series, *f, 2.0 * db(m / h0));
        }
        out.point(P, "bandwidth-3db", km, r.bandwidth_3db);
    }
    Ok(out)
}

fn push_psd(out: &mut Results, preset: &str, series: &str, seed: u64, e: &[f64]) -> Result<Vec<f64>> {
    let psd = psd_estimate(e, PSD_SEGMENT)?;
    for i in 0..psd.freq.len() {
        let (y, se) = (psd.density[i], psd.std_err[i]);
        out.seeded_ci(preset, series, seed, psd.freq[i], y, (y - 1.96 * se, y + 1.96 * se));
    }
    Ok(psd.freq)
}

pub fn psd_ccdm(ctx: &RunContext) -> Result<Results> {
    const P: &str = "psd-ccdm";
    let cfg = &ctx.cfg;
    let mut out = Results::default();
    for &d in &cfg.shaping.psd_block_lengths {
        let spec = ccdm_at_most(cfg.shaping.n_levels, d, cfg.shaping.rate)?;
        let series = format!("ccdm-{d}");
        let runs = over_seeds(ctx, |seed| frame_energies(shaped(&spec), cfg.shaping.psd_samples, seed))?;
        let mut freq = Vec::new();
        for (seed, e) in &runs {
            freq = push_psd(&mut out, P, &format!("{series}/empirical"), *seed, e)?;
        }
        let mu4 = induced_moments(&spec, Mapping::Dim1, MOMENT_BLOCKS, 0)?.mu4;
        let model = EnergySource::Ccdm { mu4, block_len: d };
        let r = model.autocorrelation(model.support());
        for (f, y) in freq.iter().zip(expected_welch_psd(&r, PSD_SEGMENT, &freq)) {
            out.point(P, &format!("{series}/expected-welch"), *f, y);
        }
        for (f, y) in freq.iter().zip(model.psd(&freq)) {
            out.point(P, &format!("{series}/closed-form"), *f, y);
        }
    }
    Ok(out)
}

pub fn psd_ess(ctx: &RunContext) -> Result<Results> {
    const P: &str = "psd-ess";
    let cfg = &ctx.cfg;
    let mut out = Results::default();
    for &d in &cfg.shaping.psd_block_lengths {
        let Some(spec) = reachable(ctx, SourceKind::Ess(d)) else { continue };
        let series = format!("ess-{d}");
        let runs = over_seeds(ctx, |seed| frame_energies(shaped(&spec), cfg.shaping.psd_samples, seed))?;
        let mut dc = Vec::new();
        for (seed, e) in &runs {
            push_psd(&mut out, P, &format!("{series}/empirical"), *seed, e)?;
            // blocks are independent, so S(0) = Var(block energy) / D
            let en = normalized_energies(e);
            let sums: Vec<f64> = en.chunks_exact(d).map(|c| c.iter().sum()).collect();
            dc.push((*seed, variance(&sums) / d as f64));
        }
        out.per_seed(P, "ess/dc", d as f64, &dc);
    }
    Ok(out)
}

/// Memory range of the complexity preset.
pub const COMPLEXITY_MAX_MEMORY: usize = 500;

pub fn complexity(ctx: &RunContext) -> Result<Results> {
    const P: &str = "complexity";
    let mut out = Results::default();
    for w in 1..=COMPLEXITY_MAX_MEMORY {
        let x = w as f64;
        let base = complexity_report(w, 1);
        out.point(P, "n-full", x, base.n_full as f64);
        out.point(P, "n-selected", x, base.n_selected as f64);
        out.point(P, "n-quantized", x, base.n_quantized as f64);
        for &nt in &ctx.cfg.selection.candidates {
            let r = complexity_report(w, nt);
            out.point(P, &format!("cost-full/nt={nt}"), x, r.cost_full as f64);
            out.point(P, &format!("cost-selected/nt={nt}"), x, r.cost_selected as f64);
            out.point(P, &format!("cost-quantized/nt={nt}"), x, r.cost_quantized as f64);
        }
    }
    Ok(out)
}
