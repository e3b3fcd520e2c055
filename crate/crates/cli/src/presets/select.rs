//! Sequence-selection presets.

use super::over_seeds;
use crate::config::SelectionSource;
use crate::measure::{build_source, probe, selected_channel_frames, strategy_for, RunContext, SourceKind};
use crate::output::Results;
use anyhow::Result;
use num_complex::Complex64;
use shaping_core::fiber::LinkConfig;
use shaping_core::numeric::{mean, sub_seed};
use shaping_core::pas::{SymbolFrame, Source};
use shaping_core::perturbation::{window_sizes, Boundary, Truncation, TripletModel};
use shaping_core::selection::{predict_selection_gain, selected_frame, Metric, Scorer, SelectionConfig};

/// Config seed stream of the candidate generators.
const SELECTION_STREAM: u64 = 77;

pub fn metric_label(metric: &Metric) -> String {
    match metric {
        Metric::Edi { .. } => "edi".into(),
        Metric::Lsas => "lsas".into(),
        Metric::Am { truncation: Truncation::Full } => "am".into(),
        Metric::Am { truncation: Truncation::Selected } => "am-s".into(),
        Metric::Am { truncation: Truncation::Quantized } => "am-q".into(),
    }
}

/// An EDI metric without a window takes the link's SPM window.
pub fn resolve_metric(metric: Metric, link: &LinkConfig) -> Metric {
    match metric {
        Metric::Edi { window: 0 } => Metric::Edi { window: window_sizes(link).0.max(1) },
        m => m,
    }
}

pub fn selection_source(ctx: &RunContext) -> Result<Source> {
    match ctx.cfg.selection.source {
        SelectionSource::IidMb => build_source(&ctx.cfg, SourceKind::Iid),
        SelectionSource::Ccdm => build_source(&ctx.cfg, SourceKind::Ccdm(ctx.cfg.selection.block_length)),
    }
}

fn selection_config(ctx: &RunContext, source: &Source, metric: Metric, candidates: usize, seed: u64) -> SelectionConfig {
    SelectionConfig {
        strategy: strategy_for(source, ctx.cfg.selection.nu),
        candidates,
        metric,
        block_symbols: ctx.cfg.selection.block_symbols,
        seed: sub_seed(seed, SELECTION_STREAM),
    }
}

/// Mean |Δx_AM|² per symbol of the centre channel under the full
/// multi-channel model (cyclic boundary).
pub fn nlin_power(model: &TripletModel, frames: &[SymbolFrame], link: &LinkConfig) -> Result<f64> {
    let c = link.center_channel() as i32;
    let coi = &frames[c as usize].pols;
    let others: Vec<&[Vec<Complex64>]> =
        model.channels[1..].iter().map(|ch| frames[(c + ch.channel) as usize].pols.as_slice()).collect();
    let r = model.am_residual(coi, &others, Boundary::Cyclic)?;
    let n = coi[0].len() * coi.len();
    Ok(r.iter().flatten().map(|v| v.norm_sqr()).sum::<f64>() / n as f64)
}

/// Per-seed outcome of one selection setting.
#[derive(Debug, Clone, Copy)]
pub struct SelectionRun {
    pub eta: f64,
    pub snr_opt_db: f64,
    pub nlin_power: f64,
}

/// Select on every channel, then probe the link and evaluate the model NLIN.
pub fn run_selection(
    ctx: &RunContext,
    source: &Source,
    scorer: &Scorer,
    model: &TripletModel,
    metric: Metric,
    candidates: usize,
) -> Result<Vec<(u64, SelectionRun)>> {
    let cfg = &ctx.cfg;
    over_seeds(ctx, |seed| {
        let sel = selection_config(ctx, source, metric, candidates, seed);
        let frames = selected_channel_frames(cfg, &cfg.link, source, &sel, scorer, seed)?;
        let p = probe(cfg, &cfg.link, &frames, seed)?;
        Ok(SelectionRun { eta: p.eta, snr_opt_db: p.snr_opt_db, nlin_power: nlin_power(model, &frames, &cfg.link)? })
    })
}

pub fn selection_gain(ctx: &RunContext) -> Result<Results> {
    const P: &str = "selection-gain";
    let cfg = &ctx.cfg;
    let link = &cfg.link;
    let kernel = ctx.kernel(link, true)?;
    let model = TripletModel::from_kernel(&kernel, link, None);
    let source = selection_source(ctx)?;
    let metrics: Vec<Metric> = cfg.selection.metrics.iter().map(|&m| resolve_metric(m, link)).collect();
    let mut out = Results::default();
    let Some(&first) = metrics.first() else { return Ok(out) };
    let reference = run_selection(ctx, &source, &Scorer::new(&first, link, Some(&kernel))?, &model, first, 1)?;
    let ref_power = mean(&reference.iter().map(|r| r.1.nlin_power).collect::<Vec<_>>());
    for metric in metrics {
        let name = metric_label(&metric);
        let scorer = Scorer::new(&metric, link, Some(&kernel))?;
        for &nt in &cfg.selection.candidates {
            let runs = if nt == 1 { reference.clone() } else { run_selection(ctx, &source, &scorer, &model, metric, nt)? };
            let x = nt as f64;
            out.per_seed(P, &format!("{name}/snr-opt"), x, &runs.iter().map(|(s, r)| (*s, r.snr_opt_db)).collect::<Vec<_>>());
            let gains: Vec<(u64, f64)> = runs
                .iter()
                .zip(&reference)
                .map(|((s, r), (_, q))| (*s, 10.0 / 3.0 * (q.eta / r.eta).log10()))
                .collect();
            out.per_seed(P, &format!("{name}/gain-measured"), x, &gains);
            let p_sel = mean(&runs.iter().map(|r| r.1.nlin_power).collect::<Vec<_>>());
            out.point(P, &format!("{name}/gain-predicted"), x, predict_selection_gain(ref_power, p_sel));
        }
    }
    Ok(out)
}

pub fn psd_selection(ctx: &RunContext) -> Result<Results> {
    const P: &str = "psd-selection";
    let cfg = &ctx.cfg;
    let link = &cfg.link;
    let source = build_source(cfg, SourceKind::Ccdm(cfg.selection.block_length))?;
    let kernel = ctx.kernel(link, false)?;
    let candidates = cfg.selection.candidates.iter().copied().max().unwrap_or(1);
    let n = cfg.shaping.psd_samples;
    let mut out = Results::default();
    let settings = [
        ("unselected".to_string(), Metric::Lsas, 1),
        (format!("edi-{candidates}"), resolve_metric(Metric::Edi { window: 0 }, link), candidates),
        (format!("lsas-{candidates}"), Metric::Lsas, candidates),
    ];
    for (name, metric, nt) in settings {
        let scorer = Scorer::new(&metric, link, Some(&kernel))?;
        let runs = over_seeds(ctx, |seed| {
            let sel = selection_config(ctx, &source, metric, nt, seed);
            let f = selected_frame(&source, link.n_pols(), &sel, &scorer, n, seed)?.frame;
            Ok(f.energies(0))
        })?;
        for (seed, e) in &runs {
            let psd = shaping_core::perturbation::psd_estimate(e, shaping_core::perturbation::PSD_SEGMENT)?;
            for i in 0..psd.freq.len() {
                let (y, se) = (psd.density[i], psd.std_err[i]);
                out.seeded_ci(P, &name, *seed, psd.freq[i], y, (y - 1.96 * se, y + 1.96 * se));
            }
        }
    }
    Ok(out)
}

