//! Presets built on fibre simulations of the configured link.

use super::over_seeds;
use crate::measure::{build_source, channel_frames, probe, shaper_spec, RunContext, SourceKind};
use crate::output::Results;
use anyhow::Result;
use shaping_core::constellation::{air_bmd, estimate_noise_var};
use shaping_core::fiber::{fit_gn_shared_ase, nonlinear_gain_db, power_sweep, run_link};
use shaping_core::matchers::{rate_loss, Matcher};
use shaping_core::numeric::{dbm_to_watt, from_db};
use shaping_core::pas::{induced_constellation, Source};

/// Sources of the length sweeps: CCDM and ESS at every reachable block
/// length, then the i.i.d. references.
fn sweep_sources(ctx: &RunContext, with_ess: bool) -> Vec<SourceKind> {
    let mut v = Vec::new();
    for &d in &ctx.cfg.shaping.block_lengths {
        v.push(SourceKind::Ccdm(d));
        if with_ess {
            v.push(SourceKind::Ess(d));
        }
    }
    v.push(SourceKind::Iid);
    v.push(SourceKind::Uniform);
    v.into_iter()
        .filter(|&k| match shaper_spec(&ctx.cfg, k) {
            Ok(_) => true,
            Err(e) => {
                eprintln!("skipping {}: {e}", k.label());
                false
            }
        })
        .collect()
}

pub fn snr_vs_length(ctx: &RunContext) -> Result<Results> {
    const P: &str = "snr-vs-length";
    let cfg = &ctx.cfg;
    let mut out = Results::default();
    for kind in sweep_sources(ctx, true) {
        let source = build_source(cfg, kind)?;
        let runs = over_seeds(ctx, |seed| {
            let frames = channel_frames(cfg, &cfg.link, &source, seed)?;
            probe(cfg, &cfg.link, &frames, seed)
        })?;
        let fam = kind.family();
        out.per_seed(P, &format!("{fam}/snr-opt"), kind.x(), &runs.iter().map(|(s, p)| (*s, p.snr_opt_db)).collect::<Vec<_>>());
        out.per_seed(P, &format!("{fam}/p-opt"), kind.x(), &runs.iter().map(|(s, p)| (*s, p.p_opt_dbm)).collect::<Vec<_>>());
    }
    Ok(out)
}

/// Rate penalty of finite-length matching in bits per two-dimensional symbol.
fn matcher_penalty(source: &Source) -> Result<f64> {
    Ok(match source {
        Source::Shaped { spec, .. } => 2.0 * rate_loss(spec)?,
        Source::Iid { .. } => 0.0,
    })
}

pub fn air_vs_length(ctx: &RunContext) -> Result<Results> {
    const P: &str = "air-vs-length";
    let cfg = &ctx.cfg;
    let mut out = Results::default();
    for kind in sweep_sources(ctx, true) {
        let source = build_source(cfg, kind)?;
        let constellation = match &source {
            Source::Shaped { spec, .. } => induced_constellation(&Matcher::new(spec)?, spec)?,
            Source::Iid { constellation } => constellation.clone(),
        };
        let penalty = matcher_penalty(&source)?;
        let runs = over_seeds(ctx, |seed| {
            let frames = channel_frames(cfg, &cfg.link, &source, seed)?;
            let pr = probe(cfg, &cfg.link, &frames, seed)?;
            let mut link = cfg.link.clone();
            link.ase = true;
            link.launch_power_dbm = pr.p_opt_dbm;
            let rx = run_link(&link, &frames, seed, cfg.cpr)?;
            let tx = &frames[link.center_channel()];
            let idx = tx.data_indices();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for p in 0..tx.n_pols() {
                a.extend(idx.iter().map(|&k| tx.pols[p][k]));
                b.extend(idx.iter().map(|&k| rx.pols[p][k]));
            }
            let air = air_bmd(&a, &b, &constellation, estimate_noise_var(&a, &b))?;
            let data_fraction = idx.len() as f64 / tx.len() as f64;
            Ok((air.bits - penalty) * data_fraction)
        })?;
        out.per_seed(P, &format!("{}/air", kind.family()), kind.x(), &runs);
    }
    Ok(out)
}

pub fn nonlinear_gain(ctx: &RunContext) -> Result<Results> {
    const P: &str = "nonlinear-gain";
    let cfg = &ctx.cfg;
    let mut link = cfg.link.clone();
    link.ase = true;
    let watts: Vec<f64> = cfg.powers_dbm.iter().map(|&p| dbm_to_watt(p)).collect();
    let sweep = |kind: SourceKind, seed: u64| -> Result<Vec<f64>> {
        let source = build_source(cfg, kind)?;
        let frames = channel_frames(cfg, &link, &source, seed)?;
        let s = power_sweep(&link, &frames, &cfg.powers_dbm, seed, cfg.cpr)?;
        Ok(s.snr.iter().map(|e| e.db).collect())
    };
    let mut out = Results::default();
    let reference = over_seeds(ctx, |seed| sweep(SourceKind::Iid, seed))?;
    let push_sweep = |out: &mut Results, name: &str, runs: &[(u64, Vec<f64>)]| {
        for (i, &p) in cfg.powers_dbm.iter().enumerate() {
            out.per_seed(P, &format!("{name}/snr"), p, &runs.iter().map(|(s, v)| (*s, v[i])).collect::<Vec<_>>());
        }
    };
    push_sweep(&mut out, "iid-mb", &reference);
    for kind in sweep_sources(ctx, false).into_iter().filter(|k| matches!(k, SourceKind::Ccdm(_))) {
        let shaped = over_seeds(ctx, |seed| sweep(kind, seed))?;
        push_sweep(&mut out, &kind.label(), &shaped);
        let mut gains = [Vec::new(), Vec::new(), Vec::new()];
        for ((seed, r), (_, s)) in reference.iter().zip(&shaped) {
            let lin = |v: &[f64]| v.iter().map(|&d| from_db(d)).collect::<Vec<_>>();
            let (fr, fs) = fit_gn_shared_ase(&watts, &lin(r), &watts, &lin(s))?;
            let (g_eta, g_snr, g_pow) = nonlinear_gain_db(&fr, &fs);
            gains[0].push((*seed, g_eta));
            gains[1].push((*seed, g_snr));
            gains[2].push((*seed, g_pow));
        }
        for (name, g) in ["gnl-eta", "gnl-snr-opt", "gnl-p-opt"].iter().zip(&gains) {
            out.per_seed(P, &format!("ccdm/{name}"), kind.x(), g);
        }
    }
    Ok(out)
}
