use num_complex::Complex64;
use proptest::prelude::*;
use shaping_core::constellation::{mb_qam, standardized_moments};
use shaping_core::fiber::*;
use shaping_core::matchers::{Matcher, ShaperSpec};
use shaping_core::numeric::{linear_fit, pearson, rng_from_seed, variance};
use shaping_core::pas::{assemble_frame, FrameConfig, Source, SymbolFrame};
use shaping_core::perturbation::*;
use std::f64::consts::PI;

fn single_channel(n_spans: usize) -> LinkConfig {
    LinkConfig { n_spans, n_channels: 1, ase: false, ..LinkConfig::scaled() }
}

fn max_rel(a: &KernelBlock, b: &KernelBlock) -> f64 {
    let scale = b.max_abs();
    a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

fn iid_frames(link: &LinkConfig, n: usize, lambda: f64, seed: u64) -> Vec<SymbolFrame> {
    let c = mb_qam(256, lambda).unwrap();
    (0..link.n_channels)
        .map(|ch| {
            assemble_frame(
                &FrameConfig {
                    source: Source::Iid { constellation: c.clone() },
                    n_pols: link.n_pols(),
                    n_symbols: n,
                    pilot_rate: None,
                },
                seed * 100 + ch as u64,
            )
            .unwrap()
        })
        .collect()
}

/// Amplitude energies a² of concatenated random shaper blocks.
fn amp_energies(spec: &ShaperSpec, n_blocks: usize, seed: u64) -> Vec<f64> {
    let m = Matcher::new(spec).unwrap();
    let mut rng = rng_from_seed(seed);
    (0..n_blocks)
        .flat_map(|_| m.encode_random(&mut rng))
        .map(|i| (spec.levels[i] * spec.levels[i]) as f64)
        .collect()
}

fn mu4_of(e: &[f64]) -> f64 {
    let m = e.iter().sum::<f64>() / e.len() as f64;
    e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64 / (m * m)
}

fn complex_corr(a: &[Complex64], b: &[Complex64]) -> f64 {
    let x: Vec<f64> = a.iter().flat_map(|v| [v.re, v.im]).collect();
    let y: Vec<f64> = b.iter().flat_map(|v| [v.re, v.im]).collect();
    pearson(&x, &y)
}

/// Root-raised-cosine impulse response with unit energy per symbol period.
fn rrc_time(t: f64, rolloff: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - rolloff + 4.0 * rolloff / PI;
    }
    let x = 4.0 * rolloff * t;
    if (x.abs() - 1.0).abs() < 1e-9 {
        let a = PI / (4.0 * rolloff);
        return rolloff / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    ((PI * t * (1.0 - rolloff)).sin() + x * (PI * t * (1.0 + rolloff)).cos()) / (PI * t * (1.0 - x * x))
}

#[test]
fn gaussian_closed_form_matches_numeric_overlap() {
    let q = Quadrature::default();
    let link = single_channel(4);
    let num = compute_block(&link, PulseShape::Gaussian, 0, 10, 10, q).unwrap();
    let cf = gaussian_block(&link, 0, 10, 10, q).unwrap();
    assert!(max_rel(&num, &cf) < 1e-3, "spm {}", max_rel(&num, &cf));
    let wdm = LinkConfig { n_channels: 3, ..link };
    let num = compute_block(&wdm, PulseShape::Gaussian, 1, 5, 40, q).unwrap();
    let cf = gaussian_block(&wdm, 1, 5, 40, q).unwrap();
    assert!(max_rel(&num, &cf) < 1e-3, "xpm {}", max_rel(&num, &cf));
}

#[test]
fn distance_quadrature_is_converged() {
    let link = LinkConfig { n_channels: 3, ..single_channel(4) };
    let coarse = compute_block(&link, PulseShape::Rrc, 1, 8, 60, Quadrature::default()).unwrap();
    let fine = Quadrature { segments_per_span: 16, nodes_per_segment: 12, ..Quadrature::default() };
    let fine = compute_block(&link, PulseShape::Rrc, 1, 8, 60, fine).unwrap();
    assert!(max_rel(&coarse, &fine) < 1e-3);
}

#[test]
fn zero_dispersion_span_reduces_to_memoryless_self_phase_modulation() {
    let link = LinkConfig { dispersion_ps_nm_km: 0.0, ..single_channel(1) };
    let block = compute_block(&link, PulseShape::Rrc, 0, 3, 3, Quadrature::default()).unwrap();
    // independent oracle: direct quadrature of the time-domain RRC pulse
    let dt = 1.0 / 256.0;
    let q4: f64 = (-(400 * 256)..=(400 * 256))
        .map(|i| rrc_time(i as f64 * dt, link.rolloff).powi(4) * dt)
        .sum();
    let expect = link.effective_length() * q4;
    let c00 = block.get(0, 0);
    assert!((c00.re - expect).abs() / expect < 1e-5, "{c00} vs {expect}");
    assert!(c00.im.abs() < 1e-9 * expect);
    for m in -3..=3i64 {
        for n in -3..=3i64 {
            if (m, n) != (0, 0) {
                assert!(block.get(m, n).norm() < 0.2 * c00.norm(), "C[{m},{n}] = {}", block.get(m, n));
            }
        }
    }
}

#[test]
fn intra_channel_coefficients_are_symmetric_and_decay_beyond_memory() {
    let link = single_channel(4);
    let w = memory_symbols(&link);
    assert_eq!(w, 45);
    let span = w + 15;
    let block = compute_block(&link, PulseShape::Rrc, 0, span, span, Quadrature::default()).unwrap();
    let peak = block.max_abs();
    let s = span as i64;
    for m in -s..=s {
        for n in -s..=s {
            let d = (block.get(m, n) - block.get(n, m)).norm();
            assert!(d < 1e-9 * peak);
            if m.abs() + n.abs() > w as i64 {
                assert!(block.get(m, n).norm() < 1e-3 * peak, "C[{m},{n}]");
            }
        }
    }
}

#[test]
fn zero_nonlinearity_gives_zero_perturbation() {
    let link = LinkConfig { gamma_per_w_km: 0.0, ..single_channel(1) };
    let kernel = PerturbationKernel::compute(&link, PulseShape::Gaussian, &[], Quadrature::default()).unwrap();
    let frames = iid_frames(&link, 256, 0.02, 1);
    let model = TripletModel::from_kernel(&kernel, &link, None);
    let dx = model.delta(&frames[0].pols, &[], Boundary::Cyclic).unwrap();
    assert!(dx[0].iter().all(|v| v.norm() == 0.0));
}

#[test]
fn triplet_model_predicts_split_step_residual() {
    let link = LinkConfig { launch_power_dbm: -2.0, ..single_channel(4) };
    let frames = iid_frames(&link, 1 << 13, 0.02, 3);
    let field = simulate(&link, &frames, 0).unwrap();
    let rx = receive(&link, &field, 0).unwrap();
    let kernel = PerturbationKernel::compute(&link, PulseShape::Rrc, &[], Quadrature::default()).unwrap();
    let model = TripletModel::from_kernel(&kernel, &link, None);
    let dx = model.delta(&frames[0].pols, &[], Boundary::Cyclic).unwrap();
    let resid: Vec<Complex64> = rx[0].iter().zip(&frames[0].pols[0]).map(|(y, x)| y - x).collect();
    let rho = complex_corr(&resid, &dx[0]);
    assert!(rho > 0.9, "correlation {rho}");
}

#[test]
fn dual_polarisation_wdm_model_tracks_split_step() {
    let link = LinkConfig { launch_power_dbm: -2.0, dual_pol: true, n_channels: 3, ..single_channel(2) };
    let frames = iid_frames(&link, 1 << 12, 0.02, 4);
    let field = simulate(&link, &frames, 0).unwrap();
    let c = link.center_channel();
    let rx = receive(&link, &field, c).unwrap();
    let inter = PerturbationKernel::link_interferers(&link);
    let kernel = PerturbationKernel::compute(&link, PulseShape::Rrc, &inter, Quadrature::default()).unwrap();
    let model = TripletModel::from_kernel(&kernel, &link, None);
    let others: Vec<&[Vec<Complex64>]> = [0, 2].iter().map(|&i| frames[i].pols.as_slice()).collect();
    let dx = model.delta(&frames[c].pols, &others, Boundary::Cyclic).unwrap();
    for p in 0..2 {
        let resid: Vec<Complex64> = rx[p].iter().zip(&frames[c].pols[p]).map(|(y, x)| y - x).collect();
        let rho = complex_corr(&resid, &dx[p]);
        assert!(rho > 0.95, "pol {p}: correlation {rho}");
    }
}

#[test]
fn decomposition_reassembles_the_perturbation() {
    let link = LinkConfig { dual_pol: true, n_channels: 3, ..single_channel(1) };
    let inter = PerturbationKernel::link_interferers(&link);
    let kernel = PerturbationKernel::compute(&link, PulseShape::Gaussian, &inter, Quadrature::default()).unwrap();
    let model = TripletModel::from_kernel(&kernel, &link, Some((Truncation::Full, 6)));
    let frames = iid_frames(&link, 300, 0.03, 5);
    let others: Vec<&[Vec<Complex64>]> = [0, 2].iter().map(|&i| frames[i].pols.as_slice()).collect();
    let full = model.delta(&frames[1].pols, &others, Boundary::Cyclic).unwrap();
    let (d, rest) = model.decompose(&frames[1].pols, &others, Boundary::Cyclic).unwrap();
    let phi = model.mean_phase();
    let j = Complex64::new(0.0, 1.0);
    for p in 0..2 {
        for k in 0..300 {
            let x = frames[1].pols[p][k];
            let rebuilt = j * (phi + d[p][k]) * x + rest[p][k];
            assert!((rebuilt - full[p][k]).norm() < 1e-12 * (1.0 + full[p][k].norm()));
        }
    }
}

#[test]
fn truncation_rules_have_the_expected_sizes() {
    let link = single_channel(4);
    let w = memory_symbols(&link);
    let block = compute_block(&link, PulseShape::Gaussian, 0, w, w, Quadrature::default()).unwrap();
    let full = block.truncate(Truncation::Full, w);
    let sel = block.truncate(Truncation::Selected, w);
    let quant = block.truncate(Truncation::Quantized, w);
    assert_eq!(full.len(), (w + 1).pow(2) + w * w);
    let n_c2 = 4 * (1..=w).map(|k| (w - 1) / k).sum::<usize>() + 4 * w + 1;
    assert_eq!(sel.len(), n_c2);
    let mut mags: Vec<f64> = quant.iter().map(|t| t.2.norm()).collect();
    mags.sort_by(f64::total_cmp);
    mags.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    assert!(mags.len() <= quantized_level_count(w));
    // phases are preserved
    for (a, b) in quant.iter().zip(&sel) {
        if b.2.norm() > 0.0 {
            assert!((a.2.arg() - b.2.arg()).abs() < 1e-9);
        }
    }
}

#[test]
fn selected_truncation_keeps_nlin_variance() {
    let link = LinkConfig { launch_power_dbm: 0.0, ..single_channel(4) };
    let w = memory_symbols(&link);
    let kernel = PerturbationKernel::compute(&link, PulseShape::Rrc, &[], Quadrature::default()).unwrap();
    let frames = iid_frames(&link, 1 << 12, 0.02, 6);
    let power = |rule| {
        let model = TripletModel::from_kernel(&kernel, &link, Some((rule, w)));
        let r = model.am_residual(&frames[0].pols, &[], Boundary::Cyclic).unwrap();
        r[0].iter().map(|v| v.norm_sqr()).sum::<f64>()
    };
    let full = power(Truncation::Full);
    let sel = power(Truncation::Selected);
    assert!((sel / full - 1.0).abs() < 0.05, "selected/full = {}", sel / full);
}

#[test]
fn kmeans_recovers_separated_clusters() {
    let v = [1.0, 1.1, 0.9, 5.0, 5.2, 4.8, 10.0];
    let (c, a) = kmeans_1d(&v, 3);
    assert_eq!(a[0], a[1]);
    assert_eq!(a[3], a[4]);
    assert_ne!(a[0], a[3]);
    assert_ne!(a[3], a[6]);
    assert!((c[a[0]] - 1.0).abs() < 1e-12);
    assert!((c[a[3]] - 5.0).abs() < 1e-12);
}

#[test]
fn kernel_cache_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let link = single_channel(1);
    let q = Quadrature::default();
    let a = load_or_compute(dir.path(), &link, PulseShape::Gaussian, &[], q).unwrap();
    assert!(cache_path(dir.path(), &link, PulseShape::Gaussian, &[], q).exists());
    let b = load_or_compute(dir.path(), &link, PulseShape::Gaussian, &[], q).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.blocks[0].coeffs, b.blocks[0].coeffs);
    let mut buf = Vec::new();
    write_kernel(&a, &mut buf).unwrap();
    buf[0] = b'X';
    assert!(read_kernel(buf.as_slice()).is_err());
}

#[test]
fn phase_noise_trivial_inputs() {
    let taps = FilterTaps { channel: 0, first_lag: -2, same: vec![0.1, 0.4, 1.0, 0.4, 0.1], cross: vec![0.0; 5] };
    let flat = vec![vec![vec![1.0; 64]]];
    let d = phase_noise(&[taps.clone()], 0.7, &flat, Boundary::Cyclic).unwrap();
    assert!(d[0].iter().all(|&v| v == 0.0));
    let mut imp = vec![1.0; 64];
    imp[0] = 2.0;
    let d = phase_noise(&[taps.clone()], 0.7, &[vec![imp]], Boundary::Cyclic).unwrap();
    for (lag, h) in taps.lags().zip(&taps.same) {
        let k = lag.rem_euclid(64) as usize;
        assert!((d[0][k] - 0.7 * h).abs() < 1e-15);
    }
    assert!(phase_noise(&[taps], 1.0, &[vec![vec![1.0; 3]], vec![vec![1.0; 3]]], Boundary::Cyclic).is_err());
}

proptest! {
    #[test]
    fn phase_noise_is_linear_in_energy_deviation(
        a in proptest::collection::vec(0.0f64..3.0, 40),
        b in proptest::collection::vec(0.0f64..3.0, 40),
        s in -2.0f64..2.0,
    ) {
        let taps = FilterTaps { channel: 0, first_lag: -3, same: vec![0.2, -0.1, 0.5, 1.0, 0.5, 0.3, 0.05], cross: vec![0.0; 7] };
        let run = |e: Vec<f64>| phase_noise(&[taps.clone()], 1.3, &[vec![e]], Boundary::Cyclic).unwrap()[0].clone();
        let da = run(a.clone());
        let db = run(b.clone());
        let comb: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 1.0 + (x - 1.0) + s * (y - 1.0)).collect();
        let dc = run(comb);
        for k in 0..40 {
            prop_assert!((dc[k] - da[k] - s * db[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn cpr_filter_has_exact_dc_null() {
    for n in 0..200 {
        let u = cpr_filter(n);
        let s: f64 = u.iter().sum();
        assert!(s.abs() < 1e-12, "N = {n}: {s}");
    }
    let d: Vec<f64> = (0..100).map(|k| (k as f64 * 0.3).sin() + 2.0).collect();
    assert!(residual_after_cpr(&d, 0).iter().all(|v| v.abs() < 1e-12));
    let constant = residual_after_cpr(&[4.2; 50], 7);
    assert!(constant.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn shorter_cpr_window_leaves_less_residual_phase_noise() {
    let link = LinkConfig { n_channels: 1, ..LinkConfig::table1() };
    let taps = filter_taps(&link, PulseShape::Rrc, 0, Quadrature::default()).unwrap();
    let spec = ShaperSpec::ccdm_for_rate(8, 108, 2.4).unwrap();
    let e = amp_energies(&spec, 1 << 11, 8);
    let e = normalized_energies(&e);
    let d = phase_noise(&[taps], 1.0, &[vec![e]], Boundary::Cyclic).unwrap().remove(0);
    let v50 = variance(&residual_after_cpr(&d, 50));
    let v100 = variance(&residual_after_cpr(&d, 100));
    assert!(v50 < v100, "{v50} vs {v100}");
}

#[test]
fn filter_response_of_single_tap_is_flat() {
    let r = filter_response(0, &[2.5], 101);
    assert!(r.magnitude.iter().all(|&m| (m - 2.5).abs() < 1e-12));
    assert_eq!(r.bandwidth_3db, 0.5);
}

#[test]
fn filter_bandwidth_shrinks_with_length_and_symbol_rate() {
    let q = Quadrature::default();
    let bw = |km: f64, rs: f64| {
        let link = LinkConfig {
            n_spans: (km / 80.0) as usize,
            symbol_rate_gbd: rs,
            n_channels: 1,
            ..LinkConfig::table1()
        };
        let t = filter_taps(&link, PulseShape::Rrc, 0, q).unwrap();
        filter_response(t.first_lag, &t.same, 4001).bandwidth_3db * rs * 1e9
    };
    let by_len: Vec<f64> = [80.0, 320.0, 1600.0].iter().map(|&l| bw(l, 32.0)).collect();
    let by_rate: Vec<f64> = [16.0, 32.0, 64.0].iter().map(|&r| bw(1600.0, r)).collect();
    assert!(by_len.windows(2).all(|w| w[1] < w[0]), "{by_len:?}");
    assert!(by_rate.windows(2).all(|w| w[1] < w[0]), "{by_rate:?}");
    let lx: Vec<f64> = [80f64, 320.0, 1600.0].iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = by_len.iter().map(|v| v.ln()).collect();
    assert!(linear_fit(&lx, &ly).2 > 0.98);
    let rx: Vec<f64> = [16f64, 32.0, 64.0].iter().map(|v| v.ln()).collect();
    let ry: Vec<f64> = by_rate.iter().map(|v| v.ln()).collect();
    assert!(linear_fit(&rx, &ry).2 > 0.98);
}

#[test]
fn parseval_consistency_of_the_filter_model() {
    let link = single_channel(4);
    let taps = filter_taps(&link, PulseShape::Rrc, 0, Quadrature::default()).unwrap();
    let spec = ShaperSpec::ccdm_for_rate(8, 108, 2.4).unwrap();
    let e = normalized_energies(&amp_energies(&spec, 1 << 13, 9));
    let d = phase_noise(&[taps.clone()], 1.0, &[vec![e.clone()]], Boundary::Cyclic).unwrap().remove(0);
    let var_time = variance(&d);
    // frequency domain with the closed-form energy spectrum
    let src = EnergySource::Ccdm { mu4: mu4_of(&e), block_len: 108 };
    let nf = 1 << 14;
    let freq: Vec<f64> = (0..nf).map(|i| (i as f64 + 0.5) / nf as f64 - 0.5).collect();
    let s = src.psd(&freq);
    let h = filter_response_at(&taps, &freq);
    let var_freq: f64 = s.iter().zip(&h).map(|(s, h)| s * h * h).sum::<f64>() / nf as f64;
    assert!((var_time / var_freq - 1.0).abs() < 0.01, "{var_time} vs {var_freq}");
}

fn filter_response_at(t: &FilterTaps, freq: &[f64]) -> Vec<f64> {
    freq.iter()
        .map(|&f| {
            t.lags()
                .zip(&t.same)
                .map(|(l, &h)| Complex64::from_polar(h, -2.0 * PI * f * l as f64))
                .sum::<Complex64>()
                .norm()
        })
        .collect()
}

#[test]
fn windowed_moment_identities_and_trivial_cases() {
    let c = mb_qam(64, 0.03).unwrap();
    let mut rng = rng_from_seed(10);
    let e: Vec<f64> = c.sample(1 << 18, &mut rng).iter().map(|x| x.norm_sqr()).collect();
    let (mu4, _) = standardized_moments(&c);
    for w in [1, 10, 111] {
        let r = windowed_moments(&e, w).unwrap();
        assert!((r.mu4 - r.m2 - 1.0).abs() < 1e-12);
        assert!((r.mu6 - r.m3 - 3.0 * r.m2 - 1.0).abs() < 1e-12);
        assert!((r.mu4 - mu4).abs() < 0.1 * (mu4 - 1.0), "w={w}: {} vs {mu4}", r.mu4);
    }
    let flat = windowed_moments(&[2.0; 500], 17).unwrap();
    assert_eq!((flat.m2, flat.m3, flat.mu4, flat.mu6), (0.0, 0.0, 1.0, 1.0));
    assert!(windowed_moments(&[1.0; 5], 6).is_err());
    assert!(windowed_moments(&[1.0; 5], 0).is_err());
}

#[test]
fn finite_ccdm_blocks_lower_the_windowed_kurtosis() {
    let link = LinkConfig::table1();
    let (w_spm, _) = window_sizes(&link);
    let spec = ShaperSpec::ccdm_for_rate(8, 180, 2.4).unwrap();
    let e = amp_energies(&spec, 1 << 9, 11);
    let r = windowed_moments(&e, w_spm).unwrap();
    assert!(r.mu4 < mu4_of(&e));
}

#[test]
fn edi_matches_closed_forms() {
    assert_eq!(edi(&[3.0; 400], 20, 5.0).unwrap(), 0.0);
    let c = mb_qam(64, 0.03).unwrap();
    let mut rng = rng_from_seed(12);
    let e: Vec<f64> = c.sample(1 << 16, &mut rng).iter().map(|x| x.norm_sqr()).collect();
    let (mu4, _) = standardized_moments(&c);
    let psi = edi(&e, 111, 42.0).unwrap();
    assert!((psi / (42.0 * (mu4 - 1.0)) - 1.0).abs() < 0.05);
    for d in [16usize, 64] {
        let spec = ShaperSpec::ccdm_for_rate(4, d, 1.0).unwrap();
        let e = amp_energies(&spec, (1 << 17) / d, 13);
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let emp = edi(&e, 111, mean).unwrap();
        let cf = ccdm_edi_closed_form(d, 111, mu4_of(&e), mean).unwrap();
        assert!((emp / cf - 1.0).abs() < 0.03, "D={d}: {emp} vs {cf}");
    }
    assert!(ccdm_edi_closed_form(200, 111, 2.0, 1.0).is_err());
}

#[test]
fn window_sizes_for_the_reference_link() {
    assert_eq!(window_sizes(&LinkConfig::table1()), (111, 460));
    let short = LinkConfig { span_length_km: 1e-6, n_spans: 1, ..LinkConfig::table1() };
    assert_eq!(window_sizes(&short), (0, 0));
}

#[test]
fn energy_autocorrelation_closed_forms() {
    let iid = EnergySource::Iid { mu4: 2.3 };
    let r = iid.autocorrelation(3);
    assert!((r[0] - 1.3).abs() < 1e-12 && r[1..].iter().all(|&v| v == 0.0));
    for d in [4usize, 20, 108, 300] {
        let src = EnergySource::Ccdm { mu4: 2.5, block_len: d };
        let r = src.autocorrelation(d + 5);
        assert!(r[d..].iter().all(|&v| v == 0.0));
        let total = r[0] + 2.0 * r[1..].iter().sum::<f64>();
        assert!(total.abs() < 1e-12);
        assert!(src.psd(&[0.0])[0].abs() < 1e-10 * 1.5);
    }
}

#[test]
fn iid_energy_psd_is_flat() {
    let c = mb_qam(64, 0.03).unwrap();
    let (mu4, _) = standardized_moments(&c);
    let mut rng = rng_from_seed(14);
    let e: Vec<f64> = c.sample(1 << 18, &mut rng).iter().map(|x| x.norm_sqr()).collect();
    let psd = psd_estimate(&e, PSD_SEGMENT).unwrap();
    let mean: f64 = psd.density.iter().sum::<f64>() / psd.density.len() as f64;
    assert!((mean / (mu4 - 1.0) - 1.0).abs() < 0.02);
    let outside = psd
        .density
        .iter()
        .zip(&psd.std_err)
        .filter(|(d, s)| (**d - (mu4 - 1.0)).abs() > 1.96 * **s)
        .count();
    assert!((outside as f64) < 0.1 * psd.density.len() as f64, "{outside}");
    assert!(psd_estimate(&e[..100], PSD_SEGMENT).is_err());
}

#[test]
fn ccdm_psd_matches_closed_form() {
    let spec = ShaperSpec::ccdm_for_rate(8, 108, 2.4).unwrap();
    let e = amp_energies(&spec, (1 << 18) / 108, 15);
    let src = EnergySource::Ccdm { mu4: mu4_of(&e), block_len: 108 };
    let psd = psd_estimate(&e, PSD_SEGMENT).unwrap();
    let expect = expected_welch_psd(&src.autocorrelation(src.support()), PSD_SEGMENT, &psd.freq);
    let outside = (0..psd.freq.len())
        .filter(|&i| (psd.density[i] - expect[i]).abs() > 1.96 * psd.std_err[i])
        .count();
    assert!((outside as f64) < 0.1 * psd.freq.len() as f64, "{outside}");
}

#[test]
fn short_ess_blocks_raise_the_dc_spectrum() {
    let s0 = |d: usize| {
        let spec = ShaperSpec::ess_for_rate(8, d, 2.4).unwrap();
        let e = normalized_energies(&amp_energies(&spec, (1 << 18) / d, 16));
        // blocks are independent, so S(0) = Var(block energy) / D
        let sums: Vec<f64> = e.chunks(d).map(|c| c.iter().sum()).collect();
        variance(&sums) / d as f64
    };
    let v: Vec<f64> = [16usize, 32, 64, 128].iter().map(|&d| s0(d)).collect();
    assert!(v.iter().all(|&x| x > 0.0));
    assert!(v.windows(2).all(|w| w[0] > w[1]), "{v:?}");
}

#[test]
fn amin_model_and_snr_prediction() {
    let m = AminModel { eta1: 1000.0, eta2: 300.0 };
    assert_eq!(m.eta(2.0), 1000.0);
    let fit = AminModel::fit(&[(1.32, m.eta(1.32)), (2.0, m.eta(2.0)), (2.6, m.eta(2.6))]).unwrap();
    assert!((fit.eta1 - 1000.0).abs() < 1e-9 && (fit.eta2 - 300.0).abs() < 1e-9);
    assert!(AminModel::fit(&[(2.0, 1.0), (2.0, 2.0)]).is_err());
    let cal = NlinCalibration { spm: m, xpm: Some(AminModel { eta1: 2000.0, eta2: 100.0 }) };
    let (a, _) = predict_snr(&cal, 1e-6, 1.8, 1.9).unwrap();
    let (b, _) = predict_snr(&cal, 1e-6, 1.8, 1.9).unwrap();
    assert_eq!(a, b);
    let (c, _) = predict_snr(&cal, 1e-6, 1.5, 1.9).unwrap();
    assert!(c > a);
    let split = NlinCalibration::from_runs(&[(1.32, 100.0), (2.0, 150.0)], &[(1.32, 400.0), (2.0, 500.0)]).unwrap();
    assert!((split.eta(1.32, 1.32) - 400.0).abs() < 1e-9);
    assert!((split.eta(2.0, 1.32) - 450.0).abs() < 1e-9);
}

#[test]
fn least_squares_recovers_a_known_filter() {
    let mut rng = rng_from_seed(17);
    let c = mb_qam(64, 0.03).unwrap();
    let e: Vec<f64> = c.sample(1 << 14, &mut rng).iter().map(|x| x.norm_sqr()).collect();
    let en = normalized_energies(&e);
    let truth: Vec<f64> = (-10..=10).map(|n: i32| (-(n as f64 / 4.0).powi(2)).exp() * 1e-2).collect();
    let taps = FilterTaps { channel: 0, first_lag: -10, same: truth.clone(), cross: vec![0.0; 21] };
    let mut phase = phase_noise(&[taps], 1.0, &[vec![en]], Boundary::Cyclic).unwrap().remove(0);
    use rand::Rng;
    for p in phase.iter_mut() {
        *p += 0.01 + 1e-5 * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    let fit = fit_overall_filter(&phase, &e, -10, 21).unwrap();
    let err: f64 = fit.taps.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(err / norm < 1e-2, "relative error {}", err / norm);
    assert!((fit.offset - 0.01).abs() < 1e-4);
    assert!(matches!(
        fit_overall_filter(&phase, &vec![1.0; phase.len()], -10, 21),
        Err(shaping_core::Error::RankDeficient(_))
    ));
}
