use num_complex::Complex64;
use shaping_core::constellation::mb_qam;
use shaping_core::fiber::*;
use shaping_core::numeric::{db, dbm_to_watt};
use shaping_core::pas::{assemble_frame, FrameConfig, Source, SymbolFrame};

fn iid_frames(link: &LinkConfig, n: usize, lambda: f64, seed: u64) -> Vec<SymbolFrame> {
    let c = mb_qam(256, lambda).unwrap();
    (0..link.n_channels)
        .map(|ch| {
            assemble_frame(
                &FrameConfig {
                    source: Source::Iid {
                        constellation: c.clone(),
                    },
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

fn energy(f: &Field) -> f64 {
    f.pols.iter().flatten().map(|v| v.norm_sqr()).sum()
}

#[test]
fn table1_window_related_constants() {
    let l = LinkConfig::table1();
    assert!((l.beta2() * 1e27 - (-21.6826)).abs() < 1e-3, "beta2 {}", l.beta2());
    assert!((l.effective_length() - 21_169.0).abs() < 1.0);
    l.validate().unwrap();
}

#[test]
fn back_to_back_linear_channel_is_transparent() {
    for dual in [false, true] {
        let link = LinkConfig {
            dual_pol: dual,
            gamma_per_w_km: 0.0,
            ase: false,
            n_spans: 2,
            ..LinkConfig::scaled()
        };
        let frames = iid_frames(&link, 1024, 0.02, 1);
        let rx = run_link(&link, &frames, 0, Cpr::None).unwrap();
        let snr = measure_effective_snr(&frames[link.center_channel()], &rx).unwrap();
        assert!(snr.db > 120.0, "snr {snr:?}");
    }
}

#[test]
fn zero_dispersion_span_is_pure_self_phase_modulation() {
    let link = LinkConfig {
        dispersion_ps_nm_km: 0.0,
        n_spans: 1,
        n_channels: 1,
        ase: false,
        launch_power_dbm: 3.0,
        ..LinkConfig::scaled()
    };
    let frames = iid_frames(&link, 512, 0.02, 2);
    let tx = transmit(&link, &frames).unwrap();
    let mut rx = tx.clone();
    propagate(&link, &mut rx, SimOptions::default()).unwrap();
    let gl = link.gamma() * link.effective_length();
    let mut worst: f64 = 0.0;
    for (a, b) in tx.pols[0].iter().zip(&rx.pols[0]) {
        let expect = a * Complex64::from_polar(1.0, gl * a.norm_sqr());
        worst = worst.max((expect - b).norm() / a.norm().max(1e-9));
    }
    assert!(worst < 1e-9, "max relative deviation {worst}");
}

#[test]
fn lossless_propagation_conserves_energy() {
    for dual in [false, true] {
        let link = LinkConfig {
            alpha_db_per_km: 0.0,
            ase: false,
            n_spans: 1,
            dual_pol: dual,
            launch_power_dbm: 6.0,
            ..LinkConfig::scaled()
        };
        let frames = iid_frames(&link, 1024, 0.02, 3);
        let tx = transmit(&link, &frames).unwrap();
        let mut rx = tx.clone();
        propagate(&link, &mut rx, SimOptions::default()).unwrap();
        let rel = (energy(&rx) - energy(&tx)).abs() / energy(&tx);
        assert!(rel < 1e-9, "relative energy change {rel}");
    }
}

#[test]
fn launch_power_matches_configuration() {
    let link = LinkConfig {
        n_channels: 1,
        launch_power_dbm: 1.0,
        ..LinkConfig::scaled()
    };
    let frames = iid_frames(&link, 4096, 0.02, 4);
    let tx = transmit(&link, &frames).unwrap();
    let p = energy(&tx) / tx.pols[0].len() as f64;
    assert!((db(p / link.launch_power())).abs() < 0.1);
}

#[test]
fn low_power_snr_follows_amplifier_noise() {
    let link = LinkConfig {
        launch_power_dbm: -20.0,
        n_spans: 2,
        n_channels: 1,
        ..LinkConfig::scaled()
    };
    let frames = iid_frames(&link, 8192, 0.02, 5);
    let rx = run_link(&link, &frames, 9, Cpr::Mpr).unwrap();
    let snr = measure_effective_snr(&frames[0], &rx).unwrap();
    let expect = db(link.launch_power() / link.ase_power());
    assert!(
        snr.ci_lo - 0.05 <= expect && expect <= snr.ci_hi + 0.05,
        "measured {snr:?}, expected {expect}"
    );
}

#[test]
fn split_step_refinement_converges() {
    let base = LinkConfig {
        ase: false,
        n_spans: 2,
        launch_power_dbm: 0.0,
        ..LinkConfig::scaled()
    };
    let frames = iid_frames(&base, 2048, 0.02, 6);
    let snr = |phi: f64| {
        let l = LinkConfig {
            max_step_phase_rad: phi,
            ..base.clone()
        };
        let rx = run_link(&l, &frames, 0, Cpr::Mpr).unwrap();
        measure_effective_snr(&frames[l.center_channel()], &rx).unwrap().db
    };
    let (coarse, fine, finest) = (snr(4e-3), snr(1e-3), snr(2.5e-4));
    assert!((fine - finest).abs() < 0.02, "{coarse} {fine} {finest}");
    assert!((fine - finest).abs() <= (coarse - finest).abs() + 1e-3);
}

#[test]
fn gn_fit_recovers_synthetic_model() {
    let (p_ase, eta) = (1.3e-6, 7000.0);
    let powers: Vec<f64> = (-8..=2).map(|d| dbm_to_watt(d as f64)).collect();
    let snr: Vec<f64> = powers.iter().map(|&p| gn_snr(p, p_ase, eta)).collect();
    let fit = fit_gn(&powers, &snr).unwrap();
    assert!((fit.p_ase / p_ase - 1.0).abs() < 1e-9);
    assert!((fit.eta / eta - 1.0).abs() < 1e-9);
    // closed-form optimum agrees with a dense search
    let best = (0..20000)
        .map(|i| dbm_to_watt(-10.0 + i as f64 * 1e-3))
        .map(|p| (p, fit.snr(p)))
        .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    assert!((db(best.0 / fit.p_opt())).abs() < 2e-3);
    assert!((db(best.1 / fit.snr_opt())).abs() < 1e-6);
    assert!(fit_gn(&powers, &powers.iter().map(|p| 1e6 * p * p).collect::<Vec<_>>()).is_err());
}

#[test]
fn nonlinear_gain_three_ways_agree() {
    let powers: Vec<f64> = (-8..=2).map(|d| dbm_to_watt(d as f64)).collect();
    let a: Vec<f64> = powers.iter().map(|&p| gn_snr(p, 1.3e-6, 7000.0)).collect();
    let b: Vec<f64> = powers.iter().map(|&p| gn_snr(p, 1.3e-6, 5200.0)).collect();
    let (ra, rb) = fit_gn_shared_ase(&powers, &a, &powers, &b).unwrap();
    let (g1, g2, g3) = nonlinear_gain_db(&ra, &rb);
    assert!((g1 - g2).abs() < 1e-9 && (g1 - g3).abs() < 1e-9, "{g1} {g2} {g3}");
    assert!((g1 - db((7000.0f64 / 5200.0).cbrt())).abs() < 1e-9);
}

#[test]
fn effective_snr_caps_identical_frames() {
    let link = LinkConfig::scaled();
    let f = &iid_frames(&link, 256, 0.02, 1)[0];
    let s = measure_effective_snr(f, f).unwrap();
    assert!(s.capped && s.db.is_finite());
}

#[test]
fn power_sweep_is_unimodal_with_interior_optimum() {
    let link = LinkConfig {
        n_spans: 2,
        n_channels: 1,
        ..LinkConfig::scaled()
    };
    let frames = iid_frames(&link, 4096, 0.02, 8);
    let powers = [-8.0, -4.0, 0.0, 4.0, 8.0];
    let sweep = power_sweep(&link, &frames, &powers, 3, Cpr::Mpr).unwrap();
    let fit = sweep.fit.unwrap();
    let popt = 10.0 * (fit.p_opt() / 1e-3).log10();
    assert!(popt > powers[0] && popt < powers[4], "P_opt {popt} dBm");
    let v: Vec<f64> = sweep.snr.iter().map(|s| s.db).collect();
    let peak = v.iter().cloned().enumerate().fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a }).0;
    assert!(v[..peak].windows(2).all(|w| w[1] > w[0]) && v[peak..].windows(2).all(|w| w[1] < w[0]), "{v:?}");
}
