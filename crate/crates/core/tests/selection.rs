use num_complex::Complex64;
use proptest::prelude::{prop_assert, proptest};
use shaping_core::constellation::mb_qam;
use shaping_core::fiber::LinkConfig;
use shaping_core::matchers::{Mapping, ShaperSpec};
use shaping_core::numeric::{mean, rng_from_seed};
use shaping_core::pas::Source;
use shaping_core::perturbation::*;
use shaping_core::selection::*;
use std::sync::OnceLock;

const J: Complex64 = Complex64::new(0.0, 1.0);

fn calibration_link() -> LinkConfig {
    LinkConfig { n_channels: 1, dual_pol: true, ase: false, launch_power_dbm: 2.0, ..LinkConfig::scaled() }
}

fn kernel() -> &'static PerturbationKernel {
    static K: OnceLock<PerturbationKernel> = OnceLock::new();
    K.get_or_init(|| {
        PerturbationKernel::compute(&calibration_link(), PulseShape::Rrc, &[], Quadrature::default()).unwrap()
    })
}

fn ccdm_source(d: usize, rate: f64) -> Source {
    Source::Shaped { spec: ShaperSpec::ccdm_for_rate(8, d, rate).unwrap(), mapping: Mapping::Dim1 }
}

fn config(strategy: Strategy, candidates: usize, metric: Metric) -> SelectionConfig {
    SelectionConfig { strategy, candidates, metric, block_symbols: 256, seed: 5 }
}

fn random_symbols(n: usize, pols: usize, seed: u64) -> Vec<Vec<Complex64>> {
    let c = mb_qam(64, 0.03).unwrap();
    let mut rng = rng_from_seed(seed);
    (0..pols).map(|_| c.sample(n, &mut rng)).collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (pos, &i) in idx.iter().enumerate() {
        r[i] = pos as f64;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    shaping_core::numeric::pearson(&ranks(a), &ranks(b))
}

#[test]
fn select_takes_the_lowest_metric_and_first_on_ties() {
    assert_eq!(select(&[3.0]).unwrap(), (0, 3.0));
    assert_eq!(select(&[2.0, 2.0, 2.0]).unwrap().0, 0);
    assert_eq!(select(&[5.0, 1.0, 7.0, 1.0]).unwrap(), (1, 1.0));
    assert!(select(&[]).is_err());
}

proptest! {
    #[test]
    fn selected_metric_is_the_minimum(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
        let (i, m) = select(&v).unwrap();
        prop_assert!(v.iter().all(|&x| m <= x));
        prop_assert!(v[..i].iter().all(|&x| x > m));
    }
}

#[test]
fn gain_prediction_is_a_third_of_the_power_ratio() {
    assert_eq!(predict_selection_gain(3.5, 3.5), 0.0);
    assert!((predict_selection_gain(2.0, 1.0) - 10.0 * 2f64.log10() / 3.0).abs() < 1e-12);
    assert!((predict_selection_gain(2.0, 1.0) - 1.003).abs() < 1e-3);
}

#[test]
fn complexity_formulas() {
    assert_eq!(complexity_report(1, 1).n_full, 5);
    assert_eq!(complexity_report(2, 1).n_selected, 13);
    assert_eq!(complexity_report(111, 1).n_quantized, 22);
    let r = complexity_report(45, 64);
    assert_eq!(r.cost_quantized, 64 * (2 + r.n_quantized));
    for w in 0..=500usize {
        let r = complexity_report(w, 16);
        assert!(r.n_quantized <= r.n_selected && r.n_selected <= r.n_full, "w = {w}");
        assert_eq!(r.cost_full, 16 * (2 + r.n_full));
    }
    // direct enumeration of the coefficient sets
    for w in 1..=12i64 {
        let r = complexity_report(w as usize, 1);
        let pairs = (-w..=w).flat_map(|m| (-w..=w).map(move |n| (m, n)));
        assert_eq!(pairs.clone().filter(|(m, n)| m.abs() + n.abs() <= w).count(), r.n_full);
        assert_eq!(pairs.filter(|(m, n)| (m * n).abs() < w).count(), r.n_selected);
    }
}

#[test]
fn single_candidate_is_the_unselected_frame() {
    let cfg = config(Strategy::Interleaving, 1, Metric::Edi { window: 10 });
    let gen = CandidateGenerator::new(&ccdm_source(32, 2.4), 2, &cfg).unwrap();
    let p = gen.random_payload(&mut rng_from_seed(1));
    let c = gen.candidates(&p).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(gen.deinterleave(&c[0], 0), c[0]);
    let flip = CandidateGenerator::new(&ccdm_source(32, 2.4), 2, &config(Strategy::FlippingBits { nu: 2 }, 1, cfg.metric)).unwrap();
    let p = flip.random_payload(&mut rng_from_seed(1));
    assert_eq!(flip.candidates(&p).unwrap().len(), 1);
    assert_eq!(flip.recover_bits(&flip.candidate(&p, 0).unwrap(), 0).unwrap(), p.shaper_bits);
}

#[test]
fn flipping_bits_give_distinct_decodable_candidates() {
    let cfg = config(Strategy::FlippingBits { nu: 2 }, 16, Metric::Lsas);
    let source = ccdm_source(180, 2.4);
    let gen = CandidateGenerator::new(&source, 2, &cfg).unwrap();
    assert_eq!(gen.shapers_per_block(), 4);
    assert_eq!(gen.block_symbols(), 180);
    let p = gen.random_payload(&mut rng_from_seed(2));
    let cands = gen.candidates(&p).unwrap();
    assert_eq!(cands.len(), 16);
    for (i, a) in cands.iter().enumerate() {
        assert_eq!(gen.recover_bits(a, i).unwrap(), p.shaper_bits);
        for b in &cands[..i] {
            assert_ne!(a, b);
        }
    }
    let again = CandidateGenerator::new(&source, 2, &cfg).unwrap();
    assert_eq!(again.candidates(&p).unwrap(), cands);
    // 2 reserved bits on a single shaper allow at most 4 candidates
    let one = Source::Shaped { spec: ShaperSpec::ccdm_for_rate(8, 32, 2.4).unwrap(), mapping: Mapping::Dim2 };
    let small = SelectionConfig { block_symbols: 16, ..config(Strategy::FlippingBits { nu: 2 }, 5, Metric::Lsas) };
    assert!(CandidateGenerator::new(&one, 1, &small).is_err());
    let small = SelectionConfig { candidates: 4, ..small };
    assert!(CandidateGenerator::new(&one, 1, &small).is_ok());
    let iid = Source::Iid { constellation: mb_qam(64, 0.03).unwrap() };
    assert!(CandidateGenerator::new(&iid, 1, &cfg).is_err());
}

#[test]
fn interleaved_candidates_permute_one_multiset() {
    let cfg = config(Strategy::Interleaving, 8, Metric::Lsas);
    for source in [ccdm_source(64, 2.4), Source::Iid { constellation: mb_qam(64, 0.03).unwrap() }] {
        let gen = CandidateGenerator::new(&source, 2, &cfg).unwrap();
        let p = gen.random_payload(&mut rng_from_seed(3));
        let cands = gen.candidates(&p).unwrap();
        let key = |v: &[Complex64]| {
            let mut s: Vec<(u64, u64)> = v.iter().map(|x| (x.re.to_bits(), x.im.to_bits())).collect();
            s.sort();
            s
        };
        for (i, c) in cands.iter().enumerate() {
            for pol in 0..2 {
                assert_eq!(key(&c[pol]), key(&cands[0][pol]));
            }
            assert_eq!(gen.deinterleave(c, i), cands[0]);
            if i > 0 {
                assert_ne!(c, &cands[0]);
            }
        }
        if let Source::Shaped { .. } = source {
            assert_eq!(gen.recover_bits(&cands[5], 5).unwrap(), p.shaper_bits);
        }
    }
}

#[test]
fn edi_metric_orders_bursts_above_flat_sequences() {
    let flat = vec![vec![Complex64::new(0.6, 0.8); 300]];
    assert!(metric_edi(&flat, 0, 50).abs() < 1e-20);
    let mut burst = flat.clone();
    for x in burst[0][100..120].iter_mut() {
        *x *= 2.0;
    }
    assert!(metric_edi(&burst, 0, 50) > metric_edi(&flat, 0, 50));
}

#[test]
fn lsas_metric_is_sign_blind_and_am_metric_is_not() {
    let model = {
        let mut m = TripletModel::from_kernel(kernel(), &calibration_link(), None);
        m.channels.truncate(1);
        m
    };
    let taps = model.phase_filter().remove(0);
    let ones = vec![vec![Complex64::new(0.0, 1.0); 200]; 2];
    assert!(metric_lsas(&ones, 0, &taps).unwrap().abs() < 1e-20);
    let mut changed = 0;
    for seed in 0..10 {
        let x = random_symbols(200, 2, seed);
        let mut y = x.clone();
        let k = 37 + seed as usize * 11;
        y[0][k] = Complex64::new(-y[0][k].re, y[0][k].im);
        let (a, b) = (metric_lsas(&x, 0, &taps).unwrap(), metric_lsas(&y, 0, &taps).unwrap());
        assert!((a - b).abs() <= 1e-12 * a);
        let (a, b) = (metric_am(&x, 0, &model).unwrap(), metric_am(&y, 0, &model).unwrap());
        if (a - b).abs() > 1e-9 * a {
            changed += 1;
        }
    }
    assert_eq!(changed, 10);
}

#[test]
fn am_metric_trivial_cases() {
    let link = LinkConfig { gamma_per_w_km: 0.0, ..calibration_link() };
    let mut model = TripletModel::from_kernel(kernel(), &link, None);
    model.channels.truncate(1);
    assert_eq!(model.prefactor, 0.0);
    let x = random_symbols(100, 2, 4);
    assert_eq!(metric_am(&x, 0, &model).unwrap(), 0.0);
    // constant modulus: only the additive part remains
    let mut model = TripletModel::from_kernel(kernel(), &calibration_link(), None);
    model.channels.truncate(1);
    let cm: Vec<Vec<Complex64>> =
        x.iter().map(|p| p.iter().map(|v| Complex64::from_polar(1.0, v.arg())).collect()).collect();
    let (d, rest) = model.decompose(&cm, &[], Boundary::Zero).unwrap();
    assert!(d.iter().flatten().all(|v| v.abs() < 1e-15));
    let additive: f64 = rest.iter().flatten().map(|v| v.norm_sqr()).sum();
    let m = metric_am(&cm, 0, &model).unwrap();
    assert!((m - additive).abs() < 1e-12 * additive);
}

#[test]
fn am_metric_matches_brute_force_triplet_sum() {
    let terms = vec![
        (0, 0, Complex64::new(1.0, -0.3)),
        (0, 2, Complex64::new(0.4, 0.2)),
        (1, 0, Complex64::new(0.25, -0.1)),
        (1, -1, Complex64::new(-0.15, 0.05)),
        (-2, 1, Complex64::new(0.07, 0.12)),
    ];
    let model = TripletModel {
        prefactor: 0.3,
        dual: false,
        channels: vec![ChannelTerms { channel: 0, terms: terms.clone() }],
    };
    let x = random_symbols(8, 1, 9).remove(0);
    let at = |i: i64| if (0..8).contains(&i) { x[i as usize] } else { Complex64::default() };
    let mut expect = 0.0;
    for k in 0..8i64 {
        let mut delta = Complex64::default();
        let mut phase = 0.0;
        for &(m, n, c) in &terms {
            delta += c * at(k + m) * at(k + n) * at(k + m + n).conj();
            if (m == 0 || n == 0) && (0..8).contains(&(k + m + n)) {
                phase += c.re;
            }
        }
        let r = J * model.prefactor * (delta - phase * at(k));
        if k >= 3 {
            expect += r.norm_sqr();
        }
    }
    let got = metric_am(&[x], 3, &model).unwrap();
    assert!((got - expect).abs() < 1e-12 * expect, "{got} vs {expect}");
}

#[test]
fn scorer_uses_context_and_rejects_missing_kernel() {
    let link = calibration_link();
    assert!(Scorer::new(&Metric::Lsas, &link, None).is_err());
    assert!(Scorer::new(&Metric::Edi { window: 0 }, &link, None).is_err());
    let s = Scorer::new(&Metric::Am { truncation: Truncation::Full }, &link, Some(kernel())).unwrap();
    assert_eq!(s.context_len(), kernel().w_mem);
    let x = random_symbols(300, 2, 10);
    let (ctx, cand): (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) =
        x.iter().map(|p| (p[..100].to_vec(), p[100..].to_vec())).unzip();
    let with = s.score(&ctx, &cand).unwrap();
    let without = s.score(&[vec![], vec![]], &cand).unwrap();
    assert_ne!(with, without);
    let mut model = TripletModel::from_kernel(kernel(), &link, Some((Truncation::Full, kernel().w_mem)));
    model.channels.truncate(1);
    let w = kernel().w_mem;
    let seq: Vec<Vec<Complex64>> = x.iter().map(|p| p[100 - w..].to_vec()).collect();
    assert!((with - metric_am(&seq, w, &model).unwrap()).abs() < 1e-12 * with);
}

#[test]
fn metric_names_parse() {
    assert_eq!("lsas".parse::<Metric>().unwrap(), Metric::Lsas);
    assert_eq!("am-q".parse::<Metric>().unwrap(), Metric::Am { truncation: Truncation::Quantized });
    assert_eq!("edi:111".parse::<Metric>().unwrap(), Metric::Edi { window: 111 });
    assert!("foo".parse::<Metric>().is_err());
}

#[test]
fn selected_frames_recover_payload_and_minimise_the_metric() {
    let link = calibration_link();
    let source = ccdm_source(64, 2.4);
    let cfg = config(Strategy::FlippingBits { nu: 2 }, 8, Metric::Am { truncation: Truncation::Selected });
    let scorer = Scorer::new(&cfg.metric, &link, Some(kernel())).unwrap();
    let gen = CandidateGenerator::new(&source, 2, &cfg).unwrap();
    let sel = select_frame(&gen, &scorer, 1024, 3).unwrap();
    assert_eq!(sel.frame.len(), 1024);
    let len = gen.block_symbols();
    for (b, (&idx, scores)) in sel.indices.iter().zip(&sel.scores).enumerate() {
        assert!(scores.iter().all(|&s| scores[idx] <= s));
        if (b + 1) * len <= 1024 {
            let block: Vec<Vec<Complex64>> = sel.frame.pols.iter().map(|p| p[b * len..(b + 1) * len].to_vec()).collect();
            assert_eq!(gen.recover_bits(&block, idx).unwrap(), sel.payloads[b].shaper_bits);
        }
    }
    let again = select_frame(&gen, &scorer, 1024, 3).unwrap();
    assert_eq!(again.frame, sel.frame);
}

#[test]
fn more_candidates_lower_the_selected_metric() {
    let link = calibration_link();
    let source = ccdm_source(64, 2.4);
    let metric = Metric::Am { truncation: Truncation::Quantized };
    let scorer = Scorer::new(&metric, &link, Some(kernel())).unwrap();
    let chosen = |n_t: usize| {
        let cfg = config(Strategy::FlippingBits { nu: 2 }, n_t, metric);
        let gen = CandidateGenerator::new(&source, 2, &cfg).unwrap();
        let all: Vec<f64> = (0..4)
            .flat_map(|seed| {
                let s = select_frame(&gen, &scorer, 1024, seed).unwrap();
                s.indices.iter().zip(&s.scores).map(|(&i, v)| v[i]).collect::<Vec<_>>()
            })
            .collect();
        mean(&all)
    };
    let (a, b, c) = (chosen(2), chosen(8), chosen(32));
    assert!(a > b && b > c, "{a} {b} {c}");
}

#[test]
fn quantized_am_ranks_candidates_like_full_am() {
    let link = calibration_link();
    let full = Scorer::new(&Metric::Am { truncation: Truncation::Full }, &link, Some(kernel())).unwrap();
    let quant = Scorer::new(&Metric::Am { truncation: Truncation::Quantized }, &link, Some(kernel())).unwrap();
    let cfg = config(Strategy::FlippingBits { nu: 2 }, 16, Metric::Lsas);
    let gen = CandidateGenerator::new(&ccdm_source(64, 2.4), 2, &cfg).unwrap();
    let mut rng = rng_from_seed(12);
    let none: Vec<Vec<Complex64>> = vec![vec![], vec![]];
    let rho: Vec<f64> = (0..12)
        .map(|_| {
            let cands = gen.candidates(&gen.random_payload(&mut rng)).unwrap();
            let a: Vec<f64> = cands.iter().map(|c| full.score(&none, c).unwrap()).collect();
            let b: Vec<f64> = cands.iter().map(|c| quant.score(&none, c).unwrap()).collect();
            spearman(&a, &b)
        })
        .collect();
    assert!(mean(&rho) > 0.9, "{rho:?}");
}
