use shaping_core::constellation::mb_qam;
use shaping_core::matchers::*;
use shaping_core::pas::*;

fn ccdm_spec() -> ShaperSpec {
    ShaperSpec::ccdm_for_rate(8, 64, 2.4).unwrap()
}

#[test]
fn shaping_rate_is_exact_fraction() {
    let r = shaping_rate(434, 2, 180).unwrap();
    assert_eq!((r.num, r.den), (12, 5));
    assert_eq!(r.value(), 2.4);
    assert!(shaping_rate(1, 2, 3).is_err());
}

#[test]
fn frames_roundtrip_to_matcher_codewords() {
    let spec = ccdm_spec();
    let m = Matcher::new(&spec).unwrap();
    let ShaperKind::Ccdm { composition } = spec.kind.clone() else {
        unreachable!()
    };
    for (mapping, n_pols) in [
        (Mapping::Dim1, 1),
        (Mapping::Dim1, 2),
        (Mapping::Dim2, 2),
        (Mapping::Dim4, 2),
    ] {
        let cfg = FrameConfig {
            source: Source::Shaped {
                spec: spec.clone(),
                mapping,
            },
            n_pols,
            n_symbols: 64 * 8,
            pilot_rate: None,
        };
        let f = assemble_frame(&cfg, 11).unwrap();
        let c = induced_constellation(&m, &spec).unwrap();
        let lv: Vec<f64> = spec.levels.iter().map(|&a| a as f64 * c.grid_scale).collect();
        let idx = demap_levels(&f, &lv);
        let blocks = unmap_blocks(&idx, mapping, spec.block_len).unwrap();
        assert!(!blocks.is_empty());
        for b in &blocks {
            for (a, &n) in composition.iter().enumerate() {
                assert_eq!(b.iter().filter(|&&x| x == a).count(), n, "{mapping:?}");
            }
            let bits = m.decode(b).unwrap();
            assert_eq!(&m.encode(&bits).unwrap(), b);
        }
        // remapping the recovered blocks reproduces the level indices
        assert_eq!(map_blocks(&blocks, mapping, n_pols).unwrap(), idx);
    }
}

#[test]
fn frame_energy_and_pilots() {
    let cfg = FrameConfig {
        source: Source::Shaped {
            spec: ccdm_spec(),
            mapping: Mapping::Dim1,
        },
        n_pols: 2,
        n_symbols: 40_000,
        pilot_rate: Some(0.025),
    };
    let f = assemble_frame(&cfg, 5).unwrap();
    assert_eq!(f.meta.pilot_period, Some(40));
    assert!(f.pilot_mask.iter().enumerate().all(|(k, &m)| m == (k % 40 == 0)));
    for p in 0..2 {
        let e = f.energies(p);
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean energy {mean}");
    }
    let (agg, dual) = aggregated_energy(&f, 0);
    assert!(dual);
    let mean = agg.iter().sum::<f64>() / agg.len() as f64;
    assert!((mean - 3.0).abs() < 0.05);
}

#[test]
fn iid_frames_and_single_pol_aggregation() {
    let cfg = FrameConfig {
        source: Source::Iid {
            constellation: mb_qam(256, 0.02).unwrap(),
        },
        n_pols: 1,
        n_symbols: 1000,
        pilot_rate: None,
    };
    let f = assemble_frame(&cfg, 1).unwrap();
    let (agg, dual) = aggregated_energy(&f, 0);
    assert!(!dual);
    assert_eq!(agg[3], 2.0 * f.energies(0)[3]);
    // same seed, same frame
    assert_eq!(assemble_frame(&cfg, 1).unwrap(), f);
}

#[test]
fn four_dim_mapping_needs_two_pols() {
    let cfg = FrameConfig {
        source: Source::Shaped {
            spec: ccdm_spec(),
            mapping: Mapping::Dim4,
        },
        n_pols: 1,
        n_symbols: 256,
        pilot_rate: None,
    };
    assert!(assemble_frame(&cfg, 0).is_err());
}

#[test]
fn binary_frame_roundtrip() {
    let cfg = FrameConfig {
        source: Source::Shaped {
            spec: ccdm_spec(),
            mapping: Mapping::Dim2,
        },
        n_pols: 2,
        n_symbols: 500,
        pilot_rate: Some(0.01),
    };
    let f = assemble_frame(&cfg, 9).unwrap();
    let mut buf = Vec::new();
    write_frame(&f, &mut buf).unwrap();
    let g = read_frame(buf.as_slice()).unwrap();
    assert_eq!(f, g);
    assert!(read_frame(&b"garbage!...."[..]).is_err());
}
