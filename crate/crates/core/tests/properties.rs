use mcsloc_core::dataset::{read_recording, write_recording, RecordingMeta};
use mcsloc_core::eval::{accuracy, confusion};
use mcsloc_core::locmap::{coarsen_index, locate, merge_tiles, McsMap, N_MCS};
use mcsloc_core::mcs::mcs_table_lookup;
use mcsloc_core::phy::{generate_baseband, measure_power, IqBuffer, SignalConfig};
use mcsloc_core::tcn::softmax;
use num_complex::Complex32;
use proptest::prelude::*;

fn histograms(n: usize, min: u64) -> impl Strategy<Value = Vec<[u64; N_MCS]>> {
    prop::collection::vec(prop::array::uniform9(min..20u64), n)
}

fn grid() -> impl Strategy<Value = (usize, usize)> {
    (1usize..8, 1usize..10)
}

fn map_strategy(min: u64) -> impl Strategy<Value = McsMap> {
    grid().prop_flat_map(move |(r, c)| {
        histograms(r * c, min).prop_map(move |h| McsMap::from_histograms(r, c, 1.0, h).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_conserves_counts(map in map_strategy(0), factor in 1usize..5) {
        let merged = merge_tiles(&map, factor).unwrap();
        prop_assert_eq!(merged.rows, map.rows.div_ceil(factor));
        prop_assert_eq!(merged.cols, map.cols.div_ceil(factor));
        prop_assert_eq!(merged.total_observations(), map.total_observations());
        for m in 0..N_MCS {
            let before: u64 = map.tiles.iter().map(|t| t.histogram[m]).sum();
            let after: u64 = merged.tiles.iter().map(|t| t.histogram[m]).sum();
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn merge_keeps_tiles_nonempty(map in map_strategy(1), factor in 1usize..5) {
        let merged = merge_tiles(&map, factor).unwrap();
        prop_assert!(merged.tiles.iter().all(|t| t.total() > 0));
    }

    #[test]
    fn coarsening_never_lowers_accuracy(
        (rows, cols, pairs) in grid().prop_flat_map(|(r, c)| {
            (Just(r), Just(c), prop::collection::vec(((0..r, 0..c), (0..r, 0..c)), 1..60))
        }),
        factor in 1usize..5,
    ) {
        let hit = |f: usize| {
            pairs
                .iter()
                .filter(|&&((tr, tc), (pr, pc))| {
                    coarsen_index(tr, tc, f, rows, cols).unwrap()
                        == coarsen_index(pr, pc, f, rows, cols).unwrap()
                })
                .count()
        };
        prop_assert!(hit(factor) >= hit(1));
    }

    #[test]
    fn alpha_zero_argmax_ignores_count_scale(
        map in map_strategy(1),
        k in 2u64..50,
        obs in prop::collection::vec(8u8..=16, 1..8),
    ) {
        let scaled = McsMap::from_histograms(
            map.rows,
            map.cols,
            map.tile_size_m,
            map.tiles.iter().map(|t| t.histogram.map(|c| c * k)).collect(),
        )
        .unwrap();
        let a = locate(&map, &obs, 0.0).unwrap();
        let b = locate(&scaled, &obs, 0.0).unwrap();
        prop_assert_eq!((a.row, a.col), (b.row, b.col));
    }

    #[test]
    fn self_confusion_is_perfect(truth in prop::collection::vec(0u32..9, 1..200)) {
        let labels: Vec<u32> = (0..9).collect();
        let cm = confusion(&truth, &truth, &labels).unwrap();
        prop_assert_eq!(accuracy(&cm).unwrap(), 1.0);
        prop_assert_eq!(cm.total(), truth.len() as u64);
    }

    #[test]
    fn softmax_rows_are_distributions(logits in prop::collection::vec(-1e4f64..1e4, 1..20)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn recording_round_trip_is_bit_exact(
        samples in prop::collection::vec((-1e30f32..1e30, -1e30f32..1e30), 1..300),
    ) {
        let buf = IqBuffer::new(samples.iter().map(|&(i, q)| Complex32::new(i, q)).collect()).unwrap();
        let meta = RecordingMeta {
            mcs: 9,
            sinr_db: -3.25,
            file_index: 4,
            seed: 77,
            sample_rate_hz: 5e6,
            n_samples: buf.len(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.iq");
        write_recording(&buf, &meta, &path).unwrap();
        let (back, back_meta) = read_recording(&path).unwrap();
        prop_assert_eq!(back_meta, meta);
        let bits = |b: &IqBuffer| -> Vec<(u32, u32)> {
            b.samples().iter().map(|s| (s.re.to_bits(), s.im.to_bits())).collect()
        };
        prop_assert_eq!(bits(&back), bits(&buf));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn baseband_power_is_unit(mcs in 8u32..=16, n in 1000usize..20000, seed in any::<u64>()) {
        let entry = mcs_table_lookup(mcs).unwrap();
        let buf = generate_baseband(&entry, &SignalConfig::default(), n, seed).unwrap();
        prop_assert_eq!(buf.len(), n);
        prop_assert!((measure_power(&buf).unwrap() - 1.0).abs() <= 1e-3);
    }
}
