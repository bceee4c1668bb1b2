use std::collections::BTreeSet;

use fasticarl::data_io::{split, LabeledDataset, SplitSpec};
use fasticarl::learner::weighted_f1;
use fasticarl::memory::{build_exemplar_set, BudgetPolicy, ReplayMemory};
use fasticarl::quantization::{dequantize, fit_quant_params, quantize, Bits, Payload};
use fasticarl::selection::{compute_class_mean, fast_select, herding_select, l2_distance, FeatureMatrix, SelectionMethod};
use fasticarl::tensor_nn::{MlpModel, Tensor2};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = FeatureMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(n, d)| {
        prop::collection::vec(-50i32..50, n * d)
            .prop_map(move |v| Tensor2::from_vec(n, d, v.into_iter().map(|x| x as f32 * 0.25).collect()).unwrap())
    })
}

fn matrix_and_m(max_rows: usize, max_cols: usize) -> impl Strategy<Value = (FeatureMatrix, usize)> {
    matrix(max_rows, max_cols).prop_flat_map(|f| {
        let n = f.rows();
        (Just(f), 1..=n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fast_select_is_a_stable_sort_prefix((f, m) in matrix_and_m(80, 6)) {
        let mean = compute_class_mean(&f).unwrap();
        let got = fast_select(&f, &mean, m).unwrap();
        let mut all: Vec<(f32, usize)> = (0..f.rows()).map(|i| (l2_distance(f.row(i), &mean.mean), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = all.iter().take(m).map(|p| p.1).collect();
        prop_assert_eq!(got.indices, expected);
        prop_assert!(got.distances.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn fast_select_distances_ignore_row_order((f, m) in matrix_and_m(60, 4), seed in any::<u64>()) {
        let n = f.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let g = f.select_rows(&perm);
        let a = fast_select(&f, &compute_class_mean(&f).unwrap(), m).unwrap();
        let b = fast_select(&g, &compute_class_mean(&g).unwrap(), m).unwrap();
        let close = a.distances.iter().zip(&b.distances).all(|(x, y)| (x - y).abs() <= 1e-4 * x.abs().max(1.0));
        prop_assert!(close, "{:?} vs {:?}", a.distances, b.distances);
    }

    #[test]
    fn selections_are_distinct_and_nested((f, m) in matrix_and_m(40, 5)) {
        let mean = compute_class_mean(&f).unwrap();
        for method in [SelectionMethod::Herding, SelectionMethod::Fast] {
            let full = fasticarl::selection::select(&f, &mean, m, method).unwrap();
            let unique: BTreeSet<usize> = full.indices.iter().copied().collect();
            prop_assert_eq!(unique.len(), m);
            let shorter = fasticarl::selection::select(&f, &mean, m.div_ceil(2), method).unwrap();
            prop_assert_eq!(&full.indices[..shorter.indices.len()], &shorter.indices[..]);
        }
    }

    #[test]
    fn herding_first_pick_is_nearest_sample((f, m) in matrix_and_m(40, 5)) {
        let mean = compute_class_mean(&f).unwrap();
        let h = herding_select(&f, &mean, m).unwrap();
        let fs = fast_select(&f, &mean, 1).unwrap();
        prop_assert_eq!(h.indices[0], fs.indices[0]);
    }

    #[test]
    fn int8_round_trip_within_half_step(vals in prop::collection::vec(-8.0f32..8.0, 1..200)) {
        let p = fit_quant_params(&vals, Bits::B8).unwrap();
        let back = dequantize(&quantize(&vals, &p));
        let s = p.scale() as f64;
        for (&v, &b) in vals.iter().zip(&back) {
            prop_assert!((v as f64 - b as f64).abs() <= s / 2.0 + 1e-6);
        }
    }

    #[test]
    fn int8_codes_are_monotone(vals in prop::collection::vec(-100.0f32..100.0, 2..200)) {
        let p = fit_quant_params(&vals, Bits::B8).unwrap();
        let q = quantize(&vals, &p);
        let Payload::U8(codes) = q.payload() else { panic!("8-bit payload expected") };
        for i in 0..vals.len() {
            for j in 0..vals.len() {
                if vals[i] <= vals[j] {
                    prop_assert!(codes[i] <= codes[j]);
                }
            }
        }
    }

    #[test]
    fn requantizing_is_idempotent(vals in prop::collection::vec(-10.0f32..10.0, 1..100), bits in prop::sample::select(Bits::ALL.to_vec())) {
        let p = fit_quant_params(&vals, bits).unwrap();
        let once = dequantize(&quantize(&vals, &p));
        let twice = dequantize(&quantize(&once, &p));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn quotas_split_budget_evenly(total in 1usize..500, k in 1usize..20) {
        prop_assume!(total >= k);
        let ids: Vec<u32> = (0..k as u32).map(|i| i * 7 + 1).collect();
        let q = BudgetPolicy::with_total(0.1, total).quotas(&ids).unwrap();
        let counts: Vec<usize> = q.values().copied().collect();
        prop_assert_eq!(counts.iter().sum::<usize>(), total);
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn weighted_f1_is_a_score(pairs in prop::collection::vec((0u32..5, 0u32..5), 1..100)) {
        let (pred, labels): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
        let f = weighted_f1(&pred, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert_eq!(weighted_f1(&labels, &labels).unwrap(), 1.0);
    }

    #[test]
    fn split_is_a_stratified_partition(sizes in prop::collection::vec(2usize..40, 2..6), frac in 0.05f64..0.5, seed in any::<u64>()) {
        let labels: Vec<u32> = sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c as u32, n)).collect();
        let n = labels.len();
        let x: Vec<f32> = (0..n).map(|i| i as f32).collect();
        let data = LabeledDataset::new("p", Tensor2::from_vec(n, 1, x).unwrap(), labels, sizes.len() as u32).unwrap();
        let spec = SplitSpec { test_fraction: frac, seed };
        let Ok((train, test)) = split(&data, &spec) else {
            // only when a class would be left without training samples
            prop_assert!(sizes.iter().any(|&s| spec.test_count(s) >= s));
            return Ok(());
        };
        let ids = |d: &LabeledDataset| d.features().data().iter().map(|&v| v as usize).collect::<BTreeSet<_>>();
        let (a, b) = (ids(&train), ids(&test));
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.len() + b.len(), n);
        for (c, &s) in sizes.iter().enumerate() {
            let t = test.class_sizes()[c];
            prop_assert_eq!(t, spec.test_count(s));
            prop_assert!((t as f64 - frac * s as f64).abs() <= 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn snapshot_round_trip(seed in any::<u64>(), classes in 0u32..5, bits in prop::sample::select(Bits::ALL.to_vec())) {
        let d = 1 + (seed % 7) as usize;
        let model = MlpModel::<f32>::new(&[d, 4, 3, 2], seed).unwrap();
        let mut memory = ReplayMemory::new(BudgetPolicy::with_total(0.25, 100));
        for c in 0..classes {
            let n = 3 + c as usize;
            let data: Vec<f32> = (0..n * d).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f32 / 37.0 - 13.0).collect();
            let method = if c % 2 == 0 { SelectionMethod::Fast } else { SelectionMethod::Herding };
            let set = build_exemplar_set(c, &Tensor2::from_vec(n, d, data).unwrap(), &model, 1 + c as usize, bits, method).unwrap();
            memory.insert(set).unwrap();
        }
        let bytes = memory.to_snapshot_bytes();
        prop_assert_eq!(bytes.len() as u64, memory.snapshot_len());
        let back = ReplayMemory::from_snapshot_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &memory);
        prop_assert_eq!(back.to_snapshot_bytes(), bytes);
    }

    #[test]
    fn fdsf_round_trip(rows in 2usize..30, d in 1usize..8, seed in any::<u64>()) {
        let x: Vec<f32> = (0..rows * d).map(|i| f32::from_bits(((i as u64).wrapping_mul(seed | 1) >> 7) as u32 & 0x7f7f_ffff)).collect();
        let labels: Vec<u32> = (0..rows as u32).map(|i| i % 2).collect();
        let data = LabeledDataset::new("rt", Tensor2::from_vec(rows, d, x).unwrap(), labels, 2).unwrap();
        let bytes = data.to_fdsf_bytes().unwrap();
        let back = LabeledDataset::from_fdsf_bytes(&bytes, "rt").unwrap();
        prop_assert_eq!(back.to_fdsf_bytes().unwrap(), bytes);
        prop_assert_eq!(back.labels(), data.labels());
    }
}
