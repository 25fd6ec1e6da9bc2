mod common;

use common::*;
use proptest::prelude::*;

use foasim::augment::{measure_level_db, mix_at_snr};
use foasim::dataio::wav::{decode, encode_f32};
use foasim::foa::{encode_moving, encode_stationary_direction, FoaSignal, MonoSignal};
use foasim::geometry::{segment_min_distance, trajectory_position, Trajectory, Vec3};
use foasim::ir::{ConvolutionEngine, FftOverlapAdd};
use foasim::labels::{angular_error, class_center, frame_count, quantize_doa, span_mask, MaskConfig, QuantizerConfig};
use foasim::loss::{class_distribution, loss_gradients, two_head_loss, Head};
use foasim::rng::{derive_seed, SeededRng};

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-6)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalized().unwrap())
}

fn point() -> impl Strategy<Value = Vec3> {
    (-5.0f64..5.0, -5.0f64..5.0, -2.0f64..2.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn samples(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..max)
}

fn foa_from(seed: u64, n: usize, gain: f64) -> FoaSignal {
    let mut rng = SeededRng::new(seed);
    FoaSignal::from_channels(std::array::from_fn(|_| noise(&mut rng, n).into_iter().map(|v| gain * v).collect()), 16000).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn stationary_encoding_is_isotropic_and_linear(dry in samples(200), l in unit(), k in -3.0f64..3.0) {
        let foa = encode_stationary_direction(&MonoSignal::new(dry.clone()), l).unwrap();
        let scaled = encode_stationary_direction(&MonoSignal::new(dry.iter().map(|v| k * v).collect()), l).unwrap();
        for i in 0..dry.len() {
            let (w, x, y, z) = (foa.w()[i], foa.x()[i], foa.y()[i], foa.z()[i]);
            prop_assert!((x * x + y * y + z * z - w * w).abs() <= 1e-12 * w * w + 1e-300);
            prop_assert_eq!(w, dry[i]);
            for c in 0..4 {
                prop_assert!((scaled.channels[c][i] - k * foa.channels[c][i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn trajectory_positions_are_affine(s in point(), e in point(), n in 2usize..500) {
        let t = Trajectory { start_xyz: s, end_xyz: e, num_samples: n, sample_rate_hz: 16000 };
        prop_assert!((trajectory_position(&t, 1).unwrap() - s).norm() < 1e-12);
        prop_assert!((trajectory_position(&t, n).unwrap() - e).norm() < 1e-12);
        let step = (e - s) * (1.0 / (n - 1) as f64);
        for i in 1..n {
            let d = trajectory_position(&t, i + 1).unwrap() - trajectory_position(&t, i).unwrap();
            prop_assert!((d - step).norm() < 1e-9);
        }
        prop_assert!(trajectory_position(&t, 0).is_err());
        prop_assert!(trajectory_position(&t, n + 1).is_err());
    }

    #[test]
    fn segment_distance_bounds_every_sample(s in point(), e in point(), n in 2usize..300) {
        prop_assume!(s.norm() > 1e-3 && e.norm() > 1e-3);
        let t = Trajectory { start_xyz: s, end_xyz: e, num_samples: n, sample_rate_hz: 16000 };
        let floor = segment_min_distance(s, e);
        for i in 1..=n {
            prop_assert!(trajectory_position(&t, i).unwrap().norm() >= floor - 1e-12);
        }
    }

    #[test]
    fn moving_encoding_never_exceeds_dry_level(dry in samples(300), s in point(), e in point()) {
        prop_assume!(segment_min_distance(s, e) > 1e-3);
        let n = dry.len().max(2);
        let dry: Vec<f64> = dry.into_iter().cycle().take(n).collect();
        let t = Trajectory { start_xyz: s, end_xyz: e, num_samples: n, sample_rate_hz: 16000 };
        let (foa, labels) = encode_moving(&MonoSignal::new(dry.clone()), &t).unwrap();
        for i in 0..n {
            prop_assert!(foa.w()[i].abs() <= dry[i].abs() * (1.0 + 1e-12));
            prop_assert!((labels.0[i].norm() - 1.0).abs() < 1e-12);
            for (c, lc) in [labels.0[i].x(), labels.0[i].y(), labels.0[i].z()].into_iter().enumerate() {
                prop_assert!((foa.channels[c + 1][i] - foa.w()[i] * lc).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn every_direction_has_a_valid_class(l in unit(), n in 1usize..40, m in 1usize..80) {
        let q = QuantizerConfig { n, m };
        let c = quantize_doa(l, &q).unwrap();
        prop_assert!(c < n * m);
        prop_assert_eq!(quantize_doa(class_center(c, &q).unwrap(), &q).unwrap(), c);
    }

    #[test]
    fn direction_lies_near_its_cell_centre(l in unit()) {
        let q = QuantizerConfig::default();
        let c = quantize_doa(l, &q).unwrap();
        // Cells span 11.25 deg in each angle; the diagonal of the widest cell bounds the offset.
        let err = angular_error(l, class_center(c, &q).unwrap()).unwrap();
        prop_assert!(err <= 11.25 * std::f64::consts::SQRT_2 / 2.0 + 1e-9, "{err}");
    }

    #[test]
    fn angular_error_is_a_symmetric_angle(a in unit(), b in unit()) {
        let ab = angular_error(a, b).unwrap();
        prop_assert!((ab - angular_error(b, a).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=180.0).contains(&ab));
        prop_assert!(angular_error(a, a).unwrap() < 1e-5);
        prop_assert!((angular_error(a, a * -1.0).unwrap() - 180.0).abs() < 1e-5);
    }

    #[test]
    fn frames_advance_one_per_hop(n in 400usize..500_000) {
        let t = frame_count(n).unwrap();
        prop_assert_eq!(frame_count(n + 320).unwrap(), t + 1);
        prop_assert!(frame_count(n + 1).unwrap() >= t);
        prop_assert_eq!(t, (n - 400) / 320 + 1);
    }

    #[test]
    fn span_mask_stays_in_range(frames in 0usize..600, span in 1usize..20, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let cfg = MaskConfig { span, start_fraction: frac };
        let mask = span_mask(frames, &cfg, &mut SeededRng::new(seed)).unwrap();
        prop_assert!(mask.iter().all(|&t| t < frames));
        prop_assert!(mask.len() <= cfg.start_count(frames) * span);
        prop_assert_eq!(mask.is_empty(), cfg.start_count(frames) == 0);
        prop_assert_eq!(&mask, &span_mask(frames, &cfg, &mut SeededRng::new(seed)).unwrap());
    }

    #[test]
    fn mix_hits_requested_snr(seed in any::<u64>(), n in 50usize..3000, frac in 0.01f64..1.0, snr in 0.0f64..20.0, g in 0.001f64..10.0) {
        let len = ((n as f64 * frac) as usize).max(1);
        let primary = foa_from(seed, n, 1.0);
        let interferer = foa_from(seed ^ 1, len, g);
        let offset = (seed as usize) % (n - len + 1);
        let mixed = mix_at_snr(&primary, &interferer, snr, offset).unwrap();
        let added: Vec<f64> = (0..len).map(|i| mixed.signal.w()[offset + i] - primary.w()[offset + i]).collect();
        let got = mean_square_db(&primary.w()[offset..offset + len]) - mean_square_db(&added);
        prop_assert!((got - snr).abs() < 1e-6, "{got} vs {snr}");
        // Samples outside the overlap are untouched.
        for c in 0..4 {
            prop_assert_eq!(&mixed.signal.channels[c][..offset], &primary.channels[c][..offset]);
            prop_assert_eq!(&mixed.signal.channels[c][offset + len..], &primary.channels[c][offset + len..]);
        }
    }

    #[test]
    fn mix_preserves_interferer_channel_ratios(seed in any::<u64>(), snr in 0.0f64..20.0) {
        let primary = foa_from(seed, 400, 1.0);
        let interferer = foa_from(seed ^ 7, 100, 0.3);
        let mixed = mix_at_snr(&primary, &interferer, snr, 50).unwrap();
        for c in 0..4 {
            for i in 0..100 {
                let added = mixed.signal.channels[c][50 + i] - primary.channels[c][50 + i];
                prop_assert!((added - mixed.scale * interferer.channels[c][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mix_gain_scales_with_primary(seed in any::<u64>(), k in 0.01f64..100.0, snr in 0.0f64..20.0) {
        let primary = foa_from(seed, 500, 1.0);
        let interferer = foa_from(seed ^ 3, 200, 1.0);
        let a = mix_at_snr(&primary, &interferer, snr, 100).unwrap();
        let b = mix_at_snr(&primary.scaled(k), &interferer, snr, 100).unwrap();
        prop_assert!((b.scale / a.scale - k).abs() < 1e-9 * k);
        let lvl = measure_level_db(&primary.scaled(k), 0..500).unwrap() - measure_level_db(&primary, 0..500).unwrap();
        prop_assert!((lvl - 20.0 * k.log10()).abs() < 1e-9);
    }

    #[test]
    fn fft_matches_direct(x in samples(700), k in samples(300)) {
        let want = direct_conv(&x, &k);
        let got = FftOverlapAdd { min_fft: 16 }.convolve(&x, &k);
        let peak = want.iter().fold(0.0f64, |p, v| p.max(v.abs())).max(1e-300);
        prop_assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-10 * peak);
        }
    }

    #[test]
    fn convolution_is_linear(x in samples(300), y in samples(300), k in samples(100), a in -2.0f64..2.0) {
        let n = x.len().min(y.len());
        let combo: Vec<f64> = (0..n).map(|i| x[i] + a * y[i]).collect();
        let e = FftOverlapAdd::default();
        let lhs = e.convolve(&combo, &k);
        let cx = e.convolve(&x[..n], &k);
        let cy = e.convolve(&y[..n], &k);
        for i in 0..lhs.len() {
            prop_assert!((lhs[i] - (cx[i] + a * cy[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn wav_round_trip_is_f32_exact(ch in prop::collection::vec(-1.0f64..1.0, 0..300)) {
        let chans: Vec<&[f64]> = vec![&ch, &ch, &ch, &ch];
        let bytes = encode_f32(&chans, 16000).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(back.channels.len(), 4);
        prop_assert_eq!(back.sample_rate_hz, 16000);
        for c in &back.channels {
            let want: Vec<f64> = ch.iter().map(|v| *v as f32 as f64).collect();
            prop_assert_eq!(c, &want);
        }
    }

    #[test]
    fn distributions_sum_to_one_and_ignore_scale(seed in any::<u64>(), k in 0.001f64..1000.0, tau in 0.01f64..2.0) {
        let mut rng = SeededRng::new(seed);
        let head = Head { projection: matrix(&mut rng, 4, 8), embeddings: matrix(&mut rng, 5, 4) };
        let h = matrix(&mut rng, 1, 8);
        let p = class_distribution(h.row(0), &head, tau).unwrap();
        prop_assert!((p.sum() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| *v >= 0.0));
        let q = class_distribution((&h.row(0) * k).view(), &head, tau).unwrap();
        for (a, b) in p.iter().zip(q.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lower_temperature_sharpens(seed in any::<u64>(), t1 in 0.02f64..1.0, f in 0.1f64..0.99) {
        let mut rng = SeededRng::new(seed);
        let head = Head { projection: matrix(&mut rng, 4, 8), embeddings: matrix(&mut rng, 5, 4) };
        let h = matrix(&mut rng, 1, 8);
        let hot = class_distribution(h.row(0), &head, t1).unwrap();
        let cold = class_distribution(h.row(0), &head, t1 * f).unwrap();
        let top = hot.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert!(cold[top] >= hot[top] - 1e-15);
    }

    #[test]
    fn total_loss_is_affine_in_lambda(seed in any::<u64>(), l1 in 0.0f64..2.0, l2 in 0.0f64..2.0) {
        let mut rng = SeededRng::new(seed);
        let (reps, mut bundle, a, s) = loss_instance(&mut rng, 6, 8, 4, 5);
        bundle.lambda = 0.0;
        let base = loss_gradients(&reps, &bundle, &a, &s).unwrap();
        bundle.lambda = l1;
        let f1 = two_head_loss(&reps, &bundle, &a, &s).unwrap();
        bundle.lambda = l2;
        let f2 = two_head_loss(&reps, &bundle, &a, &s).unwrap();
        prop_assert!((f1 - (base.acoustic_loss + l1 * base.spatial_loss)).abs() < 1e-10);
        prop_assert!(((f2 - f1) - (l2 - l1) * base.spatial_loss).abs() < 1e-10);
    }

    #[test]
    fn shared_projection_gradients_match_differences(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let (reps, mut bundle, a, s) = loss_instance(&mut rng, 4, 6, 3, 4);
        bundle.share_projection = true;
        let g = loss_gradients(&reps, &bundle, &a, &s).unwrap();
        prop_assert!(g.spatial_projection.is_none());
        let h = 1e-5;
        let (mut diff, mut norm) = (0.0f64, 0.0f64);
        for ((r, c), v) in g.acoustic_projection.indexed_iter() {
            let n = central_difference(&bundle, &reps, &a, &s, h, (r, c), |b, _, at, d| b.acoustic.projection[at] += d);
            diff += (v - n).powi(2);
            norm += v * v;
        }
        prop_assert!(diff.sqrt() <= 1e-5 * norm.sqrt().max(1e-12));
    }

    #[test]
    fn derived_seeds_separate_labels(seed in any::<u64>(), a in "[a-z0-9]{1,12}", b in "[a-z0-9]{1,12}") {
        prop_assume!(a != b);
        prop_assert_ne!(derive_seed(seed, &a), derive_seed(seed, &b));
        prop_assert_eq!(derive_seed(seed, &a), derive_seed(seed, &a));
    }
}
