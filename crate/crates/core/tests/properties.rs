use nightcap::acquisition::{decode_stream, encode_stream};
use nightcap::dsp::{design_butterworth_bandpass, filtfilt};
use nightcap::metrics::{cohens_kappa_labels, confusion_and_scores, msc_coherence, zncc, EegBand};
use nightcap::microevent::{merge_positive_windows, smote_balance, FeatureMatrix};
use nightcap::physio::{classify_posture, detect_movement, pca3, BaselineCalibration};
use nightcap::recording::{
    adc_to_volts, default_start_time, load_recording, save_recording, slice_epochs, slow_len_for, ChannelId,
    FastChannel, Recording,
};
use nightcap::spectral::{dwt2_db2, emd, idwt2_db2, periodicity, stft};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn counts_recording(n: usize, seed: u64) -> Recording {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = || adc_to_volts(rng.random_range(0..4096u16)).unwrap();
    let fast = std::array::from_fn(|_| (0..n).map(|_| v()).collect());
    let slow = std::array::from_fn(|_| (0..slow_len_for(n)).map(|_| v()).collect());
    Recording::new(fast, slow, default_start_time()).unwrap()
}

fn same(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol || (x.is_nan() && y.is_nan()))
}

fn rec_with_slow(slow: [Vec<f64>; 3]) -> Recording {
    let fast_len = slow[0].len() * 3;
    let fast = std::array::from_fn(|_| vec![1.65; fast_len]);
    Recording::new(fast, slow, default_start_time()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adc_is_strictly_monotone(a in 0u16..4095) {
        prop_assert!(adc_to_volts(a).unwrap() < adc_to_volts(a + 1).unwrap());
    }

    #[test]
    fn save_load_round_trip(n in 0usize..400, seed in any::<u64>()) {
        let rec = counts_recording(n, seed);
        let dir = tempfile::tempdir().unwrap();
        save_recording(&rec, dir.path()).unwrap();
        let back = load_recording(dir.path()).unwrap();
        for (a, b) in rec.fast_channels().iter().zip(back.fast_channels()) {
            prop_assert!(same(a, b, 1e-9));
        }
        for (a, b) in rec.slow_channels().iter().zip(back.slow_channels()) {
            prop_assert!(same(a, b, 1e-9));
        }
        prop_assert_eq!(rec.start_time(), back.start_time());
        prop_assert_eq!(rec.slow_rate(), back.slow_rate());
    }

    #[test]
    fn epochs_tile_the_channel_prefix(n in 0usize..2000, epoch_s in 0.5f64..5.0) {
        let rec = counts_recording(n, n as u64);
        let id = ChannelId::Fast(FastChannel::EegL);
        let epochs = slice_epochs(&rec, id, epoch_s).unwrap();
        let joined: Vec<f64> = epochs.concat();
        prop_assert_eq!(&joined[..], &rec.channel(id)[..joined.len()]);
    }

    #[test]
    fn codec_round_trip(n in 0usize..300, seed in any::<u64>()) {
        let rec = counts_recording(n, seed);
        let (back, loss) = decode_stream(&encode_stream(&rec).unwrap());
        prop_assert_eq!(loss.frames_corrupt + loss.frames_lost + loss.samples_lost, 0);
        prop_assert_eq!(encode_stream(&back).unwrap(), encode_stream(&rec).unwrap());
    }

    #[test]
    fn filter_poles_inside_unit_circle(lo in 0.05f64..5.0, width in 1.2f64..20.0, order in 1usize..7) {
        let hi = (lo * width).min(60.0);
        prop_assume!(hi > lo * 1.05);
        let spec = design_butterworth_bandpass(order, lo, hi, 125.0).unwrap();
        prop_assert!(spec.poles().iter().all(|p| p.norm() < 1.0));
    }

    #[test]
    fn filtfilt_is_linear_and_zero_phase(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let spec = design_butterworth_bandpass(5, 0.75, 3.0, 125.0).unwrap();
        let (x, y) = (noise(1000, seed), noise(1000, seed ^ 1));
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let (fx, fy, fm) = (filtfilt(&spec, &x).unwrap(), filtfilt(&spec, &y).unwrap(), filtfilt(&spec, &mix).unwrap());
        let expect: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| alpha * a + beta * b).collect();
        prop_assert!(same(&fm, &expect, 1e-9));

        let rev: Vec<f64> = x.iter().rev().copied().collect();
        let mut frev = filtfilt(&spec, &rev).unwrap();
        frev.reverse();
        prop_assert!(same(&frev, &fx, 1e-9));
    }

    #[test]
    fn stft_is_homogeneous(seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let x = noise(600, seed);
        let scaled: Vec<f64> = x.iter().map(|v| alpha * v).collect();
        let (a, b) = (stft(&x, 125.0, 128, 32).unwrap(), stft(&scaled, 125.0, 128, 32).unwrap());
        for (ra, rb) in a.power.iter().zip(&b.power) {
            for (pa, pb) in ra.iter().zip(rb) {
                prop_assert!((pb - alpha * alpha * pa).abs() <= 1e-9 * (alpha * alpha * pa).abs().max(1e-300));
            }
        }
    }

    #[test]
    fn periodicity_ignores_scale(seed in any::<u64>(), k in -20i32..20) {
        prop_assume!(k != 0);
        let alpha = 2f64.powi(k);
        let x = noise(500, seed);
        let scaled: Vec<f64> = x.iter().map(|v| -alpha * v).collect();
        prop_assert_eq!(periodicity(&x, 125.0, (0.75, 3.0)), periodicity(&scaled, 125.0, (0.75, 3.0)));
    }

    #[test]
    fn dwt_reconstructs(n in 4usize..600, seed in any::<u64>()) {
        let x = noise(n, seed);
        prop_assert!(same(&idwt2_db2(&dwt2_db2(&x).unwrap()), &x, 1e-10));
    }

    #[test]
    fn emd_imfs_are_imfs(seed in any::<u64>()) {
        let x = noise(400, seed);
        let d = emd(&x, 6).unwrap();
        prop_assert!(same(&d.reconstruct(), &x, 1e-8));
        for imf in &d.imfs {
            let ext = imf.windows(3).filter(|w| (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2])).count();
            let signs: Vec<bool> = imf.iter().filter(|v| **v != 0.0).map(|v| *v > 0.0).collect();
            let zc = signs.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert!(ext.abs_diff(zc) <= 1, "extrema {} zero crossings {}", ext, zc);
        }
    }

    #[test]
    fn pca_components_uncorrelated(seed in any::<u64>(), m in 10usize..500) {
        let base = noise(3 * m, seed);
        let ch: Vec<Vec<f64>> = (0..3).map(|c| (0..m).map(|i| base[i] + 0.5 * base[c * m + i]).collect()).collect();
        let d = pca3([&ch[0], &ch[1], &ch[2]]).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let cov: f64 = d.components[i].iter().zip(&d.components[j]).map(|(a, b)| a * b).sum::<f64>() / (m - 1) as f64;
            prop_assert!(cov.abs() <= 1e-8);
        }
    }

    #[test]
    fn posture_ignores_shared_offset(seed in any::<u64>(), offset in -0.5f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seated = [1.6, 1.65, 1.7];
        let slow: [Vec<f64>; 3] = std::array::from_fn(|p| {
            (0..2500).map(|j| seated[p] - if (j / 417) % 3 == p { 0.3 } else { 0.0 } + 0.01 * rng.random_range(-1.0..1.0)).collect()
        });
        let calib = BaselineCalibration { v_p0_seated: seated, stationary_variance: [1e-4; 3] };
        let shifted_calib = BaselineCalibration { v_p0_seated: seated.map(|v| v + offset), ..calib.clone() };
        let shifted = slow.clone().map(|c| c.iter().map(|v| v + offset).collect());
        prop_assert_eq!(
            classify_posture(&rec_with_slow(slow), &calib),
            classify_posture(&rec_with_slow(shifted), &shifted_calib)
        );
    }

    #[test]
    fn movement_needs_five_times_stationary(seed in any::<u64>(), h in 1e-4f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // block variance is at most h^2 * n / (n - 1), well under 5 * h^2 / 4
        let slow: [Vec<f64>; 3] = std::array::from_fn(|_| (0..1000).map(|_| 1.6 + rng.random_range(-h..h)).collect());
        let calib = BaselineCalibration { v_p0_seated: [1.6; 3], stationary_variance: [h * h / 4.0; 3] };
        prop_assert!(detect_movement(&rec_with_slow(slow), &calib).unwrap().is_empty());
    }

    #[test]
    fn merged_windows_are_ordered_and_disjoint(labels in proptest::collection::vec(0u8..2, 0..300)) {
        let spans: Vec<(f64, f64)> = (0..labels.len()).map(|i| (i as f64 * 0.25, i as f64 * 0.25 + 1.0)).collect();
        let runs = merge_positive_windows(&spans, &labels);
        prop_assert!(runs.iter().all(|(a, b)| a < b));
        prop_assert!(runs.windows(2).all(|w| w[0].1 < w[1].0));
    }

    #[test]
    fn smote_rows_lie_between_neighbours(seed in any::<u64>(), n_min in 2usize..12, extra in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * n_min + extra;
        let labels: Vec<u8> = (0..n).map(|i| u8::from(i < n_min)).collect();
        let data: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fm = FeatureMatrix {
            columns: vec!["a".into(), "b".into(), "c".into()],
            data,
            labels: Some(labels),
            fs_hz: 125.0,
            window_len: 125,
            hop: 31,
            window_starts: Vec::new(),
        };
        let out = smote_balance(&fm, 5, seed).unwrap();
        let minority: Vec<&[f64]> = (0..n_min).map(|i| fm.row(i)).collect();
        for i in n..out.matrix.n_rows() {
            let s = out.matrix.row(i);
            let hit = minority.iter().any(|p| minority.iter().any(|q| {
                let d: Vec<f64> = q.iter().zip(p.iter()).map(|(a, b)| a - b).collect();
                let len2: f64 = d.iter().map(|v| v * v).sum();
                if len2 == 0.0 {
                    return false;
                }
                let u = s.iter().zip(p.iter()).zip(&d).map(|((a, b), dv)| (a - b) * dv).sum::<f64>() / len2;
                let off: f64 = s.iter().zip(p.iter()).zip(&d).map(|((a, b), dv)| (a - b - u * dv).powi(2)).sum();
                (-1e-12..=1.0 + 1e-12).contains(&u) && off <= 1e-20
            }));
            prop_assert!(hit, "synthetic row {} off every minority segment", i);
        }
    }

    #[test]
    fn zncc_affine_invariance(seed in any::<u64>(), alpha in 0.1f64..10.0, beta in -5.0f64..5.0) {
        let (f, t) = (noise(64, seed), noise(64, seed ^ 7));
        let g: Vec<f64> = f.iter().map(|v| alpha * v + beta).collect();
        let neg: Vec<f64> = f.iter().map(|v| -alpha * v + beta).collect();
        let z = zncc(&f, &t).unwrap();
        prop_assert!((zncc(&g, &t).unwrap() - z).abs() <= 1e-12);
        prop_assert!((zncc(&neg, &t).unwrap() + z).abs() <= 1e-12);
    }

    #[test]
    fn coherence_ignores_scale(seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let x = noise(1250, seed);
        let y: Vec<f64> = x.iter().zip(noise(1250, seed ^ 3)).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = y.iter().map(|v| alpha * v).collect();
        let (a, b) = (msc_coherence(&x, &y, 125.0).unwrap(), msc_coherence(&x, &scaled, 125.0).unwrap());
        for band in EegBand::ALL {
            prop_assert!((a.band_means[&band] - b.band_means[&band]).abs() <= 1e-12);
        }
    }

    #[test]
    fn kappa_symmetric_and_self_one(a in proptest::collection::vec(0u8..4, 2..60), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<u8> = a.iter().map(|&x| if rng.random_bool(0.5) { x } else { rng.random_range(0..4) }).collect();
        if let (Ok(ab), Ok(ba)) = (cohens_kappa_labels(&a, &b), cohens_kappa_labels(&b, &a)) {
            prop_assert!((ab - ba).abs() <= 1e-15);
        }
        if a.iter().any(|&x| x != a[0]) {
            prop_assert!((cohens_kappa_labels(&a, &a).unwrap() - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn confusion_marginals(a in proptest::collection::vec(0u8..4, 1..60), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<u8> = a.iter().map(|_| rng.random_range(0..4)).collect();
        let (cm, scores) = confusion_and_scores(&a, &b, &[0, 1, 2, 3]).unwrap();
        prop_assert_eq!(cm.total(), a.len());
        for (c, s) in scores.iter().enumerate() {
            prop_assert_eq!(s.tp + s.fn_, a.iter().filter(|&&x| x == c as u8).count());
            prop_assert_eq!(cm.counts[c].iter().sum::<usize>(), s.tp + s.fn_);
        }
    }
}
