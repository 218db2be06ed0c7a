mod common;

use common::{entropy_oracle, frames_by_enumeration, rmse_two_pass};
use fdimit::classifier::ConfidenceVector;
use fdimit::ensemble::{assign_models, improvement, rmse, select_model};
use fdimit::entropy::entropy_at;
use fdimit::imaging::{resize, to_grayscale, MultiChannelImage, RgbFrame};
use fdimit::metrics::classification_report;
use fdimit::nn::{gru_step, lstm_step, GruCell, LstmCell};
use fdimit::signal::{apply_attack, generate_segments, realized_frame_count, AttackSignal, FrameConfig, GeneratorConfig, SignalKind, TimeSeries};
use fdimit::sim::{step_robot, RobotParams, RobotState, WheelSpeeds};
use fdimit::wavelet::{build_scale_grid, cwt_frame, scalogram, MorseParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn series(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 8..=max_len)
}

proptest! {
    #[test]
    fn realized_frames_match_enumeration(n in 1usize..2000, m in 1usize..=128, l_frac in 0.0f64..1.0) {
        let l = ((m as f64) * l_frac) as usize % m;
        let cfg = FrameConfig::new(m, l).unwrap();
        let expected = frames_by_enumeration(n, m, l);
        match realized_frame_count(n, cfg) {
            Ok(c) => prop_assert_eq!(c, expected),
            Err(_) => prop_assert_eq!(expected, 0),
        }
    }

    #[test]
    fn attacks_add(amp_a in -3.0f64..3.0, amp_b in -3.0f64..3.0, f1 in 0.5f64..4.0) {
        let ts = TimeSeries::new((0..300).map(|i| (i as f64 * 0.1).sin()).collect(), 100.0).unwrap();
        let a = AttackSignal::chirp(amp_a, 0.2, f1, 0.5, 2.0);
        let b = AttackSignal::bias(amp_b, 1.0, 2.5);
        let twice = apply_attack(&apply_attack(&ts, &a).unwrap(), &b).unwrap();
        for i in 0..ts.len() {
            let t = ts.time(i);
            let direct = ts.samples()[i] + (a.value_at(t) + b.value_at(t));
            prop_assert!((twice.samples()[i] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn labels_follow_segment_edges(lens in prop::collection::vec(1usize..80, 1..6), seed in 0u64..1000) {
        let layout: Vec<(SignalKind, usize)> = lens.iter().enumerate().map(|(i, &n)| (SignalKind::ALL[i % 3], n)).collect();
        let (ts, labels) = generate_segments(&layout, &GeneratorConfig { seed, ..Default::default() }).unwrap();
        prop_assert_eq!(ts.len(), labels.len());
        let mut at = 0;
        for (kind, n) in layout {
            prop_assert!(labels[at..at + n].iter().all(|&c| c == kind.label()));
            at += n;
        }
    }

    #[test]
    fn entropy_matches_pattern_dictionary(y in series(64), dim in 1usize..=3, delay in 1usize..=2, levels in 2usize..=5) {
        prop_assume!(y.len() >= (dim - 1) * delay + 1);
        let got = entropy_at(&y, dim, delay, levels).unwrap();
        prop_assert!((got - entropy_oracle(&y, dim, delay, levels)).abs() <= 1e-12);
    }

    #[test]
    fn entropy_ignores_positive_affine_maps(y in series(64), scale in 0.01f64..100.0, shift in -50.0f64..50.0, levels in 2usize..=5) {
        let z: Vec<f64> = y.iter().map(|v| scale * v + shift).collect();
        let a = entropy_at(&y, 3, 1, levels).unwrap();
        let b = entropy_at(&z, 3, 1, levels).unwrap();
        // Bin edges can move by rounding when a sample sits exactly on one.
        let on_edge = {
            let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w = (hi - lo) / levels as f64;
            let near = |r: f64| (r - r.round()).abs() < 1e-9;
            let interior = y.iter().any(|&v| v != lo && v != hi && near((v - lo) / w));
            let lagged = (1..=2).any(|k| y.windows(k + 1).any(|p| near((p[k] - p[0]) / w)));
            interior || lagged
        };
        prop_assume!(!on_edge);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn rmse_matches_two_pass(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..200)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = rmse(&a, &b).unwrap();
        prop_assert!((r - rmse_two_pass(&a, &b)).abs() <= 1e-12 * r.max(1.0));
    }

    #[test]
    fn pure_rmse_weight_picks_the_scan_minimum(
        table in prop::collection::vec(prop::collection::vec(0.01f64..5.0, 4), 1..5),
        times in prop::collection::vec(1e-5f64..1e-2, 4),
    ) {
        let t = assign_models(&table, &times, 1.0, &vec![0.7; table.len()]).unwrap();
        for (level, row) in table.iter().enumerate() {
            let best = row.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(row[t.entries[level].model], best);
        }
        let t0 = assign_models(&table, &times, 0.0, &vec![0.7; table.len()]).unwrap();
        let fastest = times.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(t0.entries.iter().all(|e| times[e.model] == fastest));
    }

    #[test]
    fn selection_is_pure(raw in prop::collection::vec(0.01f64..1.0, 3), scale in 0.1f64..10.0) {
        let table = assign_models(&[vec![0.3, 0.2], vec![0.4, 0.5], vec![0.9, 0.8]], &[1e-4, 2e-4], 0.5, &[0.7; 3]).unwrap();
        let c = ConfidenceVector::from_raw(raw.clone()).unwrap();
        let scaled = ConfidenceVector::from_raw(raw.iter().map(|v| v * scale).collect()).unwrap();
        prop_assert_eq!(select_model(&c, &table), select_model(&c.clone(), &table));
        prop_assert_eq!(c.predict_level(), scaled.predict_level());
        for (a, b) in c.normalized.iter().zip(&scaled.normalized) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert_eq!(select_model(&c, &table), select_model(&scaled, &table));
    }

    #[test]
    fn improvement_recomputes(s in 0.01f64..10.0, o in 0.01f64..10.0) {
        let imp = improvement(s, o);
        prop_assert!((imp - (s - o).abs() / o * 100.0).abs() < 1e-9);
    }

    #[test]
    fn confusion_margins(pairs in prop::collection::vec((1usize..=3, 1usize..=3), 1..100)) {
        let (p, l): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let r = classification_report(&p, &l, 3).unwrap();
        for c in 1..=3 {
            prop_assert_eq!(r.actual_count(c), l.iter().filter(|&&v| v == c).count());
            prop_assert_eq!(r.predicted_count(c), p.iter().filter(|&&v| v == c).count());
        }
        let trace = (0..3).map(|i| r.confusion[i][i]).sum::<usize>();
        prop_assert_eq!(r.accuracy, 100.0 * trace as f64 / p.len() as f64);
    }

    #[test]
    fn grayscale_stays_in_range(px in prop::collection::vec(any::<[u8; 3]>(), 12)) {
        let g = to_grayscale(&RgbFrame { width: 4, height: 3, pixels: px, frame_index: 1 });
        prop_assert!(g.pixels.iter().all(|&v| (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn resize_commutes_with_shifts(px in prop::collection::vec(0.0f32..200.0, 2 * 5 * 7), zeta in 1usize..12, shift in -20.0f32..20.0) {
        let img = MultiChannelImage { width: 7, height: 5, channels: 2, pixels: px, first_frame_index: 1 };
        let shifted = MultiChannelImage { pixels: img.pixels.iter().map(|v| v + shift).collect(), ..img.clone() };
        let a = resize(&img, zeta).unwrap();
        let b = resize(&shifted, zeta).unwrap();
        for (x, y) in a.pixels.iter().zip(&b.pixels) {
            prop_assert_eq!(x + shift, *y);
        }
        let square = MultiChannelImage { width: zeta, height: zeta, pixels: a.pixels.clone(), channels: 2, first_frame_index: 1 };
        prop_assert_eq!(resize(&square, zeta).unwrap().pixels, a.pixels);
    }

    #[test]
    fn recurrent_states_stay_bounded(seed in 0u64..500, scale in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gru = GruCell::new(3, 4, &mut rng);
        let lstm = LstmCell::new(3, 4, &mut rng);
        let y = [scale, -scale, 0.5 * scale];
        let h_prev = [2.0 * scale, -0.3, 0.1, -1.5];
        let h = gru_step(&gru, &y, &h_prev).unwrap();
        for (a, b) in h.iter().zip(&h_prev) {
            prop_assert!(a.abs() <= b.abs().max(1.0) + 1e-12);
        }
        let (h, _) = lstm_step(&lstm, &y, &h_prev, &[3.0, -3.0, 0.0, 1.0]).unwrap();
        prop_assert!(h.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn kinematics_rotate_with_the_frame(theta in -3.1f64..3.1, x in -5.0f64..5.0, y in -5.0f64..5.0, h in -3.1f64..3.1,
        wheels in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..50)) {
        let p = RobotParams::default();
        let (c, s) = (theta.cos(), theta.sin());
        let mut a = RobotState::at(x, y, h);
        let mut b = RobotState::at(c * x - s * y, s * x + c * y, h + theta);
        for &(l, r) in &wheels {
            let u = WheelSpeeds { left: l, right: r };
            a = step_robot(&a, u, &p, p.ts);
            b = step_robot(&b, u, &p, p.ts);
            prop_assert!((c * a.x1 - s * a.x2 - b.x1).abs() < 1e-12);
            prop_assert!((s * a.x1 + c * a.x2 - b.x2).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cwt_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        use rand::Rng;
        let params = MorseParams::default();
        let grid = build_scale_grid(100.0, 24, &params, 60).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..60).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let (cx, cy, cm) = (cwt_frame(&x, 1, &grid, &params).unwrap(), cwt_frame(&y, 1, &grid, &params).unwrap(), cwt_frame(&mix, 1, &grid, &params).unwrap());
        let peak = cm.values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        for i in 0..cm.values.len() {
            let d = cm.values[i] - (cx.values[i] * a + cy.values[i] * b);
            prop_assert!(d.norm() <= 1e-10 * peak);
        }
    }

    // Power-of-two frames need no padding, so the convolution is periodic.
    #[test]
    fn cwt_shift_is_cyclic(seed in 0u64..1000, k in 1usize..64) {
        use rand::Rng;
        let params = MorseParams::default();
        let grid = build_scale_grid(100.0, 16, &params, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = (0..64).map(|i| x[(i + 64 - k) % 64]).collect();
        let a = scalogram(&cwt_frame(&x, 1, &grid, &params).unwrap());
        let b = scalogram(&cwt_frame(&shifted, 1, &grid, &params).unwrap());
        let peak = a.values.iter().cloned().fold(0.0, f64::max);
        for s in 0..grid.len() {
            for m in 0..64 {
                prop_assert!((b.get(s, (m + k) % 64) - a.get(s, m)).abs() <= 1e-10 * peak);
            }
        }
    }

    #[test]
    fn tone_energy_peaks_at_its_scale(idx in 4usize..36, frac in 0.0f64..1.0) {
        let params = MorseParams::default();
        let n = 512;
        let grid = build_scale_grid(100.0, 40, &params, n).unwrap();
        let freqs = grid.peak_frequencies();
        let f = freqs[idx] + frac * (freqs[idx + 1] - freqs[idx]);
        let x: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 100.0).sin()).collect();
        let sc = scalogram(&cwt_frame(&x, 1, &grid, &params).unwrap());
        let energy: Vec<f64> = (0..grid.len()).map(|s| sc.row(s).iter().sum()).collect();
        let best = (0..energy.len()).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        prop_assert!(best + 1 >= idx && best <= idx + 2, "tone {f} Hz peaked at scale {best}, expected near {idx}");
    }
}
