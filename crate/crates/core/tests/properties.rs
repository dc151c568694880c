//! Randomized invariants of every module.

use std::f64::consts::PI;

use proptest::prelude::*;
use rrmag::amp_path::{binarize_level, AmpExtractor};
use rrmag::estimator::{estimate_f0, periodogram_objective, EstimatorConfig, MotionMatrix};
use rrmag::frame_io::{load_sequence, quantize, save_y8, FrameSequence};
use rrmag::pyramid::{build_laplacian, collapse, reduce, riesz_transform, PyramidKernel};
use rrmag::quaternion::Quaternion;
use rrmag::roi::{fused_estimate, pick_centers};
use rrmag::synth::{generate, Rect, SynthSpec};
use rrmag::temporal::{design_bandpass, filter_signal};
use rrmag::Plane;

fn plane(w: usize, h: usize) -> impl Strategy<Value = Plane> {
    prop::collection::vec(0.0f64..1.0, w * h).prop_map(move |d| Plane::from_vec(w, h, d))
}

fn quat() -> impl Strategy<Value = Quaternion> {
    (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0).prop_map(|(s, i, j, k)| Quaternion::new(s, i, j, k))
}

fn matrix() -> impl Strategy<Value = MotionMatrix> {
    (1usize..=4, 1usize..=2, 16usize..=64).prop_flat_map(|(m, c, n)| {
        prop::collection::vec(-1.0f64..1.0, m * c * n)
            .prop_map(move |d| MotionMatrix::new(m, c, n, d, 25.0).unwrap())
    })
}

fn est_cfg() -> EstimatorConfig {
    EstimatorConfig {
        f_min_hz: 0.3,
        f_max_hz: 1.1,
        grid_step_hz: 0.005,
        eta: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn y8_round_trip_is_bit_exact(bytes in prop::collection::vec(any::<u8>(), 3 * 6 * 5)) {
        let frames = bytes
            .chunks(30)
            .map(|c| Plane::from_vec(6, 5, c.iter().map(|&b| b as f64 / 255.0).collect()))
            .collect();
        let seq = FrameSequence::new(frames, 25.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.y8");
        save_y8(&seq, &path).unwrap();
        let back = load_sequence(&path, None).unwrap();
        save_y8(&back, &dir.path().join("again.y8")).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), bytes);
        prop_assert_eq!(std::fs::read(dir.path().join("again.y8")).unwrap(), std::fs::read(&path).unwrap());
        prop_assert_eq!(back.fs_hz(), 25.0);
    }

    #[test]
    fn normalization_preserves_order(a in any::<u8>(), b in any::<u8>()) {
        let (fa, fb) = (a as f64 / 255.0, b as f64 / 255.0);
        prop_assert_eq!(a.cmp(&b), fa.partial_cmp(&fb).unwrap());
        prop_assert_eq!(quantize(fa), a);
        prop_assert!((0.0..=1.0).contains(&fa));
    }

    #[test]
    fn quaternion_norm_is_multiplicative(a in quat(), b in quat()) {
        prop_assert!(((a * b).norm() - a.norm() * b.norm()).abs() < 1e-10 * (1.0 + a.norm() * b.norm()));
    }

    #[test]
    fn pure_unit_log_norm(v in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)) {
        let q = Quaternion::new(0.0, v.0, v.1, v.2);
        prop_assume!(q.norm() > 1e-3);
        let l = (q / q.norm()).log_unit().unwrap();
        prop_assert!((l.value.vector_norm() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_reconstructs(f in plane(23, 17), levels in 2usize..=3) {
        let k = PyramidKernel::default();
        let back = collapse(&build_laplacian(&f, levels, &k).unwrap(), &k).unwrap();
        prop_assert!(back.max_abs_diff(&f) < 1e-6);
    }

    #[test]
    fn reduce_keeps_constant(c in -5.0f64..5.0, w in 2usize..40, h in 2usize..40) {
        let r = reduce(&Plane::filled(w, h, c), &PyramidKernel::default()).unwrap();
        prop_assert!(r.data().iter().all(|&v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn filter_is_linear(
        x in prop::collection::vec(-1.0f64..1.0, 200),
        y in prop::collection::vec(-1.0f64..1.0, 200),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let d = design_bandpass(0.19, 0.9, 30.0).unwrap();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = filter_signal(&mix, &d);
        let (fx, fy) = (filter_signal(&x, &d), filter_signal(&y, &d));
        for n in 0..200 {
            prop_assert!((lhs[n] - (a * fx[n] + b * fy[n])).abs() < 1e-10);
        }
    }

    #[test]
    fn in_band_tone_keeps_its_frequency(f in 0.3f64..1.1) {
        let fs = 25.0;
        let d = design_bandpass(0.3, 1.1, fs).unwrap();
        let x: Vec<f64> = (0..1500).map(|n| (2.0 * PI * f * n as f64 / fs).cos()).collect();
        let y = filter_signal(&x, &d);
        let m = MotionMatrix::new(1, 1, 1000, y[500..].to_vec(), fs).unwrap();
        let e = estimate_f0(&m, &est_cfg()).unwrap();
        prop_assert!((e.grid_f0_hz - f).abs() <= 0.005 + 1e-9, "{} vs {}", e.grid_f0_hz, f);
    }

    #[test]
    fn binarized_means_stay_in_unit_interval(
        g in prop::collection::vec(-1.0f64..1.0, 36),
        th in 0.001f64..1.0,
        alpha in 0.0f64..30.0,
    ) {
        let mut ex = AmpExtractor::with_raw(vec![1.0, alpha, 0.0], th);
        let lvl = Plane::from_vec(6, 6, g);
        ex.push(&[lvl.clone(), lvl.clone(), lvl]).unwrap();
        let s = ex.finish();
        prop_assert!(s.lbar.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn amplification_and_threshold_share_a_scale(
        g in prop::collection::vec(-1.0f64..1.0, 64),
        alphas in prop::collection::vec(0.0f64..30.0, 3),
        th in 0.001f64..1.0,
        k in 0.01f64..100.0,
    ) {
        let lvl = Plane::from_vec(8, 8, g);
        for &a in &alphas {
            let base = binarize_level(&lvl, a, th);
            let scaled = binarize_level(&lvl, a * k, th * k);
            prop_assert_eq!(base, scaled);
        }
    }

    #[test]
    fn estimate_ignores_positive_scale(x in matrix(), k in 1e-3f64..1e3) {
        let a = estimate_f0(&x, &est_cfg());
        let b = estimate_f0(&x.scaled(k), &est_cfg());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a.grid_index, b.grid_index),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn estimate_ignores_channel_order(x in matrix(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..x.channel_count()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let chans: Vec<&[f64]> = x.channels().collect();
        let data = order.iter().flat_map(|&k| chans[k].iter().copied()).collect();
        let y = MotionMatrix::new(x.levels(), x.comps(), x.len(), data, x.fs_hz()).unwrap();
        let (a, b) = (estimate_f0(&x, &est_cfg()).unwrap(), estimate_f0(&y, &est_cfg()).unwrap());
        prop_assert_eq!(a.grid_index, b.grid_index);
        prop_assert!((a.f0_hz - b.f0_hz).abs() < 1e-9);
    }

    #[test]
    fn estimate_ignores_channel_offsets(x in matrix(), offsets in prop::collection::vec(-10.0f64..10.0, 8)) {
        let data = x
            .channels()
            .enumerate()
            .flat_map(|(k, ch)| ch.iter().map(|v| v + offsets[k]).collect::<Vec<_>>())
            .collect();
        let y = MotionMatrix::new(x.levels(), x.comps(), x.len(), data, x.fs_hz()).unwrap();
        let (a, b) = (estimate_f0(&x, &est_cfg()).unwrap(), estimate_f0(&y, &est_cfg()).unwrap());
        prop_assert_eq!(a.grid_index, b.grid_index);
        prop_assert!((a.f0_hz - b.f0_hz).abs() < 1e-9);
    }

    #[test]
    fn objective_matches_autocorrelation_form(x in matrix(), f in 0.0f64..12.5) {
        // Σ_c Σ_n Σ_k x̃[n] x̃[k] cos(ω (n - k)), no DTFT involved.
        let w = 2.0 * PI * f / x.fs_hz();
        let oracle: f64 = x
            .channels()
            .map(|ch| {
                let mu = ch.iter().sum::<f64>() / ch.len() as f64;
                let mut acc = 0.0;
                for (n, a) in ch.iter().enumerate() {
                    for (k, b) in ch.iter().enumerate() {
                        acc += (a - mu) * (b - mu) * (w * (n as f64 - k as f64)).cos();
                    }
                }
                acc
            })
            .sum();
        let j = periodogram_objective(&x, f);
        prop_assert!((j - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()), "{} vs {}", j, oracle);
    }

    #[test]
    fn gated_roi_has_no_influence(
        keep in matrix(),
        noise in prop::collection::vec(-50.0f64..50.0, 64),
    ) {
        let n = keep.len();
        let junk = |scale: f64| {
            let d = (0..n).map(|i| scale * noise[i % noise.len()]).collect();
            MotionMatrix::new(1, 1, n, d, keep.fs_hz()).unwrap()
        };
        let base = fused_estimate(&[keep.clone(), junk(1.0)], &[true, false], &est_cfg());
        let other = fused_estimate(&[keep.clone(), junk(-7.5)], &[true, false], &est_cfg());
        match (base, other) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.f0_hat_hz, b.f0_hat_hz);
                prop_assert_eq!(a.a_hat, b.a_hat);
            }
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn roi_centers_fit_and_stay_apart(
        map in plane(40, 30),
        count in 1usize..8,
        half in 1usize..6,
        sep in 1usize..15,
    ) {
        let side = 2 * half + 1;
        let c = pick_centers(&map, count, side, sep);
        prop_assert!(c.len() <= count);
        for (i, &(x, y)) in c.iter().enumerate() {
            prop_assert!(x >= half && x + half < 40 && y >= half && y + half < 30);
            for &(x2, y2) in &c[i + 1..] {
                let d2 = (x as f64 - x2 as f64).powi(2) + (y as f64 - y2 as f64).powi(2);
                prop_assert!(d2 >= (sep * sep) as f64);
            }
        }
    }

    #[test]
    fn synthetic_video_is_deterministic(seed in any::<u64>(), f0 in 0.1f64..2.0) {
        let spec = SynthSpec {
            width: 16,
            height: 16,
            duration_s: 0.5,
            f0_hz: f0,
            motion_region: Rect::new(2, 2, 12, 12),
            noise_sigma: 0.05,
            ..SynthSpec::default()
        };
        prop_assert_eq!(generate(&spec, seed).unwrap(), generate(&spec, seed).unwrap());
    }
}

#[test]
fn riesz_quadrature_energy_is_flat() {
    // Oriented band-limited sinusoid: p² + r1² + r2² should not ripple.
    for (fx, fy) in [(3.0, 5.0), (8.0, 0.0), (-4.0, 6.0)] {
        let (w, h) = (64, 64);
        let p = Plane::from_fn(w, h, |x, y| {
            (2.0 * PI * (fx * x as f64 / w as f64 + fy * y as f64 / h as f64)).cos()
        });
        let r = riesz_transform(&p);
        let energy: Vec<f64> = (8..56)
            .flat_map(|y| (8..56).map(move |x| (x, y)))
            .map(|(x, y)| p[(x, y)].powi(2) + r.r1[(x, y)].powi(2) + r.r2[(x, y)].powi(2))
            .collect();
        let mean = energy.iter().sum::<f64>() / energy.len() as f64;
        let var = energy.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / energy.len() as f64;
        assert!(var.sqrt() / mean < 0.05, "cv {} for ({fx}, {fy})", var.sqrt() / mean);
    }
}

#[test]
fn ground_truth_displacement_peaks_at_f0() {
    for f0 in [0.21, 0.3, 0.47] {
        let spec = SynthSpec {
            width: 8,
            height: 8,
            duration_s: 30.0,
            f0_hz: f0,
            motion_region: Rect::new(0, 0, 8, 8),
            ..SynthSpec::default()
        };
        let (_, truth) = generate(&spec, 0).unwrap();
        let d = truth.displacement[0].clone();
        let m = MotionMatrix::new(1, 1, d.len(), d, spec.fs_hz).unwrap();
        let cfg = EstimatorConfig {
            f_min_hz: 0.1,
            f_max_hz: 1.0,
            grid_step_hz: 0.01,
            eta: 0.0,
        };
        let e = estimate_f0(&m, &cfg).unwrap();
        assert!((e.grid_f0_hz - f0).abs() < 1e-9, "{} vs {f0}", e.grid_f0_hz);
    }
}
