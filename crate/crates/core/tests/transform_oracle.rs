mod common;

use std::f64::consts::PI;

use common::*;
use ramix::spectrum::MixtureLabel;
use ramix::tf::*;
use rand::Rng;
use rustfft::num_complex::Complex64;

fn tone(n: usize, freq: f64) -> Vec<f64> {
    (0..n).map(|t| (2.0 * PI * freq * t as f64).cos()).collect()
}

#[test]
fn stft_matches_naive_dft_per_frame() {
    let mut r = rng(1);
    let x: Vec<f64> = (0..100).map(|_| r.random_range(-1.0..1.0)).collect();
    let (len, hop) = (16, 7);
    for window in [Window::Hann, Window::Rect] {
        let map = stft(&x, len, hop, window).unwrap();
        assert_eq!((map.rows, map.cols), (len / 2 + 1, 100usize.div_ceil(hop)));
        let w: Vec<f64> = match window {
            Window::Rect => vec![1.0; len],
            Window::Hann => (0..len).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos()).collect(),
        };
        for k in 0..map.cols {
            let frame: Vec<Complex64> = (0..len).map(|i| Complex64::new(x.get(k * hop + i).copied().unwrap_or(0.0) * w[i], 0.0)).collect();
            let spec = naive_dft(&frame);
            for (f, bin) in spec.iter().enumerate().take(map.rows) {
                let want = bin.norm_sqr();
                assert!((map.get(f, k) - want).abs() <= 1e-9 * want.max(1.0), "frame {k} bin {f}");
            }
        }
    }
}

#[test]
fn stft_parseval_per_frame() {
    // Σ_f |X_f|² over all N bins = N·Σ|x·w|²; one-sided rows double the interior bins.
    let mut r = rng(2);
    let x: Vec<f64> = (0..64).map(|_| r.random_range(-1.0..1.0)).collect();
    let len = 32;
    let map = stft(&x, len, 32, Window::Hann).unwrap();
    let w = Window::Hann.coefficients(len);
    for k in 0..map.cols {
        let energy: f64 = (0..len).map(|i| (x.get(k * 32 + i).copied().unwrap_or(0.0) * w[i]).powi(2)).sum();
        let col = map.column(k);
        let full: f64 = col[0] + col[len / 2] + 2.0 * col[1..len / 2].iter().sum::<f64>();
        assert!((full - len as f64 * energy).abs() < 1e-9 * full.max(1.0));
    }
}

#[test]
fn stft_bin_aligned_tone_has_no_leakage() {
    let len = 64;
    let x = tone(len, 5.0 / len as f64);
    let map = stft(&x, len, len, Window::Rect).unwrap();
    let col = map.column(0);
    let peak = col[5];
    assert!(peak > 0.0);
    for (f, &v) in col.iter().enumerate() {
        if f != 5 {
            assert!(v <= 1e-10 * peak, "bin {f}: {v}");
        }
    }
}

#[test]
fn stft_structure_under_window_doubling() {
    let x = tone(512, 0.1);
    let a = stft(&x, 64, 32, Window::Hann).unwrap();
    let b = stft(&x, 128, 64, Window::Hann).unwrap();
    assert_eq!(a.cols, 2 * b.cols);
    assert_eq!(b.rows - 1, 2 * (a.rows - 1));
}

#[test]
fn stft_of_zero_is_zero() {
    let map = stft(&[0.0; 40], 8, 3, Window::Hann).unwrap();
    assert!(map.values.iter().all(|&v| v == 0.0));
}

#[test]
fn analytic_signal_matches_naive() {
    let mut r = rng(3);
    for n in [16, 17] {
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let fast = analytic_signal(&x);
        let slow = naive_analytic(&x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
        // real part reproduces the input
        for (a, &v) in fast.iter().zip(&x) {
            assert!((a.re - v).abs() < 1e-12);
        }
    }
}

#[test]
fn wvd_matches_direct_sum() {
    let mut r = rng(4);
    let n = 32;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let map = wvd(&x).unwrap();
    let z = naive_analytic(&x);
    for t in [0, 1, 9, 16, 30, 31] {
        for k in 0..n {
            let want = naive_wvd_at(&z, k, t);
            assert!((map.get(k, t) - want).abs() < 1e-9, "k {k} t {t}");
        }
    }
}

/// Row of the largest value in column `t`.
fn ridge(map: &TfMap, t: usize) -> usize {
    (0..map.rows).max_by(|&a, &b| map.get(a, t).total_cmp(&map.get(b, t))).unwrap()
}

#[test]
fn wvd_chirp_ridge_slope_matches_rate() {
    let n = 256;
    let (f0, rate) = (0.05, 0.3 / n as f64);
    let x: Vec<f64> = (0..n).map(|t| (2.0 * PI * (f0 * t as f64 + 0.5 * rate * (t * t) as f64)).cos()).collect();
    let map = wvd(&x).unwrap();
    let ts: Vec<f64> = (32..n - 32).map(|t| t as f64).collect();
    let fs: Vec<f64> = (32..n - 32).map(|t| map.row_axis[ridge(&map, t)]).collect();
    let slope = linear_slope(&ts, &fs);
    assert!((slope - rate).abs() <= 0.05 * rate, "slope {slope} vs rate {rate}");
}

pub fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn wvd_two_tones_show_cross_term() {
    let n = 256;
    let (f1, f2) = (0.1, 0.3);
    let x: Vec<f64> = tone(n, f1).iter().zip(tone(n, f2)).map(|(a, b)| a + b).collect();
    let map = wvd(&x).unwrap();
    let row = |f: f64| (f * 2.0 * n as f64).round() as usize;
    let energy = |k: usize| -> f64 { (32..n - 32).map(|t| map.get(k, t).abs()).sum() };
    let cross = energy(row(0.5 * (f1 + f2)));
    let tone_e = energy(row(f1));
    assert!(cross >= 0.1 * tone_e, "cross {cross} tone {tone_e}");
}

#[test]
fn wvd_single_tone_concentrates() {
    let n = 128;
    let f = 20.0 / (2.0 * n as f64);
    let map = wvd(&tone(n, f)).unwrap();
    let k0 = 20;
    for t in 16..n - 16 {
        let col = map.column(t);
        let total: f64 = col.iter().map(|v| v * v).sum();
        let near: f64 = col[k0 - 2..=k0 + 2].iter().map(|v| v * v).sum();
        assert!(near >= 0.8 * total, "t {t}");
    }
}

#[test]
fn wvd_rejects_odd_or_short() {
    assert!(wvd(&[1.0; 7]).is_err());
    assert!(wvd(&[1.0; 2]).is_err());
    assert!(wvd(&[0.0; 8]).unwrap().values.iter().all(|&v| v == 0.0));
}

#[test]
fn cwt_matches_direct_sum() {
    let mut r = rng(5);
    let n = 200;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    for family in [WaveletFamily::Morlet, WaveletFamily::MexicanHat] {
        let spec = WaveletSpec::for_signal(n, family);
        let map = cwt(&x, &spec).unwrap();
        for (row, &a) in map.row_axis.iter().enumerate().step_by(9) {
            for b in [0, 3, 77, 150, n - 1] {
                let want = match family {
                    WaveletFamily::Morlet => naive_cwt_at(&x, a, b, |u| morlet(u, 6.0)),
                    WaveletFamily::MexicanHat => naive_cwt_at(&x, a, b, |u| Complex64::new(mexican_hat(u), 0.0)),
                };
                assert!((map.get(row, b) - want).abs() < 1e-9 * want.max(1.0), "{family:?} a {a} b {b}");
            }
        }
    }
}

#[test]
fn cwt_impulse_response() {
    let n = 256;
    let t0 = 128;
    let mut x = vec![0.0; n];
    x[t0] = 1.0;
    let spec = WaveletSpec::for_signal(n, WaveletFamily::Morlet);
    let map = cwt(&x, &spec).unwrap();
    for row in [0, 20, 50] {
        let a = map.row_axis[row];
        for b in [t0 - 3, t0, t0 + 5] {
            let want = a.powf(-0.5) * morlet(-((b as f64) - t0 as f64) / a, 6.0).norm();
            assert!((map.get(row, b) - want).abs() < 1e-12);
        }
    }
}

/// Index of the scale with the most energy over the central columns.
fn ridge_scale(map: &TfMap) -> usize {
    let lo = map.cols / 4;
    let hi = 3 * map.cols / 4;
    (0..map.rows)
        .max_by(|&a, &b| {
            let e = |r: usize| -> f64 { (lo..hi).map(|c| map.get(r, c).powi(2)).sum() };
            e(a).total_cmp(&e(b))
        })
        .unwrap()
}

#[test]
fn cwt_sinusoid_ridge_at_predicted_scale() {
    let n = 1024;
    let spec = WaveletSpec::for_signal(n, WaveletFamily::Morlet);
    for period in [8.0, 20.0, 57.0, 150.0] {
        let map = cwt(&tone(n, 1.0 / period), &spec).unwrap();
        let predicted = spec.center_frequency * period / (2.0 * PI);
        let nearest = (0..map.rows)
            .min_by(|&a, &b| (map.row_axis[a].ln() - predicted.ln()).abs().total_cmp(&(map.row_axis[b].ln() - predicted.ln()).abs()))
            .unwrap();
        let got = ridge_scale(&map);
        assert!(got.abs_diff(nearest) <= 1, "period {period}: ridge row {got}, predicted {nearest}");
    }
}

#[test]
fn cwt_is_linear_and_shift_covariant() {
    let n = 512;
    let mut r = rng(6);
    let x: Vec<f64> = (0..n).map(|i| (-(((i as f64) - 200.0) / 6.0).powi(2)).exp() + 0.01 * r.random::<f64>()).collect();
    let spec = WaveletSpec::for_signal(n, WaveletFamily::Morlet);
    let a = cwt(&x, &spec).unwrap();
    let scaled: Vec<f64> = x.iter().map(|v| 2.5 * v).collect();
    let b = cwt(&scaled, &spec).unwrap();
    for (u, v) in a.values.iter().zip(&b.values) {
        assert!((2.5 * u - v).abs() <= 1e-9 * v.max(1.0));
    }
    let delta = 37;
    let shifted: Vec<f64> = (0..n).map(|i| x[(i + n - delta) % n]).collect();
    let c = cwt(&shifted, &spec).unwrap();
    for row in (0..20).step_by(4) {
        let arg = |m: &TfMap| (0..n).max_by(|&p, &q| m.get(row, p).total_cmp(&m.get(row, q))).unwrap();
        let (pa, pc) = (arg(&a), arg(&c));
        assert!((pc as isize - pa as isize - delta as isize).abs() <= 1, "row {row}: {pa} -> {pc}");
    }
}

#[test]
fn cwt_rejects_bad_inputs() {
    let spec = WaveletSpec::for_signal(64, WaveletFamily::Morlet);
    assert!(cwt(&[0.0; 4], &spec).is_err());
    let big = WaveletSpec { scale_max: 1000.0, ..spec };
    assert!(cwt(&[0.0; 64], &big).is_err());
    assert!(cwt(&[0.0; 64], &spec).unwrap().values.iter().all(|&v| v == 0.0));
}

#[test]
fn transforms_are_pure() {
    let mut r = rng(7);
    let x: Vec<f64> = (0..256).map(|_| r.random_range(-1.0..1.0)).collect();
    let spec = WaveletSpec::for_signal(256, WaveletFamily::Morlet);
    assert_eq!(cwt(&x, &spec).unwrap().values, cwt(&x, &spec).unwrap().values);
    assert_eq!(wvd(&x).unwrap().values, wvd(&x).unwrap().values);
    assert_eq!(stft(&x, 32, 8, Window::Hann).unwrap().values, stft(&x, 32, 8, Window::Hann).unwrap().values);
}

#[test]
fn scale_image_resampling_and_pgm() {
    let label = MixtureLabel::single(0);
    let map = TfMap {
        rows: 2,
        cols: 2,
        values: vec![0.0, 1.0, 2.0, 5.0],
        row_axis: vec![0.0, 1.0],
        col_axis: vec![0.0, 1.0],
        kind: TfKind::CwtMagnitude,
    };
    let img = to_scale_image(&map, 3, 3, label).unwrap();
    // center = mean of corners = 2.0, normalized by (0, 5)
    assert!((img.get(1, 1) - 0.4).abs() < 1e-7);
    let constant = TfMap { values: vec![3.0; 4], ..map.clone() };
    assert!(to_scale_image(&constant, 4, 4, label).unwrap().pixels.iter().all(|&p| p == 0.0));
    assert!(to_scale_image(&map, 1, 4, label).is_err());
    let unit = TfMap { values: vec![0.0, 0.25, 0.75, 1.0], ..map };
    assert_eq!(to_scale_image(&unit, 2, 2, label).unwrap().pixels, vec![0.0, 0.25, 0.75, 1.0]);

    let zero = ScaleImage::new(2, 2, vec![0.0; 4], TfKind::CwtMagnitude, label).unwrap();
    assert_eq!(export_pgm(&zero), b"P5\n2 2\n255\n\0\0\0\0".to_vec());
    let px = ScaleImage::new(2, 2, vec![1.0, 0.5, 0.0, 0.0], TfKind::CwtMagnitude, label).unwrap();
    let bytes = export_pgm(&px);
    assert_eq!(&bytes[bytes.len() - 4..], &[255, 128, 0, 0]);
}
