//! Time-frequency maps of 1-D signals: short-time Fourier power, the discrete
//! Wigner-Ville distribution, and continuous wavelet transform magnitude.
//!
//! All three treat samples outside the signal as zero. Maps are stored
//! row-major with rows indexing frequency bins (or scales) and columns
//! indexing positions along the signal.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::MixtureLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TfKind {
    StftPower,
    Wvd,
    CwtMagnitude,
}

impl TfKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TfKind::StftPower => "stft_power",
            TfKind::Wvd => "wvd",
            TfKind::CwtMagnitude => "cwt_magnitude",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfMap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub values: Vec<f64>,
    /// Frequency in cycles/sample (STFT, WVD) or wavelet scale in samples (CWT).
    pub row_axis: Vec<f64>,
    /// Sample index of each column.
    pub col_axis: Vec<f64>,
    pub kind: TfKind,
}

impl TfMap {
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
    Rect,
}

impl Window {
    /// Periodic window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; len],
            Window::Hann => (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect(),
        }
    }
}

fn fft_forward(len: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(len)
}

/// Short-time power spectrum.
///
/// Frame `k` covers samples `[k*hop, k*hop + window_len)` and runs off the end
/// of the signal into zeros; there are `ceil(len / hop)` frames. Rows are the
/// `window_len/2 + 1` one-sided DFT bins, `values[f][k] = |DFT(x·w)[f]|²`.
pub fn stft(signal: &[f64], window_len: usize, hop: usize, window: Window) -> Result<TfMap> {
    if window_len == 0 || window_len > signal.len() {
        return Err(Error::param(
            "window_len",
            format!("window of {window_len} samples does not fit a signal of {} samples", signal.len()),
        ));
    }
    if hop == 0 {
        return Err(Error::param("hop", "must be at least 1"));
    }
    let n = signal.len();
    let frames = n.div_ceil(hop);
    let bins = window_len / 2 + 1;
    let w = window.coefficients(window_len);
    let fft = fft_forward(window_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); window_len];
    let mut values = vec![0.0; bins * frames];
    for k in 0..frames {
        let start = k * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let x = signal.get(start + i).copied().unwrap_or(0.0);
            *slot = Complex64::new(x * w[i], 0.0);
        }
        fft.process(&mut buf);
        for f in 0..bins {
            values[f * frames + k] = buf[f].norm_sqr();
        }
    }
    Ok(TfMap {
        rows: bins,
        cols: frames,
        values,
        row_axis: (0..bins).map(|f| f as f64 / window_len as f64).collect(),
        col_axis: (0..frames).map(|k| (k * hop) as f64).collect(),
        kind: TfKind::StftPower,
    })
}

/// Analytic signal via the DFT: keep DC and Nyquist, double positive
/// frequencies, zero negative ones.
pub fn analytic_signal(signal: &[f64]) -> Vec<Complex64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fwd.process(&mut buf);
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *v *= gain / n as f64;
    }
    inv.process(&mut buf);
    buf
}

/// Discrete Wigner-Ville distribution of the analytic form of `signal`.
///
/// For each time `t` the instantaneous autocorrelation
/// `r[τ] = z[t+τ]·conj(z[t−τ])` is formed for `|τ| ≤ min(t, N−1−t, N/2−1)`
/// and transformed over τ with an N-point DFT. Because the lag enters twice,
/// row `k` corresponds to frequency `k / (2N)` cycles/sample, so the N rows
/// cover `[0, 0.5)`. The real part is stored.
pub fn wvd(signal: &[f64]) -> Result<TfMap> {
    let n = signal.len();
    if n < 4 || !n.is_multiple_of(2) {
        return Err(Error::param("signal", format!("WVD needs an even length >= 4, got {n}")));
    }
    let z = analytic_signal(signal);
    let fft = fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut values = vec![0.0; n * n];
    let max_lag = n / 2 - 1;
    for t in 0..n {
        buf.fill(Complex64::new(0.0, 0.0));
        let m = t.min(n - 1 - t).min(max_lag);
        for tau in 0..=m {
            let r = z[t + tau] * z[t - tau].conj();
            buf[tau] = r;
            if tau > 0 {
                buf[n - tau] = r.conj();
            }
        }
        fft.process(&mut buf);
        for k in 0..n {
            values[k * n + t] = buf[k].re;
        }
    }
    Ok(TfMap {
        rows: n,
        cols: n,
        values,
        row_axis: (0..n).map(|k| k as f64 / (2 * n) as f64).collect(),
        col_axis: (0..n).map(|t| t as f64).collect(),
        kind: TfKind::Wvd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletFamily {
    #[default]
    Morlet,
    MexicanHat,
}

impl WaveletFamily {
    /// Mother wavelet at dimensionless time `x`.
    pub fn eval(self, x: f64, center_frequency: f64) -> Complex64 {
        let gauss = (-0.5 * x * x).exp();
        match self {
            WaveletFamily::Morlet => {
                let norm = PI.powf(-0.25);
                Complex64::from_polar(norm * gauss, center_frequency * x)
            }
            WaveletFamily::MexicanHat => {
                let norm = 2.0 / (3f64.sqrt() * PI.powf(0.25));
                Complex64::new(norm * (1.0 - x * x) * gauss, 0.0)
            }
        }
    }

    /// Samples per oscillation period captured at scale 1.
    pub fn period_per_scale(self, center_frequency: f64) -> f64 {
        match self {
            WaveletFamily::Morlet => 2.0 * PI / center_frequency,
            WaveletFamily::MexicanHat => 2.0 * PI / 2.5f64.sqrt(),
        }
    }

    // beyond this |x| the Gaussian envelope is below 1e-14
    fn support(self) -> f64 {
        8.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    /// Morlet ω₀; ignored by the Mexican hat.
    pub center_frequency: f64,
    pub n_scales: usize,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl WaveletSpec {
    pub const DEFAULT_OMEGA0: f64 = 6.0;
    pub const DEFAULT_SCALES: usize = 64;

    /// 64 log-spaced scales whose periods run from 4 samples to `len/4`.
    pub fn for_signal(len: usize, family: WaveletFamily) -> Self {
        let w0 = Self::DEFAULT_OMEGA0;
        let per = family.period_per_scale(w0);
        WaveletSpec {
            family,
            center_frequency: w0,
            n_scales: Self::DEFAULT_SCALES,
            scale_min: 4.0 / per,
            scale_max: (len as f64 / 4.0) / per,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_min.is_finite() && self.scale_max.is_finite() && self.scale_min > 0.0 && self.scale_min < self.scale_max) {
            return Err(Error::param("scales", format!("need 0 < scale_min < scale_max, got {} and {}", self.scale_min, self.scale_max)));
        }
        if self.n_scales < 2 {
            return Err(Error::param("n_scales", "must be at least 2"));
        }
        if self.family == WaveletFamily::Morlet && !(self.center_frequency > 0.0 && self.center_frequency.is_finite()) {
            return Err(Error::param("center_frequency", "must be positive"));
        }
        Ok(())
    }

    /// Geometric grid from `scale_min` to `scale_max` inclusive.
    pub fn scales(&self) -> Vec<f64> {
        let ratio = (self.scale_max / self.scale_min).ln() / (self.n_scales - 1) as f64;
        (0..self.n_scales)
            .map(|i| if i + 1 == self.n_scales { self.scale_max } else { self.scale_min * (ratio * i as f64).exp() })
            .collect()
    }
}

/// Precomputed wavelet spectra for one signal length and wavelet spec.
///
/// The linear correlation `Σ_t f[t]·conj(φ((t−b)/a))` is evaluated as a
/// circular convolution over `fft_len ≥ 2N−1` points, which equals the
/// zero-padded linear sum exactly for every `b` in `0..N`.
pub struct CwtPlan {
    n: usize,
    fft_len: usize,
    scales: Vec<f64>,
    kernels: Vec<Vec<Complex64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl CwtPlan {
    pub fn new(n: usize, spec: &WaveletSpec) -> Result<Self> {
        spec.validate()?;
        if n < 8 {
            return Err(Error::param("signal", format!("CWT needs at least 8 samples, got {n}")));
        }
        if spec.scale_max > n as f64 {
            return Err(Error::param("scale_max", format!("scale {} exceeds signal length {n}", spec.scale_max)));
        }
        let fft_len = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(fft_len);
        let inv = planner.plan_fft_inverse(fft_len);
        let scales = spec.scales();
        let reach = spec.family.support();
        let kernels = scales
            .iter()
            .map(|&a| {
                let mut g = vec![Complex64::new(0.0, 0.0); fft_len];
                let half = ((reach * a).ceil() as usize).min(n - 1);
                // g[m] = conj(φ(−m/a)) at circular index m mod fft_len; the
                // 1/sqrt(a) factor and the inverse-FFT 1/len are folded in.
                let gain = a.powf(-0.5) / fft_len as f64;
                for m in 0..=half {
                    let pos = spec.family.eval(-(m as f64) / a, spec.center_frequency).conj();
                    g[m] = pos * gain;
                    if m > 0 {
                        let neg = spec.family.eval(m as f64 / a, spec.center_frequency).conj();
                        g[fft_len - m] = neg * gain;
                    }
                }
                fwd.process(&mut g);
                g
            })
            .collect();
        Ok(CwtPlan { n, fft_len, scales, kernels, fwd, inv })
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn transform(&self, signal: &[f64]) -> Result<TfMap> {
        if signal.len() != self.n {
            return Err(Error::shape(format!("{} samples", self.n), format!("{}", signal.len())));
        }
        let n = self.n;
        let mut spec = vec![Complex64::new(0.0, 0.0); self.fft_len];
        for (s, &x) in spec.iter_mut().zip(signal) {
            *s = Complex64::new(x, 0.0);
        }
        self.fwd.process(&mut spec);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        let mut values = vec![0.0; self.scales.len() * n];
        for (row, kernel) in self.kernels.iter().enumerate() {
            for ((b, s), k) in buf.iter_mut().zip(&spec).zip(kernel) {
                *b = s * k;
            }
            self.inv.process(&mut buf);
            for (dst, c) in values[row * n..(row + 1) * n].iter_mut().zip(&buf) {
                *dst = c.norm();
            }
        }
        Ok(TfMap {
            rows: self.scales.len(),
            cols: n,
            values,
            row_axis: self.scales.clone(),
            col_axis: (0..n).map(|b| b as f64).collect(),
            kind: TfKind::CwtMagnitude,
        })
    }
}

/// CWT magnitude `|a|^(-1/2)·|Σ_t f[t]·conj(φ((t−b)/a))|` with unit sample spacing.
pub fn cwt(signal: &[f64], spec: &WaveletSpec) -> Result<TfMap> {
    CwtPlan::new(signal.len(), spec)?.transform(signal)
}

/// Fixed-size image with pixels in `[0, 1]`, the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleImage {
    pub height: usize,
    pub width: usize,
    /// Row-major.
    pub pixels: Vec<f32>,
    pub source_kind: TfKind,
    pub label: MixtureLabel,
}

impl ScaleImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>, source_kind: TfKind, label: MixtureLabel) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::shape(format!("{height}x{width} pixels"), format!("{}", pixels.len())));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::param("pixels", "values must lie in [0, 1]"));
        }
        Ok(ScaleImage { height, width, pixels, source_kind, label })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.pixels[r * self.width + c]
    }
}

/// Align-corners bilinear resample to `height × width`, then min-max
/// normalization. A constant map becomes all zeros.
pub fn to_scale_image(map: &TfMap, height: usize, width: usize, label: MixtureLabel) -> Result<ScaleImage> {
    if height < 2 || width < 2 {
        return Err(Error::param("image size", format!("height and width must be >= 2, got {height}x{width}")));
    }
    if map.rows == 0 || map.cols == 0 || map.values.len() != map.rows * map.cols {
        return Err(Error::param("map", "time-frequency map is empty or inconsistent"));
    }
    let src = |r: usize, c: usize| map.values[r * map.cols + c];
    let coord = |i: usize, out: usize, inp: usize| -> (usize, usize, f64) {
        if inp == 1 {
            return (0, 0, 0.0);
        }
        let pos = i as f64 * (inp - 1) as f64 / (out - 1) as f64;
        let lo = (pos.floor() as usize).min(inp - 1);
        let hi = (lo + 1).min(inp - 1);
        (lo, hi, pos - lo as f64)
    };
    let cols: Vec<_> = (0..width).map(|j| coord(j, width, map.cols)).collect();
    let mut resampled = Vec::with_capacity(height * width);
    for i in 0..height {
        let (r0, r1, fy) = coord(i, height, map.rows);
        for &(c0, c1, fx) in &cols {
            let top = src(r0, c0) * (1.0 - fx) + src(r0, c1) * fx;
            let bot = src(r1, c0) * (1.0 - fx) + src(r1, c1) * fx;
            resampled.push(top * (1.0 - fy) + bot * fy);
        }
    }
    let (lo, hi) = resampled.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::param("map", "contains non-finite values"));
    }
    let range = hi - lo;
    let pixels = if range > 0.0 {
        resampled.iter().map(|&v| (((v - lo) / range) as f32).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; height * width]
    };
    Ok(ScaleImage { height, width, pixels, source_kind: map.kind, label })
}

/// Binary greyscale PGM (`P5`, maxval 255), one byte per pixel.
pub fn export_pgm(image: &ScaleImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(image.pixels.len() + 20);
    write!(out, "P5\n{} {}\n255\n", image.width, image.height).expect("write to Vec");
    out.extend(image.pixels.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Stft,
    Wvd,
    #[default]
    Cwt,
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stft" => Ok(TransformKind::Stft),
            "wvd" => Ok(TransformKind::Wvd),
            "cwt" => Ok(TransformKind::Cwt),
            other => Err(Error::param("transform", format!("expected stft, wvd or cwt, got {other:?}"))),
        }
    }
}

/// How a spectrum becomes a scale image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    pub kind: TransformKind,
    /// Defaults to [`WaveletSpec::for_signal`] when absent.
    pub wavelet: Option<WaveletSpec>,
    pub stft_window_len: usize,
    pub stft_hop: usize,
    pub stft_window: Window,
    pub height: usize,
    pub width: usize,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            kind: TransformKind::Cwt,
            wavelet: None,
            stft_window_len: 128,
            stft_hop: 16,
            stft_window: Window::Hann,
            height: 64,
            width: 64,
        }
    }
}

/// Reusable spectrum → image converter; holds the CWT plan when one is needed.
pub struct ImagePipeline {
    config: TransformConfig,
    cwt: Option<CwtPlan>,
    n: usize,
}

impl ImagePipeline {
    pub fn new(config: TransformConfig, signal_len: usize) -> Result<Self> {
        if config.height < 2 || config.width < 2 {
            return Err(Error::param("image size", format!("height and width must be >= 2, got {}x{}", config.height, config.width)));
        }
        let cwt = match config.kind {
            TransformKind::Cwt => {
                let spec = config.wavelet.unwrap_or_else(|| WaveletSpec::for_signal(signal_len, WaveletFamily::Morlet));
                Some(CwtPlan::new(signal_len, &spec)?)
            }
            TransformKind::Stft => {
                if config.stft_window_len == 0 || config.stft_window_len > signal_len || config.stft_hop == 0 {
                    return Err(Error::param("stft", "window must fit the signal and hop must be >= 1"));
                }
                None
            }
            TransformKind::Wvd => {
                if signal_len < 4 || !signal_len.is_multiple_of(2) {
                    return Err(Error::param("signal", "WVD needs an even length >= 4"));
                }
                None
            }
        };
        Ok(ImagePipeline { config, cwt, n: signal_len })
    }

    pub fn config(&self) -> &TransformConfig {
        &self.config
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn map(&self, signal: &[f64]) -> Result<TfMap> {
        match self.config.kind {
            TransformKind::Cwt => self.cwt.as_ref().expect("plan built for cwt").transform(signal),
            TransformKind::Stft => stft(signal, self.config.stft_window_len, self.config.stft_hop, self.config.stft_window),
            TransformKind::Wvd => wvd(signal),
        }
    }

    pub fn image(&self, signal: &[f64], label: MixtureLabel) -> Result<ScaleImage> {
        let map = self.map(signal)?;
        to_scale_image(&map, self.config.height, self.config.width, label)
    }
}
