//! Synthetic Raman spectra.
//!
//! Pure-substance spectra are sums of Lorentzian lines; mixtures are weighted
//! sums of pure spectra. A broad Gaussian stands in for the fluorescence
//! background and additive white Gaussian noise is calibrated to a requested
//! SNR, where signal and noise power are both the mean of squared samples.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Uniformly spaced Raman-shift axis in cm⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumAxis {
    pub start_cm1: f64,
    pub end_cm1: f64,
    pub n_points: usize,
}

impl SpectrumAxis {
    pub fn new(start_cm1: f64, end_cm1: f64, n_points: usize) -> Result<Self> {
        let axis = SpectrumAxis { start_cm1, end_cm1, n_points };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.start_cm1.is_finite() && self.end_cm1.is_finite() && self.start_cm1 < self.end_cm1 && self.n_points >= 2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidRange { start: self.start_cm1, end: self.end_cm1, n_points: self.n_points })
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.end_cm1 - self.start_cm1) / (self.n_points - 1) as f64
    }

    pub fn span(&self) -> f64 {
        self.end_cm1 - self.start_cm1
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.end_cm1
        } else {
            self.start_cm1 + i as f64 * self.spacing()
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.value(i))
    }

    pub fn contains(&self, wavenumber: f64) -> bool {
        wavenumber >= self.start_cm1 && wavenumber <= self.end_cm1
    }
}

impl Default for SpectrumAxis {
    fn default() -> Self {
        SpectrumAxis { start_cm1: 400.0, end_cm1: 1800.0, n_points: 1024 }
    }
}

/// Multi-hot membership over the three substances (oleic, palmitic, retinyl).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MixtureLabel(u8);

impl MixtureLabel {
    pub const N_BITS: usize = 3;

    /// The seven non-empty classes, ordered as in the published class table:
    /// the three pure substances, then the pairs, then the triple.
    pub const CLASSES: [MixtureLabel; 7] = [
        MixtureLabel(0b001),
        MixtureLabel(0b010),
        MixtureLabel(0b100),
        MixtureLabel(0b011),
        MixtureLabel(0b110),
        MixtureLabel(0b101),
        MixtureLabel(0b111),
    ];

    pub const EMPTY: MixtureLabel = MixtureLabel(0);

    pub fn from_bits(bits: [bool; 3]) -> Self {
        let mut v = 0u8;
        for (i, b) in bits.iter().enumerate() {
            if *b {
                v |= 1 << i;
            }
        }
        MixtureLabel(v)
    }

    pub fn from_slice(bits: &[bool]) -> Result<Self> {
        if bits.len() != Self::N_BITS {
            return Err(Error::shape(format!("{} label bits", Self::N_BITS), format!("{}", bits.len())));
        }
        Ok(Self::from_bits([bits[0], bits[1], bits[2]]))
    }

    pub fn single(bit: usize) -> Self {
        debug_assert!(bit < Self::N_BITS);
        MixtureLabel(1 << bit)
    }

    pub fn bits(&self) -> [bool; 3] {
        [self.is_set(0), self.is_set(1), self.is_set(2)]
    }

    pub fn is_set(&self, bit: usize) -> bool {
        bit < Self::N_BITS && self.0 & (1 << bit) != 0
    }

    pub fn with(self, bit: usize) -> Self {
        MixtureLabel(self.0 | (1 << bit))
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// Bitmask with bit `i` set when substance `i` is present.
    pub fn code(&self) -> u8 {
        self.0
    }

    pub fn count(&self) -> usize {
        self.0.count_ones() as usize
    }

    /// Multi-hot target vector for training.
    pub fn to_target(&self) -> [f64; 3] {
        self.bits().map(|b| if b { 1.0 } else { 0.0 })
    }
}

/// `"101"` means oleic and retinyl present, palmitic absent (first char is bit 0).
impl fmt::Display for MixtureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for MixtureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.len() != Self::N_BITS || !s.bytes().all(|c| c == b'0' || c == b'1') {
            return Err(Error::param("label_bits", format!("expected 3 chars of 0/1, got {s:?}")));
        }
        let b: Vec<bool> = s.bytes().map(|c| c == b'1').collect();
        Self::from_slice(&b)
    }
}

impl Serialize for MixtureLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MixtureLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Peak {
    pub center: f64,
    pub height: f64,
    pub fwhm: f64,
}

/// Peak table of one substance. `bit` is the label bit the substance owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstanceProfile {
    pub name: String,
    pub bit: usize,
    pub peaks: Vec<Peak>,
}

impl SubstanceProfile {
    pub fn new(name: impl Into<String>, bit: usize, peaks: Vec<Peak>) -> Result<Self> {
        let p = SubstanceProfile { name: name.into(), bit, peaks };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidProfile { name: self.name.clone(), reason };
        if self.peaks.is_empty() {
            return Err(bad("at least one peak is required".into()));
        }
        if self.bit >= MixtureLabel::N_BITS {
            return Err(bad(format!("label bit {} out of range", self.bit)));
        }
        for pk in &self.peaks {
            if !(pk.center.is_finite() && pk.height.is_finite() && pk.fwhm.is_finite()) {
                return Err(bad("non-finite peak parameter".into()));
            }
            if pk.height < 0.0 {
                return Err(bad(format!("negative height {}", pk.height)));
            }
            if pk.fwhm <= 0.0 {
                return Err(bad(format!("fwhm must be positive, got {}", pk.fwhm)));
            }
        }
        Ok(())
    }

    /// Lorentzian line sum at one wavenumber.
    pub fn intensity_at(&self, nu: f64) -> f64 {
        self.peaks
            .iter()
            .map(|pk| {
                let g = 0.5 * pk.fwhm;
                let d = nu - pk.center;
                pk.height * g * g / (d * d + g * g)
            })
            .sum()
    }
}

static DEFAULT_LIBRARY: &str = include_str!("../data/substances.json");

/// The built-in three-substance library shipped in `data/substances.json`.
pub fn default_library() -> Vec<SubstanceProfile> {
    let lib: Vec<SubstanceProfile> = serde_json::from_str(DEFAULT_LIBRARY).expect("bundled substance library is valid JSON");
    lib
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamanSpectrum {
    pub axis: SpectrumAxis,
    pub intensity: Vec<f64>,
    pub label: MixtureLabel,
}

impl RamanSpectrum {
    pub fn new(axis: SpectrumAxis, intensity: Vec<f64>, label: MixtureLabel) -> Result<Self> {
        axis.validate()?;
        if intensity.len() != axis.n_points {
            return Err(Error::shape(format!("{} samples", axis.n_points), format!("{}", intensity.len())));
        }
        if intensity.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("intensity", "contains non-finite values"));
        }
        Ok(RamanSpectrum { axis, intensity, label })
    }

    /// Mean of squared samples.
    pub fn power(&self) -> f64 {
        signal_power(&self.intensity)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "wavenumber,intensity,label_bits")?;
        for (nu, v) in self.axis.values().zip(&self.intensity) {
            writeln!(w, "{nu},{v},{}", self.label)?;
        }
        Ok(())
    }

    /// Reads the CSV written by [`RamanSpectrum::write_csv`]. The axis is
    /// reconstructed from the first and last wavenumber.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let malformed = |reason: String| Error::Malformed { path: "<spectrum csv>".into(), reason };
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| malformed("empty file".into()))??;
        if header.trim() != "wavenumber,intensity,label_bits" {
            return Err(malformed(format!("unexpected header {header:?}")));
        }
        let mut nus = Vec::new();
        let mut vals = Vec::new();
        let mut label = None;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(malformed(format!("line {}: expected 3 columns", lineno + 2)));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| malformed(format!("line {}: {e}", lineno + 2)));
            nus.push(parse(cols[0])?);
            vals.push(parse(cols[1])?);
            let l: MixtureLabel = cols[2].parse()?;
            match label {
                None => label = Some(l),
                Some(prev) if prev != l => return Err(malformed("label_bits differ between rows".into())),
                _ => {}
            }
        }
        if nus.len() < 2 {
            return Err(malformed("need at least two rows".into()));
        }
        let axis = SpectrumAxis::new(nus[0], nus[nus.len() - 1], nus.len())?;
        RamanSpectrum::new(axis, vals, label.unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

pub fn signal_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// `10·log10(P_signal / P_noise)`.
pub fn snr_db(signal_power: f64, noise_power: f64) -> f64 {
    10.0 * (signal_power / noise_power).log10()
}

/// Noise power that realizes `snr_db` against a signal of power `signal_power`.
pub fn noise_power_for(signal_power: f64, snr_db: f64) -> f64 {
    signal_power / 10f64.powf(snr_db / 10.0)
}

pub fn synth_pure(profile: &SubstanceProfile, axis: &SpectrumAxis) -> Result<RamanSpectrum> {
    profile.validate()?;
    axis.validate()?;
    if let Some(pk) = profile.peaks.iter().find(|pk| !axis.contains(pk.center)) {
        return Err(Error::InvalidProfile {
            name: profile.name.clone(),
            reason: format!("peak at {} cm-1 lies outside the axis", pk.center),
        });
    }
    let intensity = axis.values().map(|nu| profile.intensity_at(nu)).collect();
    Ok(RamanSpectrum { axis: *axis, intensity, label: MixtureLabel::single(profile.bit) })
}

/// Weighted mixture; weights are normalized to sum to one. Components with
/// zero weight contribute neither intensity nor label bits.
pub fn synth_mixture(components: &[(&SubstanceProfile, f64)], axis: &SpectrumAxis) -> Result<RamanSpectrum> {
    if let Some((p, w)) = components.iter().find(|(_, w)| !w.is_finite() || *w < 0.0) {
        return Err(Error::param("weight", format!("weight {w} for `{}` must be finite and >= 0", p.name)));
    }
    let total: f64 = components.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    let mut intensity = vec![0.0; axis.n_points];
    let mut label = MixtureLabel::EMPTY;
    for (profile, w) in components {
        if *w <= 0.0 {
            continue;
        }
        let pure = synth_pure(profile, axis)?;
        let frac = w / total;
        for (acc, v) in intensity.iter_mut().zip(&pure.intensity) {
            *acc += frac * v;
        }
        label = label.with(profile.bit);
    }
    Ok(RamanSpectrum { axis: *axis, intensity, label })
}

/// Adds a broad Gaussian background. `width_cm1` is the Gaussian sigma and
/// must exceed a quarter of the axis span.
pub fn add_fluorescence(spectrum: &RamanSpectrum, amplitude: f64, center_cm1: f64, width_cm1: f64) -> Result<RamanSpectrum> {
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(Error::param("amplitude", format!("must be finite and >= 0, got {amplitude}")));
    }
    if !center_cm1.is_finite() {
        return Err(Error::param("center_cm1", "must be finite"));
    }
    let min = spectrum.axis.span() / 4.0;
    if width_cm1.is_nan() || width_cm1 <= min {
        return Err(Error::NarrowFluorescence { width: width_cm1, min });
    }
    let two_var = 2.0 * width_cm1 * width_cm1;
    let intensity = spectrum
        .axis
        .values()
        .zip(&spectrum.intensity)
        .map(|(nu, v)| {
            let d = nu - center_cm1;
            v + amplitude * (-d * d / two_var).exp()
        })
        .collect();
    Ok(RamanSpectrum { axis: spectrum.axis, intensity, label: spectrum.label })
}

/// Zero-mean white Gaussian noise with variance set from the requested SNR.
pub fn noise_for(spectrum: &RamanSpectrum, noise: NoiseSpec) -> Result<Vec<f64>> {
    if !noise.snr_db.is_finite() {
        return Err(Error::param("snr_db", "must be finite"));
    }
    let p = spectrum.power();
    if p.is_nan() || p <= 0.0 {
        return Err(Error::ZeroPower);
    }
    let sigma = noise_power_for(p, noise.snr_db).sqrt();
    let mut rng = seed::rng_from(noise.seed);
    Ok((0..spectrum.intensity.len())
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect())
}

pub fn add_noise_snr(spectrum: &RamanSpectrum, noise: NoiseSpec) -> Result<RamanSpectrum> {
    let n = noise_for(spectrum, noise)?;
    let intensity = spectrum.intensity.iter().zip(&n).map(|(s, e)| s + e).collect();
    Ok(RamanSpectrum { axis: spectrum.axis, intensity, label: spectrum.label })
}
