//! Class balancing and augmentation.
//!
//! Minority classes are filled up to a fixed count by re-noising their raw
//! spectra at an SNR drawn from a range, transforming the result, and then
//! applying random geometric edits to the scale image. Datasets persist as a
//! directory holding `manifest.csv` and one tensor file per image.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::spectrum::{self, MixtureLabel, NoiseSpec, RamanSpectrum};
use crate::tensor_file::{read_tensor, write_tensor, TensorFile};
use crate::tf::{ImagePipeline, ScaleImage, TfKind};

/// Upper bound on shift and shear, as a fraction of the image size.
pub const MAX_GEOMETRIC_FRAC: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    pub max_shift_frac: f64,
    pub allow_rot90: bool,
    pub allow_hflip: bool,
    pub max_shear_frac: f64,
    pub noise_snr_range_db: (f64, f64),
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            max_shift_frac: 0.1,
            allow_rot90: true,
            allow_hflip: true,
            max_shear_frac: 0.1,
            noise_snr_range_db: (30.0, 60.0),
            seed: 0,
        }
    }
}

impl AugmentPolicy {
    /// No geometric edits; noise range kept.
    pub fn geometry_off(self) -> Self {
        AugmentPolicy { max_shift_frac: 0.0, allow_rot90: false, allow_hflip: false, max_shear_frac: 0.0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let frac_ok = |v: f64| (0.0..=MAX_GEOMETRIC_FRAC).contains(&v);
        if !frac_ok(self.max_shift_frac) {
            return Err(Error::param("max_shift_frac", format!("must lie in [0, {MAX_GEOMETRIC_FRAC}], got {}", self.max_shift_frac)));
        }
        if !frac_ok(self.max_shear_frac) {
            return Err(Error::param("max_shear_frac", format!("must lie in [0, {MAX_GEOMETRIC_FRAC}], got {}", self.max_shear_frac)));
        }
        let (lo, hi) = self.noise_snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::param("noise_snr_range_db", format!("need finite low <= high, got ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// One dataset entry. The label lives on the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ScaleImage,
    /// Free-form origin note, e.g. `cwt_magnitude/synth/3/snr=41.2`.
    pub provenance: String,
}

impl Sample {
    pub fn label(&self) -> MixtureLabel {
        self.image.label
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    items: Vec<Sample>,
}

impl LabeledDataset {
    pub fn new(items: Vec<Sample>) -> Result<Self> {
        if let Some(first) = items.first() {
            let (h, w) = (first.image.height, first.image.width);
            if let Some(bad) = items.iter().find(|s| s.image.height != h || s.image.width != w) {
                return Err(Error::shape(format!("{h}x{w} images"), format!("{}x{}", bad.image.height, bad.image.width)));
            }
        }
        Ok(LabeledDataset { items })
    }

    pub fn items(&self) -> &[Sample] {
        &self.items
    }

    pub fn into_items(self) -> Vec<Sample> {
        self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn image_size(&self) -> Option<(usize, usize)> {
        self.items.first().map(|s| (s.image.height, s.image.width))
    }

    pub fn class_counts(&self) -> BTreeMap<MixtureLabel, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.items {
            *counts.entry(s.label()).or_insert(0) += 1;
        }
        counts
    }

    /// Writes `images/NNNNN.mdnt` files, then `manifest.csv` last via a
    /// rename so an interrupted write never leaves a manifest behind.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let images = dir.join("images");
        fs::create_dir_all(&images)?;
        let mut manifest = String::from("filename,label_bits,provenance\n");
        for (i, s) in self.items.iter().enumerate() {
            if s.provenance.contains([',', '\n']) {
                return Err(Error::param("provenance", format!("{:?} contains a comma or newline", s.provenance)));
            }
            let name = format!("images/{i:05}.mdnt");
            let t = TensorFile::new(vec![s.image.height, s.image.width], s.image.pixels.clone())?;
            write_tensor(dir.join(&name), &t)?;
            manifest.push_str(&format!("{name},{},{}\n", s.label(), s.provenance));
        }
        let tmp = dir.join("manifest.csv.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(manifest.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(tmp, dir.join("manifest.csv"))?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.csv");
        let malformed = |reason: String| Error::Malformed { path: path.clone(), reason };
        let f = fs::File::open(&path)?;
        let mut lines = BufReader::new(f).lines();
        let header = lines.next().ok_or_else(|| malformed("empty manifest".into()))??;
        if header.trim() != "filename,label_bits,provenance" {
            return Err(malformed(format!("unexpected header {header:?}")));
        }
        let mut items = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.splitn(3, ',').collect();
            if cols.len() != 3 {
                return Err(malformed(format!("row {}: expected 3 columns", k + 2)));
            }
            let label: MixtureLabel = cols[1].parse()?;
            let t = read_tensor(dir.join(cols[0]))?;
            if t.dims.len() != 2 {
                return Err(malformed(format!("{}: expected a 2-D tensor, got dims {:?}", cols[0], t.dims)));
            }
            let kind = kind_from_provenance(cols[2]);
            let image = ScaleImage::new(t.dims[0], t.dims[1], t.data, kind, label).map_err(|e| malformed(format!("{}: {e}", cols[0])))?;
            items.push(Sample { image, provenance: cols[2].to_string() });
        }
        LabeledDataset::new(items)
    }
}

fn kind_from_provenance(p: &str) -> TfKind {
    match p.split('/').next() {
        Some("stft_power") => TfKind::StftPower,
        Some("wvd") => TfKind::Wvd,
        _ => TfKind::CwtMagnitude,
    }
}

/// Balances every class in `classes` to exactly `target` items.
///
/// Raw spectra are transformed and kept unchanged. Each missing item re-noises
/// a raw spectrum of its class (cycling through them) at an SNR drawn
/// uniformly from the policy range, transforms it, and applies
/// [`augment_image`]. Seeds derive from `(policy.seed, class, item)`.
pub fn oversample_to(
    raw: &[RamanSpectrum],
    classes: &[MixtureLabel],
    target: usize,
    policy: &AugmentPolicy,
    pipeline: &ImagePipeline,
) -> Result<LabeledDataset> {
    policy.validate()?;
    let mut by_class: BTreeMap<MixtureLabel, Vec<usize>> = classes.iter().map(|&c| (c, Vec::new())).collect();
    for (i, s) in raw.iter().enumerate() {
        match by_class.get_mut(&s.label) {
            Some(v) => v.push(i),
            None => return Err(Error::param("raw spectra", format!("spectrum {i} has label {} outside the class list", s.label))),
        }
    }
    if let Some((c, _)) = by_class.iter().find(|(_, v)| v.is_empty()) {
        return Err(Error::EmptyClass(c.to_string()));
    }
    let max_raw = by_class.values().map(Vec::len).max().unwrap_or(0);
    if target < max_raw {
        return Err(Error::param("target_per_class", format!("{target} is below the largest raw class count {max_raw}")));
    }

    enum Job {
        Raw(usize),
        Synth { class_idx: usize, k: usize, raw_idx: usize },
    }
    let mut jobs = Vec::new();
    for (class_idx, &c) in classes.iter().enumerate() {
        let members = &by_class[&c];
        jobs.extend(members.iter().map(|&i| Job::Raw(i)));
        for k in 0..target - members.len() {
            jobs.push(Job::Synth { class_idx, k, raw_idx: members[k % members.len()] });
        }
    }

    let kind = pipeline.config().kind;
    let items: Vec<Result<Sample>> = jobs
        .par_iter()
        .map(|job| match *job {
            Job::Raw(i) => {
                let image = pipeline.image(&raw[i].intensity, raw[i].label)?;
                Ok(Sample { provenance: format!("{}/raw/{i}", kind_name(kind)), image })
            }
            Job::Synth { class_idx, k, raw_idx } => {
                let item = ((class_idx as u64) << 32) | k as u64;
                let mut rng = seed::derived_rng(policy.seed, stream::OVERSAMPLE, item);
                let (lo, hi) = policy.noise_snr_range_db;
                let snr = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                let noisy = spectrum::add_noise_snr(&raw[raw_idx], NoiseSpec { snr_db: snr, seed: rng.random() })?;
                let image = pipeline.image(&noisy.intensity, noisy.label)?;
                let image = augment_image(&image, policy, seed::derive_seed(policy.seed, stream::AUGMENT, item));
                Ok(Sample { provenance: format!("{}/synth/{raw_idx}/snr={snr:.2}", kind_name(kind)), image })
            }
        })
        .collect();
    LabeledDataset::new(items.into_iter().collect::<Result<Vec<_>>>()?)
}

fn kind_name(kind: crate::tf::TransformKind) -> &'static str {
    use crate::tf::TransformKind::*;
    match kind {
        Stft => TfKind::StftPower.as_str(),
        Wvd => TfKind::Wvd.as_str(),
        Cwt => TfKind::CwtMagnitude.as_str(),
    }
}

/// Moves content by `(dy, dx)` pixels, filling vacated pixels with zero.
pub fn shift_image(img: &ScaleImage, dy: isize, dx: isize) -> ScaleImage {
    let (h, w) = (img.height as isize, img.width as isize);
    let mut out = vec![0.0f32; img.pixels.len()];
    for r in 0..h {
        let sr = r - dy;
        if !(0..h).contains(&sr) {
            continue;
        }
        for c in 0..w {
            let sc = c - dx;
            if (0..w).contains(&sc) {
                out[(r * w + c) as usize] = img.pixels[(sr * w + sc) as usize];
            }
        }
    }
    ScaleImage { pixels: out, ..img.clone() }
}

pub fn hflip(img: &ScaleImage) -> ScaleImage {
    let w = img.width;
    let pixels = (0..img.pixels.len()).map(|i| img.pixels[(i / w) * w + (w - 1 - i % w)]).collect();
    ScaleImage { pixels, ..img.clone() }
}

/// Clockwise quarter turn. Height and width swap.
pub fn rot90(img: &ScaleImage) -> ScaleImage {
    let (h, w) = (img.height, img.width);
    let mut pixels = vec![0.0f32; h * w];
    // out has w rows, h cols: out[r][c] = in[h-1-c][r]
    for r in 0..w {
        for c in 0..h {
            pixels[r * h + c] = img.pixels[(h - 1 - c) * w + r];
        }
    }
    ScaleImage { height: w, width: h, pixels, ..img.clone() }
}

/// Horizontal shear about the centre row: `out(y, x) = in(y, x + factor·(y − cy))`,
/// linear interpolation along x, zero outside.
pub fn shear_image(img: &ScaleImage, factor: f64) -> ScaleImage {
    let (h, w) = (img.height, img.width);
    let cy = (h as f64 - 1.0) / 2.0;
    let mut pixels = vec![0.0f32; h * w];
    for r in 0..h {
        let off = factor * (r as f64 - cy);
        for c in 0..w {
            let x = c as f64 + off;
            let x0 = x.floor();
            let fx = x - x0;
            let sample = |xi: f64| -> f64 {
                if xi < 0.0 || xi > (w - 1) as f64 {
                    0.0
                } else {
                    img.pixels[r * w + xi as usize] as f64
                }
            };
            let v = sample(x0) * (1.0 - fx) + if fx > 0.0 { sample(x0 + 1.0) * fx } else { 0.0 };
            pixels[r * w + c] = v as f32;
        }
    }
    ScaleImage { pixels, ..img.clone() }
}

/// Random geometric edit. Shift, quarter turn, horizontal flip and shear are
/// each applied with independent probability 1/2 when the policy allows them.
/// Quarter turns are skipped for non-square images so the size is preserved.
pub fn augment_image(image: &ScaleImage, policy: &AugmentPolicy, sample_seed: u64) -> ScaleImage {
    let mut rng = seed::rng_from(sample_seed);
    // draw everything up front so the stream does not depend on the policy
    let do_shift = rng.random_bool(0.5);
    let sy: f64 = rng.random_range(-1.0..=1.0);
    let sx: f64 = rng.random_range(-1.0..=1.0);
    let do_rot = rng.random_bool(0.5);
    let do_flip = rng.random_bool(0.5);
    let do_shear = rng.random_bool(0.5);
    let sh: f64 = rng.random_range(-1.0..=1.0);

    let mut out = image.clone();
    let max_dy = (policy.max_shift_frac * image.height as f64).floor();
    let max_dx = (policy.max_shift_frac * image.width as f64).floor();
    if do_shift && (max_dy > 0.0 || max_dx > 0.0) {
        out = shift_image(&out, (sy * max_dy).round() as isize, (sx * max_dx).round() as isize);
    }
    if do_rot && policy.allow_rot90 && out.height == out.width {
        out = rot90(&out);
    }
    if do_flip && policy.allow_hflip {
        out = hflip(&out);
    }
    if do_shear && policy.max_shear_frac > 0.0 {
        out = shear_image(&out, sh * policy.max_shear_frac);
    }
    for p in &mut out.pixels {
        *p = p.clamp(0.0, 1.0);
    }
    out
}

/// Stratified shuffle split. Each class contributes `round(n·train_frac)`
/// items to the training side, clamped so both sides get at least one.
pub fn shuffle_split(dataset: &LabeledDataset, train_frac: f64, split_seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::param("train_frac", format!("must lie strictly between 0 and 1, got {train_frac}")));
    }
    let mut by_class: BTreeMap<MixtureLabel, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.items.iter().enumerate() {
        by_class.entry(s.label()).or_default().push(i);
    }
    if let Some((c, v)) = by_class.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::param("dataset", format!("class {c} has {} item(s); a split needs at least 2", v.len())));
    }
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (c, mut idx) in by_class {
        let mut rng = seed::derived_rng(split_seed, stream::SPLIT, c.code() as u64);
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((n as f64 * train_frac).round() as usize).clamp(1, n - 1);
        train_idx.extend_from_slice(&idx[..n_train]);
        val_idx.extend_from_slice(&idx[n_train..]);
    }
    let mut rng = seed::derived_rng(split_seed, stream::SPLIT, u64::MAX);
    train_idx.shuffle(&mut rng);
    val_idx.shuffle(&mut rng);
    let pick = |idx: &[usize]| LabeledDataset { items: idx.iter().map(|&i| dataset.items[i].clone()).collect() };
    Ok((pick(&train_idx), pick(&val_idx)))
}
