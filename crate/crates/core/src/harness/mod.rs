//! End-to-end experiment pipeline behind the `ramix` CLI.
//!
//! `gen` simulates raw spectra, balances and augments them into a scale-image
//! dataset and writes a separate test set; `train` splits, fits and saves a
//! checkpoint; `eval` scores a dataset; `bench` times transform + inference;
//! `transform` renders one spectrum as a PGM image.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{ClassSpec, PipelineConfig, RawVariation, SpectrumSet, DEFAULT_RAW_COUNTS};

use crate::augment::{oversample_to, shuffle_split, LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::mdnn::{self, Model, Prediction, TrainReport};
use crate::metrics::{EvalBatch, MetricsReport};
use crate::seed::{self, stream};
use crate::spectrum::{self, MixtureLabel, NoiseSpec, RamanSpectrum};
use crate::tensor_file::{write_tensor, TensorFile};
use crate::tf::{export_pgm, ImagePipeline, ScaleImage};

pub const CHECKPOINT_FILE: &str = "model.mdnn";

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// One simulated acquisition of a mixture: jittered weights, a random
/// fluorescence background and white noise at an SNR drawn from `snr_range`.
pub fn simulate_spectrum(cfg: &PipelineConfig, label: MixtureLabel, rng: &mut ChaCha8Rng, snr_range: (f64, f64)) -> Result<RamanSpectrum> {
    let mut components = Vec::new();
    for bit in 0..MixtureLabel::N_BITS {
        if label.is_set(bit) {
            let profile = cfg.substance_for_bit(bit).ok_or_else(|| Error::Config(format!("no substance owns label bit {bit}")))?;
            let jitter = cfg.raw.weight_jitter;
            let scale = if jitter > 0.0 { 1.0 + rng.random_range(-jitter..=jitter) } else { 1.0 };
            components.push((profile, cfg.mixture_weights[bit] * scale));
        }
    }
    let clean = spectrum::synth_mixture(&components, &cfg.axis)?;
    let peak = clean.intensity.iter().cloned().fold(0.0, f64::max);
    let amplitude = peak * uniform(rng, cfg.raw.fluorescence_amplitude);
    let center = rng.random_range(cfg.axis.start_cm1..=cfg.axis.end_cm1);
    let width = cfg.axis.span() * uniform(rng, cfg.raw.fluorescence_width_frac);
    let background = spectrum::add_fluorescence(&clean, amplitude, center, width)?;
    let snr_db = uniform(rng, snr_range);
    spectrum::add_noise_snr(&background, NoiseSpec { snr_db, seed: rng.random() })
}

/// Raw spectra for every configured class, class by class.
pub fn generate_raw(cfg: &PipelineConfig) -> Result<Vec<RamanSpectrum>> {
    let jobs: Vec<(MixtureLabel, usize)> = cfg.classes.iter().flat_map(|c| (0..c.raw_count).map(move |i| (c.label, i))).collect();
    jobs.par_iter()
        .map(|&(label, i)| {
            let mut rng = seed::derived_rng(cfg.seed, stream::RAW_SPECTRA, ((label.code() as u64) << 32) | i as u64);
            simulate_spectrum(cfg, label, &mut rng, cfg.raw.snr_db)
        })
        .collect()
}

/// `size` fresh spectra cycling through the classes, drawn from `stream_tag`.
pub fn generate_spectra(cfg: &PipelineConfig, set: &SpectrumSet, stream_tag: u64) -> Result<Vec<RamanSpectrum>> {
    let classes = cfg.class_labels();
    (0..set.size)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::derived_rng(cfg.seed, stream_tag, k as u64);
            simulate_spectrum(cfg, classes[k % classes.len()], &mut rng, set.snr_db)
        })
        .collect()
}

/// Un-augmented test images from [`PipelineConfig::test_set`].
pub fn generate_test_set(cfg: &PipelineConfig, pipeline: &ImagePipeline) -> Result<LabeledDataset> {
    let spectra = generate_spectra(cfg, &cfg.test_set, stream::TEST_SET)?;
    let items = spectra
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let image = pipeline.image(&s.intensity, s.label)?;
            Ok(Sample { provenance: format!("{}/test/{k}", image.source_kind.as_str()), image })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(items)
}

pub fn image_pipeline(cfg: &PipelineConfig) -> Result<ImagePipeline> {
    ImagePipeline::new(cfg.transform.clone(), cfg.axis.n_points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub raw_spectra: usize,
    pub class_counts: BTreeMap<MixtureLabel, usize>,
    pub dataset_items: usize,
    pub test_items: usize,
}

/// Writes `raw/*.csv`, the balanced dataset (`manifest.csv` + `images/`),
/// `test/` and the resolved `config.json` under `out`. Everything is computed
/// before the first file is written.
pub fn cmd_gen(cfg: &PipelineConfig, out: impl AsRef<Path>) -> Result<GenSummary> {
    cfg.validate()?;
    let out = out.as_ref();
    let pipeline = image_pipeline(cfg)?;
    let raw = generate_raw(cfg)?;
    let dataset = oversample_to(&raw, &cfg.class_labels(), cfg.target_per_class, &cfg.augment, &pipeline)?;
    let test = if cfg.test_set.size > 0 { Some(generate_test_set(cfg, &pipeline)?) } else { None };

    let raw_dir = out.join("raw");
    fs::create_dir_all(&raw_dir)?;
    let mut per_class: BTreeMap<MixtureLabel, usize> = BTreeMap::new();
    for s in &raw {
        let k = per_class.entry(s.label).or_insert(0);
        let f = fs::File::create(raw_dir.join(format!("{}_{:03}.csv", s.label, k)))?;
        s.write_csv(BufWriter::new(f))?;
        *k += 1;
    }
    fs::write(out.join("config.json"), cfg.to_json()?)?;
    if let Some(test) = &test {
        test.save(out.join("test"))?;
    }
    dataset.save(out)?;
    Ok(GenSummary {
        raw_spectra: raw.len(),
        class_counts: dataset.class_counts(),
        dataset_items: dataset.len(),
        test_items: test.map_or(0, |t| t.len()),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub train_counts: BTreeMap<MixtureLabel, usize>,
    pub val_counts: BTreeMap<MixtureLabel, usize>,
    pub val_metrics: MetricsReport,
    pub checkpoint: PathBuf,
}

/// Stratified split, training and checkpointing. Writes `model.mdnn`,
/// `train_report.csv`, `train_summary.csv` and `val_metrics.csv` into `out`.
pub fn cmd_train(cfg: &PipelineConfig, dataset_dir: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dataset = LabeledDataset::load(dataset_dir)?;
    if dataset.is_empty() {
        return Err(Error::param("dataset", "dataset is empty"));
    }
    let (train, val) = shuffle_split(&dataset, cfg.train_frac, seed::derive_seed(cfg.seed, stream::SPLIT, 0))?;
    let mut model = mdnn::build_model(&cfg.model, cfg.seed)?;
    let report = mdnn::fit(&mut model, &train, &val, &cfg.train)?;
    let val_metrics = evaluate(&model, &val, cfg.threshold)?;

    let out = out.as_ref();
    fs::create_dir_all(out)?;
    let checkpoint = out.join(CHECKPOINT_FILE);
    mdnn::save_checkpoint(&model, &checkpoint)?;
    report.write_csv(out.join("train_report.csv"))?;
    report.write_summary_csv(out.join("train_summary.csv"))?;
    val_metrics.write_csv(BufWriter::new(fs::File::create(out.join("val_metrics.csv"))?))?;
    Ok(TrainOutcome { report, train_counts: train.class_counts(), val_counts: val.class_counts(), val_metrics, checkpoint })
}

/// Scores every image and computes the full metric set.
pub fn evaluate(model: &Model, data: &LabeledDataset, threshold: f64) -> Result<MetricsReport> {
    let q = model.config().n_labels;
    if q != MixtureLabel::N_BITS {
        return Err(Error::shape(format!("{} output labels", MixtureLabel::N_BITS), format!("{q}")));
    }
    if data.is_empty() {
        return Err(Error::param("dataset", "nothing to evaluate"));
    }
    let images: Vec<&ScaleImage> = data.items().iter().map(|s| &s.image).collect();
    let scores: Vec<f64> = mdnn::score_images(model, &images)?.into_iter().flatten().collect();
    let truths: Vec<bool> = data.items().iter().flat_map(|s| s.label().bits()).collect();
    let batch = EvalBatch::from_scores(data.len(), q, scores, truths, threshold)?;
    Ok(MetricsReport::compute(&batch))
}

/// Writes `metrics.csv` and one `roc_label_<j>.csv` per label with a defined curve.
pub fn write_metrics(report: &MetricsReport, out: impl AsRef<Path>) -> Result<()> {
    let out = out.as_ref();
    fs::create_dir_all(out)?;
    let mut f = BufWriter::new(fs::File::create(out.join("metrics.csv"))?);
    report.write_csv(&mut f)?;
    f.flush()?;
    for curve in report.roc.iter().flatten() {
        let mut f = BufWriter::new(fs::File::create(out.join(format!("roc_label_{}.csv", curve.label)))?);
        curve.write_csv(&mut f)?;
        f.flush()?;
    }
    Ok(())
}

pub fn cmd_eval(checkpoint: impl AsRef<Path>, test_dir: impl AsRef<Path>, threshold: f64, out: impl AsRef<Path>) -> Result<MetricsReport> {
    if !threshold.is_finite() {
        return Err(Error::param("threshold", "must be finite"));
    }
    let model = mdnn::load_checkpoint(checkpoint)?;
    let data = LabeledDataset::load(test_dir)?;
    let report = evaluate(&model, &data, threshold)?;
    write_metrics(&report, out)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchResult {
    pub n_spectra: usize,
    pub wall_time_s: f64,
    pub per_spectrum_ms: f64,
    pub model_file_bytes: u64,
}

impl BenchResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "metric,value")?;
        writeln!(w, "n_spectra,{}", self.n_spectra)?;
        writeln!(w, "wall_time_s,{}", self.wall_time_s)?;
        writeln!(w, "per_spectrum_ms,{}", self.per_spectrum_ms)?;
        writeln!(w, "model_file_bytes,{}", self.model_file_bytes)?;
        Ok(())
    }
}

const BENCH_WARMUP: usize = 3;

/// Simulates `cfg.bench.size` spectra up front, then times transform plus
/// inference for each of them one at a time, after three untimed warm-ups.
pub fn cmd_bench(cfg: &PipelineConfig, checkpoint: impl AsRef<Path>) -> Result<BenchResult> {
    cfg.validate()?;
    if cfg.bench.size == 0 {
        return Err(Error::param("bench.size", "need at least one spectrum"));
    }
    let checkpoint = checkpoint.as_ref();
    let model_file_bytes = fs::metadata(checkpoint)?.len();
    let model = mdnn::load_checkpoint(checkpoint)?;
    let pipeline = image_pipeline(cfg)?;
    if (cfg.transform.height, cfg.transform.width) != model.config().input_hw {
        return Err(Error::shape(
            format!("{:?} model input", model.config().input_hw),
            format!("{}x{} images", cfg.transform.height, cfg.transform.width),
        ));
    }
    let spectra = generate_spectra(cfg, &cfg.bench, stream::BENCH)?;
    let detect = |s: &RamanSpectrum| -> Result<Prediction> {
        let image = pipeline.image(&s.intensity, s.label)?;
        mdnn::predict_labels(&model, &image, cfg.threshold)
    };
    for s in spectra.iter().cycle().take(BENCH_WARMUP) {
        std::hint::black_box(detect(s)?);
    }
    let start = Instant::now();
    for s in &spectra {
        std::hint::black_box(detect(s)?);
    }
    let wall_time_s = start.elapsed().as_secs_f64();
    Ok(BenchResult {
        n_spectra: spectra.len(),
        wall_time_s,
        per_spectrum_ms: 1000.0 * wall_time_s / spectra.len() as f64,
        model_file_bytes,
    })
}

/// Renders one spectrum CSV as a PGM image; also returns the image.
pub fn cmd_transform(cfg: &PipelineConfig, spectrum_csv: impl AsRef<Path>, out_pgm: impl AsRef<Path>) -> Result<ScaleImage> {
    let path = spectrum_csv.as_ref();
    let s = RamanSpectrum::read_csv(BufReader::new(fs::File::open(path)?))?;
    let pipeline = ImagePipeline::new(cfg.transform.clone(), s.intensity.len())?;
    let image = pipeline.image(&s.intensity, s.label)?;
    let out_pgm = out_pgm.as_ref();
    if let Some(parent) = out_pgm.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out_pgm, export_pgm(&image))?;
    write_tensor(out_pgm.with_extension("mdnt"), &TensorFile::new(vec![image.height, image.width], image.pixels.clone())?)?;
    Ok(image)
}
