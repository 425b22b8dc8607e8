use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ramix::harness::{self, PipelineConfig};
use ramix::tf::TransformKind;
use ramix::{Error, Result};

#[derive(Parser)]
#[command(name = "ramix", version, about = "Raman mixture identification from time-frequency scale images")]
struct Cli {
    /// JSON pipeline config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file, for `transform`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Time-frequency transform, overriding the config.
    #[arg(long, global = true, value_parser = ["stft", "wvd", "cwt"])]
    transform: Option<String>,
    /// Decision threshold on label scores, overriding the config.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate raw spectra, build the balanced dataset and a test set.
    Gen,
    /// Split a dataset, train the network and save a checkpoint.
    Train {
        /// Dataset directory written by `gen`.
        dataset: PathBuf,
    },
    /// Score a dataset with a checkpoint and write metrics and ROC curves.
    Eval {
        checkpoint: PathBuf,
        /// Dataset directory, e.g. `<gen out>/test`.
        test: PathBuf,
    },
    /// Time transform + inference over freshly simulated noisy spectra.
    Bench {
        checkpoint: PathBuf,
        /// Number of spectra, overriding the config.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Render one spectrum CSV as a PGM scale image.
    Transform { spectrum: PathBuf },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(t) = &cli.transform {
        cfg.transform.kind = t.parse::<TransformKind>()?;
    }
    if let Some(th) = cli.threshold {
        cfg.threshold = th;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Gen => {
            let out = out_dir(cli, "data");
            let s = harness::cmd_gen(&cfg, &out)?;
            println!("raw spectra: {}", s.raw_spectra);
            for (label, n) in &s.class_counts {
                println!("class {label}: {n}");
            }
            println!("dataset items: {} -> {}", s.dataset_items, out.display());
            println!("test items: {} -> {}", s.test_items, out.join("test").display());
        }
        Command::Train { dataset } => {
            let out = out_dir(cli, "run");
            let o = harness::cmd_train(&cfg, dataset, &out)?;
            for r in &o.report.epochs {
                println!("epoch {:3}  train {:.6}  val {:.6}", r.epoch, r.train_loss, r.val_loss);
            }
            let reason = o.report.stop_reason.map_or("none", |r| r.as_str());
            println!("stop reason: {reason}");
            println!("val hamming loss: {:.6}", o.val_metrics.hamming_loss);
            println!("val average precision: {:.6}", o.val_metrics.average_precision);
            println!("checkpoint: {}", o.checkpoint.display());
        }
        Command::Eval { checkpoint, test } => {
            let out = out_dir(cli, "eval");
            let report = harness::cmd_eval(checkpoint, test, cfg.threshold, &out)?;
            for (k, v) in report.rows() {
                println!("{k}: {v}");
            }
            println!("written to {}", out.display());
        }
        Command::Bench { checkpoint, n } => {
            let mut cfg = cfg;
            if let Some(n) = n {
                cfg.bench.size = *n;
            }
            let r = harness::cmd_bench(&cfg, checkpoint)?;
            println!("spectra: {}", r.n_spectra);
            println!("wall time: {:.4} s", r.wall_time_s);
            println!("per spectrum: {:.4} ms", r.per_spectrum_ms);
            println!("model file: {} bytes", r.model_file_bytes);
            if let Some(out) = &cli.out {
                fs::create_dir_all(out)?;
                r.write_csv(BufWriter::new(fs::File::create(out.join("bench.csv"))?))?;
            }
        }
        Command::Transform { spectrum } => {
            let out = cli.out.clone().unwrap_or_else(|| default_pgm(spectrum));
            let image = harness::cmd_transform(&cfg, spectrum, &out)?;
            println!("{}x{} {} image -> {}", image.height, image.width, image.source_kind.as_str(), out.display());
        }
    }
    Ok(())
}

fn default_pgm(spectrum: &Path) -> PathBuf {
    spectrum.with_extension("pgm")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}

fn report(e: &Error) {
    eprintln!("error ({}): {e}", e.category().as_str());
}
