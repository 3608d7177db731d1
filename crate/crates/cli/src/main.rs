use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tmae::harness::corpus::{load_corpus, load_pnm, save_pnm};
use tmae::harness::select::select_config_for_budget;
use tmae::harness::sweep::{rd_sweep, read_csv, write_csv, write_plot_files, SweepGrid, MEAN_ID};
use tmae::harness::synth::synthetic_corpus;
use tmae::harness::train::{train, TrainConfig};
use tmae::metrics::MetricReport;
use tmae::{compress, CodecParams, Container, Error, Image, PipelineConfig, Result, Tmae, TmaeConfig};

#[derive(Parser)]
#[command(name = "tmae", version, about = "Masked-patch image compression with a transformer masked autoencoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Codec {
    Dct,
    Raw,
}

#[derive(Subcommand)]
enum Command {
    /// Mask, stack and code a PPM/PGM image into a container.
    Compress {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        mask_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        quality: u8,
        #[arg(long, default_value_t = 8)]
        patch_size: usize,
        #[arg(long, value_enum, default_value_t = Codec::Dct)]
        codec: Codec,
    },
    /// Decode a container and fill the withheld patches with a trained model.
    Decompress {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Original image, to report SSIM/PSNR of the reconstruction.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Train a model on a directory of PPM/PGM images.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 64)]
        crop_size: usize,
        #[arg(long, default_value_t = 8)]
        patch_size: usize,
    },
    /// Rate-distortion sweep over masking ratio × codec quality.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.6, 0.67, 0.75, 0.8])]
        ratios: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 30, 40, 50, 60, 70, 80, 90])]
        qualities: Vec<u8>,
        #[arg(long)]
        csv_out: PathBuf,
        /// Directory for gnuplot data files (one curve per ratio plus the Pareto front).
        #[arg(long)]
        plot_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pick the best calibrated (ratio, quality) that fits a bit budget.
    Budget {
        #[arg(long)]
        bits: u64,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        /// Sweep CSV; corpus-mean rows are used when present.
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long, default_value_t = 8)]
        patch_size: usize,
    },
    /// Write a procedural toy corpus as PPM files.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_dataset(dir: &PathBuf) -> Result<Vec<(String, Image)>> {
    let corpus = load_corpus(dir)?;
    if corpus.is_empty() {
        return Err(Error::File { path: dir.clone(), reason: "no readable PPM/PGM images".into() });
    }
    Ok(corpus.images)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Compress { input, output, mask_ratio, seed, quality, patch_size, codec } => {
            let img = load_pnm(&input)?;
            let codec = match codec {
                Codec::Dct => CodecParams::dct(quality)?,
                Codec::Raw => CodecParams::raw(),
            };
            let container = compress(&img, &PipelineConfig { patch_size, mask_ratio, seed, codec })?;
            std::fs::write(&output, container.to_bytes())?;
            let rate = container.rate();
            println!(
                "{} bytes, {:.4} bpp overall, {:.4} bpp payload, {} of {} patches sent",
                container.total_len(),
                rate.overall_bpp(),
                rate.payload_bpp(),
                container.header.keep_count,
                container.header.n_patches
            );
        }
        Command::Decompress { input, output, model, reference } => {
            let model = Tmae::load(&model)?;
            let bytes = std::fs::read(&input)?;
            let container = Container::from_bytes(&bytes)?;
            let img = tmae::decompress(&container, &model)?;
            save_pnm(&img, &output)?;
            if let Some(reference) = reference {
                let r = MetricReport::compare(&load_pnm(&reference)?, &img, container.rate().overall_bpp())?;
                println!("ssim {:.6}, psnr {:.4} dB, {:.4} bpp", r.ssim, r.psnr, r.bpp);
            }
        }
        Command::Train { dataset, out, seed, epochs, batch_size, learning_rate, crop_size, patch_size } => {
            let images: Vec<Image> = load_dataset(&dataset)?.into_iter().map(|(_, img)| img).collect();
            let channels = images[0].channels();
            let model_config = TmaeConfig { patch_size, channels, ..TmaeConfig::default() };
            let cfg = TrainConfig { epochs, batch_size, learning_rate, crop_size, seed, ..TrainConfig::default() };
            let (model, log) = train(&images, model_config, &cfg)?;
            model.save(&out)?;
            println!(
                "initial loss {:.6}, final epoch loss {:.6}, {} parameters",
                log.initial_loss,
                log.epoch_losses.last().copied().unwrap_or(f64::NAN),
                model.parameter_count()
            );
        }
        Command::Sweep { dataset, model, ratios, qualities, csv_out, plot_dir, seed } => {
            let corpus = load_dataset(&dataset)?;
            let model = Tmae::load(&model)?;
            let result = rd_sweep(&corpus, &SweepGrid { ratios, qualities, seed }, &model)?;
            write_csv(&result.points, std::fs::File::create(&csv_out)?)?;
            if let Some(dir) = plot_dir {
                write_plot_files(dir, &result)?;
            }
            for f in &result.failures {
                eprintln!("cell {} r={} q={} failed: {}", f.image_id, f.mask_ratio, f.quality, f.reason);
            }
            println!("{} points written to {}", result.points.len(), csv_out.display());
        }
        Command::Budget { bits, width, height, calibration, patch_size } => {
            let points = read_csv(&calibration)?;
            let means: Vec<_> = points.iter().filter(|p| p.image_id == MEAN_ID).cloned().collect();
            let cal = if means.is_empty() { points } else { means };
            let template = PipelineConfig { patch_size, mask_ratio: 0.5, seed: 0, codec: CodecParams::dct(50)? };
            let cfg = select_config_for_budget(bits, width, height, &cal, &template)?;
            println!("mask_ratio {} quality {}", cfg.mask_ratio, cfg.codec.quality);
        }
        Command::Synth { out, count, width, height, seed } => {
            std::fs::create_dir_all(&out)?;
            for (id, img) in synthetic_corpus(seed, count, width, height) {
                save_pnm(&img, out.join(format!("{id}.ppm")))?;
            }
            println!("{count} images written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
