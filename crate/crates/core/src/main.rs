use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use brushdiff::condition::{compile_conditions, io, strokes::load_strokes, ExtractorRegistry, GRADIENT_EXTRACTOR_ID};
use brushdiff::dataset::{build_corpus, CorpusConfig, Inpainter, MeanFill, ToyDiffusionInpainter};
use brushdiff::diffusion::probe::edge_probe;
use brushdiff::diffusion::train::{window_mean, TrainConfig, Trainer};
use brushdiff::diffusion::{load_checkpoint, sample, save_checkpoint, Checkpoint, TokenCondition};
use brushdiff::eval::evaluate_dirs;
use brushdiff::image::Image;
use brushdiff::service::{serve, ServiceConfig};

#[derive(Parser)]
#[command(name = "brushdiff", version, about = "Brushstroke-driven image editing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InpainterArg {
    #[value(name = "toy_diffusion")]
    ToyDiffusion,
    #[value(name = "mean_fill")]
    MeanFill,
}

#[derive(Subcommand)]
enum Command {
    /// Compile strokes into a condition bundle directory.
    Compile {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        strokes: PathBuf,
        #[arg(long, default_value_t = 15)]
        grow: u32,
        #[arg(long, default_value = GRADIENT_EXTRACTOR_ID)]
        extractor: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy denoiser on synthetic shapes and write a checkpoint.
    Train {
        /// TOML training config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Samples in the edge-alignment probe run after training (0 skips it).
        #[arg(long, default_value_t = 0)]
        probe: usize,
    },
    /// Generate an edit for a bundle with a trained checkpoint.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "")]
        prompt: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        w_inpaint: Option<f64>,
        #[arg(long)]
        w_control: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build intent-prediction records from an annotated corpus.
    Datagen {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "mean_fill")]
        inpainter: InpainterArg,
        /// Checkpoint for the toy_diffusion inpainter.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
    },
    /// Score predictions against references.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        bundles: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the editing service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Compile {
            image,
            strokes,
            grow,
            extractor,
            out,
        } => {
            let img = Image::load_png(&image).with_context(|| format!("reading {}", image.display()))?;
            let strokes = load_strokes(&strokes)?;
            let extractor = ExtractorRegistry::with_defaults().resolve(&extractor)?;
            let bundle = compile_conditions(&img, &strokes, grow, extractor.as_ref())?;
            io::save_bundle(&bundle, &out)?;
            println!("wrote bundle to {} ({} mask pixels)", out.display(), bundle.mask.count());
        }
        Command::Train { config, out, probe } => {
            let config = match config {
                Some(p) => TrainConfig::load(&p)?,
                None => TrainConfig::default(),
            };
            let mut trainer = Trainer::new(config.clone())?;
            let report = trainer.run(|phase, step, loss| {
                if step % 100 == 0 {
                    tracing::info!("{} step {step}: loss {loss:.4}", phase.name());
                }
            })?;
            let ck = Checkpoint {
                model: trainer.model.clone(),
                codec: trainer.codec.clone(),
                schedule: config.schedule.clone(),
            };
            save_checkpoint(&ck, &out)?;
            std::fs::write(out.join("train_config.toml"), config.to_toml())?;
            for p in &report.phases {
                let n = p.losses.len();
                if n >= 100 {
                    println!(
                        "{}: {n} steps, mean loss first 50 {:.4}, last 50 {:.4}",
                        p.phase.name(),
                        window_mean(&p.losses, 1, 50),
                        window_mean(&p.losses, n - 49, n)
                    );
                }
            }
            std::fs::write(out.join("losses.json"), serde_json::to_string(&report)?)?;
            if probe > 0 {
                let r = edge_probe(&ck.model, &ck.codec, &ck.schedule, &config.shapes, config.grow, probe, 4242)?;
                println!(
                    "edge probe ({} samples): conditioned {:.3}, w_C=0 {:.3}, gain {:.3}",
                    r.samples,
                    r.conditioned,
                    r.unconditioned,
                    r.gain()
                );
                std::fs::write(out.join("probe.json"), serde_json::to_string_pretty(&r)?)?;
            }
            println!("wrote checkpoint to {}", out.display());
        }
        Command::Sample {
            ckpt,
            bundle,
            prompt,
            seed,
            w_inpaint,
            w_control,
            out,
        } => {
            let ck = load_checkpoint(&ckpt)?;
            let bundle = io::load_bundle(&bundle)?;
            let mut model = ck.model.clone();
            model.w_inpaint = w_inpaint.unwrap_or(model.w_inpaint);
            model.w_control = w_control.unwrap_or(model.w_control);
            let tokens = TokenCondition::from_prompt(&prompt);
            let img = sample(
                &model,
                &ck.codec,
                &bundle,
                &tokens,
                &ck.schedule,
                &mut ChaCha8Rng::seed_from_u64(seed),
            )?;
            img.save_png(&out)?;
            println!("wrote {}", out.display());
        }
        Command::Datagen {
            corpus,
            out,
            seed,
            inpainter,
            ckpt,
            top_k,
        } => {
            let inpainter: Box<dyn Inpainter> = match inpainter {
                InpainterArg::MeanFill => Box::new(MeanFill),
                InpainterArg::ToyDiffusion => {
                    let Some(dir) = ckpt else { bail!("--inpainter toy_diffusion needs --ckpt") };
                    Box::new(ToyDiffusionInpainter::new(load_checkpoint(&dir)?))
                }
            };
            let summary = build_corpus(&corpus, &out, &CorpusConfig { seed, top_k }, inpainter.as_ref())?;
            println!(
                "{} images, {} records, {} distinct labels, {} skipped entries",
                summary.images,
                summary.records,
                summary.distinct_labels,
                summary.skipped_entries.len()
            );
        }
        Command::Eval {
            pred,
            reference,
            bundles,
            report,
        } => {
            let r = evaluate_dirs(&pred, &reference, bundles.as_deref())?;
            std::fs::write(&report, serde_json::to_string_pretty(&r)?)?;
            println!("{} images, mean psnr {:.3}, mean ssim {:.4}", r.count, r.mean_psnr, r.mean_ssim);
        }
        Command::Serve { config, listen } => {
            let mut config = ServiceConfig::from_file_and_env(config.as_deref())?;
            if let Some(addr) = listen {
                config.listen = addr;
            }
            tokio::runtime::Runtime::new()?.block_on(serve(config))?;
        }
    }
    Ok(())
}
