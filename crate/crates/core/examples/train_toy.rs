//! Trains the dual-branch denoiser on synthetic colored shapes (base, then
//! inpaint branch, then control branch), saves a checkpoint and runs the
//! edge-alignment probe.
//!
//! ```sh
//! cargo run --release --example train_toy -- /tmp/toy_ckpt          # default schedule, a few minutes
//! cargo run --release --example train_toy -- /tmp/toy_ckpt --quick  # smoke run
//! ```

use std::path::PathBuf;

use brushdiff::diffusion::probe::edge_probe;
use brushdiff::diffusion::train::{window_mean, Phase, TrainConfig, Trainer};
use brushdiff::diffusion::{save_checkpoint, Checkpoint};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args
        .iter()
        .find(|a| !a.starts_with("--"))
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("toy_ckpt"));
    let quick = args.iter().any(|a| a == "--quick");

    let mut config = TrainConfig::default();
    if quick {
        config.base_steps = 100;
        config.inpaint_steps = 50;
        config.control_steps = 100;
    }
    println!("{}", config.to_toml());

    let start = std::time::Instant::now();
    let mut trainer = Trainer::new(config.clone())?;
    let report = trainer.run(|phase, step, loss| {
        if step % 200 == 0 {
            println!("[{:>6.1}s] {:<8} step {step:>5}  loss {loss:.4}", start.elapsed().as_secs_f64(), phase.name());
        }
    })?;
    for p in &report.phases {
        let n = p.losses.len();
        let k = 50.min(n);
        println!(
            "{:<8} first {k}: {:.4}  last {k}: {:.4}",
            p.phase.name(),
            window_mean(&p.losses, 1, k),
            window_mean(&p.losses, n - k + 1, n)
        );
    }
    let base = report.phases.iter().find(|p| p.phase == Phase::Base).expect("base phase");
    if base.losses.len() >= 500 {
        let ratio = window_mean(&base.losses, 451, 500) / window_mean(&base.losses, 1, 50);
        println!("loss ratio steps 451-500 / 1-50: {ratio:.3}");
    }

    let ck = Checkpoint {
        model: trainer.model.clone(),
        codec: trainer.codec.clone(),
        schedule: config.schedule.clone(),
    };
    save_checkpoint(&ck, &out)?;
    println!("checkpoint: {}", out.display());

    let probe = edge_probe(&ck.model, &ck.codec, &ck.schedule, &config.shapes, config.grow, 20, 4242)?;
    println!(
        "edge alignment: w_C={:.1} {:.3}  w_C=0 {:.3}  gain {:+.3}",
        probe.w_control,
        probe.conditioned,
        probe.unconditioned,
        probe.gain()
    );
    Ok(())
}
