use std::fs;
use std::io::Write;
use std::path::PathBuf;

use aby3_core::driver::{mean_rounds, simulate_training};
use aby3_core::evaluation::synthetic;
use aby3_core::{SimOptions, TrainConfig};
use clap::Args;

#[derive(Args)]
pub struct BenchArgs {
    /// Feature counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "64,1024,4096,16384")]
    pub features: Vec<usize>,
    /// Batch sizes to sweep.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
    pub batch: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    /// Write the grid as CSV here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub features: usize,
    pub batch: usize,
    pub iters: usize,
    pub secs: f64,
    pub rounds_per_iter: f64,
    pub bytes_per_iter: f64,
}

impl BenchRow {
    fn it_per_sec(&self) -> f64 {
        if self.secs > 0.0 {
            self.iters as f64 / self.secs
        } else {
            f64::INFINITY
        }
    }
}

pub fn measure(features: usize, batch: usize, iters: usize) -> super::Result<BenchRow> {
    let d = synthetic::separable(batch, features, features as u64 ^ batch as u64);
    let cfg = TrainConfig {
        batch_size: batch,
        iterations: iters,
        class_weighting: false,
        ..TrainConfig::default()
    };
    let run = simulate_training(std::slice::from_ref(&d), &cfg, &SimOptions::default())?;
    let steps = run.rounds_per_step.len().max(1) as f64;
    // the training loop without the final reveal
    let all_parties: u64 = run.train_stats.iter().map(|s| s.total_bytes_sent()).sum();
    Ok(BenchRow {
        features,
        batch,
        iters,
        secs: run.train_time.as_secs_f64(),
        rounds_per_iter: mean_rounds(&run.rounds_per_step),
        bytes_per_iter: all_parties as f64 / steps,
    })
}

pub fn run(args: &BenchArgs) -> super::Result<()> {
    let mut out: Box<dyn Write> = match &args.csv {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    writeln!(
        out,
        "features,batch,iters,secs,it_per_sec,rounds_per_iter,bytes_per_iter"
    )?;
    for &f in &args.features {
        for &b in &args.batch {
            let r = measure(f, b, args.iters)?;
            writeln!(
                out,
                "{},{},{},{:.6},{:.3},{},{}",
                r.features,
                r.batch,
                r.iters,
                r.secs,
                r.it_per_sec(),
                r.rounds_per_iter,
                r.bytes_per_iter
            )?;
            out.flush()?;
            if args.csv.is_some() {
                eprintln!("f={f} b={b}: {:.2} it/s", r.it_per_sec());
            }
        }
    }
    Ok(())
}
