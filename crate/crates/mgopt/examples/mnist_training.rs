//! Full multilevel training on MNIST IDX files.
//!
//! Expects the four standard files (`train-images-idx3-ubyte`,
//! `train-labels-idx1-ubyte`, `t10k-images-idx3-ubyte`,
//! `t10k-labels-idx1-ubyte`) in one directory:
//!
//! ```bash
//! cargo run --release --example mnist_training -- --data-dir data/mnist
//! ```
//!
//! Optional: `--depth N` (default 512), `--preset NAME` (default light-4),
//! `--cycles N` (default 60).

use mgopt::experiment::{preset, run_training_on, DatasetConfig, RunConfig};
use std::path::PathBuf;

fn arg_value(name: &str) -> Option<String> {
    let args: Vec<String> = std::env::args().collect();
    args.iter()
        .position(|a| a == name)
        .and_then(|i| args.get(i + 1).cloned())
}

fn main() {
    let data_dir = PathBuf::from(arg_value("--data-dir").unwrap_or_else(|| "data/mnist".into()));
    let depth: usize = arg_value("--depth").map_or(512, |v| v.parse().expect("--depth N"));
    let preset_name = arg_value("--preset").unwrap_or_else(|| "light-4".into());
    let cycles: usize = arg_value("--cycles").map_or(60, |v| v.parse().expect("--cycles N"));

    let cfg = RunConfig {
        dataset: DatasetConfig::Mnist { data_dir },
        fine_depth: depth,
        cycles,
        seeds: vec![1],
        eval_every: 5,
        ..preset(&preset_name).expect("known preset")
    };

    let (train, test) = match cfg.dataset.load() {
        Ok(pair) => pair,
        Err(err) => {
            eprintln!("could not load MNIST: {err}");
            eprintln!("fetch the IDX files and pass their directory with --data-dir");
            std::process::exit(1);
        }
    };
    println!("{train}\n{test}");
    println!(
        "preset {preset_name}: {} levels at depth {depth}, {cycles} cycles\n",
        cfg.num_levels
    );

    let output = run_training_on(&cfg, &train, &test).expect("training succeeds");
    let seed_run = &output.seeds[0];

    println!(
        "{:>6} {:>12} {:>10} {:>16}",
        "cycle", "batch loss", "test acc", "work (gevals)"
    );
    for record in &seed_run.records {
        if let Some(acc) = record.test_accuracy {
            println!(
                "{:>6} {:>12.4} {:>10.4} {:>16}",
                record.cycle, record.train_batch_loss, acc, record.scaled_grad_evals
            );
        }
    }

    println!("\nper-level auxiliary networks:");
    for level in seed_run.auxiliary.levels.iter().rev() {
        println!(
            "  level {} (depth {:>4}): accuracy {:.4}",
            level.level, level.depth, level.test_accuracy
        );
    }
}
