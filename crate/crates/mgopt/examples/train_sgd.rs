//! Trains the single-level SGD baseline on synthetic data and prints the
//! loss/accuracy curve.
//!
//! ```bash
//! cargo run --release --example train_sgd
//! ```

use mgopt::experiment::{run_training, DatasetConfig, RunConfig};

fn main() {
    let cfg = RunConfig {
        run_id: Some("sgd-demo".into()),
        dataset: DatasetConfig::Synthetic {
            seed: 11,
            train_samples: 4000,
            test_samples: 1000,
            num_features: 20,
            num_classes: 10,
            noise: 0.35,
        },
        fine_depth: 64,
        num_levels: 1,
        smoothing: vec![(1, 0)],
        width: 10,
        batch_size: 200,
        cycles: 100,
        seeds: vec![1],
        eval_every: 10,
        ..RunConfig::default()
    };

    let output = run_training(&cfg).expect("training succeeds");
    let seed_run = &output.seeds[0];

    println!(
        "single-level SGD, depth {}, lr {}\n",
        cfg.fine_depth, cfg.learning_rate
    );
    println!(
        "{:>6} {:>12} {:>10} {:>14}",
        "cycle", "batch loss", "test acc", "grad evals"
    );
    for record in &seed_run.records {
        if let Some(acc) = record.test_accuracy {
            println!(
                "{:>6} {:>12.4} {:>10.4} {:>14}",
                record.cycle, record.train_batch_loss, acc, record.scaled_grad_evals
            );
        }
    }
    println!(
        "\nfinal accuracy {:.4}, best {:.4}",
        seed_run.final_test_accuracy, seed_run.best_test_accuracy
    );
}
