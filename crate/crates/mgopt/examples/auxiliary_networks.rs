//! After a multilevel run, every level's network is usable for inference on
//! its own: restrict the trained fine parameters down the hierarchy and
//! evaluate each depth. Shallower networks come for free as pruned models.
//!
//! ```bash
//! cargo run --release --example auxiliary_networks
//! ```

use mgopt::experiment::{preset, run_training, DatasetConfig, RunConfig};

fn main() {
    let cfg = RunConfig {
        dataset: DatasetConfig::Synthetic {
            seed: 17,
            train_samples: 4000,
            test_samples: 1000,
            num_features: 20,
            num_classes: 10,
            noise: 0.3,
        },
        fine_depth: 128,
        width: 10,
        batch_size: 200,
        cycles: 120,
        seeds: vec![1],
        eval_every: 0,
        horizon: Some(6.4),
        ..preset("light-8").expect("known preset")
    };

    let output = run_training(&cfg).expect("training succeeds");
    let seed_run = &output.seeds[0];

    println!(
        "8-level run at depth {}, {} cycles; per-level networks on the test set:\n",
        cfg.fine_depth, cfg.cycles
    );
    println!(
        "{:>6} {:>7} {:>10} {:>10} {:>9}",
        "level", "depth", "accuracy", "loss", "params"
    );
    for level in seed_run.auxiliary.levels.iter().rev() {
        println!(
            "{:>6} {:>7} {:>10.4} {:>10.4} {:>9}",
            level.level,
            level.depth,
            level.test_accuracy,
            level.test_loss,
            output.hierarchy.param_len(level.level),
        );
    }
    let top = seed_run.auxiliary.levels.last().unwrap();
    let compact = &seed_run.auxiliary.levels[output.hierarchy.num_levels() / 2];
    println!(
        "\nthe depth-{} network keeps {:.1}% of the top accuracy with {:.1}% of the blocks",
        compact.depth,
        100.0 * compact.test_accuracy / top.test_accuracy,
        100.0 * compact.depth as f64 / top.depth as f64,
    );
}
