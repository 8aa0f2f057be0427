//! Shows what the backtracking line search contributes: with an aggressive
//! learning rate and step length, coarse corrections applied blindly (step 1)
//! repeatedly increase the loss, while the searched steps stay controlled.
//!
//! ```bash
//! cargo run --release --example line_search_study
//! ```

use mgopt::experiment::{preset, run_training, DatasetConfig, RunConfig};

fn config(line_search: bool) -> RunConfig {
    let mut cfg = RunConfig {
        run_id: Some(if line_search { "with-ls" } else { "no-ls" }.into()),
        dataset: DatasetConfig::Synthetic {
            seed: 3,
            train_samples: 2000,
            test_samples: 500,
            num_features: 20,
            num_classes: 10,
            noise: 0.3,
        },
        fine_depth: 256,
        width: 10,
        learning_rate: 0.2,
        batch_size: 100,
        cycles: 120,
        seeds: vec![1],
        eval_every: 0,
        ..preset("light-4").expect("known preset")
    };
    cfg.fine_depth = 256;
    cfg.line_search.alpha_init = 2.0;
    cfg.line_search.enabled = line_search;
    cfg
}

fn spurious_fraction(output: &mgopt::RunOutput) -> (f64, usize) {
    let mut spurious = 0usize;
    let mut total = 0usize;
    for record in &output.seeds[0].records {
        for dl in record.delta_loss.iter().flatten() {
            total += 1;
            if *dl > 0.0 {
                spurious += 1;
            }
        }
    }
    (spurious as f64 / total as f64, total)
}

fn main() {
    println!("4 levels, depth 256, lr 0.2, first trial step 2.0\n");

    let with_ls = run_training(&config(true)).expect("training succeeds");
    let without = run_training(&config(false)).expect("training succeeds");

    let (frac_with, pairs) = spurious_fraction(&with_ls);
    let (frac_without, _) = spurious_fraction(&without);

    println!("corrections that increased the level objective (of {pairs} level corrections):");
    println!("  with line search:    {:5.1}%", 100.0 * frac_with);
    println!("  without line search: {:5.1}%", 100.0 * frac_without);

    let final_loss =
        |output: &mgopt::RunOutput| output.seeds[0].records.last().unwrap().train_batch_loss;
    println!("\nfinal training batch loss:");
    println!("  with line search:    {:.4}", final_loss(&with_ls));
    println!("  without line search: {:.4}", final_loss(&without));

    // distribution of accepted steps in the searched run
    let mut accepted: Vec<f64> = Vec::new();
    for record in &with_ls.seeds[0].records {
        accepted.extend(record.alpha.iter().flatten());
    }
    let zeros = accepted.iter().filter(|&&a| a == 0.0).count();
    let full = accepted.iter().filter(|&&a| a == 2.0).count();
    println!(
        "\naccepted steps: {} total, {} at the full trial step, {} rejected to 0",
        accepted.len(),
        full,
        zeros
    );
}
