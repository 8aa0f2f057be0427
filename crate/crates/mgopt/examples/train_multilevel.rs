//! Compares multilevel training against the SGD baseline on synthetic data,
//! per cycle and per unit of work (depth-scaled gradient evaluations).
//!
//! ```bash
//! cargo run --release --example train_multilevel
//! ```

use mgopt::experiment::{preset, run_training, DatasetConfig, RunConfig};

fn demo_dataset() -> DatasetConfig {
    DatasetConfig::Synthetic {
        seed: 5,
        train_samples: 4000,
        test_samples: 1000,
        num_features: 20,
        num_classes: 10,
        noise: 0.35,
    }
}

fn run(name: &str, cycles: usize) -> mgopt::RunOutput {
    let base = preset(name).expect("known preset");
    let cfg = RunConfig {
        dataset: demo_dataset(),
        fine_depth: 64,
        width: 10,
        batch_size: 200,
        cycles,
        seeds: vec![1, 2, 3],
        eval_every: 5,
        ..base
    };
    run_training(&cfg).expect("training succeeds")
}

fn main() {
    let cycles = 60;
    println!("depth 64, three seeds, synthetic 10-class data, {cycles} cycles\n");

    let outputs: Vec<(&str, mgopt::RunOutput)> = ["sgd", "light-2", "light-4"]
        .into_iter()
        .map(|name| (name, run(name, cycles)))
        .collect();

    println!(
        "{:>10} {:>8} {:>12} {:>12} {:>16}",
        "preset", "levels", "acc@20", "acc@final", "work (gevals)"
    );
    for (name, output) in &outputs {
        let agg = output.aggregate().expect("aligned seeds");
        let at20 = agg.iter().find(|p| p.cycle == 20).expect("evaluated");
        let last = agg.last().unwrap();
        println!(
            "{:>10} {:>8} {:>7.4} ±{:.3} {:>7.4} ±{:.3} {:>16.0}",
            name,
            output.config.num_levels,
            at20.mean_test_accuracy,
            at20.std_test_accuracy,
            last.mean_test_accuracy,
            last.std_test_accuracy,
            last.mean_scaled_grad_evals,
        );
    }

    // accuracy at matched work: where does each method stand once it has
    // spent the work of `budget_cycles` SGD cycles?
    let budget = 64u64 * 30;
    println!("\naccuracy at a shared work budget of {budget} scaled gradient evaluations:");
    for (name, output) in &outputs {
        let agg = output.aggregate().expect("aligned seeds");
        let within: Vec<_> = agg
            .iter()
            .filter(|p| p.mean_scaled_grad_evals <= budget as f64)
            .collect();
        if let Some(point) = within.last() {
            println!(
                "{:>10}: {:.4} (cycle {:>3}, {:.0} gevals)",
                name, point.mean_test_accuracy, point.cycle, point.mean_scaled_grad_evals
            );
        }
    }
}
