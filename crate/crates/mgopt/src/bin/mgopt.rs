//! Command-line front end: `train` runs a configuration over its seeds and
//! writes metrics, `eval` scores a saved parameter snapshot, `aggregate`
//! merges per-seed metrics CSVs into mean/std curves.

use clap::{Args, Parser, Subcommand};
use mgopt::data::Dataset;
use mgopt::experiment::{
    self, aggregate, parse_metrics_csv, preset, run_training_on, DatasetConfig, ExperimentError,
    MetricsRecord, RunConfig,
};
use mgopt::network;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mgopt",
    about = "Multilevel training of deep residual networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train one configuration across its seeds and write metrics CSVs,
    /// parameter snapshots, and a run manifest.
    Train(TrainArgs),
    /// Load a parameter snapshot and report loss/accuracy on a dataset.
    Eval(EvalArgs),
    /// Merge per-seed metrics CSVs into mean/std curves.
    Aggregate(AggregateArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Smoothing-schedule preset: main-2/4/8, light-2/4/8, or sgd.
    #[arg(long)]
    preset: Option<String>,
    /// Depth (residual blocks) of the finest network.
    #[arg(long)]
    depth: Option<usize>,
    /// Number of hierarchy levels (only without --preset; 1 = SGD).
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    /// Comma-separated seed list, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory; metrics land in <out>/<run-id>/.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Apply coarse corrections with a fixed step of 1 instead of searching.
    #[arg(long)]
    no_line_search: bool,
    /// First trial step of the line search.
    #[arg(long)]
    alpha_init: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Dataset kind: mnist, csv, or synthetic.
    #[arg(long)]
    dataset: Option<String>,
    /// Directory with the four MNIST IDX files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Training CSV (features...,label per line; with --dataset csv).
    #[arg(long)]
    csv_train: Option<PathBuf>,
    /// Test CSV (with --dataset csv).
    #[arg(long)]
    csv_test: Option<PathBuf>,
    /// Feature count of the CSV dataset.
    #[arg(long)]
    csv_features: Option<usize>,
    /// Class count of the CSV dataset.
    #[arg(long)]
    csv_classes: Option<usize>,
    /// Evaluate on the test set every N cycles.
    #[arg(long)]
    eval_every: Option<usize>,
    /// Time horizon of the network dynamics (default 0.05 * depth).
    #[arg(long)]
    horizon: Option<f64>,
    /// Run identifier for output paths.
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Parameter snapshot written by `train`.
    #[arg(long)]
    params: PathBuf,
    /// Dataset kind: mnist or csv.
    #[arg(long, default_value = "mnist")]
    dataset: String,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Evaluate the train split instead of the test split (mnist only).
    #[arg(long)]
    train_split: bool,
    #[arg(long)]
    csv_path: Option<PathBuf>,
    #[arg(long)]
    csv_features: Option<usize>,
    #[arg(long)]
    csv_classes: Option<usize>,
}

#[derive(Args)]
struct AggregateArgs {
    /// Per-seed metrics CSVs (or a run directory containing seed*.csv).
    inputs: Vec<PathBuf>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Aggregate(args) => cmd_aggregate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn build_train_config(args: &TrainArgs) -> Result<RunConfig, Box<dyn std::error::Error>> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), None) => RunConfig::from_json_file(path)?,
        (None, Some(name)) => preset(name)?,
        (Some(path), Some(name)) => {
            // preset supplies the schedule, file supplies the rest
            let mut cfg = RunConfig::from_json_file(path)?;
            let p = preset(name)?;
            cfg.num_levels = p.num_levels;
            cfg.smoothing = p.smoothing;
            cfg.run_id = cfg.run_id.or(p.run_id);
            cfg
        }
        (None, None) => RunConfig::default(),
    };

    if let Some(levels) = args.levels {
        if args.preset.is_some() && levels != cfg.num_levels {
            return Err(format!(
                "--levels {} conflicts with preset ({} levels)",
                levels, cfg.num_levels
            )
            .into());
        }
        if args.preset.is_none() {
            // light-style default schedule for a custom level count
            cfg.num_levels = levels;
            cfg.smoothing = (0..levels)
                .map(|l| {
                    if l == 0 || l == levels - 1 {
                        (1, 0)
                    } else {
                        (1, 1)
                    }
                })
                .collect();
        }
    }
    if let Some(depth) = args.depth {
        cfg.fine_depth = depth;
    }
    if let Some(cycles) = args.cycles {
        cfg.cycles = cycles;
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.clone();
    }
    if args.no_line_search {
        cfg.line_search.enabled = false;
    }
    if let Some(alpha) = args.alpha_init {
        cfg.line_search.alpha_init = alpha;
    }
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    if let Some(batch) = args.batch_size {
        cfg.batch_size = batch;
    }
    if let Some(every) = args.eval_every {
        cfg.eval_every = every;
    }
    if let Some(horizon) = args.horizon {
        cfg.horizon = Some(horizon);
    }
    if let Some(run_id) = &args.run_id {
        cfg.run_id = Some(run_id.clone());
    }

    match args.dataset.as_deref() {
        Some("mnist") => {
            let data_dir = args
                .data_dir
                .clone()
                .ok_or("--dataset mnist needs --data-dir")?;
            cfg.dataset = DatasetConfig::Mnist { data_dir };
        }
        Some("csv") => {
            cfg.dataset = DatasetConfig::Csv {
                train: args
                    .csv_train
                    .clone()
                    .ok_or("--dataset csv needs --csv-train")?,
                test: args
                    .csv_test
                    .clone()
                    .ok_or("--dataset csv needs --csv-test")?,
                num_features: args
                    .csv_features
                    .ok_or("--dataset csv needs --csv-features")?,
                num_classes: args
                    .csv_classes
                    .ok_or("--dataset csv needs --csv-classes")?,
            };
        }
        Some("synthetic") | None => {}
        Some(other) => return Err(format!("unknown dataset kind {other:?}").into()),
    }
    Ok(cfg)
}

fn cmd_train(args: TrainArgs) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = build_train_config(&args)?;
    let (train, test) = cfg.dataset.load()?;
    eprintln!("train: {train}");
    eprintln!("test:  {test}");
    eprintln!(
        "run {}: depth {}, {} levels, {} cycles, seeds {:?}",
        cfg.run_id_value(),
        cfg.fine_depth,
        cfg.num_levels,
        cfg.cycles,
        cfg.seeds
    );

    let output = run_training_on(&cfg, &train, &test)?;
    for seed_out in &output.seeds {
        match &seed_out.diverged {
            Some(context) => eprintln!("seed {}: DIVERGED ({context})", seed_out.seed),
            None => eprintln!(
                "seed {}: final accuracy {:.4}, best {:.4}",
                seed_out.seed, seed_out.final_test_accuracy, seed_out.best_test_accuracy
            ),
        }
    }
    let dir = experiment::write_run_output(&args.out, &output)?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn load_eval_dataset(args: &EvalArgs) -> Result<Dataset, Box<dyn std::error::Error>> {
    match args.dataset.as_str() {
        "mnist" => {
            let dir = args
                .data_dir
                .clone()
                .ok_or("--dataset mnist needs --data-dir")?;
            let (images, labels) = if args.train_split {
                ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
            } else {
                ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
            };
            Ok(mgopt::load_mnist_idx(&dir.join(images), &dir.join(labels))?)
        }
        "csv" => {
            let path = args
                .csv_path
                .clone()
                .ok_or("--dataset csv needs --csv-path")?;
            let features = args
                .csv_features
                .ok_or("--dataset csv needs --csv-features")?;
            let classes = args
                .csv_classes
                .ok_or("--dataset csv needs --csv-classes")?;
            Ok(mgopt::load_csv_dataset(&path, features, classes)?)
        }
        other => Err(format!("unknown dataset kind {other:?}").into()),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), Box<dyn std::error::Error>> {
    let (spec, theta) = experiment::read_params(&args.params)?;
    let dataset = load_eval_dataset(&args)?;
    if dataset.num_features() != spec.input_dim {
        return Err(format!(
            "snapshot expects {} input features but {} has {}",
            spec.input_dim,
            dataset.name,
            dataset.num_features()
        )
        .into());
    }
    let (loss, accuracy) = network::evaluate(&spec, &theta, dataset.inputs(), dataset.labels());
    println!(
        "{}: depth {}, loss {:.6}, accuracy {:.4}",
        dataset.name, spec.depth, loss, accuracy
    );
    Ok(())
}

fn cmd_aggregate(args: AggregateArgs) -> Result<(), Box<dyn std::error::Error>> {
    if args.inputs.is_empty() {
        return Err("no input CSVs given".into());
    }
    // a single directory argument means "all seed*.csv inside"
    let mut files = Vec::new();
    for input in &args.inputs {
        if input.is_dir() {
            let mut seeds: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| {
                    p.file_name()
                        .and_then(|n| n.to_str())
                        .is_some_and(|n| n.starts_with("seed") && n.ends_with(".csv"))
                })
                .collect();
            seeds.sort();
            files.extend(seeds);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err("no seed CSVs found".into());
    }

    let parsed: Vec<Vec<MetricsRecord>> = files
        .iter()
        .map(|p| parse_metrics_csv(p))
        .collect::<Result<_, ExperimentError>>()?;
    let slices: Vec<&[MetricsRecord]> = parsed.iter().map(|r| r.as_slice()).collect();
    let points = aggregate(&slices)?;

    let mut text = String::from(
        "cycle,mean_test_accuracy,std_test_accuracy,mean_train_loss,std_train_loss,mean_scaled_grad_evals\n",
    );
    for p in &points {
        text.push_str(&format!(
            "{},{:?},{:?},{:?},{:?},{:?}\n",
            p.cycle,
            p.mean_test_accuracy,
            p.std_test_accuracy,
            p.mean_train_loss,
            p.std_train_loss,
            p.mean_scaled_grad_evals
        ));
    }
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
