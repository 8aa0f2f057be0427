//! Run orchestration: configuration and presets, multi-seed training runs,
//! cost accounting in scaled gradient evaluations, auxiliary-network
//! evaluation, and metrics output.

mod metrics;
mod snapshot;

pub use metrics::{
    parse_metrics_csv, write_metrics_csv, AggregatePoint, AuxiliaryLevel, AuxiliaryReport,
    MetricsRecord,
};
pub use snapshot::{read_params, write_params};

use crate::data::{self, BatchPlan, Dataset};
use crate::hierarchy::Hierarchy;
use crate::network::{self, NetParams};
use crate::numerics::SeededRng;
use crate::optimizer::{
    mgopt_vcycle, CycleConfig, HierarchyProblem, LevelSchedule, LineSearchConfig,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown preset {0:?} (expected main-2/4/8, light-2/4/8, or sgd)")]
    UnknownPreset(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Hierarchy(#[from] crate::hierarchy::HierarchyError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("cannot aggregate: run {run} evaluates at cycles {found:?}, expected {expected:?}")]
    MisalignedCycles {
        run: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("cannot aggregate zero runs")]
    NoRuns,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Where training and test data come from.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// IDX image/label files named `train-images-idx3-ubyte` etc. in one
    /// directory.
    Mnist { data_dir: PathBuf },
    /// Headerless CSV, features then an integer label per line.
    Csv {
        train: PathBuf,
        test: PathBuf,
        num_features: usize,
        num_classes: usize,
    },
    /// Deterministic synthetic clusters, for experiments without files.
    Synthetic {
        seed: u64,
        train_samples: usize,
        test_samples: usize,
        num_features: usize,
        num_classes: usize,
        noise: f64,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            seed: 0,
            train_samples: 2000,
            test_samples: 500,
            num_features: 10,
            num_classes: 10,
            noise: 0.3,
        }
    }
}

impl DatasetConfig {
    /// Loads `(train, test)`.
    pub fn load(&self) -> Result<(Dataset, Dataset), ExperimentError> {
        match self {
            DatasetConfig::Mnist { data_dir } => {
                let train = data::load_mnist_idx(
                    &data_dir.join("train-images-idx3-ubyte"),
                    &data_dir.join("train-labels-idx1-ubyte"),
                )?;
                let test = data::load_mnist_idx(
                    &data_dir.join("t10k-images-idx3-ubyte"),
                    &data_dir.join("t10k-labels-idx1-ubyte"),
                )?;
                Ok((train, test))
            }
            DatasetConfig::Csv {
                train,
                test,
                num_features,
                num_classes,
            } => Ok((
                data::load_csv_dataset(train, *num_features, *num_classes)?,
                data::load_csv_dataset(test, *num_features, *num_classes)?,
            )),
            DatasetConfig::Synthetic {
                seed,
                train_samples,
                test_samples,
                num_features,
                num_classes,
                noise,
            } => Ok(data::synthetic_split(
                *seed,
                *train_samples,
                *test_samples,
                *num_features,
                *num_classes,
                *noise,
            )),
        }
    }
}

/// Full description of one training run. JSON config files mirror these
/// fields; unspecified fields take the defaults below.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RunConfig {
    /// Identifier used in output paths and metrics rows; derived from the
    /// geometry when not set. Never includes timestamps, so identical
    /// configurations produce identical outputs.
    pub run_id: Option<String>,
    pub dataset: DatasetConfig,
    /// Depth (residual blocks) of the finest network.
    pub fine_depth: usize,
    /// Number of levels; 1 means plain SGD.
    pub num_levels: usize,
    /// Hidden width of every network.
    pub width: usize,
    /// Time horizon shared by all levels (the fine-level time step is
    /// `horizon / fine_depth`). Defaults to 4.0: the ReLU drift grows the
    /// hidden state like `exp(c * horizon)` regardless of depth, so a fixed
    /// moderate horizon keeps every depth finite and trainable while leaving
    /// the flow nonlinear enough that depth matters.
    pub horizon: Option<f64>,
    /// Per-level `(pre, post)` smoothing steps, index 0 = coarsest. Must
    /// have `num_levels` entries.
    pub smoothing: Vec<(usize, usize)>,
    pub learning_rate: f64,
    /// L2 regularization weight.
    pub lambda: f64,
    /// Smoother momentum.
    pub momentum: f64,
    pub batch_size: usize,
    /// Mini-batch steps (V-cycles) per seed.
    pub cycles: usize,
    pub seeds: Vec<u64>,
    pub line_search: LineSearchConfig,
    /// Evaluate on the test set every this many cycles (0 disables periodic
    /// evaluation). The final cycle is always evaluated.
    pub eval_every: usize,
    /// Additional cycles to evaluate at, regardless of `eval_every`.
    pub eval_at: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            run_id: None,
            dataset: DatasetConfig::default(),
            fine_depth: 2048,
            num_levels: 1,
            width: 10,
            horizon: None,
            smoothing: vec![(1, 0)],
            learning_rate: 0.1,
            lambda: 0.0,
            momentum: 0.0,
            batch_size: 1000,
            cycles: 300,
            seeds: vec![1, 2, 3, 4, 5],
            line_search: LineSearchConfig::default(),
            eval_every: 2,
            eval_at: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn horizon_value(&self) -> f64 {
        self.horizon.unwrap_or(4.0)
    }

    pub fn run_id_value(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("train-d{}-l{}", self.fine_depth, self.num_levels))
    }

    /// Reads a JSON config file.
    pub fn from_json_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Format {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::BadConfig("seeds must be nonempty".into()));
        }
        if self.smoothing.len() != self.num_levels {
            return Err(ExperimentError::BadConfig(format!(
                "smoothing has {} entries but the run has {} levels",
                self.smoothing.len(),
                self.num_levels
            )));
        }
        if self.cycles == 0 {
            return Err(ExperimentError::BadConfig("cycles must be positive".into()));
        }
        Ok(())
    }

    fn cycle_config(&self) -> CycleConfig {
        CycleConfig {
            schedule: self
                .smoothing
                .iter()
                .map(|&(pre, post)| LevelSchedule {
                    pre_smooth: pre,
                    post_smooth: post,
                    learning_rate: self.learning_rate,
                    momentum: self.momentum,
                })
                .collect(),
            line_search: self.line_search,
            record_transitions: false,
        }
    }

    fn should_eval(&self, cycle: usize) -> bool {
        cycle == self.cycles
            || (self.eval_every > 0 && cycle.is_multiple_of(self.eval_every))
            || self.eval_at.contains(&cycle)
    }
}

/// Named smoothing-schedule presets. The `main-*` family uses heavier
/// smoothing on coarse levels, the `light-*` family one pre-smoothing step
/// everywhere; `sgd` is the single-level baseline. The finest and the
/// coarsest level use no post-smoothing.
pub fn preset(name: &str) -> Result<RunConfig, ExperimentError> {
    let smoothing: Vec<(usize, usize)> = match name {
        "main-2" => vec![(2, 0), (1, 0)],
        "main-4" => vec![(2, 0), (2, 2), (1, 1), (1, 0)],
        "main-8" => vec![
            (2, 0),
            (2, 2),
            (2, 2),
            (2, 2),
            (1, 1),
            (1, 1),
            (1, 1),
            (1, 0),
        ],
        "light-2" => vec![(1, 0), (1, 0)],
        "light-4" => vec![(1, 0), (1, 1), (1, 1), (1, 0)],
        "light-8" => vec![
            (1, 0),
            (1, 1),
            (1, 1),
            (1, 1),
            (1, 1),
            (1, 1),
            (1, 1),
            (1, 0),
        ],
        "sgd" => vec![(1, 0)],
        other => return Err(ExperimentError::UnknownPreset(other.to_string())),
    };
    Ok(RunConfig {
        run_id: Some(name.to_string()),
        num_levels: smoothing.len(),
        smoothing,
        ..RunConfig::default()
    })
}

/// Work metric: gradient evaluations weighted by the depth of the level they
/// ran on, summed over levels.
pub fn count_gevals(per_level: &[(usize, u64)]) -> u64 {
    per_level
        .iter()
        .map(|&(depth, evals)| depth as u64 * evals)
        .sum()
}

/// Result of one seed's training run.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub auxiliary: AuxiliaryReport,
    /// Final finest-level parameters (at divergence, the last finite ones).
    pub final_params: Vec<f64>,
    pub final_test_accuracy: f64,
    pub best_test_accuracy: f64,
    /// Set when the run aborted with non-finite loss or gradient.
    pub diverged: Option<String>,
}

/// All seeds of one configuration.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub config: RunConfig,
    pub hierarchy: Hierarchy,
    pub seeds: Vec<SeedOutcome>,
}

impl RunOutput {
    /// Mean/std curves over this run's seeds.
    pub fn aggregate(&self) -> Result<Vec<AggregatePoint>, ExperimentError> {
        let runs: Vec<&[MetricsRecord]> = self.seeds.iter().map(|s| s.records.as_slice()).collect();
        metrics::aggregate(&runs)
    }
}

/// Mean/std curves across several seeds' metrics (exposed for merging CSVs
/// written by earlier runs).
pub fn aggregate(runs: &[&[MetricsRecord]]) -> Result<Vec<AggregatePoint>, ExperimentError> {
    metrics::aggregate(runs)
}

/// Loads the configured dataset and trains every seed.
pub fn run_training(cfg: &RunConfig) -> Result<RunOutput, ExperimentError> {
    let (train, test) = cfg.dataset.load()?;
    run_training_on(cfg, &train, &test)
}

/// Trains every seed of `cfg` on already-loaded data. Seeds are independent;
/// each cycle applies one V-cycle (one GD step for single-level runs) to the
/// cycle's mini-batch. After the last cycle the finest parameters are
/// restricted down the whole hierarchy and every level is evaluated on the
/// test set.
pub fn run_training_on(
    cfg: &RunConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<RunOutput, ExperimentError> {
    cfg.validate()?;
    let hierarchy = Hierarchy::build(
        cfg.fine_depth,
        cfg.num_levels,
        train.num_features(),
        cfg.width,
        train.num_classes(),
        cfg.horizon_value(),
        &cfg.smoothing,
    )?;
    let run_id = cfg.run_id_value();
    let cycle_cfg = cfg.cycle_config();
    let finest = hierarchy.finest();
    let fine_spec = hierarchy.net_spec(finest);
    let level_depths: Vec<usize> = hierarchy.levels().iter().map(|l| l.depth).collect();

    let mut seed_outcomes = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let start = Instant::now();
        let mut rng = SeededRng::new(seed);
        let mut theta = NetParams::xavier(&fine_spec, &mut rng).flatten();
        let plan = BatchPlan::new(cfg.batch_size, seed);

        let mut records = Vec::new();
        let mut cum_grad: Vec<u64> = vec![0; cfg.num_levels];
        let mut cum_loss: Vec<u64> = vec![0; cfg.num_levels];
        let mut best_acc = 0.0f64;
        let mut final_acc = 0.0f64;
        let mut diverged = None;

        for cycle in 0..cfg.cycles {
            let batch = data::batches(train, &plan, cycle);
            let problem = HierarchyProblem {
                hierarchy: &hierarchy,
                inputs: &batch.inputs,
                labels: &batch.labels,
                lambda: cfg.lambda,
            };
            let cycle_no = cycle + 1;
            // keep the pre-cycle parameters: on divergence they are the
            // last finite iterate
            match mgopt_vcycle(&problem, theta.clone(), &cycle_cfg) {
                Ok((updated, diag)) => {
                    theta = updated;
                    for l in 0..cfg.num_levels {
                        cum_grad[l] += diag.levels[l].grad_evals;
                        cum_loss[l] += diag.levels[l].loss_evals;
                    }
                    let scaled_grad = count_gevals(
                        &level_depths
                            .iter()
                            .copied()
                            .zip(cum_grad.iter().copied())
                            .collect::<Vec<_>>(),
                    );
                    let scaled_loss = count_gevals(
                        &level_depths
                            .iter()
                            .copied()
                            .zip(cum_loss.iter().copied())
                            .collect::<Vec<_>>(),
                    );
                    let (test_loss, test_accuracy) = if cfg.should_eval(cycle_no) {
                        let (l, a) =
                            network::evaluate(&fine_spec, &theta, test.inputs(), test.labels());
                        best_acc = best_acc.max(a);
                        final_acc = a;
                        (Some(l), Some(a))
                    } else {
                        (None, None)
                    };
                    records.push(MetricsRecord {
                        run_id: run_id.clone(),
                        seed,
                        cycle: cycle_no,
                        train_batch_loss: diag.levels[finest].entry_loss.unwrap_or(f64::NAN),
                        test_accuracy,
                        test_loss,
                        delta_loss: (1..cfg.num_levels)
                            .map(|l| diag.levels[l].delta_loss)
                            .collect(),
                        alpha: (1..cfg.num_levels).map(|l| diag.levels[l].alpha).collect(),
                        scaled_grad_evals: scaled_grad,
                        scaled_loss_evals: scaled_loss,
                        wall_time_s: start.elapsed().as_secs_f64(),
                    });
                }
                Err(err) => {
                    // record the failure; remaining seeds still run
                    let context = err.to_string();
                    records.push(MetricsRecord {
                        run_id: run_id.clone(),
                        seed,
                        cycle: cycle_no,
                        train_batch_loss: f64::NAN,
                        test_accuracy: None,
                        test_loss: None,
                        delta_loss: vec![None; cfg.num_levels.saturating_sub(1)],
                        alpha: vec![None; cfg.num_levels.saturating_sub(1)],
                        scaled_grad_evals: count_gevals(
                            &level_depths
                                .iter()
                                .copied()
                                .zip(cum_grad.iter().copied())
                                .collect::<Vec<_>>(),
                        ),
                        scaled_loss_evals: count_gevals(
                            &level_depths
                                .iter()
                                .copied()
                                .zip(cum_loss.iter().copied())
                                .collect::<Vec<_>>(),
                        ),
                        wall_time_s: start.elapsed().as_secs_f64(),
                    });
                    diverged = Some(context);
                    break;
                }
            }
        }

        let auxiliary = auxiliary_report(&hierarchy, &theta, test);
        seed_outcomes.push(SeedOutcome {
            seed,
            records,
            auxiliary,
            final_params: theta,
            final_test_accuracy: final_acc,
            best_test_accuracy: best_acc,
            diverged,
        });
    }

    Ok(RunOutput {
        run_id,
        config: cfg.clone(),
        hierarchy,
        seeds: seed_outcomes,
    })
}

/// Restricts finest-level parameters down through every level and evaluates
/// each level's network on `test`.
pub fn auxiliary_report(
    hierarchy: &Hierarchy,
    theta_fine: &[f64],
    test: &Dataset,
) -> AuxiliaryReport {
    let mut levels = Vec::with_capacity(hierarchy.num_levels());
    let mut theta = theta_fine.to_vec();
    for l in (0..hierarchy.num_levels()).rev() {
        let spec = hierarchy.net_spec(l);
        let (loss, accuracy) = network::evaluate(&spec, &theta, test.inputs(), test.labels());
        levels.push(AuxiliaryLevel {
            level: l,
            depth: spec.depth,
            test_accuracy: accuracy,
            test_loss: loss,
        });
        if l > 0 {
            theta = hierarchy.restrict(l, &theta);
        }
    }
    levels.reverse();
    AuxiliaryReport { levels }
}

/// Writes one run's outputs under `out_dir/run_id/`: a JSON manifest of the
/// resolved configuration and per-seed outcomes, one metrics CSV and one
/// parameter snapshot per seed, the per-level auxiliary accuracies, and the
/// seed-aggregated curves.
pub fn write_run_output(out_dir: &Path, output: &RunOutput) -> Result<PathBuf, ExperimentError> {
    let dir = out_dir.join(&output.run_id);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;

    let manifest_path = dir.join("manifest.json");
    let manifest = serde_json::json!({
        "run_id": output.run_id,
        "config": output.config,
        "resolved": {
            "horizon": output.config.horizon_value(),
            "level_depths": output.hierarchy.levels().iter().map(|l| l.depth).collect::<Vec<_>>(),
            "level_dts": output.hierarchy.levels().iter().map(|l| l.dt).collect::<Vec<_>>(),
            "param_lens": (0..output.hierarchy.num_levels())
                .map(|l| output.hierarchy.param_len(l))
                .collect::<Vec<_>>(),
        },
        // accuracy of the final parameters and the best evaluation seen;
        // no early stopping is applied, so the two can differ
        "seeds": output.seeds.iter().map(|s| serde_json::json!({
            "seed": s.seed,
            "final_test_accuracy": s.final_test_accuracy,
            "best_test_accuracy": s.best_test_accuracy,
            "diverged": s.diverged,
        })).collect::<Vec<_>>(),
    });
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )
    .map_err(io_err(&manifest_path))?;

    for outcome in &output.seeds {
        let csv_path = dir.join(format!("seed{}.csv", outcome.seed));
        write_metrics_csv(&csv_path, &outcome.records, output.config.num_levels)?;
        let params_path = dir.join(format!("seed{}_params.bin", outcome.seed));
        let spec = output.hierarchy.net_spec(output.hierarchy.finest());
        snapshot::write_params(&params_path, &spec, &outcome.final_params)
            .map_err(io_err(&params_path))?;
    }

    let aux_path = dir.join("auxiliary.csv");
    metrics::write_auxiliary_csv(&aux_path, output)?;

    if let Ok(points) = output.aggregate() {
        let agg_path = dir.join("aggregate.csv");
        metrics::write_aggregate_csv(&agg_path, &points)?;
    }

    Ok(dir)
}
