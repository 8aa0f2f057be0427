//! Per-cycle metrics records, their CSV form, and seed aggregation.
//!
//! One CSV per (run, seed). Floats are written with Rust's shortest
//! round-tripping representation, so parsing a file reproduces the in-memory
//! records exactly; optional fields are empty cells.

use super::{ExperimentError, RunOutput};
use std::fmt::Write as _;
use std::path::Path;

/// Diagnostics of one training cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub run_id: String,
    pub seed: u64,
    /// 1-based cycle number the row describes.
    pub cycle: usize,
    /// Fine-level loss of the cycle's mini-batch before the update.
    pub train_batch_loss: f64,
    pub test_accuracy: Option<f64>,
    pub test_loss: Option<f64>,
    /// Per-level change of the optimized objective caused by the correction
    /// (the coupled loss below the finest level); entry `i` belongs to level
    /// `i + 1`. Positive values flag spurious corrections.
    pub delta_loss: Vec<Option<f64>>,
    /// Accepted line-search step per level; entry `i` belongs to level `i+1`.
    pub alpha: Vec<Option<f64>>,
    /// Cumulative gradient evaluations, scaled by level depth.
    pub scaled_grad_evals: u64,
    /// Cumulative loss-only evaluations, scaled by level depth.
    pub scaled_loss_evals: u64,
    /// Seconds since the seed's run started.
    pub wall_time_s: f64,
}

/// Test accuracy of one hierarchy level's network.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryLevel {
    pub level: usize,
    pub depth: usize,
    pub test_accuracy: f64,
    pub test_loss: f64,
}

/// Accuracies of the networks at every level, coarsest (0) to finest (L).
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryReport {
    pub levels: Vec<AuxiliaryLevel>,
}

/// Mean and sample standard deviation across seeds at one evaluated cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePoint {
    pub cycle: usize,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub mean_train_loss: f64,
    pub std_train_loss: f64,
    pub mean_scaled_grad_evals: f64,
}

fn fmt_f64(value: f64) -> String {
    format!("{value:?}")
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(fmt_f64).unwrap_or_default()
}

/// CSV header for a run with `num_levels` levels.
pub fn csv_header(num_levels: usize) -> String {
    let mut header = String::from("run_id,seed,cycle,train_batch_loss,test_accuracy,test_loss");
    for l in 1..num_levels {
        let _ = write!(header, ",dloss_l{l}");
    }
    for l in 1..num_levels {
        let _ = write!(header, ",alpha_l{l}");
    }
    header.push_str(",scaled_grad_evals,scaled_loss_evals,wall_time_s");
    header
}

/// Writes one seed's records with a fixed, documented header.
pub fn write_metrics_csv(
    path: &Path,
    records: &[MetricsRecord],
    num_levels: usize,
) -> Result<(), ExperimentError> {
    let mut text = csv_header(num_levels);
    text.push('\n');
    for r in records {
        let _ = write!(
            text,
            "{},{},{},{},{},{}",
            r.run_id,
            r.seed,
            r.cycle,
            fmt_f64(r.train_batch_loss),
            fmt_opt(r.test_accuracy),
            fmt_opt(r.test_loss),
        );
        for l in 0..num_levels.saturating_sub(1) {
            let _ = write!(text, ",{}", fmt_opt(r.delta_loss.get(l).copied().flatten()));
        }
        for l in 0..num_levels.saturating_sub(1) {
            let _ = write!(text, ",{}", fmt_opt(r.alpha.get(l).copied().flatten()));
        }
        let _ = writeln!(
            text,
            ",{},{},{}",
            r.scaled_grad_evals,
            r.scaled_loss_evals,
            fmt_f64(r.wall_time_s)
        );
    }
    std::fs::write(path, text).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    path: &Path,
    line: usize,
    what: &str,
) -> Result<T, ExperimentError> {
    field.parse().map_err(|_| ExperimentError::Format {
        path: path.display().to_string(),
        reason: format!("line {line}: cannot parse {what} from {field:?}"),
    })
}

fn parse_opt(
    field: &str,
    path: &Path,
    line: usize,
    what: &str,
) -> Result<Option<f64>, ExperimentError> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_field(field, path, line, what).map(Some)
    }
}

/// Parses a metrics CSV back into records. Inverse of [`write_metrics_csv`]
/// for all fields.
pub fn parse_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| ExperimentError::Format {
        path: path.display().to_string(),
        reason: "empty file".into(),
    })?;
    let num_level_cols = header
        .split(',')
        .filter(|c| c.starts_with("dloss_l"))
        .count();
    let expected_cols = 6 + 2 * num_level_cols + 3;

    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(ExperimentError::Format {
                path: path.display().to_string(),
                reason: format!(
                    "line {line_no}: expected {expected_cols} columns, found {}",
                    fields.len()
                ),
            });
        }
        let mut delta_loss = Vec::with_capacity(num_level_cols);
        let mut alpha = Vec::with_capacity(num_level_cols);
        for i in 0..num_level_cols {
            delta_loss.push(parse_opt(fields[6 + i], path, line_no, "dloss")?);
        }
        for i in 0..num_level_cols {
            alpha.push(parse_opt(
                fields[6 + num_level_cols + i],
                path,
                line_no,
                "alpha",
            )?);
        }
        let tail = 6 + 2 * num_level_cols;
        records.push(MetricsRecord {
            run_id: fields[0].to_string(),
            seed: parse_field(fields[1], path, line_no, "seed")?,
            cycle: parse_field(fields[2], path, line_no, "cycle")?,
            train_batch_loss: parse_field(fields[3], path, line_no, "train_batch_loss")?,
            test_accuracy: parse_opt(fields[4], path, line_no, "test_accuracy")?,
            test_loss: parse_opt(fields[5], path, line_no, "test_loss")?,
            delta_loss,
            alpha,
            scaled_grad_evals: parse_field(fields[tail], path, line_no, "scaled_grad_evals")?,
            scaled_loss_evals: parse_field(fields[tail + 1], path, line_no, "scaled_loss_evals")?,
            wall_time_s: parse_field(fields[tail + 2], path, line_no, "wall_time_s")?,
        });
    }
    Ok(records)
}

/// Mean/std curves across runs, aligned on the cycles every run evaluated.
pub fn aggregate(runs: &[&[MetricsRecord]]) -> Result<Vec<AggregatePoint>, ExperimentError> {
    if runs.is_empty() {
        return Err(ExperimentError::NoRuns);
    }
    let eval_cycles: Vec<usize> = runs[0]
        .iter()
        .filter(|r| r.test_accuracy.is_some())
        .map(|r| r.cycle)
        .collect();
    for (i, run) in runs.iter().enumerate().skip(1) {
        let cycles: Vec<usize> = run
            .iter()
            .filter(|r| r.test_accuracy.is_some())
            .map(|r| r.cycle)
            .collect();
        if cycles != eval_cycles {
            return Err(ExperimentError::MisalignedCycles {
                run: i,
                expected: eval_cycles,
                found: cycles,
            });
        }
    }

    let mean_std = |values: &[f64]| -> (f64, f64) {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return (mean, 0.0);
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        (mean, var.sqrt())
    };

    let mut points = Vec::with_capacity(eval_cycles.len());
    for &cycle in &eval_cycles {
        let mut accs = Vec::with_capacity(runs.len());
        let mut losses = Vec::with_capacity(runs.len());
        let mut gevals = Vec::with_capacity(runs.len());
        for run in runs {
            let record = run
                .iter()
                .find(|r| r.cycle == cycle)
                .expect("cycle presence checked above");
            accs.push(record.test_accuracy.expect("evaluated cycle"));
            losses.push(record.train_batch_loss);
            gevals.push(record.scaled_grad_evals as f64);
        }
        let (mean_acc, std_acc) = mean_std(&accs);
        let (mean_loss, std_loss) = mean_std(&losses);
        points.push(AggregatePoint {
            cycle,
            mean_test_accuracy: mean_acc,
            std_test_accuracy: std_acc,
            mean_train_loss: mean_loss,
            std_train_loss: std_loss,
            mean_scaled_grad_evals: gevals.iter().sum::<f64>() / gevals.len() as f64,
        });
    }
    Ok(points)
}

pub(super) fn write_aggregate_csv(
    path: &Path,
    points: &[AggregatePoint],
) -> Result<(), ExperimentError> {
    let mut text = String::from(
        "cycle,mean_test_accuracy,std_test_accuracy,mean_train_loss,std_train_loss,mean_scaled_grad_evals\n",
    );
    for p in points {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{}",
            p.cycle,
            fmt_f64(p.mean_test_accuracy),
            fmt_f64(p.std_test_accuracy),
            fmt_f64(p.mean_train_loss),
            fmt_f64(p.std_train_loss),
            fmt_f64(p.mean_scaled_grad_evals),
        );
    }
    std::fs::write(path, text).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(super) fn write_auxiliary_csv(path: &Path, output: &RunOutput) -> Result<(), ExperimentError> {
    let mut text = String::from("run_id,seed,level,depth,test_accuracy,test_loss\n");
    for seed_out in &output.seeds {
        for level in &seed_out.auxiliary.levels {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                output.run_id,
                seed_out.seed,
                level.level,
                level.depth,
                fmt_f64(level.test_accuracy),
                fmt_f64(level.test_loss),
            );
        }
    }
    std::fs::write(path, text).map_err(|source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    })
}
