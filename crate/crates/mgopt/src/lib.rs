//! Multilevel training for deep fixed-width residual networks.
//!
//! This crate trains residual networks whose forward pass is a time-stepped
//! update `y_n = y_{n-1} + dt * relu(W_n y_{n-1} + b_n)`. Halving the depth
//! while doubling the time step yields a whole hierarchy of networks over the
//! same time horizon, and the optimizer exploits it: each mini-batch step is
//! a nonlinear multigrid V-cycle that smooths with gradient descent on every
//! level, couples levels through a fine-to-coarse gradient defect, and
//! line-searches the prolongated coarse corrections. A single-level run is
//! plain SGD, which doubles as the built-in baseline.
//!
//! # Examples
//!
//! The `examples/` directory is the front door; each example is a runnable
//! demonstration of one capability:
//!
//! - **`gradient_check`** - backpropagation against central finite differences
//! - **`transfer_operators`** - hierarchy construction, restriction and
//!   prolongation round trips
//! - **`train_sgd`** - the single-level SGD baseline on synthetic data
//! - **`train_multilevel`** - multilevel vs SGD convergence per cycle and per
//!   unit of work on synthetic data
//! - **`line_search_study`** - correction step control with and without the
//!   line search
//! - **`auxiliary_networks`** - accuracies of the coarse-level networks after
//!   a multilevel run
//! - **`mnist_training`** - a full run on MNIST IDX files
//!
//! ```bash
//! cargo run --release --example train_multilevel
//! cargo run --release --example mnist_training -- --data-dir data/mnist
//! ```
//!
//! There is also a thin `mgopt` binary wrapping training, snapshot
//! evaluation, and CSV aggregation behind a command-line interface:
//!
//! ```bash
//! cargo run --release --bin mgopt -- train --preset light-4 --depth 512 --out runs
//! ```
//!
//! # Modules
//!
//! - [`numerics`] - dense kernels, seeded randomness, softmax/ReLU
//! - [`network`] - the residual network: forward, loss, exact backward,
//!   evaluation on flat parameter vectors
//! - [`hierarchy`] - level construction and the transfer operators
//! - [`optimizer`] - GD smoother, backtracking line search, the V-cycle, SGD
//! - [`data`] - IDX/CSV loaders, deterministic shuffling and batching
//! - [`experiment`] - run configuration, presets, metrics CSV, snapshots
//!
//! Training is deterministic end to end: a run is fully specified by its
//! configuration and seed, independent of thread count.

pub mod data;
pub mod experiment;
pub mod hierarchy;
pub mod network;
pub mod numerics;
pub mod optimizer;

pub use data::{load_csv_dataset, load_mnist_idx, BatchPlan, Dataset, MiniBatch};
pub use experiment::{preset, run_training, run_training_on, RunConfig, RunOutput};
pub use hierarchy::{Hierarchy, LevelSpec};
pub use network::{NetParams, NetSpec};
pub use numerics::{Matrix, SeededRng};
pub use optimizer::{
    mgopt_vcycle, sgd_run, CycleConfig, CycleDiagnostics, LineSearchConfig, SmootherConfig,
};
