//! Multilevel stochastic optimizer: gradient-descent smoothing against a
//! coupled surrogate objective, backtracking line search on coarse-grid
//! corrections, the recursive V-cycle, and the plain SGD baseline.
//!
//! At every level `l` below the finest, the cycle minimizes the surrogate
//! `psi(theta) = loss(theta) - <v, theta>` where the coupling term
//! `v = grad_l(theta_0) - R grad_{l+1}(theta_nu)` is the fine-to-coarse
//! defect. By construction the surrogate gradient at the restricted entry
//! point equals the restricted fine gradient, which is what makes the coarse
//! correction first-order consistent with the finer level.
//!
//! The cycle holds one mini-batch fixed across all levels; applied once per
//! mini-batch it is the stochastic analogue of one SGD step.

use crate::hierarchy::Hierarchy;
use crate::network::{self, NetSpec};
use crate::numerics::{all_finite, axpy, dot};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("divergence: {context} produced a non-finite {what}")]
    Diverged { context: String, what: &'static str },
}

/// A differentiable objective on a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;
    fn loss(&self, theta: &[f64]) -> f64;
    /// Returns `(loss, gradient)` evaluated together.
    fn loss_grad(&self, theta: &[f64]) -> (f64, Vec<f64>);
}

/// A family of objectives over a level hierarchy connected by linear
/// restriction/prolongation operators. Level 0 is coarsest.
pub trait MultilevelProblem {
    fn num_levels(&self) -> usize;
    fn dim(&self, level: usize) -> usize;
    fn loss(&self, level: usize, theta: &[f64]) -> f64;
    fn loss_grad(&self, level: usize, theta: &[f64]) -> (f64, Vec<f64>);
    /// Maps a vector at `fine_level` down to `fine_level - 1`.
    fn restrict(&self, fine_level: usize, v: &[f64]) -> Vec<f64>;
    /// Maps a vector at `fine_level - 1` up to `fine_level`.
    fn prolong(&self, fine_level: usize, v: &[f64]) -> Vec<f64>;

    fn finest(&self) -> usize {
        self.num_levels() - 1
    }
}

/// View of one level of a [`MultilevelProblem`] as a plain [`Objective`].
pub struct LevelObjective<'a, P: MultilevelProblem> {
    pub problem: &'a P,
    pub level: usize,
}

impl<P: MultilevelProblem> Objective for LevelObjective<'_, P> {
    fn dim(&self) -> usize {
        self.problem.dim(self.level)
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        self.problem.loss(self.level, theta)
    }

    fn loss_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        self.problem.loss_grad(self.level, theta)
    }
}

/// Gradient-descent smoother settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            learning_rate: 0.1,
            momentum: 0.0,
        }
    }
}

/// Backtracking line-search settings (sufficient-decrease rule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearchConfig {
    /// First trial step length.
    pub alpha_init: f64,
    /// Multiplicative shrink factor per rejected trial, in (0, 1).
    pub shrink: f64,
    /// Sufficient-decrease coefficient, in (0, 1).
    pub sufficient_decrease: f64,
    /// Trials before giving up and returning step 0.
    pub max_steps: usize,
    /// When false, corrections are applied with a fixed step of 1.
    pub enabled: bool,
    /// Optional curvature coefficient; when set, trials must also satisfy
    /// the curvature condition (costs one gradient evaluation per trial).
    pub curvature: Option<f64>,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        LineSearchConfig {
            alpha_init: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            max_steps: 10,
            enabled: true,
            curvature: None,
        }
    }
}

/// Per-level smoothing schedule and step sizes for one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSchedule {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

/// Full configuration of one V-cycle.
#[derive(Debug, Clone)]
pub struct CycleConfig {
    /// One entry per level, index 0 = coarsest.
    pub schedule: Vec<LevelSchedule>,
    pub line_search: LineSearchConfig,
    /// When true, the cycle stores a [`TransitionRecord`] per level
    /// transition for consistency checks. Test instrumentation; off in runs.
    pub record_transitions: bool,
}

impl CycleConfig {
    /// Uniform learning rate with smoothing counts taken from the hierarchy.
    pub fn from_hierarchy(
        hierarchy: &Hierarchy,
        smoother: SmootherConfig,
        line_search: LineSearchConfig,
    ) -> Self {
        CycleConfig {
            schedule: hierarchy
                .levels()
                .iter()
                .map(|l| LevelSchedule {
                    pre_smooth: l.pre_smooth,
                    post_smooth: l.post_smooth,
                    learning_rate: smoother.learning_rate,
                    momentum: smoother.momentum,
                })
                .collect(),
            line_search,
            record_transitions: false,
        }
    }
}

/// Evaluation counts and correction diagnostics for one level of one cycle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelTally {
    pub grad_evals: u64,
    pub loss_evals: u64,
    /// Accepted correction step length, at levels that applied a correction.
    pub alpha: Option<f64>,
    /// Change of this level's objective caused by the correction,
    /// `objective(after) - objective(before)`. The objective is the loss the
    /// level optimizes: the coupled surrogate below the finest level, the
    /// plain batch loss at the finest. Positive values flag spurious
    /// corrections.
    pub delta_loss: Option<f64>,
    /// Raw batch loss at this level's entry iterate, before any update.
    pub entry_loss: Option<f64>,
}

/// Snapshot of one fine-to-coarse transition, for consistency checks.
#[derive(Debug, Clone)]
pub struct TransitionRecord {
    /// The child (coarser) level that received the restricted state.
    pub child_level: usize,
    /// Entry iterate at the child level (restricted fine weights).
    pub child_theta: Vec<f64>,
    /// Coupling term computed at the child level.
    pub coupling: Vec<f64>,
    /// Restricted fine gradient handed down by the parent.
    pub restricted_fine_grad: Vec<f64>,
}

/// Diagnostics of one full V-cycle.
#[derive(Debug, Clone, Default)]
pub struct CycleDiagnostics {
    /// One tally per level, index 0 = coarsest.
    pub levels: Vec<LevelTally>,
    pub transitions: Vec<TransitionRecord>,
}

fn surrogate_loss(raw: f64, coupling: Option<&[f64]>, theta: &[f64]) -> f64 {
    match coupling {
        Some(v) => raw - dot(v, theta),
        None => raw,
    }
}

fn surrogate_grad(raw_grad: &[f64], coupling: Option<&[f64]>) -> Vec<f64> {
    match coupling {
        Some(v) => raw_grad.iter().zip(v).map(|(g, vi)| g - vi).collect(),
        None => raw_grad.to_vec(),
    }
}

/// Gradient of the coupled surrogate `psi = loss - <v, theta>` at `theta`.
/// With `coupling = None` (the finest level) this is the plain gradient.
pub fn modified_gradient<O: Objective>(
    obj: &O,
    theta: &[f64],
    coupling: Option<&[f64]>,
) -> Vec<f64> {
    let (_, raw) = obj.loss_grad(theta);
    surrogate_grad(&raw, coupling)
}

fn check_finite(
    loss: f64,
    grad: &[f64],
    context: impl FnOnce() -> String,
) -> Result<(), OptimError> {
    if !loss.is_finite() {
        return Err(OptimError::Diverged {
            context: context(),
            what: "loss",
        });
    }
    if !all_finite(grad) {
        return Err(OptimError::Diverged {
            context: context(),
            what: "gradient",
        });
    }
    Ok(())
}

/// Raw `(loss, gradient)` already evaluated at the current iterate, reusable
/// by the first smoothing step without a fresh evaluation.
type PreEvaluated = (f64, Vec<f64>);

#[allow(clippy::too_many_arguments)]
fn gd_steps<O: Objective>(
    obj: &O,
    theta: &mut [f64],
    steps: usize,
    coupling: Option<&[f64]>,
    learning_rate: f64,
    momentum: f64,
    level: usize,
    tally: &mut LevelTally,
    mut preloaded: Option<PreEvaluated>,
) -> Result<(), OptimError> {
    let mut velocity: Vec<f64> = Vec::new();
    for step in 0..steps {
        let (raw_loss, raw_grad) = match preloaded.take() {
            Some(pre) => pre,
            None => {
                tally.grad_evals += 1;
                obj.loss_grad(theta)
            }
        };
        check_finite(raw_loss, &raw_grad, || {
            format!("smoothing step {step} at level {level}")
        })?;
        if tally.entry_loss.is_none() {
            tally.entry_loss = Some(raw_loss);
        }
        let grad = surrogate_grad(&raw_grad, coupling);
        if momentum == 0.0 {
            axpy(-learning_rate, &grad, theta);
        } else {
            if velocity.is_empty() {
                velocity = vec![0.0; theta.len()];
            }
            for (v, g) in velocity.iter_mut().zip(&grad) {
                *v = momentum * *v + g;
            }
            axpy(-learning_rate, &velocity, theta);
        }
    }
    Ok(())
}

/// `steps` gradient-descent iterations on the coupled surrogate at `level`
/// (the level index only labels divergence errors). With `steps = 0` the
/// parameters are returned unchanged. Momentum buffers start at zero; they do
/// not carry across calls.
pub fn gd_smooth_at<O: Objective>(
    obj: &O,
    theta: &[f64],
    level: usize,
    steps: usize,
    coupling: Option<&[f64]>,
    cfg: &SmootherConfig,
    tally: &mut LevelTally,
) -> Result<Vec<f64>, OptimError> {
    let mut out = theta.to_vec();
    gd_steps(
        obj,
        &mut out,
        steps,
        coupling,
        cfg.learning_rate,
        cfg.momentum,
        level,
        tally,
        None,
    )?;
    Ok(out)
}

/// [`gd_smooth_at`] at level 0, for single-level use.
pub fn gd_smooth<O: Objective>(
    obj: &O,
    theta: &[f64],
    steps: usize,
    coupling: Option<&[f64]>,
    cfg: &SmootherConfig,
    tally: &mut LevelTally,
) -> Result<Vec<f64>, OptimError> {
    gd_smooth_at(obj, theta, 0, steps, coupling, cfg, tally)
}

/// Outcome of one backtracking search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    /// Accepted step, or 0 when no trial satisfied the decrease condition.
    pub alpha: f64,
    /// Raw (uncoupled) loss at the accepted point, when a step was accepted.
    pub accepted_raw_loss: Option<f64>,
    /// Surrogate loss at the accepted point, when a step was accepted.
    pub accepted_surrogate_loss: Option<f64>,
    /// Number of surrogate loss evaluations spent.
    pub trials: usize,
}

/// Backtracking line search along `direction` from `theta`, on the coupled
/// surrogate. Tries `alpha_init * shrink^k` for `k < max_steps` and returns
/// the first step satisfying sufficient decrease, or step 0 if none does.
///
/// `base` is the raw `(loss, gradient)` at `theta` when already available;
/// otherwise it is evaluated here (and counted).
pub fn line_search<O: Objective>(
    obj: &O,
    theta: &[f64],
    direction: &[f64],
    coupling: Option<&[f64]>,
    base: Option<(f64, &[f64])>,
    cfg: &LineSearchConfig,
    tally: &mut LevelTally,
) -> LineSearchOutcome {
    assert_eq!(direction.len(), theta.len(), "direction length mismatch");
    let owned;
    let (raw0, raw_grad0) = match base {
        Some((l, g)) => (l, g),
        None => {
            tally.grad_evals += 1;
            owned = obj.loss_grad(theta);
            (owned.0, owned.1.as_slice())
        }
    };
    let psi0 = surrogate_loss(raw0, coupling, theta);
    let grad0 = surrogate_grad(raw_grad0, coupling);
    let slope = dot(&grad0, direction);

    let mut alpha = cfg.alpha_init;
    let mut trial = theta.to_vec();
    for k in 0..cfg.max_steps {
        trial.copy_from_slice(theta);
        axpy(alpha, direction, &mut trial);
        tally.loss_evals += 1;
        let raw = obj.loss(&trial);
        let psi = surrogate_loss(raw, coupling, &trial);
        if psi <= psi0 + cfg.sufficient_decrease * alpha * slope {
            if let Some(c2) = cfg.curvature {
                tally.grad_evals += 1;
                let (_, raw_grad_trial) = obj.loss_grad(&trial);
                let slope_trial = dot(&surrogate_grad(&raw_grad_trial, coupling), direction);
                if slope_trial < c2 * slope {
                    alpha *= cfg.shrink;
                    continue;
                }
            }
            return LineSearchOutcome {
                alpha,
                accepted_raw_loss: Some(raw),
                accepted_surrogate_loss: Some(psi),
                trials: k + 1,
            };
        }
        alpha *= cfg.shrink;
    }
    LineSearchOutcome {
        alpha: 0.0,
        accepted_raw_loss: None,
        accepted_surrogate_loss: None,
        trials: cfg.max_steps,
    }
}

/// One V-cycle on `problem` starting from the finest-level iterate.
/// Returns the updated parameters and per-level diagnostics.
pub fn mgopt_vcycle<P: MultilevelProblem>(
    problem: &P,
    theta_fine: Vec<f64>,
    cfg: &CycleConfig,
) -> Result<(Vec<f64>, CycleDiagnostics), OptimError> {
    assert_eq!(
        cfg.schedule.len(),
        problem.num_levels(),
        "schedule must have one entry per level"
    );
    let mut diag = CycleDiagnostics {
        levels: vec![LevelTally::default(); problem.num_levels()],
        transitions: Vec::new(),
    };
    let theta = vcycle_level(problem, problem.finest(), theta_fine, None, cfg, &mut diag)?;
    Ok((theta, diag))
}

fn vcycle_level<P: MultilevelProblem>(
    problem: &P,
    level: usize,
    mut theta: Vec<f64>,
    handed_down: Option<Vec<f64>>,
    cfg: &CycleConfig,
    diag: &mut CycleDiagnostics,
) -> Result<Vec<f64>, OptimError> {
    debug_assert_eq!(theta.len(), problem.dim(level));
    let objective = LevelObjective { problem, level };
    let schedule = cfg.schedule[level];

    // Coupling term: zero (represented as None) at the finest level,
    // otherwise the defect between this level's gradient and the restricted
    // fine gradient, both at the entry iterate. The evaluation made here is
    // reused by the first smoothing step below.
    let (coupling, preloaded): (Option<Vec<f64>>, Option<PreEvaluated>) = match handed_down {
        None => (None, None),
        Some(restricted_fine_grad) => {
            diag.levels[level].grad_evals += 1;
            let (raw0, grad0) = objective.loss_grad(&theta);
            check_finite(raw0, &grad0, || {
                format!("coupling-term evaluation at level {level}")
            })?;
            diag.levels[level].entry_loss = Some(raw0);
            let coupling: Vec<f64> = grad0
                .iter()
                .zip(&restricted_fine_grad)
                .map(|(g, r)| g - r)
                .collect();
            if cfg.record_transitions {
                diag.transitions.push(TransitionRecord {
                    child_level: level,
                    child_theta: theta.clone(),
                    coupling: coupling.clone(),
                    restricted_fine_grad,
                });
            }
            (Some(coupling), Some((raw0, grad0)))
        }
    };

    if level == 0 {
        // Coarsest level: smoothing only.
        gd_steps(
            &objective,
            &mut theta,
            schedule.pre_smooth,
            coupling.as_deref(),
            schedule.learning_rate,
            schedule.momentum,
            level,
            &mut diag.levels[level],
            preloaded,
        )?;
        return Ok(theta);
    }

    // Pre-smoothing.
    gd_steps(
        &objective,
        &mut theta,
        schedule.pre_smooth,
        coupling.as_deref(),
        schedule.learning_rate,
        schedule.momentum,
        level,
        &mut diag.levels[level],
        preloaded,
    )?;

    // Gradient at the post-presmoothing iterate. It feeds the child's
    // coupling term and doubles as the line-search slope evaluation.
    diag.levels[level].grad_evals += 1;
    let (raw_nu, grad_nu) = objective.loss_grad(&theta);
    check_finite(raw_nu, &grad_nu, || {
        format!("post-presmoothing evaluation at level {level}")
    })?;
    if diag.levels[level].entry_loss.is_none() {
        diag.levels[level].entry_loss = Some(raw_nu);
    }

    // Restrict weights and gradient; recurse.
    let child_theta0 = problem.restrict(level, &theta);
    let restricted_grad = problem.restrict(level, &grad_nu);
    let child_star = vcycle_level(
        problem,
        level - 1,
        child_theta0.clone(),
        Some(restricted_grad),
        cfg,
        diag,
    )?;

    // Correction from the coarse change, searched along the surrogate.
    let child_change: Vec<f64> = child_star
        .iter()
        .zip(&child_theta0)
        .map(|(a, b)| a - b)
        .collect();
    let correction = problem.prolong(level, &child_change);

    let objective_before = surrogate_loss(raw_nu, coupling.as_deref(), &theta);
    let (alpha, delta_loss) = if cfg.line_search.enabled {
        let outcome = line_search(
            &objective,
            &theta,
            &correction,
            coupling.as_deref(),
            Some((raw_nu, &grad_nu)),
            &cfg.line_search,
            &mut diag.levels[level],
        );
        let delta = outcome
            .accepted_surrogate_loss
            .map_or(0.0, |after| after - objective_before);
        (outcome.alpha, delta)
    } else {
        // Fixed full step; still record the objective change it caused.
        let mut trial = theta.clone();
        axpy(1.0, &correction, &mut trial);
        diag.levels[level].loss_evals += 1;
        let after_raw = objective.loss(&trial);
        let after = surrogate_loss(after_raw, coupling.as_deref(), &trial);
        (1.0, after - objective_before)
    };
    if alpha != 0.0 {
        axpy(alpha, &correction, &mut theta);
    }
    diag.levels[level].alpha = Some(alpha);
    diag.levels[level].delta_loss = Some(delta_loss);

    // Post-smoothing.
    gd_steps(
        &objective,
        &mut theta,
        schedule.post_smooth,
        coupling.as_deref(),
        schedule.learning_rate,
        schedule.momentum,
        level,
        &mut diag.levels[level],
        None,
    )?;

    Ok(theta)
}

/// Plain SGD: one gradient-descent step per mini-batch. `make_objective`
/// yields the objective bound to the given cycle's mini-batch; `on_cycle` is
/// called with the parameters after each step. Returns the final parameters
/// and the number of gradient evaluations.
pub fn sgd_run<O, F, C>(
    theta0: Vec<f64>,
    cycles: usize,
    cfg: &SmootherConfig,
    mut make_objective: F,
    mut on_cycle: C,
) -> Result<(Vec<f64>, u64), OptimError>
where
    O: Objective,
    F: FnMut(usize) -> O,
    C: FnMut(usize, &[f64]),
{
    let mut theta = theta0;
    let mut tally = LevelTally::default();
    for cycle in 0..cycles {
        let objective = make_objective(cycle);
        gd_steps(
            &objective,
            &mut theta,
            1,
            None,
            cfg.learning_rate,
            cfg.momentum,
            0,
            &mut tally,
            None,
        )?;
        on_cycle(cycle, &theta);
    }
    Ok((theta, tally.grad_evals))
}

/// One network's loss on one owned mini-batch as an [`Objective`].
pub struct BatchObjective {
    pub spec: NetSpec,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
    pub lambda: f64,
}

impl BatchObjective {
    pub fn new(spec: NetSpec, batch: crate::data::MiniBatch, lambda: f64) -> Self {
        BatchObjective {
            spec,
            inputs: batch.inputs,
            labels: batch.labels,
            lambda,
        }
    }
}

impl Objective for BatchObjective {
    fn dim(&self) -> usize {
        self.spec.param_len()
    }

    fn loss(&self, theta: &[f64]) -> f64 {
        network::batch_loss(&self.spec, theta, &self.inputs, &self.labels, self.lambda)
    }

    fn loss_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        network::loss_and_grad(&self.spec, theta, &self.inputs, &self.labels, self.lambda)
    }
}

/// The network hierarchy on one mini-batch as a [`MultilevelProblem`].
pub struct HierarchyProblem<'a> {
    pub hierarchy: &'a Hierarchy,
    pub inputs: &'a [f64],
    pub labels: &'a [usize],
    pub lambda: f64,
}

impl HierarchyProblem<'_> {
    fn spec(&self, level: usize) -> NetSpec {
        self.hierarchy.net_spec(level)
    }
}

impl MultilevelProblem for HierarchyProblem<'_> {
    fn num_levels(&self) -> usize {
        self.hierarchy.num_levels()
    }

    fn dim(&self, level: usize) -> usize {
        self.hierarchy.param_len(level)
    }

    fn loss(&self, level: usize, theta: &[f64]) -> f64 {
        network::batch_loss(
            &self.spec(level),
            theta,
            self.inputs,
            self.labels,
            self.lambda,
        )
    }

    fn loss_grad(&self, level: usize, theta: &[f64]) -> (f64, Vec<f64>) {
        network::loss_and_grad(
            &self.spec(level),
            theta,
            self.inputs,
            self.labels,
            self.lambda,
        )
    }

    fn restrict(&self, fine_level: usize, v: &[f64]) -> Vec<f64> {
        self.hierarchy.restrict(fine_level, v)
    }

    fn prolong(&self, fine_level: usize, v: &[f64]) -> Vec<f64> {
        self.hierarchy.prolong(fine_level, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;

    /// Quadratic stub objective `loss(theta) = 0.5 * ||theta - target||^2`.
    struct Quadratic {
        target: Vec<f64>,
    }

    impl Quadratic {
        fn origin(dim: usize) -> Self {
            Quadratic {
                target: vec![0.0; dim],
            }
        }
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.target.len()
        }

        fn loss(&self, theta: &[f64]) -> f64 {
            0.5 * theta
                .iter()
                .zip(&self.target)
                .map(|(t, c)| (t - c) * (t - c))
                .sum::<f64>()
        }

        fn loss_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
            let grad = theta.iter().zip(&self.target).map(|(t, c)| t - c).collect();
            (self.loss(theta), grad)
        }
    }

    /// Two-level quadratic problem with the same copy/interpolate transfer
    /// scheme as the network hierarchy, on plain vectors.
    struct TwoLevelQuadratic {
        fine: Quadratic,
        coarse: Quadratic,
    }

    impl TwoLevelQuadratic {
        fn new(fine_dim: usize, seed: u64) -> Self {
            let mut rng = SeededRng::new(seed);
            let fine_target = (0..fine_dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
            let coarse_target = (0..fine_dim / 2)
                .map(|_| rng.uniform_in(-1.0, 1.0))
                .collect();
            TwoLevelQuadratic {
                fine: Quadratic {
                    target: fine_target,
                },
                coarse: Quadratic {
                    target: coarse_target,
                },
            }
        }
    }

    impl MultilevelProblem for TwoLevelQuadratic {
        fn num_levels(&self) -> usize {
            2
        }

        fn dim(&self, level: usize) -> usize {
            if level == 1 {
                self.fine.dim()
            } else {
                self.coarse.dim()
            }
        }

        fn loss(&self, level: usize, theta: &[f64]) -> f64 {
            if level == 1 {
                self.fine.loss(theta)
            } else {
                self.coarse.loss(theta)
            }
        }

        fn loss_grad(&self, level: usize, theta: &[f64]) -> (f64, Vec<f64>) {
            if level == 1 {
                self.fine.loss_grad(theta)
            } else {
                self.coarse.loss_grad(theta)
            }
        }

        fn restrict(&self, _fine_level: usize, v: &[f64]) -> Vec<f64> {
            v.iter().step_by(2).copied().collect()
        }

        fn prolong(&self, _fine_level: usize, v: &[f64]) -> Vec<f64> {
            let mut out = Vec::with_capacity(v.len() * 2);
            for i in 0..v.len() {
                out.push(v[i]);
                if i + 1 < v.len() {
                    out.push(0.5 * (v[i] + v[i + 1]));
                } else {
                    out.push(v[i]);
                }
            }
            out
        }
    }

    fn default_two_level_config() -> CycleConfig {
        CycleConfig {
            schedule: vec![
                LevelSchedule {
                    pre_smooth: 2,
                    post_smooth: 0,
                    learning_rate: 0.1,
                    momentum: 0.0,
                },
                LevelSchedule {
                    pre_smooth: 1,
                    post_smooth: 1,
                    learning_rate: 0.1,
                    momentum: 0.0,
                },
            ],
            line_search: LineSearchConfig::default(),
            record_transitions: false,
        }
    }

    #[test]
    fn modified_gradient_without_coupling_is_plain_gradient() {
        let obj = Quadratic::origin(3);
        let theta = [1.0, -2.0, 0.5];
        let g = modified_gradient(&obj, &theta, None);
        assert_eq!(g, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn modified_gradient_plus_coupling_recovers_raw_gradient() {
        let obj = Quadratic::origin(3);
        let theta = [1.0, -2.0, 0.5];
        let v = [0.3, 0.7, -0.2];
        let g = modified_gradient(&obj, &theta, Some(&v));
        let (_, raw) = obj.loss_grad(&theta);
        for i in 0..3 {
            // the modified gradient is exactly the elementwise difference
            assert_eq!(g[i], raw[i] - v[i]);
        }
    }

    #[test]
    fn gd_smooth_zero_steps_is_identity() {
        let obj = Quadratic::origin(4);
        let theta = [1.0, 2.0, 3.0, 4.0];
        let mut tally = LevelTally::default();
        let out = gd_smooth(
            &obj,
            &theta,
            0,
            None,
            &SmootherConfig::default(),
            &mut tally,
        )
        .unwrap();
        assert_eq!(out, theta.to_vec());
        assert_eq!(tally.grad_evals, 0);
    }

    #[test]
    fn gd_smooth_single_step_on_quadratic() {
        // loss = 0.5 theta^2, lr 0.1, theta 1 -> 0.9
        let obj = Quadratic::origin(1);
        let mut tally = LevelTally::default();
        let out = gd_smooth(
            &obj,
            &[1.0],
            1,
            None,
            &SmootherConfig::default(),
            &mut tally,
        )
        .unwrap();
        assert_eq!(out, vec![0.9]);
        assert_eq!(tally.grad_evals, 1);
    }

    #[test]
    fn gd_smooth_with_coupling_equal_to_gradient_is_stationary() {
        let obj = Quadratic::origin(3);
        let theta = [0.4, -1.5, 2.0];
        let (_, grad) = obj.loss_grad(&theta);
        let mut tally = LevelTally::default();
        let out = gd_smooth(
            &obj,
            &theta,
            1,
            Some(&grad),
            &SmootherConfig::default(),
            &mut tally,
        )
        .unwrap();
        assert_eq!(out, theta.to_vec());
    }

    #[test]
    fn gd_smooth_detects_divergence() {
        struct Explodes;
        impl Objective for Explodes {
            fn dim(&self) -> usize {
                1
            }
            fn loss(&self, _: &[f64]) -> f64 {
                f64::INFINITY
            }
            fn loss_grad(&self, _: &[f64]) -> (f64, Vec<f64>) {
                (f64::INFINITY, vec![0.0])
            }
        }
        let mut tally = LevelTally::default();
        let err = gd_smooth(
            &Explodes,
            &[1.0],
            1,
            None,
            &SmootherConfig::default(),
            &mut tally,
        );
        assert!(matches!(
            err,
            Err(OptimError::Diverged { what: "loss", .. })
        ));
    }

    #[test]
    fn line_search_accepts_full_step_on_quadratic() {
        // psi(theta)=0.5*theta^2 wait: Quadratic::origin gives 0.5 theta^2;
        // spec example uses psi = theta^2, same acceptance outcome:
        // psi(0) = 0 <= psi(1) + c1 * slope.
        let obj = Quadratic::origin(1);
        let mut tally = LevelTally::default();
        let out = line_search(
            &obj,
            &[1.0],
            &[-1.0],
            None,
            None,
            &LineSearchConfig::default(),
            &mut tally,
        );
        assert_eq!(out.alpha, 1.0);
        assert_eq!(out.trials, 1);
        assert_eq!(tally.loss_evals, 1);
        assert_eq!(tally.grad_evals, 1); // base evaluation was not supplied
    }

    #[test]
    fn line_search_rejects_ascent_direction() {
        let obj = Quadratic::origin(1);
        let (l, g) = obj.loss_grad(&[1.0]);
        let ascent = vec![g[0]]; // +gradient: uphill
        let mut tally = LevelTally::default();
        let out = line_search(
            &obj,
            &[1.0],
            &ascent,
            None,
            Some((l, &g)),
            &LineSearchConfig::default(),
            &mut tally,
        );
        assert_eq!(out.alpha, 0.0);
        assert_eq!(out.trials, 10);
        assert_eq!(tally.loss_evals, 10);
    }

    #[test]
    fn curvature_flag_rejects_short_steps() {
        // on 0.5*theta^2 from theta=1 along c=-1, the slope at theta+alpha*c
        // is alpha-1; the curvature condition slope_trial >= c2*slope needs
        // alpha >= 1-c2
        let obj = Quadratic::origin(1);
        let mut cfg = LineSearchConfig {
            curvature: Some(0.5),
            ..LineSearchConfig::default()
        };
        let mut tally = LevelTally::default();
        let out = line_search(&obj, &[1.0], &[-1.0], None, None, &cfg, &mut tally);
        assert_eq!(out.alpha, 1.0); // slope at 0 is 0 >= -0.5

        // starting below 1 - c2 = 0.5, every shrunken trial fails curvature
        cfg.alpha_init = 0.25;
        let mut tally = LevelTally::default();
        let out = line_search(&obj, &[1.0], &[-1.0], None, None, &cfg, &mut tally);
        assert_eq!(out.alpha, 0.0);
        // each curvature check costs one gradient evaluation
        assert_eq!(tally.grad_evals, 1 + cfg.max_steps as u64);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        // lr 0.1, momentum 0.5 on 0.5*theta^2 from theta=1:
        // step 1: vel = 1.0,  theta = 0.9
        // step 2: vel = 0.5*1.0 + 0.9 = 1.4, theta = 0.9 - 0.14 = 0.76
        let obj = Quadratic::origin(1);
        let cfg = SmootherConfig {
            learning_rate: 0.1,
            momentum: 0.5,
        };
        let mut tally = LevelTally::default();
        let out = gd_smooth(&obj, &[1.0], 2, None, &cfg, &mut tally).unwrap();
        assert!((out[0] - 0.76).abs() < 1e-15);
    }

    #[test]
    fn line_search_zero_direction_accepts_immediately() {
        let obj = Quadratic::origin(2);
        let theta = [1.0, -1.0];
        let (l, g) = obj.loss_grad(&theta);
        let mut tally = LevelTally::default();
        let out = line_search(
            &obj,
            &theta,
            &[0.0, 0.0],
            None,
            Some((l, &g)),
            &LineSearchConfig::default(),
            &mut tally,
        );
        assert_eq!(out.alpha, 1.0);
        assert_eq!(out.trials, 1);
    }

    #[test]
    fn single_level_cycle_is_one_sgd_step_bitwise() {
        struct OneLevel(Quadratic);
        impl MultilevelProblem for OneLevel {
            fn num_levels(&self) -> usize {
                1
            }
            fn dim(&self, _: usize) -> usize {
                self.0.dim()
            }
            fn loss(&self, _: usize, theta: &[f64]) -> f64 {
                self.0.loss(theta)
            }
            fn loss_grad(&self, _: usize, theta: &[f64]) -> (f64, Vec<f64>) {
                self.0.loss_grad(theta)
            }
            fn restrict(&self, _: usize, _: &[f64]) -> Vec<f64> {
                unreachable!()
            }
            fn prolong(&self, _: usize, _: &[f64]) -> Vec<f64> {
                unreachable!()
            }
        }

        let problem = OneLevel(Quadratic {
            target: vec![0.3, -0.7, 1.1],
        });
        let cfg = CycleConfig {
            schedule: vec![LevelSchedule {
                pre_smooth: 1,
                post_smooth: 0,
                learning_rate: 0.1,
                momentum: 0.0,
            }],
            line_search: LineSearchConfig::default(),
            record_transitions: false,
        };
        let theta0 = vec![1.0, 1.0, 1.0];

        let (via_cycle, diag) = mgopt_vcycle(&problem, theta0.clone(), &cfg).unwrap();
        let mut tally = LevelTally::default();
        let via_gd = gd_smooth(
            &problem.0,
            &theta0,
            1,
            None,
            &SmootherConfig::default(),
            &mut tally,
        )
        .unwrap();
        assert_eq!(via_cycle, via_gd);
        assert_eq!(diag.levels[0].grad_evals, 1);
    }

    #[test]
    fn zero_coarse_work_collapses_to_fine_smoothing() {
        let problem = TwoLevelQuadratic::new(8, 7);
        let mut cfg = default_two_level_config();
        cfg.schedule[0].pre_smooth = 0; // no coarse smoothing: zero correction
        let theta0 = vec![0.5; 8];

        let (via_cycle, diag) = mgopt_vcycle(&problem, theta0.clone(), &cfg).unwrap();

        // correction is zero, so the cycle equals pre + post fine GD steps
        let mut tally = LevelTally::default();
        let fine_only = gd_smooth(
            &problem.fine,
            &theta0,
            2,
            None,
            &SmootherConfig::default(),
            &mut tally,
        )
        .unwrap();
        assert_eq!(via_cycle, fine_only);
        assert_eq!(diag.levels[1].alpha, Some(1.0)); // zero direction accepts alpha_init
        assert_eq!(diag.levels[1].delta_loss, Some(0.0));
    }

    #[test]
    fn coupling_term_gives_first_order_consistency() {
        let problem = TwoLevelQuadratic::new(8, 13);
        let mut cfg = default_two_level_config();
        cfg.record_transitions = true;
        let theta0 = vec![0.2; 8];

        let (_, diag) = mgopt_vcycle(&problem, theta0, &cfg).unwrap();
        assert_eq!(diag.transitions.len(), 1);
        let t = &diag.transitions[0];
        // fresh surrogate gradient at the child entry point equals the
        // restricted fine gradient
        let obj = LevelObjective {
            problem: &problem,
            level: t.child_level,
        };
        let psi_grad = modified_gradient(&obj, &t.child_theta, Some(&t.coupling));
        for (a, b) in psi_grad.iter().zip(&t.restricted_fine_grad) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn vcycle_eval_counts_follow_schedule() {
        let problem = TwoLevelQuadratic::new(8, 21);
        let cfg = default_two_level_config();
        let (_, diag) = mgopt_vcycle(&problem, vec![0.1; 8], &cfg).unwrap();
        // finest level: pre + post + the handoff evaluation
        assert_eq!(diag.levels[1].grad_evals, 1 + 1 + 1);
        // coarsest level: the coupling evaluation is reused by the first
        // smoothing step, so pre_smooth evaluations in total
        assert_eq!(diag.levels[0].grad_evals, 2);
        assert!(diag.levels[1].loss_evals >= 1);
    }

    #[test]
    fn sgd_run_with_zero_learning_rate_keeps_parameters() {
        let theta0 = vec![1.0, -2.0];
        let cfg = SmootherConfig {
            learning_rate: 0.0,
            momentum: 0.0,
        };
        let (theta, gevals) =
            sgd_run(theta0.clone(), 5, &cfg, |_| Quadratic::origin(2), |_, _| {}).unwrap();
        assert_eq!(theta, theta0);
        assert_eq!(gevals, 5);
    }

    #[test]
    fn sgd_run_decreases_loss_on_separable_toy_problem() {
        // full-batch GD on a linearly separable 2-class set: loss decreases
        // monotonically
        use crate::network::NetParams;
        let spec = NetSpec::new(2, 3, 2, 2, 0.1);
        let mut rng = SeededRng::new(3);
        let theta0 = NetParams::xavier(&spec, &mut rng).flatten();
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let x = -1.0 + 0.1 * i as f64 + if i % 2 == 0 { -0.6 } else { 0.6 };
            inputs.extend_from_slice(&[x, 0.5 * x]);
            labels.push(if x > 0.0 { 1 } else { 0 });
        }
        let mut losses = Vec::new();
        let (_, _) = sgd_run(
            theta0,
            40,
            &SmootherConfig::default(),
            |_| BatchObjective {
                spec,
                inputs: inputs.clone(),
                labels: labels.clone(),
                lambda: 0.0,
            },
            |_, theta| {
                losses.push(network::batch_loss(&spec, theta, &inputs, &labels, 0.0));
            },
        )
        .unwrap();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
        }
    }
}
