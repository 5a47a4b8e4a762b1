//! Tuning of the age-compensation weight.
//!
//! The weight trades scheduling regret against information freshness: the
//! tuner scores each candidate by the product of time-averaged regret and
//! time-averaged device age over a batch of simulated runs, reusing the
//! same trajectories for every candidate so the comparison is paired.
//! A coarse log-spaced grid locates the minimum; when the grid brackets a
//! strict interior minimum, a golden-section refinement sharpens it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{generate_trajectory, run_scheduler, Trajectory};
use crate::metrics::cost;
use crate::model::ModelParams;
use crate::rng::subseed;
use crate::sched::{PolicyKind, Scheduler, SteadyAggregate};

/// Smallest positive candidate on the log-spaced grid.
const GRID_FLOOR: f64 = 1e-4;

/// How the weight search is run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSearchConfig {
    /// Slots simulated per replication.
    pub horizon: usize,
    /// Independent trajectories averaged per candidate.
    pub replications: usize,
    /// Upper end of the candidate grid.
    pub beta_max: f64,
    /// Number of log-spaced positive candidates (zero is always added).
    pub grid_points: usize,
    /// Policy the weight is tuned for; must be one of the prediction-based
    /// policies.
    pub policy: PolicyKind,
    /// Seeds the shared trajectories.
    pub seed: u64,
    pub steady_aggregate: SteadyAggregate,
}

impl BetaSearchConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            horizon: 100,
            replications: 20,
            beta_max: 1.0,
            grid_points: 20,
            policy: PolicyKind::FuEnhancedAoi,
            seed,
            steady_aggregate: SteadyAggregate::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        if !(self.beta_max.is_finite() && self.beta_max > GRID_FLOOR) {
            return Err(Error::config(
                "beta_max",
                format!("must be finite and above {GRID_FLOOR}"),
            ));
        }
        if self.grid_points < 2 {
            return Err(Error::config("grid_points", "need at least 2 grid points"));
        }
        match self.policy {
            PolicyKind::FuGenie
            | PolicyKind::FuFeedback
            | PolicyKind::FuLimited
            | PolicyKind::FuBaseline
            | PolicyKind::FuEnhancedAoi => Ok(()),
            other => Err(Error::config(
                "policy",
                format!("cannot tune the age weight for `{other}`"),
            )),
        }
    }
}

/// Paired-sample score of one candidate weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEvaluation {
    pub beta: f64,
    /// Time-averaged slot regret, averaged over replications.
    pub avg_regret: f64,
    /// Time-and-device-averaged age, averaged over replications.
    pub avg_aoi: f64,
    /// `avg_regret * avg_aoi`.
    pub cost: f64,
}

/// Outcome of the weight search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaOptimum {
    pub beta: f64,
    pub evaluation: BetaEvaluation,
    /// True when the grid bracketed a strict interior minimum and the
    /// refinement ran; false means the grid minimum was returned as-is.
    pub unimodal: bool,
}

fn tuning_trajectories(config: &BetaSearchConfig, params: &ModelParams) -> Result<Vec<Trajectory>> {
    (0..config.replications)
        .map(|r| {
            generate_trajectory(
                params,
                config.horizon,
                subseed(config.seed, "beta-search", r as u64),
            )
        })
        .collect()
}

fn evaluate_on(
    config: &BetaSearchConfig,
    params: &ModelParams,
    trajectories: &[Trajectory],
    beta: f64,
) -> Result<BetaEvaluation> {
    let mut regret_sum = 0.0;
    let mut aoi_sum = 0.0;
    for trajectory in trajectories {
        let mut scheduler = Scheduler::new(config.policy, params.clone(), beta)?
            .with_steady_aggregate(config.steady_aggregate);
        let trace = run_scheduler(&mut scheduler, trajectory)?;
        regret_sum += trace.average_regret();
        aoi_sum += trace.average_aoi();
    }
    let n = trajectories.len() as f64;
    let avg_regret = regret_sum / n;
    let avg_aoi = aoi_sum / n;
    Ok(BetaEvaluation {
        beta,
        avg_regret,
        avg_aoi,
        cost: cost(avg_regret, avg_aoi),
    })
}

/// Scores a single candidate weight on freshly generated (but
/// seed-determined) trajectories.
pub fn evaluate_beta(
    config: &BetaSearchConfig,
    params: &ModelParams,
    beta: f64,
) -> Result<BetaEvaluation> {
    config.validate()?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::ContractViolation(format!(
            "age weight must be finite and nonnegative, got {beta}"
        )));
    }
    let trajectories = tuning_trajectories(config, params)?;
    evaluate_on(config, params, &trajectories, beta)
}

fn candidate_grid(config: &BetaSearchConfig) -> Vec<f64> {
    let mut grid = Vec::with_capacity(config.grid_points + 1);
    grid.push(0.0);
    let lo = GRID_FLOOR.ln();
    let hi = config.beta_max.ln();
    for i in 0..config.grid_points {
        let frac = i as f64 / (config.grid_points - 1) as f64;
        grid.push((lo + frac * (hi - lo)).exp());
    }
    grid
}

/// Golden-section minimizer over `[lo, hi]` for a fallible objective.
fn golden_min<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { (x1, f1) } else { (x2, f2) })
}

/// Scores every grid candidate and returns the regret/age trade-off
/// curve, in ascending weight order.
pub fn achievable_region(
    config: &BetaSearchConfig,
    params: &ModelParams,
) -> Result<Vec<BetaEvaluation>> {
    config.validate()?;
    let trajectories = tuning_trajectories(config, params)?;
    candidate_grid(config)
        .into_iter()
        .map(|beta| evaluate_on(config, params, &trajectories, beta))
        .collect()
}

/// Finds the weight minimizing the regret-times-age cost.
///
/// The returned cost never exceeds the best grid candidate's: the
/// refinement result is only kept when it improves on the grid. When the
/// grid shows no strict interior minimum (flat or boundary profile), the
/// grid minimum is returned with `unimodal` unset.
pub fn optimize_beta(config: &BetaSearchConfig, params: &ModelParams) -> Result<BetaOptimum> {
    config.validate()?;
    let trajectories = tuning_trajectories(config, params)?;
    let grid = candidate_grid(config);
    let evals: Vec<BetaEvaluation> = grid
        .iter()
        .map(|&beta| evaluate_on(config, params, &trajectories, beta))
        .collect::<Result<_>>()?;
    let best_idx = evals
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.cost.partial_cmp(&b.cost).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let grid_best = evals[best_idx].clone();
    let bracketed = best_idx > 0
        && best_idx + 1 < evals.len()
        && grid_best.cost < evals[best_idx - 1].cost
        && grid_best.cost < evals[best_idx + 1].cost;
    if !bracketed {
        return Ok(BetaOptimum {
            beta: grid_best.beta,
            evaluation: grid_best,
            unimodal: false,
        });
    }
    let lo = grid[best_idx - 1];
    let hi = grid[best_idx + 1];
    let tol = (hi - lo) * 1e-3;
    let (refined_beta, _) = golden_min(
        |beta| evaluate_on(config, params, &trajectories, beta).map(|e| e.cost),
        lo,
        hi,
        tol,
    )?;
    let refined = evaluate_on(config, params, &trajectories, refined_beta)?;
    let evaluation = if refined.cost <= grid_best.cost {
        refined
    } else {
        grid_best
    };
    Ok(BetaOptimum {
        beta: evaluation.beta,
        evaluation,
        unimodal: true,
    })
}
